use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use spectraprompt_core::metrics::Averaging;
use spectraprompt_core::{DatasetKind, ProductId};

use crate::config::{set_path, BackendKind};
use crate::report::RunInput;

#[derive(Debug, Parser)]
#[command(name = "spectraprompt", version, about = "Zero-shot multi-spectral land-cover classification with multimodal models")]
pub struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a vendor dataset layout into patch bundles and a manifest.
    Import(ImportArgs),
    /// Write the pseudo-image PNGs for each patch.
    Render(RunArgs),
    /// Write prompt text and attachments per patch without calling a backend.
    Prompt(RunArgs),
    /// Query the backend for each patch and score the answers.
    Eval(RunArgs),
    /// Compare metrics files as Markdown and CSV tables.
    Report(ReportArgs),
    /// Generate a synthetic dataset in a vendor layout, for offline runs.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub dst: PathBuf,
    /// bigearthnet or eurosat
    #[arg(long)]
    pub dataset: DatasetKind,
    /// Skip patches that fail to import instead of aborting.
    #[arg(long)]
    pub skip_bad: bool,
    /// Keep only patches named in this list (first CSV column).
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Drop patches named in these lists.
    #[arg(long)]
    pub exclude: Vec<PathBuf>,
    /// Do not pick up the standard split and exclusion lists from the source root.
    #[arg(long)]
    pub no_default_filters: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AveragingArg {
    Sample,
    Micro,
    Macro,
    All,
}

impl AveragingArg {
    pub fn modes(self) -> Vec<Averaging> {
        match self {
            AveragingArg::Sample => vec![Averaging::Sample],
            AveragingArg::Micro => vec![Averaging::Micro],
            AveragingArg::Macro => vec![Averaging::Macro],
            AveragingArg::All => Averaging::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics files, optionally as `label=path`.
    #[arg(required = true)]
    pub runs: Vec<RunInput>,
    /// Label of the run the delta column compares against (default: the first).
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long, value_enum, default_value = "all")]
    pub averaging: AveragingArg,
    /// Write Markdown here instead of stdout.
    #[arg(long)]
    pub md: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub dataset: DatasetKind,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Flags shared by render, prompt and eval. Every flag is optional so the
/// config file and environment can supply it.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// bigearthnet43, bigearthnet19 or eurosat10
    #[arg(long)]
    pub task: Option<String>,
    /// rgb or multispectral
    #[arg(long)]
    pub modality: Option<String>,
    /// Comma-separated product ids, e.g. TrueColor,NDVI
    #[arg(long, value_delimiter = ',')]
    pub products: Option<Vec<ProductId>>,
    /// minmax or percentile:LO:HI
    #[arg(long)]
    pub normalization: Option<String>,
    /// Directory of edited prompt templates.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Evaluate a seeded random subset of this many patches.
    #[arg(long)]
    pub subset: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// `patch id -> answer` JSON for the mock-fixture backend.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub retries: Option<u32>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Bypass the response cache.
    #[arg(long)]
    pub no_cache: bool,
}

impl RunArgs {
    /// The CLI layer of the config.
    pub fn layer(&self) -> Value {
        let mut v = json!({});
        let s = |x: &Option<String>| x.clone().map(Value::from);
        let p = |x: &Option<PathBuf>| x.as_ref().map(|p| Value::from(p.display().to_string()));
        set_path(&mut v, "manifest", p(&self.manifest));
        set_path(&mut v, "task", s(&self.task));
        set_path(&mut v, "modality", s(&self.modality));
        set_path(&mut v, "products", self.products.as_ref().map(|ps| json!(ps)));
        set_path(&mut v, "normalization", s(&self.normalization));
        set_path(&mut v, "templates_dir", p(&self.templates));
        set_path(&mut v, "subset.n", self.subset.map(Value::from));
        set_path(&mut v, "subset.seed", self.seed.map(Value::from));
        set_path(&mut v, "output_dir", p(&self.out));
        set_path(&mut v, "run_label", s(&self.label));
        set_path(&mut v, "backend.kind", self.backend.map(|k| json!(k)));
        set_path(&mut v, "backend.endpoint_url", s(&self.endpoint));
        set_path(&mut v, "backend.model_name", s(&self.model));
        set_path(&mut v, "backend.fixture", p(&self.fixture));
        set_path(&mut v, "backend.max_in_flight", self.max_in_flight.map(Value::from));
        set_path(&mut v, "backend.retries", self.retries.map(Value::from));
        set_path(&mut v, "backend.cache_dir", p(&self.cache_dir));
        if self.no_cache {
            set_path(&mut v, "backend.use_cache", Some(Value::Bool(false)));
        }
        v
    }
}
