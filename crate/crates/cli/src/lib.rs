//! The `spectraprompt` command line: import, render, prompt, eval and report.

pub mod args;
pub mod config;
pub mod eval;
pub mod import;
pub mod render;
pub mod report;

use std::path::Path;

use anyhow::{Context, Result};
use spectraprompt_core::dataset::synthetic::{synthetic_set, write_bigearthnet_source, write_eurosat_source};
use spectraprompt_core::DatasetKind;

use args::{Cli, Command, RunArgs, SynthArgs};
use config::{env_layer, read_config_file, resolve, RunConfig, API_KEY_ENV};

/// Resolves the run config from flags, the optional config file and the
/// process environment.
pub fn resolve_run_config(args: &RunArgs) -> Result<RunConfig> {
    let env = env_layer(|k| std::env::var(k).ok())?;
    let file = args.config.as_deref().map(read_config_file).transpose()?;
    resolve(env, file, args.layer())
}

pub fn run_synth(args: &SynthArgs) -> Result<usize> {
    let prefix = match args.dataset {
        DatasetKind::BigEarthNet => "S2_synthetic_",
        DatasetKind::EuroSat => "synthetic_",
    };
    let bundles = synthetic_set(prefix, args.dataset, args.count, args.seed);
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for b in &bundles {
        match args.dataset {
            DatasetKind::BigEarthNet => write_bigearthnet_source(&args.out, b)?,
            DatasetKind::EuroSat => write_eurosat_source(&args.out, b)?,
        };
    }
    Ok(bundles.len())
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Import(a) => {
            let summary = import::run_import(&import::ImportOptions {
                src: a.src,
                dst: a.dst,
                dataset: a.dataset,
                skip_bad: a.skip_bad,
                split: a.split,
                exclude: a.exclude,
                default_filters: !a.no_default_filters,
            })?;
            println!(
                "imported {} patches into {} ({} skipped as bad, {} filtered out)",
                summary.imported,
                summary.manifest.display(),
                summary.skipped_bad,
                summary.filtered_out
            );
        }
        Command::Render(a) => {
            let cfg = resolve_run_config(&a)?;
            let files = render::run_render(&cfg)?;
            println!("wrote {} images under {}", files.len(), cfg.output_dir.display());
        }
        Command::Prompt(a) => {
            let cfg = resolve_run_config(&a)?;
            let n = render::run_prompt(&cfg)?;
            println!("wrote prompts for {n} patches under {}", cfg.output_dir.display());
        }
        Command::Eval(a) => {
            let cfg = resolve_run_config(&a)?;
            let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
            let s = eval::run_eval(&cfg, key)?;
            let m = &s.metrics;
            println!(
                "{}: {} = {:.4} over {} records ({} parse failures, {} backend errors; {} backend calls, {} cache hits)",
                m.run_label,
                m.headline.metric,
                m.headline.value,
                m.metrics.n_records,
                m.metrics.n_parse_failures,
                m.metrics.n_backend_errors,
                m.backend_calls,
                m.cache_hits
            );
            println!("records: {}\nmetrics: {}", s.records_path.display(), s.metrics_path.display());
        }
        Command::Report(a) => {
            let runs = report::load_runs(&a.runs)?;
            let table = report::build_table(&runs, &a.averaging.modes(), a.baseline.as_deref())?;
            write_or_print(a.md.as_deref(), &table.markdown())?;
            if let Some(p) = &a.csv {
                write_or_print(Some(p), &table.csv()?)?;
            }
        }
        Command::Synth(a) => {
            let n = run_synth(&a)?;
            println!("wrote {n} synthetic {} patches under {}", a.dataset, a.out.display());
        }
    }
    Ok(())
}
