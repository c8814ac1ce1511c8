use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use spectraprompt_core::dataset::{
    import_bigearthnet_patch, import_eurosat_patch, list_bigearthnet_patches, list_eurosat_files, DatasetManifest,
    ManifestEntry, PatchFilter, TiffDecoder,
};
use spectraprompt_core::DatasetKind;

pub const MANIFEST_FILE: &str = "manifest.json";

/// BigEarthNet ships its official split and contamination lists under these
/// names; they apply automatically when found in the source root.
pub const DEFAULT_SPLIT: &str = "test.csv";
pub const DEFAULT_EXCLUDES: [&str; 2] = ["patches_with_cloud_and_shadow.csv", "patches_with_seasonal_snow.csv"];

#[derive(Debug, Clone)]
pub struct ImportOptions {
    pub src: PathBuf,
    pub dst: PathBuf,
    pub dataset: DatasetKind,
    pub skip_bad: bool,
    pub split: Option<PathBuf>,
    pub exclude: Vec<PathBuf>,
    pub default_filters: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportSummary {
    pub manifest: PathBuf,
    pub imported: usize,
    pub skipped_bad: usize,
    pub filtered_out: usize,
}

fn patch_name(path: &Path) -> String {
    let name = match path.extension() {
        Some(_) => path.file_stem(),
        None => path.file_name(),
    };
    name.and_then(|n| n.to_str()).unwrap_or_default().to_string()
}

fn filter_for(opts: &ImportOptions) -> Result<PatchFilter> {
    let mut split = opts.split.clone();
    let mut exclude = opts.exclude.clone();
    if opts.default_filters && opts.dataset == DatasetKind::BigEarthNet {
        let candidate = opts.src.join(DEFAULT_SPLIT);
        if split.is_none() && candidate.is_file() {
            tracing::info!("using split list {}", candidate.display());
            split = Some(candidate);
        }
        if opts.exclude.is_empty() {
            for name in DEFAULT_EXCLUDES {
                let p = opts.src.join(name);
                if p.is_file() {
                    tracing::info!("using exclusion list {}", p.display());
                    exclude.push(p);
                }
            }
        }
    }
    Ok(PatchFilter::from_files(split.as_deref(), &exclude)?)
}

pub fn run_import(opts: &ImportOptions) -> Result<ImportSummary> {
    let sources = match opts.dataset {
        DatasetKind::BigEarthNet => list_bigearthnet_patches(&opts.src)?,
        DatasetKind::EuroSat => list_eurosat_files(&opts.src)?,
    };
    let filter = filter_for(opts)?;
    let patches_dir = opts.dst.join("patches");
    std::fs::create_dir_all(&patches_dir).with_context(|| format!("creating {}", patches_dir.display()))?;

    let mut entries = Vec::new();
    let (mut skipped_bad, mut filtered_out) = (0, 0);
    for source in &sources {
        let name = patch_name(source);
        if !filter.allows(&name) {
            filtered_out += 1;
            continue;
        }
        let bundle = match opts.dataset {
            DatasetKind::BigEarthNet => import_bigearthnet_patch(source, &TiffDecoder),
            DatasetKind::EuroSat => import_eurosat_patch(source),
        };
        let bundle = match bundle {
            Ok(b) => b,
            Err(e) if opts.skip_bad => {
                tracing::warn!("skipping patch {name}: {e}");
                skipped_bad += 1;
                continue;
            }
            Err(e) => bail!("patch {name}: {e}"),
        };
        let rel = format!("patches/{}", bundle.id);
        bundle
            .write(&opts.dst.join(&rel))
            .with_context(|| format!("writing bundle for patch {name}"))?;
        entries.push(ManifestEntry { id: bundle.id, path: rel });
    }
    if entries.is_empty() {
        bail!("no patches imported from {}", opts.src.display());
    }
    let imported = entries.len();
    let manifest = DatasetManifest::new(opts.dataset, entries, &opts.dst)?;
    let path = opts.dst.join(MANIFEST_FILE);
    manifest.save(&path)?;
    Ok(ImportSummary {
        manifest: path,
        imported,
        skipped_bad,
        filtered_out,
    })
}
