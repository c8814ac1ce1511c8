//! Rendering and prompt dry-runs, plus the per-patch steps shared with `eval`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use spectraprompt_core::dataset::{DatasetManifest, PatchBundle};
use spectraprompt_core::png::encode_image;
use spectraprompt_core::prompt::TemplateSet;
use spectraprompt_core::{render_products, Prompt, PseudoImage};

use crate::config::RunConfig;

/// The manifest named by the config, narrowed to the configured subset.
pub fn selected_manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let manifest = DatasetManifest::load(&cfg.manifest)?;
    if manifest.dataset != cfg.task.dataset() {
        bail!(
            "task {} needs a {} manifest, {} is {}",
            cfg.task,
            cfg.task.dataset(),
            cfg.manifest.display(),
            manifest.dataset
        );
    }
    Ok(match cfg.subset {
        Some(s) => manifest.sample_subset(s.n, s.seed)?,
        None => manifest,
    })
}

pub fn template_set(cfg: &RunConfig) -> Result<TemplateSet> {
    Ok(match &cfg.templates_dir {
        Some(dir) => TemplateSet::from_dir(dir)?,
        None => TemplateSet::builtin(),
    })
}

pub fn render_bundle(bundle: &PatchBundle, cfg: &RunConfig) -> Result<Vec<PseudoImage>> {
    let patch = bundle.to_patch()?;
    Ok(render_products(&patch, &cfg.products, cfg.normalization)?)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Writes `<out>/<patch_id>/<product_id>.png` for every selected patch.
pub fn run_render(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let manifest = selected_manifest(cfg)?;
    let mut written = Vec::new();
    for entry in manifest.patches() {
        let bundle = manifest.load_bundle(entry)?;
        let dir = cfg.output_dir.join(&entry.id);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for img in render_bundle(&bundle, cfg).with_context(|| format!("rendering patch {}", entry.id))? {
            let path = dir.join(format!("{}.png", img.product_id));
            write(&path, &encode_image(&img))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[derive(Serialize)]
struct ImageListing {
    ordinal: usize,
    product_id: String,
    file: String,
    width: usize,
    height: usize,
}

pub fn build_patch_prompt(bundle: &PatchBundle, cfg: &RunConfig, templates: &TemplateSet) -> Result<Prompt> {
    let images = render_bundle(bundle, cfg)?;
    Ok(templates.build(cfg.task, cfg.modality, images)?)
}

/// Dry run: writes `prompt.txt`, the attachments and `images.json` (the
/// attachment order) per patch, without contacting a backend.
pub fn run_prompt(cfg: &RunConfig) -> Result<usize> {
    let manifest = selected_manifest(cfg)?;
    let templates = template_set(cfg)?;
    for entry in manifest.patches() {
        let bundle = manifest.load_bundle(entry)?;
        let prompt = build_patch_prompt(&bundle, cfg, &templates).with_context(|| format!("patch {}", entry.id))?;
        let dir = cfg.output_dir.join(&entry.id);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        write(&dir.join("prompt.txt"), prompt.text.as_bytes())?;
        let mut listing = Vec::new();
        for (i, img) in prompt.attachments.iter().enumerate() {
            let file = format!("{}.png", img.product_id);
            write(&dir.join(&file), &encode_image(img))?;
            listing.push(ImageListing {
                ordinal: i + 1,
                product_id: img.product_id.to_string(),
                file,
                width: img.width,
                height: img.height,
            });
        }
        let mut json = serde_json::to_string_pretty(&listing)?;
        json.push('\n');
        write(&dir.join("images.json"), json.as_bytes())?;
    }
    Ok(manifest.len())
}
