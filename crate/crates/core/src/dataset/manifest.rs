use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bundle::{label_task, PatchBundle};
use super::rng::SplitMix64;
use super::{io_err, IngestError};
use crate::raster::DatasetKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Bundle directory, relative to the manifest file.
    pub path: String,
}

/// An immutable, id-sorted list of patch bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset: DatasetKind,
    pub class_names: Vec<String>,
    pub multi_label: bool,
    patches: Vec<ManifestEntry>,
    #[serde(skip)]
    root: PathBuf,
}

impl DatasetManifest {
    pub fn new(dataset: DatasetKind, mut patches: Vec<ManifestEntry>, root: impl Into<PathBuf>) -> Result<Self, IngestError> {
        patches.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = patches.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(IngestError::Manifest(format!("duplicate patch id {}", w[0].id)));
        }
        let task = label_task(dataset);
        Ok(Self {
            dataset,
            class_names: task.class_names().into_iter().map(String::from).collect(),
            multi_label: task.multi_label(),
            patches,
            root: root.into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let raw: DatasetManifest = serde_json::from_str(&text).map_err(|e| IngestError::Metadata {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let manifest = Self::new(raw.dataset, raw.patches, root)?;
        if manifest.class_names != raw.class_names || manifest.multi_label != raw.multi_label {
            return Err(IngestError::Manifest(format!(
                "{}: class list does not match the {} nomenclature",
                path.display(),
                manifest.dataset
            )));
        }
        for entry in &manifest.patches {
            let dir = manifest.bundle_dir(entry);
            if !dir.is_dir() {
                return Err(IngestError::Manifest(format!(
                    "patch {} listed at {} does not exist",
                    entry.id,
                    dir.display()
                )));
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let mut json = serde_json::to_string_pretty(self).expect("manifest serializes");
        json.push('\n');
        std::fs::write(path, json).map_err(io_err(path))
    }

    pub fn patches(&self) -> &[ManifestEntry] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn bundle_dir(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn load_bundle(&self, entry: &ManifestEntry) -> Result<PatchBundle, IngestError> {
        let bundle = PatchBundle::read(&self.bundle_dir(entry))?;
        if bundle.id != entry.id || bundle.dataset != self.dataset {
            return Err(IngestError::Manifest(format!(
                "bundle at {} is {} ({}), manifest expects {} ({})",
                entry.path, bundle.id, bundle.dataset, entry.id, self.dataset
            )));
        }
        Ok(bundle)
    }

    /// Seeded shuffle, take the first `n`. The result is id-sorted like any manifest.
    pub fn sample_subset(&self, n: usize, seed: u64) -> Result<Self, IngestError> {
        if n == 0 || n > self.patches.len() {
            return Err(IngestError::SubsetSize {
                n,
                available: self.patches.len(),
            });
        }
        let mut shuffled = self.patches.clone();
        SplitMix64::new(seed).shuffle(&mut shuffled);
        shuffled.truncate(n);
        Self::new(self.dataset, shuffled, self.root.clone())
    }
}

/// Split and exclusion lists: one patch name per line (first CSV column).
#[derive(Debug, Clone, Default)]
pub struct PatchFilter {
    include: Option<HashSet<String>>,
    exclude: HashSet<String>,
}

fn read_names(path: &Path) -> Result<HashSet<String>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split(',').next())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect())
}

impl PatchFilter {
    pub fn from_files(include: Option<&Path>, exclude: &[PathBuf]) -> Result<Self, IngestError> {
        let include = include.map(read_names).transpose()?;
        let mut excluded = HashSet::new();
        for p in exclude {
            excluded.extend(read_names(p)?);
        }
        Ok(Self {
            include,
            exclude: excluded,
        })
    }

    pub fn allows(&self, id: &str) -> bool {
        self.include.as_ref().is_none_or(|s| s.contains(id)) && !self.exclude.contains(id)
    }
}
