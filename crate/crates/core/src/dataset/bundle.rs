//! On-disk patch bundle: `patch.json` plus one headerless little-endian raw
//! file per band.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, IngestError};
use crate::raster::{BandGrid, BandId, DatasetKind, Patch};
use crate::task::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U16,
    F32,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::U16 => 2,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BandData {
    U16(Vec<u16>),
    F32(Vec<f32>),
}

impl BandData {
    pub fn dtype(&self) -> Dtype {
        match self {
            BandData::U16(_) => Dtype::U16,
            BandData::F32(_) => Dtype::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            BandData::U16(v) => v.len(),
            BandData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            BandData::U16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            BandData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    pub fn from_le_bytes(dtype: Dtype, bytes: &[u8]) -> Self {
        match dtype {
            Dtype::U16 => BandData::U16(
                bytes
                    .chunks_exact(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]))
                    .collect(),
            ),
            Dtype::F32 => BandData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
        }
    }

    /// Values widened to 32-bit reals.
    pub fn to_f32(&self) -> Vec<f32> {
        match self {
            BandData::U16(v) => v.iter().map(|&x| x as f32).collect(),
            BandData::F32(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleBand {
    pub width: usize,
    pub height: usize,
    pub resolution_m: u32,
    pub data: BandData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandEntry {
    pub band_id: BandId,
    pub width: usize,
    pub height: usize,
    pub resolution_m: u32,
    pub dtype: Dtype,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub id: String,
    pub dataset: DatasetKind,
    pub labels: Vec<u32>,
    pub bands: Vec<BandEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchBundle {
    pub id: String,
    pub dataset: DatasetKind,
    pub labels: BTreeSet<u32>,
    pub bands: BTreeMap<BandId, BundleBand>,
}

/// The task whose class list a dataset's stored labels index into.
pub fn label_task(dataset: DatasetKind) -> Task {
    match dataset {
        DatasetKind::BigEarthNet => Task::BigEarthNet43,
        DatasetKind::EuroSat => Task::EuroSat10,
    }
}

pub const METADATA_FILE: &str = "patch.json";

impl PatchBundle {
    /// Checks sizes, resolutions and label range.
    pub fn validate(&self) -> Result<(), IngestError> {
        let n_classes = label_task(self.dataset).n_classes() as u32;
        if let Some(&label) = self.labels.iter().find(|&&l| l == 0 || l > n_classes) {
            return Err(IngestError::LabelOutOfRange {
                patch: self.id.clone(),
                label,
                n_classes,
            });
        }
        for (&band, b) in &self.bands {
            if b.data.len() != b.width * b.height {
                return Err(IngestError::PayloadSize {
                    patch: self.id.clone(),
                    band,
                    expected: b.width * b.height * b.data.dtype().size(),
                    actual: b.data.len() * b.data.dtype().size(),
                });
            }
            if b.resolution_m != band.resolution_m() {
                return Err(IngestError::Resolution {
                    patch: self.id.clone(),
                    band,
                    expected: band.resolution_m(),
                    actual: b.resolution_m,
                });
            }
            let expected = self.dataset.expected_dims(band);
            if (b.width, b.height) != expected {
                return Err(IngestError::BandSize {
                    patch: self.id.clone(),
                    band,
                    expected,
                    actual: (b.width, b.height),
                });
            }
        }
        Ok(())
    }

    pub fn meta(&self) -> BundleMeta {
        BundleMeta {
            id: self.id.clone(),
            dataset: self.dataset,
            labels: self.labels.iter().copied().collect(),
            bands: self
                .bands
                .iter()
                .map(|(&band_id, b)| BandEntry {
                    band_id,
                    width: b.width,
                    height: b.height,
                    resolution_m: b.resolution_m,
                    dtype: b.data.dtype(),
                    file: format!("{band_id}.bin"),
                })
                .collect(),
        }
    }

    /// Writes `patch.json` and the band files into `dir` (created if needed).
    pub fn write(&self, dir: &Path) -> Result<(), IngestError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let meta = self.meta();
        for entry in &meta.bands {
            let path = dir.join(&entry.file);
            std::fs::write(&path, self.bands[&entry.band_id].data.to_le_bytes()).map_err(io_err(&path))?;
        }
        let path = dir.join(METADATA_FILE);
        let mut json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        json.push('\n');
        std::fs::write(&path, json).map_err(io_err(&path))
    }

    pub fn read(dir: &Path) -> Result<Self, IngestError> {
        let path = dir.join(METADATA_FILE);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let meta: BundleMeta = serde_json::from_str(&text).map_err(|e| IngestError::Metadata {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut bands = BTreeMap::new();
        for entry in &meta.bands {
            if bands.contains_key(&entry.band_id) {
                return Err(IngestError::DuplicateBand {
                    patch: meta.id.clone(),
                    band: entry.band_id,
                });
            }
            let path = dir.join(&entry.file);
            let bytes = std::fs::read(&path).map_err(io_err(&path))?;
            let expected = entry.width * entry.height * entry.dtype.size();
            if bytes.len() != expected {
                return Err(IngestError::PayloadSize {
                    patch: meta.id.clone(),
                    band: entry.band_id,
                    expected,
                    actual: bytes.len(),
                });
            }
            bands.insert(
                entry.band_id,
                BundleBand {
                    width: entry.width,
                    height: entry.height,
                    resolution_m: entry.resolution_m,
                    data: BandData::from_le_bytes(entry.dtype, &bytes),
                },
            );
        }
        let bundle = PatchBundle {
            id: meta.id,
            dataset: meta.dataset,
            labels: meta.labels.into_iter().collect(),
            bands,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn to_patch(&self) -> Result<Patch, IngestError> {
        let bands = self
            .bands
            .iter()
            .map(|(&id, b)| {
                BandGrid::new(b.width, b.height, b.resolution_m, b.data.to_f32())
                    .map(|g| (id, g))
                    .map_err(|e| IngestError::BandValues {
                        patch: self.id.clone(),
                        band: id,
                        message: e.to_string(),
                    })
            })
            .collect::<Result<_, _>>()?;
        Ok(Patch {
            id: self.id.clone(),
            dataset: self.dataset,
            bands,
            labels: self.labels.clone(),
        })
    }
}
