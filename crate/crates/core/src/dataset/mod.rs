//! Dataset ingestion: the canonical patch bundle format, vendor layout
//! importers, manifests and seeded subsetting.

mod bundle;
mod manifest;
pub mod rng;
mod sources;
pub mod synthetic;

use std::path::Path;

use thiserror::Error;

use crate::raster::BandId;

pub use bundle::{label_task, BandData, BandEntry, BundleBand, BundleMeta, Dtype, PatchBundle, METADATA_FILE};
pub use manifest::{DatasetManifest, ManifestEntry, PatchFilter};
pub use sources::{
    import_bigearthnet_patch, import_eurosat_patch, list_bigearthnet_patches, list_eurosat_files, BandDecoder,
    TiffDecoder, EUROSAT_PLANES,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Metadata { path: String, message: String },
    #[error("{path}: cannot decode image: {message}")]
    Decode { path: String, message: String },
    #[error("{0}")]
    Layout(String),
    #[error("patch {patch}: missing band file for {band}")]
    MissingBand { patch: String, band: BandId },
    #[error("patch {patch}: band {band} listed twice")]
    DuplicateBand { patch: String, band: BandId },
    #[error("patch {patch}: band {band} is {}x{}, expected {}x{}", .actual.0, .actual.1, .expected.0, .expected.1)]
    BandSize {
        patch: String,
        band: BandId,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("patch {patch}: band {band} payload is {actual} bytes, expected {expected}")]
    PayloadSize {
        patch: String,
        band: BandId,
        expected: usize,
        actual: usize,
    },
    #[error("patch {patch}: band {band} resolution {actual} m, expected {expected} m")]
    Resolution {
        patch: String,
        band: BandId,
        expected: u32,
        actual: u32,
    },
    #[error("patch {patch}: band {band}: {message}")]
    BandValues { patch: String, band: BandId, message: String },
    #[error("patch {patch}: label `{label}` is not in the class list")]
    UnknownLabel { patch: String, label: String },
    #[error("patch {patch}: label index {label} outside 1..={n_classes}")]
    LabelOutOfRange { patch: String, label: u32, n_classes: u32 },
    #[error("{path}: band count {actual}, expected {expected}")]
    BandCount {
        path: String,
        expected: usize,
        actual: usize,
    },
    #[error("subset size {n} outside 1..={available}")]
    SubsetSize { n: usize, available: usize },
    #[error("manifest: {0}")]
    Manifest(String),
}

pub(crate) fn io_err(path: &Path) -> impl Fn(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}
