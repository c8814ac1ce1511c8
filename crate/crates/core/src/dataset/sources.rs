//! Importers for the vendor dataset layouts. Container decoding stays here;
//! everything downstream works on [`PatchBundle`]s.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tiff::decoder::{Decoder, DecodingResult};
use tiff::ColorType;

use super::bundle::{BandData, BundleBand, PatchBundle};
use super::{io_err, IngestError};
use crate::raster::{BandId, DatasetKind};
use crate::task::Task;

/// Decodes one single-band image file into `(width, height, counts)`.
pub trait BandDecoder: Send + Sync {
    fn decode(&self, path: &Path) -> Result<(usize, usize, Vec<u16>), IngestError>;
}

/// 16-bit grayscale (Geo)TIFF decoding.
#[derive(Debug, Clone, Copy, Default)]
pub struct TiffDecoder;

fn tiff_err(path: &Path) -> impl Fn(tiff::TiffError) -> IngestError + '_ {
    move |e| IngestError::Decode {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn open_tiff(path: &Path) -> Result<Decoder<BufReader<File>>, IngestError> {
    let file = File::open(path).map_err(io_err(path))?;
    Decoder::new(BufReader::new(file)).map_err(tiff_err(path))
}

impl BandDecoder for TiffDecoder {
    fn decode(&self, path: &Path) -> Result<(usize, usize, Vec<u16>), IngestError> {
        let mut dec = open_tiff(path)?;
        let (w, h) = dec.dimensions().map_err(tiff_err(path))?;
        match dec.colortype().map_err(tiff_err(path))? {
            ColorType::Gray(16) => {}
            other => {
                return Err(IngestError::Decode {
                    path: path.display().to_string(),
                    message: format!("expected 16-bit single-band image, found {other:?}"),
                })
            }
        }
        match dec.read_image().map_err(tiff_err(path))? {
            DecodingResult::U16(v) => Ok((w as usize, h as usize, v)),
            _ => unreachable!("Gray(16) decodes to u16"),
        }
    }
}

#[derive(Debug, Deserialize)]
struct BigEarthNetLabels {
    labels: Vec<String>,
}

fn find_with_suffix(dir: &Path, suffix: &str) -> Result<Option<PathBuf>, IngestError> {
    let mut hits: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(suffix))
        })
        .collect();
    hits.sort();
    Ok(hits.into_iter().next())
}

/// Imports one BigEarthNet patch folder: `<name>_<BAND>.tif` for all 12 bands
/// plus `<name>_labels_metadata.json` with a `labels` list of class names.
pub fn import_bigearthnet_patch(source_dir: &Path, decoder: &dyn BandDecoder) -> Result<PatchBundle, IngestError> {
    let id = source_dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| IngestError::Layout(format!("bad patch folder {}", source_dir.display())))?
        .to_string();

    let labels_path = find_with_suffix(source_dir, "labels_metadata.json")?
        .ok_or_else(|| IngestError::Layout(format!("{id}: no labels_metadata.json")))?;
    let text = std::fs::read_to_string(&labels_path).map_err(io_err(&labels_path))?;
    let meta: BigEarthNetLabels = serde_json::from_str(&text).map_err(|e| IngestError::Metadata {
        path: labels_path.display().to_string(),
        message: e.to_string(),
    })?;
    let task = Task::BigEarthNet43;
    let labels = meta
        .labels
        .iter()
        .map(|name| {
            task.class_index(name).ok_or_else(|| IngestError::UnknownLabel {
                patch: id.clone(),
                label: name.clone(),
            })
        })
        .collect::<Result<BTreeSet<u32>, _>>()?;

    let mut bands = BTreeMap::new();
    for band in BandId::ALL {
        let path = find_with_suffix(source_dir, &format!("_{band}.tif"))?
            .ok_or_else(|| IngestError::MissingBand { patch: id.clone(), band })?;
        let (width, height, raw) = decoder.decode(&path)?;
        let expected = DatasetKind::BigEarthNet.expected_dims(band);
        if (width, height) != expected {
            return Err(IngestError::BandSize {
                patch: id.clone(),
                band,
                expected,
                actual: (width, height),
            });
        }
        bands.insert(
            band,
            BundleBand {
                width,
                height,
                resolution_m: band.resolution_m(),
                data: BandData::U16(raw),
            },
        );
    }
    let bundle = PatchBundle {
        id,
        dataset: DatasetKind::BigEarthNet,
        labels,
        bands,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Plane order of EuroSat MS files. B10 (cirrus) is the `None` slot.
pub const EUROSAT_PLANES: [Option<BandId>; 13] = [
    Some(BandId::B01),
    Some(BandId::B02),
    Some(BandId::B03),
    Some(BandId::B04),
    Some(BandId::B05),
    Some(BandId::B06),
    Some(BandId::B07),
    Some(BandId::B08),
    Some(BandId::B09),
    None,
    Some(BandId::B11),
    Some(BandId::B12),
    Some(BandId::B8A),
];

/// Imports one EuroSat MS image (`<Class>/<name>.tif`, 13 interleaved 16-bit
/// planes at 64x64). The class comes from the parent directory name.
pub fn import_eurosat_patch(source_file: &Path) -> Result<PatchBundle, IngestError> {
    let id = source_file
        .file_stem()
        .and_then(|n| n.to_str())
        .ok_or_else(|| IngestError::Layout(format!("bad file name {}", source_file.display())))?
        .to_string();
    let class_dir = source_file
        .parent()
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str())
        .unwrap_or("");
    let label = Task::EuroSat10
        .class_index(class_dir)
        .ok_or_else(|| IngestError::UnknownLabel {
            patch: id.clone(),
            label: class_dir.to_string(),
        })?;

    let mut dec = open_tiff(source_file)?;
    let (w, h) = dec.dimensions().map_err(tiff_err(source_file))?;
    let (w, h) = (w as usize, h as usize);
    let planes = match dec.colortype().map_err(tiff_err(source_file))? {
        ColorType::Gray(16) => 1,
        ColorType::Multiband { bit_depth: 16, num_samples } => num_samples as usize,
        other => {
            return Err(IngestError::Decode {
                path: source_file.display().to_string(),
                message: format!("expected 16-bit samples, found {other:?}"),
            })
        }
    };
    if planes != EUROSAT_PLANES.len() {
        return Err(IngestError::BandCount {
            path: source_file.display().to_string(),
            expected: EUROSAT_PLANES.len(),
            actual: planes,
        });
    }
    if (w, h) != (64, 64) {
        return Err(IngestError::BandSize {
            patch: id,
            band: BandId::B01,
            expected: (64, 64),
            actual: (w, h),
        });
    }
    let DecodingResult::U16(interleaved) = dec.read_image().map_err(tiff_err(source_file))? else {
        unreachable!("16-bit samples decode to u16");
    };
    let mut bands = BTreeMap::new();
    for (plane, band) in EUROSAT_PLANES.iter().enumerate() {
        let Some(band) = *band else { continue };
        let raw: Vec<u16> = interleaved.iter().skip(plane).step_by(planes).copied().collect();
        bands.insert(
            band,
            BundleBand {
                width: w,
                height: h,
                resolution_m: band.resolution_m(),
                data: BandData::U16(raw),
            },
        );
    }
    let bundle = PatchBundle {
        id,
        dataset: DatasetKind::EuroSat,
        labels: [label].into(),
        bands,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Patch folders of a BigEarthNet root, sorted by name.
pub fn list_bigearthnet_patches(root: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// `<Class>/<file>.tif` paths of a EuroSat MS root, sorted.
pub fn list_eurosat_files(root: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let mut files = Vec::new();
    for class_dir in std::fs::read_dir(root).map_err(io_err(root))? {
        let class_dir = class_dir.map_err(io_err(root))?.path();
        if !class_dir.is_dir() {
            continue;
        }
        for f in std::fs::read_dir(&class_dir).map_err(io_err(&class_dir))? {
            let p = f.map_err(io_err(&class_dir))?.path();
            let is_tif = p
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("tif") || e.eq_ignore_ascii_case("tiff"));
            if is_tif {
                files.push(p);
            }
        }
    }
    files.sort();
    Ok(files)
}
