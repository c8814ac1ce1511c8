//! Deterministic synthetic patches and vendor-layout writers, for fixtures
//! and offline runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use tiff::encoder::colortype::{ColorType, Gray16};
use tiff::encoder::TiffEncoder;
use tiff::tags::{PhotometricInterpretation, SampleFormat};

use super::bundle::{label_task, BandData, BundleBand, PatchBundle};
use super::rng::SplitMix64;
use super::sources::EUROSAT_PLANES;
use super::{io_err, IngestError};
use crate::raster::{BandId, DatasetKind};

/// A bundle with all 12 bands at the dataset's native sizes. Each band is a
/// seeded gradient plus noise; distinct seeds give distinct pixels.
pub fn synthetic_bundle(id: &str, dataset: DatasetKind, labels: &[u32], seed: u64) -> PatchBundle {
    let mut rng = SplitMix64::new(seed);
    let mut bands = BTreeMap::new();
    for (i, band) in BandId::ALL.into_iter().enumerate() {
        let (w, h) = dataset.expected_dims(band);
        let base = 200 + 150 * i as u64 + rng.below(400);
        let (sx, sy) = (1 + rng.below(40), 1 + rng.below(40));
        let values = (0..w * h)
            .map(|k| {
                let (x, y) = ((k % w) as u64, (k / w) as u64);
                (base + (x * sx + y * sy) % 1500 + rng.below(300)) as u16
            })
            .collect();
        bands.insert(
            band,
            BundleBand {
                width: w,
                height: h,
                resolution_m: band.resolution_m(),
                data: BandData::U16(values),
            },
        );
    }
    PatchBundle {
        id: id.to_string(),
        dataset,
        labels: labels.iter().copied().collect::<BTreeSet<_>>(),
        bands,
    }
}

/// `count` synthetic patches named `{prefix}{i:03}` with seeded random labels.
pub fn synthetic_set(prefix: &str, dataset: DatasetKind, count: usize, seed: u64) -> Vec<PatchBundle> {
    let n_classes = label_task(dataset).n_classes() as u64;
    let mut rng = SplitMix64::new(seed);
    (0..count)
        .map(|i| {
            let labels: Vec<u32> = match dataset {
                DatasetKind::EuroSat => vec![1 + rng.below(n_classes) as u32],
                DatasetKind::BigEarthNet => (0..1 + rng.below(3)).map(|_| 1 + rng.below(n_classes) as u32).collect(),
            };
            synthetic_bundle(&format!("{prefix}{i:03}"), dataset, &labels, rng.next_u64())
        })
        .collect()
}

fn u16_plane(bundle: &PatchBundle, band: BandId) -> Vec<u16> {
    match &bundle.bands[&band].data {
        BandData::U16(v) => v.clone(),
        BandData::F32(v) => v.iter().map(|&x| x.clamp(0.0, u16::MAX as f32) as u16).collect(),
    }
}

pub fn write_gray16_tiff(path: &Path, width: usize, height: usize, data: &[u16]) -> Result<(), IngestError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut enc = TiffEncoder::new(BufWriter::new(file)).map_err(|e| tiff_write_err(path, e))?;
    enc.write_image::<Gray16>(width as u32, height as u32, data)
        .map_err(|e| tiff_write_err(path, e))
}

fn tiff_write_err(path: &Path, e: tiff::TiffError) -> IngestError {
    IngestError::Decode {
        path: path.display().to_string(),
        message: format!("writing TIFF: {e}"),
    }
}

struct MultiGray16<const N: usize>;

impl<const N: usize> ColorType for MultiGray16<N> {
    type Inner = u16;
    const TIFF_VALUE: PhotometricInterpretation = PhotometricInterpretation::BlackIsZero;
    const BITS_PER_SAMPLE: &'static [u16] = &[16; N];
    const SAMPLE_FORMAT: &'static [SampleFormat] = &[SampleFormat::Uint; N];

    fn horizontal_predict(row: &[u16], result: &mut Vec<u16>) {
        result.extend_from_slice(row);
    }
}

/// Writes pixel-interleaved 16-bit planes. Supports 12 or 13 planes.
pub fn write_multiband_tiff(path: &Path, width: usize, height: usize, planes: &[Vec<u16>]) -> Result<(), IngestError> {
    let n = planes.len();
    let interleaved: Vec<u16> = (0..width * height)
        .flat_map(|px| planes.iter().map(move |p| p[px]))
        .collect();
    let file = File::create(path).map_err(io_err(path))?;
    let mut enc = TiffEncoder::new(BufWriter::new(file)).map_err(|e| tiff_write_err(path, e))?;
    let (w, h) = (width as u32, height as u32);
    match n {
        12 => enc.write_image::<MultiGray16<12>>(w, h, &interleaved),
        13 => enc.write_image::<MultiGray16<13>>(w, h, &interleaved),
        _ => return Err(IngestError::Layout(format!("unsupported plane count {n}"))),
    }
    .map_err(|e| tiff_write_err(path, e))
}

/// Writes a BigEarthNet-style patch folder and returns its path.
pub fn write_bigearthnet_source(root: &Path, bundle: &PatchBundle) -> Result<PathBuf, IngestError> {
    let dir = root.join(&bundle.id);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (&band, b) in &bundle.bands {
        write_gray16_tiff(&dir.join(format!("{}_{band}.tif", bundle.id)), b.width, b.height, &u16_plane(bundle, band))?;
    }
    let names: Vec<&str> = {
        let all = label_task(bundle.dataset).class_names();
        bundle.labels.iter().map(|&l| all[l as usize - 1]).collect()
    };
    let path = dir.join(format!("{}_labels_metadata.json", bundle.id));
    let json = serde_json::json!({ "labels": names, "patch": bundle.id });
    std::fs::write(&path, serde_json::to_string_pretty(&json).unwrap()).map_err(io_err(&path))?;
    Ok(dir)
}

/// Writes a EuroSat-MS-style `<Class>/<id>.tif` (B10 plane zero-filled).
pub fn write_eurosat_source(root: &Path, bundle: &PatchBundle) -> Result<PathBuf, IngestError> {
    let label = *bundle
        .labels
        .iter()
        .next()
        .ok_or_else(|| IngestError::Layout(format!("{} has no label", bundle.id)))?;
    let class = label_task(DatasetKind::EuroSat).class_names()[label as usize - 1];
    let dir = root.join(class);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let planes: Vec<Vec<u16>> = EUROSAT_PLANES
        .iter()
        .map(|slot| match slot {
            Some(band) => u16_plane(bundle, *band),
            None => vec![0; 64 * 64],
        })
        .collect();
    let path = dir.join(format!("{}.tif", bundle.id));
    write_multiband_tiff(&path, 64, 64, &planes)?;
    Ok(path)
}
