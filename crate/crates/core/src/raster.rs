//! Band-level data model: band identifiers, single-band grids, patches and
//! per-band normalization to displayable ranges.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("grid {width}x{height} expects {expected} values, got {actual}")]
    LengthMismatch {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("grid is empty")]
    Empty,
    #[error("value {value} at index {index} is not finite and non-negative")]
    InvalidValue { index: usize, value: f32 },
    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfUnitRange { index: usize, value: f32 },
    #[error("unknown band id `{0}`")]
    UnknownBand(String),
    #[error("invalid percentile range [{lo}, {hi}]")]
    InvalidPercentiles { lo: f32, hi: f32 },
}

/// Sentinel-2 bands usable as model inputs. B10 (cirrus) is intentionally absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BandId {
    B01,
    B02,
    B03,
    B04,
    B05,
    B06,
    B07,
    B08,
    B8A,
    B09,
    B11,
    B12,
}

impl BandId {
    pub const ALL: [BandId; 12] = [
        BandId::B01,
        BandId::B02,
        BandId::B03,
        BandId::B04,
        BandId::B05,
        BandId::B06,
        BandId::B07,
        BandId::B08,
        BandId::B8A,
        BandId::B09,
        BandId::B11,
        BandId::B12,
    ];

    /// Nominal ground sampling distance in meters.
    pub fn resolution_m(self) -> u32 {
        match self {
            BandId::B02 | BandId::B03 | BandId::B04 | BandId::B08 => 10,
            BandId::B05 | BandId::B06 | BandId::B07 | BandId::B8A | BandId::B11 | BandId::B12 => {
                20
            }
            BandId::B01 | BandId::B09 => 60,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BandId::B01 => "B01",
            BandId::B02 => "B02",
            BandId::B03 => "B03",
            BandId::B04 => "B04",
            BandId::B05 => "B05",
            BandId::B06 => "B06",
            BandId::B07 => "B07",
            BandId::B08 => "B08",
            BandId::B8A => "B8A",
            BandId::B09 => "B09",
            BandId::B11 => "B11",
            BandId::B12 => "B12",
        }
    }
}

impl fmt::Display for BandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BandId {
    type Err = RasterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BandId::ALL
            .into_iter()
            .find(|b| b.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| RasterError::UnknownBand(s.to_string()))
    }
}

/// A single-band raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BandGrid {
    width: usize,
    height: usize,
    resolution_m: u32,
    values: Vec<f32>,
}

impl BandGrid {
    pub fn new(
        width: usize,
        height: usize,
        resolution_m: u32,
        values: Vec<f32>,
    ) -> Result<Self, RasterError> {
        if values.len() != width * height {
            return Err(RasterError::LengthMismatch {
                width,
                height,
                expected: width * height,
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(RasterError::InvalidValue { index, value });
        }
        Ok(Self {
            width,
            height,
            resolution_m,
            values,
        })
    }

    /// Widens raw 16-bit counts.
    pub fn from_u16(width: usize, height: usize, resolution_m: u32, raw: &[u16]) -> Result<Self, RasterError> {
        Self::new(width, height, resolution_m, raw.iter().map(|&v| v as f32).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn resolution_m(&self) -> u32 {
        self.resolution_m
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How a band is stretched to [0, 1] before display.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum NormalizationMethod {
    #[default]
    MinMax,
    /// Clip to the `lo`/`hi` percentiles (0..=100) and then min-max.
    Percentile { lo: f32, hi: f32 },
}

impl NormalizationMethod {
    pub const PERCENTILE_2_98: NormalizationMethod = NormalizationMethod::Percentile { lo: 2.0, hi: 98.0 };
}

impl FromStr for NormalizationMethod {
    type Err = String;

    /// Accepts `minmax` or `percentile:LO:HI`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s == "minmax" || s == "min-max" || s == "min_max" {
            return Ok(NormalizationMethod::MinMax);
        }
        if s == "percentile" {
            return Ok(NormalizationMethod::PERCENTILE_2_98);
        }
        if let Some(rest) = s.strip_prefix("percentile:") {
            let mut it = rest.split(':');
            let lo = it.next().and_then(|v| v.parse::<f32>().ok());
            let hi = it.next().and_then(|v| v.parse::<f32>().ok());
            if let (Some(lo), Some(hi), None) = (lo, hi, it.next()) {
                return Ok(NormalizationMethod::Percentile { lo, hi });
            }
        }
        Err(format!(
            "unknown normalization `{s}` (expected `minmax` or `percentile:LO:HI`)"
        ))
    }
}

/// Linear-interpolated percentile over an ascending-sorted slice, `p` in 0..=100.
pub(crate) fn percentile_sorted(sorted: &[f32], p: f32) -> f32 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = (p as f64 / 100.0) * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    (sorted[lo] as f64 + (sorted[hi] as f64 - sorted[lo] as f64) * frac) as f32
}

fn rescale(values: &[f32], lo: f32, hi: f32) -> Vec<f32> {
    if hi <= lo {
        return vec![0.0; values.len()];
    }
    let span = hi - lo;
    values
        .iter()
        .map(|&v| ((v.clamp(lo, hi) - lo) / span).clamp(0.0, 1.0))
        .collect()
}

/// Stretches a band to [0, 1]. Constant bands become all zeros.
pub fn normalize_band(grid: &BandGrid, method: NormalizationMethod) -> Result<BandGrid, RasterError> {
    if grid.is_empty() {
        return Err(RasterError::Empty);
    }
    let (lo, hi) = match method {
        NormalizationMethod::MinMax => grid
            .values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            }),
        NormalizationMethod::Percentile { lo, hi } => {
            if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo > hi {
                return Err(RasterError::InvalidPercentiles { lo, hi });
            }
            let mut sorted = grid.values.clone();
            sorted.sort_by(f32::total_cmp);
            (percentile_sorted(&sorted, lo), percentile_sorted(&sorted, hi))
        }
    };
    Ok(BandGrid {
        width: grid.width,
        height: grid.height,
        resolution_m: grid.resolution_m,
        values: rescale(&grid.values, lo, hi),
    })
}

/// Maps a unit value to a byte: `round(v * 255)`, ties away from zero.
pub fn unit_to_byte(v: f32) -> Option<u8> {
    if !(0.0..=1.0).contains(&v) {
        return None;
    }
    Some((v * 255.0).round().clamp(0.0, 255.0) as u8)
}

/// Converts a unit-range grid to bytes. Values outside [0, 1] are a contract violation.
pub fn to_byte(grid: &BandGrid) -> Result<Vec<u8>, RasterError> {
    grid.values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            unit_to_byte(value).ok_or(RasterError::OutOfUnitRange { index, value })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetKind {
    BigEarthNet,
    EuroSat,
}

impl DatasetKind {
    /// Expected (width, height) for a band of this dataset.
    pub fn expected_dims(self, band: BandId) -> (usize, usize) {
        match self {
            DatasetKind::EuroSat => (64, 64),
            DatasetKind::BigEarthNet => match band.resolution_m() {
                10 => (120, 120),
                20 => (60, 60),
                _ => (20, 20),
            },
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetKind::BigEarthNet => f.write_str("BigEarthNet"),
            DatasetKind::EuroSat => f.write_str("EuroSat"),
        }
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bigearthnet" | "ben" => Ok(DatasetKind::BigEarthNet),
            "eurosat" => Ok(DatasetKind::EuroSat),
            other => Err(format!("unknown dataset kind `{other}`")),
        }
    }
}

/// One observation: bands keyed by id, plus 1-based label indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub id: String,
    pub dataset: DatasetKind,
    pub bands: BTreeMap<BandId, BandGrid>,
    pub labels: BTreeSet<u32>,
}

impl Patch {
    pub fn band(&self, id: BandId) -> Option<&BandGrid> {
        self.bands.get(&id)
    }
}
