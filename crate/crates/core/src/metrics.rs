//! Multi-label precision/recall/F1, top-1 accuracy, and the BigEarthNet
//! 43 to 19 class mapping.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::answer::ParseMode;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no records to aggregate")]
    Empty,
    #[error("record {0} has an empty truth set")]
    EmptyTruth(String),
    #[error("record {patch_id}: class index {index} outside 1..={n_classes}")]
    IndexOutOfRange {
        patch_id: String,
        index: u32,
        n_classes: u32,
    },
    #[error("record {0} is multi-label; top-1 accuracy needs exactly one truth label and at most one prediction")]
    MultiLabelRecord(String),
    #[error("class index {0} outside 1..=43")]
    MappingIndex(u32),
    #[error("mapping table: {0}")]
    MappingTable(String),
}

/// One scored patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub patch_id: String,
    pub predicted: BTreeSet<u32>,
    pub truth: BTreeSet<u32>,
    pub raw_text: String,
    /// `None` when nothing could be parsed (or the backend call failed).
    pub parse_mode: Option<ParseMode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub backend_id: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_pr(precision: f64, recall: f64) -> Self {
        Self {
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    Sample,
    Micro,
    Macro,
}

impl Averaging {
    pub const ALL: [Averaging; 3] = [Averaging::Sample, Averaging::Micro, Averaging::Macro];
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Averaging::Sample => "sample",
            Averaging::Micro => "micro",
            Averaging::Macro => "macro",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub class: u32,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ClassCounts {
    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_classes: u32,
    pub n_records: usize,
    pub n_parse_failures: usize,
    pub n_lenient: usize,
    pub n_backend_errors: usize,
    pub sample: Prf,
    pub micro: Prf,
    #[serde(rename = "macro")]
    pub macro_: Prf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub per_class: Vec<ClassCounts>,
}

impl MetricsReport {
    pub fn get(&self, mode: Averaging) -> Prf {
        match mode {
            Averaging::Sample => self.sample,
            Averaging::Micro => self.micro,
            Averaging::Macro => self.macro_,
        }
    }
}

/// Per-example precision, recall and F1. An empty prediction scores zero.
pub fn sample_prf(predicted: &BTreeSet<u32>, truth: &BTreeSet<u32>) -> Prf {
    let hits = predicted.intersection(truth).count() as u64;
    Prf::from_pr(
        ratio(hits, predicted.len() as u64),
        ratio(hits, truth.len() as u64),
    )
}

fn validate(records: &[PredictionRecord], n_classes: u32) -> Result<(), MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    for r in records {
        if r.truth.is_empty() {
            return Err(MetricsError::EmptyTruth(r.patch_id.clone()));
        }
        if let Some(&index) = r
            .truth
            .iter()
            .chain(&r.predicted)
            .find(|&&k| k == 0 || k > n_classes)
        {
            return Err(MetricsError::IndexOutOfRange {
                patch_id: r.patch_id.clone(),
                index,
                n_classes,
            });
        }
    }
    Ok(())
}

/// Computes every averaging mode at once. Records are sorted by patch id
/// first, so the result does not depend on arrival order.
pub fn aggregate(records: &[PredictionRecord], n_classes: u32, multi_label: bool) -> Result<MetricsReport, MetricsError> {
    validate(records, n_classes)?;
    let mut sorted: Vec<&PredictionRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.patch_id.cmp(&b.patch_id));

    let mut counts: Vec<ClassCounts> = (1..=n_classes)
        .map(|class| ClassCounts { class, tp: 0, fp: 0, fn_: 0 })
        .collect();
    let (mut sum_p, mut sum_r, mut sum_f) = (0.0, 0.0, 0.0);
    for r in &sorted {
        let prf = sample_prf(&r.predicted, &r.truth);
        sum_p += prf.precision;
        sum_r += prf.recall;
        sum_f += prf.f1;
        for &k in &r.predicted {
            let c = &mut counts[k as usize - 1];
            if r.truth.contains(&k) {
                c.tp += 1;
            } else {
                c.fp += 1;
            }
        }
        for k in r.truth.difference(&r.predicted) {
            counts[*k as usize - 1].fn_ += 1;
        }
    }
    let n = sorted.len() as f64;
    let sample = Prf {
        precision: sum_p / n,
        recall: sum_r / n,
        f1: sum_f / n,
    };

    let (tp, fp, fn_) = counts
        .iter()
        .fold((0, 0, 0), |(a, b, c), k| (a + k.tp, b + k.fp, c + k.fn_));
    let micro = Prf::from_pr(ratio(tp, tp + fp), ratio(tp, tp + fn_));

    let supported: Vec<Prf> = counts
        .iter()
        .filter(|c| c.support() > 0)
        .map(|c| Prf::from_pr(ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_)))
        .collect();
    let m = supported.len() as f64;
    let macro_ = Prf {
        precision: supported.iter().map(|p| p.precision).sum::<f64>() / m,
        recall: supported.iter().map(|p| p.recall).sum::<f64>() / m,
        f1: supported.iter().map(|p| p.f1).sum::<f64>() / m,
    };

    let accuracy = if multi_label {
        None
    } else {
        Some(top1_accuracy(records)?)
    };

    Ok(MetricsReport {
        n_classes,
        n_records: sorted.len(),
        n_parse_failures: sorted
            .iter()
            .filter(|r| r.parse_mode.is_none() && r.error.is_none())
            .count(),
        n_lenient: sorted
            .iter()
            .filter(|r| r.parse_mode == Some(ParseMode::Lenient))
            .count(),
        n_backend_errors: sorted.iter().filter(|r| r.error.is_some()).count(),
        sample,
        micro,
        macro_,
        accuracy,
        per_class: counts,
    })
}

/// Fraction of single-label records whose prediction equals the truth.
pub fn top1_accuracy(records: &[PredictionRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut correct = 0u64;
    for r in records {
        if r.truth.len() != 1 || r.predicted.len() > 1 {
            return Err(MetricsError::MultiLabelRecord(r.patch_id.clone()));
        }
        if r.predicted == r.truth {
            correct += 1;
        }
    }
    Ok(ratio(correct, records.len() as u64))
}

const BIGEARTHNET19_MAPPING_CSV: &str = include_str!("../data/bigearthnet19_mapping.csv");

/// SHA-256 of `data/bigearthnet19_mapping.csv`.
pub const BIGEARTHNET19_MAPPING_SHA256: &str =
    "06d9e14020cba5414fac1934689913cade89750d108f63ea03373fb45c5eecff";

#[derive(Debug, Deserialize)]
struct MappingRow {
    from_index: u32,
    #[allow(dead_code)]
    from_name: String,
    to_index: Option<u32>,
    #[allow(dead_code)]
    to_name: String,
}

/// 43-class to 19-class nomenclature. Classes the 19-class scheme drops map to nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMapping {
    table: BTreeMap<u32, Option<u32>>,
}

impl LabelMapping {
    /// Parses a `from_index,from_name,to_index,to_name` table, checking its
    /// SHA-256 when `expected_sha256` is given.
    pub fn from_csv(text: &str, expected_sha256: Option<&str>) -> Result<Self, MetricsError> {
        if let Some(expected) = expected_sha256 {
            let actual = hex::encode(Sha256::digest(text.as_bytes()));
            if actual != expected {
                return Err(MetricsError::MappingTable(format!(
                    "checksum mismatch: expected {expected}, got {actual}"
                )));
            }
        }
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut table = BTreeMap::new();
        for row in reader.deserialize::<MappingRow>() {
            let row = row.map_err(|e| MetricsError::MappingTable(e.to_string()))?;
            if let Some(to) = row.to_index {
                if !(1..=19).contains(&to) {
                    return Err(MetricsError::MappingTable(format!("target index {to} outside 1..=19")));
                }
            }
            if table.insert(row.from_index, row.to_index).is_some() {
                return Err(MetricsError::MappingTable(format!("duplicate row for {}", row.from_index)));
            }
        }
        if table.keys().copied().ne(1..=43) {
            return Err(MetricsError::MappingTable("rows must cover 1..=43 exactly once".into()));
        }
        Ok(Self { table })
    }

    pub fn bigearthnet19() -> Self {
        Self::from_csv(BIGEARTHNET19_MAPPING_CSV, Some(BIGEARTHNET19_MAPPING_SHA256))
            .expect("bundled mapping table is valid")
    }

    pub fn map(&self, indices: &BTreeSet<u32>) -> Result<BTreeSet<u32>, MetricsError> {
        indices
            .iter()
            .map(|&k| self.table.get(&k).copied().ok_or(MetricsError::MappingIndex(k)))
            .filter_map(|r| r.transpose())
            .collect()
    }
}

pub fn map_43_to_19(indices: &BTreeSet<u32>) -> Result<BTreeSet<u32>, MetricsError> {
    LabelMapping::bigearthnet19().map(indices)
}
