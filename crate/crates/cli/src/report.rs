//! Comparison tables over one or more `metrics.json` files.

use std::path::PathBuf;

use anyhow::{bail, Result};
use spectraprompt_core::metrics::Averaging;
use spectraprompt_core::Task;

use crate::eval::MetricsFile;

#[derive(Debug, Clone)]
pub struct RunInput {
    pub label: Option<String>,
    pub path: PathBuf,
}

impl std::str::FromStr for RunInput {
    type Err = String;

    /// `path` or `label=path`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.split_once('=') {
            Some((label, path)) if !label.is_empty() => RunInput {
                label: Some(label.to_string()),
                path: path.into(),
            },
            _ => RunInput {
                label: None,
                path: s.into(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn markdown(&self) -> String {
        let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
        let mut out = line(&self.header);
        let rule: Vec<String> = self
            .header
            .iter()
            .enumerate()
            .map(|(i, _)| if i == 0 { ":--".into() } else { "--:".into() })
            .collect();
        out.push_str(&line(&rule));
        for row in &self.rows {
            out.push_str(&line(row));
        }
        out
    }

    pub fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

/// One row per run. Multi-label tasks show F1/P/R for each requested
/// averaging; single-label tasks show top-1 accuracy in percent. With two or
/// more runs a delta column compares the first averaging's F1 (or accuracy)
/// against the baseline run, by default the first one.
pub fn build_table(runs: &[(String, MetricsFile)], averaging: &[Averaging], baseline: Option<&str>) -> Result<Table> {
    let Some((_, first)) = runs.first() else {
        bail!("no runs to report");
    };
    let task: Task = first.task()?;
    for (label, run) in runs {
        if run.task()? != task {
            bail!("run `{label}` is {} but `{}` is {task}; reports compare one task", run.task, runs[0].0);
        }
    }
    if averaging.is_empty() {
        bail!("no averaging mode selected");
    }
    let base_index = match baseline {
        Some(name) => Some(
            runs.iter()
                .position(|(l, _)| l == name)
                .ok_or_else(|| anyhow::anyhow!("baseline `{name}` is not among the runs"))?,
        ),
        None => (runs.len() > 1).then_some(0),
    };

    let multi = task.multi_label();
    let headline = |m: &MetricsFile| -> f64 {
        if multi {
            m.metrics.get(averaging[0]).f1
        } else {
            m.metrics.accuracy.unwrap_or(0.0) * 100.0
        }
    };

    let mut header = vec!["Method".to_string()];
    if multi {
        for a in averaging {
            header.extend([format!("{a} F1"), format!("{a} P"), format!("{a} R")]);
        }
    } else {
        header.push("Accuracy".into());
    }
    if base_index.is_some() {
        header.push(if multi { format!("Δ {} F1", averaging[0]) } else { "Δ Accuracy".into() });
    }
    header.extend(["N".to_string(), "Parse failures".to_string()]);

    let mut rows = Vec::new();
    for (i, (label, run)) in runs.iter().enumerate() {
        let mut row = vec![label.clone()];
        if multi {
            for &a in averaging {
                let prf = run.metrics.get(a);
                row.extend([prf.f1, prf.precision, prf.recall].map(|v| format!("{v:.3}")));
            }
        } else {
            row.push(format!("{:.1}", headline(run)));
        }
        if let Some(b) = base_index {
            row.push(if i == b {
                "baseline".into()
            } else {
                let d = headline(run) - headline(&runs[b].1);
                if multi {
                    format!("{d:+.3}")
                } else {
                    format!("{d:+.1}")
                }
            });
        }
        row.push(run.metrics.n_records.to_string());
        row.push(run.metrics.n_parse_failures.to_string());
        rows.push(row);
    }
    Ok(Table { header, rows })
}

pub fn load_runs(inputs: &[RunInput]) -> Result<Vec<(String, MetricsFile)>> {
    inputs
        .iter()
        .map(|input| {
            let m = MetricsFile::load(&input.path)?;
            Ok((input.label.clone().unwrap_or_else(|| m.run_label.clone()), m))
        })
        .collect()
}
