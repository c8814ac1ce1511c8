//! `eval`: render, prompt, query, parse and score every selected patch.
//!
//! Records are appended to `records.jsonl` as they finish so an interrupted
//! run can resume, then rewritten sorted by patch id. With a warm cache a
//! rerun issues no backend calls and reproduces the file byte for byte.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use spectraprompt_core::backend::{
    mock_from_truth, Backend, FixtureBackend, GenerationParams, HttpBackend, HttpConfig, ModelClient, ModelRequest,
    ResponseCache, RetryPolicy, UnknownPatchMode,
};
use spectraprompt_core::dataset::{BundleMeta, DatasetManifest, ManifestEntry, METADATA_FILE};
use spectraprompt_core::png::encode_image;
use spectraprompt_core::prompt::TemplateSet;
use spectraprompt_core::{aggregate, map_43_to_19, parse_answer, MetricsReport, PredictionRecord, Task};

use crate::config::{BackendKind, RunConfig};
use crate::render::{build_patch_prompt, selected_manifest, template_set};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub metric: String,
    pub value: f64,
}

/// Everything `report` needs, plus the resolved config for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub run_label: String,
    pub task: String,
    pub backend_id: String,
    pub headline: Headline,
    pub n_patches: usize,
    pub n_skipped_empty_truth: usize,
    pub n_resumed: usize,
    pub cache_hits: u64,
    pub backend_calls: u64,
    pub metrics: MetricsReport,
    pub config: RunConfig,
}

impl MetricsFile {
    pub fn task(&self) -> Result<Task> {
        self.task.parse().map_err(anyhow::Error::msg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing metrics file {}", path.display()))
    }
}

/// Settings that change results. A run directory only resumes under the same fingerprint.
fn fingerprint(cfg: &RunConfig) -> Value {
    let b = &cfg.backend;
    json!({
        "manifest": cfg.manifest,
        "task": cfg.task.as_str(),
        "modality": cfg.modality.to_string(),
        "products": cfg.products,
        "normalization": crate::config::normalization_name(cfg.normalization),
        "templates_dir": cfg.templates_dir,
        "subset": cfg.subset,
        "backend": {
            "kind": b.kind,
            "endpoint_url": b.endpoint_url,
            "model_name": b.model_name,
            "fixture": b.fixture,
            "temperature": b.temperature,
            "max_output_tokens": b.max_output_tokens,
        },
    })
}

fn read_meta(manifest: &DatasetManifest, entry: &ManifestEntry) -> Result<BundleMeta> {
    let path = manifest.bundle_dir(entry).join(METADATA_FILE);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Ground truth in the task's label space.
fn task_truth(task: Task, labels: &[u32]) -> Result<BTreeSet<u32>> {
    let labels: BTreeSet<u32> = labels.iter().copied().collect();
    Ok(match task {
        Task::BigEarthNet19 => map_43_to_19(&labels)?,
        _ => labels,
    })
}

fn load_fixture(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading fixture {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("fixture {} must map patch ids to answer strings", path.display()))
}

fn build_backend(cfg: &RunConfig, truth: &BTreeMap<String, BTreeSet<u32>>, api_key: Option<String>) -> Result<Arc<dyn Backend>> {
    let b = &cfg.backend;
    Ok(match b.kind {
        BackendKind::Http => {
            let mut http = HttpConfig::new(
                b.endpoint_url.clone().expect("validated"),
                b.model_name.clone().expect("validated"),
            );
            http.api_key = api_key;
            http.auth_header = b.auth_header.clone();
            http.timeout_s = b.timeout_s;
            Arc::new(HttpBackend::new(http)?)
        }
        BackendKind::MockTruth => Arc::new(mock_from_truth(
            truth.iter().map(|(id, t)| (id.as_str(), t)),
            UnknownPatchMode::Error,
        )),
        BackendKind::MockEmpty => Arc::new(FixtureBackend::always_empty()),
        BackendKind::MockFixture => Arc::new(FixtureBackend::new(
            "mock-fixture",
            load_fixture(b.fixture.as_ref().expect("validated"))?,
            UnknownPatchMode::Error,
        )),
    })
}

/// Reads whatever complete lines a previous (possibly interrupted) run left.
fn read_records(path: &Path) -> Result<Vec<PredictionRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => out.push(r),
            Err(e) => tracing::warn!("{}:{}: ignoring unreadable record: {e}", path.display(), i + 1),
        }
    }
    Ok(out)
}

fn write_jsonl(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut f = std::io::BufWriter::new(File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?);
        for r in records {
            serde_json::to_writer(&mut f, r)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
    }
    std::fs::rename(&tmp, path).with_context(|| format!("replacing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

struct Job<'a> {
    cfg: &'a RunConfig,
    manifest: &'a DatasetManifest,
    templates: &'a TemplateSet,
    client: &'a ModelClient,
}

enum Outcome {
    Done(PredictionRecord),
    Fatal(anyhow::Error),
}

fn failed(entry: &ManifestEntry, truth: &BTreeSet<u32>, backend_id: &str, error: String) -> PredictionRecord {
    PredictionRecord {
        patch_id: entry.id.clone(),
        predicted: BTreeSet::new(),
        truth: truth.clone(),
        raw_text: String::new(),
        parse_mode: None,
        warnings: Vec::new(),
        backend_id: backend_id.to_string(),
        latency_ms: 0,
        error: Some(error),
    }
}

fn process(job: &Job, entry: &ManifestEntry, truth: &BTreeSet<u32>) -> Outcome {
    let backend_id = job.client.backend_id();
    let bundle = match job.manifest.load_bundle(entry) {
        Ok(b) => b,
        Err(e) => return Outcome::Fatal(anyhow!("patch {}: {e}", entry.id)),
    };
    let prompt = match build_patch_prompt(&bundle, job.cfg, job.templates) {
        Ok(p) => p,
        Err(e) => return Outcome::Done(failed(entry, truth, backend_id, format!("{e:#}"))),
    };
    let mut req = ModelRequest::new(prompt.text, prompt.attachments.iter().map(encode_image).collect())
        .with_tag(entry.id.clone());
    req.params = GenerationParams {
        temperature: job.cfg.backend.temperature,
        max_output_tokens: job.cfg.backend.max_output_tokens,
    };
    let resp = match job.client.query(&req) {
        Ok(r) => r,
        Err(e) if e.is_fatal() => return Outcome::Fatal(anyhow!("patch {}: {e}", entry.id)),
        Err(e) => {
            tracing::warn!("patch {}: {e}", entry.id);
            return Outcome::Done(failed(entry, truth, backend_id, e.to_string()));
        }
    };
    let task = job.cfg.task;
    let (predicted, parse_mode, warnings) = match parse_answer(&resp.text, task.n_classes() as u32, task.multi_label()) {
        Ok(a) => (a.indices, Some(a.mode), a.warnings),
        Err(f) => (BTreeSet::new(), None, f.warnings),
    };
    Outcome::Done(PredictionRecord {
        patch_id: entry.id.clone(),
        predicted,
        truth: truth.clone(),
        raw_text: resp.text,
        parse_mode,
        warnings,
        backend_id: resp.backend_id,
        latency_ms: resp.latency_ms,
        error: None,
    })
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub records_path: PathBuf,
    pub metrics_path: PathBuf,
    pub metrics: MetricsFile,
    /// Patches queried in this invocation (the rest came from a previous run).
    pub n_processed: usize,
}

pub fn run_eval(cfg: &RunConfig, api_key: Option<String>) -> Result<EvalSummary> {
    let manifest = selected_manifest(cfg)?;
    let templates = template_set(cfg)?;
    std::fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;

    let run_path = cfg.output_dir.join(RUN_FILE);
    let print = fingerprint(cfg);
    if run_path.exists() {
        let previous: Value = serde_json::from_str(&std::fs::read_to_string(&run_path)?)
            .with_context(|| format!("parsing {}", run_path.display()))?;
        if previous.get("fingerprint") != Some(&print) {
            bail!(
                "{} holds a run with different settings; use a fresh output directory",
                cfg.output_dir.display()
            );
        }
    }
    write_json(&run_path, &json!({ "fingerprint": print, "config": cfg }))?;

    let mut truth = BTreeMap::new();
    let mut skipped = 0;
    for entry in manifest.patches() {
        let meta = read_meta(&manifest, entry)?;
        let t = task_truth(cfg.task, &meta.labels)?;
        if t.is_empty() {
            tracing::info!("patch {} has no label in the {} nomenclature; skipped", entry.id, cfg.task);
            skipped += 1;
            continue;
        }
        truth.insert(entry.id.clone(), t);
    }
    if truth.is_empty() {
        bail!("no scorable patches in {}", cfg.manifest.display());
    }

    let mut client = ModelClient::new(build_backend(cfg, &truth, api_key)?)
        .with_retry(RetryPolicy {
            retries: cfg.backend.retries,
            backoff_base_ms: cfg.backend.backoff_base_ms,
            max_backoff_ms: cfg.backend.max_backoff_ms,
        })
        .with_max_in_flight(cfg.backend.max_in_flight);
    if cfg.backend.use_cache {
        let dir = cfg.cache_dir();
        client = client.with_cache(ResponseCache::open(&dir).with_context(|| format!("opening cache {}", dir.display()))?);
    }

    let records_path = cfg.output_dir.join(RECORDS_FILE);
    let mut done: BTreeMap<String, PredictionRecord> = BTreeMap::new();
    for r in read_records(&records_path)? {
        if r.error.is_none() && truth.get(&r.patch_id) == Some(&r.truth) {
            done.insert(r.patch_id.clone(), r);
        }
    }
    let n_resumed = done.len();
    if n_resumed > 0 {
        tracing::info!("resuming: {n_resumed} patches already scored");
    }
    let kept: Vec<PredictionRecord> = done.values().cloned().collect();
    write_jsonl(&records_path, &kept)?;

    let todo: Vec<&ManifestEntry> = manifest
        .patches()
        .iter()
        .filter(|e| truth.contains_key(&e.id) && !done.contains_key(&e.id))
        .collect();
    let job = Job {
        cfg,
        manifest: &manifest,
        templates: &templates,
        client: &client,
    };
    let mut log = OpenOptions::new()
        .append(true)
        .open(&records_path)
        .with_context(|| format!("opening {}", records_path.display()))?;
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let workers = cfg.backend.max_in_flight.min(todo.len()).max(1);
    let mut fatal = None;

    std::thread::scope(|s| -> Result<()> {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let (job, todo, truth, next, abort) = (&job, &todo, &truth, &next, &abort);
            s.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(entry) = todo.get(i) else { break };
                if tx.send(process(job, entry, &truth[&entry.id])).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for outcome in rx {
            match outcome {
                Outcome::Done(record) => {
                    serde_json::to_writer(&mut log, &record)?;
                    log.write_all(b"\n")?;
                    done.insert(record.patch_id.clone(), record);
                }
                Outcome::Fatal(e) => {
                    abort.store(true, Ordering::SeqCst);
                    fatal.get_or_insert(e);
                }
            }
        }
        Ok(())
    })?;
    log.flush()?;
    if let Some(e) = fatal {
        return Err(e.context(format!(
            "evaluation aborted; {} finished records kept in {}",
            done.len(),
            records_path.display()
        )));
    }

    let records: Vec<PredictionRecord> = done.into_values().collect();
    write_jsonl(&records_path, &records)?;
    let report = aggregate(&records, cfg.task.n_classes() as u32, cfg.task.multi_label())?;
    let headline = match report.accuracy {
        Some(acc) => Headline {
            metric: "accuracy".into(),
            value: acc,
        },
        None => Headline {
            metric: "sample_f1".into(),
            value: report.sample.f1,
        },
    };
    let metrics = MetricsFile {
        run_label: cfg.label(),
        task: cfg.task.as_str().into(),
        backend_id: client.backend_id().to_string(),
        headline,
        n_patches: manifest.len(),
        n_skipped_empty_truth: skipped,
        n_resumed,
        cache_hits: client.cache_hits(),
        backend_calls: client.backend_calls(),
        metrics: report,
        config: cfg.clone(),
    };
    let metrics_path = cfg.output_dir.join(METRICS_FILE);
    write_json(&metrics_path, &metrics)?;
    Ok(EvalSummary {
        records_path,
        metrics_path,
        metrics,
        n_processed: todo.len(),
    })
}
