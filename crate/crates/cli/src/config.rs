//! Run configuration, resolved from layers: CLI flags over the config file
//! over `SPECTRAPROMPT_*` environment variables over built-in defaults.
//!
//! Each layer is a partial JSON object; layers are deep-merged and the
//! result deserialized once. The API key is never part of the config, so it
//! cannot leak into outputs that embed the resolved config.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use spectraprompt_core::{Modality, NormalizationMethod, ProductId, Task};

pub const API_KEY_ENV: &str = "SPECTRAPROMPT_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Http,
    MockTruth,
    MockEmpty,
    MockFixture,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(Value::String(s.to_string()))
            .map_err(|_| format!("unknown backend `{s}` (expected http, mock-truth, mock-empty or mock-fixture)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub auth_header: String,
    pub timeout_s: u64,
    /// JSON object `patch id -> answer text`, for `mock-fixture`.
    pub fixture: Option<PathBuf>,
    pub max_in_flight: usize,
    pub retries: u32,
    pub backoff_base_ms: u64,
    pub max_backoff_ms: u64,
    pub temperature: f32,
    pub max_output_tokens: u32,
    /// Defaults to `<output_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub use_cache: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetConfig {
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    #[serde(with = "as_text")]
    pub task: Task,
    #[serde(with = "as_text")]
    pub modality: Modality,
    pub products: Vec<ProductId>,
    #[serde(with = "normalization_text")]
    pub normalization: NormalizationMethod,
    pub templates_dir: Option<PathBuf>,
    pub subset: Option<SubsetConfig>,
    pub output_dir: PathBuf,
    pub run_label: Option<String>,
    pub backend: BackendConfig,
}

mod as_text {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr<Err = String>,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

mod normalization_text {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};
    use spectraprompt_core::NormalizationMethod;

    pub fn serialize<S: Serializer>(v: &NormalizationMethod, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::normalization_name(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NormalizationMethod, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

pub fn normalization_name(m: NormalizationMethod) -> String {
    match m {
        NormalizationMethod::MinMax => "minmax".into(),
        NormalizationMethod::Percentile { lo, hi } => format!("percentile:{lo}:{hi}"),
    }
}

pub fn default_products(modality: Modality) -> Vec<ProductId> {
    match modality {
        Modality::RgbOnly => vec![ProductId::TrueColor],
        Modality::MultiSpectral => ProductId::DEFAULT_SELECTION.to_vec(),
    }
}

fn defaults() -> Value {
    json!({
        "task": "bigearthnet43",
        "modality": "multispectral",
        "normalization": "minmax",
        "output_dir": "out",
        "backend": {
            "kind": "mock-truth",
            "auth_header": "Authorization",
            "timeout_s": 120,
            "max_in_flight": 4,
            "retries": 3,
            "backoff_base_ms": 500,
            "max_backoff_ms": 30000,
            "temperature": 0.0,
            "max_output_tokens": 256,
            "use_cache": true
        }
    })
}

/// Deep merge: objects merge key by key, anything else in `top` replaces.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, top) => *slot = top,
    }
}

/// Sets `path` (dot-separated) in `obj` when `value` is present.
pub fn set_path(obj: &mut Value, path: &str, value: Option<Value>) {
    let Some(value) = value else { return };
    let mut cur = obj;
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
        let map = cur.as_object_mut().expect("object");
        if parts.peek().is_none() {
            map.insert(part.to_string(), value);
            return;
        }
        cur = map.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
}

const ENV_VARS: [(&str, &str, EnvKind); 14] = [
    ("SPECTRAPROMPT_MANIFEST", "manifest", EnvKind::Text),
    ("SPECTRAPROMPT_TASK", "task", EnvKind::Text),
    ("SPECTRAPROMPT_MODALITY", "modality", EnvKind::Text),
    ("SPECTRAPROMPT_PRODUCTS", "products", EnvKind::List),
    ("SPECTRAPROMPT_NORMALIZATION", "normalization", EnvKind::Text),
    ("SPECTRAPROMPT_TEMPLATES_DIR", "templates_dir", EnvKind::Text),
    ("SPECTRAPROMPT_OUTPUT_DIR", "output_dir", EnvKind::Text),
    ("SPECTRAPROMPT_BACKEND", "backend.kind", EnvKind::Text),
    ("SPECTRAPROMPT_ENDPOINT", "backend.endpoint_url", EnvKind::Text),
    ("SPECTRAPROMPT_MODEL", "backend.model_name", EnvKind::Text),
    ("SPECTRAPROMPT_AUTH_HEADER", "backend.auth_header", EnvKind::Text),
    ("SPECTRAPROMPT_MAX_IN_FLIGHT", "backend.max_in_flight", EnvKind::Number),
    ("SPECTRAPROMPT_RETRIES", "backend.retries", EnvKind::Number),
    ("SPECTRAPROMPT_CACHE_DIR", "backend.cache_dir", EnvKind::Text),
];

#[derive(Clone, Copy)]
enum EnvKind {
    Text,
    Number,
    List,
}

/// The environment layer, read through `get` so tests need not touch the
/// process environment.
pub fn env_layer(get: impl Fn(&str) -> Option<String>) -> Result<Value> {
    let mut layer = json!({});
    for (var, path, kind) in ENV_VARS {
        let Some(raw) = get(var).filter(|v| !v.trim().is_empty()) else {
            continue;
        };
        let value = match kind {
            EnvKind::Text => Value::String(raw),
            EnvKind::Number => Value::from(
                raw.trim()
                    .parse::<u64>()
                    .with_context(|| format!("{var}=`{raw}` is not a non-negative integer"))?,
            ),
            EnvKind::List => Value::from(raw.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>()),
        };
        set_path(&mut layer, path, Some(value));
    }
    Ok(layer)
}

pub fn read_config_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    if !value.is_object() {
        bail!("config {} must be a JSON object", path.display());
    }
    Ok(value)
}

/// Merges the layers (lowest precedence first) and validates the result.
pub fn resolve(env: Value, file: Option<Value>, cli: Value) -> Result<RunConfig> {
    let mut merged = defaults();
    merge(&mut merged, env);
    if let Some(file) = file {
        merge(&mut merged, file);
    }
    merge(&mut merged, cli);

    if merged.get("manifest").is_none_or(Value::is_null) {
        bail!("no dataset manifest given (use --manifest, the config file or SPECTRAPROMPT_MANIFEST)");
    }
    if merged.get("products").is_none_or(Value::is_null) {
        let modality: Modality = merged["modality"]
            .as_str()
            .unwrap_or_default()
            .parse()
            .map_err(anyhow::Error::msg)?;
        merged["products"] = serde_json::to_value(default_products(modality))?;
    }
    let config: RunConfig = serde_json::from_value(merged).context("invalid run configuration")?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        match self.modality {
            Modality::RgbOnly => {
                if self.products != [ProductId::TrueColor] {
                    bail!("the rgb modality uses exactly [TrueColor], got {:?}", self.products);
                }
            }
            Modality::MultiSpectral => {
                if !self.products.contains(&ProductId::TrueColor) {
                    bail!("multispectral product selection must include TrueColor");
                }
                if !(2..=6).contains(&self.products.len()) {
                    bail!("multispectral selection needs 2 to 6 products, got {}", self.products.len());
                }
                let mut seen = self.products.clone();
                seen.sort();
                seen.dedup();
                if seen.len() != self.products.len() {
                    bail!("product selection lists a product twice: {:?}", self.products);
                }
            }
        }
        let b = &self.backend;
        if b.max_in_flight == 0 {
            bail!("backend.max_in_flight must be at least 1");
        }
        match b.kind {
            BackendKind::Http if b.endpoint_url.is_none() || b.model_name.is_none() => {
                bail!("the http backend needs endpoint_url and model_name")
            }
            BackendKind::MockFixture if b.fixture.is_none() => bail!("the mock-fixture backend needs a fixture file"),
            _ => {}
        }
        if let Some(s) = self.subset {
            if s.n == 0 {
                bail!("subset size must be at least 1");
            }
        }
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.backend
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn label(&self) -> String {
        self.run_label.clone().unwrap_or_else(|| {
            let arm = match self.modality {
                Modality::RgbOnly => "rgb".to_string(),
                Modality::MultiSpectral => self
                    .products
                    .iter()
                    .map(ProductId::to_string)
                    .collect::<Vec<_>>()
                    .join("+"),
            };
            format!("{}/{arm}", self.task)
        })
    }
}
