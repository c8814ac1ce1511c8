//! Multimodal model backends and the caching, retrying client around them.

mod cache;
mod http;
mod mock;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheEntry, RequestSummary, ResponseCache};
pub use http::{HttpBackend, HttpConfig};
pub use mock::{mock_from_truth, FixtureBackend, UnknownPatchMode};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("transient backend failure after {attempts} attempt(s): {message}")]
    Transient { message: String, attempts: u32 },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend has no answer for patch `{0}`")]
    UnknownPatch(String),
    #[error("response cache: {0}")]
    Cache(String),
}

impl BackendError {
    pub fn transient(message: impl Into<String>) -> Self {
        BackendError::Transient {
            message: message.into(),
            attempts: 1,
        }
    }

    /// Errors that should stop a whole evaluation run rather than one patch.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            BackendError::Auth(_) | BackendError::InvalidRequest(_) | BackendError::Cache(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f32,
    pub max_output_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_output_tokens: 256,
        }
    }
}

impl GenerationParams {
    /// Fixed-field-order JSON used in cache keys.
    pub fn canonical(&self) -> String {
        format!(
            "{{\"max_output_tokens\":{},\"temperature\":{:?}}}",
            self.max_output_tokens, self.temperature
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRequest {
    pub prompt_text: String,
    /// PNG-encoded images, in prompt order.
    pub images: Vec<Vec<u8>>,
    pub params: GenerationParams,
    /// Routing hint (the patch id). Mock backends answer by it; it is not
    /// part of the cache key.
    pub tag: Option<String>,
}

impl ModelRequest {
    pub fn new(prompt_text: impl Into<String>, images: Vec<Vec<u8>>) -> Self {
        Self {
            prompt_text: prompt_text.into(),
            images,
            params: GenerationParams::default(),
            tag: None,
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.images.is_empty() {
            return Err(BackendError::InvalidRequest("request has no images".into()));
        }
        let t = self.params.temperature;
        if !(0.0..=2.0).contains(&t) {
            return Err(BackendError::InvalidRequest(format!("temperature {t} outside [0, 2]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse {
    pub text: String,
    pub latency_ms: u64,
    pub backend_id: String,
    pub from_cache: bool,
    /// Retries spent on this call (0 when the first attempt succeeded).
    pub retries: u32,
}

/// SHA-256 over the backend id, prompt bytes, each image and the generation
/// parameters, every field length-prefixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey(pub [u8; 32]);

impl CacheKey {
    pub fn compute(backend_id: &str, req: &ModelRequest) -> Self {
        fn field(h: &mut Sha256, bytes: &[u8]) {
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        }
        let mut h = Sha256::new();
        field(&mut h, b"spectraprompt-cache-v1");
        field(&mut h, backend_id.as_bytes());
        field(&mut h, req.prompt_text.as_bytes());
        h.update((req.images.len() as u64).to_le_bytes());
        for img in &req.images {
            field(&mut h, img);
        }
        field(&mut h, req.params.canonical().as_bytes());
        CacheKey(h.finalize().into())
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }
}

/// A model that turns a request into answer text.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, req: &ModelRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub retries: u32,
    pub backoff_base_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            backoff_base_ms: 500,
            max_backoff_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): base * 2^(retry-1), capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.max {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

/// Wraps a backend with a response cache, retries and an in-flight limit.
/// Shareable across worker threads.
pub struct ModelClient {
    backend: Arc<dyn Backend>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    limiter: Limiter,
    backend_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl ModelClient {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            cache: None,
            retry: RetryPolicy::default(),
            limiter: Limiter::new(4),
            backend_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, max: usize) -> Self {
        self.limiter = Limiter::new(max);
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn max_in_flight(&self) -> usize {
        self.limiter.max
    }

    /// Attempts made against the underlying backend (cache hits excluded).
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::SeqCst)
    }

    pub fn query(&self, req: &ModelRequest) -> Result<ModelResponse, BackendError> {
        req.validate()?;
        let backend_id = self.backend.id().to_string();
        let key = CacheKey::compute(&backend_id, req);
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.get(&key) {
                self.cache_hits.fetch_add(1, Ordering::SeqCst);
                return Ok(ModelResponse {
                    text: entry.text,
                    latency_ms: entry.latency_ms,
                    backend_id,
                    from_cache: true,
                    retries: 0,
                });
            }
        }

        let mut retries = 0;
        let (text, latency_ms) = loop {
            let started = Instant::now();
            let outcome = {
                let _permit = self.limiter.acquire();
                self.backend_calls.fetch_add(1, Ordering::SeqCst);
                self.backend.complete(req)
            };
            match outcome {
                Ok(text) => break (text, started.elapsed().as_millis() as u64),
                Err(BackendError::Transient { message, .. }) => {
                    if retries >= self.retry.retries {
                        return Err(BackendError::Transient {
                            message,
                            attempts: retries + 1,
                        });
                    }
                    retries += 1;
                    tracing::warn!(backend = %backend_id, retry = retries, "transient failure: {message}");
                    std::thread::sleep(self.retry.delay(retries));
                }
                Err(other) => return Err(other),
            }
        };

        if let Some(cache) = &self.cache {
            let entry = CacheEntry::new(&key, &backend_id, req, text.clone(), latency_ms);
            cache
                .put(&key, &entry)
                .map_err(|e| BackendError::Cache(e.to_string()))?;
        }
        Ok(ModelResponse {
            text,
            latency_ms,
            backend_id,
            from_cache: false,
            retries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    struct Scripted {
        failures: AtomicUsize,
        error: BackendError,
    }

    impl Backend for Scripted {
        fn id(&self) -> &str {
            "scripted"
        }
        fn complete(&self, _req: &ModelRequest) -> Result<String, BackendError> {
            if self.failures.load(Ordering::SeqCst) > 0 {
                self.failures.fetch_sub(1, Ordering::SeqCst);
                return Err(self.error.clone());
            }
            Ok("(1)".into())
        }
    }

    fn req() -> ModelRequest {
        ModelRequest::new("prompt", vec![vec![1, 2, 3]])
    }

    fn fast() -> RetryPolicy {
        RetryPolicy {
            retries: 3,
            backoff_base_ms: 0,
            max_backoff_ms: 0,
        }
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let backend = Arc::new(Scripted {
            failures: AtomicUsize::new(3),
            error: BackendError::transient("500"),
        });
        let client = ModelClient::new(backend).with_retry(fast());
        let resp = client.query(&req()).unwrap();
        assert_eq!(resp.retries, 3);
        assert_eq!(client.backend_calls(), 4);
    }

    #[test]
    fn gives_up_after_retries() {
        let backend = Arc::new(Scripted {
            failures: AtomicUsize::new(10),
            error: BackendError::transient("503"),
        });
        let client = ModelClient::new(backend).with_retry(fast());
        let err = client.query(&req()).unwrap_err();
        assert!(matches!(err, BackendError::Transient { attempts: 4, .. }), "{err:?}");
    }

    #[test]
    fn auth_is_not_retried() {
        let backend = Arc::new(Scripted {
            failures: AtomicUsize::new(10),
            error: BackendError::Auth("401".into()),
        });
        let client = ModelClient::new(backend).with_retry(fast());
        assert!(matches!(client.query(&req()), Err(BackendError::Auth(_))));
        assert_eq!(client.backend_calls(), 1);
    }

    #[test]
    fn invalid_requests() {
        let client = ModelClient::new(Arc::new(Scripted {
            failures: AtomicUsize::new(0),
            error: BackendError::transient(""),
        }));
        assert!(matches!(
            client.query(&ModelRequest::new("p", vec![])),
            Err(BackendError::InvalidRequest(_))
        ));
        let mut r = req();
        r.params.temperature = 2.5;
        assert!(matches!(client.query(&r), Err(BackendError::InvalidRequest(_))));
        assert_eq!(client.backend_calls(), 0);
    }

    #[test]
    fn cache_key_sensitivity() {
        let base = req();
        let k = CacheKey::compute("b", &base);
        assert_eq!(k, CacheKey::compute("b", &base.clone().with_tag("ignored")));
        assert_ne!(k, CacheKey::compute("c", &base));
        let mut r = base.clone();
        r.prompt_text.push(' ');
        assert_ne!(k, CacheKey::compute("b", &r));
        let mut r = base.clone();
        r.images[0][2] ^= 1;
        assert_ne!(k, CacheKey::compute("b", &r));
        let mut r = base.clone();
        r.images = vec![vec![1], vec![2, 3]];
        assert_ne!(k, CacheKey::compute("b", &r));
        let mut r = base;
        r.params.max_output_tokens = 255;
        assert_ne!(k, CacheKey::compute("b", &r));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            retries: 5,
            backoff_base_ms: 100,
            max_backoff_ms: 350,
        };
        assert_eq!(p.delay(1), Duration::from_millis(100));
        assert_eq!(p.delay(2), Duration::from_millis(200));
        assert_eq!(p.delay(3), Duration::from_millis(350));
        assert_eq!(p.delay(80), Duration::from_millis(350));
    }
}
