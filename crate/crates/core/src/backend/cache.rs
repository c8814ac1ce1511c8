use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CacheKey, GenerationParams, ModelRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSummary {
    pub backend_id: String,
    pub prompt_sha256: String,
    pub prompt_bytes: usize,
    pub n_images: usize,
    pub image_bytes: usize,
    pub params: GenerationParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

/// One cached response, stored as `<digest>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub digest: String,
    pub request_summary: RequestSummary,
    pub text: String,
    pub latency_ms: u64,
    pub timestamp: String,
}

impl CacheEntry {
    pub fn new(key: &CacheKey, backend_id: &str, req: &ModelRequest, text: String, latency_ms: u64) -> Self {
        Self {
            digest: key.hex(),
            request_summary: RequestSummary {
                backend_id: backend_id.to_string(),
                prompt_sha256: hex::encode(Sha256::digest(req.prompt_text.as_bytes())),
                prompt_bytes: req.prompt_text.len(),
                n_images: req.images.len(),
                image_bytes: req.images.iter().map(Vec::len).sum(),
                params: req.params,
                tag: req.tag.clone(),
            },
            text,
            latency_ms,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        }
    }
}

/// Directory of `{digest}.json` files. Entries are written to a temporary
/// file and renamed into place, so readers never observe partial writes and
/// concurrent writers of the same key simply replace each other.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.hex()))
    }

    pub fn get(&self, key: &CacheKey) -> Option<CacheEntry> {
        let path = self.path(key);
        let bytes = std::fs::read(&path).ok()?;
        match serde_json::from_slice::<CacheEntry>(&bytes) {
            Ok(entry) if entry.digest == key.hex() => Some(entry),
            Ok(_) | Err(_) => {
                tracing::warn!(path = %path.display(), "ignoring unreadable cache entry");
                None
            }
        }
    }

    pub fn put(&self, key: &CacheKey, entry: &CacheEntry) -> std::io::Result<()> {
        let tmp = self.dir.join(format!(
            ".{}.{}.{}.tmp",
            key.hex(),
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        {
            let mut f = std::fs::File::create(&tmp)?;
            serde_json::to_writer_pretty(&mut f, entry)?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, self.path(key))
    }

    pub fn len(&self) -> usize {
        std::fs::read_dir(&self.dir)
            .map(|it| {
                it.filter_map(Result::ok)
                    .filter(|e| e.file_name().to_string_lossy().ends_with(".json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_get_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let req = ModelRequest::new("p", vec![vec![0]]);
        let key = CacheKey::compute("b", &req);
        assert!(cache.get(&key).is_none());
        let entry = CacheEntry::new(&key, "b", &req, "(2)".into(), 12);
        cache.put(&key, &entry).unwrap();
        assert_eq!(cache.get(&key).unwrap(), entry);
        assert_eq!(cache.len(), 1);

        std::fs::write(cache.path(&key), b"{not json").unwrap();
        assert!(cache.get(&key).is_none());
    }

    #[test]
    fn concurrent_duplicate_writes() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let req = ModelRequest::new("p", vec![vec![0]]);
        let key = CacheKey::compute("b", &req);
        let entry = CacheEntry::new(&key, "b", &req, "(2)".into(), 1);
        std::thread::scope(|s| {
            for _ in 0..16 {
                s.spawn(|| cache.put(&key, &entry).unwrap());
            }
        });
        assert_eq!(cache.get(&key).unwrap().text, "(2)");
        assert_eq!(cache.len(), 1);
    }
}
