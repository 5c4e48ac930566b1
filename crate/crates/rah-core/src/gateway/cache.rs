//! Content-addressed response cache: one file per key under a cache
//! directory. The key is a stable hash of (kind, payload, decode, backend
//! identity); a corrupt entry is treated as a miss and rewritten.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{RahError, Result};

use super::{AgentRequest, AgentResponse, Backend};

pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache { dir })
    }

    pub fn key(req: &AgentRequest, backend_identity: &str) -> String {
        let canonical = serde_json::json!({
            "kind": req.kind().as_str(),
            "payload": &req.payload,
            "decode": &req.decode,
            "backend": backend_identity,
        });
        let bytes = serde_json::to_vec(&canonical).expect("request is serializable");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hex::encode(hasher.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<AgentResponse> {
        let path = self.path(key);
        let bytes = fs::read(&path).ok()?;
        match serde_json::from_slice(&bytes) {
            Ok(resp) => Some(resp),
            Err(e) => {
                log::warn!("corrupt cache entry {}: {e}; treating as miss", path.display());
                None
            }
        }
    }

    /// Writes via a temp file and rename so concurrent readers never see a
    /// partial entry.
    pub fn put(&self, key: &str, resp: &AgentResponse) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(resp)
            .map_err(|e| RahError::Decode(format!("cannot encode response: {e}")))?;
        let path = self.path(key);
        let tmp = self.dir.join(format!(".{key}.tmp-{}", std::process::id()));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// Wraps any backend with the content-addressed cache.
pub struct CachedBackend<B: Backend> {
    inner: B,
    cache: ResponseCache,
}

impl<B: Backend> CachedBackend<B> {
    pub fn new(inner: B, cache: ResponseCache) -> Self {
        CachedBackend { inner, cache }
    }
}

impl<B: Backend> Backend for CachedBackend<B> {
    fn complete(&self, req: &AgentRequest) -> Result<AgentResponse> {
        let key = ResponseCache::key(req, &self.inner.identity());
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let resp = self.inner.complete(req)?;
        self.cache.put(&key, &resp)?;
        Ok(resp)
    }

    fn identity(&self) -> String {
        self.inner.identity()
    }
}
