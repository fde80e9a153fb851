//! Content-addressed response cache.
//!
//! The cache key is the SHA-256 of a canonical serialization of the request
//! (fixed field order, explicit nulls), so identical requests hash
//! identically across runs. Entries live at `<cache_dir>/<hex-hash>.json`,
//! one canonical response document per file, written atomically.
//!
//! Requests with `temperature > 0` and no seed are nondeterministic and
//! bypass the cache entirely.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{
    Backend, BackendError, BackendStats, CompletionRequest, CompletionResponse, ContinuationScore,
};
use crate::util::{atomic_write, sha256_hex};

#[derive(Serialize)]
struct CompleteKey<'a> {
    op: &'static str,
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    stop: &'a Option<Vec<String>>,
    num_samples: u32,
    seed: Option<u64>,
    want_logprobs: bool,
}

#[derive(Serialize)]
struct ScoreKey<'a> {
    op: &'static str,
    model: &'a str,
    prompt: &'a str,
    candidates: &'a [String],
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum CacheEntry {
    Complete { response: CompletionResponse },
    Score { scores: Vec<ContinuationScore> },
}

/// Cache wrapper around any [`Backend`].
pub struct CachedBackend<B> {
    inner: B,
    dir: PathBuf,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<B: Backend> CachedBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Self {
        CachedBackend {
            inner,
            dir: dir.into(),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    fn entry_path(&self, key_json: &str) -> PathBuf {
        self.dir.join(format!("{}.json", sha256_hex(key_json.as_bytes())))
    }

    /// Read a cached entry; unparseable entries count as a miss and are
    /// replaced by the fresh result.
    fn read_entry(&self, path: &Path) -> Option<CacheEntry> {
        let bytes = std::fs::read(path).ok()?;
        match serde_json::from_slice(&bytes) {
            Ok(entry) => Some(entry),
            Err(err) => {
                log::warn!("corrupt cache entry {}: {err}; treating as miss", path.display());
                None
            }
        }
    }

    fn store_entry(&self, path: &Path, entry: &CacheEntry) -> Result<(), BackendError> {
        let bytes = serde_json::to_vec(entry).expect("cache entry serializes");
        atomic_write(path, &bytes).map_err(|e| BackendError::CacheIo(e.to_string()))
    }
}

fn bypasses_cache(request: &CompletionRequest) -> bool {
    request.temperature > 0.0 && request.seed.is_none()
}

impl<B: Backend> Backend for CachedBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        if bypasses_cache(request) {
            return self.inner.complete(request);
        }
        let key = serde_json::to_string(&CompleteKey {
            op: "complete",
            model: &request.model,
            prompt: &request.prompt,
            max_tokens: request.max_tokens,
            temperature: request.temperature,
            stop: &request.stop,
            num_samples: request.num_samples,
            seed: request.seed,
            want_logprobs: request.want_logprobs,
        })
        .expect("key serializes");
        let path = self.entry_path(&key);
        if let Some(CacheEntry::Complete { response }) = self.read_entry(&path) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(response);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let response = self.inner.complete(request)?;
        self.store_entry(&path, &CacheEntry::Complete { response: response.clone() })?;
        Ok(response)
    }

    fn score_continuations(
        &self,
        model: &str,
        prompt: &str,
        candidates: &[String],
    ) -> Result<Vec<ContinuationScore>, BackendError> {
        let key = serde_json::to_string(&ScoreKey {
            op: "score",
            model,
            prompt,
            candidates,
        })
        .expect("key serializes");
        let path = self.entry_path(&key);
        if let Some(CacheEntry::Score { scores }) = self.read_entry(&path) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(scores);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let scores = self.inner.score_continuations(model, prompt, candidates)?;
        self.store_entry(&path, &CacheEntry::Score { scores: scores.clone() })?;
        Ok(scores)
    }

    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn stats(&self) -> BackendStats {
        BackendStats {
            requests: self.inner.stats().requests,
            cache_hits: self.hits.load(Ordering::Relaxed),
        }
    }
}
