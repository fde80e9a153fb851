//! Uniform client for completions-style inference endpoints.
//!
//! Three implementations sit behind the [`Backend`] trait: a live HTTP
//! client ([`http::HttpBackend`]), a deterministic scripted mock
//! ([`mock::MockBackend`]) for tests and desk-scale runs, and a
//! content-addressed cache wrapper ([`cache::CachedBackend`]) that can wrap
//! either.

pub mod cache;
pub mod http;
pub mod mock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::CachedBackend;
pub use http::{HttpBackend, HttpConfig};
pub use mock::{MockBackend, MockScript, ScriptResponse};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend refused request (status {status}): {message}")]
    Refusal { status: u16, message: String },
    #[error("no scoring pathway available: {0}")]
    UnsupportedBackend(String),
    #[error("mock script has no entry matching request: {0}")]
    ScriptMiss(String),
    #[error("invalid mock script: {0}")]
    BadScript(String),
    #[error("cache failure: {0}")]
    CacheIo(String),
}

/// Parameters of one completions call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop: Option<Vec<String>>,
    pub num_samples: u32,
    pub seed: Option<u64>,
    pub want_logprobs: bool,
}

impl CompletionRequest {
    pub fn new(model: impl Into<String>, prompt: impl Into<String>, max_tokens: u32) -> Self {
        CompletionRequest {
            model: model.into(),
            prompt: prompt.into(),
            max_tokens,
            temperature: 0.0,
            stop: None,
            num_samples: 1,
            seed: None,
            want_logprobs: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

/// One batch of completions; all three sequences have equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub texts: Vec<String>,
    pub token_counts: Vec<u64>,
    pub finish_reasons: Vec<FinishReason>,
}

impl CompletionResponse {
    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }
}

/// Natural-log probability of a candidate continuation given a prompt.
///
/// `logprob` may be `-inf` for zero-mass candidates; the serde
/// representation keeps non-finite values lossless (JSON has no infinities).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationScore {
    pub candidate: String,
    #[serde(with = "lossless_f64")]
    pub logprob: f64,
}

mod lossless_f64 {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            serializer.serialize_f64(*v)
        } else if v.is_nan() {
            serializer.serialize_str("nan")
        } else if *v > 0.0 {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) => match s.as_str() {
                "nan" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(D::Error::custom(format!("invalid logprob {other:?}"))),
            },
        }
    }
}

/// Request counters for run manifests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendStats {
    /// Calls that reached this backend (for a cache wrapper: forwarded misses).
    pub requests: u64,
    /// Calls served from the cache without touching the inner backend.
    pub cache_hits: u64,
}

/// A completions-style inference backend. Handles are shareable across
/// workers; all operations are safe for concurrent use.
pub trait Backend: Send + Sync {
    /// Run one completion request, returning `num_samples` samples.
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;

    /// Log-probability of each candidate as the continuation of `prompt`.
    ///
    /// Candidates must be nonempty and pairwise distinct. Results come back
    /// in candidate order.
    fn score_continuations(
        &self,
        model: &str,
        prompt: &str,
        candidates: &[String],
    ) -> Result<Vec<ContinuationScore>, BackendError>;

    /// Stable identity string for run manifests.
    fn identity(&self) -> String;

    /// Snapshot of request counters.
    fn stats(&self) -> BackendStats;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }

    fn score_continuations(
        &self,
        model: &str,
        prompt: &str,
        candidates: &[String],
    ) -> Result<Vec<ContinuationScore>, BackendError> {
        (**self).score_continuations(model, prompt, candidates)
    }

    fn identity(&self) -> String {
        (**self).identity()
    }

    fn stats(&self) -> BackendStats {
        (**self).stats()
    }
}

impl Backend for Box<dyn Backend> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }

    fn score_continuations(
        &self,
        model: &str,
        prompt: &str,
        candidates: &[String],
    ) -> Result<Vec<ContinuationScore>, BackendError> {
        (**self).score_continuations(model, prompt, candidates)
    }

    fn identity(&self) -> String {
        (**self).identity()
    }

    fn stats(&self) -> BackendStats {
        (**self).stats()
    }
}

pub(crate) fn check_candidates(candidates: &[String]) {
    assert!(!candidates.is_empty(), "candidates must be nonempty");
    for (i, a) in candidates.iter().enumerate() {
        for b in &candidates[i + 1..] {
            assert_ne!(a, b, "candidates must be pairwise distinct");
        }
    }
}
