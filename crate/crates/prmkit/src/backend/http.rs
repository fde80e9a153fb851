//! Live client for completions-style HTTP endpoints.
//!
//! Speaks the `/v1/completions` wire format: one POST per request, bounded
//! in-flight concurrency, bounded exponential backoff on transport failures
//! and retryable statuses. Continuation scoring uses echo-with-logprobs over
//! `prompt + candidate` and sums the logprobs of tokens past the prompt
//! boundary.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{
    check_candidates, Backend, BackendError, BackendStats, CompletionRequest, CompletionResponse,
    ContinuationScore, FinishReason,
};

/// Credential environment variable consulted when no key is set explicitly.
pub const API_KEY_ENV: &str = "PRMKIT_API_KEY";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    /// Per-request timeout. Long CoTs need long timeouts.
    pub timeout_secs: u64,
    /// Retries after the initial attempt.
    pub retries: u32,
    /// Base backoff delay, doubled per attempt.
    pub backoff_ms: u64,
    /// Bounded in-flight request concurrency.
    pub max_in_flight: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: String::new(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            timeout_secs: 600,
            retries: 3,
            backoff_ms: 250,
            max_in_flight: 8,
        }
    }
}

struct Gate {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Self {
        Gate {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut permits = self.permits.lock().expect("gate lock");
        while *permits == 0 {
            permits = self.cv.wait(permits).expect("gate wait");
        }
        *permits -= 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.gate.permits.lock().expect("gate lock") += 1;
        self.gate.cv.notify_one();
    }
}

#[derive(Debug, Deserialize)]
struct WireLogprobs {
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    text_offset: Vec<usize>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    #[serde(default)]
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<WireLogprobs>,
}

#[derive(Debug, Deserialize)]
struct WireUsage {
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

/// Live completions endpoint client.
pub struct HttpBackend {
    cfg: HttpConfig,
    agent: ureq::Agent,
    gate: Gate,
    requests: AtomicU64,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Self {
        let agent = ureq::config::Config::builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .build()
            .new_agent();
        let gate = Gate::new(cfg.max_in_flight);
        HttpBackend {
            cfg,
            agent,
            gate,
            requests: AtomicU64::new(0),
        }
    }

    fn completions_url(&self) -> String {
        format!("{}/v1/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    fn retryable_status(status: u16) -> bool {
        status == 429 || (500..600).contains(&status)
    }

    /// POST with bounded exponential backoff; retryable failures are retried
    /// `cfg.retries` times and then surfaced as `Transport`.
    fn post_json(&self, body: &serde_json::Value) -> Result<WireResponse, BackendError> {
        let _permit = self.gate.acquire();
        self.requests.fetch_add(1, Ordering::Relaxed);
        let url = self.completions_url();
        let payload = body.to_string();
        let attempts = self.cfg.retries + 1;
        let mut last_failure = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            let mut req = self.agent.post(&url).content_type("application/json");
            if let Some(key) = &self.cfg.api_key {
                req = req.header("authorization", format!("Bearer {key}"));
            }
            match req.send(payload.as_str()) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| BackendError::Transport {
                            attempts: attempt + 1,
                            message: format!("reading body: {e}"),
                        })?;
                    if (200..300).contains(&status) {
                        return serde_json::from_str(&text).map_err(|e| BackendError::Refusal {
                            status,
                            message: format!("unparseable response: {e}"),
                        });
                    }
                    if Self::retryable_status(status) {
                        last_failure = format!("status {status}");
                        continue;
                    }
                    return Err(BackendError::Refusal {
                        status,
                        message: text.chars().take(200).collect(),
                    });
                }
                Err(err) => {
                    last_failure = err.to_string();
                    continue;
                }
            }
        }
        Err(BackendError::Transport {
            attempts,
            message: last_failure,
        })
    }
}

fn parse_finish(reason: Option<&str>) -> FinishReason {
    match reason {
        Some("stop") => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        _ => FinishReason::Other,
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let mut body = json!({
            "model": request.model,
            "prompt": request.prompt,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "n": request.num_samples,
        });
        if let Some(stop) = &request.stop {
            body["stop"] = json!(stop);
        }
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        if request.want_logprobs {
            body["logprobs"] = json!(0);
        }
        let wire = self.post_json(&body)?;
        let n = wire.choices.len();
        let total_tokens = wire.usage.as_ref().map(|u| u.completion_tokens).unwrap_or(0);
        let mut out = CompletionResponse {
            texts: Vec::with_capacity(n),
            token_counts: Vec::with_capacity(n),
            finish_reasons: Vec::with_capacity(n),
        };
        for choice in &wire.choices {
            // Per-choice counts come from logprob token lists when present;
            // otherwise the usage total is split evenly.
            let tokens = match &choice.logprobs {
                Some(lp) if !lp.tokens.is_empty() => lp.tokens.len() as u64,
                _ => {
                    if n > 0 {
                        total_tokens / n as u64
                    } else {
                        0
                    }
                }
            };
            out.texts.push(choice.text.clone());
            out.token_counts.push(tokens);
            out.finish_reasons.push(parse_finish(choice.finish_reason.as_deref()));
        }
        Ok(out)
    }

    fn score_continuations(
        &self,
        model: &str,
        prompt: &str,
        candidates: &[String],
    ) -> Result<Vec<ContinuationScore>, BackendError> {
        check_candidates(candidates);
        let mut scores = Vec::with_capacity(candidates.len());
        for candidate in candidates {
            let body = json!({
                "model": model,
                "prompt": format!("{prompt}{candidate}"),
                "max_tokens": 0,
                "temperature": 0.0,
                "echo": true,
                "logprobs": 0,
            });
            let wire = self.post_json(&body)?;
            let choice = wire.choices.first().ok_or_else(|| {
                BackendError::UnsupportedBackend("endpoint returned no choices".into())
            })?;
            let lp = choice.logprobs.as_ref().ok_or_else(|| {
                BackendError::UnsupportedBackend(
                    "endpoint does not return echoed logprobs".into(),
                )
            })?;
            let boundary = prompt.len();
            let mut total = 0.0;
            for (i, token_lp) in lp.token_logprobs.iter().enumerate() {
                let offset = lp.text_offset.get(i).copied().unwrap_or(0);
                if offset >= boundary {
                    total += token_lp.unwrap_or(0.0);
                }
            }
            scores.push(ContinuationScore {
                candidate: candidate.clone(),
                logprob: total.min(0.0),
            });
        }
        Ok(scores)
    }

    fn identity(&self) -> String {
        format!("http:{}", self.cfg.base_url)
    }

    fn stats(&self) -> BackendStats {
        BackendStats {
            requests: self.requests.load(Ordering::Relaxed),
            cache_hits: 0,
        }
    }
}
