//! Deterministic scripted mock backend.
//!
//! Responses are a pure function of `(script, seed, request)`: the same
//! request against the same script and seed yields byte-identical output
//! across runs and worker counts.
//!
//! A script is a JSON document with optional `default_response` and a list
//! of `entries`, tried in order (first match wins):
//!
//! ```json
//! {
//!   "entries": [
//!     {"kind": "pattern", "pattern": "Verify", "responses": [
//!         {"text": "Step 1 ... \\boxed{correct}", "token_count": 120}
//!     ]},
//!     {"kind": "prefix_table", "table": {"": ["step a", "step b"],
//!                                        "step a": ["step aa \\boxed{4}"]}},
//!     {"kind": "logprob_table", "pattern": "Is the solution correct?",
//!      "logprobs": {"yes": -0.105, "no": -2.302}}
//!   ],
//!   "default_response": {"text": "ok"}
//! }
//! ```
//!
//! - `pattern` entries match when the prompt contains `pattern`; with `m`
//!   scripted responses, sample `i` of a request with effective seed `s`
//!   returns variant `(s + i) mod m`, so distinct seeds rotate through the
//!   variants in a fixed order.
//! - `prefix_table` entries serve next-step continuations for beam search:
//!   the longest table key that is a suffix of the (right-trimmed) prompt
//!   selects a candidate list; sample `i` returns candidate `i mod len`.
//!   An empty-string key acts as the root and matches any prompt.
//! - `logprob_table` entries serve `score_continuations`; candidates absent
//!   from the table get probability zero (logprob `-inf`).
//!
//! Unseeded requests derive an effective seed from the backend seed and the
//! prompt, keeping them deterministic too.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{
    check_candidates, Backend, BackendError, BackendStats, CompletionRequest, CompletionResponse,
    ContinuationScore, FinishReason,
};
use crate::util::{derive_seed, sha256_hex};

/// One canned completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<FinishReason>,
}

impl ScriptResponse {
    pub fn text(text: impl Into<String>) -> Self {
        ScriptResponse {
            text: text.into(),
            token_count: None,
            finish_reason: None,
        }
    }

    pub fn with_tokens(mut self, token_count: u64) -> Self {
        self.token_count = Some(token_count);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScriptEntry {
    Pattern {
        pattern: String,
        responses: Vec<ScriptResponse>,
    },
    PrefixTable {
        table: IndexMap<String, Vec<String>>,
    },
    LogprobTable {
        pattern: String,
        logprobs: IndexMap<String, f64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub entries: Vec<ScriptEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_response: Option<ScriptResponse>,
}

impl MockScript {
    pub fn new() -> Self {
        MockScript::default()
    }

    pub fn with_pattern(mut self, pattern: impl Into<String>, responses: Vec<ScriptResponse>) -> Self {
        self.entries.push(ScriptEntry::Pattern {
            pattern: pattern.into(),
            responses,
        });
        self
    }

    pub fn with_prefix_table(mut self, table: IndexMap<String, Vec<String>>) -> Self {
        self.entries.push(ScriptEntry::PrefixTable { table });
        self
    }

    pub fn with_logprobs(mut self, pattern: impl Into<String>, pairs: &[(&str, f64)]) -> Self {
        self.entries.push(ScriptEntry::LogprobTable {
            pattern: pattern.into(),
            logprobs: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        });
        self
    }

    pub fn with_default(mut self, response: ScriptResponse) -> Self {
        self.default_response = Some(response);
        self
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::BadScript(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| BackendError::BadScript(format!("{}: {e}", path.display())))
    }

    fn validate(&self) -> Result<(), BackendError> {
        for entry in &self.entries {
            match entry {
                ScriptEntry::Pattern { pattern, responses } => {
                    if responses.is_empty() {
                        return Err(BackendError::BadScript(format!(
                            "pattern entry {pattern:?} has no responses"
                        )));
                    }
                }
                ScriptEntry::LogprobTable { pattern, logprobs } => {
                    for (cand, lp) in logprobs {
                        if *lp > 0.0 || lp.is_nan() {
                            return Err(BackendError::BadScript(format!(
                                "logprob entry {pattern:?} gives candidate {cand:?} an invalid logprob {lp}"
                            )));
                        }
                    }
                }
                ScriptEntry::PrefixTable { .. } => {}
            }
        }
        Ok(())
    }
}

fn whitespace_token_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Truncate to `max_tokens` whitespace tokens when the (reported) count
/// exceeds the budget.
fn budgeted(text: &str, stated_tokens: Option<u64>, max_tokens: u32) -> (String, u64, FinishReason) {
    let max = max_tokens as u64;
    let stated = stated_tokens.unwrap_or_else(|| whitespace_token_count(text));
    if stated > max {
        let truncated: Vec<&str> = text.split_whitespace().take(max_tokens as usize).collect();
        (truncated.join(" "), max, FinishReason::Length)
    } else {
        (text.to_string(), stated, FinishReason::Stop)
    }
}

/// Scripted deterministic backend handle.
pub struct MockBackend {
    script: MockScript,
    seed: u64,
    requests: AtomicU64,
    identity: String,
}

impl MockBackend {
    pub fn new(script: MockScript, seed: u64) -> Result<Self, BackendError> {
        script.validate()?;
        let canonical = serde_json::to_string(&script).expect("script serializes");
        let identity = format!("mock:{}:{seed}", &sha256_hex(canonical.as_bytes())[..12]);
        Ok(MockBackend {
            script,
            seed,
            requests: AtomicU64::new(0),
            identity,
        })
    }

    pub fn from_file(path: &Path, seed: u64) -> Result<Self, BackendError> {
        MockBackend::new(MockScript::from_file(path)?, seed)
    }

    fn effective_seed(&self, request: &CompletionRequest) -> u64 {
        request
            .seed
            .unwrap_or_else(|| derive_seed(self.seed, &request.prompt))
    }

    fn lookup_completion(&self, request: &CompletionRequest) -> Option<CompletionResponse> {
        for entry in &self.script.entries {
            match entry {
                ScriptEntry::Pattern { pattern, responses } => {
                    if request.prompt.contains(pattern.as_str()) {
                        return Some(self.pattern_response(request, responses));
                    }
                }
                ScriptEntry::PrefixTable { table } => {
                    if let Some(children) = longest_suffix_match(table, &request.prompt) {
                        return Some(prefix_response(request, children));
                    }
                }
                ScriptEntry::LogprobTable { .. } => {}
            }
        }
        self.script
            .default_response
            .as_ref()
            .map(|resp| self.pattern_response(request, std::slice::from_ref(resp)))
    }

    fn pattern_response(
        &self,
        request: &CompletionRequest,
        responses: &[ScriptResponse],
    ) -> CompletionResponse {
        let m = responses.len() as u64;
        let seed = self.effective_seed(request);
        let mut out = CompletionResponse {
            texts: Vec::new(),
            token_counts: Vec::new(),
            finish_reasons: Vec::new(),
        };
        for i in 0..request.num_samples as u64 {
            let variant = &responses[(((seed % m) + i) % m) as usize];
            let (text, tokens, mut finish) =
                budgeted(&variant.text, variant.token_count, request.max_tokens);
            if finish == FinishReason::Stop {
                if let Some(explicit) = variant.finish_reason {
                    finish = explicit;
                }
            }
            out.texts.push(text);
            out.token_counts.push(tokens);
            out.finish_reasons.push(finish);
        }
        out
    }
}

fn longest_suffix_match<'t>(
    table: &'t IndexMap<String, Vec<String>>,
    prompt: &str,
) -> Option<&'t Vec<String>> {
    let trimmed = prompt.trim_end();
    table
        .iter()
        .filter(|(key, _)| trimmed.ends_with(key.trim_end()))
        .max_by_key(|(key, _)| key.trim_end().len())
        .map(|(_, children)| children)
}

fn prefix_response(request: &CompletionRequest, children: &[String]) -> CompletionResponse {
    let mut out = CompletionResponse {
        texts: Vec::new(),
        token_counts: Vec::new(),
        finish_reasons: Vec::new(),
    };
    for i in 0..request.num_samples as usize {
        let text = if children.is_empty() {
            String::new()
        } else {
            children[i % children.len()].clone()
        };
        let (text, tokens, finish) = budgeted(&text, None, request.max_tokens);
        out.texts.push(text);
        out.token_counts.push(tokens);
        out.finish_reasons.push(finish);
    }
    out
}

impl Backend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        self.lookup_completion(request).ok_or_else(|| {
            BackendError::ScriptMiss(format!(
                "prompt starting {:?}",
                request.prompt.chars().take(60).collect::<String>()
            ))
        })
    }

    fn score_continuations(
        &self,
        _model: &str,
        prompt: &str,
        candidates: &[String],
    ) -> Result<Vec<ContinuationScore>, BackendError> {
        check_candidates(candidates);
        self.requests.fetch_add(1, Ordering::Relaxed);
        for entry in &self.script.entries {
            if let ScriptEntry::LogprobTable { pattern, logprobs } = entry {
                if prompt.contains(pattern.as_str()) {
                    return Ok(candidates
                        .iter()
                        .map(|cand| ContinuationScore {
                            candidate: cand.clone(),
                            logprob: logprobs.get(cand).copied().unwrap_or(f64::NEG_INFINITY),
                        })
                        .collect());
                }
            }
        }
        Err(BackendError::ScriptMiss(format!(
            "no logprob table matches prompt starting {:?}",
            prompt.chars().take(60).collect::<String>()
        )))
    }

    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn stats(&self) -> BackendStats {
        BackendStats {
            requests: self.requests.load(Ordering::Relaxed),
            cache_hits: 0,
        }
    }
}
