//! Parsing, validation, and cleaning of verification chains-of-thought.
//!
//! A verification CoT critiques a candidate solution and emits a boxed
//! verdict (`\boxed{correct}` / `\boxed{incorrect}`) per step, optionally
//! followed by a final boxed yes/no judgment. This module extracts those
//! labels, classifies defective chains, and applies the preprocessing rules
//! used to turn raw chains into training targets.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

use crate::types::StepLabel;

/// Opening marker designating verification reasoning.
pub const THINK_OPEN: &str = "<think>";
/// Closing marker designating verification reasoning.
pub const THINK_CLOSE: &str = "</think>";

#[derive(Debug, Error)]
pub enum CotError {
    #[error("no boxed verdict found in chain text")]
    NoVerdictFound,
}

/// A per-step verdict extracted from a chain.
///
/// `index` is the 1-based position of the verdict in document order; `span`
/// is the byte range of the boxed marker in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepVerdict {
    pub index: usize,
    pub label: StepLabel,
    pub span: (usize, usize),
}

/// Final yes/no judgment extracted from a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalVerdict {
    Yes,
    No,
}

/// Why a chain is (in)valid. Exactly one kind per chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStatusKind {
    Valid,
    MissingLabels,
    Malformed,
    Overlong,
    RepetitionSuspect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStatus {
    pub kind: ChainStatusKind,
    pub detail: String,
}

impl ChainStatus {
    pub fn valid() -> Self {
        ChainStatus {
            kind: ChainStatusKind::Valid,
            detail: String::new(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.kind == ChainStatusKind::Valid
    }
}

/// Raw verification CoT text plus everything parsed out of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationChain {
    pub prefix_id: String,
    pub raw_text: String,
    pub verdicts: Vec<StepVerdict>,
    pub final_verdict: Option<FinalVerdict>,
    pub token_count: u64,
    pub status: ChainStatus,
}

/// Accepted boxed-notation spellings and diagnostic thresholds.
///
/// The default set accepts case variants and interior whitespace, e.g.
/// `\boxed{ Correct }`; the first spelling of each list is the canonical
/// form used when rewriting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParserConfig {
    pub correct_forms: Vec<String>,
    pub incorrect_forms: Vec<String>,
    pub yes_forms: Vec<String>,
    pub no_forms: Vec<String>,
    pub case_insensitive: bool,
    /// n-gram size for the repetition diagnostic.
    pub repetition_ngram: usize,
    /// Repetition ratio above which a chain is flagged. Diagnostic only;
    /// never used to alter scores.
    pub repetition_threshold: f64,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            correct_forms: vec!["correct".into()],
            incorrect_forms: vec!["incorrect".into()],
            yes_forms: vec!["yes".into()],
            no_forms: vec!["no".into()],
            case_insensitive: true,
            repetition_ngram: 8,
            repetition_threshold: 0.5,
        }
    }
}

/// Compiled chain parser. Pure over immutable inputs; safe to share across
/// any number of concurrent workers.
#[derive(Debug, Clone)]
pub struct ChainParser {
    config: ParserConfig,
    step_re: Regex,
    final_re: Regex,
    any_re: Regex,
}

fn boxed_regex(forms: &[&str], case_insensitive: bool) -> Regex {
    let alternation = forms
        .iter()
        .map(|f| regex::escape(f))
        .collect::<Vec<_>>()
        .join("|");
    let flags = if case_insensitive { "(?i)" } else { "" };
    let pattern = format!(r"{flags}\\boxed\{{\s*({alternation})\s*\}}");
    Regex::new(&pattern).expect("verdict pattern compiles")
}

impl Default for ChainParser {
    fn default() -> Self {
        ChainParser::new(ParserConfig::default())
    }
}

impl ChainParser {
    /// Shared default-configured parser; avoids recompiling the verdict
    /// patterns on hot paths.
    pub fn shared() -> &'static ChainParser {
        static PARSER: std::sync::OnceLock<ChainParser> = std::sync::OnceLock::new();
        PARSER.get_or_init(ChainParser::default)
    }

    pub fn new(config: ParserConfig) -> Self {
        let step_forms: Vec<&str> = config
            .correct_forms
            .iter()
            .chain(config.incorrect_forms.iter())
            .map(String::as_str)
            .collect();
        let final_forms: Vec<&str> = config
            .yes_forms
            .iter()
            .chain(config.no_forms.iter())
            .map(String::as_str)
            .collect();
        let all_forms: Vec<&str> = step_forms.iter().chain(final_forms.iter()).copied().collect();
        ChainParser {
            step_re: boxed_regex(&step_forms, config.case_insensitive),
            final_re: boxed_regex(&final_forms, config.case_insensitive),
            any_re: boxed_regex(&all_forms, config.case_insensitive),
            config,
        }
    }

    pub fn config(&self) -> &ParserConfig {
        &self.config
    }

    fn matches_form(&self, word: &str, forms: &[String]) -> bool {
        forms.iter().any(|f| {
            if self.config.case_insensitive {
                f.eq_ignore_ascii_case(word)
            } else {
                f == word
            }
        })
    }

    /// Extract every boxed correct/incorrect marker in document order.
    ///
    /// Indices are 1-based occurrence positions, so they are strictly
    /// increasing by construction. Returns an empty vector on no match.
    pub fn parse_step_verdicts(&self, text: &str) -> Vec<StepVerdict> {
        self.step_re
            .captures_iter(text)
            .enumerate()
            .map(|(i, cap)| {
                let whole = cap.get(0).expect("match 0 exists");
                let word = cap.get(1).expect("group 1 exists").as_str().trim();
                let label = if self.matches_form(word, &self.config.correct_forms) {
                    StepLabel::Correct
                } else {
                    StepLabel::Incorrect
                };
                StepVerdict {
                    index: i + 1,
                    label,
                    span: (whole.start(), whole.end()),
                }
            })
            .collect()
    }

    /// The last boxed yes/no marker, if any. Later markers win.
    pub fn parse_final_verdict(&self, text: &str) -> Option<FinalVerdict> {
        self.final_re.captures_iter(text).last().map(|cap| {
            let word = cap.get(1).expect("group 1 exists").as_str().trim();
            if self.matches_form(word, &self.config.yes_forms) {
                FinalVerdict::Yes
            } else {
                FinalVerdict::No
            }
        })
    }

    /// Classify a chain against the expected step count and token budget.
    ///
    /// Defect priority: overlong > malformed > missing_labels >
    /// repetition_suspect, so every chain has one deterministic status.
    pub fn classify_chain(
        &self,
        text: &str,
        expected_steps: usize,
        max_tokens: u64,
        token_count: u64,
    ) -> ChainStatus {
        assert!(max_tokens > 0, "max_tokens must be positive");
        if token_count > max_tokens {
            return ChainStatus {
                kind: ChainStatusKind::Overlong,
                detail: format!("{token_count} tokens exceeds budget {max_tokens}"),
            };
        }
        let verdicts = self.parse_step_verdicts(text);
        if verdicts.len() > expected_steps {
            return ChainStatus {
                kind: ChainStatusKind::Malformed,
                detail: format!(
                    "{} step verdicts for {expected_steps} expected steps",
                    verdicts.len()
                ),
            };
        }
        if verdicts.len() < expected_steps {
            return ChainStatus {
                kind: ChainStatusKind::MissingLabels,
                detail: format!(
                    "{} step verdicts for {expected_steps} expected steps",
                    verdicts.len()
                ),
            };
        }
        let ratio = detect_repetition(text, self.config.repetition_ngram);
        if ratio > self.config.repetition_threshold {
            return ChainStatus {
                kind: ChainStatusKind::RepetitionSuspect,
                detail: format!(
                    "repetition ratio {ratio:.3} exceeds {:.3}",
                    self.config.repetition_threshold
                ),
            };
        }
        ChainStatus::valid()
    }

    /// Canonical spelling for a matched verdict word.
    fn canonical_word(&self, word: &str) -> String {
        let w = word.trim();
        let canon_of = |forms: &[String]| forms[0].to_lowercase();
        if self.matches_form(w, &self.config.correct_forms) {
            canon_of(&self.config.correct_forms)
        } else if self.matches_form(w, &self.config.incorrect_forms) {
            canon_of(&self.config.incorrect_forms)
        } else if self.matches_form(w, &self.config.yes_forms) {
            canon_of(&self.config.yes_forms)
        } else {
            canon_of(&self.config.no_forms)
        }
    }

    /// Preprocess a chain into its training form.
    ///
    /// Boxed notation variants are rewritten to the canonical spelling,
    /// content after the last verification decision (step verdict or final
    /// yes/no) is removed, and the result is wrapped in think markers.
    /// Idempotent: cleaning an already-clean chain returns it unchanged.
    pub fn clean_chain(&self, text: &str) -> Result<String, CotError> {
        let mut body = text.trim();
        if let Some(stripped) = body.strip_prefix(THINK_OPEN) {
            body = stripped;
        }
        if let Some(stripped) = body.strip_suffix(THINK_CLOSE) {
            body = stripped;
        }
        let canonical = self
            .any_re
            .replace_all(body, |cap: &regex::Captures<'_>| {
                let word = cap.get(1).expect("group 1 exists").as_str();
                format!("\\boxed{{{}}}", self.canonical_word(word))
            })
            .into_owned();
        let last_end = self
            .any_re
            .find_iter(&canonical)
            .last()
            .map(|m| m.end())
            .ok_or(CotError::NoVerdictFound)?;
        Ok(format!("{THINK_OPEN}{}{THINK_CLOSE}", &canonical[..last_end]))
    }

    /// Parse and classify a raw chain in one pass.
    pub fn analyze(
        &self,
        prefix_id: impl Into<String>,
        raw_text: impl Into<String>,
        expected_steps: usize,
        max_tokens: u64,
        token_count: u64,
    ) -> VerificationChain {
        let raw_text = raw_text.into();
        let verdicts = self.parse_step_verdicts(&raw_text);
        let final_verdict = self.parse_final_verdict(&raw_text);
        let status = self.classify_chain(&raw_text, expected_steps, max_tokens, token_count);
        VerificationChain {
            prefix_id: prefix_id.into(),
            raw_text,
            verdicts,
            final_verdict,
            token_count,
            status,
        }
    }
}

/// Repetition ratio: `1 - distinct n-grams / total n-grams` over whitespace
/// tokens; 0 for texts shorter than `ngram`.
pub fn detect_repetition(text: &str, ngram: usize) -> f64 {
    assert!(ngram >= 2, "ngram must be at least 2");
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() < ngram {
        return 0.0;
    }
    let total = tokens.len() - ngram + 1;
    let distinct: HashSet<&[&str]> = tokens.windows(ngram).collect();
    1.0 - distinct.len() as f64 / total as f64
}

/// Convenience wrappers over the shared default-configured parser.
pub fn parse_step_verdicts(text: &str) -> Vec<StepVerdict> {
    ChainParser::shared().parse_step_verdicts(text)
}

pub fn parse_final_verdict(text: &str) -> Option<FinalVerdict> {
    ChainParser::shared().parse_final_verdict(text)
}

pub fn clean_chain(text: &str) -> Result<String, CotError> {
    ChainParser::shared().clean_chain(text)
}
