//! Synthetic verification-CoT pipeline: sample chains for labeled solution
//! prefixes, filter them (process-based or outcome-based), balance final
//! answer correctness, finalize into training records, create Monte Carlo
//! silver step labels, and report dataset statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::{canonical_final_answer, canonicalize_answer};
use crate::backend::{Backend, BackendError, CompletionRequest};
use crate::cot::{ChainParser, VerificationChain};
use crate::prompts::{continuation_prompt, verification_prompt, PromptTemplate};
use crate::types::StepLabel;
use crate::util::{derive_seed, par_map};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("empty input")]
    EmptyInput,
    #[error("prefix {0} has no gold step labels")]
    MissingGoldLabels(String),
    #[error("prefix {0} has no gold final answer")]
    MissingGoldAnswer(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// A problem plus solution steps with gold step labels from the source
/// annotation, after mapping raw {+1, 0, -1} annotations onto
/// correct/incorrect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrefix {
    pub id: String,
    pub problem: String,
    pub steps: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_step_labels: Option<Vec<StepLabel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
}

impl LabeledPrefix {
    /// Question identity for dataset statistics: explicit `question_id`, or
    /// the prefix id up to a `#` suffix.
    pub fn question(&self) -> String {
        self.question_id
            .clone()
            .unwrap_or_else(|| self.id.split('#').next().unwrap_or(&self.id).to_string())
    }
}

/// How a raw integer step annotation maps to a label. Neutral (0) counts as
/// acceptable by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeutralLabelAs {
    Correct,
    Incorrect,
}

pub fn map_raw_label(raw: i32, neutral_as: NeutralLabelAs) -> StepLabel {
    match raw {
        r if r > 0 => StepLabel::Correct,
        0 => match neutral_as {
            NeutralLabelAs::Correct => StepLabel::Correct,
            NeutralLabelAs::Incorrect => StepLabel::Incorrect,
        },
        _ => StepLabel::Incorrect,
    }
}

/// Chain sampling parameters: 4 chains per prefix at temperature 0.1 by
/// default, a generation budget, and the token budget used when classifying
/// sampled chains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub model: String,
    pub n_per_prefix: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    pub classify_max_tokens: u64,
    pub seed: u64,
    pub max_in_flight: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            model: "verifier".into(),
            n_per_prefix: 4,
            temperature: 0.1,
            max_tokens: 8192,
            classify_max_tokens: 4096,
            seed: 0,
            max_in_flight: 8,
        }
    }
}

/// Sampled chains plus per-prefix failures (failures are recorded, not fatal).
#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub chains: Vec<VerificationChain>,
    pub failures: Vec<(String, String)>,
}

/// Sample `n_per_prefix` verification chains for every prefix.
pub fn sample_chains<B: Backend>(
    backend: &B,
    prefixes: &[LabeledPrefix],
    cfg: &SamplerConfig,
) -> Result<SampleOutcome, DatagenError> {
    if prefixes.is_empty() {
        return Err(DatagenError::EmptyInput);
    }
    let parser = ChainParser::shared();
    let template = PromptTemplate::default();
    let results = par_map(prefixes, cfg.max_in_flight, |_, prefix| {
        let prompt = verification_prompt(&template, &prefix.problem, &prefix.steps);
        let request = CompletionRequest {
            temperature: cfg.temperature,
            num_samples: cfg.n_per_prefix,
            seed: Some(derive_seed(cfg.seed, &format!("sample:{}", prefix.id))),
            ..CompletionRequest::new(&cfg.model, prompt, cfg.max_tokens)
        };
        backend.complete(&request)
    });
    let mut outcome = SampleOutcome {
        chains: Vec::new(),
        failures: Vec::new(),
    };
    for (prefix, result) in prefixes.iter().zip(results) {
        match result {
            Ok(response) => {
                for (text, tokens) in response.texts.iter().zip(&response.token_counts) {
                    outcome.chains.push(parser.analyze(
                        &prefix.id,
                        text.clone(),
                        prefix.steps.len(),
                        cfg.classify_max_tokens,
                        *tokens,
                    ));
                }
            }
            Err(err) => {
                log::warn!("sampling failed for prefix {}: {err}", prefix.id);
                outcome.failures.push((prefix.id.clone(), err.to_string()));
            }
        }
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Format,
    Mismatch,
    Overlong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision", content = "reason")]
pub enum FilterDecision {
    Keep,
    Reject(RejectReason),
}

impl FilterDecision {
    pub fn is_keep(&self) -> bool {
        matches!(self, FilterDecision::Keep)
    }
}

/// Process-based filtering: keep a chain iff it carries exactly one verdict
/// per gold step in order, every verdict matches the gold label, and the
/// chain is within the token budget. The first failing criterion (format,
/// mismatch, overlong, in that order) names the reject reason.
pub fn process_filter(
    chain: &VerificationChain,
    gold_step_labels: &[StepLabel],
    max_tokens: u64,
) -> FilterDecision {
    if chain.verdicts.len() != gold_step_labels.len() {
        return FilterDecision::Reject(RejectReason::Format);
    }
    let mismatch = chain
        .verdicts
        .iter()
        .zip(gold_step_labels)
        .any(|(v, gold)| v.label != *gold);
    if mismatch {
        return FilterDecision::Reject(RejectReason::Mismatch);
    }
    if chain.token_count > max_tokens {
        return FilterDecision::Reject(RejectReason::Overlong);
    }
    FilterDecision::Keep
}

/// Outcome-based filtering: keep iff the last step verdict agrees with final
/// answer correctness; intermediate labels are ignored. Chains with no
/// parsable last verdict are rejected as format.
pub fn outcome_filter(chain: &VerificationChain, answer_correct: bool) -> FilterDecision {
    match chain.verdicts.last() {
        None => FilterDecision::Reject(RejectReason::Format),
        Some(last) => {
            let keep = (answer_correct && last.label == StepLabel::Correct)
                || (!answer_correct && last.label == StepLabel::Incorrect);
            if keep {
                FilterDecision::Keep
            } else {
                FilterDecision::Reject(RejectReason::Mismatch)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct BalanceOutcome<T> {
    pub kept: Vec<T>,
    pub dropped: usize,
    /// Set when the input was single-class and returned unchanged.
    pub warned: bool,
}

/// Rebalance solution-level correctness by greedily dropping later-occurring
/// records of the overrepresented class, preserving input order.
///
/// The stop condition is a class-share gap: with the default target 0.5 and
/// tolerance 0.05, the correct and incorrect shares may differ by at most
/// 0.05 (i.e. the correct share sits within target +/- tolerance/2).
pub fn balance<T: Clone>(
    items: &[T],
    is_correct: impl Fn(&T) -> bool,
    target_ratio: f64,
    tolerance: f64,
) -> BalanceOutcome<T> {
    let total_correct = items.iter().filter(|t| is_correct(t)).count();
    let total_incorrect = items.len() - total_correct;
    if total_correct == 0 || total_incorrect == 0 {
        log::warn!("balance: single-class input left unchanged");
        return BalanceOutcome {
            kept: items.to_vec(),
            dropped: 0,
            warned: true,
        };
    }
    let mut keep: Vec<bool> = vec![true; items.len()];
    let mut correct = total_correct;
    let mut incorrect = total_incorrect;
    loop {
        let ratio = correct as f64 / (correct + incorrect) as f64;
        if (ratio - target_ratio).abs() <= tolerance / 2.0 {
            break;
        }
        let drop_correct = ratio > target_ratio;
        if (drop_correct && correct <= 1) || (!drop_correct && incorrect <= 1) {
            break;
        }
        let victim = items
            .iter()
            .enumerate()
            .rev()
            .find(|(i, t)| keep[*i] && is_correct(t) == drop_correct)
            .map(|(i, _)| i)
            .expect("class count is positive");
        keep[victim] = false;
        if drop_correct {
            correct -= 1;
        } else {
            incorrect -= 1;
        }
    }
    let kept: Vec<T> = items
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(t, _)| t.clone())
        .collect();
    BalanceOutcome {
        dropped: items.len() - kept.len(),
        kept,
        warned: false,
    }
}

/// A cleaned, think-wrapped verification CoT ready for an external trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub prefix_id: String,
    pub input_text: String,
    pub target_text: String,
    pub step_labels: Vec<StepLabel>,
    pub token_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_correct: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct FinalizeOutcome {
    pub records: Vec<TrainingRecord>,
    /// Chains whose cleaned text failed the round-trip check, with reasons.
    pub dropped: Vec<(String, String)>,
}

/// Clean kept chains into training records. Every emitted record's
/// `target_text` round-trips to its verified label sequence; records that
/// fail the check are dropped and logged.
pub fn finalize(items: &[(VerificationChain, LabeledPrefix)]) -> FinalizeOutcome {
    let parser = ChainParser::shared();
    let template = PromptTemplate::default();
    let mut outcome = FinalizeOutcome {
        records: Vec::new(),
        dropped: Vec::new(),
    };
    for (chain, prefix) in items {
        let verified: Vec<StepLabel> = chain.verdicts.iter().map(|v| v.label).collect();
        let target_text = match parser.clean_chain(&chain.raw_text) {
            Ok(text) => text,
            Err(err) => {
                log::warn!("finalize dropped {}: {err}", chain.prefix_id);
                outcome.dropped.push((chain.prefix_id.clone(), err.to_string()));
                continue;
            }
        };
        let round_trip: Vec<StepLabel> = parser
            .parse_step_verdicts(&target_text)
            .iter()
            .map(|v| v.label)
            .collect();
        if round_trip != verified {
            log::warn!("finalize dropped {}: round-trip mismatch", chain.prefix_id);
            outcome
                .dropped
                .push((chain.prefix_id.clone(), "round-trip mismatch".into()));
            continue;
        }
        outcome.records.push(TrainingRecord {
            prefix_id: chain.prefix_id.clone(),
            input_text: verification_prompt(&template, &prefix.problem, &prefix.steps),
            target_text,
            step_labels: verified,
            token_count: chain.token_count,
            question_id: Some(prefix.question()),
            answer_correct: prefix.answer_correct,
        });
    }
    outcome
}

/// Rollout success rule for Monte Carlo silver labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessRule {
    /// Label the step correct if any rollout reaches the gold answer.
    AnySuccess,
    /// Label the step correct only when strictly more than half do.
    Majority,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McConfig {
    pub model: String,
    pub n_rollouts: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    pub step_delimiter: String,
    pub rule: SuccessRule,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            model: "generator".into(),
            n_rollouts: 8,
            temperature: 0.8,
            max_tokens: 2048,
            step_delimiter: "\n\n".into(),
            rule: SuccessRule::AnySuccess,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McLabel {
    pub prefix_id: String,
    pub step_index: usize,
    pub label: StepLabel,
    pub success_fraction: f64,
}

/// Silver-label one step by rolling out completions from the prefix
/// truncated after `step_index` and checking how many reach the gold answer.
pub fn mc_label<B: Backend>(
    backend: &B,
    prefix: &LabeledPrefix,
    step_index: usize,
    cfg: &McConfig,
) -> Result<McLabel, DatagenError> {
    assert!(
        step_index >= 1 && step_index <= prefix.steps.len(),
        "step_index must be within 1..=steps"
    );
    let gold = prefix
        .final_answer
        .as_deref()
        .ok_or_else(|| DatagenError::MissingGoldAnswer(prefix.id.clone()))?;
    let gold = canonicalize_answer(gold);
    let prompt = continuation_prompt(
        &prefix.problem,
        &prefix.steps[..step_index],
        &cfg.step_delimiter,
    );
    let request = CompletionRequest {
        temperature: cfg.temperature,
        num_samples: cfg.n_rollouts,
        seed: Some(derive_seed(cfg.seed, &format!("mc:{}:{step_index}", prefix.id))),
        ..CompletionRequest::new(&cfg.model, prompt, cfg.max_tokens)
    };
    let response = backend.complete(&request)?;
    let successes = response
        .texts
        .iter()
        .filter(|text| canonical_final_answer(text) == gold)
        .count();
    let success_fraction = successes as f64 / cfg.n_rollouts as f64;
    let correct = match cfg.rule {
        SuccessRule::AnySuccess => success_fraction > 0.0,
        SuccessRule::Majority => success_fraction > 0.5,
    };
    Ok(McLabel {
        prefix_id: prefix.id.clone(),
        step_index,
        label: if correct { StepLabel::Correct } else { StepLabel::Incorrect },
        success_fraction,
    })
}

/// Record view consumed by [`stats`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsRecord {
    pub question_id: String,
    pub answer_correct: Option<bool>,
    pub step_labels: Vec<StepLabel>,
    pub token_count: u64,
}

impl From<&TrainingRecord> for StatsRecord {
    fn from(record: &TrainingRecord) -> Self {
        StatsRecord {
            question_id: record
                .question_id
                .clone()
                .unwrap_or_else(|| {
                    record
                        .prefix_id
                        .split('#')
                        .next()
                        .unwrap_or(&record.prefix_id)
                        .to_string()
                }),
            answer_correct: record.answer_correct,
            step_labels: record.step_labels.clone(),
            token_count: record.token_count,
        }
    }
}

/// Dataset statistics; averages are reported to one decimal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataStats {
    pub n_solutions: usize,
    pub n_correct: usize,
    pub n_incorrect: usize,
    pub step_labels_correct: usize,
    pub step_labels_incorrect: usize,
    pub unique_questions: usize,
    pub steps_min: usize,
    pub steps_avg: f64,
    pub steps_max: usize,
    pub chain_tokens_min: u64,
    pub chain_tokens_avg: f64,
    pub chain_tokens_max: u64,
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

pub fn stats(records: &[StatsRecord]) -> Result<DataStats, DatagenError> {
    if records.is_empty() {
        return Err(DatagenError::EmptyInput);
    }
    let mut questions: std::collections::HashSet<&str> = std::collections::HashSet::new();
    let mut n_correct = 0;
    let mut n_incorrect = 0;
    let mut label_correct = 0;
    let mut label_incorrect = 0;
    let mut steps_min = usize::MAX;
    let mut steps_max = 0;
    let mut steps_total = 0usize;
    let mut tokens_min = u64::MAX;
    let mut tokens_max = 0u64;
    let mut tokens_total = 0u64;
    for record in records {
        questions.insert(&record.question_id);
        match record.answer_correct {
            Some(true) => n_correct += 1,
            Some(false) => n_incorrect += 1,
            None => {}
        }
        for label in &record.step_labels {
            match label {
                StepLabel::Correct => label_correct += 1,
                StepLabel::Incorrect => label_incorrect += 1,
            }
        }
        let n_steps = record.step_labels.len();
        steps_min = steps_min.min(n_steps);
        steps_max = steps_max.max(n_steps);
        steps_total += n_steps;
        tokens_min = tokens_min.min(record.token_count);
        tokens_max = tokens_max.max(record.token_count);
        tokens_total += record.token_count;
    }
    Ok(DataStats {
        n_solutions: records.len(),
        n_correct,
        n_incorrect,
        step_labels_correct: label_correct,
        step_labels_incorrect: label_incorrect,
        unique_questions: questions.len(),
        steps_min,
        steps_avg: round1(steps_total as f64 / records.len() as f64),
        steps_max,
        chain_tokens_min: tokens_min,
        chain_tokens_avg: round1(tokens_total as f64 / records.len() as f64),
        chain_tokens_max: tokens_max,
    })
}
