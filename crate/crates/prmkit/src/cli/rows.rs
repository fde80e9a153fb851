//! JSONL row schemas and file helpers.
//!
//! All files are UTF-8, one record per line. Writers buffer the whole file
//! and write it atomically, so an interrupted run never leaves truncated
//! lines.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::cot::{ChainStatus, FinalVerdict, StepVerdict, VerificationChain};
use crate::datagen::{FilterDecision, LabeledPrefix, NeutralLabelAs, RejectReason, StatsRecord};
use crate::metrics::Predicted;
use crate::select::Problem;
use crate::types::{StepLabel, StepwiseSolution};
use crate::util::atomic_write;
use crate::verifier::Judgment;

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(line).map_err(|e| {
            CliError::Io(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut buffer = String::new();
    for row in rows {
        buffer.push_str(&serde_json::to_string(row).expect("row serializes"));
        buffer.push('\n');
    }
    atomic_write(path, buffer.as_bytes()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    atomic_write(path, text.as_bytes()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Input prefix/solution row: `{id, problem, steps, step_labels?,
/// final_answer?, answer_correct?, question_id?}` with raw integer step
/// annotations (+1/0/-1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrefixRow {
    pub id: String,
    pub problem: String,
    pub steps: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_labels: Option<Vec<i32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
}

impl PrefixRow {
    pub fn to_prefix(&self, neutral_as: NeutralLabelAs) -> LabeledPrefix {
        LabeledPrefix {
            id: self.id.clone(),
            problem: self.problem.clone(),
            steps: self.steps.clone(),
            gold_step_labels: self.step_labels.as_ref().map(|raw| {
                raw.iter()
                    .map(|r| crate::datagen::map_raw_label(*r, neutral_as))
                    .collect()
            }),
            final_answer: self.final_answer.clone(),
            answer_correct: self.answer_correct,
            question_id: self.question_id.clone(),
        }
    }

    pub fn to_solution(&self, neutral_as: NeutralLabelAs) -> StepwiseSolution {
        let prefix = self.to_prefix(neutral_as);
        StepwiseSolution {
            id: prefix.id,
            problem: prefix.problem,
            steps: prefix.steps,
            gold_step_labels: prefix.gold_step_labels,
            gold_answer: prefix.final_answer,
        }
    }

    pub fn to_problem(&self) -> Problem {
        Problem {
            id: self.id.clone(),
            problem: self.problem.clone(),
            gold_answer: self.final_answer.clone(),
        }
    }
}

/// Sampled/filtered chain row: `{prefix_id, cot, verdicts, final_verdict,
/// status, token_count, filter_decision?, reject_reason?}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainRow {
    pub prefix_id: String,
    pub cot: String,
    pub verdicts: Vec<StepVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_verdict: Option<FinalVerdict>,
    pub status: ChainStatus,
    pub token_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_decision: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reject_reason: Option<RejectReason>,
}

impl ChainRow {
    pub fn from_chain(chain: &VerificationChain) -> Self {
        ChainRow {
            prefix_id: chain.prefix_id.clone(),
            cot: chain.raw_text.clone(),
            verdicts: chain.verdicts.clone(),
            final_verdict: chain.final_verdict,
            status: chain.status.clone(),
            token_count: chain.token_count,
            filter_decision: None,
            reject_reason: None,
        }
    }

    pub fn with_decision(mut self, decision: FilterDecision) -> Self {
        match decision {
            FilterDecision::Keep => {
                self.filter_decision = Some("keep".into());
                self.reject_reason = None;
            }
            FilterDecision::Reject(reason) => {
                self.filter_decision = Some("reject".into());
                self.reject_reason = Some(reason);
            }
        }
        self
    }

    pub fn to_chain(&self) -> VerificationChain {
        VerificationChain {
            prefix_id: self.prefix_id.clone(),
            raw_text: self.cot.clone(),
            verdicts: self.verdicts.clone(),
            final_verdict: self.final_verdict,
            token_count: self.token_count,
            status: self.status.clone(),
        }
    }

    pub fn is_keep(&self) -> bool {
        self.filter_decision.as_deref() == Some("keep")
    }
}

/// Verifier score row, one per input solution, order-preserving. Per-item
/// failures land in `error` and the run continues.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRow {
    pub id: String,
    pub value: Option<f64>,
    pub method: String,
    pub chains_used: u32,
    pub rounds_used: u32,
    pub tokens_spent: u64,
    pub statuses: Vec<ChainStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judgment: Option<Judgment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Per-problem selection row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRow {
    pub id: String,
    pub chosen_answer: String,
    pub strategy: crate::select::Strategy,
    pub group_scores: indexmap::IndexMap<String, f64>,
    pub tokens_spent: u64,
    pub flops_estimate: f64,
    pub dropped_samples: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

/// ProcessBench-format gold row; `first_error_index` is -1 when no error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessBenchRow {
    pub id: String,
    #[serde(default)]
    pub problem: String,
    #[serde(default)]
    pub steps: Vec<String>,
    pub first_error_index: i64,
}

impl ProcessBenchRow {
    pub fn gold_has_error(&self) -> bool {
        self.first_error_index >= 0
    }
}

/// Prediction row joined against gold by id. Precedence: explicit
/// `predicted`, then `judgment` (yes = correct), then `value` against the
/// threshold; a row with none of them is invalid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredRow {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<Predicted>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judgment: Option<Judgment>,
}

impl PredRow {
    pub fn to_predicted(&self, threshold: f64) -> Predicted {
        if let Some(p) = self.predicted {
            return p;
        }
        if let Some(j) = self.judgment {
            return match j {
                Judgment::Yes => Predicted::Correct,
                Judgment::No => Predicted::Incorrect,
                Judgment::Invalid => Predicted::Invalid,
            };
        }
        match self.value {
            Some(v) if v >= threshold => Predicted::Correct,
            Some(_) => Predicted::Incorrect,
            None => Predicted::Invalid,
        }
    }
}

/// One scaling-curve point for `eval report`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub budget: f64,
    pub metric: f64,
}

/// pass@1 rate row for difficulty binning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassRateRow {
    pub id: String,
    pub rate: f64,
}

/// Stats input row: a training record, optionally annotated with
/// `question_id` / `answer_correct`.
#[derive(Debug, Clone, Deserialize)]
pub struct StatsRow {
    #[serde(default)]
    pub prefix_id: Option<String>,
    #[serde(default)]
    pub question_id: Option<String>,
    #[serde(default)]
    pub answer_correct: Option<bool>,
    pub step_labels: Vec<StepLabel>,
    pub token_count: u64,
}

impl StatsRow {
    pub fn to_record(&self) -> StatsRecord {
        let question_id = self
            .question_id
            .clone()
            .or_else(|| {
                self.prefix_id
                    .as_ref()
                    .map(|id| id.split('#').next().unwrap_or(id).to_string())
            })
            .unwrap_or_else(|| "unknown".to_string());
        StatsRecord {
            question_id,
            answer_correct: self.answer_correct,
            step_labels: self.step_labels.clone(),
            token_count: self.token_count,
        }
    }
}
