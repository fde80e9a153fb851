//! Evaluation metrics and report emission: two solution-level verification
//! F1 variants, invalid-judgment rate, pass@1 difficulty estimation and
//! binning, FLOP accounting, and machine-readable run reports.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::{canonical_final_answer, canonicalize_answer};
use crate::backend::{Backend, BackendError, CompletionRequest};
use crate::cot::VerificationChain;
use crate::prompts::solution_prompt;
use crate::select::{GeneratorConfig, Problem};
use crate::util::atomic_write;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("missing subset: no {0} items")]
    MissingSubset(&'static str),
    #[error("pass@1 requires a gold answer")]
    MissingGoldAnswer,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("report I/O failure: {0}")]
    IoFailure(String),
}

/// Solution-level verdict predicted by a verifier or judge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicted {
    Correct,
    Incorrect,
    Invalid,
}

/// One evaluation item: does the solution contain a mistake, and what did
/// the verifier say?
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub gold_has_error: bool,
    pub predicted: Predicted,
}

/// How `invalid` predictions enter the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidPolicy {
    /// Count as a wrong prediction for whichever class the gold demands.
    AsWrong,
    /// Drop invalid items before computing the metric.
    Exclude,
}

/// Standard binary F1 with the error class (`gold_has_error`) positive.
pub fn binary_f1(items: &[EvalItem], policy: InvalidPolicy) -> Result<f64, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for item in items {
        let predicted = match (item.predicted, policy) {
            (Predicted::Invalid, InvalidPolicy::Exclude) => continue,
            // Invalid counts against whichever class the gold demands.
            (Predicted::Invalid, InvalidPolicy::AsWrong) => {
                if item.gold_has_error {
                    Predicted::Correct
                } else {
                    Predicted::Incorrect
                }
            }
            (p, _) => p,
        };
        match (item.gold_has_error, predicted) {
            (true, Predicted::Incorrect) => tp += 1,
            (true, _) => fn_ += 1,
            (false, Predicted::Incorrect) => fp += 1,
            (false, _) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / denom as f64)
}

/// ProcessBench-style F1: harmonic mean of the accuracy on gold-erroneous
/// items and the accuracy on gold-correct items.
pub fn harmonic_subset_f1(items: &[EvalItem]) -> Result<f64, MetricsError> {
    let err_items: Vec<&EvalItem> = items.iter().filter(|i| i.gold_has_error).collect();
    let ok_items: Vec<&EvalItem> = items.iter().filter(|i| !i.gold_has_error).collect();
    if err_items.is_empty() {
        return Err(MetricsError::MissingSubset("gold-error"));
    }
    if ok_items.is_empty() {
        return Err(MetricsError::MissingSubset("gold-correct"));
    }
    let acc_err = err_items
        .iter()
        .filter(|i| i.predicted == Predicted::Incorrect)
        .count() as f64
        / err_items.len() as f64;
    let acc_ok = ok_items
        .iter()
        .filter(|i| i.predicted == Predicted::Correct)
        .count() as f64
        / ok_items.len() as f64;
    if acc_err == 0.0 || acc_ok == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * acc_err * acc_ok / (acc_err + acc_ok))
}

/// Fraction of judgments with no extractable verdict.
pub fn invalid_rate_items(items: &[EvalItem]) -> Result<f64, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let invalid = items.iter().filter(|i| i.predicted == Predicted::Invalid).count();
    Ok(invalid as f64 / items.len() as f64)
}

/// Fraction of chains whose status is not valid.
pub fn invalid_rate_chains(chains: &[VerificationChain]) -> Result<f64, MetricsError> {
    if chains.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let invalid = chains.iter().filter(|c| !c.status.is_valid()).count();
    Ok(invalid as f64 / chains.len() as f64)
}

/// pass@1 difficulty proxy: sample `n` solutions and return the fraction
/// whose canonical answer matches gold.
pub fn pass_at_1<B: Backend>(
    backend: &B,
    problem: &Problem,
    generator_cfg: &GeneratorConfig,
    n: u32,
) -> Result<f64, MetricsError> {
    let gold = problem
        .gold_answer
        .as_deref()
        .ok_or(MetricsError::MissingGoldAnswer)?;
    let gold = canonicalize_answer(gold);
    let request = CompletionRequest {
        temperature: generator_cfg.temperature,
        seed: generator_cfg.seed,
        num_samples: n,
        ..CompletionRequest::new(
            &generator_cfg.model,
            solution_prompt(&problem.problem),
            generator_cfg.max_tokens,
        )
    };
    let response = backend.complete(&request)?;
    let hits = response
        .texts
        .iter()
        .filter(|text| canonical_final_answer(text) == gold)
        .count();
    Ok(hits as f64 / n as f64)
}

/// Equal-width difficulty bins over `[0, 1]`: rate `r` maps to
/// `min(floor(r * n_bins), n_bins - 1)`.
pub fn difficulty_bins(rates: &[f64], n_bins: usize) -> Vec<usize> {
    assert!(n_bins >= 1, "n_bins must be at least 1");
    rates
        .iter()
        .map(|r| (((r * n_bins as f64).floor()) as usize).min(n_bins - 1))
        .collect()
}

/// Which model a token count belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    Verifier,
}

/// Parameter counts used for FLOP accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsModel {
    pub generator_params: f64,
    pub verifier_params: f64,
    /// Documented accounting rule; `2pt` means 2 x params x generated
    /// tokens, prefill excluded.
    pub flops_per_token_rule: String,
}

impl Default for FlopsModel {
    fn default() -> Self {
        FlopsModel {
            generator_params: 3.0e9,
            verifier_params: 1.5e9,
            flops_per_token_rule: "2pt".into(),
        }
    }
}

/// Sampling FLOPs for `generated_tokens` under the `2pt` rule.
pub fn estimate_flops(model: &FlopsModel, generated_tokens: u64, role: Role) -> f64 {
    let params = match role {
        Role::Generator => model.generator_params,
        Role::Verifier => model.verifier_params,
    };
    2.0 * params * generated_tokens as f64
}

/// One point on a scaling curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub budget: f64,
    pub metric: f64,
}

/// Machine-readable run summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub metrics: IndexMap<String, f64>,
    #[serde(default)]
    pub per_item: Vec<serde_json::Value>,
    #[serde(default)]
    pub curve: Vec<CurvePoint>,
}

/// Write `summary.json` plus a flat `curve.csv` of (budget, metric) rows
/// under `out_dir`, creating the directory as needed. Reruns with identical
/// inputs produce byte-identical files.
pub fn emit_report(report: &RunReport, out_dir: &Path) -> Result<Vec<PathBuf>, MetricsError> {
    let mut written = Vec::new();
    let summary_path = out_dir.join("summary.json");
    let mut summary =
        serde_json::to_string_pretty(report).expect("report serializes");
    summary.push('\n');
    atomic_write(&summary_path, summary.as_bytes())
        .map_err(|e| MetricsError::IoFailure(e.to_string()))?;
    written.push(summary_path);

    let mut points = report.curve.clone();
    points.sort_by(|a, b| a.budget.total_cmp(&b.budget));
    let mut csv = String::from("budget,metric\n");
    for p in &points {
        csv.push_str(&format!("{},{}\n", p.budget, p.metric));
    }
    let csv_path = out_dir.join("curve.csv");
    atomic_write(&csv_path, csv.as_bytes()).map_err(|e| MetricsError::IoFailure(e.to_string()))?;
    written.push(csv_path);
    Ok(written)
}
