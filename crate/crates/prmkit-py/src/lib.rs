//! Python bindings for the prmkit verification toolkit.
//!
//! Exposes the main types and operations: chain parsing and cleaning, the
//! deterministic scripted mock backend with all verifier scoring methods,
//! selection strategies, and the evaluation metrics.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use prmkit::answer::{canonical_final_answer, canonicalize_answer};
use prmkit::backend::{CompletionRequest, MockScript};
use prmkit::cot::ChainParser;
use prmkit::metrics::{EvalItem, InvalidPolicy, Predicted};
use prmkit::select::{ScoredSolution, SelectionResult};
use prmkit::types::{StepLabel, StepwiseSolution};
use prmkit::verifier::{StepAggregate, VerifierScore, VerifyConfig};

fn value_err(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn runtime_err(err: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(err.to_string())
}

/// Boxed per-step verdicts as `(index, label, start, end)` tuples.
#[pyfunction]
fn parse_step_verdicts(text: &str) -> Vec<(usize, String, usize, usize)> {
    prmkit::cot::parse_step_verdicts(text)
        .into_iter()
        .map(|v| (v.index, v.label.as_str().to_string(), v.span.0, v.span.1))
        .collect()
}

/// Last boxed yes/no marker, or None.
#[pyfunction]
fn parse_final_verdict(text: &str) -> Option<&'static str> {
    prmkit::cot::parse_final_verdict(text).map(|v| match v {
        prmkit::cot::FinalVerdict::Yes => "yes",
        prmkit::cot::FinalVerdict::No => "no",
    })
}

/// Classify a chain; returns `(kind, detail)`.
#[pyfunction]
fn classify_chain(
    text: &str,
    expected_steps: usize,
    max_tokens: u64,
    token_count: u64,
) -> (String, String) {
    let status =
        ChainParser::shared().classify_chain(text, expected_steps, max_tokens, token_count);
    (
        serde_json::to_value(status.kind)
            .expect("status kind serializes")
            .as_str()
            .expect("status kind is a string")
            .to_string(),
        status.detail,
    )
}

/// Canonicalize notation, truncate after the last verification decision, and
/// wrap in think markers.
#[pyfunction]
fn clean_chain(text: &str) -> PyResult<String> {
    prmkit::cot::clean_chain(text).map_err(value_err)
}

/// Repetition ratio over whitespace tokens.
#[pyfunction]
fn detect_repetition(text: &str, ngram: usize) -> f64 {
    prmkit::cot::detect_repetition(text, ngram)
}

/// Canonical final answer of a solution text.
#[pyfunction]
fn canonical_answer(text: &str) -> String {
    canonical_final_answer(text)
}

fn scored_items(items: Vec<(String, f64)>) -> Vec<ScoredSolution> {
    items
        .into_iter()
        .enumerate()
        .map(|(i, (answer, value))| ScoredSolution {
            solution: StepwiseSolution::new(format!("py-{i}"), "", vec![]),
            canonical_answer: canonicalize_answer(&answer),
            score: VerifierScore {
                value,
                method: prmkit::verifier::ScoreMethod::Think,
                chains_used: 1,
                rounds_used: 1,
                tokens_spent: 0,
                chains: Vec::new(),
            },
        })
        .collect()
}

fn vote_tuple(result: SelectionResult) -> (String, Vec<(String, f64)>) {
    (
        result.chosen_answer,
        result.group_scores.into_iter().collect(),
    )
}

/// Weighted majority vote over `(answer, score)` pairs; returns
/// `(chosen_answer, [(answer, summed_score), ...])`.
#[pyfunction]
fn weighted_majority_vote(items: Vec<(String, f64)>) -> PyResult<(String, Vec<(String, f64)>)> {
    prmkit::select::weighted_majority_vote(&scored_items(items))
        .map(vote_tuple)
        .map_err(value_err)
}

/// Plurality answer over a list of answers.
#[pyfunction]
fn majority_vote(answers: Vec<String>) -> PyResult<String> {
    let items: Vec<(String, f64)> = answers.into_iter().map(|a| (a, 0.0)).collect();
    prmkit::select::majority_vote(&scored_items(items))
        .map(|r| r.chosen_answer)
        .map_err(value_err)
}

/// Highest-scoring answer over `(answer, score)` pairs.
#[pyfunction]
fn max_score_select(items: Vec<(String, f64)>) -> PyResult<String> {
    prmkit::select::max_score_select(&scored_items(items))
        .map(|r| r.chosen_answer)
        .map_err(value_err)
}

/// Collapse per-step scores with "last", "min", or "product".
#[pyfunction]
fn aggregate_step_scores(scores: Vec<f64>, method: &str) -> PyResult<f64> {
    let method = match method {
        "last" => StepAggregate::Last,
        "min" => StepAggregate::Min,
        "product" => StepAggregate::Product,
        other => return Err(value_err(format!("unknown aggregation {other:?}"))),
    };
    prmkit::verifier::aggregate_step_scores(&scores, method).map_err(value_err)
}

fn eval_items(items: Vec<(bool, String)>) -> PyResult<Vec<EvalItem>> {
    items
        .into_iter()
        .enumerate()
        .map(|(i, (gold_has_error, predicted))| {
            let predicted = match predicted.as_str() {
                "correct" => Predicted::Correct,
                "incorrect" => Predicted::Incorrect,
                "invalid" => Predicted::Invalid,
                other => return Err(value_err(format!("unknown prediction {other:?}"))),
            };
            Ok(EvalItem {
                id: format!("py-{i}"),
                gold_has_error,
                predicted,
            })
        })
        .collect()
}

/// Binary F1 over `(gold_has_error, predicted)` pairs, error class positive.
#[pyfunction]
#[pyo3(signature = (items, exclude_invalid = false))]
fn binary_f1(items: Vec<(bool, String)>, exclude_invalid: bool) -> PyResult<f64> {
    let policy = if exclude_invalid {
        InvalidPolicy::Exclude
    } else {
        InvalidPolicy::AsWrong
    };
    prmkit::metrics::binary_f1(&eval_items(items)?, policy).map_err(value_err)
}

/// Harmonic mean of the accuracies on gold-error and gold-correct subsets.
#[pyfunction]
fn harmonic_subset_f1(items: Vec<(bool, String)>) -> PyResult<f64> {
    prmkit::metrics::harmonic_subset_f1(&eval_items(items)?).map_err(value_err)
}

/// Fraction of predictions with no extractable verdict.
#[pyfunction]
fn invalid_rate(predictions: Vec<String>) -> PyResult<f64> {
    let items: Vec<(bool, String)> = predictions.into_iter().map(|p| (false, p)).collect();
    prmkit::metrics::invalid_rate_items(&eval_items(items)?).map_err(value_err)
}

/// Equal-width difficulty bins over [0, 1].
#[pyfunction]
#[pyo3(signature = (rates, n_bins = 4))]
fn difficulty_bins(rates: Vec<f64>, n_bins: usize) -> Vec<usize> {
    prmkit::metrics::difficulty_bins(&rates, n_bins)
}

/// Sampling FLOPs under the 2 x params x tokens rule.
#[pyfunction]
fn estimate_flops(params: f64, generated_tokens: u64) -> f64 {
    2.0 * params * generated_tokens as f64
}

/// A solution-level verifier score with provenance.
#[pyclass(name = "VerifierScore", skip_from_py_object)]
#[derive(Clone)]
struct PyVerifierScore {
    #[pyo3(get)]
    value: f64,
    #[pyo3(get)]
    method: String,
    #[pyo3(get)]
    chains_used: u32,
    #[pyo3(get)]
    rounds_used: u32,
    #[pyo3(get)]
    tokens_spent: u64,
    #[pyo3(get)]
    chain_texts: Vec<String>,
    #[pyo3(get)]
    chain_valid: Vec<bool>,
}

impl From<VerifierScore> for PyVerifierScore {
    fn from(score: VerifierScore) -> Self {
        PyVerifierScore {
            value: score.value,
            method: format!("{:?}", score.method).to_lowercase(),
            chains_used: score.chains_used,
            rounds_used: score.rounds_used,
            tokens_spent: score.tokens_spent,
            chain_texts: score.chains.iter().map(|c| c.raw_text.clone()).collect(),
            chain_valid: score.chains.iter().map(|c| c.status.is_valid()).collect(),
        }
    }
}

#[pymethods]
impl PyVerifierScore {
    fn __repr__(&self) -> String {
        format!(
            "VerifierScore(value={:.6}, method={}, chains={}, tokens={})",
            self.value, self.method, self.chains_used, self.tokens_spent
        )
    }
}

/// Deterministic scripted backend with the verifier scoring methods.
#[pyclass(name = "MockBackend")]
struct PyMockBackend {
    backend: prmkit::backend::MockBackend,
}

impl PyMockBackend {
    fn config(&self, seed: Option<u64>, k: Option<u32>, r: Option<u32>) -> VerifyConfig {
        let mut cfg = VerifyConfig::default();
        if seed.is_some() {
            cfg.seed = seed;
        }
        if let Some(k) = k {
            cfg.k = k;
        }
        if let Some(r) = r {
            cfg.r = r;
        }
        cfg
    }

    fn solution(problem: &str, steps: Vec<String>) -> StepwiseSolution {
        StepwiseSolution::new("py", problem, steps)
    }
}

#[pymethods]
impl PyMockBackend {
    /// Build from a script JSON document (see the mock script schema in the
    /// project README).
    #[new]
    #[pyo3(signature = (script_json, seed = 0))]
    fn new(script_json: &str, seed: u64) -> PyResult<Self> {
        let script: MockScript = serde_json::from_str(script_json).map_err(value_err)?;
        let backend = prmkit::backend::MockBackend::new(script, seed).map_err(value_err)?;
        Ok(PyMockBackend { backend })
    }

    /// Raw completions; returns the sampled texts.
    #[pyo3(signature = (prompt, max_tokens = 1024, temperature = 0.0, num_samples = 1, seed = None))]
    fn complete(
        &self,
        prompt: &str,
        max_tokens: u32,
        temperature: f64,
        num_samples: u32,
        seed: Option<u64>,
    ) -> PyResult<Vec<String>> {
        use prmkit::backend::Backend;
        let request = CompletionRequest {
            temperature,
            num_samples,
            seed,
            ..CompletionRequest::new("mock", prompt, max_tokens)
        };
        self.backend
            .complete(&request)
            .map(|r| r.texts)
            .map_err(runtime_err)
    }

    /// Single-chain generative score (forced-suffix yes/no ratio).
    #[pyo3(signature = (problem, steps, seed = None))]
    fn think_score(
        &self,
        problem: &str,
        steps: Vec<String>,
        seed: Option<u64>,
    ) -> PyResult<PyVerifierScore> {
        let cfg = self.config(seed, None, None);
        prmkit::verifier::think_score(&self.backend, &Self::solution(problem, steps), &cfg)
            .map(Into::into)
            .map_err(runtime_err)
    }

    /// Parallel @K scaling: K chains averaged.
    #[pyo3(signature = (problem, steps, k = 4, seed = None))]
    fn parallel_score(
        &self,
        problem: &str,
        steps: Vec<String>,
        k: u32,
        seed: Option<u64>,
    ) -> PyResult<PyVerifierScore> {
        let cfg = self.config(seed, Some(k), None);
        prmkit::verifier::parallel_score(&self.backend, &Self::solution(problem, steps), &cfg)
            .map(Into::into)
            .map_err(runtime_err)
    }

    /// Sequential budget-forced scoring over R rounds.
    #[pyo3(signature = (problem, steps, rounds = 4, seed = None))]
    fn sequential_score(
        &self,
        problem: &str,
        steps: Vec<String>,
        rounds: u32,
        seed: Option<u64>,
    ) -> PyResult<PyVerifierScore> {
        let cfg = self.config(seed, None, Some(rounds));
        prmkit::verifier::sequential_score(&self.backend, &Self::solution(problem, steps), &cfg)
            .map(Into::into)
            .map_err(runtime_err)
    }

    /// LLM-as-a-judge: returns "yes", "no", or "invalid".
    #[pyo3(signature = (problem, steps, template = "single-yes-no", seed = None))]
    fn judge(
        &self,
        problem: &str,
        steps: Vec<String>,
        template: &str,
        seed: Option<u64>,
    ) -> PyResult<&'static str> {
        let template = prmkit::prompts::PromptTemplate::resolve(template).map_err(value_err)?;
        let cfg = self.config(seed, None, None);
        let outcome = prmkit::verifier::judge(
            &self.backend,
            &Self::solution(problem, steps),
            &cfg,
            &template,
        )
        .map_err(runtime_err)?;
        Ok(match outcome.judgment {
            prmkit::verifier::Judgment::Yes => "yes",
            prmkit::verifier::Judgment::No => "no",
            prmkit::verifier::Judgment::Invalid => "invalid",
        })
    }
}

/// Process-based filter decision for a chain against gold labels; returns
/// "keep" or the reject reason.
#[pyfunction]
#[pyo3(signature = (chain_text, gold_labels, token_count, max_tokens = 4096))]
fn process_filter(
    chain_text: &str,
    gold_labels: Vec<String>,
    token_count: u64,
    max_tokens: u64,
) -> PyResult<String> {
    let gold: Vec<StepLabel> = gold_labels
        .iter()
        .map(|l| match l.as_str() {
            "correct" => Ok(StepLabel::Correct),
            "incorrect" => Ok(StepLabel::Incorrect),
            other => Err(value_err(format!("unknown label {other:?}"))),
        })
        .collect::<PyResult<_>>()?;
    let chain =
        ChainParser::shared().analyze("py", chain_text, gold.len(), max_tokens, token_count);
    Ok(match prmkit::datagen::process_filter(&chain, &gold, max_tokens) {
        prmkit::datagen::FilterDecision::Keep => "keep".to_string(),
        prmkit::datagen::FilterDecision::Reject(reason) => format!("{reason:?}").to_lowercase(),
    })
}

/// Python module definition.
#[pymodule]
mod prmkit_py {
    #[pymodule_export]
    use super::{
        aggregate_step_scores, binary_f1, canonical_answer, classify_chain, clean_chain,
        detect_repetition, difficulty_bins, estimate_flops, harmonic_subset_f1, invalid_rate,
        majority_vote, max_score_select, parse_final_verdict, parse_step_verdicts,
        process_filter, weighted_majority_vote, PyMockBackend, PyVerifierScore,
    };
}
