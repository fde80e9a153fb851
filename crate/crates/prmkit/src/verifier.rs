//! Solution-level verifier scores from a generative PRM.
//!
//! The generative pathway produces one verification CoT, closes the thinking
//! span, force-decodes a fixed question, and scores the solution as
//! `P(yes) / (P(yes) + P(no))` over the next-token distribution. On top of
//! that single-chain score sit parallel @K averaging, sequential budget-forced
//! multi-round scoring, and LLM-as-a-judge label extraction; a step-score
//! aggregator covers external discriminative PRMs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, CompletionRequest, FinishReason};
use crate::cot::{ChainParser, FinalVerdict, VerificationChain};
use crate::prompts::{forced_suffix_prompt, verification_prompt, PromptTemplate};
use crate::types::StepwiseSolution;
use crate::util::par_map;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("yes/no probability mass is zero; scoring pathway failed")]
    DegenerateMass,
    #[error("all {0} parallel chains failed")]
    AllChainsFailed(u32),
    #[error("empty step-score sequence")]
    EmptyScores,
    #[error("solution has no steps")]
    EmptySolution,
    #[error("invalid verifier config: {0}")]
    InvalidConfig(String),
}

/// How a score was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    Think,
    Parallel,
    Sequential,
    Judge,
    DiscAggregate,
}

/// A solution-level score in `[0, 1]` with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierScore {
    pub value: f64,
    pub method: ScoreMethod,
    pub chains_used: u32,
    pub rounds_used: u32,
    pub tokens_spent: u64,
    pub chains: Vec<VerificationChain>,
}

/// Verifier-side knobs. Defaults follow the shipped configuration: an 8192
/// token CoT budget, greedy single-chain scoring, temperature 0.6 for @K
/// parallel sampling, and up to four sequential rounds with one unique
/// trigger phrase per re-think round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub model: String,
    pub cot_budget_tokens: u32,
    pub forced_suffix: String,
    pub yes_forms: Vec<String>,
    pub no_forms: Vec<String>,
    pub temperature: f64,
    pub parallel_temperature: f64,
    pub k: u32,
    pub r: u32,
    pub trigger_phrases: Vec<String>,
    pub seed: Option<u64>,
    pub max_in_flight: usize,
}

pub fn default_trigger_phrases() -> Vec<String> {
    vec![
        "Let me double check".to_string(),
        "Let's verify again".to_string(),
        "Did I miss something?".to_string(),
    ]
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            model: "verifier".into(),
            cot_budget_tokens: 8192,
            forced_suffix: "Is the solution correct?".into(),
            yes_forms: vec!["yes".into(), " yes".into(), "Yes".into()],
            no_forms: vec!["no".into(), " no".into(), "No".into()],
            temperature: 0.0,
            parallel_temperature: 0.6,
            k: 4,
            r: 4,
            trigger_phrases: default_trigger_phrases(),
            seed: Some(0),
            max_in_flight: 8,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if self.yes_forms.is_empty() || self.no_forms.is_empty() {
            return Err(VerifyError::InvalidConfig(
                "yes_forms and no_forms must be nonempty".into(),
            ));
        }
        if self.yes_forms.iter().any(|y| self.no_forms.contains(y)) {
            return Err(VerifyError::InvalidConfig(
                "yes_forms and no_forms must be disjoint".into(),
            ));
        }
        if self.k < 1 {
            return Err(VerifyError::InvalidConfig("K must be at least 1".into()));
        }
        if self.r < 1 || self.r > 4 {
            return Err(VerifyError::InvalidConfig("R must be in 1..=4".into()));
        }
        if self.trigger_phrases.len() + 1 < self.r as usize {
            return Err(VerifyError::InvalidConfig(format!(
                "{} trigger phrases cannot cover R={} rounds",
                self.trigger_phrases.len(),
                self.r
            )));
        }
        if self.cot_budget_tokens == 0 {
            return Err(VerifyError::InvalidConfig("budget must be positive".into()));
        }
        Ok(())
    }
}

/// `p_yes / (p_yes + p_no)`, evaluated against the larger side so that
/// swapping the yes and no masses returns the exact complement.
fn ratio_score(p_yes: f64, p_no: f64) -> Result<f64, VerifyError> {
    let total = p_yes + p_no;
    if total == 0.0 || total.is_nan() {
        return Err(VerifyError::DegenerateMass);
    }
    Ok(if p_yes >= p_no {
        p_yes / total
    } else {
        1.0 - p_no / total
    })
}

/// Sum probability mass per side. Exponentials are accumulated in value
/// order, so the result does not depend on how the surface forms were
/// enumerated.
fn side_mass(scores: &[(bool, f64)]) -> (f64, f64) {
    let mut yes: Vec<f64> = Vec::new();
    let mut no: Vec<f64> = Vec::new();
    for (is_yes, logprob) in scores {
        let p = logprob.exp();
        if *is_yes {
            yes.push(p);
        } else {
            no.push(p);
        }
    }
    yes.sort_by(f64::total_cmp);
    no.sort_by(f64::total_cmp);
    (yes.iter().sum(), no.iter().sum())
}

/// Force-decode the suffix after the transcript and score yes vs no mass.
fn forced_suffix_score<B: Backend>(
    backend: &B,
    cfg: &VerifyConfig,
    prompt: &str,
    transcript: &str,
) -> Result<f64, VerifyError> {
    let scoring_prompt = forced_suffix_prompt(prompt, transcript, &cfg.forced_suffix);
    let candidates: Vec<String> = cfg
        .yes_forms
        .iter()
        .chain(cfg.no_forms.iter())
        .cloned()
        .collect();
    let scores = backend.score_continuations(&cfg.model, &scoring_prompt, &candidates)?;
    let tagged: Vec<(bool, f64)> = scores
        .iter()
        .map(|s| (cfg.yes_forms.contains(&s.candidate), s.logprob))
        .collect();
    let (p_yes, p_no) = side_mass(&tagged);
    ratio_score(p_yes, p_no)
}

fn parse_chain(
    solution: &StepwiseSolution,
    text: String,
    budget: u64,
    tokens: u64,
) -> VerificationChain {
    ChainParser::shared().analyze(&solution.id, text, solution.steps.len(), budget, tokens)
}

fn think_score_at<B: Backend>(
    backend: &B,
    solution: &StepwiseSolution,
    cfg: &VerifyConfig,
    seed: Option<u64>,
    temperature: f64,
) -> Result<VerifierScore, VerifyError> {
    if solution.steps.is_empty() {
        return Err(VerifyError::EmptySolution);
    }
    let prompt = verification_prompt(&PromptTemplate::default(), &solution.problem, &solution.steps);
    let request = CompletionRequest {
        temperature,
        seed,
        ..CompletionRequest::new(&cfg.model, &prompt, cfg.cot_budget_tokens)
    };
    let response = backend.complete(&request)?;
    let chain_text = response.texts[0].clone();
    let tokens = response.token_counts[0];
    let value = forced_suffix_score(backend, cfg, &prompt, &chain_text)?;
    // Structurally invalid chains still get a forced-suffix score; validity
    // is recorded in provenance for diagnostics.
    let chain = parse_chain(solution, chain_text, cfg.cot_budget_tokens as u64, tokens);
    Ok(VerifierScore {
        value,
        method: ScoreMethod::Think,
        chains_used: 1,
        rounds_used: 1,
        tokens_spent: tokens,
        chains: vec![chain],
    })
}

/// Single-chain generative score: one verification CoT (greedy at the
/// default temperature 0), then the forced-suffix yes/no ratio.
pub fn think_score<B: Backend>(
    backend: &B,
    solution: &StepwiseSolution,
    cfg: &VerifyConfig,
) -> Result<VerifierScore, VerifyError> {
    cfg.validate()?;
    think_score_at(backend, solution, cfg, cfg.seed, cfg.temperature)
}

/// Parallel @K scaling: K independent chains at `parallel_temperature` with
/// distinct derived seeds (base + k), averaged.
///
/// Per-chain failures are dropped from the average; only all K failing is an
/// error. Provenance is ordered by derived seed, so the result is independent
/// of completion order.
pub fn parallel_score<B: Backend>(
    backend: &B,
    solution: &StepwiseSolution,
    cfg: &VerifyConfig,
) -> Result<VerifierScore, VerifyError> {
    cfg.validate()?;
    let base = cfg.seed.unwrap_or(0);
    let seeds: Vec<u64> = (0..cfg.k as u64).map(|i| base.wrapping_add(i)).collect();
    let results = par_map(&seeds, cfg.max_in_flight, |_, &seed| {
        think_score_at(backend, solution, cfg, Some(seed), cfg.parallel_temperature)
    });
    let mut values = Vec::new();
    let mut chains = Vec::new();
    let mut tokens_spent = 0;
    for result in results {
        match result {
            Ok(score) => {
                values.push(score.value);
                tokens_spent += score.tokens_spent;
                chains.extend(score.chains);
            }
            Err(err) => log::warn!("parallel chain failed: {err}"),
        }
    }
    if values.is_empty() {
        return Err(VerifyError::AllChainsFailed(cfg.k));
    }
    // Shifted mean: exact when every chain scored the same value.
    let first = values[0];
    let value = (first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64)
        .clamp(0.0, 1.0);
    Ok(VerifierScore {
        value,
        method: ScoreMethod::Parallel,
        chains_used: values.len() as u32,
        rounds_used: 1,
        tokens_spent,
        chains,
    })
}

/// Sequential scaling by budget forcing: after the first chain, each round
/// `r` appends `trigger_phrases[r - 2]` and continues generation, all within
/// one overall CoT budget. Scoring happens once, on the full transcript.
///
/// With R = 1 this is exactly [`think_score`].
pub fn sequential_score<B: Backend>(
    backend: &B,
    solution: &StepwiseSolution,
    cfg: &VerifyConfig,
) -> Result<VerifierScore, VerifyError> {
    cfg.validate()?;
    if solution.steps.is_empty() {
        return Err(VerifyError::EmptySolution);
    }
    let prompt = verification_prompt(&PromptTemplate::default(), &solution.problem, &solution.steps);
    let budget = cfg.cot_budget_tokens as u64;
    let mut transcript = String::new();
    let mut tokens_spent = 0u64;
    let mut rounds_used = 0u32;
    for round in 1..=cfg.r {
        let remaining = budget - tokens_spent;
        if remaining == 0 {
            break;
        }
        if round > 1 {
            transcript.push('\n');
            transcript.push_str(&cfg.trigger_phrases[round as usize - 2]);
            transcript.push('\n');
        }
        let seed = cfg.seed.map(|s| s.wrapping_add(round as u64 - 1));
        let request = CompletionRequest {
            temperature: cfg.temperature,
            seed,
            ..CompletionRequest::new(
                &cfg.model,
                format!("{prompt}{transcript}"),
                remaining as u32,
            )
        };
        let response = backend.complete(&request)?;
        transcript.push_str(&response.texts[0]);
        tokens_spent += response.token_counts[0];
        rounds_used = round;
        if response.finish_reasons[0] == FinishReason::Length || tokens_spent >= budget {
            break;
        }
    }
    let value = forced_suffix_score(backend, cfg, &prompt, &transcript)?;
    let chain = parse_chain(solution, transcript, budget, tokens_spent);
    Ok(VerifierScore {
        value,
        method: ScoreMethod::Sequential,
        chains_used: 1,
        rounds_used,
        tokens_spent,
        chains: vec![chain],
    })
}

/// LLM-as-a-judge outcome. `Invalid` means no extractable boxed yes/no label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Judgment {
    Yes,
    No,
    Invalid,
}

#[derive(Debug, Clone)]
pub struct JudgeOutcome {
    pub judgment: Judgment,
    pub chain: VerificationChain,
}

/// Prompt the model to judge the solution and extract the final boxed
/// yes/no. A parse failure is the `Invalid` outcome, not an error.
pub fn judge<B: Backend>(
    backend: &B,
    solution: &StepwiseSolution,
    cfg: &VerifyConfig,
    template: &PromptTemplate,
) -> Result<JudgeOutcome, VerifyError> {
    cfg.validate()?;
    if !template.has_placeholder("problem") || !template.has_placeholder("solution") {
        return Err(VerifyError::InvalidConfig(format!(
            "template {:?} must have {{problem}} and {{solution}} placeholders",
            template.name
        )));
    }
    let prompt = verification_prompt(template, &solution.problem, &solution.steps);
    let request = CompletionRequest {
        temperature: cfg.temperature,
        seed: cfg.seed,
        ..CompletionRequest::new(&cfg.model, &prompt, cfg.cot_budget_tokens)
    };
    let response = backend.complete(&request)?;
    let chain = parse_chain(
        solution,
        response.texts[0].clone(),
        cfg.cot_budget_tokens as u64,
        response.token_counts[0],
    );
    let judgment = match chain.final_verdict {
        Some(FinalVerdict::Yes) => Judgment::Yes,
        Some(FinalVerdict::No) => Judgment::No,
        None => Judgment::Invalid,
    };
    Ok(JudgeOutcome { judgment, chain })
}

/// Aggregation rule for external discriminative PRM step scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAggregate {
    /// Score of the last step (the default).
    Last,
    Min,
    Product,
}

/// Collapse a sequence of per-step scores into one solution score.
pub fn aggregate_step_scores(scores: &[f64], method: StepAggregate) -> Result<f64, VerifyError> {
    if scores.is_empty() {
        return Err(VerifyError::EmptyScores);
    }
    Ok(match method {
        StepAggregate::Last => *scores.last().expect("nonempty"),
        StepAggregate::Min => scores.iter().copied().fold(f64::INFINITY, f64::min),
        StepAggregate::Product => scores.iter().product(),
    })
}
