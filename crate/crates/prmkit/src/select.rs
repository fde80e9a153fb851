//! Test-time scaling strategies: best-of-N selection with weighted or
//! unweighted majority voting and max-score ranking, and verifier-guided
//! beam search.
//!
//! All tie-breaks go to the earliest-occurring candidate, and reductions run
//! over deterministic sort keys (score descending, creation index ascending),
//! so results never depend on scoring completion order.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::canonical_final_answer;
use crate::backend::{Backend, BackendError, CompletionRequest};
use crate::metrics::{estimate_flops, FlopsModel, Role};
use crate::prompts::{continuation_prompt, solution_prompt};
use crate::types::StepwiseSolution;
use crate::util::{derive_seed, par_map, sha256_hex};
use crate::verifier::{VerifierScore, VerifyError};

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("empty input")]
    EmptyInput,
    #[error("generator returned no candidates for any beam")]
    NoCandidates,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// Answer-selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Answer groups weighted by summed verifier score.
    WeightedMajority,
    /// Plurality answer by count; scores are ignored.
    Majority,
    /// Single highest-scoring solution.
    MaxScore,
    /// Highest-scoring beam (beam search only).
    BestBeam,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weighted" | "weighted_majority" => Ok(Strategy::WeightedMajority),
            "majority" => Ok(Strategy::Majority),
            "max" | "max_score" => Ok(Strategy::MaxScore),
            "best_beam" => Ok(Strategy::BestBeam),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

/// A solution with its verifier score and canonicalized final answer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredSolution {
    pub solution: StepwiseSolution,
    pub score: VerifierScore,
    pub canonical_answer: String,
}

impl ScoredSolution {
    pub fn new(solution: StepwiseSolution, score: VerifierScore) -> Self {
        let canonical_answer = canonical_final_answer(&solution.joined("\n\n"));
        ScoredSolution {
            solution,
            score,
            canonical_answer,
        }
    }
}

/// Outcome of a selection strategy, with compute accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen_answer: String,
    pub chosen_solution: Option<StepwiseSolution>,
    pub strategy: Strategy,
    /// Answer -> summed weight (verifier score, count, or beam score).
    pub group_scores: IndexMap<String, f64>,
    /// Generator plus verifier tokens.
    pub tokens_spent: u64,
    pub flops_estimate: f64,
    /// Samples dropped due to per-sample failures.
    pub dropped_samples: u32,
}

/// Audit-trace records, one per sample or beam node. Written to a JSONL
/// trace file by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Sample {
        index: u32,
        prompt_sha: String,
        answer: String,
        score: Option<f64>,
        dropped: bool,
    },
    BeamNode {
        round: u32,
        creation: u64,
        parent: Option<u64>,
        depth: usize,
        prompt_sha: String,
        score: f64,
        terminated: bool,
        retained: bool,
    },
}

pub type Trace = Vec<TraceRecord>;

fn group_by_answer(
    items: &[ScoredSolution],
    weight: impl Fn(&ScoredSolution) -> f64,
) -> IndexMap<String, (f64, Vec<&ScoredSolution>)> {
    let mut groups: IndexMap<String, (f64, Vec<&ScoredSolution>)> = IndexMap::new();
    for item in items {
        let entry = groups
            .entry(item.canonical_answer.clone())
            .or_insert((0.0, Vec::new()));
        entry.0 += weight(item);
        entry.1.push(item);
    }
    groups
}

/// Argmax over groups in insertion order; strictly-greater wins, so ties go
/// to the earliest-occurring group.
fn winning_group<'g, 's>(
    groups: &'g IndexMap<String, (f64, Vec<&'s ScoredSolution>)>,
) -> (&'g String, &'g (f64, Vec<&'s ScoredSolution>)) {
    let mut iter = groups.iter();
    let mut best = iter.next().expect("nonempty groups");
    for entry in iter {
        if entry.1 .0 > best.1 .0 {
            best = entry;
        }
    }
    best
}

fn best_in_group<'s>(members: &[&'s ScoredSolution]) -> &'s ScoredSolution {
    let mut best = members[0];
    for item in &members[1..] {
        if item.score.value > best.score.value {
            best = item;
        }
    }
    best
}

fn verifier_tokens(items: &[ScoredSolution]) -> u64 {
    items.iter().map(|i| i.score.tokens_spent).sum()
}

fn vote_result(
    items: &[ScoredSolution],
    strategy: Strategy,
    weight: impl Fn(&ScoredSolution) -> f64,
    score_blind_choice: bool,
) -> Result<SelectionResult, SelectError> {
    if items.is_empty() {
        return Err(SelectError::EmptyInput);
    }
    let groups = group_by_answer(items, weight);
    let (answer, (_, members)) = winning_group(&groups);
    let chosen = if score_blind_choice {
        members[0]
    } else {
        best_in_group(members)
    };
    Ok(SelectionResult {
        chosen_answer: answer.clone(),
        chosen_solution: Some(chosen.solution.clone()),
        strategy,
        group_scores: groups.iter().map(|(k, v)| (k.clone(), v.0)).collect(),
        tokens_spent: verifier_tokens(items),
        flops_estimate: 0.0,
        dropped_samples: 0,
    })
}

/// Weighted majority voting: each answer group weighs the sum of its
/// solutions' verifier scores; the heaviest group wins.
pub fn weighted_majority_vote(items: &[ScoredSolution]) -> Result<SelectionResult, SelectError> {
    vote_result(items, Strategy::WeightedMajority, |i| i.score.value, false)
}

/// Unweighted majority voting: the most frequent answer wins; verifier
/// scores are ignored entirely.
pub fn majority_vote(items: &[ScoredSolution]) -> Result<SelectionResult, SelectError> {
    vote_result(items, Strategy::Majority, |_| 1.0, true)
}

/// Rank by verifier score directly and take the single best solution.
pub fn max_score_select(items: &[ScoredSolution]) -> Result<SelectionResult, SelectError> {
    if items.is_empty() {
        return Err(SelectError::EmptyInput);
    }
    let mut best = &items[0];
    for item in &items[1..] {
        if item.score.value > best.score.value {
            best = item;
        }
    }
    let groups = group_by_answer(items, |i| i.score.value);
    Ok(SelectionResult {
        chosen_answer: best.canonical_answer.clone(),
        chosen_solution: Some(best.solution.clone()),
        strategy: Strategy::MaxScore,
        group_scores: groups.iter().map(|(k, v)| (k.clone(), v.0)).collect(),
        tokens_spent: verifier_tokens(items),
        flops_estimate: 0.0,
        dropped_samples: 0,
    })
}

fn apply_strategy(
    items: &[ScoredSolution],
    strategy: Strategy,
) -> Result<SelectionResult, SelectError> {
    match strategy {
        Strategy::WeightedMajority => weighted_majority_vote(items),
        Strategy::Majority => majority_vote(items),
        Strategy::MaxScore | Strategy::BestBeam => max_score_select(items),
    }
}

/// A problem posed to the generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub problem: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
}

/// Generator-side sampling parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    pub step_delimiter: String,
    pub max_in_flight: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            model: "generator".into(),
            temperature: 0.8,
            max_tokens: 2048,
            seed: Some(0),
            step_delimiter: "\n\n".into(),
            max_in_flight: 8,
        }
    }
}

pub fn split_steps(text: &str, delimiter: &str) -> Vec<String> {
    text.split(delimiter)
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Verifier hook used by the search strategies.
pub type VerifyFn<'a> =
    &'a (dyn Fn(&StepwiseSolution) -> Result<VerifierScore, VerifyError> + Sync);

/// Best-of-N: sample N solutions, score each, and select per `strategy`.
/// Per-sample verifier failures drop the sample and are recorded in the
/// result and trace.
#[allow(clippy::too_many_arguments)]
pub fn best_of_n<B: Backend>(
    backend: &B,
    problem: &Problem,
    generator_cfg: &GeneratorConfig,
    verify_fn: VerifyFn<'_>,
    n: u32,
    strategy: Strategy,
    flops: &FlopsModel,
    trace: &mut Trace,
) -> Result<SelectionResult, SelectError> {
    assert!(n >= 1, "N must be at least 1");
    let prompt = solution_prompt(&problem.problem);
    let request = CompletionRequest {
        temperature: generator_cfg.temperature,
        seed: generator_cfg.seed,
        num_samples: n,
        ..CompletionRequest::new(&generator_cfg.model, &prompt, generator_cfg.max_tokens)
    };
    let response = backend.complete(&request)?;
    let generator_tokens: u64 = response.token_counts.iter().sum();
    let prompt_sha = sha256_hex(prompt.as_bytes());

    let solutions: Vec<StepwiseSolution> = response
        .texts
        .iter()
        .enumerate()
        .map(|(i, text)| StepwiseSolution {
            id: format!("{}#s{i}", problem.id),
            problem: problem.problem.clone(),
            steps: split_steps(text, &generator_cfg.step_delimiter),
            gold_step_labels: None,
            gold_answer: problem.gold_answer.clone(),
        })
        .collect();

    let scored = par_map(&solutions, generator_cfg.max_in_flight, |_, s| verify_fn(s));
    let mut items = Vec::new();
    let mut dropped = 0u32;
    for (i, (solution, result)) in solutions.iter().zip(scored).enumerate() {
        let answer = canonical_final_answer(&solution.joined("\n\n"));
        match result {
            Ok(score) => {
                trace.push(TraceRecord::Sample {
                    index: i as u32,
                    prompt_sha: prompt_sha.clone(),
                    answer,
                    score: Some(score.value),
                    dropped: false,
                });
                items.push(ScoredSolution::new(solution.clone(), score));
            }
            Err(err) => {
                log::warn!("sample {i} of {} dropped: {err}", problem.id);
                trace.push(TraceRecord::Sample {
                    index: i as u32,
                    prompt_sha: prompt_sha.clone(),
                    answer,
                    score: None,
                    dropped: true,
                });
                dropped += 1;
            }
        }
    }

    let mut result = apply_strategy(&items, strategy)?;
    let verifier_token_total = result.tokens_spent;
    result.tokens_spent = generator_tokens + verifier_token_total;
    result.flops_estimate = estimate_flops(flops, generator_tokens, Role::Generator)
        + estimate_flops(flops, verifier_token_total, Role::Verifier);
    result.dropped_samples = dropped;
    Ok(result)
}

/// A partial solution in the beam.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeamNode {
    pub steps: Vec<String>,
    pub score: f64,
    pub terminated: bool,
    pub depth: usize,
}

#[derive(Debug, Clone)]
struct NodeState {
    node: BeamNode,
    creation: u64,
    parent: Option<u64>,
}

/// Beam search parameters. Defaults: M=4 candidate next steps per beam, at
/// most 20 steps per beam, sampling temperature 0.6, double-newline step
/// delimiter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeamConfig {
    pub n_beams: u32,
    pub m: u32,
    pub max_steps: u32,
    pub temperature: f64,
    pub step_delimiter: String,
    pub max_step_tokens: u32,
    /// Select by weighted vote over terminated beams instead of the single
    /// best beam.
    pub vote_over_terminated: bool,
    pub seed: Option<u64>,
    pub max_in_flight: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            n_beams: 4,
            m: 4,
            max_steps: 20,
            temperature: 0.6,
            step_delimiter: "\n\n".into(),
            max_step_tokens: 256,
            vote_over_terminated: false,
            seed: Some(0),
            max_in_flight: 8,
        }
    }
}

/// Verifier-guided beam search.
///
/// Each round extends every active beam with up to M sampled next steps
/// (generation stops at the step delimiter), scores every extended prefix,
/// and retains the `n_beams` best nodes. Terminated nodes keep their final
/// score and compete for retention but are never extended. A node terminates
/// when its newest step carries a boxed answer or the generator returns an
/// empty continuation. The result is the best terminated beam, falling back
/// to the best retained beam overall.
pub fn beam_search<B: Backend>(
    backend: &B,
    problem: &Problem,
    generator_model: &str,
    verify_fn: VerifyFn<'_>,
    cfg: &BeamConfig,
    flops: &FlopsModel,
    trace: &mut Trace,
) -> Result<SelectionResult, SelectError> {
    assert!(cfg.n_beams >= 1, "n_beams must be at least 1");
    assert!(cfg.m >= 1, "M must be at least 1");
    let base_seed = cfg.seed.unwrap_or(0);
    let mut next_creation: u64 = 0;
    let alloc = |next: &mut u64, parent: Option<u64>, steps: Vec<String>, terminated: bool| {
        let state = NodeState {
            node: BeamNode {
                depth: steps.len(),
                steps,
                score: 0.0,
                terminated,
            },
            creation: *next,
            parent,
        };
        *next += 1;
        state
    };

    let mut retained: Vec<NodeState> = vec![alloc(&mut next_creation, None, Vec::new(), false)];
    let mut generator_tokens = 0u64;
    let mut verifier_token_total = 0u64;

    for round in 1..=cfg.max_steps {
        let active: Vec<NodeState> = retained
            .iter()
            .filter(|s| !s.node.terminated)
            .cloned()
            .collect();
        if active.is_empty() {
            break;
        }
        let finished: Vec<NodeState> = retained
            .iter()
            .filter(|s| s.node.terminated)
            .cloned()
            .collect();

        // Sample M candidate next steps per active beam.
        let prompts: Vec<String> = active
            .iter()
            .map(|s| continuation_prompt(&problem.problem, &s.node.steps, &cfg.step_delimiter))
            .collect();
        let responses = par_map(&prompts, cfg.max_in_flight, |_, prompt| {
            let request = CompletionRequest {
                temperature: cfg.temperature,
                seed: Some(derive_seed(base_seed, prompt)),
                num_samples: cfg.m,
                stop: Some(vec![cfg.step_delimiter.clone()]),
                ..CompletionRequest::new(generator_model, prompt.clone(), cfg.max_step_tokens)
            };
            backend.complete(&request)
        });

        let mut extensions: Vec<NodeState> = Vec::new();
        for (parent, response) in active.iter().zip(responses) {
            let response = response?;
            generator_tokens += response.token_counts.iter().sum::<u64>();
            let mut seen = std::collections::HashSet::new();
            for text in &response.texts {
                let step = text.trim();
                if step.is_empty() || !seen.insert(step.to_string()) {
                    continue;
                }
                let terminated = crate::answer::contains_boxed(step);
                let mut steps = parent.node.steps.clone();
                steps.push(step.to_string());
                extensions.push(alloc(&mut next_creation, Some(parent.creation), steps, terminated));
            }
        }

        if extensions.is_empty() {
            if finished.is_empty() {
                return Err(SelectError::NoCandidates);
            }
            retained = finished;
            break;
        }

        // Score every extended prefix.
        let scored = par_map(&extensions, cfg.max_in_flight, |_, state| {
            verify_fn(&StepwiseSolution {
                id: format!("{}#b{}", problem.id, state.creation),
                problem: problem.problem.clone(),
                steps: state.node.steps.clone(),
                gold_step_labels: None,
                gold_answer: problem.gold_answer.clone(),
            })
        });
        for (state, result) in extensions.iter_mut().zip(scored) {
            let score = result?;
            verifier_token_total += score.tokens_spent;
            state.node.score = score.value;
        }

        // Retention pool: fresh extensions plus previously terminated nodes.
        let mut pool: Vec<NodeState> = finished;
        pool.extend(extensions);
        pool.sort_by(|a, b| {
            b.node
                .score
                .partial_cmp(&a.node.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.creation.cmp(&b.creation))
        });
        let retained_count = (cfg.n_beams as usize).min(pool.len());
        for (i, state) in pool.iter().enumerate() {
            trace.push(TraceRecord::BeamNode {
                round,
                creation: state.creation,
                parent: state.parent,
                depth: state.node.depth,
                prompt_sha: sha256_hex(state.node.steps.join("\n").as_bytes()),
                score: state.node.score,
                terminated: state.node.terminated,
                retained: i < retained_count,
            });
        }
        pool.truncate(retained_count);
        retained = pool;
        debug_assert!(retained.len() <= cfg.n_beams as usize);

        if retained.iter().all(|s| s.node.terminated) {
            break;
        }
    }

    // Best terminated beam, else best beam overall.
    fn pick<'a>(candidates: impl Iterator<Item = &'a NodeState>) -> Option<&'a NodeState> {
        candidates.fold(None, |best, s| match best {
            None => Some(s),
            Some(b) if s.node.score > b.node.score => Some(s),
            Some(b) => Some(b),
        })
    }
    let terminated: Vec<&NodeState> = retained.iter().filter(|s| s.node.terminated).collect();
    let best = pick(terminated.iter().copied())
        .or_else(|| pick(retained.iter()))
        .ok_or(SelectError::NoCandidates)?;

    let to_scored = |state: &NodeState| {
        ScoredSolution::new(
            StepwiseSolution {
                id: format!("{}#beam{}", problem.id, state.creation),
                problem: problem.problem.clone(),
                steps: state.node.steps.clone(),
                gold_step_labels: None,
                gold_answer: problem.gold_answer.clone(),
            },
            VerifierScore {
                value: state.node.score,
                method: crate::verifier::ScoreMethod::Think,
                chains_used: 0,
                rounds_used: 0,
                tokens_spent: 0,
                chains: Vec::new(),
            },
        )
    };

    let mut result = if cfg.vote_over_terminated && !terminated.is_empty() {
        let items: Vec<ScoredSolution> = terminated.iter().map(|s| to_scored(s)).collect();
        weighted_majority_vote(&items)?
    } else {
        let chosen = to_scored(best);
        let mut group_scores = IndexMap::new();
        group_scores.insert(chosen.canonical_answer.clone(), best.node.score);
        SelectionResult {
            chosen_answer: chosen.canonical_answer.clone(),
            chosen_solution: Some(chosen.solution),
            strategy: Strategy::BestBeam,
            group_scores,
            tokens_spent: 0,
            flops_estimate: 0.0,
            dropped_samples: 0,
        }
    };
    result.tokens_spent = generator_tokens + verifier_token_total;
    result.flops_estimate = estimate_flops(flops, generator_tokens, Role::Generator)
        + estimate_flops(flops, verifier_token_total, Role::Verifier);
    Ok(result)
}
