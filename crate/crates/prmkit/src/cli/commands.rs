//! Command implementations. Each reads its JSONL inputs, delegates to the
//! library modules, writes outputs atomically under the context's output
//! directory, and records a run manifest.

use std::collections::HashMap;
use std::path::Path;

use indexmap::IndexMap;

use super::rows::{
    read_jsonl, write_json, write_jsonl, ChainRow, PassRateRow, PredRow, PrefixRow,
    ProcessBenchRow, ResultRow, ScoreRow, SelectionRow, StatsRow,
};
use super::{
    run_id, CliError, Ctx, DatagenCmd, EvalCmd, FilterMode, SelectCmd, VerifyCmd, VerifyMethod,
};
use crate::answer::canonicalize_answer;
use crate::backend::Backend;
use crate::cot::VerificationChain;
use crate::datagen::{
    balance, finalize, mc_label, outcome_filter, process_filter, sample_chains, stats,
    FilterDecision, LabeledPrefix, McConfig, SamplerConfig, TrainingRecord,
};
use crate::metrics::{
    binary_f1, difficulty_bins, emit_report, harmonic_subset_f1, invalid_rate_items, CurvePoint,
    EvalItem, MetricsError, RunReport,
};
use crate::prompts::PromptTemplate;
use crate::select::{
    beam_search, best_of_n, BeamConfig, GeneratorConfig, Strategy, Trace,
};
use crate::types::StepwiseSolution;
use crate::util::{derive_seed, par_map, unix_now};
use crate::verifier::{
    judge, parallel_score, sequential_score, think_score, ScoreMethod, VerifierScore, VerifyError,
};

fn write_manifest(ctx: &Ctx, dir: &Path, command: &str, started: u64, tokens: u64, flops: f64) -> Result<(), CliError> {
    write_json(&dir.join("manifest.json"), &ctx.manifest(command, started, tokens, flops))
}

fn method_name(method: VerifyMethod) -> &'static str {
    match method {
        VerifyMethod::Think => "think",
        VerifyMethod::Parallel => "parallel",
        VerifyMethod::Sequential => "sequential",
        VerifyMethod::Judge => "judge",
    }
}

// ---------------------------------------------------------------------------
// datagen
// ---------------------------------------------------------------------------

pub fn datagen(ctx: &Ctx, cmd: DatagenCmd) -> Result<(), CliError> {
    match cmd {
        DatagenCmd::Sample { input } => datagen_sample(ctx, &input),
        DatagenCmd::Filter {
            input,
            prefixes,
            mode,
            max_tokens,
            target_kept,
        } => datagen_filter(ctx, &input, &prefixes, mode, max_tokens, target_kept),
        DatagenCmd::Balance { input, target, tolerance } => {
            datagen_balance(ctx, &input, target, tolerance)
        }
        DatagenCmd::Finalize { input, prefixes } => datagen_finalize(ctx, &input, &prefixes),
        DatagenCmd::Stats { input } => datagen_stats(ctx, &input),
        DatagenCmd::McLabel {
            input,
            step_index,
            rollouts,
            rule,
        } => datagen_mc_label(ctx, &input, step_index, rollouts, rule),
    }
}

fn load_prefixes(ctx: &Ctx, path: &Path) -> Result<Vec<LabeledPrefix>, CliError> {
    let rows: Vec<PrefixRow> = read_jsonl(path)?;
    Ok(rows
        .iter()
        .map(|r| r.to_prefix(ctx.config.datagen.neutral_label_as))
        .collect())
}

pub fn datagen_sample(ctx: &Ctx, input: &Path) -> Result<(), CliError> {
    let started = unix_now();
    let backend = ctx.require_backend()?;
    let prefixes = load_prefixes(ctx, input)?;
    let cfg = SamplerConfig {
        model: ctx.config.models.verifier.clone(),
        n_per_prefix: ctx.config.datagen.n_per_prefix,
        temperature: ctx.config.datagen.temperature,
        max_tokens: ctx.config.datagen.sample_max_tokens,
        classify_max_tokens: ctx.config.datagen.max_chain_tokens,
        seed: ctx.seed,
        max_in_flight: ctx.max_in_flight,
    };
    let outcome = sample_chains(&backend, &prefixes, &cfg)?;
    let tokens: u64 = outcome.chains.iter().map(|c| c.token_count).sum();
    let chain_rows: Vec<ChainRow> = outcome.chains.iter().map(ChainRow::from_chain).collect();
    write_jsonl(&ctx.out_dir.join("chains.jsonl"), &chain_rows)?;
    if !outcome.failures.is_empty() {
        let failure_rows: Vec<serde_json::Value> = outcome
            .failures
            .iter()
            .map(|(id, err)| serde_json::json!({"prefix_id": id, "error": err}))
            .collect();
        write_jsonl(&ctx.out_dir.join("failures.jsonl"), &failure_rows)?;
    }
    println!(
        "sampled {} chains from {} prefixes ({} failures)",
        chain_rows.len(),
        prefixes.len(),
        outcome.failures.len()
    );
    write_manifest(ctx, &ctx.out_dir, "datagen sample", started, tokens, 0.0)
}

pub fn datagen_filter(
    ctx: &Ctx,
    input: &Path,
    prefixes_path: &Path,
    mode: FilterMode,
    max_tokens: Option<u64>,
    target_kept: Option<usize>,
) -> Result<(), CliError> {
    let started = unix_now();
    let chain_rows: Vec<ChainRow> = read_jsonl(input)?;
    let prefixes = load_prefixes(ctx, prefixes_path)?;
    let by_id: HashMap<&str, &LabeledPrefix> =
        prefixes.iter().map(|p| (p.id.as_str(), p)).collect();
    let budget = max_tokens.unwrap_or(ctx.config.datagen.max_chain_tokens);

    let mut out = Vec::new();
    let mut kept = 0usize;
    let mut rejects: IndexMap<&'static str, usize> = IndexMap::new();
    for row in &chain_rows {
        let chain = row.to_chain();
        let prefix = by_id.get(chain.prefix_id.as_str()).ok_or_else(|| {
            CliError::Io(format!("chain references unknown prefix {}", chain.prefix_id))
        })?;
        let decision = match mode {
            FilterMode::Process => {
                let gold = prefix.gold_step_labels.as_ref().ok_or_else(|| {
                    CliError::Usage(format!("prefix {} has no gold step labels", prefix.id))
                })?;
                process_filter(&chain, gold, budget)
            }
            FilterMode::Outcome => {
                let answer_correct = prefix.answer_correct.ok_or_else(|| {
                    CliError::Usage(format!("prefix {} has no answer_correct flag", prefix.id))
                })?;
                outcome_filter(&chain, answer_correct)
            }
        };
        match decision {
            FilterDecision::Keep => kept += 1,
            FilterDecision::Reject(reason) => {
                let key = match reason {
                    crate::datagen::RejectReason::Format => "format",
                    crate::datagen::RejectReason::Mismatch => "mismatch",
                    crate::datagen::RejectReason::Overlong => "overlong",
                };
                *rejects.entry(key).or_insert(0) += 1;
            }
        }
        out.push(row.clone().with_decision(decision));
        if let Some(target) = target_kept {
            if kept >= target {
                break;
            }
        }
    }
    write_jsonl(&ctx.out_dir.join("filtered.jsonl"), &out)?;
    println!("kept {kept} of {} chains (rejects: {rejects:?})", out.len());
    write_manifest(ctx, &ctx.out_dir, "datagen filter", started, 0, 0.0)
}

pub fn datagen_balance(
    ctx: &Ctx,
    input: &Path,
    target: Option<f64>,
    tolerance: Option<f64>,
) -> Result<(), CliError> {
    let started = unix_now();
    let records: Vec<TrainingRecord> = read_jsonl(input)?;
    for record in &records {
        if record.answer_correct.is_none() {
            return Err(CliError::Usage(format!(
                "record {} lacks answer_correct; balance needs solution-level correctness",
                record.prefix_id
            )));
        }
    }
    let outcome = balance(
        &records,
        |r| r.answer_correct == Some(true),
        target.unwrap_or(ctx.config.datagen.balance_target),
        tolerance.unwrap_or(ctx.config.datagen.balance_tolerance),
    );
    if outcome.warned {
        eprintln!("warning: single-class input left unchanged");
    }
    write_jsonl(&ctx.out_dir.join("balanced.jsonl"), &outcome.kept)?;
    println!("kept {} of {} records ({} dropped)", outcome.kept.len(), records.len(), outcome.dropped);
    write_manifest(ctx, &ctx.out_dir, "datagen balance", started, 0, 0.0)
}

pub fn datagen_finalize(ctx: &Ctx, input: &Path, prefixes_path: &Path) -> Result<(), CliError> {
    let started = unix_now();
    let chain_rows: Vec<ChainRow> = read_jsonl(input)?;
    let prefixes = load_prefixes(ctx, prefixes_path)?;
    let by_id: HashMap<&str, &LabeledPrefix> =
        prefixes.iter().map(|p| (p.id.as_str(), p)).collect();
    let any_decided = chain_rows.iter().any(|r| r.filter_decision.is_some());
    let mut items: Vec<(VerificationChain, LabeledPrefix)> = Vec::new();
    for row in &chain_rows {
        if any_decided && !row.is_keep() {
            continue;
        }
        let prefix = by_id.get(row.prefix_id.as_str()).ok_or_else(|| {
            CliError::Io(format!("chain references unknown prefix {}", row.prefix_id))
        })?;
        items.push((row.to_chain(), (*prefix).clone()));
    }
    let outcome = finalize(&items);
    write_jsonl(&ctx.out_dir.join("records.jsonl"), &outcome.records)?;
    if !outcome.dropped.is_empty() {
        let dropped: Vec<serde_json::Value> = outcome
            .dropped
            .iter()
            .map(|(id, why)| serde_json::json!({"prefix_id": id, "reason": why}))
            .collect();
        write_jsonl(&ctx.out_dir.join("dropped.jsonl"), &dropped)?;
    }
    println!(
        "finalized {} records from {} kept chains ({} dropped)",
        outcome.records.len(),
        items.len(),
        outcome.dropped.len()
    );
    write_manifest(ctx, &ctx.out_dir, "datagen finalize", started, 0, 0.0)
}

pub fn datagen_stats(ctx: &Ctx, input: &Path) -> Result<(), CliError> {
    let started = unix_now();
    let rows: Vec<StatsRow> = read_jsonl(input)?;
    let records: Vec<crate::datagen::StatsRecord> = rows.iter().map(|r| r.to_record()).collect();
    let s = stats(&records)?;
    write_json(&ctx.out_dir.join("stats.json"), &s)?;
    println!("{}", serde_json::to_string_pretty(&s).expect("stats serialize"));
    write_manifest(ctx, &ctx.out_dir, "datagen stats", started, 0, 0.0)
}

pub fn datagen_mc_label(
    ctx: &Ctx,
    input: &Path,
    step_index: Option<usize>,
    rollouts: Option<u32>,
    rule: Option<crate::datagen::SuccessRule>,
) -> Result<(), CliError> {
    let started = unix_now();
    let backend = ctx.require_backend()?;
    let prefixes = load_prefixes(ctx, input)?;
    let cfg = McConfig {
        model: ctx.config.models.generator.clone(),
        n_rollouts: rollouts.unwrap_or(ctx.config.datagen.mc_rollouts),
        temperature: ctx.config.datagen.mc_temperature,
        max_tokens: ctx.config.generation.max_solution_tokens,
        step_delimiter: ctx.config.generation.step_delimiter.clone(),
        rule: rule.unwrap_or(ctx.config.datagen.mc_rule),
        seed: ctx.seed,
    };
    let mut tasks: Vec<(usize, usize)> = Vec::new();
    for (i, prefix) in prefixes.iter().enumerate() {
        match step_index {
            Some(idx) => tasks.push((i, idx)),
            None => tasks.extend((1..=prefix.steps.len()).map(|idx| (i, idx))),
        }
    }
    let results = par_map(&tasks, ctx.max_in_flight, |_, &(i, idx)| {
        mc_label(&backend, &prefixes[i], idx, &cfg)
    });
    let mut labels = Vec::with_capacity(results.len());
    for result in results {
        labels.push(result?);
    }
    write_jsonl(&ctx.out_dir.join("labels.jsonl"), &labels)?;
    println!("labeled {} steps across {} prefixes", labels.len(), prefixes.len());
    write_manifest(ctx, &ctx.out_dir, "datagen mc-label", started, 0, 0.0)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

pub fn verify(ctx: &Ctx, cmd: VerifyCmd) -> Result<(), CliError> {
    match cmd {
        VerifyCmd::Score {
            input,
            method,
            k,
            rounds,
            template,
        } => verify_score(ctx, &input, method, k, rounds, &template),
    }
}

fn score_to_row(id: &str, score: &VerifierScore) -> ScoreRow {
    ScoreRow {
        id: id.to_string(),
        value: Some(score.value),
        method: match score.method {
            ScoreMethod::Think => "think",
            ScoreMethod::Parallel => "parallel",
            ScoreMethod::Sequential => "sequential",
            ScoreMethod::Judge => "judge",
            ScoreMethod::DiscAggregate => "disc_aggregate",
        }
        .into(),
        chains_used: score.chains_used,
        rounds_used: score.rounds_used,
        tokens_spent: score.tokens_spent,
        statuses: score.chains.iter().map(|c| c.status.clone()).collect(),
        judgment: None,
        error: None,
    }
}

pub fn verify_score(
    ctx: &Ctx,
    input: &Path,
    method: VerifyMethod,
    k: Option<u32>,
    rounds: Option<u32>,
    template: &str,
) -> Result<(), CliError> {
    let started = unix_now();
    let backend = ctx.require_backend()?;
    let prefix_rows: Vec<PrefixRow> = read_jsonl(input)?;
    let solutions: Vec<StepwiseSolution> = prefix_rows
        .iter()
        .map(|r| r.to_solution(ctx.config.datagen.neutral_label_as))
        .collect();
    let judge_template = PromptTemplate::resolve(template)
        .map_err(|e| CliError::Io(format!("template {template}: {e}")))?;

    let results = par_map(&solutions, ctx.max_in_flight, |_, solution| {
        let mut cfg = ctx.config.verify.to_verify_config(
            &ctx.config.models.verifier,
            Some(derive_seed(ctx.seed, &format!("verify:{}", solution.id))),
            ctx.max_in_flight,
        );
        if let Some(k) = k {
            cfg.k = k;
        }
        if let Some(r) = rounds {
            cfg.r = r;
        }
        let outcome: Result<ScoreRow, VerifyError> = match method {
            VerifyMethod::Think => {
                think_score(&backend, solution, &cfg).map(|s| score_to_row(&solution.id, &s))
            }
            VerifyMethod::Parallel => {
                parallel_score(&backend, solution, &cfg).map(|s| score_to_row(&solution.id, &s))
            }
            VerifyMethod::Sequential => {
                sequential_score(&backend, solution, &cfg).map(|s| score_to_row(&solution.id, &s))
            }
            VerifyMethod::Judge => judge(&backend, solution, &cfg, &judge_template).map(|o| {
                ScoreRow {
                    id: solution.id.clone(),
                    value: None,
                    method: "judge".into(),
                    chains_used: 1,
                    rounds_used: 1,
                    tokens_spent: o.chain.token_count,
                    statuses: vec![o.chain.status.clone()],
                    judgment: Some(o.judgment),
                    error: None,
                }
            }),
        };
        outcome
    });

    let mut score_rows = Vec::with_capacity(solutions.len());
    for (solution, result) in solutions.iter().zip(results) {
        match result {
            Ok(row) => score_rows.push(row),
            Err(err) => score_rows.push(ScoreRow {
                id: solution.id.clone(),
                value: None,
                method: method_name(method).into(),
                chains_used: 0,
                rounds_used: 0,
                tokens_spent: 0,
                statuses: Vec::new(),
                judgment: None,
                error: Some(err.to_string()),
            }),
        }
    }
    let tokens: u64 = score_rows.iter().map(|r| r.tokens_spent).sum();
    write_jsonl(&ctx.out_dir.join("scores.jsonl"), &score_rows)?;
    let failures = score_rows.iter().filter(|r| r.error.is_some()).count();
    println!("scored {} solutions ({failures} failures)", score_rows.len());
    write_manifest(ctx, &ctx.out_dir, "verify score", started, tokens, 0.0)
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------

pub fn select(ctx: &Ctx, cmd: SelectCmd) -> Result<(), CliError> {
    match cmd {
        SelectCmd::Bon {
            input,
            n,
            strategy,
            verify_method,
        } => select_bon(ctx, &input, n, strategy.as_deref(), verify_method),
        SelectCmd::Beam {
            input,
            beams,
            m,
            max_steps,
        } => select_beam(ctx, &input, beams, m, max_steps),
    }
}

/// Per-solution verifier closure shared by bon and beam.
fn make_verify_fn<'a, B: Backend>(
    ctx: &'a Ctx,
    backend: &'a B,
    method: VerifyMethod,
) -> impl Fn(&StepwiseSolution) -> Result<VerifierScore, VerifyError> + Sync + 'a {
    move |solution: &StepwiseSolution| {
        let cfg = ctx.config.verify.to_verify_config(
            &ctx.config.models.verifier,
            Some(derive_seed(ctx.seed, &format!("verify:{}", solution.id))),
            1,
        );
        match method {
            VerifyMethod::Parallel => parallel_score(backend, solution, &cfg),
            VerifyMethod::Sequential => sequential_score(backend, solution, &cfg),
            _ => think_score(backend, solution, &cfg),
        }
    }
}

fn selection_outputs(
    ctx: &Ctx,
    command: &str,
    budget: f64,
    rows: Vec<SelectionRow>,
    trace: Trace,
    started: u64,
) -> Result<(), CliError> {
    let tokens: u64 = rows.iter().map(|r| r.tokens_spent).sum();
    let flops: f64 = rows.iter().map(|r| r.flops_estimate).sum();
    let with_gold: Vec<&SelectionRow> = rows.iter().filter(|r| r.correct.is_some()).collect();
    let accuracy = if with_gold.is_empty() {
        None
    } else {
        Some(
            with_gold.iter().filter(|r| r.correct == Some(true)).count() as f64
                / with_gold.len() as f64,
        )
    };
    write_jsonl(&ctx.out_dir.join("selections.jsonl"), &rows)?;
    write_jsonl(&ctx.out_dir.join("trace.jsonl"), &trace)?;
    let summary = serde_json::json!({
        "problems": rows.len(),
        "budget": budget,
        "accuracy": accuracy,
        "tokens": tokens,
        "flops_estimate": flops,
    });
    write_json(&ctx.out_dir.join("summary.json"), &summary)?;
    if let Some(accuracy) = accuracy {
        write_jsonl(
            &ctx.out_dir.join("results.jsonl"),
            &[ResultRow { budget, metric: accuracy }],
        )?;
    }
    match accuracy {
        Some(a) => println!("{} problems, accuracy {a:.4}", rows.len()),
        None => println!("{} problems (no gold answers supplied)", rows.len()),
    }
    write_manifest(ctx, &ctx.out_dir, command, started, tokens, flops)
}

pub fn select_bon(
    ctx: &Ctx,
    input: &Path,
    n: Option<u32>,
    strategy: Option<&str>,
    verify_method: VerifyMethod,
) -> Result<(), CliError> {
    let started = unix_now();
    let backend = ctx.require_backend()?;
    let prefix_rows: Vec<PrefixRow> = read_jsonl(input)?;
    let n = n.unwrap_or(ctx.config.selection.n);
    let strategy: Strategy = strategy
        .unwrap_or(&ctx.config.selection.strategy)
        .parse()
        .map_err(CliError::Usage)?;
    let verify_fn = make_verify_fn(ctx, &backend, verify_method);

    let mut rows = Vec::new();
    let mut trace = Trace::new();
    for prefix_row in &prefix_rows {
        let problem = prefix_row.to_problem();
        let generator_cfg = GeneratorConfig {
            model: ctx.config.models.generator.clone(),
            temperature: ctx.config.generation.effective_temperature(),
            max_tokens: ctx.config.generation.max_solution_tokens,
            seed: Some(derive_seed(ctx.seed, &format!("gen:{}", problem.id))),
            step_delimiter: ctx.config.generation.step_delimiter.clone(),
            max_in_flight: ctx.max_in_flight,
        };
        let result = best_of_n(
            &backend,
            &problem,
            &generator_cfg,
            &verify_fn,
            n,
            strategy,
            &ctx.config.eval.flops,
            &mut trace,
        )?;
        let correct = problem
            .gold_answer
            .as_deref()
            .map(|gold| canonicalize_answer(gold) == result.chosen_answer);
        rows.push(SelectionRow {
            id: problem.id.clone(),
            chosen_answer: result.chosen_answer,
            strategy: result.strategy,
            group_scores: result.group_scores,
            tokens_spent: result.tokens_spent,
            flops_estimate: result.flops_estimate,
            dropped_samples: result.dropped_samples,
            correct,
        });
    }
    selection_outputs(ctx, "select bon", n as f64, rows, trace, started)
}

pub fn select_beam(
    ctx: &Ctx,
    input: &Path,
    beams: Option<u32>,
    m: Option<u32>,
    max_steps: Option<u32>,
) -> Result<(), CliError> {
    let started = unix_now();
    let backend = ctx.require_backend()?;
    let prefix_rows: Vec<PrefixRow> = read_jsonl(input)?;
    let verify_fn = make_verify_fn(ctx, &backend, VerifyMethod::Think);
    let n_beams = beams.unwrap_or(ctx.config.selection.beam_n);

    let mut rows = Vec::new();
    let mut trace = Trace::new();
    for prefix_row in &prefix_rows {
        let problem = prefix_row.to_problem();
        let cfg = BeamConfig {
            n_beams,
            m: m.unwrap_or(ctx.config.selection.beam_m),
            max_steps: max_steps.unwrap_or(ctx.config.selection.beam_max_steps),
            temperature: ctx.config.selection.beam_temperature,
            step_delimiter: ctx.config.generation.step_delimiter.clone(),
            max_step_tokens: ctx.config.generation.max_step_tokens,
            vote_over_terminated: ctx.config.selection.vote_over_terminated,
            seed: Some(derive_seed(ctx.seed, &format!("beam:{}", problem.id))),
            max_in_flight: ctx.max_in_flight,
        };
        let result = beam_search(
            &backend,
            &problem,
            &ctx.config.models.generator,
            &verify_fn,
            &cfg,
            &ctx.config.eval.flops,
            &mut trace,
        )?;
        let correct = problem
            .gold_answer
            .as_deref()
            .map(|gold| canonicalize_answer(gold) == result.chosen_answer);
        rows.push(SelectionRow {
            id: problem.id.clone(),
            chosen_answer: result.chosen_answer,
            strategy: result.strategy,
            group_scores: result.group_scores,
            tokens_spent: result.tokens_spent,
            flops_estimate: result.flops_estimate,
            dropped_samples: result.dropped_samples,
            correct,
        });
    }
    selection_outputs(ctx, "select beam", n_beams as f64, rows, trace, started)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

pub fn eval(ctx: &Ctx, cmd: EvalCmd) -> Result<(), CliError> {
    match cmd {
        EvalCmd::Processbench {
            gold,
            pred,
            threshold,
            invalid,
            pass_rates,
        } => eval_processbench(ctx, &gold, &pred, threshold, invalid, pass_rates.as_deref()),
        EvalCmd::Report { input } => eval_report(ctx, &input),
    }
}

pub fn eval_processbench(
    ctx: &Ctx,
    gold_path: &Path,
    pred_path: &Path,
    threshold: Option<f64>,
    invalid: Option<crate::metrics::InvalidPolicy>,
    pass_rates: Option<&Path>,
) -> Result<(), CliError> {
    let started = unix_now();
    let gold_rows: Vec<ProcessBenchRow> = read_jsonl(gold_path)?;
    let pred_rows: Vec<PredRow> = read_jsonl(pred_path)?;
    if pred_rows.is_empty() {
        return Err(CliError::Usage("empty predictions".into()));
    }
    let threshold = threshold.unwrap_or(ctx.config.eval.threshold);
    let policy = invalid.unwrap_or(ctx.config.eval.invalid_policy);
    let by_id: HashMap<&str, &PredRow> = pred_rows.iter().map(|p| (p.id.as_str(), p)).collect();

    let mut items = Vec::with_capacity(gold_rows.len());
    for gold in &gold_rows {
        let pred = by_id
            .get(gold.id.as_str())
            .ok_or_else(|| CliError::Io(format!("no prediction for item {}", gold.id)))?;
        items.push(EvalItem {
            id: gold.id.clone(),
            gold_has_error: gold.gold_has_error(),
            predicted: pred.to_predicted(threshold),
        });
    }

    let mut metrics: IndexMap<String, f64> = IndexMap::new();
    metrics.insert("binary_f1".into(), binary_f1(&items, policy)?);
    match harmonic_subset_f1(&items) {
        Ok(value) => {
            metrics.insert("harmonic_subset_f1".into(), value);
        }
        Err(MetricsError::MissingSubset(which)) => {
            eprintln!("warning: harmonic_subset_f1 omitted ({which} subset is empty)");
        }
        Err(other) => return Err(other.into()),
    }
    metrics.insert("invalid_rate".into(), invalid_rate_items(&items)?);

    if let Some(rates_path) = pass_rates {
        let rate_rows: Vec<PassRateRow> = read_jsonl(rates_path)?;
        let rate_by_id: HashMap<&str, f64> =
            rate_rows.iter().map(|r| (r.id.as_str(), r.rate)).collect();
        let rates: Vec<f64> = items
            .iter()
            .map(|item| {
                rate_by_id
                    .get(item.id.as_str())
                    .copied()
                    .ok_or_else(|| CliError::Io(format!("no pass rate for item {}", item.id)))
            })
            .collect::<Result<_, _>>()?;
        let n_bins = ctx.config.eval.n_difficulty_bins;
        let bins = difficulty_bins(&rates, n_bins);
        for bin in 0..n_bins {
            let subset: Vec<EvalItem> = items
                .iter()
                .zip(&bins)
                .filter(|(_, b)| **b == bin)
                .map(|(item, _)| item.clone())
                .collect();
            metrics.insert(format!("bin{bin}_count"), subset.len() as f64);
            if !subset.is_empty() {
                metrics.insert(format!("bin{bin}_binary_f1"), binary_f1(&subset, policy)?);
            }
        }
    }

    let config_hash = ctx.config.hash();
    let id = run_id(&config_hash, "eval processbench", ctx.seed);
    let report = RunReport {
        run_id: id.clone(),
        config_hash,
        seed: ctx.seed,
        metrics,
        per_item: items
            .iter()
            .map(|i| serde_json::to_value(i).expect("item serializes"))
            .collect(),
        curve: Vec::new(),
    };
    let dir = ctx.out_dir.join(&id);
    emit_report(&report, &dir)?;
    println!(
        "binary_f1 {:.6}  invalid_rate {:.6}  ({} items) -> {}",
        report.metrics["binary_f1"],
        report.metrics["invalid_rate"],
        items.len(),
        dir.display()
    );
    write_manifest(ctx, &dir, "eval processbench", started, 0, 0.0)
}

pub fn eval_report(ctx: &Ctx, input: &Path) -> Result<(), CliError> {
    let started = unix_now();
    let rows: Vec<ResultRow> = read_jsonl(input)?;
    if rows.is_empty() {
        return Err(CliError::Usage("empty results".into()));
    }
    let config_hash = ctx.config.hash();
    let id = run_id(&config_hash, "eval report", ctx.seed);
    let mut metrics = IndexMap::new();
    metrics.insert("points".to_string(), rows.len() as f64);
    let report = RunReport {
        run_id: id.clone(),
        config_hash,
        seed: ctx.seed,
        metrics,
        per_item: Vec::new(),
        curve: rows
            .iter()
            .map(|r| CurvePoint { budget: r.budget, metric: r.metric })
            .collect(),
    };
    let dir = ctx.out_dir.join(&id);
    emit_report(&report, &dir)?;
    println!("wrote scaling curve with {} points -> {}", rows.len(), dir.display());
    write_manifest(ctx, &dir, "eval report", started, 0, 0.0)
}
