//! Acceptance suite: one test per criterion, each printing a PASS/SKIP line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).

mod common;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use common::{pipeline_fixture, random_labels, random_tree, synthesize_chain, write_jsonl_values};
use prmkit::backend::{Backend, CachedBackend, MockBackend, MockScript, ScriptResponse};
use prmkit::cli::commands::{
    datagen_filter, datagen_finalize, datagen_sample, eval_report, select_bon,
};
use prmkit::cli::rows::{read_jsonl, ResultRow, StatsRow};
use prmkit::cli::{Config, Ctx, FilterMode, RunManifest, VerifyMethod};
use prmkit::cot::{clean_chain, parse_step_verdicts, ChainParser, VerificationChain};
use prmkit::cli::DatagenSection;
use prmkit::datagen::{outcome_filter, process_filter, stats, FilterDecision, RejectReason};
use prmkit::metrics::{
    binary_f1, difficulty_bins, harmonic_subset_f1, invalid_rate_chains, invalid_rate_items,
    EvalItem, InvalidPolicy, Predicted,
};
use prmkit::select::{
    beam_search, majority_vote, max_score_select, weighted_majority_vote, BeamConfig,
    Problem, ScoredSolution, Trace, TraceRecord,
};
use prmkit::types::{StepLabel, StepwiseSolution};
use prmkit::verifier::{
    sequential_score, think_score, ScoreMethod, VerifierScore, VerifyConfig,
};

fn solution() -> StepwiseSolution {
    StepwiseSolution::new(
        "accept-1",
        "compute the quantity",
        vec!["manipulate".into(), "conclude \\boxed{4}".into()],
    )
}

fn scoring_backend(lp_yes: f64, lp_no: f64) -> MockBackend {
    let script = MockScript::new()
        .with_pattern(
            "compute the quantity",
            vec![ScriptResponse::text("s1 \\boxed{correct} s2 \\boxed{correct}")],
        )
        .with_logprobs("Is the solution correct?", &[("yes", lp_yes), ("no", lp_no)]);
    MockBackend::new(script, 0).unwrap()
}

#[test]
fn criterion_1_scoring_formula() {
    let started = Instant::now();
    let cfg = VerifyConfig {
        seed: Some(3),
        ..VerifyConfig::default()
    };
    let mut rng = SmallRng::seed_from_u64(101);
    for case in 0..1000 {
        let lp_yes = -rng.random_range(0.001..12.0);
        let lp_no = if case % 50 == 0 {
            lp_yes // exercise the exact-tie path
        } else {
            -rng.random_range(0.001..12.0)
        };
        let value = think_score(&scoring_backend(lp_yes, lp_no), &solution(), &cfg)
            .unwrap()
            .value;
        let p_yes = lp_yes.exp();
        let p_no = lp_no.exp();
        let expected = p_yes / (p_yes + p_no);
        assert!(
            (value - expected).abs() <= 1e-12,
            "case {case}: value {value} vs expected {expected}"
        );
        let swapped = think_score(&scoring_backend(lp_no, lp_yes), &solution(), &cfg)
            .unwrap()
            .value;
        assert_eq!(
            swapped.to_bits(),
            (1.0 - value).to_bits(),
            "case {case}: swap symmetry violated"
        );
        assert!((0.0..=1.0).contains(&value));
    }
    assert!(started.elapsed() < Duration::from_secs(5), "criterion 1 exceeded 5 s");
    println!("ACCEPTANCE 1 (scoring formula, 1000 random pairs + swap symmetry): PASS");
}

fn vscore(value: f64) -> VerifierScore {
    VerifierScore {
        value,
        method: ScoreMethod::Think,
        chains_used: 1,
        rounds_used: 1,
        tokens_spent: 1,
        chains: Vec::new(),
    }
}

fn scored(answer: &str, value: f64) -> ScoredSolution {
    ScoredSolution::new(
        StepwiseSolution::new("s", "p", vec![format!("\\boxed{{{answer}}}")]),
        vscore(value),
    )
}

mod oracle {
    use prmkit::select::ScoredSolution;

    fn group_order(items: &[ScoredSolution]) -> Vec<String> {
        let mut order: Vec<String> = Vec::new();
        for item in items {
            if !order.contains(&item.canonical_answer) {
                order.push(item.canonical_answer.clone());
            }
        }
        order
    }

    pub fn weighted(items: &[ScoredSolution]) -> String {
        let mut best: Option<(String, f64)> = None;
        for answer in group_order(items) {
            let weight: f64 = items
                .iter()
                .filter(|i| i.canonical_answer == answer)
                .map(|i| i.score.value)
                .sum();
            if best.as_ref().map(|(_, w)| weight > *w).unwrap_or(true) {
                best = Some((answer, weight));
            }
        }
        best.unwrap().0
    }

    pub fn majority(items: &[ScoredSolution]) -> String {
        let mut best: Option<(String, usize)> = None;
        for answer in group_order(items) {
            let count = items.iter().filter(|i| i.canonical_answer == answer).count();
            if best.as_ref().map(|(_, c)| count > *c).unwrap_or(true) {
                best = Some((answer, count));
            }
        }
        best.unwrap().0
    }

    pub fn max_score(items: &[ScoredSolution]) -> String {
        let mut best = &items[0];
        for item in &items[1..] {
            if item.score.value > best.score.value {
                best = item;
            }
        }
        best.canonical_answer.clone()
    }
}

#[test]
fn criterion_2_selection_oracles() {
    let started = Instant::now();
    let mut rng = SmallRng::seed_from_u64(202);
    for case in 0..1000 {
        let n = rng.random_range(1..=16);
        let items: Vec<ScoredSolution> = (0..n)
            .map(|_| {
                scored(
                    &format!("ans{}", rng.random_range(0..5)),
                    rng.random_range(0..=64) as f64 / 64.0,
                )
            })
            .collect();
        assert_eq!(
            weighted_majority_vote(&items).unwrap().chosen_answer,
            oracle::weighted(&items),
            "case {case}: weighted vote diverged"
        );
        assert_eq!(
            majority_vote(&items).unwrap().chosen_answer,
            oracle::majority(&items),
            "case {case}: majority vote diverged"
        );
        assert_eq!(
            max_score_select(&items).unwrap().chosen_answer,
            oracle::max_score(&items),
            "case {case}: max-score diverged"
        );
        // Positive-scaling argmax invariance (exact power-of-two scale).
        let scaled: Vec<ScoredSolution> = items
            .iter()
            .map(|i| {
                let mut s = i.clone();
                s.score.value *= 0.5;
                s
            })
            .collect();
        assert_eq!(
            weighted_majority_vote(&items).unwrap().chosen_answer,
            weighted_majority_vote(&scaled).unwrap().chosen_answer,
            "case {case}: scaling changed the weighted winner"
        );
        assert_eq!(
            max_score_select(&items).unwrap().chosen_answer,
            max_score_select(&scaled).unwrap().chosen_answer,
            "case {case}: scaling changed the max-score winner"
        );
    }
    assert!(started.elapsed() < Duration::from_secs(10), "criterion 2 exceeded 10 s");
    println!("ACCEPTANCE 2 (selection oracles, 1000 random sets + scaling invariance): PASS");
}

#[test]
fn criterion_3_beam_search_oracle_and_invariants() {
    let started = Instant::now();
    let mut rng = SmallRng::seed_from_u64(303);
    let problem = Problem {
        id: "tree".into(),
        problem: "walk the scripted tree".into(),
        gold_answer: None,
    };
    for tree_id in 0..50 {
        let depth = rng.random_range(1..=4);
        let fixture = random_tree(&mut rng, tree_id, depth, 3);
        let backend = MockBackend::new(fixture.script("\n\n"), 0).unwrap();
        let verify = fixture.verify_fn();

        // Wide beam: selected path equals exhaustive enumeration.
        let mut trace = Trace::new();
        let cfg = BeamConfig {
            n_beams: fixture.n_leaves as u32,
            m: 3,
            max_steps: 10,
            seed: Some(1),
            ..BeamConfig::default()
        };
        let result = beam_search(
            &backend,
            &problem,
            "generator",
            &verify,
            &cfg,
            &prmkit::metrics::FlopsModel::default(),
            &mut trace,
        )
        .unwrap();
        let (best_answer, best_score) = fixture.best_leaf();
        assert_eq!(
            result.chosen_answer, best_answer,
            "tree {tree_id}: wide beam missed the optimum (score {best_score})"
        );

        // Narrow beams: count and prefix-extension invariants per round.
        for n_beams in [1u32, 2] {
            let mut trace = Trace::new();
            let cfg = BeamConfig {
                n_beams,
                m: 3,
                max_steps: 10,
                seed: Some(1),
                ..BeamConfig::default()
            };
            beam_search(
                &backend,
                &problem,
                "generator",
                &verify,
                &cfg,
                &prmkit::metrics::FlopsModel::default(),
                &mut trace,
            )
            .unwrap();
            let mut retained_prev: HashSet<u64> = HashSet::new();
            let mut terminated_ever: HashSet<u64> = HashSet::new();
            let mut by_round: BTreeMap<u32, Vec<&TraceRecord>> = BTreeMap::new();
            for record in &trace {
                if let TraceRecord::BeamNode { round, .. } = record {
                    by_round.entry(*round).or_default().push(record);
                }
            }
            for (round, records) in &by_round {
                let retained: Vec<_> = records
                    .iter()
                    .filter_map(|r| match r {
                        TraceRecord::BeamNode {
                            creation,
                            parent,
                            terminated,
                            retained: true,
                            ..
                        } => Some((*creation, *parent, *terminated)),
                        _ => None,
                    })
                    .collect();
                assert!(
                    retained.len() <= n_beams as usize,
                    "tree {tree_id} round {round}: beam overfull"
                );
                for (creation, parent, _) in &retained {
                    if let Some(parent) = parent {
                        if !retained_prev.is_empty() && !retained_prev.contains(creation) {
                            assert!(
                                retained_prev.contains(parent),
                                "tree {tree_id} round {round}: node {creation} extends unretained {parent}"
                            );
                        }
                    }
                    // Terminated nodes are never extended.
                    if let Some(parent) = parent {
                        assert!(
                            !terminated_ever.contains(parent),
                            "tree {tree_id} round {round}: extended a terminated node"
                        );
                    }
                }
                retained_prev = retained.iter().map(|(c, _, _)| *c).collect();
                terminated_ever
                    .extend(retained.iter().filter(|(_, _, t)| *t).map(|(c, _, _)| *c));
            }
        }
    }
    assert!(started.elapsed() < Duration::from_secs(30), "criterion 3 exceeded 30 s");
    println!("ACCEPTANCE 3 (beam search vs exhaustive enumeration on 50 trees): PASS");
}

#[test]
fn criterion_4_filtering_oracle() {
    // Chains are generated with known defects; the oracle re-derives each
    // decision from the generation metadata alone.
    #[derive(Clone, Copy, PartialEq, Debug)]
    enum Defect {
        None,
        Missing,
        Extra,
        Mismatch,
        Overlong,
    }
    use StepLabel::{Correct as C, Incorrect as I};

    let parser = ChainParser::default();
    let mut rng = SmallRng::seed_from_u64(404);
    let mut keeps = 0;
    for case in 0..200 {
        let defect = match case % 5 {
            0 => Defect::None,
            1 => Defect::Missing,
            2 => Defect::Extra,
            3 => Defect::Mismatch,
            _ => Defect::Overlong,
        };
        let n = rng.random_range(1..=5);
        let gold: Vec<StepLabel> =
            (0..n).map(|_| if rng.random_bool(0.8) { C } else { I }).collect();
        let mut verdicts = gold.clone();
        match defect {
            Defect::Missing => {
                verdicts.pop();
            }
            Defect::Extra => verdicts.push(C),
            Defect::Mismatch => {
                let at = rng.random_range(0..n);
                verdicts[at] = match verdicts[at] {
                    C => I,
                    I => C,
                };
            }
            _ => {}
        }
        let token_count = if defect == Defect::Overlong { 5000 } else { 300 };
        let text = verdicts
            .iter()
            .enumerate()
            .map(|(i, l)| format!("step {} gets \\boxed{{{}}}", i + 1, l.as_str()))
            .collect::<Vec<_>>()
            .join("\n");
        let chain = parser.analyze(format!("c{case}"), text, n, 4096, token_count);
        let answer_correct = rng.random_bool(0.5);

        // Independent process oracle from the metadata.
        let expected_process = if verdicts.len() != gold.len() {
            FilterDecision::Reject(RejectReason::Format)
        } else if verdicts.iter().zip(&gold).any(|(v, g)| v != g) {
            FilterDecision::Reject(RejectReason::Mismatch)
        } else if token_count > 4096 {
            FilterDecision::Reject(RejectReason::Overlong)
        } else {
            FilterDecision::Keep
        };
        let got = process_filter(&chain, &gold, 4096);
        assert_eq!(got, expected_process, "case {case} ({defect:?})");
        if got.is_keep() {
            keeps += 1;
        }

        // Independent outcome oracle.
        let expected_outcome = match verdicts.last() {
            None => FilterDecision::Reject(RejectReason::Format),
            Some(last) => {
                if (answer_correct && *last == C) || (!answer_correct && *last == I) {
                    FilterDecision::Keep
                } else {
                    FilterDecision::Reject(RejectReason::Mismatch)
                }
            }
        };
        assert_eq!(outcome_filter(&chain, answer_correct), expected_outcome, "case {case}");
    }
    assert!(keeps > 0);
    // Config audit: filter thresholds ship at the documented default.
    assert_eq!(DatagenSection::default().max_chain_tokens, 4096);
    assert_eq!(Config::default().datagen.max_chain_tokens, 4096);
    println!("ACCEPTANCE 4 (200-chain filter corpus vs oracle, 4096 audit): PASS");
}

#[test]
fn criterion_5_parser_round_trip() {
    let mut rng = SmallRng::seed_from_u64(505);
    for case in 0..1000 {
        let labels = random_labels(&mut rng, 12);
        let text = synthesize_chain(&mut rng, &labels);
        let parsed: Vec<StepLabel> = parse_step_verdicts(&text).iter().map(|v| v.label).collect();
        assert_eq!(parsed, labels, "case {case}: labels not recovered from {text:?}");
        let once = clean_chain(&text).unwrap();
        let twice = clean_chain(&once).unwrap();
        assert_eq!(once, twice, "case {case}: clean_chain not idempotent");
    }
    println!("ACCEPTANCE 5 (1000 synthesized chains: 100% label recovery, clean idempotent): PASS");
}

#[test]
fn criterion_6_metrics_fixtures_and_oracles() {
    // binary F1 on the fixed confusion fixture.
    let items = vec![
        EvalItem { id: "a".into(), gold_has_error: true, predicted: Predicted::Incorrect },
        EvalItem { id: "b".into(), gold_has_error: true, predicted: Predicted::Correct },
        EvalItem { id: "c".into(), gold_has_error: false, predicted: Predicted::Correct },
        EvalItem { id: "d".into(), gold_has_error: false, predicted: Predicted::Incorrect },
    ];
    assert!((binary_f1(&items, InvalidPolicy::AsWrong).unwrap() - 0.5).abs() <= 1e-12);

    // harmonic subset F1 at accuracies 0.6 / 0.8.
    let mut fixture = Vec::new();
    for i in 0..5 {
        fixture.push(EvalItem {
            id: format!("e{i}"),
            gold_has_error: true,
            predicted: if i < 3 { Predicted::Incorrect } else { Predicted::Correct },
        });
        fixture.push(EvalItem {
            id: format!("o{i}"),
            gold_has_error: false,
            predicted: if i < 4 { Predicted::Correct } else { Predicted::Incorrect },
        });
    }
    let harmonic = harmonic_subset_f1(&fixture).unwrap();
    assert!((harmonic - 0.6857142857142857).abs() <= 1e-12);

    // invalid_rate and difficulty_bins against counting oracles.
    let mut rng = SmallRng::seed_from_u64(606);
    let random_items: Vec<EvalItem> = (0..500)
        .map(|i| EvalItem {
            id: format!("r{i}"),
            gold_has_error: rng.random_bool(0.5),
            predicted: match rng.random_range(0..4) {
                0 => Predicted::Invalid,
                1 => Predicted::Incorrect,
                _ => Predicted::Correct,
            },
        })
        .collect();
    let expected_invalid = random_items
        .iter()
        .filter(|i| matches!(i.predicted, Predicted::Invalid))
        .count() as f64
        / random_items.len() as f64;
    assert!((invalid_rate_items(&random_items).unwrap() - expected_invalid).abs() <= 1e-12);

    let parser = ChainParser::default();
    let chains: Vec<VerificationChain> = (0..100)
        .map(|i| {
            let text = if i % 4 == 0 { "no labels" } else { "one \\boxed{correct}" };
            parser.analyze(format!("c{i}"), text, 1, 4096, 10)
        })
        .collect();
    let expected = chains.iter().filter(|c| !c.status.is_valid()).count() as f64 / 100.0;
    assert!((invalid_rate_chains(&chains).unwrap() - expected).abs() <= 1e-12);

    let rates: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..=1.0)).collect();
    let bins = difficulty_bins(&rates, 4);
    for (rate, bin) in rates.iter().zip(&bins) {
        let expected = if *rate < 0.25 {
            0
        } else if *rate < 0.5 {
            1
        } else if *rate < 0.75 {
            2
        } else {
            3
        };
        assert_eq!(*bin, expected);
    }
    println!("ACCEPTANCE 6 (metric fixtures within 1e-12, counting oracles): PASS");
}

#[test]
fn criterion_7_budget_forcing() {
    let script = MockScript::new()
        .with_pattern("Did I miss something?", vec![ScriptResponse::text("round4 \\boxed{correct}")])
        .with_pattern("Let's verify again", vec![ScriptResponse::text("round3 re-check")])
        .with_pattern("Let me double check", vec![ScriptResponse::text("round2 re-check")])
        .with_pattern(
            "compute the quantity",
            vec![ScriptResponse::text("round1 \\boxed{correct} \\boxed{correct}")],
        )
        .with_logprobs("Is the solution correct?", &[("yes", -0.3), ("no", -1.4)]);
    let backend = MockBackend::new(script, 0).unwrap();
    let cfg = VerifyConfig {
        seed: Some(5),
        r: 4,
        ..VerifyConfig::default()
    };
    let score = sequential_score(&backend, &solution(), &cfg).unwrap();
    let transcript = &score.chains[0].raw_text;
    let phrases = ["Let me double check", "Let's verify again", "Did I miss something?"];
    let mut last_pos = 0;
    for phrase in phrases {
        assert_eq!(transcript.matches(phrase).count(), 1, "{phrase} must appear exactly once");
        let pos = transcript.find(phrase).unwrap();
        assert!(pos >= last_pos, "{phrase} out of order");
        last_pos = pos;
    }
    assert_eq!(score.rounds_used, 4);

    // R = 1 equals think_score byte-for-byte on the mock.
    let cfg1 = VerifyConfig { r: 1, ..cfg };
    let seq = sequential_score(&backend, &solution(), &cfg1).unwrap();
    let think = think_score(&backend, &solution(), &cfg1).unwrap();
    assert_eq!(seq.chains[0].raw_text.as_bytes(), think.chains[0].raw_text.as_bytes());
    assert_eq!(seq.value.to_bits(), think.value.to_bits());
    assert_eq!(seq.tokens_spent, think.tokens_spent);
    println!("ACCEPTANCE 7 (budget forcing: R=4 phrase order, R=1 equals think): PASS");
}

// ---------------------------------------------------------------------------
// Criterion 8: full-pipeline determinism and cache behavior
// ---------------------------------------------------------------------------

fn pipeline_config(concurrency: usize, cache_dir: &Path) -> Config {
    let mut config = Config::default();
    config.seed = 11;
    config.backend.max_in_flight = concurrency;
    config.backend.cache_dir = Some(cache_dir.to_path_buf());
    config
}

fn pipeline_ctx(
    script: &MockScript,
    config: &Config,
    cache_dir: &Path,
    out_dir: &Path,
) -> Ctx {
    let inner = MockBackend::new(script.clone(), config.seed).unwrap();
    let backend: Box<dyn Backend> = Box::new(CachedBackend::new(inner, cache_dir));
    Ctx::new(config.clone(), Some(backend), out_dir.to_path_buf())
}

/// Runs datagen sample -> filter -> finalize -> bon(n in 1,2,4) -> eval
/// report, one Ctx per command like separate CLI invocations.
fn run_pipeline(
    root: &Path,
    inputs: &Path,
    script: &MockScript,
    concurrency: usize,
    cache_dir: &Path,
) {
    let config = pipeline_config(concurrency, cache_dir);
    let prefixes = inputs.join("prefixes.jsonl");
    let problems = inputs.join("problems.jsonl");

    let sample_dir = root.join("sample");
    datagen_sample(&pipeline_ctx(script, &config, cache_dir, &sample_dir), &prefixes).unwrap();

    let filter_dir = root.join("filter");
    datagen_filter(
        &pipeline_ctx(script, &config, cache_dir, &filter_dir),
        &sample_dir.join("chains.jsonl"),
        &prefixes,
        FilterMode::Process,
        None,
        None,
    )
    .unwrap();

    let finalize_dir = root.join("finalize");
    datagen_finalize(
        &pipeline_ctx(script, &config, cache_dir, &finalize_dir),
        &filter_dir.join("filtered.jsonl"),
        &prefixes,
    )
    .unwrap();

    let mut curve_rows: Vec<ResultRow> = Vec::new();
    for n in [1u32, 2, 4] {
        let bon_dir = root.join(format!("bon{n}"));
        select_bon(
            &pipeline_ctx(script, &config, cache_dir, &bon_dir),
            &problems,
            Some(n),
            Some("weighted"),
            VerifyMethod::Think,
        )
        .unwrap();
        let rows: Vec<ResultRow> = read_jsonl(&bon_dir.join("results.jsonl")).unwrap();
        curve_rows.extend(rows);
    }
    let curve_in = root.join("curve_in.jsonl");
    let values: Vec<serde_json::Value> = curve_rows
        .iter()
        .map(|r| serde_json::json!({"budget": r.budget, "metric": r.metric}))
        .collect();
    write_jsonl_values(&curve_in, &values);

    let report_dir = root.join("report");
    eval_report(&pipeline_ctx(script, &config, cache_dir, &report_dir), &curve_in).unwrap();
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else if path.file_name().and_then(|n| n.to_str()) != Some("manifest.json") {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn manifests(root: &Path) -> Vec<RunManifest> {
    fn walk(dir: &Path, out: &mut Vec<(PathBuf, RunManifest)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, out);
            } else if path.file_name().and_then(|n| n.to_str()) == Some("manifest.json") {
                let manifest: RunManifest =
                    serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
                out.push((path, manifest));
            }
        }
    }
    let mut found = Vec::new();
    walk(root, &mut found);
    found.sort_by(|a, b| a.0.cmp(&b.0));
    found.into_iter().map(|(_, m)| m).collect()
}

#[test]
fn criterion_8_pipeline_determinism_and_cache() {
    let fixture = pipeline_fixture();
    let tmp = tempfile::tempdir().unwrap();
    let inputs = tmp.path().join("inputs");
    write_jsonl_values(&inputs.join("prefixes.jsonl"), &fixture.prefix_rows);
    write_jsonl_values(&inputs.join("problems.jsonl"), &fixture.problem_rows);

    let mut snapshots = Vec::new();
    for concurrency in [1usize, 8] {
        let cache_dir = tmp.path().join(format!("cache-c{concurrency}"));
        for run in [1, 2] {
            let root = tmp.path().join(format!("c{concurrency}r{run}"));
            run_pipeline(&root, &inputs, &fixture.script, concurrency, &cache_dir);
            snapshots.push((concurrency, run, root));
        }
    }

    // Byte-identical data artifacts across reruns and across worker counts.
    let reference = snapshot(&snapshots[0].2);
    assert!(!reference.is_empty());
    for (concurrency, run, root) in &snapshots[1..] {
        let other = snapshot(root);
        assert_eq!(
            reference.keys().collect::<Vec<_>>(),
            other.keys().collect::<Vec<_>>(),
            "file set differs at concurrency {concurrency} run {run}"
        );
        for (path, bytes) in &reference {
            assert_eq!(
                bytes,
                &other[path],
                "artifact {path} differs at concurrency {concurrency} run {run}"
            );
        }
    }

    // Second runs are served entirely from the cache: zero forwarded
    // requests, and exactly as many hits as the first run forwarded.
    for concurrency in [1usize, 8] {
        let first = manifests(&tmp.path().join(format!("c{concurrency}r1")));
        let second = manifests(&tmp.path().join(format!("c{concurrency}r2")));
        assert_eq!(first.len(), second.len());
        let mut first_by_cmd: HashMap<String, &RunManifest> = HashMap::new();
        for m in &first {
            first_by_cmd.insert(m.command.clone() + &m.run_id, m);
        }
        let mut total_second_requests = 0;
        for m in &second {
            total_second_requests += m.requests;
        }
        assert_eq!(
            total_second_requests, 0,
            "second run at concurrency {concurrency} performed backend calls"
        );
        let backend_commands: Vec<&RunManifest> = second
            .iter()
            .filter(|m| m.command == "datagen sample" || m.command == "select bon")
            .collect();
        for m in backend_commands {
            assert!(m.cache_hits > 0, "{} run 2 had no cache hits", m.command);
        }
        // Run 2 serves every request from the cache, so its hit count equals
        // run 1's total traffic (misses plus run-internal hits).
        let first_total: u64 = first.iter().map(|m| m.requests + m.cache_hits).sum();
        let second_hits: u64 = second.iter().map(|m| m.cache_hits).sum();
        assert_eq!(second_hits, first_total, "run 2 hits != run 1 total requests");
    }

    // The scaling-curve CSV has one monotone row per budget.
    let report_root = tmp.path().join("c1r1/report");
    let run_dir = std::fs::read_dir(&report_root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.is_dir())
        .unwrap();
    let csv = std::fs::read_to_string(run_dir.join("curve.csv")).unwrap();
    let budgets: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(budgets, vec![1.0, 2.0, 4.0]);
    println!("ACCEPTANCE 8 (pipeline determinism at concurrency 1 and 8; 100% cache hits): PASS");
}

#[test]
fn criterion_9_released_dataset_statistics() {
    let path = match std::env::var("PRMKIT_THINKPRM_DATA") {
        Ok(path) => PathBuf::from(path),
        Err(_) => {
            println!(
                "ACCEPTANCE 9 (released 1K dataset statistics): SKIP (set PRMKIT_THINKPRM_DATA to the dataset JSONL)"
            );
            return;
        }
    };
    let rows: Vec<StatsRow> = read_jsonl(&path).expect("dataset readable");
    let records: Vec<prmkit::datagen::StatsRecord> = rows.iter().map(|r| r.to_record()).collect();
    let s = stats(&records).unwrap();
    assert_eq!(s.n_solutions, 1000);
    assert_eq!(s.n_correct, 486);
    assert_eq!(s.n_incorrect, 514);
    assert_eq!(s.step_labels_correct, 7474);
    assert_eq!(s.step_labels_incorrect, 625);
    assert_eq!(s.unique_questions, 869);
    assert_eq!(s.steps_avg, 9.5);
    assert_eq!(s.chain_tokens_avg, 1037.0);
    assert_eq!(s.chain_tokens_min, 207);
    assert_eq!(s.chain_tokens_max, 3669);
    println!("ACCEPTANCE 9 (released 1K dataset statistics): PASS");
}

#[test]
fn criterion_10_config_default_audit() {
    let config = Config::default();
    assert_eq!(config.verify.cot_budget_tokens, 8192);
    assert_eq!(config.datagen.max_chain_tokens, 4096);
    assert_eq!(config.datagen.n_per_prefix, 4);
    assert_eq!(config.datagen.temperature, 0.1);
    assert_eq!(config.generation.temperature, 0.8);
    assert_eq!(config.generation.temperature_large, 0.4);
    assert_eq!(config.verify.parallel_temperature, 0.6);
    assert_eq!(config.selection.beam_temperature, 0.6);
    assert_eq!(config.selection.beam_m, 4);
    assert_eq!(config.selection.beam_max_steps, 20);
    assert!(config.verify.r <= 4 && config.verify.r >= 1);
    assert_eq!(config.verify.k, 4);
    assert_eq!(
        config.verify.trigger_phrases,
        vec!["Let me double check", "Let's verify again", "Did I miss something?"]
    );
    assert_eq!(config.verify.forced_suffix, "Is the solution correct?");
    assert_eq!(config.verify.temperature, 0.0);
    assert_eq!(config.generation.step_delimiter, "\n\n");
    assert_eq!(config.eval.pass_at_n, 32);
    assert_eq!(config.eval.n_difficulty_bins, 4);
    assert_eq!(config.datagen.balance_target, 0.5);
    assert_eq!(config.datagen.balance_tolerance, 0.05);
    println!("ACCEPTANCE 10 (config defaults audit): PASS");
}
