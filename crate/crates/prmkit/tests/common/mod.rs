//! Shared fixtures for integration tests: chain synthesis with notation
//! variants, scripted beam-search trees, and a full mock pipeline setup.

#![allow(dead_code)]

use indexmap::IndexMap;
use rand::rngs::SmallRng;
use rand::Rng;

use prmkit::backend::{MockScript, ScriptResponse};
use prmkit::types::{StepLabel, StepwiseSolution};
use prmkit::verifier::{VerifierScore, VerifyError};

// ---------------------------------------------------------------------------
// Chain synthesis
// ---------------------------------------------------------------------------

const FILLER: &[&str] = &[
    "Let me look at this step closely.",
    "The algebra here follows from the previous line.",
    "Substituting the value gives the stated result.",
    "This simplification is standard.",
    "Checking the arithmetic once more.",
];

fn verdict_variant(rng: &mut SmallRng, label: StepLabel) -> String {
    let word = label.as_str();
    let cased = match rng.random_range(0..3) {
        0 => word.to_string(),
        1 => {
            let mut c = word.chars();
            c.next().map(|f| f.to_uppercase().collect::<String>() + c.as_str()).unwrap()
        }
        _ => word.to_uppercase(),
    };
    match rng.random_range(0..3) {
        0 => format!("\\boxed{{{cased}}}"),
        1 => format!("\\boxed{{ {cased} }}"),
        _ => format!("\\boxed{{  {cased}}}"),
    }
}

/// A verification chain with known labels, random decorations, and random
/// notation variants, optionally ending with a final yes/no and trailing
/// chatter.
pub fn synthesize_chain(rng: &mut SmallRng, labels: &[StepLabel]) -> String {
    let mut text = String::from("Let me verify each step.\n");
    for (i, label) in labels.iter().enumerate() {
        if rng.random_bool(0.6) {
            text.push_str(FILLER[rng.random_range(0..FILLER.len())]);
            text.push('\n');
        }
        text.push_str(&format!(
            "Step {}: the step is {}\n",
            i + 1,
            verdict_variant(rng, *label)
        ));
    }
    if rng.random_bool(0.5) {
        let all_correct = labels.iter().all(|l| *l == StepLabel::Correct);
        text.push_str(&format!(
            "Overall: \\boxed{{{}}}\n",
            if all_correct { "yes" } else { "no" }
        ));
    }
    if rng.random_bool(0.4) {
        text.push_str("And that concludes the verification with some chatter.");
    }
    text
}

pub fn random_labels(rng: &mut SmallRng, max_len: usize) -> Vec<StepLabel> {
    (0..rng.random_range(1..=max_len))
        .map(|_| {
            if rng.random_bool(0.85) {
                StepLabel::Correct
            } else {
                StepLabel::Incorrect
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Scripted beam-search trees
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub step_text: String,
    pub score: f64,
    pub children: Vec<TreeNode>,
}

#[derive(Debug, Clone)]
pub struct TreeFixture {
    pub roots: Vec<TreeNode>,
    pub max_branching: usize,
    pub n_leaves: usize,
}

/// Random tree with unique node step texts, distinct node scores, and boxed
/// answers on the leaves.
pub fn random_tree(rng: &mut SmallRng, tree_id: usize, max_depth: usize, max_branching: usize) -> TreeFixture {
    // Distinct scores from a shuffled deck avoid tie ambiguity against the
    // brute-force oracle.
    let mut deck: Vec<f64> = (1..=200).map(|k| k as f64 / 201.0).collect();
    for i in (1..deck.len()).rev() {
        deck.swap(i, rng.random_range(0..=i));
    }
    let mut next_score = deck.into_iter();
    let mut next_id = 0usize;
    let mut n_leaves = 0usize;

    fn build(
        rng: &mut SmallRng,
        tree_id: usize,
        depth: usize,
        max_depth: usize,
        max_branching: usize,
        next_id: &mut usize,
        next_score: &mut impl Iterator<Item = f64>,
        n_leaves: &mut usize,
    ) -> TreeNode {
        let id = *next_id;
        *next_id += 1;
        let is_leaf = depth >= max_depth || (depth > 0 && rng.random_bool(0.25));
        let step_text = if is_leaf {
            *n_leaves += 1;
            format!("[t{tree_id}n{id:03}] final answer \\boxed{{ans{id}}}")
        } else {
            format!("[t{tree_id}n{id:03}] intermediate reasoning")
        };
        let children = if is_leaf {
            Vec::new()
        } else {
            (0..rng.random_range(1..=max_branching))
                .map(|_| {
                    build(rng, tree_id, depth + 1, max_depth, max_branching, next_id, next_score, n_leaves)
                })
                .collect()
        };
        TreeNode {
            step_text,
            score: next_score.next().expect("deck large enough"),
            children,
        }
    }

    let n_roots = rng.random_range(1..=max_branching);
    let roots: Vec<TreeNode> = (0..n_roots)
        .map(|_| {
            build(
                rng,
                tree_id,
                1,
                max_depth,
                max_branching,
                &mut next_id,
                &mut next_score,
                &mut n_leaves,
            )
        })
        .collect();
    TreeFixture {
        roots,
        max_branching,
        n_leaves,
    }
}

impl TreeFixture {
    /// Prefix table keyed by joined step paths.
    pub fn prefix_table(&self, delimiter: &str) -> IndexMap<String, Vec<String>> {
        let mut table: IndexMap<String, Vec<String>> = IndexMap::new();
        table.insert(
            String::new(),
            self.roots.iter().map(|r| r.step_text.clone()).collect(),
        );
        fn walk(
            node: &TreeNode,
            path: &[String],
            delimiter: &str,
            table: &mut IndexMap<String, Vec<String>>,
        ) {
            let mut here = path.to_vec();
            here.push(node.step_text.clone());
            if !node.children.is_empty() {
                table.insert(
                    here.join(delimiter),
                    node.children.iter().map(|c| c.step_text.clone()).collect(),
                );
                for child in &node.children {
                    walk(child, &here, delimiter, table);
                }
            }
        }
        for root in &self.roots {
            walk(root, &[], delimiter, &mut table);
        }
        table
    }

    pub fn script(&self, delimiter: &str) -> MockScript {
        MockScript::new().with_prefix_table(self.prefix_table(delimiter))
    }

    /// Path-keyed score map for the verifier hook.
    pub fn score_map(&self) -> std::collections::HashMap<String, f64> {
        let mut map = std::collections::HashMap::new();
        fn walk(node: &TreeNode, path: &[String], map: &mut std::collections::HashMap<String, f64>) {
            let mut here = path.to_vec();
            here.push(node.step_text.clone());
            map.insert(here.join("|"), node.score);
            for child in &node.children {
                walk(child, &here, map);
            }
        }
        for root in &self.roots {
            walk(root, &[], &mut map);
        }
        map
    }

    pub fn verify_fn(
        &self,
    ) -> impl Fn(&StepwiseSolution) -> Result<VerifierScore, VerifyError> + Sync {
        let map = self.score_map();
        move |solution: &StepwiseSolution| {
            let key = solution.steps.join("|");
            let value = *map.get(&key).unwrap_or_else(|| panic!("unknown prefix {key:?}"));
            Ok(VerifierScore {
                value,
                method: prmkit::verifier::ScoreMethod::Think,
                chains_used: 1,
                rounds_used: 1,
                tokens_spent: 3,
                chains: Vec::new(),
            })
        }
    }

    /// Exhaustive root-to-leaf enumeration: (answer, leaf score) of the best
    /// leaf by score.
    pub fn best_leaf(&self) -> (String, f64) {
        let mut best: Option<(String, f64)> = None;
        fn walk(node: &TreeNode, best: &mut Option<(String, f64)>) {
            if node.children.is_empty() {
                let answer = prmkit::answer::canonical_final_answer(&node.step_text);
                match best {
                    Some((_, s)) if *s >= node.score => {}
                    _ => *best = Some((answer, node.score)),
                }
            }
            for child in &node.children {
                walk(child, best);
            }
        }
        for root in &self.roots {
            walk(root, &mut best);
        }
        best.expect("tree has leaves")
    }
}

// ---------------------------------------------------------------------------
// Pipeline fixture (datagen -> filter -> finalize -> bon -> eval)
// ---------------------------------------------------------------------------

pub struct PipelineFixture {
    pub script: MockScript,
    pub prefix_rows: Vec<serde_json::Value>,
    pub problem_rows: Vec<serde_json::Value>,
}

/// Deterministic mock setup covering chain sampling for six labeled
/// prefixes and best-of-N over two problems with scored solutions.
pub fn pipeline_fixture() -> PipelineFixture {
    let mut script = MockScript::new();
    let mut prefix_rows = Vec::new();

    for i in 0..6 {
        let labels: Vec<StepLabel> = if i % 2 == 0 {
            vec![StepLabel::Correct, StepLabel::Correct]
        } else {
            vec![StepLabel::Correct, StepLabel::Incorrect]
        };
        let answer_correct = i % 2 == 0;
        let problem = format!("dg-problem-{i}: compute the value");
        prefix_rows.push(serde_json::json!({
            "id": format!("q{i}#p0"),
            "problem": problem,
            "steps": ["first manipulation", "final deduction"],
            "step_labels": labels.iter().map(|l| if *l == StepLabel::Correct { 1 } else { -1 }).collect::<Vec<i32>>(),
            "final_answer": "42",
            "answer_correct": answer_correct,
        }));
        let good = format!(
            "Step 1 holds: \\boxed{{{}}}\nStep 2 holds: \\boxed{{{}}}",
            labels[0].as_str(),
            labels[1].as_str()
        );
        let flipped = format!(
            "Step 1 holds: \\boxed{{{}}}\nStep 2 holds: \\boxed{{{}}}",
            labels[0].as_str(),
            match labels[1] {
                StepLabel::Correct => "incorrect",
                StepLabel::Incorrect => "correct",
            }
        );
        script = script.with_pattern(
            &problem,
            vec![
                ScriptResponse::text(good.clone()),
                ScriptResponse::text(flipped),
                // Overlong: matches gold but blows the 4096 budget.
                ScriptResponse::text(good).with_tokens(5000),
                ScriptResponse::text("Step 1 only: \\boxed{correct}"),
            ],
        );
    }

    let mut problem_rows = Vec::new();
    for p in 0..2 {
        let problem = format!("bon-problem-{p}: find the answer");
        problem_rows.push(serde_json::json!({
            "id": format!("bp{p}"),
            "problem": problem,
            "steps": [],
            "final_answer": "ok",
        }));
        // Three solution variants; two reach the gold answer.
        let solutions: Vec<ScriptResponse> = (0..3)
            .map(|v| {
                let answer = if v == 1 { "bad" } else { "ok" };
                ScriptResponse::text(format!(
                    "sol-p{p}-v{v} works through it\n\n\\boxed{{{answer}}}"
                ))
            })
            .collect();
        for v in 0..3 {
            // Verification chain for each candidate solution, matched on the
            // unique solution marker; listed before the generation entry so
            // verification prompts (which also contain the problem text) hit
            // these first.
            script = script.with_pattern(
                &format!("sol-p{p}-v{v}"),
                vec![ScriptResponse::text(
                    "Step check: \\boxed{correct}\nStep check: \\boxed{correct}",
                )],
            );
            let value: f64 = match v {
                0 => 0.9,
                1 => 0.4,
                _ => 0.7,
            };
            script = script.with_logprobs(
                &format!("sol-p{p}-v{v}"),
                &[("yes", value.ln()), ("no", (1.0 - value).ln())],
            );
        }
        script = script.with_pattern(&problem, solutions);
    }

    PipelineFixture {
        script,
        prefix_rows,
        problem_rows,
    }
}

pub fn write_jsonl_values(path: &std::path::Path, rows: &[serde_json::Value]) {
    let mut buffer = String::new();
    for row in rows {
        buffer.push_str(&row.to_string());
        buffer.push('\n');
    }
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, buffer).unwrap();
}
