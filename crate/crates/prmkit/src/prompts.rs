//! Prompt templates.
//!
//! Templates are plain text assets with named `{placeholder}` slots. Three
//! judge/verification instructions ship built in (`single-yes-no`,
//! `bad-step-index`, `decision-for-each-step`) along with a solution
//! generation instruction; any of them can be overridden from a file via the
//! CLI.

use std::path::Path;

use crate::cot::THINK_CLOSE;

/// Built-in template: critique and label every step.
pub const DECISION_FOR_EACH_STEP: &str = include_str!("../assets/decision_for_each_step.txt");
/// Built-in template: single overall yes/no judgment.
pub const SINGLE_YES_NO: &str = include_str!("../assets/single_yes_no.txt");
/// Built-in template: locate the first bad step, then judge.
pub const BAD_STEP_INDEX: &str = include_str!("../assets/bad_step_index.txt");
/// Built-in template: step-by-step solution generation with a boxed answer.
pub const GENERATE_SOLUTION: &str = include_str!("../assets/generate_solution.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub text: String,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        PromptTemplate {
            name: name.into(),
            text: text.into(),
        }
    }

    /// Look up a built-in template by name.
    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "decision-for-each-step" => DECISION_FOR_EACH_STEP,
            "single-yes-no" => SINGLE_YES_NO,
            "bad-step-index" => BAD_STEP_INDEX,
            "generate-solution" => GENERATE_SOLUTION,
            _ => return None,
        };
        Some(PromptTemplate::new(name, text))
    }

    /// Resolve a name to a built-in, or treat it as a file path.
    pub fn resolve(name_or_path: &str) -> std::io::Result<Self> {
        if let Some(t) = PromptTemplate::builtin(name_or_path) {
            return Ok(t);
        }
        let text = std::fs::read_to_string(Path::new(name_or_path))?;
        Ok(PromptTemplate::new(name_or_path, text))
    }

    pub fn has_placeholder(&self, name: &str) -> bool {
        self.text.contains(&format!("{{{name}}}"))
    }

    /// Replace each `{name}` placeholder with its value.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = self.text.clone();
        for (name, value) in vars {
            out = out.replace(&format!("{{{name}}}"), value);
        }
        out
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::builtin("decision-for-each-step").expect("built-in exists")
    }
}

/// Render solution steps for a verification prompt: one numbered line per step.
pub fn render_steps(steps: &[String]) -> String {
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| format!("Step {}: {}", i + 1, s))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Verification prompt over a problem and its pre-segmented solution steps.
pub fn verification_prompt(template: &PromptTemplate, problem: &str, steps: &[String]) -> String {
    template.render(&[("problem", problem), ("solution", &render_steps(steps))])
}

/// Generation prompt asking for a fresh step-by-step solution.
pub fn solution_prompt(problem: &str) -> String {
    PromptTemplate::builtin("generate-solution")
        .expect("built-in exists")
        .render(&[("problem", problem)])
}

/// Generation prompt continuing a partial solution. With no steps yet this is
/// exactly the solution prompt; otherwise the joined steps plus a trailing
/// delimiter are appended so the generator produces the next step.
pub fn continuation_prompt(problem: &str, steps: &[String], delimiter: &str) -> String {
    let base = solution_prompt(problem);
    if steps.is_empty() {
        base
    } else {
        format!("{base}{}{delimiter}", steps.join(delimiter))
    }
}

/// Scoring prompt: generation prompt plus transcript, closed with the think
/// marker (unless the transcript already closed it) and the forced suffix.
pub fn forced_suffix_prompt(prompt: &str, transcript: &str, suffix: &str) -> String {
    if transcript.trim_end().ends_with(THINK_CLOSE) {
        format!("{prompt}{transcript}\n{suffix}")
    } else {
        format!("{prompt}{transcript}\n{THINK_CLOSE}\n{suffix}")
    }
}
