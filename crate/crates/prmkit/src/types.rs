//! Shared domain types.

use serde::{Deserialize, Serialize};

/// Verdict assigned to a single solution step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepLabel {
    Correct,
    Incorrect,
}

impl StepLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            StepLabel::Correct => "correct",
            StepLabel::Incorrect => "incorrect",
        }
    }
}

/// A problem plus an ordered sequence of solution steps, with optional gold
/// step labels and gold final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseSolution {
    pub id: String,
    pub problem: String,
    pub steps: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_step_labels: Option<Vec<StepLabel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
}

impl StepwiseSolution {
    pub fn new(id: impl Into<String>, problem: impl Into<String>, steps: Vec<String>) -> Self {
        Self {
            id: id.into(),
            problem: problem.into(),
            steps,
            gold_step_labels: None,
            gold_answer: None,
        }
    }

    /// Full solution text, steps joined by the given delimiter.
    pub fn joined(&self, delimiter: &str) -> String {
        self.steps.join(delimiter)
    }
}
