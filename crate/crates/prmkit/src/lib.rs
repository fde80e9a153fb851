//! Generative process-reward-model (PRM) verification and test-time scaling.
//!
//! The crate is organized around the lifecycle of a verification chain-of-thought:
//!
//! - [`cot`] parses, classifies, and cleans verification CoTs (boxed step
//!   verdicts, final yes/no labels, repetition diagnostics).
//! - [`backend`] talks to completions-style inference endpoints and ships a
//!   deterministic scripted mock plus a content-addressed response cache.
//! - [`verifier`] turns chains into solution-level scores: forced-suffix
//!   scoring, parallel @K averaging, sequential budget forcing, and
//!   LLM-as-a-judge label extraction.
//! - [`select`] implements best-of-N voting strategies and verifier-guided
//!   beam search.
//! - [`datagen`] is the synthetic verification-CoT pipeline: sampling,
//!   process/outcome filtering, balancing, finalization, Monte Carlo step
//!   labels, and dataset statistics.
//! - [`metrics`] holds evaluation metrics (two F1 variants, invalid rate,
//!   pass@1, difficulty bins, FLOP accounting) and report emission.
//! - [`cli`] ties everything into reproducible command-line pipelines.

pub mod answer;
pub mod backend;
pub mod cli;
pub mod cot;
pub mod datagen;
pub mod metrics;
pub mod prompts;
pub mod select;
pub mod types;
pub mod util;
pub mod verifier;

pub use types::StepwiseSolution;
