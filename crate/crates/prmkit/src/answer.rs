//! Final-answer extraction and canonicalization.
//!
//! Generators are instructed to put the final answer in `\boxed{}`; answer
//! equality for voting and accuracy is decided on the canonicalized form of
//! the last boxed span in the solution text.

/// Extract the content of the last `\boxed{...}` span, honoring nested braces
/// (e.g. `\boxed{\frac{1}{2}}`).
pub fn extract_last_boxed(text: &str) -> Option<String> {
    const MARKER: &str = "\\boxed{";
    let mut last = None;
    let mut search_from = 0;
    while let Some(rel) = text[search_from..].find(MARKER) {
        let open = search_from + rel + MARKER.len();
        let mut depth = 1usize;
        let mut end = None;
        for (i, ch) in text[open..].char_indices() {
            match ch {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(open + i);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(close) => {
                last = Some(text[open..close].to_string());
                search_from = close + 1;
            }
            // Unbalanced braces: stop scanning, keep what we have.
            None => break,
        }
    }
    last
}

/// True if the text contains a (balanced) boxed span at all.
pub fn contains_boxed(text: &str) -> bool {
    extract_last_boxed(text).is_some()
}

/// Canonicalize an answer string: trim, collapse internal whitespace runs to
/// a single space, and case-fold.
pub fn canonicalize_answer(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Canonical final answer of a solution text: the last boxed span if present,
/// otherwise the last nonempty line, canonicalized.
pub fn canonical_final_answer(solution_text: &str) -> String {
    match extract_last_boxed(solution_text) {
        Some(inner) => canonicalize_answer(&inner),
        None => canonicalize_answer(
            solution_text
                .lines()
                .rev()
                .find(|l| !l.trim().is_empty())
                .unwrap_or(""),
        ),
    }
}

/// Pluggable answer-equivalence hook. The default compares canonical strings;
/// stricter math-aware comparisons can be slotted in without touching the
/// selection code.
pub trait AnswerCanon: Sync {
    fn canon(&self, raw: &str) -> String;
}

/// Default canonicalizer (trim / collapse spaces / case-fold).
#[derive(Debug, Default, Clone, Copy)]
pub struct DefaultCanon;

impl AnswerCanon for DefaultCanon {
    fn canon(&self, raw: &str) -> String {
        canonicalize_answer(raw)
    }
}
