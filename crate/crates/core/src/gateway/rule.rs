use regex::Regex;
use std::sync::LazyLock;

use super::{GatewayError, GenerationRequest, Generator, Purpose};

static ORDINAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(first|last|earliest|latest)\b").unwrap());
static LATEST: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(last|latest)\b").unwrap());

/// Offline planner: questions asking for the first or last of something get
/// retrieve, rank (newest first for "last"), reason; everything else is a
/// single retrieval.
#[derive(Debug, Clone, Copy, Default)]
pub struct RulePlanner;

/// The question inside a rendered plan prompt, or the whole text when it
/// carries no `Question:` line.
fn extract_question(prompt: &str) -> &str {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("Question:"))
        .unwrap_or(prompt)
        .trim()
}

pub fn plan_for_question(question: &str) -> String {
    let q = question.trim();
    if LATEST.is_match(q) {
        format!("Retrieve: {q}; Rank: Rank these facts by time in descending order; Reason: {q}")
    } else if ORDINAL.is_match(q) {
        format!("Retrieve: {q}; Rank: Rank these facts by time; Reason: {q}")
    } else {
        format!("Retrieve: {q}")
    }
}

impl Generator for RulePlanner {
    fn generate(&self, request: &GenerationRequest) -> Result<String, GatewayError> {
        if request.purpose != Purpose::Plan {
            return Err(GatewayError::UnsupportedPurpose {
                backend: "rule planner",
                purpose: request.purpose,
            });
        }
        Ok(plan_for_question(extract_question(&request.prompt)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_hop() {
        let req = GenerationRequest::new("Who visited B at 2010?", Purpose::Plan);
        assert_eq!(RulePlanner.generate(&req).unwrap(), "Retrieve: Who visited B at 2010?");
    }

    #[test]
    fn ordinal_questions_rank_then_reason() {
        let prompt = "Task: ...\nNow process:\nQuestion: Who visited Kenya first after 2010-01-02?";
        let req = GenerationRequest::new(prompt, Purpose::Plan);
        assert_eq!(
            RulePlanner.generate(&req).unwrap(),
            "Retrieve: Who visited Kenya first after 2010-01-02?; Rank: Rank these facts by time; Reason: Who visited Kenya first after 2010-01-02?"
        );
    }

    #[test]
    fn last_questions_rank_newest_first() {
        assert_eq!(
            plan_for_question("Whom did Kenya visit last before 2011-02-03?"),
            "Retrieve: Whom did Kenya visit last before 2011-02-03?; Rank: Rank these facts by time in descending order; Reason: Whom did Kenya visit last before 2011-02-03?"
        );
    }

    #[test]
    fn reason_requests_are_refused() {
        let req = GenerationRequest::new("Facts: x\nQuestion: y", Purpose::Reason);
        assert!(matches!(RulePlanner.generate(&req), Err(GatewayError::UnsupportedPurpose { .. })));
    }
}
