use std::sync::LazyLock;

use regex::Regex;

use crate::kg::{parse_timestamp, Timestamp};
use crate::rerank::{ConstraintKind, TemporalConstraint};
use crate::synthetic::MONTH_NAMES;

/// Chooses the temporal constraint for a retrieval objective.
pub trait ConstraintDetector: Send + Sync {
    fn detect(&self, objective: &str) -> TemporalConstraint;
}

static ISO: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(\d{4})(?:-(\d{2}))?(?:-(\d{2}))?\b").unwrap());
static MONTH_YEAR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(january|february|march|april|may|june|july|august|september|october|november|december)\s+(?:(\d{1,2}),?\s+)?(\d{4})\b")
        .unwrap()
});
static KEYWORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(before|after|prior to|since|until|first|last|earliest|latest|in|on|at|during)\b").unwrap());

/// Every date in the text with its byte offset, in order of appearance.
/// Accepts ISO forms and "May 2012" / "May 3, 2012".
pub fn extract_anchors(text: &str) -> Vec<(usize, Timestamp)> {
    let mut found: Vec<(usize, usize, Timestamp)> = Vec::new();
    for c in MONTH_YEAR.captures_iter(text) {
        let m = c.get(0).unwrap();
        let month = MONTH_NAMES
            .iter()
            .position(|n| n.eq_ignore_ascii_case(&c[1]))
            .unwrap() as u8
            + 1;
        let year: i32 = c[3].parse().unwrap();
        let ts = match c.get(2) {
            Some(d) => Timestamp::day(year, month, d.as_str().parse().unwrap()),
            None => Timestamp::month(year, month),
        };
        if let Ok(ts) = ts {
            found.push((m.start(), m.end(), ts));
        }
    }
    for m in ISO.find_iter(text) {
        if found.iter().any(|&(s, e, _)| m.start() >= s && m.start() < e) {
            continue;
        }
        if let Ok(ts) = parse_timestamp(m.as_str()) {
            found.push((m.start(), m.end(), ts));
        }
    }
    found.sort_by_key(|&(s, _, _)| s);
    found.into_iter().map(|(s, _, t)| (s, t)).collect()
}

/// Keyword rules: "before"/"after" followed by a date filter on that date;
/// "first"/"last" request ordering; a lone date introduced by in/on/at/during
/// is an equality constraint. Anything else is unconstrained.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleDetector;

impl ConstraintDetector for RuleDetector {
    fn detect(&self, objective: &str) -> TemporalConstraint {
        let anchors = extract_anchors(objective);
        let keywords: Vec<(usize, usize, String)> = KEYWORD
            .find_iter(objective)
            .map(|m| (m.start(), m.end(), m.as_str().to_lowercase()))
            .collect();

        for (_, end, word) in &keywords {
            let kind = match word.as_str() {
                "before" | "prior to" | "until" => ConstraintKind::Before,
                "after" | "since" => ConstraintKind::After,
                _ => continue,
            };
            if let Some(&(_, anchor)) = anchors.iter().find(|(pos, _)| pos >= end) {
                return TemporalConstraint { kind, anchor: Some(anchor) };
            }
        }
        for (_, _, word) in &keywords {
            match word.as_str() {
                "first" | "earliest" => return TemporalConstraint::first(),
                "last" | "latest" => return TemporalConstraint::last(),
                _ => {}
            }
        }
        if let [(pos, anchor)] = anchors[..] {
            let introduced = keywords.iter().any(|(_, end, w)| {
                matches!(w.as_str(), "in" | "on" | "at" | "during") && objective[*end..pos].trim().is_empty()
            });
            if introduced {
                return TemporalConstraint::equal(anchor);
            }
        }
        TemporalConstraint::NONE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> Timestamp {
        parse_timestamp(s).unwrap()
    }

    #[test]
    fn anchors_in_several_forms() {
        let got: Vec<Timestamp> = extract_anchors("between May 2012 and 2013-01-05, or October 3, 2011")
            .into_iter()
            .map(|(_, t)| t)
            .collect();
        assert_eq!(got, [ts("2012-05"), ts("2013-01-05"), ts("2011-10-03")]);
        assert!(extract_anchors("in 2010-13-40").is_empty());
    }

    #[test]
    fn keyword_rules() {
        let d = RuleDetector;
        assert_eq!(
            d.detect("Who wish to visit Cambodia after 2009-10-02?"),
            TemporalConstraint::after(ts("2009-10-02"))
        );
        assert_eq!(d.detect("Who visited Kenya before May 2012?"), TemporalConstraint::before(ts("2012-05")));
        assert_eq!(
            d.detect("Who visited Kenya first after 2010?"),
            TemporalConstraint::after(ts("2010"))
        );
        assert_eq!(d.detect("Who visited Kenya first?"), TemporalConstraint::first());
        assert_eq!(d.detect("Who was the last to visit Kenya?"), TemporalConstraint::last());
        assert_eq!(d.detect("Who visited B at 2010-05-16?"), TemporalConstraint::equal(ts("2010-05-16")));
        assert_eq!(d.detect("Who visited B in 2010?"), TemporalConstraint::equal(ts("2010")));
        assert_eq!(d.detect("Who was Secretary of State during [1829, 1837]?"), TemporalConstraint::NONE);
        assert_eq!(d.detect("When did Okada Katsuya wish to visit Cambodia?"), TemporalConstraint::NONE);
        assert_eq!(d.detect("Who visited Kenya after the war?"), TemporalConstraint::NONE);
    }
}
