//! Time-aware re-ranking of retrieved facts.
//!
//! A filtering constraint assigns each candidate a temporal score in [0, 1]
//! or the sentinel −100 when it violates the constraint; the final score
//! mixes semantic and temporal scores with weight μ.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{time_difference, FactId, FactTime, Timestamp};
use crate::store::{rank_order, SearchHit, TemporalKnowledgeStore};

pub const SENTINEL: f64 = -100.0;
pub const DEFAULT_MU: f64 = 0.2;
pub const DEFAULT_TOP_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    None,
    Before,
    After,
    Equal,
    First,
    Last,
}

impl ConstraintKind {
    /// Before, After and Equal filter by time; the others only order.
    pub fn filters(self) -> bool {
        matches!(self, ConstraintKind::Before | ConstraintKind::After | ConstraintKind::Equal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalConstraint {
    pub kind: ConstraintKind,
    pub anchor: Option<Timestamp>,
}

impl TemporalConstraint {
    pub const NONE: TemporalConstraint = TemporalConstraint {
        kind: ConstraintKind::None,
        anchor: None,
    };

    pub fn new(kind: ConstraintKind, anchor: Option<Timestamp>) -> Result<Self, RerankError> {
        let c = TemporalConstraint { kind, anchor };
        c.validate()?;
        Ok(c)
    }

    pub fn before(t: Timestamp) -> Self {
        TemporalConstraint {
            kind: ConstraintKind::Before,
            anchor: Some(t),
        }
    }

    pub fn after(t: Timestamp) -> Self {
        TemporalConstraint {
            kind: ConstraintKind::After,
            anchor: Some(t),
        }
    }

    pub fn equal(t: Timestamp) -> Self {
        TemporalConstraint {
            kind: ConstraintKind::Equal,
            anchor: Some(t),
        }
    }

    pub fn first() -> Self {
        TemporalConstraint {
            kind: ConstraintKind::First,
            anchor: None,
        }
    }

    pub fn last() -> Self {
        TemporalConstraint {
            kind: ConstraintKind::Last,
            anchor: None,
        }
    }

    pub fn validate(&self) -> Result<(), RerankError> {
        match (self.kind.filters(), self.anchor) {
            (true, None) => Err(RerankError::MissingAnchor(self.kind)),
            (false, Some(_)) => Err(RerankError::UnexpectedAnchor(self.kind)),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RerankError {
    #[error("{0:?} constraint needs an anchor time")]
    MissingAnchor(ConstraintKind),
    #[error("{0:?} constraint takes no anchor time")]
    UnexpectedAnchor(ConstraintKind),
    #[error("{0:?} constraint does not filter by time")]
    NotFiltering(ConstraintKind),
    #[error("no candidates to score")]
    EmptyCandidates,
    #[error("mu must lie in [0, 1], got {0}")]
    MuOutOfRange(f64),
}

/// A retrieved fact with the time needed for filtering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub fact_id: FactId,
    pub semantic: f64,
    pub time: FactTime,
}

/// Pairs search hits with their fact times from the store.
pub fn candidates_from_hits(store: &TemporalKnowledgeStore, hits: &[SearchHit]) -> Vec<Candidate> {
    hits.iter()
        .filter_map(|h| {
            store.entry(h.fact_id).map(|e| Candidate {
                fact_id: h.fact_id,
                semantic: h.score,
                time: *e.time(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredFact {
    pub fact_id: FactId,
    pub semantic: f64,
    /// Absent when the constraint does not filter.
    pub temporal: Option<f64>,
    pub combined: f64,
    pub time: FactTime,
}

impl ScoredFact {
    pub fn violates(&self) -> bool {
        self.temporal == Some(SENTINEL)
    }
}

/// Signed distance in days from the anchor to the nearest endpoint of `time`
/// that satisfies the constraint, if any.
fn qualifying_delta(kind: ConstraintKind, anchor: &Timestamp, time: &FactTime) -> Option<i64> {
    time.endpoints()
        .iter()
        .filter_map(|t| {
            let delta = match kind {
                ConstraintKind::Before => time_difference(anchor, t),
                ConstraintKind::After => time_difference(t, anchor),
                _ => unreachable!(),
            };
            (delta > 0).then_some(delta)
        })
        .min()
}

/// Temporal score for every candidate.
pub fn temporal_score(
    candidates: &[(FactId, FactTime)],
    constraint: &TemporalConstraint,
) -> Result<BTreeMap<FactId, f64>, RerankError> {
    constraint.validate()?;
    if !constraint.kind.filters() {
        return Err(RerankError::NotFiltering(constraint.kind));
    }
    if candidates.is_empty() {
        return Err(RerankError::EmptyCandidates);
    }
    let anchor = constraint.anchor.expect("validated");
    let scores = match constraint.kind {
        ConstraintKind::Equal => candidates
            .iter()
            .map(|(id, time)| {
                let hit = time.endpoints().iter().any(|t| anchor.covers(t));
                (*id, if hit { 1.0 } else { SENTINEL })
            })
            .collect(),
        kind => {
            let deltas: Vec<Option<i64>> = candidates
                .iter()
                .map(|(_, time)| qualifying_delta(kind, &anchor, time))
                .collect();
            let max = deltas.iter().flatten().copied().max().unwrap_or(0) as f64;
            candidates
                .iter()
                .zip(&deltas)
                .map(|((id, _), delta)| {
                    let score = match delta {
                        Some(d) => 1.0 - *d as f64 / max,
                        None => SENTINEL,
                    };
                    (*id, score)
                })
                .collect()
        }
    };
    Ok(scores)
}

pub fn combine(semantic: f64, temporal: f64, mu: f64) -> Result<f64, RerankError> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(RerankError::MuOutOfRange(mu));
    }
    Ok(mu * semantic + (1.0 - mu) * temporal)
}

/// Scores, sorts by combined score (ties by fact id) and keeps the best `n`.
pub fn rerank(
    candidates: &[Candidate],
    constraint: &TemporalConstraint,
    mu: f64,
    n: usize,
) -> Result<Vec<ScoredFact>, RerankError> {
    constraint.validate()?;
    if !(0.0..=1.0).contains(&mu) {
        return Err(RerankError::MuOutOfRange(mu));
    }
    let mut scored: Vec<ScoredFact> = if constraint.kind.filters() {
        let pairs: Vec<(FactId, FactTime)> = candidates.iter().map(|c| (c.fact_id, c.time)).collect();
        let temporal = temporal_score(&pairs, constraint)?;
        candidates
            .iter()
            .map(|c| {
                let t = temporal[&c.fact_id];
                Ok(ScoredFact {
                    fact_id: c.fact_id,
                    semantic: c.semantic,
                    temporal: Some(t),
                    combined: combine(c.semantic, t, mu)?,
                    time: c.time,
                })
            })
            .collect::<Result<_, RerankError>>()?
    } else {
        candidates
            .iter()
            .map(|c| ScoredFact {
                fact_id: c.fact_id,
                semantic: c.semantic,
                temporal: None,
                combined: c.semantic,
                time: c.time,
            })
            .collect()
    };
    scored.sort_by(|a, b| rank_order((a.combined, a.fact_id), (b.combined, b.fact_id)));
    scored.truncate(n);
    Ok(scored)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SortOrder {
    Ascending,
    Descending,
}

/// Stable sort on the canonical day of each fact's start.
pub fn chronological_sort(facts: &[ScoredFact], order: SortOrder) -> Vec<ScoredFact> {
    let mut out = facts.to_vec();
    match order {
        SortOrder::Ascending => out.sort_by_key(|f| f.time.start().canonical_day()),
        SortOrder::Descending => out.sort_by_key(|f| std::cmp::Reverse(f.time.start().canonical_day())),
    }
    out
}
