//! Temporal knowledge graphs: quadruples `(subject, predicate, object, time)`
//! with point or interval validity, TSV ingestion and fact verbalization.

mod time;
mod tsv;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use time::{
    parse_timestamp, time_difference, Granularity, InvertedInterval, MalformedTimestamp,
    TimeInterval, Timestamp,
};
pub use tsv::{dump_quadruples, load_quadruples, QuadrupleFormat};

/// Line-order identifier of a fact within one [`TemporalKG`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactId(pub u64);

impl fmt::Display for FactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FactTime {
    Point { at: Timestamp },
    Interval { begin: Timestamp, end: Timestamp },
}

impl FactTime {
    pub fn point(at: Timestamp) -> Self {
        FactTime::Point { at }
    }

    pub fn interval(interval: TimeInterval) -> Self {
        FactTime::Interval {
            begin: interval.begin(),
            end: interval.end(),
        }
    }

    /// Point time, or the begin of an interval.
    pub fn start(&self) -> Timestamp {
        match *self {
            FactTime::Point { at } => at,
            FactTime::Interval { begin, .. } => begin,
        }
    }

    pub fn endpoints(&self) -> Vec<Timestamp> {
        match *self {
            FactTime::Point { at } => vec![at],
            FactTime::Interval { begin, end } => vec![begin, end],
        }
    }

    pub fn is_interval(&self) -> bool {
        matches!(self, FactTime::Interval { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TemporalFact {
    pub id: FactId,
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub time: FactTime,
}

impl TemporalFact {
    fn key(&self) -> FactKey {
        FactKey {
            subject: self.subject.clone(),
            predicate: self.predicate.clone(),
            object: self.object.clone(),
            time: self.time,
        }
    }
}

/// Renders a fact with the point (`<s> <p> <o> at <t>`) or interval
/// (`<s> <p> <o> from <begin> to <end>`) template.
pub fn verbalize(fact: &TemporalFact) -> String {
    verbalize_parts(&fact.subject, &fact.predicate, &fact.object, &fact.time)
}

pub fn verbalize_parts(subject: &str, predicate: &str, object: &str, time: &FactTime) -> String {
    match time {
        FactTime::Point { at } => format!("{subject} {predicate} {object} at {at}"),
        FactTime::Interval { begin, end } => {
            format!("{subject} {predicate} {object} from {begin} to {end}")
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KgError {
    #[error("line {line}: expected 4 or 5 tab-separated columns, found {found}")]
    MalformedLine { line: usize, found: usize },
    #[error("line {line}: {source}")]
    MalformedTimestamp {
        line: usize,
        #[source]
        source: MalformedTimestamp,
    },
    #[error("line {line}: {source}")]
    InvertedInterval {
        line: usize,
        #[source]
        source: InvertedInterval,
    },
    #[error("line {line}: empty {field}")]
    EmptyLabel { line: usize, field: &'static str },
    #[error("label {0:?} contains a tab or newline")]
    InvalidLabel(String),
    #[error("input is not valid UTF-8: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct FactKey {
    subject: String,
    predicate: String,
    object: String,
    time: FactTime,
}

/// An immutable temporal knowledge graph. Entity, predicate and timestamp
/// sets are exactly those occurring in the facts; fact ids equal positions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemporalKG {
    entities: BTreeSet<String>,
    predicates: BTreeSet<String>,
    timestamps: BTreeSet<Timestamp>,
    facts: Vec<TemporalFact>,
    index: HashMap<FactKey, FactId>,
}

impl TemporalKG {
    pub fn builder() -> KgBuilder {
        KgBuilder::default()
    }

    pub fn entities(&self) -> &BTreeSet<String> {
        &self.entities
    }

    pub fn predicates(&self) -> &BTreeSet<String> {
        &self.predicates
    }

    pub fn timestamps(&self) -> &BTreeSet<Timestamp> {
        &self.timestamps
    }

    pub fn facts(&self) -> &[TemporalFact] {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn fact(&self, id: FactId) -> Option<&TemporalFact> {
        self.facts.get(id.0 as usize)
    }

    pub fn contains(&self, subject: &str, predicate: &str, object: &str, time: &FactTime) -> bool {
        self.index.contains_key(&FactKey {
            subject: subject.to_string(),
            predicate: predicate.to_string(),
            object: object.to_string(),
            time: *time,
        })
    }

    /// Distinct time values (points and intervals) in first-seen order.
    pub fn fact_times(&self) -> Vec<FactTime> {
        let mut seen = BTreeSet::new();
        self.facts
            .iter()
            .filter(|f| seen.insert(f.time))
            .map(|f| f.time)
            .collect()
    }
}

/// Accumulates facts, dropping exact duplicates and assigning ids in
/// insertion order.
#[derive(Debug, Default)]
pub struct KgBuilder {
    kg: TemporalKG,
}

impl KgBuilder {
    /// Adds a fact and returns its id; an existing id when the quadruple is
    /// already present.
    pub fn add(
        &mut self,
        subject: &str,
        predicate: &str,
        object: &str,
        time: FactTime,
    ) -> Result<FactId, KgError> {
        for label in [subject, predicate, object] {
            if label.trim().is_empty() {
                return Err(KgError::EmptyLabel { line: 0, field: "label" });
            }
            if label.contains(['\t', '\n', '\r']) {
                return Err(KgError::InvalidLabel(label.to_string()));
            }
        }
        let key = FactKey {
            subject: subject.to_string(),
            predicate: predicate.to_string(),
            object: object.to_string(),
            time,
        };
        if let Some(&id) = self.kg.index.get(&key) {
            return Ok(id);
        }
        let id = FactId(self.kg.facts.len() as u64);
        let fact = TemporalFact {
            id,
            subject: key.subject.clone(),
            predicate: key.predicate.clone(),
            object: key.object.clone(),
            time,
        };
        self.kg.entities.insert(fact.subject.clone());
        self.kg.entities.insert(fact.object.clone());
        self.kg.predicates.insert(fact.predicate.clone());
        self.kg.timestamps.extend(time.endpoints());
        self.kg.index.insert(fact.key(), id);
        self.kg.facts.push(fact);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.kg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kg.is_empty()
    }

    pub fn build(self) -> TemporalKG {
        self.kg
    }
}
