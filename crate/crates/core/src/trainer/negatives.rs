use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::kg::{FactTime, TemporalFact, TemporalKG};

const MAX_TRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CorruptionKind {
    /// Time replaced.
    TimeCorrupt,
    /// Predicate replaced.
    RelationCorrupt,
    /// Object entity and time replaced.
    BothCorrupt,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 3] = [
        CorruptionKind::TimeCorrupt,
        CorruptionKind::RelationCorrupt,
        CorruptionKind::BothCorrupt,
    ];
}

/// A corrupted copy of a positive fact. It keeps the positive's id and is
/// absent from the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Negative {
    pub kind: CorruptionKind,
    pub fact: TemporalFact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub question: String,
    pub positive: TemporalFact,
    pub negatives: Vec<Negative>,
}

fn pick<'a, T: PartialEq, R: Rng + ?Sized>(pool: &'a [T], exclude: &[&T], rng: &mut R) -> Option<&'a T> {
    let allowed: Vec<&T> = pool.iter().filter(|v| !exclude.contains(v)).collect();
    if allowed.is_empty() {
        return None;
    }
    Some(allowed[rng.random_range(0..allowed.len())])
}

/// Time values a corruption may substitute for `time`: other timestamps for a
/// point fact, other intervals for an interval fact.
fn time_pool(kg: &TemporalKG, time: &FactTime) -> Vec<FactTime> {
    if time.is_interval() {
        kg.fact_times().into_iter().filter(FactTime::is_interval).collect()
    } else {
        kg.timestamps().iter().map(|&t| FactTime::point(t)).collect()
    }
}

/// One negative per [`CorruptionKind`], each resampled until it is not a
/// fact of `kg`. Replacement values come uniformly from the graph's own sets.
pub fn generate_negatives<R: Rng + ?Sized>(
    positive: &TemporalFact,
    kg: &TemporalKG,
    rng: &mut R,
) -> Result<Vec<Negative>, TrainError> {
    let times = time_pool(kg, &positive.time);
    let distinct_times = times.iter().filter(|t| **t != positive.time).count() + 1;
    if distinct_times < 2 || kg.predicates().len() < 2 || kg.entities().len() < 3 {
        return Err(TrainError::CorpusTooSmall {
            timestamps: distinct_times,
            predicates: kg.predicates().len(),
            entities: kg.entities().len(),
        });
    }
    let predicates: Vec<String> = kg.predicates().iter().cloned().collect();
    let entities: Vec<String> = kg.entities().iter().cloned().collect();

    CorruptionKind::ALL
        .iter()
        .map(|&kind| {
            for _ in 0..MAX_TRIES {
                let mut fact = positive.clone();
                match kind {
                    CorruptionKind::TimeCorrupt => {
                        fact.time = *pick(&times, &[&positive.time], rng).expect("checked above");
                    }
                    CorruptionKind::RelationCorrupt => {
                        fact.predicate = pick(&predicates, &[&positive.predicate], rng)
                            .expect("checked above")
                            .clone();
                    }
                    CorruptionKind::BothCorrupt => {
                        fact.object = pick(&entities, &[&positive.subject, &positive.object], rng)
                            .ok_or(TrainError::CorpusTooSmall {
                                timestamps: distinct_times,
                                predicates: predicates.len(),
                                entities: entities.len(),
                            })?
                            .clone();
                        fact.time = *pick(&times, &[&positive.time], rng).expect("checked above");
                    }
                }
                if !kg.contains(&fact.subject, &fact.predicate, &fact.object, &fact.time) {
                    return Ok(Negative { kind, fact });
                }
            }
            Err(TrainError::NegativeExhausted {
                fact: positive.id,
                kind,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{load_quadruples, QuadrupleFormat};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kg(text: &str) -> TemporalKG {
        load_quadruples(text.as_bytes(), QuadrupleFormat::Auto).unwrap()
    }

    fn small_kg() -> TemporalKG {
        kg("A\tvisit\tB\t2010-01-01\nC\tcriticize\tD\t2011-01-01\n")
    }

    #[test]
    fn forced_alternatives() {
        let kg = small_kg();
        let pos = kg.facts()[0].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let negs = generate_negatives(&pos, &kg, &mut rng).unwrap();
        assert_eq!(negs.len(), 3);
        assert_eq!(negs[0].kind, CorruptionKind::TimeCorrupt);
        assert_eq!(negs[0].fact.time.to_owned(), FactTime::point("2011-01-01".parse().unwrap()));
        assert_eq!(negs[1].kind, CorruptionKind::RelationCorrupt);
        assert_eq!(negs[1].fact.predicate, "criticize");
        let both = &negs[2].fact;
        assert!(both.object == "C" || both.object == "D");
        assert_ne!(both.time, pos.time);
    }

    #[test]
    fn negatives_change_only_tagged_fields() {
        let kg = small_kg();
        let pos = kg.facts()[1].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for neg in generate_negatives(&pos, &kg, &mut rng).unwrap() {
            let f = &neg.fact;
            let changed = (
                f.subject != pos.subject,
                f.predicate != pos.predicate,
                f.object != pos.object,
                f.time != pos.time,
            );
            let expected = match neg.kind {
                CorruptionKind::TimeCorrupt => (false, false, false, true),
                CorruptionKind::RelationCorrupt => (false, true, false, false),
                CorruptionKind::BothCorrupt => (false, false, true, true),
            };
            assert_eq!(changed, expected, "{:?}", neg.kind);
            assert!(!kg.contains(&f.subject, &f.predicate, &f.object, &f.time));
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let kg = kg("A\tvisit\tB\t2010\nC\tcriticize\tD\t2011\nE\tpraise\tF\t2012\nG\thost\tH\t2013\n");
        let pos = kg.facts()[2].clone();
        let a = generate_negatives(&pos, &kg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = generate_negatives(&pos, &kg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_small() {
        let kg = kg("A\tvisit\tB\t2010\nA\tvisit\tC\t2010\n");
        let pos = kg.facts()[0].clone();
        assert!(matches!(
            generate_negatives(&pos, &kg, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(TrainError::CorpusTooSmall { .. })
        ));
    }

    #[test]
    fn exhausted_when_every_corruption_is_true() {
        // The only alternative time already holds the same fact.
        let kg = kg("A\tvisit\tB\t2010\nA\tvisit\tB\t2011\nC\tcriticize\tD\t2010\n");
        let pos = kg.facts()[0].clone();
        assert!(matches!(
            generate_negatives(&pos, &kg, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(TrainError::NegativeExhausted {
                kind: CorruptionKind::TimeCorrupt,
                ..
            })
        ));
    }

    #[test]
    fn interval_facts_swap_intervals() {
        let kg = kg("A\tmember of\tB\t1990\t1995\nC\tmember of\tD\t2000\t2004\nE\thead of\tF\t2001\n");
        let pos = kg.facts()[0].clone();
        let negs = generate_negatives(&pos, &kg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(negs[0].fact.time.is_interval());
        assert_ne!(negs[0].fact.time, pos.time);
    }
}
