//! Seeded toy corpora used by tests, benches and the bundled CLI data.

use chrono::Datelike;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::evaluation::{AnswerType, QAItem};
use crate::gateway::{plan_for_question, Script, ScriptEntry};
use crate::kg::{load_quadruples, FactTime, QuadrupleFormat, TemporalKG, Timestamp};
use crate::plan::render_plan_prompt;
use crate::trainer::TrainingPair;

pub const MONTH_NAMES: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

const COUNTRIES: [&str; 24] = [
    "Kenya", "Japan", "Chile", "Norway", "Egypt", "Peru", "Ghana", "Nepal", "Spain", "Qatar", "Mali", "Fiji",
    "Cuba", "Oman", "Laos", "Iraq", "Chad", "Togo", "Iran", "Niger", "Benin", "Malta", "Yemen", "Gabon",
];

const VERBS: [&str; 6] = ["visit", "criticize", "praise", "host", "sanction", "consult"];

/// A graph of month-granularity facts within one year and one question per
/// sampled fact. Questions name the month in words, so nothing in a question
/// overlaps lexically with the numeric time tokens of its fact: an untrained
/// encoder cannot tell the fact from its time-corrupted copy.
pub fn contrastive_corpus(seed: u64, facts: usize, questions: usize) -> (TemporalKG, Vec<TrainingPair>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut builder = TemporalKG::builder();
    let mut ids = Vec::new();
    while ids.len() < facts {
        let s = *COUNTRIES.choose(&mut rng).unwrap();
        let o = *COUNTRIES.choose(&mut rng).unwrap();
        if s == o {
            continue;
        }
        let p = *VERBS.choose(&mut rng).unwrap();
        let month = rng.random_range(1..=12u8);
        let time = FactTime::point(Timestamp::month(2015, month).unwrap());
        let before = builder.len();
        let id = builder.add(s, p, o, time).expect("labels are valid");
        if builder.len() > before {
            ids.push((id, s, p, month));
        }
    }
    let kg = builder.build();
    let pairs = ids
        .choose_multiple(&mut rng, questions.min(ids.len()))
        .map(|&(id, s, p, month)| TrainingPair {
            question: format!("Which country did {s} {p} in {}?", MONTH_NAMES[month as usize - 1]),
            fact_id: id,
        })
        .collect();
    (kg, pairs)
}

pub const TWO_HOP_QUESTION: &str = "After Okada Katsuya, who wish to visit Cambodia first?";
pub const TWO_HOP_ANSWER: &str = "Foreign Affairs (South Korea)";
pub const THREE_HOP_QUESTION: &str =
    "Who held a position in the 4th United States Congress and was Secretary of State during Andrew Jackson's presidency?";
pub const THREE_HOP_ANSWERS: [&str; 3] = ["Martin Van Buren", "Edward Livingston", "Louis McLane"];

/// Graph behind both worked case studies, with distractors.
pub const CASE_STUDY_TSV: &str = "\
Okada Katsuya\twish to visit\tCambodia\t2009-10-02
Foreign Affairs (South Korea)\twish to visit\tCambodia\t2009-10-06
Thailand\twish to visit\tCambodia\t2009-10-19
South Korea\twish to visit\tCambodia\t2009-09-14
Vietnam\twish to visit\tCambodia\t2009-12-01
Cambodia\twish to visit\tThailand\t2009-10-05
Hun Sen\twish to visit\tJapan\t2009-10-04
Okada Katsuya\twish to visit\tChina\t2009-10-09
Okada Katsuya\tmake a visit\tCambodia\t2009-11-07
Hun Sen\thost a visit\tOkada Katsuya\t2009-11-07
Barack Obama\tmake statement\tChina\t2009-10-03
Andrew Jackson\tpresident of\tUnited States\t1829\t1837
John Quincy Adams\tpresident of\tUnited States\t1825\t1829
Martin Van Buren\tpresident of\tUnited States\t1837\t1841
Henry Clay\tSecretary of State of\tUnited States\t1825\t1829
Martin Van Buren\tSecretary of State of\tUnited States\t1829\t1831
Edward Livingston\tSecretary of State of\tUnited States\t1831\t1833
Louis McLane\tSecretary of State of\tUnited States\t1833\t1834
John Forsyth\tSecretary of State of\tUnited States\t1834\t1841
Martin Van Buren\theld a position in\t4th United States Congress\t1795\t1797
Edward Livingston\theld a position in\t4th United States Congress\t1795\t1797
Louis McLane\theld a position in\t4th United States Congress\t1795\t1797
James Madison\theld a position in\t4th United States Congress\t1795\t1797
Albert Gallatin\theld a position in\t5th United States Congress\t1797\t1799
";

pub fn case_study_kg() -> TemporalKG {
    load_quadruples(CASE_STUDY_TSV.as_bytes(), QuadrupleFormat::Auto).expect("bundled graph parses")
}

/// One training question per fact, asking for its subject.
pub fn fact_pairs(kg: &TemporalKG) -> Vec<TrainingPair> {
    kg.facts()
        .iter()
        .map(|f| {
            let question = match f.time {
                FactTime::Point { at } => format!("Who {} {} on {at}?", f.predicate, f.object),
                FactTime::Interval { begin, .. } => format!("Who was {} {} from {begin}?", f.predicate, f.object),
            };
            TrainingPair { question, fact_id: f.id }
        })
        .collect()
}

/// Reads the first fact line matching `fact` (a regex with named groups)
/// when the prompt asks `question`, answering with `response`.
fn reader_rule(fact: &str, question: &str, response: &str) -> ScriptEntry {
    ScriptEntry::regex(
        &format!(r"(?m)^(?:Facts: )?{fact}$(?s:.*)^Question: {}$", regex::escape(question)),
        response,
    )
}

/// Scripted model for both case studies: the plans, and reasoning answers
/// that read the facts they are given.
pub fn case_study_script() -> Script {
    let entries = vec![
        ScriptEntry::exact(
            &render_plan_prompt(TWO_HOP_QUESTION),
            "Retrieve & Reason: [time] = When Okada Katsuya visits Cambodia?; \
             Retrieve: Who wishes to visit Cambodia first after [time]?; \
             Rank: Rank by timestamps in ascending order; \
             Reason: Who wishes to visit Cambodia first after [time]?",
        ),
        ScriptEntry::exact(
            &render_plan_prompt(THREE_HOP_QUESTION),
            "Retrieve & Reason: [time] = When is Andrew Jackson's presidency?; \
             Retrieve & Reason: [Person] = Who was the Secretary of State during [time]?; \
             Retrieve & Reason: Who held a position in the 4th United States Congress among [person]?",
        ),
        reader_rule(
            r"Okada Katsuya wish to visit Cambodia at (?P<t>\S+)",
            "When Okada Katsuya visits Cambodia?",
            "['${t}']",
        ),
        reader_rule(
            r"(?P<s>.+?) wish to visit Cambodia at \S+",
            "Who wishes to visit Cambodia first after 2009-10-02?",
            "${s}",
        ),
        reader_rule(
            r"Andrew Jackson president of United States from (?P<b>\S+) to (?P<e>\S+)",
            "When is Andrew Jackson's presidency?",
            "[${b},${e}]",
        ),
        ScriptEntry::regex(
            r"(?m)^Question: Who was the Secretary of State during \[1829, 1837\]\?$",
            "['Martin Van Buren', 'Edward Livingston', 'Louis McLane', 'John Forsyth']",
        ),
        ScriptEntry::regex(
            r"(?m)^Question: Who held a position in the 4th United States Congress among \[Martin Van Buren, Edward Livingston, Louis McLane, John Forsyth\]\?$",
            "['Martin Van Buren', 'Edward Livingston', 'Louis McLane']",
        ),
    ];
    Script::new(entries).expect("case-study rules compile")
}

/// Graph, questions and scripted model for the ablation comparison.
pub struct QaSuite {
    pub kg: TemporalKG,
    pub items: Vec<QAItem>,
    pub script: Script,
}

/// Questions over day-stamped facts with pairwise distinct dates. Each
/// "first after"/"last before" anchor sits one day from its target, so the
/// target is the nearest qualifying fact. The scripted model reads the first
/// matching fact it is shown and answers "unknown" when it has no facts.
pub fn ablation_suite(seed: u64, questions: usize) -> QaSuite {
    const SUBJECTS: usize = 12;
    const PER_PAIR: usize = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Timestamp::day(2010, 1, 1).unwrap().canonical_date();
    let total = SUBJECTS * VERBS.len() * PER_PAIR;
    let days = rand::seq::index::sample(&mut rng, 3 * 365, total).into_vec();
    let date = |offset: i64| {
        let d = start + chrono::Duration::days(offset);
        Timestamp::day(d.year(), d.month() as u8, d.day() as u8).unwrap()
    };

    let mut builder = TemporalKG::builder();
    let mut facts = Vec::with_capacity(total);
    for (i, &offset) in days.iter().enumerate() {
        let s = COUNTRIES[i / (VERBS.len() * PER_PAIR)];
        let p = VERBS[(i / PER_PAIR) % VERBS.len()];
        let o = loop {
            let o = *COUNTRIES.choose(&mut rng).unwrap();
            if o != s {
                break o;
            }
        };
        builder.add(s, p, o, FactTime::point(date(offset as i64))).expect("labels are valid");
        facts.push((s, p, o, offset as i64));
    }
    let kg = builder.build();

    let mut entries = Vec::new();
    let mut items = Vec::with_capacity(questions);
    let targets = rand::seq::index::sample(&mut rng, facts.len(), questions.min(facts.len()));
    for (n, idx) in targets.iter().enumerate() {
        let (s, p, o, offset) = facts[idx];
        let (qtype, question) = match n % 3 {
            0 => ("equal", format!("Whom did {s} {p} on {}?", date(offset))),
            1 => ("after_first", format!("Whom did {s} {p} first after {}?", date(offset - 1))),
            _ => ("before_last", format!("Whom did {s} {p} last before {}?", date(offset + 1))),
        };
        entries.push(ScriptEntry::exact(&render_plan_prompt(&question), &plan_for_question(&question)));
        if qtype != "equal" {
            let fact = format!(r"{} {} (?P<o>.+?) at \S+", regex::escape(s), regex::escape(p));
            entries.push(reader_rule(&fact, &question, "${o}"));
        }
        items.push(QAItem {
            id: format!("suite-{n}"),
            question,
            gold_answers: vec![o.to_string()],
            qtype: qtype.to_string(),
            answer_type: AnswerType::Entity,
            time_level: Some("day".to_string()),
        });
    }
    entries.push(ScriptEntry::regex(r"^Please answer the given question", "unknown"));
    entries.push(ScriptEntry::regex(r"^Based on the facts", "unknown"));
    QaSuite {
        kg,
        items,
        script: Script::new(entries).expect("suite rules compile"),
    }
}
