//! Dataset loading, answer normalization and Hits@k reporting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::sync::LazyLock;
use std::time::Instant;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::kg::parse_timestamp;
use crate::plan::Pipeline;
use crate::synthetic::MONTH_NAMES;

pub const DEFAULT_KS: [usize; 3] = [1, 3, 10];
pub const DEFAULT_SWEEP: [usize; 5] = [5, 10, 15, 20, 25];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum AnswerType {
    Entity,
    Time,
    #[default]
    Unknown,
}

impl AnswerType {
    pub fn label(&self) -> &'static str {
        match self {
            AnswerType::Entity => "entity",
            AnswerType::Time => "time",
            AnswerType::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub qtype: String,
    pub answer_type: AnswerType,
    pub time_level: Option<String>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset line {line}: {message}")]
    BadItem { line: usize, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// Field names across the supported dataset layouts, first match wins.
const QUESTION_KEYS: [&str; 3] = ["question", "Question", "question_text"];
const ANSWER_KEYS: [&str; 5] = ["answers", "gold_answers", "answer", "Answer", "Answers"];
const QTYPE_KEYS: [&str; 5] = ["qtype", "question_type", "Temporal question type", "type", "qlabel"];
const ANSWER_TYPE_KEYS: [&str; 3] = ["answer_type", "answer type", "Answer Type"];
const TIME_LEVEL_KEYS: [&str; 2] = ["time_level", "Time Level"];
const ID_KEYS: [&str; 4] = ["id", "quid", "Id", "qid"];
// Labels inside structured answer objects.
const LABEL_KEYS: [&str; 4] = ["WikidataLabel", "label", "AnswerArgument", "value"];

fn field<'v>(obj: &'v serde_json::Map<String, Value>, keys: &[&str]) -> Option<&'v Value> {
    keys.iter().find_map(|k| obj.get(*k).filter(|v| !v.is_null()))
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Object(o) => field(o, &LABEL_KEYS).and_then(scalar_text),
        _ => None,
    }
}

fn answer_type_of(v: Option<&Value>, answers: Option<&Value>) -> AnswerType {
    let from_text = |s: &str| match s.trim().to_lowercase().as_str() {
        "entity" => AnswerType::Entity,
        "time" | "value" | "date" => AnswerType::Time,
        _ => AnswerType::Unknown,
    };
    if let Some(Value::String(s)) = v {
        return from_text(s);
    }
    // Structured answers carry their own type.
    if let Some(Value::Array(items)) = answers {
        if let Some(Value::Object(o)) = items.first() {
            if let Some(Value::String(s)) = o.get("AnswerType") {
                return from_text(s);
            }
        }
    }
    AnswerType::Unknown
}

fn item_from_value(v: &Value, line: usize) -> Result<QAItem, EvalError> {
    let bad = |message: &str| EvalError::BadItem {
        line,
        message: message.to_string(),
    };
    let obj = v.as_object().ok_or_else(|| bad("expected a JSON object"))?;
    let question = field(obj, &QUESTION_KEYS)
        .and_then(scalar_text)
        .filter(|q| !q.is_empty())
        .ok_or_else(|| bad("missing question"))?;
    let raw_answers = field(obj, &ANSWER_KEYS);
    let mut gold: Vec<String> = match raw_answers {
        Some(Value::Array(items)) => items.iter().filter_map(scalar_text).collect(),
        Some(other) => scalar_text(other).into_iter().collect(),
        None => Vec::new(),
    };
    gold.retain(|a| !a.is_empty());
    gold.dedup();
    if gold.is_empty() {
        return Err(bad("no gold answers"));
    }
    let qtype = match field(obj, &QTYPE_KEYS) {
        Some(Value::Array(items)) => items.iter().filter_map(scalar_text).collect::<Vec<_>>().join("+"),
        Some(v) => scalar_text(v).unwrap_or_default(),
        None => String::new(),
    };
    Ok(QAItem {
        id: field(obj, &ID_KEYS).and_then(scalar_text).unwrap_or_else(|| format!("{line}")),
        question,
        gold_answers: gold,
        qtype: if qtype.is_empty() { "unlabelled".to_string() } else { qtype },
        answer_type: answer_type_of(field(obj, &ANSWER_TYPE_KEYS), raw_answers),
        time_level: field(obj, &TIME_LEVEL_KEYS).and_then(scalar_text),
    })
}

/// Reads JSON lines, or a single JSON array of items.
pub fn load_dataset<R: Read>(mut source: R) -> Result<Vec<QAItem>, EvalError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    if text.trim_start().starts_with('[') {
        let values: Vec<Value> = serde_json::from_str(&text).map_err(|e| EvalError::BadItem {
            line: e.line(),
            message: e.to_string(),
        })?;
        return values.iter().enumerate().map(|(i, v)| item_from_value(v, i + 1)).collect();
    }
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| EvalError::BadItem {
            line: i + 1,
            message: e.to_string(),
        })?;
        items.push(item_from_value(&v, i + 1)?);
    }
    Ok(items)
}

pub fn write_dataset(items: &[QAItem]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("items serialize") + "\n")
        .collect()
}

static MONTH_DATE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:(\d{1,2})\s+)?(january|february|march|april|may|june|july|august|september|october|november|december)\s+(?:(\d{1,2}),?\s+)?(\d{4})$")
        .unwrap()
});
static ISO_PREFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{4}(?:-\d{2}(?:-\d{2})?)?)(?:t[\d:.]+z?)?$").unwrap());

fn canonical_time(text: &str) -> Option<String> {
    if let Some(c) = ISO_PREFIX.captures(text) {
        return parse_timestamp(&c[1]).ok().map(|t| t.to_string());
    }
    let c = MONTH_DATE.captures(text)?;
    let month = MONTH_NAMES.iter().position(|m| m.eq_ignore_ascii_case(&c[2]))? + 1;
    let day = c.get(1).or(c.get(3));
    let canonical = match day {
        Some(d) => format!("{}-{month:02}-{:02}", &c[4], d.as_str().parse::<u8>().ok()?),
        None => format!("{}-{month:02}", &c[4]),
    };
    parse_timestamp(&canonical).ok().map(|t| t.to_string())
}

/// Canonical form for matching: casefolded, whitespace collapsed, wrapping
/// quotes and brackets and a leading "- " removed. Time answers that parse
/// as a date become `YYYY[-MM[-DD]]`.
pub fn normalize_answer(text: &str, answer_type: AnswerType) -> String {
    let mut t = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    loop {
        let before = t.len();
        if let Some(rest) = t.strip_prefix("- ") {
            t = rest.to_string();
        }
        for (open, close) in [('\'', '\''), ('"', '"'), ('`', '`'), ('[', ']'), ('(', ')')] {
            if t.len() >= 2 && t.starts_with(open) && t.ends_with(close) {
                t = t[1..t.len() - 1].trim().to_string();
            }
        }
        if t.len() == before {
            break;
        }
    }
    if answer_type == AnswerType::Time {
        if let Some(c) = canonical_time(&t) {
            return c;
        }
    }
    t
}

/// 1 when one of the first `k` predictions matches a gold answer after
/// normalization, else 0.
pub fn hits_at_k(predictions: &[String], gold: &[String], k: usize, answer_type: AnswerType) -> u8 {
    let gold: Vec<String> = gold.iter().map(|g| normalize_answer(g, answer_type)).collect();
    predictions
        .iter()
        .take(k)
        .any(|p| gold.contains(&normalize_answer(p, answer_type))) as u8
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    pub jobs: usize,
    /// Wall time varies between runs, so it is only recorded on request.
    pub timing: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ks: DEFAULT_KS.to_vec(),
            jobs: 1,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub question: String,
    pub qtype: String,
    pub answer_type: AnswerType,
    pub gold_answers: Vec<String>,
    pub predictions: Vec<String>,
    pub hits: BTreeMap<usize, u8>,
    pub error: Option<String>,
    pub llm_calls: usize,
    pub retrieve_calls: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub count: usize,
    pub hits: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSettings {
    pub mu: f64,
    pub top_n: usize,
    pub search_k: usize,
    pub ablation: Vec<String>,
    pub normalized_matching: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub settings: ReportSettings,
    pub questions: usize,
    pub failures: usize,
    pub hits: BTreeMap<usize, f64>,
    pub by_qtype: BTreeMap<String, Breakdown>,
    pub by_answer_type: BTreeMap<String, Breakdown>,
    pub llm_calls: usize,
    pub retrieve_calls: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_seconds: Option<f64>,
    pub items: Vec<ItemResult>,
}

fn breakdown<'a>(items: impl Iterator<Item = &'a ItemResult>, ks: &[usize]) -> Breakdown {
    let items: Vec<&ItemResult> = items.collect();
    let hits = ks
        .iter()
        .map(|&k| {
            let sum: usize = items.iter().map(|i| i.hits[&k] as usize).sum();
            (k, sum as f64 / items.len() as f64)
        })
        .collect();
    Breakdown { count: items.len(), hits }
}

fn run_item(item: &QAItem, pipeline: &Pipeline, opts: &EvalOptions) -> ItemResult {
    let start = Instant::now();
    let outcome = pipeline.answer(&item.question);
    let seconds = opts.timing.then(|| start.elapsed().as_secs_f64());
    let (trace, error) = match outcome {
        Ok(trace) => (trace, None),
        Err(failure) => {
            log::warn!("question {:?} failed: {}", item.id, failure.error);
            let message = failure.error.to_string();
            (failure.trace, Some(message))
        }
    };
    let predictions = if error.is_some() { Vec::new() } else { trace.final_answers.clone() };
    let hits = opts
        .ks
        .iter()
        .map(|&k| (k, hits_at_k(&predictions, &item.gold_answers, k, item.answer_type)))
        .collect();
    ItemResult {
        id: item.id.clone(),
        question: item.question.clone(),
        qtype: item.qtype.clone(),
        answer_type: item.answer_type,
        gold_answers: item.gold_answers.clone(),
        predictions,
        hits,
        error,
        llm_calls: trace.llm_calls(),
        retrieve_calls: trace.retrieve_calls(),
        seconds,
    }
}

/// Runs every item through the pipeline. Failed items count as misses.
pub fn evaluate(items: &[QAItem], pipeline: &Pipeline, opts: &EvalOptions) -> Result<EvalReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if opts.ks.is_empty() || opts.ks.contains(&0) {
        return Err(EvalError::InvalidK);
    }
    let mut ks = opts.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    let opts = EvalOptions { ks, ..opts.clone() };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    let results: Vec<ItemResult> = pool.install(|| items.par_iter().map(|i| run_item(i, pipeline, &opts)).collect());

    let mut qtypes: Vec<&str> = results.iter().map(|r| r.qtype.as_str()).collect();
    qtypes.sort_unstable();
    qtypes.dedup();
    let mut answer_types: Vec<AnswerType> = results.iter().map(|r| r.answer_type).collect();
    answer_types.sort_unstable();
    answer_types.dedup();
    let config = pipeline.config();
    Ok(EvalReport {
        settings: ReportSettings {
            mu: config.mu,
            top_n: config.top_n,
            search_k: config.search_k,
            ablation: config.ablation.labels().iter().map(|s| s.to_string()).collect(),
            normalized_matching: true,
        },
        questions: results.len(),
        failures: results.iter().filter(|r| r.error.is_some()).count(),
        hits: breakdown(results.iter(), &opts.ks).hits,
        by_qtype: qtypes
            .iter()
            .map(|q| (q.to_string(), breakdown(results.iter().filter(|r| r.qtype == *q), &opts.ks)))
            .collect(),
        by_answer_type: answer_types
            .iter()
            .map(|a| {
                let b = breakdown(results.iter().filter(|r| r.answer_type == *a), &opts.ks);
                (a.label().to_string(), b)
            })
            .collect(),
        llm_calls: results.iter().map(|r| r.llm_calls).sum(),
        retrieve_calls: results.iter().map(|r| r.retrieve_calls).sum(),
        mean_seconds: opts
            .timing
            .then(|| results.iter().filter_map(|r| r.seconds).sum::<f64>() / results.len() as f64),
        items: results,
    })
}

/// One report per fact count `n`; `build` returns the pipeline for `n`.
pub fn sweep<'a, F>(items: &[QAItem], ns: &[usize], opts: &EvalOptions, mut build: F) -> Result<Vec<EvalReport>, EvalError>
where
    F: FnMut(usize) -> Pipeline<'a>,
{
    ns.iter().map(|&n| evaluate(items, &build(n), opts)).collect()
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Aligned text table: overall, then one row per category.
    pub fn to_table(&self) -> String {
        let ks: Vec<usize> = self.hits.keys().copied().collect();
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["group".to_string(), "count".to_string()];
        header.extend(ks.iter().map(|k| format!("hits@{k}")));
        rows.push(header);
        let row = |name: String, b: &Breakdown| {
            let mut r = vec![name, b.count.to_string()];
            r.extend(ks.iter().map(|k| format!("{:.3}", b.hits[k])));
            r
        };
        rows.push(row(
            "overall".to_string(),
            &Breakdown {
                count: self.questions,
                hits: self.hits.clone(),
            },
        ));
        for (q, b) in &self.by_qtype {
            rows.push(row(format!("qtype:{q}"), b));
        }
        for (a, b) in &self.by_answer_type {
            rows.push(row(format!("answer:{a}"), b));
        }
        let mut out = render_rows(&rows);
        let ablation = if self.settings.ablation.is_empty() {
            "none".to_string()
        } else {
            self.settings.ablation.join(",")
        };
        let _ = writeln!(
            out,
            "failures {}  llm_calls {}  retrieve_calls {}  top_n {}  mu {}  ablation {}",
            self.failures, self.llm_calls, self.retrieve_calls, self.settings.top_n, self.settings.mu, ablation
        );
        if let Some(s) = self.mean_seconds {
            let _ = writeln!(out, "mean seconds per question {s:.4}");
        }
        out
    }
}

/// Aligned table of several labelled reports at one cutoff `k`.
pub fn comparison_table(reports: &[(String, &EvalReport)], k: usize) -> String {
    let mut rows = vec![vec![
        "run".to_string(),
        "n".to_string(),
        format!("hits@{k}"),
        "llm_calls".to_string(),
        "failures".to_string(),
    ]];
    for (label, r) in reports {
        rows.push(vec![
            label.clone(),
            r.settings.top_n.to_string(),
            r.hits.get(&k).map(|h| format!("{h:.3}")).unwrap_or_else(|| "-".to_string()),
            r.llm_calls.to_string(),
            r.failures.to_string(),
        ]);
    }
    render_rows(&rows)
}

fn render_rows(rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}
