use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::answers::{parse_answer_list, AnswerParseError};
use super::detect::ConstraintDetector;
use super::parse::{parse_plan, render_plan_prompt, resolve_placeholders};
use super::{Operator, Plan, PlanError, PlanStep};
use crate::embedder::{EmbedError, EmbedderParams};
use crate::gateway::{
    render_direct_prompt, render_reasoning_prompt, GatewayError, GenerationRequest, Generator, Purpose, Script,
    ScriptEntry,
};
use crate::kg::{FactId, FactTime};
use crate::rerank::{
    candidates_from_hits, chronological_sort, rerank, RerankError, ScoredFact, SortOrder, TemporalConstraint,
    DEFAULT_MU, DEFAULT_TOP_N,
};
use crate::store::{StoreError, TemporalKnowledgeStore};

/// Facts pulled from the store before re-ranking trims to `top_n`.
pub const DEFAULT_SEARCH_K: usize = 100;

/// Pipeline components switched off for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ablation {
    /// Single retrieval over the raw question instead of a generated plan.
    pub no_plan: bool,
    /// Rank steps leave the retrieval order untouched.
    pub no_rank: bool,
    /// The question goes straight to the generator without facts.
    pub no_retrieve: bool,
    /// Questions are embedded without the soft prompt.
    pub no_prompt: bool,
    /// Semantic top-n only, no temporal scoring or filtering.
    pub no_rerank: bool,
}

impl Ablation {
    pub fn labels(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (on, label) in [
            (self.no_plan, "no-plan"),
            (self.no_rank, "no-rank"),
            (self.no_retrieve, "no-retrieve"),
            (self.no_prompt, "no-prompt"),
            (self.no_rerank, "no-rerank"),
        ] {
            if on {
                out.push(label);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mu: f64,
    pub top_n: usize,
    pub search_k: usize,
    pub ablation: Ablation,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mu: DEFAULT_MU,
            top_n: DEFAULT_TOP_N,
            search_k: DEFAULT_SEARCH_K,
            ablation: Ablation::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayCall {
    pub purpose: Purpose,
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactRecord {
    pub fact_id: FactId,
    pub text: String,
    pub semantic: f64,
    pub temporal: Option<f64>,
    pub combined: f64,
    pub time: FactTime,
}

impl FactRecord {
    fn scored(&self) -> ScoredFact {
        ScoredFact {
            fact_id: self.fact_id,
            semantic: self.semantic,
            temporal: self.temporal,
            combined: self.combined,
            time: self.time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub operator: Operator,
    pub resolved: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<TemporalConstraint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub facts: Vec<FactRecord>,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call: Option<GatewayCall>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub question: String,
    pub ablation: Ablation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_call: Option<GatewayCall>,
    pub plan: Plan,
    pub steps: Vec<StepRecord>,
    pub final_answers: Vec<String>,
}

impl ExecutionTrace {
    fn new(question: &str, ablation: Ablation) -> Self {
        ExecutionTrace {
            question: question.to_string(),
            ablation,
            plan_call: None,
            plan: Plan {
                question: question.to_string(),
                steps: Vec::new(),
            },
            steps: Vec::new(),
            final_answers: Vec::new(),
        }
    }

    pub fn gateway_calls(&self) -> impl Iterator<Item = &GatewayCall> {
        self.plan_call.iter().chain(self.steps.iter().filter_map(|s| s.call.as_ref()))
    }

    pub fn llm_calls(&self) -> usize {
        self.gateway_calls().count()
    }

    pub fn retrieve_calls(&self) -> usize {
        self.steps.iter().filter(|s| s.operator == Operator::Retrieve).count()
    }

    /// A script that answers every recorded prompt with its recorded
    /// response, for replaying the run offline.
    pub fn replay_script(&self) -> Script {
        let entries = self
            .gateway_calls()
            .map(|c| ScriptEntry::exact(&c.prompt, &c.response))
            .collect();
        Script::new(entries).expect("exact entries always compile")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Unresolved(PlanError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Rerank(#[from] RerankError),
    #[error("no retrieved fact satisfies the temporal constraint")]
    NoQualifyingFacts,
    #[error("no retrieved facts to reason over")]
    NoFacts,
    #[error(transparent)]
    Gateway(GatewayError),
    #[error("unusable answer: {0}")]
    Answer(#[from] AnswerParseError),
}

#[derive(Debug, Error)]
pub enum ExecutionError {
    #[error("plan rejected: {0}")]
    Plan(#[from] PlanError),
    #[error("planning request failed: {0}")]
    Planning(GatewayError),
    #[error("step {step} failed: {source}")]
    StepFailed { step: usize, source: StepError },
    #[error("generation backend unavailable: {0}")]
    BackendUnavailable(GatewayError),
    #[error("store was built with different encoder parameters")]
    FingerprintMismatch,
}

/// An execution error with the trace recorded up to and including the
/// failing step.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct ExecutionFailure {
    pub error: ExecutionError,
    pub trace: ExecutionTrace,
}

fn unavailable(e: &GatewayError) -> bool {
    matches!(
        e,
        GatewayError::Timeout | GatewayError::Transport(_) | GatewayError::HttpError(_) | GatewayError::AuthMissing(_)
    )
}

pub struct Pipeline<'a> {
    store: &'a TemporalKnowledgeStore,
    params: &'a EmbedderParams,
    gateway: &'a dyn Generator,
    detector: &'a dyn ConstraintDetector,
    config: PipelineConfig,
}

type Failure = Box<ExecutionFailure>;

fn fail(error: ExecutionError, trace: ExecutionTrace) -> Failure {
    Box::new(ExecutionFailure { error, trace })
}

fn time_text(time: &FactTime) -> String {
    match time {
        FactTime::Point { at } => at.to_string(),
        FactTime::Interval { begin, end } => format!("[{begin}, {end}]"),
    }
}

impl<'a> Pipeline<'a> {
    pub fn new(
        store: &'a TemporalKnowledgeStore,
        params: &'a EmbedderParams,
        gateway: &'a dyn Generator,
        detector: &'a dyn ConstraintDetector,
        config: PipelineConfig,
    ) -> Result<Self, ExecutionError> {
        if store.fingerprint() != params.fingerprint() {
            return Err(ExecutionError::FingerprintMismatch);
        }
        Ok(Pipeline {
            store,
            params,
            gateway,
            detector,
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Plans (unless ablated) and executes a question.
    pub fn answer(&self, question: &str) -> Result<ExecutionTrace, Failure> {
        let ablation = self.config.ablation;
        let mut trace = ExecutionTrace::new(question, ablation);
        if ablation.no_retrieve {
            return self.answer_directly(question, trace);
        }
        let plan = if ablation.no_plan {
            Plan::single_retrieve(question)
        } else {
            let request = GenerationRequest::new(render_plan_prompt(question), Purpose::Plan);
            let response = match self.gateway.generate(&request) {
                Ok(r) => r,
                Err(e) if unavailable(&e) => return Err(fail(ExecutionError::BackendUnavailable(e), trace)),
                Err(e) => return Err(fail(ExecutionError::Planning(e), trace)),
            };
            trace.plan_call = Some(GatewayCall {
                purpose: Purpose::Plan,
                prompt: request.prompt,
                response: response.clone(),
            });
            match parse_plan(question, &response) {
                Ok(p) => p,
                Err(e) => return Err(fail(ExecutionError::Plan(e), trace)),
            }
        };
        self.run(plan, trace)
    }

    /// Executes a given plan.
    pub fn execute(&self, plan: &Plan) -> Result<ExecutionTrace, Failure> {
        let trace = ExecutionTrace::new(&plan.question, self.config.ablation);
        self.run(plan.clone(), trace)
    }

    fn answer_directly(&self, question: &str, mut trace: ExecutionTrace) -> Result<ExecutionTrace, Failure> {
        let step = PlanStep {
            index: 1,
            operator: Operator::Reason,
            objective: question.to_string(),
            references: Default::default(),
            segment: 1,
            binding: None,
        };
        trace.plan.steps.push(step);
        let mut record = StepRecord {
            step: 1,
            operator: Operator::Reason,
            resolved: question.to_string(),
            constraint: None,
            facts: Vec::new(),
            answers: Vec::new(),
            call: None,
            skipped: false,
        };
        let result = self.call_reason(render_direct_prompt(question), &mut record);
        trace.steps.push(record);
        match result {
            Ok(()) => {
                trace.final_answers = trace.steps[0].answers.clone();
                Ok(trace)
            }
            Err(e) => Err(fail(e.into_execution(1), trace)),
        }
    }

    fn run(&self, plan: Plan, mut trace: ExecutionTrace) -> Result<ExecutionTrace, Failure> {
        trace.plan = plan;
        // Record index of the facts the next Rank or Reason consumes.
        let mut current: Option<usize> = None;
        for step in trace.plan.steps.clone() {
            let resolved = match resolve_placeholders(&step, &trace) {
                Ok(r) => r,
                Err(e) => return Err(fail(StepFailure::Step(StepError::Unresolved(e)).into_execution(step.index), trace)),
            };
            let mut record = StepRecord {
                step: step.index,
                operator: step.operator,
                resolved,
                constraint: None,
                facts: Vec::new(),
                answers: Vec::new(),
                call: None,
                skipped: false,
            };
            let result = match step.operator {
                Operator::Retrieve => self.retrieve(&mut record),
                Operator::Rank => self.rank(current.map(|i| &trace.steps[i]), &mut record),
                Operator::Reason => match current {
                    Some(i) => {
                        let texts: Vec<String> = trace.steps[i].facts.iter().map(|f| f.text.clone()).collect();
                        match render_reasoning_prompt(&texts, &record.resolved) {
                            Ok(prompt) => self.call_reason(prompt, &mut record),
                            Err(_) => Err(StepFailure::Step(StepError::NoFacts)),
                        }
                    }
                    None => Err(StepFailure::Step(StepError::NoFacts)),
                },
            };
            if matches!(step.operator, Operator::Retrieve | Operator::Rank) {
                current = Some(trace.steps.len());
            }
            trace.steps.push(record);
            if let Err(e) = result {
                return Err(fail(e.into_execution(step.index), trace));
            }
        }
        let last = trace.steps.last().expect("plans have steps");
        trace.final_answers = if trace.plan.is_single_retrieve() {
            last.answers.clone()
        } else {
            trace
                .steps
                .iter()
                .rev()
                .find(|s| s.operator == Operator::Reason)
                .map(|s| s.answers.clone())
                .unwrap_or_default()
        };
        Ok(trace)
    }

    fn retrieve(&self, record: &mut StepRecord) -> Result<(), StepFailure> {
        let cfg = &self.config;
        let query = self.params.embed(&record.resolved, !cfg.ablation.no_prompt).map_err(StepError::from)?;
        let hits = self
            .store
            .search(&query, cfg.search_k.max(cfg.top_n))
            .map_err(StepError::from)?;
        let candidates = candidates_from_hits(self.store, &hits);
        let scored = if cfg.ablation.no_rerank {
            rerank(&candidates, &TemporalConstraint::NONE, cfg.mu, cfg.top_n).map_err(StepError::from)?
        } else {
            let constraint = self.detector.detect(&record.resolved);
            record.constraint = Some(constraint);
            let mut scored = rerank(&candidates, &constraint, cfg.mu, usize::MAX).map_err(StepError::from)?;
            if constraint.kind.filters() {
                scored.retain(|f| !f.violates());
            }
            scored.truncate(cfg.top_n);
            scored
        };
        if scored.is_empty() {
            return Err(StepError::NoQualifyingFacts.into());
        }
        record.facts = scored
            .iter()
            .map(|s| FactRecord {
                fact_id: s.fact_id,
                text: self.store.entry(s.fact_id).map(|e| e.text.clone()).unwrap_or_default(),
                semantic: s.semantic,
                temporal: s.temporal,
                combined: s.combined,
                time: s.time,
            })
            .collect();
        // "When" objectives answer with times, others with objects.
        let wants_time = record.resolved.trim_start().to_lowercase().starts_with("when");
        for s in &scored {
            let Some(entry) = self.store.entry(s.fact_id) else { continue };
            let value = if wants_time { time_text(&s.time) } else { entry.fact.object.clone() };
            if !record.answers.contains(&value) {
                record.answers.push(value);
            }
        }
        Ok(())
    }

    fn rank(&self, source: Option<&StepRecord>, record: &mut StepRecord) -> Result<(), StepFailure> {
        let source = source.ok_or(StepFailure::Step(StepError::NoFacts))?;
        if self.config.ablation.no_rank {
            record.skipped = true;
            record.facts = source.facts.clone();
            return Ok(());
        }
        let lower = record.resolved.to_lowercase();
        let order = if ["descending", "last", "latest", "recent"].iter().any(|w| lower.contains(w)) {
            SortOrder::Descending
        } else {
            SortOrder::Ascending
        };
        let scored: Vec<ScoredFact> = source.facts.iter().map(FactRecord::scored).collect();
        let sorted = chronological_sort(&scored, order);
        record.facts = sorted
            .iter()
            .map(|s| source.facts.iter().find(|f| f.fact_id == s.fact_id).unwrap().clone())
            .collect();
        Ok(())
    }

    fn call_reason(&self, prompt: String, record: &mut StepRecord) -> Result<(), StepFailure> {
        let request = GenerationRequest::new(prompt, Purpose::Reason);
        let response = self.gateway.generate(&request).map_err(StepFailure::Gateway)?;
        record.call = Some(GatewayCall {
            purpose: Purpose::Reason,
            prompt: request.prompt,
            response: response.clone(),
        });
        record.answers = parse_answer_list(&response).map_err(StepError::from)?;
        Ok(())
    }
}

enum StepFailure {
    Step(StepError),
    Gateway(GatewayError),
}

impl From<StepError> for StepFailure {
    fn from(e: StepError) -> Self {
        StepFailure::Step(e)
    }
}

impl StepFailure {
    fn into_execution(self, step: usize) -> ExecutionError {
        match self {
            StepFailure::Gateway(e) if unavailable(&e) => ExecutionError::BackendUnavailable(e),
            StepFailure::Gateway(e) => ExecutionError::StepFailed {
                step,
                source: StepError::Gateway(e),
            },
            StepFailure::Step(source) => ExecutionError::StepFailed { step, source },
        }
    }
}

/// Executes `plan` with the given components.
pub fn execute(
    plan: &Plan,
    store: &TemporalKnowledgeStore,
    params: &EmbedderParams,
    config: PipelineConfig,
    gateway: &dyn Generator,
    detector: &dyn ConstraintDetector,
) -> Result<ExecutionTrace, Box<ExecutionFailure>> {
    let pipeline = Pipeline::new(store, params, gateway, detector, config)
        .map_err(|e| fail(e, ExecutionTrace::new(&plan.question, config.ablation)))?;
    pipeline.execute(plan)
}
