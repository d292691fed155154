//! Plans of sub-objectives over the operators Retrieve, Rank and Reason:
//! prompt rendering, parsing, placeholder resolution and execution.

mod answers;
mod detect;
mod execute;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use answers::{parse_answer_list, AnswerParseError};
pub use detect::{extract_anchors, ConstraintDetector, RuleDetector};
pub use execute::{
    execute, Ablation, ExecutionError, ExecutionFailure, ExecutionTrace, FactRecord, GatewayCall, Pipeline,
    PipelineConfig, StepError, StepRecord, DEFAULT_SEARCH_K,
};
pub use parse::{parse_plan, render_plan_prompt, resolve_placeholders, serialize_plan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operator {
    Retrieve,
    Rank,
    Reason,
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::Retrieve => "Retrieve",
            Operator::Rank => "Rank",
            Operator::Reason => "Reason",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    /// 1-based position in the expanded plan.
    pub index: usize,
    pub operator: Operator,
    /// Objective text; `[answer i]` tokens use expanded step indices.
    pub objective: String,
    /// Steps whose answers this step consumes.
    pub references: BTreeSet<usize>,
    /// 1-based sub-objective of the source text this step came from.
    pub segment: usize,
    /// Name bound by a `[name] = ...` prefix, if any.
    pub binding: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub question: String,
    pub steps: Vec<PlanStep>,
}

impl Plan {
    /// The single-retrieval plan over the raw question.
    pub fn single_retrieve(question: &str) -> Plan {
        Plan {
            question: question.to_string(),
            steps: vec![PlanStep {
                index: 1,
                operator: Operator::Retrieve,
                objective: question.trim().to_string(),
                references: BTreeSet::new(),
                segment: 1,
                binding: None,
            }],
        }
    }

    pub fn is_single_retrieve(&self) -> bool {
        self.steps.len() == 1 && self.steps[0].operator == Operator::Retrieve
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("plan has no sub-objectives")]
    EmptyPlan,
    #[error("sub-objective {segment}: unknown operator {token:?}")]
    UnknownOperator { segment: usize, token: String },
    #[error("sub-objective {segment}: expected `Operator: objective`, found {text:?}")]
    MalformedSegment { segment: usize, text: String },
    #[error("sub-objective {segment}: empty objective")]
    EmptyObjective { segment: usize },
    #[error("sub-objective {segment}: [answer {reference}] does not refer to an earlier sub-objective")]
    ForwardReference { segment: usize, reference: usize },
    #[error("sub-objective {segment}: {operator} needs an earlier Retrieve")]
    MissingRetrieve { segment: usize, operator: Operator },
    #[error("sub-objective {segment}: a multi-step plan must end with Reason")]
    FinalStepNotReason { segment: usize },
    #[error("step {step}: referenced step {reference} has no answers")]
    UnresolvedReference { step: usize, reference: usize },
}
