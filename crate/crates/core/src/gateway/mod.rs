//! Text generation behind one interface: a scripted table for tests, a
//! rule-based planner for offline use and an OpenAI-style HTTP client.

mod http;
mod rule;
mod script;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{request_body, HttpBackend};
pub use rule::{plan_for_question, RulePlanner};
pub use script::{normalize_prompt, Script, ScriptEntry, ScriptMatch, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    Plan,
    Reason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub purpose: Purpose,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, purpose: Purpose) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            max_tokens: 512,
            temperature: 0.0,
            purpose,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no script entry matches prompt: {prompt:?}")]
    ScriptMiss { prompt: String },
    #[error("http status {0}")]
    HttpError(u16),
    #[error("request timed out")]
    Timeout,
    #[error("environment variable {0} with the API key is not set")]
    AuthMissing(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed backend response: {0}")]
    BadResponse(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("{backend} backend cannot serve {purpose:?} requests")]
    UnsupportedPurpose { backend: &'static str, purpose: Purpose },
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("reasoning prompt needs at least one fact")]
    EmptyFacts,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub trait Generator: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<String, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Http,
    RulePlanner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_auth_env")]
    pub auth_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Script table for the scripted backend.
    #[serde(default)]
    pub script: Option<PathBuf>,
    /// Scripted only: answer plan prompts the table misses with the rule planner.
    #[serde(default)]
    pub plan_fallback: bool,
}

fn default_auth_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    3
}

fn default_backoff() -> u64 {
    500
}

fn default_in_flight() -> usize {
    4
}

impl BackendConfig {
    pub fn new(kind: BackendKind) -> Self {
        BackendConfig {
            kind,
            endpoint: None,
            model: None,
            auth_env: default_auth_env(),
            timeout_secs: default_timeout(),
            retries: default_retries(),
            backoff_ms: default_backoff(),
            max_in_flight: default_in_flight(),
            script: None,
            plan_fallback: false,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.kind {
            BackendKind::Http if self.endpoint.is_none() || self.model.is_none() => {
                Err(GatewayError::Config("http backend needs endpoint and model".into()))
            }
            BackendKind::Http if self.max_in_flight == 0 => {
                Err(GatewayError::Config("max_in_flight must be at least 1".into()))
            }
            BackendKind::Scripted if self.script.is_none() => {
                Err(GatewayError::Config("scripted backend needs a script table".into()))
            }
            _ => Ok(()),
        }
    }
}

/// A configured backend.
pub enum Gateway {
    Scripted(ScriptedBackend),
    Http(HttpBackend),
    RulePlanner(RulePlanner),
}

impl Gateway {
    /// Builds the backend; a scripted backend reads its table from
    /// `config.script`.
    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(match config.kind {
            BackendKind::Scripted => {
                let path = config.script.as_ref().expect("validated");
                let script = Script::load(std::fs::File::open(path)?)?;
                Gateway::Scripted(ScriptedBackend::new(script).with_plan_fallback(config.plan_fallback))
            }
            BackendKind::Http => Gateway::Http(HttpBackend::new(config.clone())?),
            BackendKind::RulePlanner => Gateway::RulePlanner(RulePlanner),
        })
    }
}

impl Generator for Gateway {
    fn generate(&self, request: &GenerationRequest) -> Result<String, GatewayError> {
        if request.prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        match self {
            Gateway::Scripted(b) => b.generate(request),
            Gateway::Http(b) => b.generate(request),
            Gateway::RulePlanner(b) => b.generate(request),
        }
    }
}

pub fn generate(gateway: &dyn Generator, request: &GenerationRequest) -> Result<String, GatewayError> {
    gateway.generate(request)
}

const REASONING_TEMPLATE: &str = "Based on the facts, please answer the given question.
Keep the answer as simple as possible and return all the possible answers as a list.
Facts: <facts>
Question: <question>";

/// The reasoning prompt, facts one per line in the order given.
pub fn render_reasoning_prompt<S: AsRef<str>>(facts: &[S], question: &str) -> Result<String, GatewayError> {
    if facts.is_empty() {
        return Err(GatewayError::EmptyFacts);
    }
    let joined = facts.iter().map(AsRef::as_ref).collect::<Vec<_>>().join("\n");
    Ok(REASONING_TEMPLATE
        .replacen("<facts>", &joined, 1)
        .replacen("<question>", question, 1))
}

/// Prompt for answering without retrieved facts.
pub fn render_direct_prompt(question: &str) -> String {
    format!(
        "Please answer the given question. Keep the answer as simple as possible and return all the possible answers as a list.\nQuestion: {question}"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reasoning_prompt_layout() {
        let p = render_reasoning_prompt(&["B at 2010", "A at 2009"], "Who?").unwrap();
        assert!(p.contains("Keep the answer as simple as possible and return all the possible answers as a list.\n"));
        assert!(p.ends_with("Facts: B at 2010\nA at 2009\nQuestion: Who?"));
        assert!(matches!(render_reasoning_prompt::<&str>(&[], "Who?"), Err(GatewayError::EmptyFacts)));
    }

    #[test]
    fn config_requirements() {
        assert!(BackendConfig::new(BackendKind::Http).validate().is_err());
        assert!(BackendConfig::new(BackendKind::Scripted).validate().is_err());
        assert!(BackendConfig::new(BackendKind::RulePlanner).validate().is_ok());
        let cfg: BackendConfig = serde_json::from_str(r#"{"kind": "rule_planner"}"#).unwrap();
        assert_eq!(cfg, BackendConfig::new(BackendKind::RulePlanner));
    }

    #[test]
    fn empty_prompt_rejected() {
        let gw = Gateway::RulePlanner(RulePlanner);
        assert!(matches!(
            gw.generate(&GenerationRequest::new("  ", Purpose::Plan)),
            Err(GatewayError::EmptyPrompt)
        ));
    }
}
