use std::collections::HashMap;
use std::io::Read;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{GatewayError, GenerationRequest, Generator, Purpose, RulePlanner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptMatch {
    Exact,
    Regex,
}

/// One row of a script table file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub kind: ScriptMatch,
    pub key: String,
    pub response: String,
}

impl ScriptEntry {
    pub fn exact(prompt: &str, response: &str) -> Self {
        ScriptEntry {
            kind: ScriptMatch::Exact,
            key: prompt.to_string(),
            response: response.to_string(),
        }
    }

    pub fn regex(pattern: &str, response: &str) -> Self {
        ScriptEntry {
            kind: ScriptMatch::Regex,
            key: pattern.to_string(),
            response: response.to_string(),
        }
    }
}

/// Collapses every whitespace run to one space and trims the ends.
pub fn normalize_prompt(prompt: &str) -> String {
    prompt.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Exact entries keyed on the normalized prompt, then regex rules tried in
/// file order against the raw prompt. Regex responses may reference named
/// or numbered groups as `$name`.
#[derive(Debug, Clone)]
pub struct Script {
    entries: Vec<ScriptEntry>,
    exact: HashMap<String, usize>,
    rules: Vec<(Regex, usize)>,
}

impl Script {
    pub fn new(entries: Vec<ScriptEntry>) -> Result<Self, GatewayError> {
        let mut exact = HashMap::new();
        let mut rules = Vec::new();
        for (i, e) in entries.iter().enumerate() {
            match e.kind {
                ScriptMatch::Exact => {
                    // The first entry for a key wins, like the first matching rule.
                    exact.entry(normalize_prompt(&e.key)).or_insert(i);
                }
                ScriptMatch::Regex => {
                    let re = Regex::new(&e.key)
                        .map_err(|err| GatewayError::Config(format!("script rule {}: {err}", i + 1)))?;
                    rules.push((re, i));
                }
            }
        }
        Ok(Script { entries, exact, rules })
    }

    pub fn load<R: Read>(source: R) -> Result<Self, GatewayError> {
        let entries: Vec<ScriptEntry> =
            serde_json::from_reader(source).map_err(|e| GatewayError::Config(format!("script table: {e}")))?;
        Script::new(entries)
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("entries serialize")
    }

    pub fn lookup(&self, prompt: &str) -> Option<String> {
        if let Some(&i) = self.exact.get(&normalize_prompt(prompt)) {
            return Some(self.entries[i].response.clone());
        }
        self.rules.iter().find_map(|(re, i)| {
            re.captures(prompt).map(|caps| {
                let mut out = String::new();
                caps.expand(&self.entries[*i].response, &mut out);
                out
            })
        })
    }
}

pub struct ScriptedBackend {
    script: Script,
    plan_fallback: bool,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        ScriptedBackend {
            script,
            plan_fallback: false,
        }
    }

    pub fn with_plan_fallback(mut self, on: bool) -> Self {
        self.plan_fallback = on;
        self
    }

    pub fn script(&self) -> &Script {
        &self.script
    }
}

impl Generator for ScriptedBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<String, GatewayError> {
        match self.script.lookup(&request.prompt) {
            Some(r) => Ok(r),
            None if self.plan_fallback && request.purpose == Purpose::Plan => RulePlanner.generate(request),
            None => Err(GatewayError::ScriptMiss {
                prompt: request.prompt.clone(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script() -> Script {
        Script::new(vec![
            ScriptEntry::exact("Question:  who\n visited?", "A"),
            ScriptEntry::regex(r"(?m)^(?P<s>\w+) hosted (?P<o>\w+) at \S+$", "$s and $o"),
            ScriptEntry::regex(r"hosted", "unreachable"),
        ])
        .unwrap()
    }

    #[test]
    fn exact_match_ignores_whitespace_runs() {
        let s = script();
        assert_eq!(s.lookup("Question: who visited?").as_deref(), Some("A"));
        assert_eq!(s.lookup("  Question:\twho visited?\n").as_deref(), Some("A"));
        assert_eq!(s.lookup("Question: who visited"), None);
    }

    #[test]
    fn regex_rules_expand_captures_in_order() {
        let s = script();
        assert_eq!(s.lookup("Facts:\nKenya hosted Japan at 2010\n").as_deref(), Some("Kenya and Japan"));
    }

    #[test]
    fn miss_is_an_error() {
        let backend = ScriptedBackend::new(script());
        let req = GenerationRequest::new("something else", Purpose::Reason);
        assert!(matches!(backend.generate(&req), Err(GatewayError::ScriptMiss { .. })));
        let plan = GenerationRequest::new("Question: Who visited B at 2010?", Purpose::Plan);
        assert!(backend.generate(&plan).is_err());
        let fallback = ScriptedBackend::new(script()).with_plan_fallback(true);
        assert_eq!(fallback.generate(&plan).unwrap(), "Retrieve: Who visited B at 2010?");
    }

    #[test]
    fn table_file_format() {
        let json = r#"[{"match": "exact", "key": "k", "response": "r"}, {"match": "regex", "key": "^x(\\d)", "response": "got $1"}]"#;
        let s = Script::load(json.as_bytes()).unwrap();
        assert_eq!(s.lookup("k").as_deref(), Some("r"));
        assert_eq!(s.lookup("x7").as_deref(), Some("got 7"));
        assert!(Script::load(r#"[{"match": "regex", "key": "(", "response": ""}]"#.as_bytes()).is_err());
        let again = Script::load(s.to_json().as_bytes()).unwrap();
        assert_eq!(again.entries(), s.entries());
    }
}
