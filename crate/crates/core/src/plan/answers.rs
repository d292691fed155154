use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

static INLINE_BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+-\s*").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnswerParseError {
    #[error("empty answer")]
    Empty,
    #[error("unbalanced brackets or quotes in {0:?}")]
    Unbalanced(String),
}

fn strip_quotes(item: &str) -> &str {
    let t = item.trim();
    for q in ['\'', '"', '`'] {
        if t.len() >= 2 && t.starts_with(q) && t.ends_with(q) {
            return t[1..t.len() - 1].trim();
        }
    }
    t
}

/// Splits on commas outside quotes.
fn split_list(inner: &str, whole: &str) -> Result<Vec<String>, AnswerParseError> {
    let mut items = Vec::new();
    let mut current = String::new();
    let mut quote: Option<char> = None;
    for ch in inner.chars() {
        match quote {
            Some(q) if ch == q => {
                quote = None;
                current.push(ch);
            }
            Some(_) => current.push(ch),
            // An apostrophe inside a word is not a quote.
            None if (ch == '\'' || ch == '"') && current.trim().is_empty() => {
                quote = Some(ch);
                current.push(ch);
            }
            None if ch == ',' => items.push(std::mem::take(&mut current)),
            None => current.push(ch),
        }
    }
    if quote.is_some() {
        return Err(AnswerParseError::Unbalanced(whole.to_string()));
    }
    items.push(current);
    Ok(items
        .iter()
        .map(|s| strip_quotes(s).to_string())
        .filter(|s| !s.is_empty())
        .collect())
}

/// Answer list from a reasoning response. Accepts a bracketed list
/// (`['A', 'B']`), "- " bullets, or comma/newline separated text.
pub fn parse_answer_list(text: &str) -> Result<Vec<String>, AnswerParseError> {
    let mut t = text.trim();
    for prefix in ["Answer:", "Answers:", "answer:", "answers:"] {
        if let Some(rest) = t.strip_prefix(prefix) {
            t = rest.trim();
        }
    }
    if t.is_empty() {
        return Err(AnswerParseError::Empty);
    }
    let opens = t.matches('[').count();
    if opens != t.matches(']').count() {
        return Err(AnswerParseError::Unbalanced(t.to_string()));
    }
    let items = if t.starts_with('[') && t.ends_with(']') && opens == 1 {
        split_list(&t[1..t.len() - 1], t)?
    } else {
        let lines: Vec<&str> = t.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let bullets = lines.iter().any(|l| l.starts_with("- ") || l.starts_with("* "));
        if bullets {
            // Bullets may also run together on one line: "- A - B -C".
            lines
                .iter()
                .flat_map(|l| INLINE_BULLET.split(l.trim_start_matches("- ").trim_start_matches("* ")))
                .map(|l| strip_quotes(l).to_string())
                .filter(|l| !l.is_empty())
                .collect()
        } else {
            let mut out = Vec::new();
            for line in lines {
                out.extend(split_list(line, t)?);
            }
            out
        }
    };
    let mut unique: Vec<String> = Vec::with_capacity(items.len());
    for item in items {
        if !unique.contains(&item) {
            unique.push(item);
        }
    }
    if unique.is_empty() {
        return Err(AnswerParseError::Empty);
    }
    Ok(unique)
}
