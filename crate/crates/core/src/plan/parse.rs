use std::collections::{BTreeSet, HashMap};
use std::sync::LazyLock;

use regex::{Captures, Regex};

use super::execute::ExecutionTrace;
use super::{Operator, Plan, PlanError, PlanStep};

const PLAN_TEMPLATE: &str = "Task: Decompose the given temporal question into a sequence of sub-objectives.
Guidelines:
1. Each sub-objective must use one of the predefined operators: Retrieve, Rank, or Reason.
2. Separate each sub-objective with a semicolon (;).
3. Use [answer i] to refer to the output of a previous sub-objective i.
4. Ensure the sub-objectives form a logical reasoning chain.
Example:
Input: Who investigated China first after Segolene Royal?
Output:
Retrieve: When did Segolene Royal investigate China?;
Retrieve: Who investigated China after [answer 1]?;
Rank: Rank these facts by time;
Reason: Who is the first among [answer 2]?
Now process:
Question: <question>";

pub fn render_plan_prompt(question: &str) -> String {
    PLAN_TEMPLATE.replacen("<question>", question.trim(), 1)
}

static ANSWER_REF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\[\s*answer\s*(\d+)\s*\]").unwrap());
static BRACKETED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[([^\[\]]+)\]").unwrap());
static BINDING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[\s*([A-Za-z][A-Za-z0-9_ ]*?)\s*\]\s*=\s*(.*)$").unwrap());
static NUMBERING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:\(\d+\)|\d+[.)])\s*").unwrap());

struct Segment {
    operators: &'static [Operator],
    objective: String,
    binding: Option<String>,
}

fn parse_operator(token: &str, segment: usize) -> Result<&'static [Operator], PlanError> {
    let norm = token
        .replace(['*', '_'], "")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    Ok(match norm.as_str() {
        "retrieve" => &[Operator::Retrieve],
        "rank" | "rerank" => &[Operator::Rank],
        "reason" => &[Operator::Reason],
        "retrieve & reason" | "retrieve and reason" => &[Operator::Retrieve, Operator::Reason],
        _ => {
            return Err(PlanError::UnknownOperator {
                segment,
                token: token.trim().to_string(),
            })
        }
    })
}

fn split_segments(output: &str) -> Result<Vec<Segment>, PlanError> {
    let raw: Vec<&str> = output.split(';').map(str::trim).filter(|s| !s.is_empty()).collect();
    if raw.is_empty() {
        return Err(PlanError::EmptyPlan);
    }
    raw.iter()
        .enumerate()
        .map(|(i, text)| {
            let segment = i + 1;
            let text = NUMBERING.replace(text, "");
            let (token, rest) = text.split_once(':').ok_or_else(|| PlanError::MalformedSegment {
                segment,
                text: text.to_string(),
            })?;
            let operators = parse_operator(token, segment)?;
            let rest = rest.trim();
            let (binding, objective) = match BINDING.captures(rest) {
                Some(c) => (Some(c[1].to_string()), c[2].trim().to_string()),
                None => (None, rest.to_string()),
            };
            if objective.is_empty() {
                return Err(PlanError::EmptyObjective { segment });
            }
            Ok(Segment {
                operators,
                objective,
                binding,
            })
        })
        .collect()
}

/// Segments referenced by `[answer j]` or by a `[name]` bound earlier.
fn segment_references(
    seg: &Segment,
    segment: usize,
    bindings: &HashMap<String, usize>,
) -> Result<BTreeSet<usize>, PlanError> {
    let mut refs = BTreeSet::new();
    for c in BRACKETED.captures_iter(&seg.objective) {
        if let Some(a) = ANSWER_REF.captures(c.get(0).unwrap().as_str()) {
            let reference: usize = a[1].parse().unwrap_or(usize::MAX);
            if reference == 0 || reference >= segment {
                return Err(PlanError::ForwardReference { segment, reference });
            }
            refs.insert(reference);
        } else if let Some(&j) = bindings.get(&c[1].trim().to_lowercase()) {
            refs.insert(j);
        }
    }
    Ok(refs)
}

/// Parses semicolon-separated `Operator: objective` text into a validated
/// plan. `Retrieve & Reason` segments expand into two steps, and `[answer j]`
/// is renumbered from sub-objective to step index.
pub fn parse_plan(question: &str, output: &str) -> Result<Plan, PlanError> {
    let segments = split_segments(output)?;

    let mut bindings: HashMap<String, usize> = HashMap::new();
    let mut seg_refs = Vec::with_capacity(segments.len());
    for (i, seg) in segments.iter().enumerate() {
        seg_refs.push(segment_references(seg, i + 1, &bindings)?);
        if let Some(name) = &seg.binding {
            bindings.insert(name.to_lowercase(), i + 1);
        }
    }

    // Step index producing each segment's answer.
    let mut last_step = Vec::with_capacity(segments.len());
    let mut next = 1;
    for seg in &segments {
        next += seg.operators.len();
        last_step.push(next - 1);
    }

    let mut steps = Vec::new();
    let mut seen_retrieve = false;
    for (i, seg) in segments.iter().enumerate() {
        let segment = i + 1;
        let objective = ANSWER_REF
            .replace_all(&seg.objective, |c: &Captures| {
                let j: usize = c[1].parse().unwrap();
                format!("[answer {}]", last_step[j - 1])
            })
            .into_owned();
        let refs: BTreeSet<usize> = seg_refs[i].iter().map(|j| last_step[j - 1]).collect();
        for (k, &operator) in seg.operators.iter().enumerate() {
            if operator == Operator::Retrieve {
                seen_retrieve = true;
            } else if !seen_retrieve {
                return Err(PlanError::MissingRetrieve { segment, operator });
            }
            let mut references = refs.clone();
            if k > 0 {
                references.insert(steps.len());
            }
            steps.push(PlanStep {
                index: steps.len() + 1,
                operator,
                objective: objective.clone(),
                references,
                segment,
                binding: if k + 1 == seg.operators.len() { seg.binding.clone() } else { None },
            });
        }
    }

    let last = steps.last().expect("segments are non-empty");
    if steps.len() > 1 && last.operator != Operator::Reason {
        return Err(PlanError::FinalStepNotReason { segment: last.segment });
    }
    Ok(Plan {
        question: question.to_string(),
        steps,
    })
}

/// Wire format of a plan; `parse_plan` inverts it.
pub fn serialize_plan(plan: &Plan) -> String {
    let segment_of: HashMap<usize, usize> = plan.steps.iter().map(|s| (s.index, s.segment)).collect();
    let mut parts: Vec<String> = Vec::new();
    let mut i = 0;
    while i < plan.steps.len() {
        let step = &plan.steps[i];
        let group: Vec<&PlanStep> = plan.steps[i..].iter().take_while(|s| s.segment == step.segment).collect();
        let op = if group.len() == 2 {
            "Retrieve & Reason".to_string()
        } else {
            step.operator.to_string()
        };
        let last = group.last().unwrap();
        let objective = ANSWER_REF.replace_all(&step.objective, |c: &Captures| {
            let k: usize = c[1].parse().unwrap();
            format!("[answer {}]", segment_of.get(&k).copied().unwrap_or(k))
        });
        let binding = last.binding.as_ref().map(|b| format!("[{b}] = ")).unwrap_or_default();
        parts.push(format!("{op}: {binding}{objective}"));
        i += group.len();
    }
    parts.join("; ")
}

fn format_answers(answers: &[String]) -> String {
    if answers.len() == 1 {
        answers[0].clone()
    } else {
        format!("[{}]", answers.join(", "))
    }
}

/// Substitutes `[answer i]` and bound `[name]` placeholders with the answers
/// recorded for the referenced steps.
pub fn resolve_placeholders(step: &PlanStep, trace: &ExecutionTrace) -> Result<String, PlanError> {
    let bindings: HashMap<String, usize> = trace
        .plan
        .steps
        .iter()
        .filter(|s| s.index < step.index)
        .filter_map(|s| s.binding.as_ref().map(|b| (b.to_lowercase(), s.index)))
        .collect();
    let mut failure = None;
    let resolved = BRACKETED.replace_all(&step.objective, |c: &Captures| {
        let whole = c.get(0).unwrap().as_str();
        let target = match ANSWER_REF.captures(whole) {
            Some(a) => a[1].parse::<usize>().ok(),
            None => bindings.get(&c[1].trim().to_lowercase()).copied(),
        };
        let Some(k) = target else {
            return whole.to_string();
        };
        match trace.steps.iter().find(|r| r.step == k).filter(|r| !r.answers.is_empty()) {
            Some(r) => format_answers(&r.answers),
            None => {
                failure.get_or_insert(PlanError::UnresolvedReference {
                    step: step.index,
                    reference: k,
                });
                whole.to_string()
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(resolved.into_owned()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const WORKED: &str = "Retrieve: When did Segolene Royal investigate China?;
Retrieve: Who investigated China after [answer 1]?;
Rank: Rank these facts by time;
Reason: Who is the first among [answer 2]?";

    #[test]
    fn prompt_is_stable() {
        let p = render_plan_prompt("Who visited Kenya?");
        assert!(p.contains("2. Separate each sub-objective with a semicolon (;).\n"));
        assert!(p.ends_with("Now process:\nQuestion: Who visited Kenya?"));
        assert_eq!(p.matches("Who visited Kenya?").count(), 1);
        assert_eq!(p, render_plan_prompt("Who visited Kenya?"));
    }

    #[test]
    fn worked_example() {
        let plan = parse_plan("Who investigated China first after Segolene Royal?", WORKED).unwrap();
        let got: Vec<(usize, Operator, &str, Vec<usize>)> = plan
            .steps
            .iter()
            .map(|s| (s.index, s.operator, s.objective.as_str(), s.references.iter().copied().collect()))
            .collect();
        assert_eq!(
            got,
            vec![
                (1, Operator::Retrieve, "When did Segolene Royal investigate China?", vec![]),
                (2, Operator::Retrieve, "Who investigated China after [answer 1]?", vec![1]),
                (3, Operator::Rank, "Rank these facts by time", vec![]),
                (4, Operator::Reason, "Who is the first among [answer 2]?", vec![2]),
            ]
        );
    }

    #[test]
    fn composite_segments_expand() {
        let plan = parse_plan("q", "Retrieve & Reason: [time] = When is Andrew Jackson's presidency?").unwrap();
        assert_eq!(plan.steps.len(), 2);
        assert_eq!(plan.steps[0].operator, Operator::Retrieve);
        assert_eq!(plan.steps[1].operator, Operator::Reason);
        assert_eq!(plan.steps[1].references, BTreeSet::from([1]));
        assert_eq!(plan.steps[1].objective, "When is Andrew Jackson's presidency?");
        assert_eq!(plan.steps[1].binding.as_deref(), Some("time"));
    }

    #[test]
    fn answer_references_follow_expansion() {
        let plan = parse_plan(
            "q",
            "Retrieve & Reason: When did A visit B?; Retrieve: Who visited B after [answer 1]?; Rank: sort; Reason: Who first after [Answer 1]?",
        )
        .unwrap();
        assert_eq!(plan.steps[2].objective, "Who visited B after [answer 2]?");
        assert_eq!(plan.steps[2].references, BTreeSet::from([2]));
        assert_eq!(plan.steps[4].references, BTreeSet::from([2]));
    }

    #[test]
    fn named_bindings_are_references() {
        let plan = parse_plan(
            "q",
            "Retrieve & Reason: [time] = When?; Retrieve & Reason: [Person] = Who during [time]?; Retrieve & Reason: Which among [person]?",
        )
        .unwrap();
        assert_eq!(plan.steps.len(), 6);
        assert_eq!(plan.steps[2].references, BTreeSet::from([2]));
        assert_eq!(plan.steps[4].references, BTreeSet::from([4]));
        assert_eq!(plan.steps[5].references, BTreeSet::from([4, 5]));
    }

    #[test]
    fn errors_name_the_segment() {
        assert_eq!(
            parse_plan("q", "Reason: who? ; Retrieve: x [answer 2]"),
            Err(PlanError::ForwardReference { segment: 2, reference: 2 })
        );
        assert_eq!(
            parse_plan("q", "Retrieve: a; Lookup: b"),
            Err(PlanError::UnknownOperator {
                segment: 2,
                token: "Lookup".into()
            })
        );
        assert_eq!(parse_plan("q", " ; \n"), Err(PlanError::EmptyPlan));
        assert_eq!(
            parse_plan("q", "Rank: by time; Reason: who"),
            Err(PlanError::MissingRetrieve {
                segment: 1,
                operator: Operator::Rank
            })
        );
        assert_eq!(parse_plan("q", "Retrieve: a; Retrieve: b"), Err(PlanError::FinalStepNotReason { segment: 2 }));
        assert_eq!(parse_plan("q", "Retrieve:   "), Err(PlanError::EmptyObjective { segment: 1 }));
        assert!(matches!(parse_plan("q", "just text"), Err(PlanError::MalformedSegment { segment: 1, .. })));
        assert_eq!(
            parse_plan("q", "Retrieve: a [answer 0]"),
            Err(PlanError::ForwardReference { segment: 1, reference: 0 })
        );
    }

    #[test]
    fn operator_tokens_are_lenient() {
        let plan = parse_plan("q", "1. **Retrieve**: a; (2) RERANK: by time; reason: b").unwrap();
        let ops: Vec<Operator> = plan.steps.iter().map(|s| s.operator).collect();
        assert_eq!(ops, [Operator::Retrieve, Operator::Rank, Operator::Reason]);
        assert!(parse_plan("q", "Retrieve: Who visited B at 2010?").unwrap().is_single_retrieve());
    }

    #[test]
    fn serialize_worked_example() {
        let plan = parse_plan("q", WORKED).unwrap();
        assert_eq!(
            serialize_plan(&plan),
            "Retrieve: When did Segolene Royal investigate China?; Retrieve: Who investigated China after [answer 1]?; Rank: Rank these facts by time; Reason: Who is the first among [answer 2]?"
        );
    }

    fn arb_segment(pos: usize) -> impl Strategy<Value = String> {
        let op = prop_oneof![Just("Retrieve"), Just("Rank"), Just("Reason"), Just("Retrieve & Reason")];
        let reference = if pos > 1 {
            prop::option::of(1..pos).boxed()
        } else {
            Just(None).boxed()
        };
        (op, "[a-z]{1,8}( [a-z]{1,8}){0,3}", reference, any::<bool>()).prop_map(move |(op, words, r, bind)| {
            let suffix = r.map(|j| format!(" after [answer {j}]")).unwrap_or_default();
            let binding = if bind && op != "Rank" { format!("[v{pos}] = ") } else { String::new() };
            format!("{op}: {binding}{words}{suffix}?")
        })
    }

    fn arb_plan_text() -> impl Strategy<Value = String> {
        (1usize..7).prop_flat_map(|n| {
            let segs: Vec<_> = (1..=n).map(arb_segment).collect();
            segs.prop_map(|mut v| {
                v.insert(0, "Retrieve: start".to_string());
                v.push("Reason: finish [answer 1]".to_string());
                v.join("; ")
            })
        })
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(text in arb_plan_text()) {
            let plan = parse_plan("q", &text).unwrap();
            let wire = serialize_plan(&plan);
            prop_assert_eq!(parse_plan("q", &wire).unwrap(), plan);
        }
    }
}
