use std::sync::LazyLock;

use regex::Regex;

use super::task::TaskKind;
use crate::error::{Error, Result};

/// Bumped whenever a rule changes so stored scores stay auditable.
pub const EXTRACTION_RULES_VERSION: &str = "v1";

static ANSWER_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\banswer\s*:\s*(.*)$").unwrap());
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d[\d,]*(?:\.\d+)?").unwrap());
static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```[A-Za-z0-9_+-]*[ \t]*\n(.*?)```").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    AnswerLine,
    ChoiceLabel,
    LastNumber,
    FencedCode,
    WholeResponse,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub answer: String,
    pub rule: Rule,
}

fn strip_wrapping(s: &str) -> &str {
    let mut s = s.trim();
    loop {
        let before = s;
        s = s.trim_end_matches(['.', ',', ';', '!']).trim();
        for (open, close) in [('(', ')'), ('[', ']'), ('{', '}'), ('"', '"'), ('\'', '\''), ('*', '*'), ('`', '`')] {
            if s.len() >= 2 && s.starts_with(open) && s.ends_with(close) {
                s = s[1..s.len() - 1].trim();
            }
        }
        if s == before {
            return s;
        }
    }
}

fn label_core(s: &str) -> String {
    strip_wrapping(s).to_lowercase()
}

/// End offset of the last whole-word occurrence of `label` in `hay`
/// (both already lowercased).
fn last_word_match(hay: &str, label: &str) -> Option<usize> {
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    hay.match_indices(label)
        .filter(|(i, m)| {
            let before = hay[..*i].chars().next_back();
            let after = hay[i + m.len()..].chars().next();
            !before.is_some_and(is_word) && !after.is_some_and(is_word)
        })
        .map(|(i, m)| i + m.len())
        .last()
}

fn last_choice(text: &str, choices: &[String]) -> Option<String> {
    let hay = text.to_lowercase();
    choices
        .iter()
        .map(|c| label_core(c))
        .filter(|c| !c.is_empty())
        .filter_map(|c| last_word_match(&hay, &c).map(|end| (end, c)))
        .max_by_key(|(end, c)| (*end, c.len()))
        .map(|(_, c)| c)
}

fn last_number(text: &str) -> Option<String> {
    NUMBER.find_iter(text).last().map(|m| m.as_str().replace(',', ""))
}

fn last_fence(text: &str) -> Option<String> {
    FENCE
        .captures_iter(text)
        .last()
        .map(|c| c[1].trim_end().to_string())
        .filter(|s| !s.trim().is_empty())
}

/// Applies the rule chain and returns the first rule that fires:
/// (1) the last `Answer:` line, (2) the last choice label for
/// classification, (3) the last number for math, (4) the last fenced block
/// for code, (5) the whole response for open and code tasks. Answers are
/// lowercased except for code.
pub fn extract_answer(response: &str, kind: TaskKind, choices: Option<&[String]>) -> Result<Extraction> {
    let fire = |answer: String, rule| Ok(Extraction { answer, rule });
    let answer_line = response
        .lines()
        .rev()
        .find_map(|l| ANSWER_LINE.captures(l).map(|c| c[1].to_string()))
        .map(|s| strip_wrapping(&s).to_string())
        .filter(|s| !s.is_empty());
    if let Some(line) = answer_line {
        if kind == TaskKind::Code {
            return fire(line, Rule::AnswerLine);
        }
        let lowered = line.to_lowercase();
        // "(C) Paris" keeps only the label when it leads the line.
        if let (TaskKind::Classification, Some(ch)) = (kind, choices) {
            let first = lowered.split_whitespace().next().map(label_core).unwrap_or_default();
            if ch.iter().any(|c| label_core(c) == first) {
                return fire(first, Rule::AnswerLine);
            }
        }
        if kind == TaskKind::Math {
            if let Some(n) = last_number(&lowered) {
                return fire(n, Rule::AnswerLine);
            }
        }
        return fire(lowered, Rule::AnswerLine);
    }
    match kind {
        TaskKind::Classification => {
            if let Some(c) = choices.and_then(|ch| last_choice(response, ch)) {
                return fire(c, Rule::ChoiceLabel);
            }
        }
        TaskKind::Math => {
            if let Some(n) = last_number(response) {
                return fire(n, Rule::LastNumber);
            }
        }
        TaskKind::Code => {
            if let Some(code) = last_fence(response) {
                return fire(code, Rule::FencedCode);
            }
            if !response.trim().is_empty() {
                return fire(response.trim().to_string(), Rule::WholeResponse);
            }
        }
        TaskKind::Open => {
            let trimmed = strip_wrapping(response);
            if !trimmed.is_empty() {
                return fire(trimmed.to_lowercase(), Rule::WholeResponse);
            }
        }
    }
    Err(Error::NoAnswerFound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn ans(r: &str, kind: TaskKind, choices: Option<&[String]>) -> String {
        extract_answer(r, kind, choices).unwrap().answer
    }

    #[test]
    fn answer_line_cases() {
        let tf = labels(&["True", "False"]);
        assert_eq!(ans("The passage says so.\nAnswer: True", TaskKind::Classification, Some(&tf)), "true");
        assert_eq!(ans("The result is 18. Answer: 18", TaskKind::Math, None), "18");
        assert_eq!(ans("Answer: 1,234 apples.", TaskKind::Math, None), "1234");
        assert_eq!(ans("answer: **Paris**.", TaskKind::Open, None), "paris");
    }

    #[test]
    fn cot_rambling_with_labelled_choice() {
        let abcd = labels(&["A", "B", "C", "D"]);
        let transcript = "Let's think step by step.\nOption A is wrong because the answer: is not a color.\n\
                          B fails too. Between C and D, D is a trap.\nAnswer: (C)";
        let e = extract_answer(transcript, TaskKind::Classification, Some(&abcd)).unwrap();
        assert_eq!(e.answer, "c");
        assert_eq!(e.rule, Rule::AnswerLine);
        assert_eq!(ans("Answer: (B) the second one", TaskKind::Classification, Some(&abcd)), "b");
    }

    #[test]
    fn fallback_rules_in_order() {
        let labels3 = labels(&["entailment", "contradiction", "neutral"]);
        let e = extract_answer("I lean to neutral, not contradiction.", TaskKind::Classification, Some(&labels3)).unwrap();
        assert_eq!((e.answer.as_str(), e.rule), ("contradiction", Rule::ChoiceLabel));
        let e = extract_answer("First 3, then 4.5 more: 7.5", TaskKind::Math, None).unwrap();
        assert_eq!((e.answer.as_str(), e.rule), ("7.5", Rule::LastNumber));
        let e = extract_answer("Here:\n```python\ndef f():\n    return 1\n```\nDone", TaskKind::Code, None).unwrap();
        assert_eq!((e.answer.as_str(), e.rule), ("def f():\n    return 1", Rule::FencedCode));
        let e = extract_answer("  Paris. ", TaskKind::Open, None).unwrap();
        assert_eq!((e.answer.as_str(), e.rule), ("paris", Rule::WholeResponse));
    }

    #[test]
    fn whole_word_labels_only() {
        let tf = labels(&["True", "False"]);
        assert!(matches!(
            extract_answer("Untrue statements abound", TaskKind::Classification, Some(&tf)),
            Err(Error::NoAnswerFound)
        ));
        assert!(matches!(extract_answer("no digits", TaskKind::Math, None), Err(Error::NoAnswerFound)));
        assert!(matches!(extract_answer("   ", TaskKind::Open, None), Err(Error::NoAnswerFound)));
        assert!(matches!(extract_answer("Answer:", TaskKind::Open, None), Ok(Extraction { rule: Rule::WholeResponse, .. })));
    }
}
