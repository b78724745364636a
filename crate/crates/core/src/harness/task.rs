use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::Example;
use crate::error::{Error, Result};
use crate::metrics::{exact_match, pass_at_1, rouge_l, Sandbox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Math,
    Code,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    ExactMatch,
    RougeL,
    /// References are assertion lines run after the extracted program.
    PassAt1,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::ExactMatch => "exact_match",
            Metric::RougeL => "rouge_l",
            Metric::PassAt1 => "pass@1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub metric: Metric,
    /// Wording override; `{input}` is replaced by the example input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, metric: Metric) -> Self {
        Self {
            kind,
            metric,
            template: None,
        }
    }

    /// Defaults by task name, falling back to the presence of choice labels.
    pub fn infer(ex: &Example) -> Self {
        let name = ex.task.to_ascii_lowercase();
        match name.as_str() {
            "gsm8k" | "math" | "svamp" | "asdiv" => Self::new(TaskKind::Math, Metric::ExactMatch),
            "humaneval" | "mbpp" => Self::new(TaskKind::Code, Metric::PassAt1),
            "xsum" | "cnn_dailymail" | "cnndm" => Self::new(TaskKind::Open, Metric::RougeL),
            _ if ex.choices.is_some() => Self::new(TaskKind::Classification, Metric::ExactMatch),
            _ => Self::new(TaskKind::Open, Metric::ExactMatch),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = &self.template {
            if t.matches("{input}").count() != 1 {
                return Err(Error::Config(format!(
                    "template must contain exactly one {{input}} placeholder: {t:?}"
                )));
            }
        }
        Ok(())
    }

    /// The task wording shared by every modality.
    pub fn wording(&self, ex: &Example) -> String {
        let input = ex.input.as_deref().unwrap_or("");
        match &self.template {
            Some(t) => t.replace("{input}", input),
            None => input.to_string(),
        }
    }

    /// Per-example score in [0, 1]: best match over references, or the
    /// sandboxed test result for code.
    pub fn score(&self, ex: &Example, answer: &str, sandbox: Option<&Sandbox>) -> Result<f64> {
        Ok(match self.metric {
            Metric::ExactMatch => ex
                .references
                .iter()
                .map(|r| exact_match(answer, r))
                .max()
                .unwrap_or(0) as f64,
            Metric::RougeL => ex
                .references
                .iter()
                .map(|r| rouge_l(answer, r))
                .fold(0.0, f64::max),
            Metric::PassAt1 => {
                let sandbox = sandbox.ok_or_else(|| Error::SandboxUnavailable("no sandbox configured".into()))?;
                pass_at_1(answer, &ex.references, sandbox)? as f64
            }
        })
    }
}

/// Task specs keyed by task name; unknown names are inferred per example.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskRegistry(pub BTreeMap<String, TaskSpec>);

impl TaskRegistry {
    pub fn spec_for(&self, ex: &Example) -> TaskSpec {
        self.0.get(&ex.task).cloned().unwrap_or_else(|| TaskSpec::infer(ex))
    }

    pub fn validate(&self) -> Result<()> {
        self.0.values().try_for_each(TaskSpec::validate)
    }
}
