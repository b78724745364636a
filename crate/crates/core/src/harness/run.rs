use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::client::{ModelClient, Usage};
use super::dataset::{Dataset, Example};
use super::extract::{extract_answer, Rule, EXTRACTION_RULES_VERSION};
use super::prompt::{build_prompt, transfer_modality, ModalityMode, PromptStyle, RenderConfig};
use super::task::TaskRegistry;
use crate::error::{Error, Result};
use crate::metrics::{overhead_pct, Sandbox, SandboxConfig};
use crate::render::{sha256_hex, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimingMode {
    /// Rendering, pruning and request time measured on the wall clock.
    #[default]
    Wall,
    /// Latency reported by the client; reproducible with the mock endpoint.
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub render: RenderConfig,
    pub tasks: TaskRegistry,
    /// Maximum requests in flight.
    pub concurrency: usize,
    pub timing: TimingMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    pub sandbox: SandboxConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            render: RenderConfig::default(),
            tasks: TaskRegistry::default(),
            concurrency: 4,
            timing: TimingMode::Wall,
            max_tokens: None,
            sandbox: SandboxConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.render.validate()?;
        self.tasks.validate()?;
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be at least 1".into()));
        }
        Ok(())
    }

    /// Stable name for a (dataset, mode, style, model, config) combination.
    pub fn run_id(&self, dataset: &Dataset, mode: ModalityMode, style: PromptStyle, model: &str) -> String {
        let cfg = serde_json::to_string(self).expect("config serializes");
        let key = format!("{}|{mode}|{style}|{model}|{EXTRACTION_RULES_VERSION}|{cfg}", dataset.id);
        format!("{mode}-{style}-{}", &sha256_hex(key.as_bytes())[..12])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Scored,
    /// The example cannot be shown in this mode.
    Skipped,
    /// Rendering or transport failed; no score.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchCounts {
    pub total: usize,
    pub retained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub task: String,
    pub status: RecordStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extracted: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<Rule>,
    /// Set when no extraction rule fired; such records score 0.
    pub no_answer: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub latency_seconds: f64,
    pub retries: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assets: Vec<Provenance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patches: Option<PatchCounts>,
}

impl Record {
    fn bare(ex: &Example, status: RecordStatus) -> Self {
        Self {
            id: ex.id.clone(),
            task: ex.task.clone(),
            status,
            response: None,
            extracted: None,
            rule: None,
            no_answer: false,
            score: None,
            latency_seconds: 0.0,
            retries: 0,
            usage: None,
            error: None,
            assets: Vec::new(),
            patches: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAggregate {
    pub metric: String,
    pub n_scored: usize,
    pub score: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub n_examples: usize,
    pub n_scored: usize,
    pub n_skipped: usize,
    pub n_failed: usize,
    pub n_no_answer: usize,
    /// Mean score over scored records.
    pub accuracy: f64,
    /// Sum of record latencies.
    pub total_seconds: f64,
    pub per_task: BTreeMap<String, TaskAggregate>,
    /// Time overhead against the paired text run, over shared scored ids.
    pub overhead_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub dataset: String,
    pub mode: ModalityMode,
    pub style: PromptStyle,
    pub model_id: String,
    pub extraction_rules: String,
    pub timing: TimingMode,
    pub records: Vec<Record>,
    pub aggregates: Aggregates,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn aggregate(records: &[Record], tasks: &TaskRegistry, examples: &[Example]) -> Aggregates {
    let count = |s| records.iter().filter(|r| r.status == s).count();
    let scored = || records.iter().filter(|r| r.status == RecordStatus::Scored);
    let by_id: HashMap<&str, &Example> = examples.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut per_task = BTreeMap::new();
    for r in records {
        let metric = by_id
            .get(r.id.as_str())
            .map(|e| tasks.spec_for(e).metric.name().to_string())
            .unwrap_or_default();
        per_task.entry(r.task.clone()).or_insert_with(|| TaskAggregate {
            metric,
            n_scored: 0,
            score: 0.0,
            total_seconds: 0.0,
        });
    }
    for (task, agg) in per_task.iter_mut() {
        let rs: Vec<&Record> = scored().filter(|r| &r.task == task).collect();
        agg.n_scored = rs.len();
        agg.score = mean(rs.iter().filter_map(|r| r.score));
        agg.total_seconds = records.iter().filter(|r| &r.task == task).map(|r| r.latency_seconds).sum();
    }
    Aggregates {
        n_examples: records.len(),
        n_scored: count(RecordStatus::Scored),
        n_skipped: count(RecordStatus::Skipped),
        n_failed: count(RecordStatus::Failed),
        n_no_answer: records.iter().filter(|r| r.no_answer).count(),
        accuracy: mean(scored().filter_map(|r| r.score)),
        total_seconds: records.iter().map(|r| r.latency_seconds).sum(),
        per_task,
        overhead_pct: None,
    }
}

impl RunReport {
    pub fn report_path(dir: &Path, run_id: &str) -> PathBuf {
        dir.join(format!("{run_id}.report.json"))
    }

    pub fn records_path(dir: &Path, run_id: &str) -> PathBuf {
        dir.join(format!("{run_id}.records.jsonl"))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = Self::report_path(dir, &self.run_id);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    /// Sets `overhead_pct` against a text run over the ids scored in both.
    pub fn attach_overhead(&mut self, text: &RunReport) -> Result<()> {
        if text.mode != ModalityMode::Text || text.dataset != self.dataset || text.model_id != self.model_id {
            return Err(Error::MismatchedRuns(format!(
                "{} is not a text run over the same dataset and model as {}",
                text.run_id, self.run_id
            )));
        }
        let base: HashMap<&str, f64> = text
            .records
            .iter()
            .filter(|r| r.status == RecordStatus::Scored)
            .map(|r| (r.id.as_str(), r.latency_seconds))
            .collect();
        let (mut t_text, mut t_self) = (0.0, 0.0);
        for r in self.records.iter().filter(|r| r.status == RecordStatus::Scored) {
            if let Some(t) = base.get(r.id.as_str()) {
                t_text += t;
                t_self += r.latency_seconds;
            }
        }
        self.aggregates.overhead_pct = Some(overhead_pct(t_text, t_self)?);
        Ok(())
    }
}

fn evaluate(
    ex: &Example,
    mode: ModalityMode,
    style: PromptStyle,
    client: &dyn ModelClient,
    cfg: &EvalConfig,
    sandbox: &Sandbox,
) -> Result<Record> {
    let task = cfg.tasks.spec_for(ex);
    let started = Instant::now();
    let assets = match transfer_modality(ex, &task, mode, &cfg.render) {
        Ok(a) => a,
        Err(e @ Error::IncompatibleMode { .. }) => {
            return Ok(Record {
                error: Some(e.to_string()),
                ..Record::bare(ex, RecordStatus::Skipped)
            })
        }
        Err(e @ (Error::Config(_) | Error::InvalidSpec(_))) => return Err(e),
        Err(e) => {
            return Ok(Record {
                error: Some(e.to_string()),
                ..Record::bare(ex, RecordStatus::Failed)
            })
        }
    };
    let mut record = Record::bare(ex, RecordStatus::Scored);
    record.assets = assets.provenance();
    record.patches = assets.patch_counts().map(|(total, retained)| PatchCounts { total, retained });
    let payload = build_prompt(ex, &assets, style, cfg.max_tokens);
    let response = match client.complete(&payload) {
        Ok(r) => r,
        Err(e @ Error::Auth(_)) => return Err(e),
        Err(e) => {
            record.status = RecordStatus::Failed;
            record.error = Some(e.to_string());
            return Ok(record);
        }
    };
    let wall = started.elapsed().as_secs_f64();
    record.latency_seconds = match cfg.timing {
        TimingMode::Wall => wall,
        TimingMode::Simulated => response.latency_seconds,
    };
    record.retries = response.retries;
    record.usage = response.usage;
    match extract_answer(&response.text, task.kind, ex.choices.as_deref()) {
        Ok(x) => {
            record.score = Some(task.score(ex, &x.answer, Some(sandbox))?);
            record.extracted = Some(x.answer);
            record.rule = Some(x.rule);
        }
        Err(Error::NoAnswerFound) => {
            record.no_answer = true;
            record.score = Some(0.0);
        }
        Err(e) => return Err(e),
    }
    record.response = Some(response.text);
    Ok(record)
}

/// Reads finished records, dropping a torn trailing line if present.
fn load_records(path: &Path) -> Result<Vec<Record>> {
    let Ok(bytes) = fs::read(path) else { return Ok(Vec::new()) };
    let mut out = Vec::new();
    let mut good = 0;
    for chunk in bytes.split_inclusive(|&b| b == b'\n') {
        if chunk.last() != Some(&b'\n') {
            break;
        }
        match serde_json::from_slice::<Record>(chunk) {
            Ok(r) => out.push(r),
            Err(_) => break,
        }
        good += chunk.len();
    }
    if good < bytes.len() {
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(good as u64)?;
    }
    Ok(out)
}

/// Evaluates every example once in `mode` and `style`, appending each record
/// to `<run_id>.records.jsonl` as soon as it completes. Ids already present
/// there are not re-queried. Writes `<run_id>.report.json` at the end.
pub fn run_eval(
    dataset: &Dataset,
    mode: ModalityMode,
    style: PromptStyle,
    client: &dyn ModelClient,
    cfg: &EvalConfig,
    out_dir: &Path,
) -> Result<RunReport> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let run_id = cfg.run_id(dataset, mode, style, client.model_id());
    let records_path = RunReport::records_path(out_dir, &run_id);
    let mut done: HashMap<String, Record> = load_records(&records_path)?
        .into_iter()
        .map(|r| (r.id.clone(), r))
        .collect();
    let pending: Vec<&Example> = dataset.examples.iter().filter(|e| !done.contains_key(&e.id)).collect();
    let sandbox = Sandbox::new(cfg.sandbox.clone());
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Result<Record>>();
    let workers = cfg.concurrency.min(pending.len()).max(1);
    let mut writer = BufWriter::new(OpenOptions::new().create(true).append(true).open(&records_path)?);
    let mut fatal = None;
    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending, sandbox) = (&next, &pending, &sandbox);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(ex) = pending.get(i) else { break };
                let out = evaluate(ex, mode, style, client, cfg, sandbox);
                let stop = out.is_err();
                if tx.send(out).is_err() || stop {
                    next.store(pending.len(), Ordering::SeqCst);
                    break;
                }
            });
        }
        drop(tx);
        for out in rx {
            match out {
                Ok(rec) => {
                    serde_json::to_writer(&mut writer, &rec)?;
                    writer.write_all(b"\n")?;
                    writer.flush()?;
                    done.insert(rec.id.clone(), rec);
                }
                Err(e) => {
                    if fatal.is_none() {
                        fatal = Some(e);
                    }
                }
            }
        }
        Ok(())
    })?;
    if let Some(e) = fatal {
        return Err(e);
    }
    let records: Vec<Record> = dataset
        .examples
        .iter()
        .filter_map(|e| done.remove(&e.id))
        .collect();
    let report = RunReport {
        aggregates: aggregate(&records, &cfg.tasks, &dataset.examples),
        run_id,
        dataset: dataset.id.clone(),
        mode,
        style,
        model_id: client.model_id().to_string(),
        extraction_rules: EXTRACTION_RULES_VERSION.to_string(),
        timing: cfg.timing,
        records,
    };
    report.write(out_dir)?;
    Ok(report)
}

/// Runs every mode for one style and attaches overheads against the text run.
pub fn run_modes(
    dataset: &Dataset,
    modes: &[ModalityMode],
    style: PromptStyle,
    client: &dyn ModelClient,
    cfg: &EvalConfig,
    out_dir: &Path,
) -> Result<Vec<RunReport>> {
    let mut reports = modes
        .iter()
        .map(|&m| run_eval(dataset, m, style, client, cfg, out_dir))
        .collect::<Result<Vec<_>>>()?;
    if let Some(text) = reports.iter().find(|r| r.mode == ModalityMode::Text).cloned() {
        for r in reports.iter_mut().filter(|r| r.mode != ModalityMode::Text) {
            r.attach_overhead(&text)?;
            r.write(out_dir)?;
        }
    }
    Ok(reports)
}
