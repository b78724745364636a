use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::prompt::{ModalityMode, PromptStyle};
use super::run::{RecordStatus, RunReport};
use crate::error::{Error, Result};
use crate::metrics::TimingRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task: String,
    pub score: f64,
}

/// Percentage scores of one (mode, style) run, per task and overall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSheet {
    pub dataset: String,
    pub model_id: String,
    pub mode: ModalityMode,
    pub style: PromptStyle,
    pub tasks: Vec<TaskScore>,
    pub overall: f64,
}

impl ScoreSheet {
    /// `overall` defaults to the macro mean of the task scores.
    pub fn new(mode: ModalityMode, style: PromptStyle, tasks: &[(&str, f64)], overall: Option<f64>) -> Self {
        let tasks: Vec<TaskScore> = tasks
            .iter()
            .map(|&(t, s)| TaskScore { task: t.to_string(), score: s })
            .collect();
        let overall = overall.unwrap_or_else(|| macro_mean(&tasks));
        Self {
            dataset: String::new(),
            model_id: String::new(),
            mode,
            style,
            tasks,
            overall,
        }
    }

    /// Task order follows first appearance in the report; tasks with no
    /// scored record are left out.
    pub fn from_report(report: &RunReport) -> Self {
        let mut order: Vec<&str> = Vec::new();
        for r in report.records.iter().filter(|r| r.status == RecordStatus::Scored) {
            if !order.contains(&r.task.as_str()) {
                order.push(&r.task);
            }
        }
        let tasks: Vec<TaskScore> = order
            .into_iter()
            .map(|t| TaskScore {
                task: t.to_string(),
                score: 100.0 * report.aggregates.per_task.get(t).map_or(0.0, |a| a.score),
            })
            .collect();
        Self {
            dataset: report.dataset.clone(),
            model_id: report.model_id.clone(),
            mode: report.mode,
            style: report.style,
            overall: macro_mean(&tasks),
            tasks,
        }
    }

    pub fn score(&self, task: &str) -> Option<f64> {
        self.tasks.iter().find(|t| t.task == task).map(|t| t.score)
    }

    pub fn label(&self) -> String {
        format!("{} {}", mode_label(self.mode), style_label(self.style))
    }
}

fn macro_mean(tasks: &[TaskScore]) -> f64 {
    if tasks.is_empty() {
        0.0
    } else {
        tasks.iter().map(|t| t.score).sum::<f64>() / tasks.len() as f64
    }
}

fn mode_label(m: ModalityMode) -> &'static str {
    match m {
        ModalityMode::Text => "Text",
        ModalityMode::Peap => "PEAP",
        ModalityMode::Semi => "Semi",
        ModalityMode::PeapFast => "PEAP-Fast",
    }
}

fn style_label(s: PromptStyle) -> &'static str {
    match s {
        PromptStyle::Direct => "Direct",
        PromptStyle::CoT => "CoT",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub label: String,
    /// `None` where either side has no score for the task.
    pub per_task: Vec<Option<f64>>,
    pub overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub timing: TimingRecord,
    pub peap_pct: f64,
    pub peap_fast_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub tasks: Vec<String>,
    pub sheets: Vec<ScoreSheet>,
    pub deltas: Vec<DeltaRow>,
    pub overheads: Vec<OverheadRow>,
}

fn delta(label: String, tasks: &[String], a: &ScoreSheet, b: &ScoreSheet) -> DeltaRow {
    DeltaRow {
        label,
        per_task: tasks.iter().map(|t| Some(a.score(t)? - b.score(t)?)).collect(),
        overall: a.overall - b.overall,
    }
}

/// Pairwise deltas: PEAP - Text and PEAP-Fast - PEAP per style, and
/// CoT - Direct per mode. Sheets must share dataset and model; rows are
/// ordered by mode, then style.
pub fn compare_runs(sheets: &[ScoreSheet]) -> Result<ComparisonTable> {
    let first = sheets.first().ok_or_else(|| Error::MismatchedRuns("no runs given".into()))?;
    let mut tasks: Vec<String> = Vec::new();
    for s in sheets {
        if s.dataset != first.dataset || s.model_id != first.model_id {
            return Err(Error::MismatchedRuns(format!(
                "{} uses dataset/model {}/{}, expected {}/{}",
                s.label(),
                s.dataset,
                s.model_id,
                first.dataset,
                first.model_id
            )));
        }
        if sheets.iter().filter(|o| o.mode == s.mode && o.style == s.style).count() > 1 {
            return Err(Error::MismatchedRuns(format!("{} appears more than once", s.label())));
        }
        for t in &s.tasks {
            if !tasks.contains(&t.task) {
                tasks.push(t.task.clone());
            }
        }
    }
    let mut sorted = sheets.to_vec();
    sorted.sort_by_key(|s| (s.mode, s.style));
    let find = |m, st| sorted.iter().find(|s| s.mode == m && s.style == st);
    let mut deltas = Vec::new();
    for style in PromptStyle::ALL {
        if let (Some(p), Some(t)) = (find(ModalityMode::Peap, style), find(ModalityMode::Text, style)) {
            deltas.push(delta(format!("PEAP - Text ({})", style_label(style)), &tasks, p, t));
        }
        if let (Some(f), Some(p)) = (find(ModalityMode::PeapFast, style), find(ModalityMode::Peap, style)) {
            deltas.push(delta(format!("PEAP-Fast - PEAP ({})", style_label(style)), &tasks, f, p));
        }
    }
    for mode in ModalityMode::ALL {
        if let (Some(c), Some(d)) = (find(mode, PromptStyle::CoT), find(mode, PromptStyle::Direct)) {
            deltas.push(delta(format!("{} CoT - Direct", mode_label(mode)), &tasks, c, d));
        }
    }
    Ok(ComparisonTable {
        tasks,
        sheets: sorted,
        deltas,
        overheads: Vec::new(),
    })
}

/// Per-task timing totals for one style, over ids scored in all three runs.
pub fn timing_records(reports: &[RunReport], style: PromptStyle) -> Result<Vec<TimingRecord>> {
    let pick = |m| {
        reports
            .iter()
            .find(|r| r.mode == m && r.style == style)
            .ok_or_else(|| Error::MismatchedRuns(format!("no {m} {style} run for the overhead table")))
    };
    let (text, peap, fast) = (pick(ModalityMode::Text)?, pick(ModalityMode::Peap)?, pick(ModalityMode::PeapFast)?);
    if [peap, fast].iter().any(|r| r.dataset != text.dataset || r.model_id != text.model_id) {
        return Err(Error::MismatchedRuns("timing runs differ in dataset or model".into()));
    }
    let scored = |r: &RunReport| -> std::collections::HashMap<String, (String, f64)> {
        r.records
            .iter()
            .filter(|x| x.status == RecordStatus::Scored)
            .map(|x| (x.id.clone(), (x.task.clone(), x.latency_seconds)))
            .collect()
    };
    let (p, f) = (scored(peap), scored(fast));
    let mut out: Vec<TimingRecord> = Vec::new();
    for r in text.records.iter().filter(|x| x.status == RecordStatus::Scored) {
        let (Some((_, tp)), Some((_, tf))) = (p.get(&r.id), f.get(&r.id)) else { continue };
        let row = match out.iter_mut().find(|t| t.subset == r.task) {
            Some(row) => row,
            None => {
                out.push(TimingRecord {
                    subset: r.task.clone(),
                    text: 0.0,
                    peap: 0.0,
                    peap_fast: 0.0,
                });
                out.last_mut().expect("just pushed")
            }
        };
        row.text += r.latency_seconds;
        row.peap += tp;
        row.peap_fast += tf;
    }
    Ok(out)
}

pub fn overhead_rows(timings: &[TimingRecord]) -> Result<Vec<OverheadRow>> {
    let mut rows = Vec::with_capacity(timings.len() + 1);
    for t in timings {
        let (peap_pct, peap_fast_pct) = t.overheads()?;
        rows.push(OverheadRow { timing: t.clone(), peap_pct, peap_fast_pct });
    }
    if timings.len() > 1 {
        let total = TimingRecord {
            subset: "Total".into(),
            text: timings.iter().map(|t| t.text).sum(),
            peap: timings.iter().map(|t| t.peap).sum(),
            peap_fast: timings.iter().map(|t| t.peap_fast).sum(),
        };
        let (peap_pct, peap_fast_pct) = total.overheads()?;
        rows.push(OverheadRow { timing: total, peap_pct, peap_fast_pct });
    }
    Ok(rows)
}

fn cell(v: Option<f64>, signed: bool) -> String {
    match (v, signed) {
        (Some(x), false) => format!("{x:.2}"),
        (Some(x), true) => format!("{x:+.2}"),
        (None, _) => "-".into(),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ComparisonTable {
    pub fn with_overheads(mut self, rows: Vec<OverheadRow>) -> Self {
        self.overheads = rows;
        self
    }

    pub fn delta(&self, label: &str) -> Option<&DeltaRow> {
        self.deltas.iter().find(|d| d.label == label)
    }

    /// Scores and deltas with two decimals; overheads follow after a blank line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.sheets.is_empty() {
            self.overheads_csv(&mut out);
            return out;
        }
        let header: Vec<String> = std::iter::once("row".to_string())
            .chain(self.tasks.iter().map(|t| csv_field(t)))
            .chain(std::iter::once("overall".to_string()))
            .collect();
        writeln!(out, "{}", header.join(",")).unwrap();
        for s in &self.sheets {
            let cells: Vec<String> = self.tasks.iter().map(|t| cell(s.score(t), false)).collect();
            writeln!(out, "{},{},{:.2}", csv_field(&s.label()), cells.join(","), s.overall).unwrap();
        }
        for d in &self.deltas {
            let cells: Vec<String> = d.per_task.iter().map(|&x| cell(x, false)).collect();
            writeln!(out, "{},{},{:.2}", csv_field(&d.label), cells.join(","), d.overall).unwrap();
        }
        if !self.overheads.is_empty() {
            out.push('\n');
            self.overheads_csv(&mut out);
        }
        out
    }

    fn overheads_csv(&self, out: &mut String) {
        if !self.overheads.is_empty() {
            writeln!(out, "subset,text_s,peap_s,peap_fast_s,peap_overhead_pct,peap_fast_overhead_pct").unwrap();
            for o in &self.overheads {
                let t = &o.timing;
                writeln!(
                    out,
                    "{},{:.2},{:.2},{:.2},{:.2},{:.2}",
                    csv_field(&t.subset),
                    t.text,
                    t.peap,
                    t.peap_fast,
                    o.peap_pct,
                    o.peap_fast_pct
                )
                .unwrap();
            }
        }
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        if self.sheets.is_empty() {
            self.overheads_markdown(&mut out);
            return out;
        }
        let cols = self.tasks.len() + 2;
        writeln!(out, "| | {} | Overall |", self.tasks.join(" | ")).unwrap();
        writeln!(out, "|{}", "---|".repeat(cols)).unwrap();
        for s in &self.sheets {
            let cells: Vec<String> = self.tasks.iter().map(|t| cell(s.score(t), false)).collect();
            writeln!(out, "| {} | {} | {:.2} |", s.label(), cells.join(" | "), s.overall).unwrap();
        }
        for d in &self.deltas {
            let cells: Vec<String> = d.per_task.iter().map(|&x| cell(x, true)).collect();
            writeln!(out, "| {} | {} | {:+.2} |", d.label, cells.join(" | "), d.overall).unwrap();
        }
        if !self.overheads.is_empty() {
            out.push('\n');
            self.overheads_markdown(&mut out);
        }
        out
    }

    fn overheads_markdown(&self, out: &mut String) {
        if !self.overheads.is_empty() {
            writeln!(out, "| Subset | Text (s) | PEAP (s) | PEAP-Fast (s) | PEAP overhead | PEAP-Fast overhead |").unwrap();
            writeln!(out, "|---|---|---|---|---|---|").unwrap();
            for o in &self.overheads {
                let t = &o.timing;
                writeln!(
                    out,
                    "| {} | {:.2} | {:.2} | {:.2} | {:.2}% | {:.2}% |",
                    t.subset, t.text, t.peap, t.peap_fast, o.peap_pct, o.peap_fast_pct
                )
                .unwrap();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TASKS: [&str; 3] = ["BoolQ", "CB", "COPA"];

    fn sheet(mode: ModalityMode, style: PromptStyle, scores: [f64; 3]) -> ScoreSheet {
        let t: Vec<(&str, f64)> = TASKS.iter().copied().zip(scores).collect();
        ScoreSheet::new(mode, style, &t, None)
    }

    #[test]
    fn identical_runs_have_zero_deltas() {
        let s: Vec<ScoreSheet> = ModalityMode::ALL
            .iter()
            .flat_map(|&m| PromptStyle::ALL.map(|st| sheet(m, st, [70.0, 50.0, 90.0])))
            .collect();
        let t = compare_runs(&s).unwrap();
        assert_eq!(t.deltas.len(), 2 * 2 + 4);
        for d in &t.deltas {
            assert_eq!(d.overall, 0.0);
            assert!(d.per_task.iter().all(|&x| x == Some(0.0)));
        }
    }

    #[test]
    fn delta_directions() {
        let s = vec![
            sheet(ModalityMode::Text, PromptStyle::Direct, [80.0, 60.0, 90.0]),
            sheet(ModalityMode::Peap, PromptStyle::Direct, [70.0, 40.0, 85.0]),
            sheet(ModalityMode::Peap, PromptStyle::CoT, [72.0, 50.0, 80.0]),
        ];
        let t = compare_runs(&s).unwrap();
        let d = t.delta("PEAP - Text (Direct)").unwrap();
        assert_eq!(d.per_task, vec![Some(-10.0), Some(-20.0), Some(-5.0)]);
        let c = t.delta("PEAP CoT - Direct").unwrap();
        assert_eq!(c.per_task, vec![Some(2.0), Some(10.0), Some(-5.0)]);
        assert!((c.overall - 7.0 / 3.0).abs() < 1e-12);
        assert!(t.to_markdown().contains("| PEAP CoT - Direct | +2.00 | +10.00 | -5.00 | +2.33 |"));
        assert!(t.to_csv().lines().next().unwrap() == "row,BoolQ,CB,COPA,overall");
    }

    #[test]
    fn mismatches_are_rejected() {
        let a = sheet(ModalityMode::Text, PromptStyle::Direct, [1.0, 2.0, 3.0]);
        let mut b = sheet(ModalityMode::Peap, PromptStyle::Direct, [1.0, 2.0, 3.0]);
        b.model_id = "other".into();
        assert!(matches!(compare_runs(&[a.clone(), b]), Err(Error::MismatchedRuns(_))));
        assert!(matches!(compare_runs(&[a.clone(), a.clone()]), Err(Error::MismatchedRuns(_))));
        assert!(matches!(compare_runs(&[]), Err(Error::MismatchedRuns(_))));
    }

    #[test]
    fn missing_tasks_leave_gaps() {
        let a = sheet(ModalityMode::Text, PromptStyle::Direct, [80.0, 60.0, 90.0]);
        let b = ScoreSheet::new(ModalityMode::Peap, PromptStyle::Direct, &[("CB", 70.0)], None);
        let t = compare_runs(&[b, a]).unwrap();
        assert_eq!(t.sheets[0].mode, ModalityMode::Text);
        assert_eq!(t.tasks, vec!["CB", "BoolQ", "COPA"]);
        assert_eq!(t.deltas[0].per_task, vec![Some(10.0), None, None]);
        assert!(t.to_markdown().contains("| PEAP Direct | 70.00 | - | - | 70.00 |"));
    }

    #[test]
    fn overhead_rows_and_total() {
        let rows = overhead_rows(&[
            TimingRecord { subset: "CB".into(), text: 8.0, peap: 22.0, peap_fast: 15.0 },
            TimingRecord { subset: "COPA".into(), text: 39.0, peap: 38.0, peap_fast: 40.0 },
        ])
        .unwrap();
        assert!((rows[0].peap_pct - 175.0).abs() < 1e-9);
        assert!((rows[0].peap_fast_pct - 87.5).abs() < 1e-9);
        assert!((rows[1].peap_pct + 2.564).abs() < 1e-3);
        assert_eq!(rows[2].timing.subset, "Total");
        assert!((rows[2].peap_pct - 100.0 * 13.0 / 47.0).abs() < 1e-9);
    }
}
