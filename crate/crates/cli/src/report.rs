use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use pixelbench_core::harness::{compare_runs, ComparisonTable, overhead_rows, timing_records, ModalityMode, PromptStyle, RunReport, ScoreSheet};
use pixelbench_core::metrics::TimingRecord;
use pixelbench_core::Error;

use crate::{OutArg, Outcome};

#[derive(Args)]
pub struct ReportArgs {
    /// Run reports, or directories searched for `*.report.json`.
    reports: Vec<PathBuf>,
    /// JSON array of pre-computed score sheets to compare instead of, or in
    /// addition to, run reports.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// JSON array of `{subset, text, peap, peap_fast}` timing totals in seconds.
    #[arg(long)]
    timings: Option<PathBuf>,
    /// Style whose text, PEAP and PEAP-Fast runs feed the overhead table.
    #[arg(long, default_value = "direct")]
    timing_style: PromptStyle,
    #[command(flatten)]
    out: OutArg,
}

fn collect(paths: &[PathBuf]) -> anyhow::Result<Vec<RunReport>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.to_string_lossy().ends_with(".report.json"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    files
        .iter()
        .map(|f| RunReport::read(f).with_context(|| format!("reading {}", f.display())))
        .collect()
}

pub fn run(args: ReportArgs) -> anyhow::Result<Outcome> {
    let reports = collect(&args.reports)?;
    let mut sheets: Vec<ScoreSheet> = reports.iter().map(ScoreSheet::from_report).collect();
    if let Some(p) = &args.scores {
        sheets.extend(serde_json::from_slice::<Vec<ScoreSheet>>(&fs::read(p)?)?);
    }
    let mut timings: Vec<TimingRecord> = match &args.timings {
        Some(p) => serde_json::from_slice(&fs::read(p)?)?,
        None => Vec::new(),
    };
    let has = |m| reports.iter().any(|r| r.mode == m && r.style == args.timing_style);
    if has(ModalityMode::Text) && has(ModalityMode::Peap) && has(ModalityMode::PeapFast) {
        timings.extend(timing_records(&reports, args.timing_style)?);
    }
    if sheets.is_empty() && timings.is_empty() {
        return Err(Error::Config("nothing to report: pass run reports, --scores or --timings".into()).into());
    }
    let table = if sheets.is_empty() {
        ComparisonTable::default()
    } else {
        compare_runs(&sheets)?
    }
    .with_overheads(overhead_rows(&timings)?);
    let dir = &args.out.out;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("comparison.csv"), table.to_csv())?;
    fs::write(dir.join("comparison.md"), table.to_markdown())?;
    fs::write(dir.join("comparison.json"), serde_json::to_string_pretty(&table)? + "\n")?;
    print!("{}", table.to_markdown());
    Ok(Outcome::Ok)
}
