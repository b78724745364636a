use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use pixelbench_core::harness::{
    run_modes, Dataset, EndpointConfig, EvalConfig, HttpClient, MockBehavior, MockClient, ModalityMode, ModelClient,
    PromptStyle, RunReport,
};
use pixelbench_core::Error;
use serde::{Deserialize, Serialize};

use crate::Outcome;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Endpoint {
    Mock {
        #[serde(flatten)]
        behavior: MockBehavior,
    },
    Http(EndpointConfig),
}

/// Everything one `eval` invocation needs. Relative paths resolve against
/// the config file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub modes: Vec<ModalityMode>,
    #[serde(default = "default_styles")]
    pub styles: Vec<PromptStyle>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub endpoint: Endpoint,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_styles() -> Vec<PromptStyle> {
    vec![PromptStyle::Direct]
}

#[derive(Args)]
pub struct EvalArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Comma-separated modes: text, peap, semi, peap-fast.
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<ModalityMode>>,
    /// Comma-separated styles: direct, cot.
    #[arg(long, value_delimiter = ',')]
    styles: Option<Vec<PromptStyle>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    concurrency: Option<usize>,
    /// Validate the config, dataset and credential without sending requests.
    #[arg(long)]
    dry_run: bool,
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

pub fn load_config(args: &EvalArgs) -> anyhow::Result<(RunConfig, PathBuf)> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| config_err(format!("reading {}: {e}", args.config.display())))?;
    let mut cfg: RunConfig =
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", args.config.display())))?;
    let base = args.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    cfg.dataset = resolve(&base, &cfg.dataset);
    if let Some(d) = &args.dataset {
        cfg.dataset = d.clone();
    }
    if let Some(m) = &args.modes {
        cfg.modes = m.clone();
    }
    if let Some(s) = &args.styles {
        cfg.styles = s.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(k) = args.concurrency {
        cfg.eval.concurrency = k;
    }
    let out = match (&args.out, &cfg.out_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => resolve(&base, o),
        (None, None) => return Err(config_err("no output directory: pass --out or set out_dir")),
    };
    if cfg.modes.is_empty() || cfg.styles.is_empty() {
        return Err(config_err("modes and styles must be non-empty"));
    }
    if !cfg.dataset.is_file() {
        return Err(config_err(format!("dataset {} does not exist", cfg.dataset.display())));
    }
    cfg.eval.validate()?;
    Ok((cfg, out))
}

fn client(cfg: &RunConfig, dataset: &Dataset) -> anyhow::Result<Box<dyn ModelClient>> {
    Ok(match &cfg.endpoint {
        Endpoint::Mock { behavior } => Box::new(MockClient::new(*behavior, &dataset.examples, cfg.seed)),
        Endpoint::Http(e) => Box::new(HttpClient::new(e.clone())?),
    })
}

pub fn run(args: EvalArgs) -> anyhow::Result<Outcome> {
    let (cfg, out) = load_config(&args)?;
    let dataset = Dataset::load(&cfg.dataset, cfg.seed)?;
    let client = client(&cfg, &dataset)?;
    if args.dry_run {
        println!(
            "config ok: {} examples, {} modes x {} styles, model {}, output {}",
            dataset.len(),
            cfg.modes.len(),
            cfg.styles.len(),
            client.model_id(),
            out.display()
        );
        return Ok(Outcome::Ok);
    }
    let mut reports: Vec<RunReport> = Vec::new();
    for &style in &cfg.styles {
        let runs = run_modes(&dataset, &cfg.modes, style, client.as_ref(), &cfg.eval, &out)
            .with_context(|| format!("{style} runs"))?;
        reports.extend(runs);
    }
    let mut failed = 0;
    for r in &reports {
        let a = &r.aggregates;
        failed += a.n_failed;
        let overhead = a.overhead_pct.map(|o| format!(" overhead {o:.2}%")).unwrap_or_default();
        println!(
            "{} {} {}: accuracy {:.2}% over {} scored, {} skipped, {} failed, {:.2}s{}",
            r.run_id,
            r.mode,
            r.style,
            100.0 * a.accuracy,
            a.n_scored,
            a.n_skipped,
            a.n_failed,
            a.total_seconds,
            overhead
        );
    }
    if failed > 0 {
        return Ok(Outcome::Partial(format!("{failed} records failed; see the records files in {}", out.display())));
    }
    Ok(Outcome::Ok)
}
