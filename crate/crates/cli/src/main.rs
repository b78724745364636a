use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod bench;
mod eval;
mod heatmap;
mod render;
mod report;

/// Renders prompts to pixels, prunes blank patches and evaluates models
/// across text and image input modes.
#[derive(Parser)]
#[command(name = "pixelbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a string, text file or JSONL file to PNG canvases.
    Render(render::RenderArgs),
    /// Measure retained patches, attention cost and toy forward latency.
    PruneBench(bench::BenchArgs),
    /// Overlay last-layer attention of the toy model on a canvas.
    Heatmap(heatmap::HeatmapArgs),
    /// Run an evaluation from a JSON config.
    Eval(eval::EvalArgs),
    /// Compare run reports and emit score and overhead tables.
    Report(report::ReportArgs),
}

#[derive(Args, Clone)]
struct OutArg {
    /// Directory that receives every file the command writes.
    #[arg(long)]
    out: PathBuf,
}

/// Result of a command that ran to completion.
pub enum Outcome {
    Ok,
    /// Finished, but some items failed and were recorded as such.
    Partial(String),
}

const EXIT_CONFIG: u8 = 2;
const EXIT_TRANSPORT: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    use pixelbench_core::Error;
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Transport(_)) => EXIT_TRANSPORT,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Render(a) => render::run(a),
        Command::PruneBench(a) => bench::run(a),
        Command::Heatmap(a) => heatmap::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
