use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use pixelbench_core::harness::example_seed;
use pixelbench_core::render::{
    apply_noise, encode_png, render_table, render_text, NoiseKind, NoiseSpec, PixelCanvas, RenderSpec, TableData,
};
use serde::Deserialize;
use serde_json::json;

use crate::{OutArg, Outcome};

#[derive(Args)]
pub struct RenderArgs {
    /// Literal text to render.
    #[arg(long, conflicts_with = "input")]
    text: Option<String>,
    /// A plain-text file, or a `.jsonl` file with `id` and `input` or `table` per line.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
    #[arg(long)]
    font_size: Option<f32>,
    #[arg(long)]
    padding: Option<u32>,
    #[arg(long)]
    width_min: Option<u32>,
    #[arg(long)]
    width_max: Option<u32>,
    /// 1 for gray, 3 for RGB.
    #[arg(long)]
    channels: Option<u8>,
    /// Draw font size and padding from the seed.
    #[arg(long)]
    sampled: bool,
    #[arg(long, default_value = "none")]
    noise: NoiseKind,
    #[arg(long, default_value_t = 8.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Deserialize)]
struct Item {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    input: Option<String>,
    #[serde(default)]
    table: Option<TableData>,
}

fn spec_for(args: &RenderArgs, seed: u64) -> RenderSpec {
    let mut spec = if args.sampled { RenderSpec::sampled(seed) } else { RenderSpec { seed, ..RenderSpec::default() } };
    if let Some(v) = args.font_size {
        spec.font_size = v;
    }
    if let Some(v) = args.padding {
        spec.padding = v;
    }
    if let Some(v) = args.width_min {
        spec.width_min = v;
    }
    if let Some(v) = args.width_max {
        spec.width_max = v;
    }
    if let Some(v) = args.channels {
        spec.channels = v;
    }
    spec
}

fn safe_name(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn emit(dir: &Path, name: &str, canvas: &PixelCanvas, spec: &RenderSpec) -> anyhow::Result<()> {
    fs::write(dir.join(format!("{name}.png")), encode_png(canvas))?;
    let sidecar = json!({
        "width": canvas.width,
        "height": canvas.height,
        "channels": canvas.channels,
        "spec": spec,
        "provenance": canvas.provenance,
    });
    fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(())
}

fn draw(args: &RenderArgs, seed: u64, text: Option<&str>, table: Option<&TableData>) -> anyhow::Result<(PixelCanvas, RenderSpec)> {
    let spec = spec_for(args, seed);
    let mut pages = Vec::new();
    if let Some(t) = text.filter(|t| !t.trim().is_empty()) {
        pages.push(render_text(t, &spec)?);
    }
    if let Some(t) = table {
        pages.push(render_table(t, &spec)?);
    }
    let canvas = match pages.len() {
        0 => bail!("item has neither text nor table"),
        1 => pages.pop().expect("one page"),
        _ => PixelCanvas::stack_vertical(&pages)?,
    };
    let canvas = apply_noise(&canvas, &NoiseSpec::new(args.noise, args.amplitude, seed));
    Ok((canvas, spec))
}

pub fn run(args: RenderArgs) -> anyhow::Result<Outcome> {
    let dir = &args.out.out;
    fs::create_dir_all(dir)?;
    match (&args.text, &args.input) {
        (Some(text), _) => {
            let (canvas, spec) = draw(&args, args.seed, Some(text), None)?;
            let name = format!("render-{}", &canvas.provenance.key()[..16]);
            emit(dir, &name, &canvas, &spec)?;
            println!("{}", dir.join(format!("{name}.png")).display());
        }
        (None, Some(path)) => {
            let body = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            if path.extension().is_some_and(|e| e == "jsonl") {
                let mut n = 0;
                for (i, line) in body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let item: Item = serde_json::from_str(line).map_err(|e| pixelbench_core::Error::SchemaError {
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                    let id = item.id.clone().unwrap_or_else(|| format!("line-{}", i + 1));
                    let (canvas, spec) = draw(&args, example_seed(args.seed, &id), item.input.as_deref(), item.table.as_ref())?;
                    emit(dir, &safe_name(&id), &canvas, &spec)?;
                    n += 1;
                }
                println!("rendered {n} canvases into {}", dir.display());
            } else {
                let (canvas, spec) = draw(&args, args.seed, Some(&body), None)?;
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("render");
                emit(dir, &safe_name(stem), &canvas, &spec)?;
                println!("{}", dir.join(format!("{}.png", safe_name(stem))).display());
            }
        }
        (None, None) => bail!(pixelbench_core::Error::Config("pass --text or --input".into())),
    }
    Ok(Outcome::Ok)
}
