use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, ValueEnum};
use pixelbench_core::patchgrid::{blank_mask, prune, prune_stats, tile, PatchGrid, PatchMask, PruneConfig};
use pixelbench_core::render::{decode_png, render_text, PixelCanvas, RenderSpec};
use pixelbench_core::toyvit::{count_cost, Capture, CostCounter, ToyViTConfig};
use pixelbench_core::ToyViT64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{OutArg, Outcome};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    Blank,
    Dense,
    Half,
    All,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Synthetic inputs to generate.
    #[arg(long, value_enum, conflicts_with = "images")]
    sweep: Option<Sweep>,
    /// Directory of PNG canvases.
    #[arg(long)]
    images: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
    #[arg(long, default_value_t = 10.0)]
    tau: f64,
    #[arg(long, default_value_t = 28)]
    patch_size: u32,
    /// Toy model width used for timing.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    /// Timed forward passes per input; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize)]
struct Row {
    name: String,
    rows: usize,
    cols: usize,
    total: usize,
    retained: usize,
    retained_ratio: f64,
    cost_ratio: f64,
    attention_flops_full: u64,
    attention_flops_pruned: u64,
    measured_attention_ratio: f64,
    forward_full_ms: f64,
    forward_pruned_ms: Option<f64>,
}

const DENSE_TEXT: &str = "Pixels carry the whole prompt: question, passage and options are drawn as glyphs \
and the model reads them through its vision encoder. Blank margins add patches but no content, so removing \
them shortens the sequence while the remaining patches keep their original positions. ";

fn synthetic(sweep: Sweep, seed: u64) -> anyhow::Result<Vec<(String, PixelCanvas)>> {
    let mut out = Vec::new();
    if matches!(sweep, Sweep::Blank | Sweep::All) {
        out.push(("blank-512x256".into(), PixelCanvas::uniform(512, 256, 1, 255)?));
        out.push(("blank-1024x1024".into(), PixelCanvas::uniform(1024, 1024, 1, 255)?));
    }
    if matches!(sweep, Sweep::Dense | Sweep::All) {
        let spec = RenderSpec {
            font_size: 15.0,
            padding: 5,
            width_min: 1024,
            ..RenderSpec::default()
        };
        out.push(("dense-text".into(), render_text(&DENSE_TEXT.repeat(14), &spec)?));
    }
    if matches!(sweep, Sweep::Half | Sweep::All) {
        out.push(("half-32x32".into(), half_grid(32, 32, 28, seed)?));
    }
    Ok(out)
}

/// A canvas of `rows x cols` patches in which a random half of the patches
/// hold noise and the rest are flat background.
pub fn half_grid(rows: u32, cols: u32, ps: u32, seed: u64) -> anyhow::Result<PixelCanvas> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (rows * cols) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut busy = vec![false; n];
    order[..n / 2].iter().for_each(|&i| busy[i] = true);
    let (w, h) = (cols * ps, rows * ps);
    let mut px = vec![255u8; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            if busy[((y / ps) * cols + x / ps) as usize] {
                px[(y * w + x) as usize] = rng.random_range(0..=255);
            }
        }
    }
    Ok(PixelCanvas::new(w, h, 1, px)?)
}

fn load_dir(dir: &PathBuf) -> anyhow::Result<Vec<(String, PixelCanvas)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string();
            Ok((name, decode_png(&fs::read(&p)?)?))
        })
        .collect()
}

fn time_forward(model: &ToyViT64, tokens: &pixelbench_core::Tokens64, repeats: usize) -> anyhow::Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        model.forward_with(tokens, None, Capture::None, None)?;
        best = best.min(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(best)
}

fn measure(name: String, grid: &PatchGrid, mask: &PatchMask, args: &BenchArgs) -> anyhow::Result<Row> {
    let stats = prune_stats(mask);
    let cfg = ToyViTConfig {
        embed_dim: args.dim,
        heads: args.heads,
        layers: args.layers,
        patch_size: args.patch_size,
        channels: grid.channels,
        max_rows: grid.rows.max(64),
        max_cols: grid.cols.max(64),
        seed: args.seed,
        ..ToyViTConfig::default()
    };
    let full_cost = count_cost(grid.len(), &cfg).attention;
    let model = ToyViT64::new(cfg)?;
    let full_tokens = model.embed_grid(grid)?;
    let pruned = prune(grid, mask)?;
    let full_ms = time_forward(&model, &full_tokens, args.repeats)?;
    let (mut pruned_ms, mut pruned_attn) = (None, 0);
    if !pruned.is_empty() {
        let tokens = model.embed_sequence(&pruned)?;
        let mut counter = CostCounter::default();
        model.forward_with(&tokens, None, Capture::None, Some(&mut counter))?;
        pruned_attn = counter.attention;
        pruned_ms = Some(time_forward(&model, &tokens, args.repeats)?);
    }
    let mut full_counter = CostCounter::default();
    model.forward_with(&full_tokens, None, Capture::None, Some(&mut full_counter))?;
    anyhow::ensure!(full_counter.attention == full_cost, "instrumented attention cost disagrees with count_cost");
    Ok(Row {
        name,
        rows: grid.rows,
        cols: grid.cols,
        total: stats.total,
        retained: stats.kept,
        retained_ratio: stats.retained_ratio,
        cost_ratio: stats.attention_cost_ratio,
        attention_flops_full: full_counter.attention,
        attention_flops_pruned: pruned_attn,
        measured_attention_ratio: pruned_attn as f64 / full_counter.attention as f64,
        forward_full_ms: full_ms,
        forward_pruned_ms: pruned_ms,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

pub fn run(args: BenchArgs) -> anyhow::Result<Outcome> {
    let inputs = match (&args.images, args.sweep) {
        (Some(dir), _) => load_dir(dir)?,
        (None, Some(s)) => synthetic(s, args.seed)?,
        (None, None) => synthetic(Sweep::All, args.seed)?,
    };
    let prune_cfg = PruneConfig::new(args.tau)?;
    let mut rows = Vec::new();
    for (name, canvas) in inputs {
        let grid = tile(&canvas, args.patch_size)?;
        let mask = blank_mask(&grid, &prune_cfg);
        rows.push(measure(name, &grid, &mask, &args)?);
    }
    let dir = &args.out.out;
    fs::create_dir_all(dir)?;
    let mut csv = String::from(
        "name,rows,cols,total,retained,retained_ratio,cost_ratio,attention_flops_full,attention_flops_pruned,\
         measured_attention_ratio,forward_full_ms,forward_pruned_ms\n",
    );
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{:.6},{:.6},{},{},{:.6},{},{}",
            r.name,
            r.rows,
            r.cols,
            r.total,
            r.retained,
            r.retained_ratio,
            r.cost_ratio,
            r.attention_flops_full,
            r.attention_flops_pruned,
            r.measured_attention_ratio,
            format!("{:.3}", r.forward_full_ms),
            opt(r.forward_pruned_ms)
        )?;
    }
    fs::write(dir.join("prune_bench.csv"), &csv)?;
    let summary = serde_json::json!({"tau": args.tau, "patch_size": args.patch_size, "rows": rows});
    fs::write(dir.join("prune_bench.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    print!("{csv}");
    Ok(Outcome::Ok)
}
