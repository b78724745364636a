use std::fs;
use std::path::PathBuf;

use anyhow::bail;
use clap::Args;
use pixelbench_core::patchgrid::{blank_mask, prune, tile, PruneConfig};
use pixelbench_core::render::{decode_png, encode_png, render_text, RenderSpec};
use pixelbench_core::toyvit::{heatmap, overlay, Capture, ToyViTConfig};
use pixelbench_core::ToyViT64;
use serde_json::json;

use crate::{OutArg, Outcome};

#[derive(Args)]
pub struct HeatmapArgs {
    /// PNG canvas to analyse.
    #[arg(long, conflicts_with = "text")]
    canvas: Option<PathBuf>,
    /// Render this text with default settings instead of reading a canvas.
    #[arg(long)]
    text: Option<String>,
    #[command(flatten)]
    out: OutArg,
    /// Toy model seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// First query step averaged (inclusive).
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Last query step averaged (exclusive); defaults to the sequence length.
    #[arg(long)]
    end: Option<usize>,
    /// Drop blank patches before the forward pass.
    #[arg(long)]
    prune: bool,
    #[arg(long, default_value_t = 10.0)]
    tau: f64,
    #[arg(long, default_value_t = 28)]
    patch_size: u32,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
}

pub fn run(args: HeatmapArgs) -> anyhow::Result<Outcome> {
    let canvas = match (&args.canvas, &args.text) {
        (Some(p), _) => decode_png(&fs::read(p)?)?,
        (None, Some(t)) => render_text(t, &RenderSpec::default())?,
        (None, None) => bail!(pixelbench_core::Error::Config("pass --canvas or --text".into())),
    };
    let grid = tile(&canvas, args.patch_size)?;
    let cfg = ToyViTConfig {
        patch_size: args.patch_size,
        channels: canvas.channels,
        max_rows: grid.rows.max(64),
        max_cols: grid.cols.max(64),
        seed: args.seed,
        ..ToyViTConfig::default()
    };
    let model = ToyViT64::new(cfg)?;
    let tokens = if args.prune {
        let mask = blank_mask(&grid, &PruneConfig::new(args.tau)?);
        model.embed_sequence(&prune(&grid, &mask)?)?
    } else {
        model.embed_grid(&grid)?
    };
    let out = model.forward_with(&tokens, None, Capture::LastLayer, None)?;
    let end = args.end.unwrap_or(tokens.len());
    let map = heatmap(&out.trace, args.start, end)?;
    let dir = &args.out.out;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("heatmap.png"), encode_png(&overlay(&canvas, &map, args.patch_size, args.alpha)))?;
    let doc = json!({
        "seed": args.seed,
        "start": args.start,
        "end": end,
        "pruned": args.prune,
        "tokens": tokens.len(),
        "heatmap": map,
    });
    fs::write(dir.join("heatmap.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    println!("{}x{} heatmap over {} tokens", map.rows, map.cols, tokens.len());
    Ok(Outcome::Ok)
}
