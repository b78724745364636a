use std::io::Write;

use ab_glyph::{Font, FontRef};
use pixelbench_core::harness::load_dataset;
use pixelbench_core::metrics::{matthews_corr, pearson, ConfusionCounts};
use pixelbench_core::patchgrid::{blank_mask, prune_stats, tile, PruneConfig};
use pixelbench_core::render::{plan_layout, render_text, PixelCanvas, RenderSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: [&str; 16] = [
    "pixel", "language", "model", "reads", "the", "rendered", "page", "without", "tokens", "and", "attention",
    "falls", "on", "every", "visible", "word",
];

fn passage(chars: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::new();
    while s.len() < chars {
        if !s.is_empty() {
            s.push(' ');
        }
        s.push_str(VOCAB[rng.random_range(0..VOCAB.len())]);
    }
    s.truncate(chars);
    s.truncate(s.trim_end().len());
    s
}

/// Character-by-character greedy wrap using advances read straight from the
/// font tables; breaks at the last space once a line overflows.
fn oracle_line_count(text: &str, points: f32, max_width: f32) -> usize {
    let font = FontRef::try_from_slice(include_bytes!("../assets/fonts/DejaVuSans.ttf")).unwrap();
    let px = points / font.units_per_em().unwrap();
    let adv = |c: char| font.h_advance_unscaled(font.glyph_id(c)) * px;
    let chars: Vec<char> = text.chars().collect();
    let mut lines = 0;
    let mut start = 0;
    while start < chars.len() {
        let mut width = 0.0;
        let mut end = start;
        let mut last_space = None;
        while end < chars.len() {
            let w = adv(chars[end]);
            if width + w > max_width {
                break;
            }
            if chars[end] == ' ' {
                last_space = Some(end);
            }
            width += w;
            end += 1;
        }
        lines += 1;
        if end == chars.len() {
            break;
        }
        // A space exactly at the overflow point also ends the line.
        start = match (chars[end] == ' ', last_space) {
            (true, _) => end + 1,
            (false, Some(sp)) => sp + 1,
            (false, None) => end,
        };
    }
    lines
}

fn oracle_line_height(points: f32, spacing: f32) -> u32 {
    let font = FontRef::try_from_slice(include_bytes!("../assets/fonts/DejaVuSans.ttf")).unwrap();
    let px = points / font.units_per_em().unwrap();
    ((font.ascent_unscaled() - font.descent_unscaled()) * px * spacing).ceil() as u32
}

/// Number of separated horizontal bands containing ink.
fn ink_bands(c: &PixelCanvas) -> usize {
    let mut bands = 0;
    let mut inside = false;
    for y in 0..c.height {
        let ink = (0..c.width).any(|x| c.sample(x, y, 0) < 128);
        if ink && !inside {
            bands += 1;
        }
        inside = ink;
    }
    bands
}

#[test]
fn long_passage_layout_matches_wrap_oracle() {
    let spec = RenderSpec {
        font_size: 25.0,
        padding: 30,
        ..RenderSpec::default()
    };
    let text = passage(5000, 1);
    assert!(text.len() > 4990);
    let plan = plan_layout(&text, &spec).unwrap();
    assert_eq!(plan.width, 1024);
    let lines = oracle_line_count(&text, 25.0, (1024 - 60) as f32);
    assert_eq!(plan.lines.len(), lines);
    let lh = oracle_line_height(25.0, spec.line_spacing);
    assert_eq!(plan.line_height, lh);
    let needed = lines as u32 * lh + 60;
    let k = needed.div_ceil(256);
    assert_eq!(plan.height, 256 * k);
    assert!(256 * (k - 1) < needed);
    let canvas = render_text(&text, &spec).unwrap();
    assert_eq!((canvas.width, canvas.height), (plan.width, plan.height));
    assert_eq!(ink_bands(&canvas), lines);
}

/// Population variance of the gray-level patch at (row, col), padding with
/// background outside the canvas.
fn oracle_variance(c: &PixelCanvas, row: u32, col: u32, ps: u32) -> f64 {
    let mut vals = Vec::with_capacity((ps * ps) as usize);
    for y in row * ps..(row + 1) * ps {
        for x in col * ps..(col + 1) * ps {
            let v = if x < c.width && y < c.height {
                (0..c.channels).map(|ch| c.sample(x, y, ch) as f64).sum::<f64>() / c.channels as f64
            } else {
                c.background as f64
            };
            vals.push(v);
        }
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64
}

#[test]
fn paragraph_retention_matches_variance_oracle() {
    let source = passage(2000, 2);
    let words: Vec<&str> = source.split(' ').take(100).collect();
    assert_eq!(words.len(), 100);
    let text = words.join(" ");
    let spec = RenderSpec {
        width_min: 1024,
        ..RenderSpec::default()
    };
    let canvas = render_text(&text, &spec).unwrap();
    assert_eq!(canvas.width, 1024);
    let grid = tile(&canvas, 28).unwrap();
    let mask = blank_mask(&grid, &PruneConfig::new(10.0).unwrap());
    let mut kept = 0;
    for r in 0..grid.rows as u32 {
        for c in 0..grid.cols as u32 {
            let blank = oracle_variance(&canvas, r, c, 28) < 10.0;
            assert_eq!(mask.is_blank(r as usize * grid.cols + c as usize), blank, "patch ({r}, {c})");
            kept += usize::from(!blank);
        }
    }
    let ratio = kept as f64 / mask.len() as f64;
    assert!(ratio > 0.2 && ratio < 0.8, "retained {ratio}");
    let stats = prune_stats(&mask);
    assert_eq!(stats.kept, kept);
    assert!((stats.retained_ratio - ratio).abs() < 1e-12);
    assert!((stats.attention_cost_ratio - ratio * ratio).abs() < 1e-12);
}

#[test]
fn gsm8k_sized_file_loads_every_line() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    for i in 0..1319 {
        writeln!(
            f,
            r#"{{"id":"gsm8k-test-{i}","task":"gsm8k","input":"Janet has {i} ducks and buys 2 more. How many ducks?","references":["{}"]}}"#,
            i + 2
        )
        .unwrap();
    }
    let examples = load_dataset(f.path(), 0).unwrap();
    assert_eq!(examples.len(), 1319);
    assert_eq!(examples[1318].references, vec!["1320".to_string()]);
}

#[test]
fn mcc_equals_pearson_of_binary_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    while checked < 100 {
        let c = ConfusionCounts::new(
            rng.random_range(0..30),
            rng.random_range(0..30),
            rng.random_range(0..30),
            rng.random_range(0..30),
        );
        let mut preds = Vec::new();
        let mut golds = Vec::new();
        for (n, p, g) in [(c.tp, 1.0, 1.0), (c.tn, 0.0, 0.0), (c.fp, 1.0, 0.0), (c.fn_, 0.0, 1.0)] {
            for _ in 0..n {
                preds.push(p);
                golds.push(g);
            }
        }
        // Pearson is undefined when either label vector is constant.
        let Ok(r) = pearson(&preds, &golds) else { continue };
        assert!((matthews_corr(&c) - r).abs() <= 1e-9, "{c:?}");
        checked += 1;
    }
}
