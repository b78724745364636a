//! Deterministic rasterization of prompts and tables into pixel canvases.
//!
//! Canvas width is picked from three tiers by character count, text is
//! wrapped at word boundaries inside the padded box, and height grows in
//! `base_height` steps so nothing is ever clipped.

mod canvas;
mod codec;
pub mod font;
mod noise;
mod raster;
mod table;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use canvas::{sha256_hex, PixelCanvas, Provenance};
pub use codec::{decode_png, encode_png, CanvasCache};
pub use noise::{apply_noise, NoiseKind, NoiseSpec};
pub use raster::Rect;
pub use table::{render_table, Align, TableData};

use crate::error::{Error, Result};
use font::{Metrics, Weight};
use raster::Raster;

pub const FONT_SIZE_RANGE: (f32, f32) = (15.0, 25.0);
pub const PADDING_RANGE: (u32, u32) = (5, 30);

/// Character-count ceilings of the 512 and 768 pixel width tiers.
pub const WIDTH_TIERS: [(usize, u32); 2] = [(600, 512), (1500, 768)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSpec {
    pub width_min: u32,
    pub width_max: u32,
    pub base_height: u32,
    /// Points; one point renders as one pixel.
    pub font_size: f32,
    pub padding: u32,
    pub foreground: u8,
    pub background: u8,
    /// Line pitch as a multiple of the font's ascent-to-descent height.
    pub line_spacing: f32,
    pub channels: u8,
    pub seed: u64,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            width_min: 512,
            width_max: 1024,
            base_height: 256,
            font_size: 20.0,
            padding: 16,
            foreground: 0,
            background: 255,
            line_spacing: 1.15,
            channels: 1,
            seed: 0,
        }
    }
}

impl RenderSpec {
    /// Defaults with font size and padding drawn uniformly (whole points and
    /// pixels) from their allowed ranges using `seed`.
    pub fn sampled(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let font = rng.random_range(FONT_SIZE_RANGE.0 as u32..=FONT_SIZE_RANGE.1 as u32);
        let padding = rng.random_range(PADDING_RANGE.0..=PADDING_RANGE.1);
        Self {
            font_size: font as f32,
            padding,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.width_min == 0 || self.width_min > self.width_max {
            return bad(format!("width range [{}, {}]", self.width_min, self.width_max));
        }
        if self.base_height == 0 {
            return bad("base_height must be positive".into());
        }
        if !(FONT_SIZE_RANGE.0..=FONT_SIZE_RANGE.1).contains(&self.font_size) {
            return bad(format!("font size {} outside [15, 25]", self.font_size));
        }
        if !(PADDING_RANGE.0..=PADDING_RANGE.1).contains(&self.padding) {
            return bad(format!("padding {} outside [5, 30]", self.padding));
        }
        if !(self.line_spacing >= 1.0 && self.line_spacing <= 4.0) {
            return bad(format!("line spacing {}", self.line_spacing));
        }
        if self.channels != 1 && self.channels != 3 {
            return bad(format!("{} channels", self.channels));
        }
        if 2 * self.padding + 2 * self.font_size.ceil() as u32 >= self.width_min {
            return bad("padding leaves no room for text".into());
        }
        Ok(())
    }

    pub fn sha256(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("spec serializes"))
    }

    pub(crate) fn metrics(&self, weight: Weight) -> Metrics {
        Metrics::new(weight, self.font_size)
    }

    pub(crate) fn line_height(&self, m: &Metrics) -> u32 {
        (m.natural_height() * self.line_spacing).ceil() as u32
    }

    /// Smallest positive multiple of `base_height` that is at least `content`.
    pub fn snap_height(&self, content: u32) -> u32 {
        content.div_ceil(self.base_height).max(1) * self.base_height
    }

    /// Width tier for `chars` characters, clamped into `[width_min, width_max]`.
    pub fn width_for(&self, chars: usize) -> u32 {
        let tier = WIDTH_TIERS
            .iter()
            .find(|(limit, _)| chars <= *limit)
            .map(|&(_, w)| w)
            .unwrap_or(1024);
        tier.clamp(self.width_min, self.width_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutPlan {
    pub width: u32,
    pub height: u32,
    pub lines: Vec<String>,
    pub line_height: u32,
    pub padding: u32,
    pub ascent: f32,
}

impl LayoutPlan {
    /// Region glyph ink may occupy.
    pub fn text_box(&self) -> Rect {
        Rect {
            x0: self.padding,
            y0: self.padding,
            x1: self.width - self.padding,
            y1: self.height - self.padding,
        }
    }
}

/// Collapses runs of blanks inside each line and drops leading and trailing
/// empty lines. Interior line breaks are kept.
pub fn normalize_text(text: &str) -> String {
    let lines: Vec<String> = text
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect();
    let start = lines.iter().position(|l| !l.is_empty());
    let end = lines.iter().rposition(|l| !l.is_empty());
    match (start, end) {
        (Some(s), Some(e)) => lines[s..=e].join("\n"),
        _ => String::new(),
    }
}

/// Greedy word wrap. Words wider than `max_width` are split by character.
pub(crate) fn wrap(paragraph: &str, max_width: f32, m: &Metrics) -> Vec<String> {
    if paragraph.is_empty() {
        return vec![String::new()];
    }
    let space = m.advance(' ');
    let mut lines = Vec::new();
    let mut line = String::new();
    let mut line_w = 0.0f32;
    for word in paragraph.split(' ') {
        let w = m.text_width(word);
        if w > max_width {
            // Oversized word: flush, then hard-break it.
            if !line.is_empty() {
                lines.push(std::mem::take(&mut line));
                line_w = 0.0;
            }
            for c in word.chars() {
                let cw = m.advance(c);
                if line_w + cw > max_width && !line.is_empty() {
                    lines.push(std::mem::take(&mut line));
                    line_w = 0.0;
                }
                line.push(c);
                line_w += cw;
            }
            continue;
        }
        if line.is_empty() {
            line.push_str(word);
            line_w = w;
        } else if line_w + space + w <= max_width {
            line.push(' ');
            line.push_str(word);
            line_w += space + w;
        } else {
            lines.push(std::mem::replace(&mut line, word.to_string()));
            line_w = w;
        }
    }
    lines.push(line);
    lines
}

pub fn plan_layout(text: &str, spec: &RenderSpec) -> Result<LayoutPlan> {
    spec.validate()?;
    let text = normalize_text(text);
    if text.is_empty() {
        return Err(Error::EmptyInput);
    }
    font::check_glyphs(&text, Weight::Regular)?;
    let metrics = spec.metrics(Weight::Regular);
    let width = spec.width_for(text.chars().count());
    let max_width = (width - 2 * spec.padding) as f32;
    let lines: Vec<String> = text
        .split('\n')
        .flat_map(|p| wrap(p, max_width, &metrics))
        .collect();
    let line_height = spec.line_height(&metrics);
    let content = lines.len() as u32 * line_height + 2 * spec.padding;
    Ok(LayoutPlan {
        width,
        height: spec.snap_height(content),
        lines,
        line_height,
        padding: spec.padding,
        ascent: metrics.ascent,
    })
}

pub fn render_text(text: &str, spec: &RenderSpec) -> Result<PixelCanvas> {
    let plan = plan_layout(text, spec)?;
    let metrics = spec.metrics(Weight::Regular);
    let mut raster = Raster::new(plan.width, plan.height, spec.background);
    let clip = plan.text_box();
    for (i, line) in plan.lines.iter().enumerate() {
        let baseline = (plan.padding + i as u32 * plan.line_height) as f32 + plan.ascent;
        raster.draw_text(&metrics, line, plan.padding as f32, baseline, clip);
    }
    let gray = raster.into_gray(spec.foreground);
    finish(gray, plan.width, plan.height, spec, normalize_text(text).as_bytes())
}

pub(crate) fn finish(
    gray: Vec<u8>,
    width: u32,
    height: u32,
    spec: &RenderSpec,
    input: &[u8],
) -> Result<PixelCanvas> {
    let canvas = PixelCanvas::new(width, height, 1, gray)?
        .with_background(spec.background)
        .with_provenance(Provenance {
            input_sha256: sha256_hex(input),
            spec_sha256: spec.sha256(),
            seed: spec.seed,
            noise_sha256: None,
        });
    Ok(if spec.channels == 3 { canvas.to_rgb() } else { canvas })
}
