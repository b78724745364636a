use ab_glyph::{point, Font, ScaleFont};

use super::font::Metrics;

/// Axis-aligned pixel rectangle, half-open on the right and bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Rect {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Working surface: a per-pixel base level plus an ink coverage layer.
pub(crate) struct Raster {
    pub width: u32,
    pub height: u32,
    base: Vec<u8>,
    ink: Vec<f32>,
}

impl Raster {
    pub fn new(width: u32, height: u32, background: u8) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            base: vec![background; n],
            ink: vec![0.0; n],
        }
    }

    fn idx(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn shade(&mut self, r: Rect, level: u8) {
        for y in r.y0..r.y1.min(self.height) {
            for x in r.x0..r.x1.min(self.width) {
                let i = self.idx(x, y);
                self.base[i] = level;
            }
        }
    }

    pub fn fill_ink(&mut self, r: Rect) {
        for y in r.y0..r.y1.min(self.height) {
            for x in r.x0..r.x1.min(self.width) {
                let i = self.idx(x, y);
                self.ink[i] = 1.0;
            }
        }
    }

    /// Draws one line of text with its pen starting at `x` on `baseline`.
    /// Coverage outside `clip` is discarded.
    pub fn draw_text(&mut self, metrics: &Metrics, text: &str, x: f32, baseline: f32, clip: Rect) {
        let font = metrics.font();
        let scaled = font.as_scaled(metrics.scale);
        let mut pen = x;
        for c in text.chars() {
            let id = scaled.glyph_id(c);
            let glyph = id.with_scale_and_position(metrics.scale, point(pen, baseline));
            pen += scaled.h_advance(id);
            let Some(outline) = font.outline_glyph(glyph) else {
                continue;
            };
            let bounds = outline.px_bounds();
            let (ox, oy) = (bounds.min.x as i64, bounds.min.y as i64);
            outline.draw(|gx, gy, cov| {
                let px = ox + gx as i64;
                let py = oy + gy as i64;
                if px < 0 || py < 0 {
                    return;
                }
                let (px, py) = (px as u32, py as u32);
                if !clip.contains(px, py) || px >= self.width || py >= self.height {
                    return;
                }
                let i = self.idx(px, py);
                let cov = cov.clamp(0.0, 1.0);
                if cov > self.ink[i] {
                    self.ink[i] = cov;
                }
            });
        }
    }

    /// Flattens to 8-bit gray, blending each pixel from its base level to `foreground`.
    pub fn into_gray(self, foreground: u8) -> Vec<u8> {
        let fg = foreground as f32;
        self.base
            .iter()
            .zip(&self.ink)
            .map(|(&b, &ink)| {
                let b = b as f32;
                (b + (fg - b) * ink).round().clamp(0.0, 255.0) as u8
            })
            .collect()
    }
}
