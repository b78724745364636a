use std::sync::OnceLock;

use ab_glyph::{Font, FontRef, PxScale, ScaleFont};

use crate::error::{Error, Result};

static REGULAR_BYTES: &[u8] = include_bytes!("../../assets/fonts/DejaVuSans.ttf");
static BOLD_BYTES: &[u8] = include_bytes!("../../assets/fonts/DejaVuSans-Bold.ttf");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    Regular,
    Bold,
}

/// Bundled DejaVu Sans faces.
pub fn face(weight: Weight) -> &'static FontRef<'static> {
    static REGULAR: OnceLock<FontRef<'static>> = OnceLock::new();
    static BOLD: OnceLock<FontRef<'static>> = OnceLock::new();
    match weight {
        Weight::Regular => REGULAR.get_or_init(|| {
            FontRef::try_from_slice(REGULAR_BYTES).expect("bundled regular face parses")
        }),
        Weight::Bold => BOLD
            .get_or_init(|| FontRef::try_from_slice(BOLD_BYTES).expect("bundled bold face parses")),
    }
}

/// Font metrics at a fixed point size. One point is one pixel.
#[derive(Clone, Copy)]
pub struct Metrics {
    pub weight: Weight,
    pub scale: PxScale,
    pub ascent: f32,
    pub descent: f32,
}

impl Metrics {
    pub fn new(weight: Weight, points: f32) -> Self {
        let font = face(weight);
        // 72 dpi: the em square is `points` pixels tall.
        let scale = match font.units_per_em() {
            Some(upem) => PxScale::from(points * font.height_unscaled() / upem),
            None => PxScale::from(points),
        };
        let scaled = font.as_scaled(scale);
        Self {
            weight,
            scale,
            ascent: scaled.ascent(),
            descent: scaled.descent(),
        }
    }

    pub fn font(&self) -> &'static FontRef<'static> {
        face(self.weight)
    }

    /// Ascent to descent distance in pixels.
    pub fn natural_height(&self) -> f32 {
        self.ascent - self.descent
    }

    pub fn advance(&self, c: char) -> f32 {
        let font = self.font().as_scaled(self.scale);
        font.h_advance(font.glyph_id(c))
    }

    pub fn text_width(&self, s: &str) -> f32 {
        s.chars().map(|c| self.advance(c)).sum()
    }
}

/// Fails on the first non-whitespace character without a glyph.
pub fn check_glyphs(text: &str, weight: Weight) -> Result<()> {
    let font = face(weight);
    match text
        .chars()
        .find(|c| !c.is_whitespace() && font.glyph_id(*c).0 == 0)
    {
        Some(c) => Err(Error::GlyphUnavailable(c)),
        None => Ok(()),
    }
}
