use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Where a canvas came from. Serialized as the PNG sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub input_sha256: String,
    pub spec_sha256: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sha256: Option<String>,
}

impl Provenance {
    /// Cache key: hash of the canonical JSON form.
    pub fn key(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("provenance serializes"))
    }
}

/// Row-major 8-bit raster, gray (1 channel) or RGB (3 channels).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelCanvas {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub pixels: Vec<u8>,
    /// Gray level used when the canvas has to be padded.
    pub background: u8,
    pub provenance: Provenance,
}

impl PixelCanvas {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidCanvas(format!("{width}x{height} has no pixels")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidCanvas(format!("{channels} channels")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(Error::InvalidCanvas(format!(
                "{} samples for {width}x{height}x{channels}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
            background: 255,
            provenance: Provenance::default(),
        })
    }

    pub fn uniform(width: u32, height: u32, channels: u8, level: u8) -> Result<Self> {
        let n = width as usize * height as usize * channels as usize;
        let mut c = Self::new(width, height, channels, vec![level; n])?;
        c.background = level;
        Ok(c)
    }

    pub fn with_background(mut self, level: u8) -> Self {
        self.background = level;
        self
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    #[inline]
    pub fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    pub fn sample(&self, x: u32, y: u32, channel: u8) -> u8 {
        self.pixels[self.offset(x, y) + channel as usize]
    }

    /// Unweighted channel mean.
    pub fn gray_at(&self, x: u32, y: u32) -> f64 {
        let o = self.offset(x, y);
        let px = &self.pixels[o..o + self.channels as usize];
        px.iter().map(|&v| v as f64).sum::<f64>() / px.len() as f64
    }

    pub fn to_rgb(&self) -> PixelCanvas {
        if self.channels == 3 {
            return self.clone();
        }
        let pixels = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
        PixelCanvas {
            width: self.width,
            height: self.height,
            channels: 3,
            pixels,
            background: self.background,
            provenance: self.provenance.clone(),
        }
    }

    /// Stacks canvases top to bottom, left aligned, padding narrower ones with
    /// the first canvas' background. Output is RGB if any input is.
    pub fn stack_vertical(parts: &[PixelCanvas]) -> Result<PixelCanvas> {
        let first = parts.first().ok_or(Error::EmptyInput)?;
        let channels = if parts.iter().any(|p| p.channels == 3) { 3 } else { 1 };
        let width = parts.iter().map(|p| p.width).max().unwrap_or(0);
        let height = parts.iter().map(|p| p.height).sum();
        let bg = first.background;
        let mut out = PixelCanvas::uniform(width, height, channels, bg)?;
        let mut y0 = 0;
        for part in parts {
            let part = if channels == 3 { part.to_rgb() } else { part.clone() };
            let row = part.width as usize * channels as usize;
            for y in 0..part.height {
                let src = part.offset(0, y);
                let dst = out.offset(0, y0 + y);
                out.pixels[dst..dst + row].copy_from_slice(&part.pixels[src..src + row]);
            }
            y0 += part.height;
        }
        let joined: Vec<String> = parts.iter().map(|p| p.provenance.key()).collect();
        out.provenance = Provenance {
            input_sha256: sha256_hex(joined.join(",").as_bytes()),
            spec_sha256: first.provenance.spec_sha256.clone(),
            seed: first.provenance.seed,
            noise_sha256: None,
        };
        Ok(out)
    }
}
