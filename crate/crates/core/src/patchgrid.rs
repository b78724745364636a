//! Patch tiling and variance-threshold blank-patch pruning.
//!
//! A canvas is padded with its background to whole patches and tiled in
//! row-major order. A patch whose gray-level population variance is strictly
//! below the threshold is blank. Pruning keeps the remaining patches in scan
//! order and tags each with its original grid coordinate, so positional
//! information survives the shorter sequence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{PixelCanvas, Provenance};

pub const DEFAULT_PATCH_SIZE: u32 = 28;
pub const DEFAULT_TAU: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub row: usize,
    pub col: usize,
    /// `patch_size * patch_size * channels` row-major samples.
    pub pixels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub patch_size: u32,
    pub rows: usize,
    pub cols: usize,
    pub channels: u8,
    /// Size of the canvas before padding.
    pub source_width: u32,
    pub source_height: u32,
    pub background: u8,
    pub patches: Vec<Patch>,
    pub provenance: Provenance,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn patch_dim(&self) -> usize {
        (self.patch_size * self.patch_size) as usize * self.channels as usize
    }

    /// Rebuilds the original canvas from the tiles, dropping the padding.
    pub fn reassemble(&self) -> PixelCanvas {
        let ps = self.patch_size as usize;
        let ch = self.channels as usize;
        let (w, h) = (self.source_width as usize, self.source_height as usize);
        let mut pixels = vec![0u8; w * h * ch];
        for p in &self.patches {
            for py in 0..ps {
                let y = p.row * ps + py;
                if y >= h {
                    break;
                }
                for px in 0..ps {
                    let x = p.col * ps + px;
                    if x >= w {
                        break;
                    }
                    let src = (py * ps + px) * ch;
                    let dst = (y * w + x) * ch;
                    pixels[dst..dst + ch].copy_from_slice(&p.pixels[src..src + ch]);
                }
            }
        }
        PixelCanvas::new(self.source_width, self.source_height, self.channels, pixels)
            .expect("grid dimensions are consistent")
            .with_background(self.background)
            .with_provenance(self.provenance.clone())
    }
}

/// Pads `canvas` with its background to multiples of `patch_size` and tiles it.
pub fn tile(canvas: &PixelCanvas, patch_size: u32) -> Result<PatchGrid> {
    if patch_size == 0 {
        return Err(Error::InvalidConfig("patch size must be positive".into()));
    }
    let ps = patch_size as usize;
    let ch = canvas.channels as usize;
    let rows = canvas.height.div_ceil(patch_size) as usize;
    let cols = canvas.width.div_ceil(patch_size) as usize;
    let (w, h) = (canvas.width as usize, canvas.height as usize);
    let mut patches = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            let mut pixels = vec![canvas.background; ps * ps * ch];
            for py in 0..ps {
                let y = row * ps + py;
                if y >= h {
                    break;
                }
                let x0 = col * ps;
                let x1 = (x0 + ps).min(w);
                if x0 >= x1 {
                    continue;
                }
                let src = (y * w + x0) * ch;
                let dst = py * ps * ch;
                let n = (x1 - x0) * ch;
                pixels[dst..dst + n].copy_from_slice(&canvas.pixels[src..src + n]);
            }
            patches.push(Patch { row, col, pixels });
        }
    }
    Ok(PatchGrid {
        patch_size,
        rows,
        cols,
        channels: canvas.channels,
        source_width: canvas.width,
        source_height: canvas.height,
        background: canvas.background,
        patches,
        provenance: canvas.provenance.clone(),
    })
}

/// Population variance of gray levels; multi-channel pixels are reduced to
/// their unweighted channel mean first.
pub fn patch_variance(pixels: &[u8], channels: u8) -> f64 {
    let ch = channels.max(1) as usize;
    assert!(!pixels.is_empty() && pixels.len() % ch == 0, "patch must be non-empty");
    let gray = |p: &[u8]| p.iter().map(|&v| v as f64).sum::<f64>() / ch as f64;
    let n = (pixels.len() / ch) as f64;
    let mean = pixels.chunks_exact(ch).map(gray).sum::<f64>() / n;
    pixels
        .chunks_exact(ch)
        .map(|p| (gray(p) - mean).powi(2))
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    /// Gray-level variance below which a patch counts as blank.
    pub variance_threshold: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            variance_threshold: DEFAULT_TAU,
        }
    }
}

impl PruneConfig {
    pub fn new(variance_threshold: f64) -> Result<Self> {
        if !(variance_threshold >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "variance threshold {variance_threshold} must be >= 0"
            )));
        }
        Ok(Self { variance_threshold })
    }
}

/// Per-patch verdicts in scan order; `true` marks a blank patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchMask {
    pub rows: usize,
    pub cols: usize,
    blank: Vec<bool>,
}

impl PatchMask {
    pub fn from_blank(rows: usize, cols: usize, blank: Vec<bool>) -> Result<Self> {
        if blank.len() != rows * cols {
            return Err(Error::MaskMismatch {
                mask: blank.len(),
                expected: rows * cols,
            });
        }
        Ok(Self { rows, cols, blank })
    }

    pub fn all_kept(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            blank: vec![false; rows * cols],
        }
    }

    pub fn len(&self) -> usize {
        self.blank.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blank.is_empty()
    }

    pub fn is_blank(&self, index: usize) -> bool {
        self.blank[index]
    }

    pub fn blank(&self) -> &[bool] {
        &self.blank
    }

    pub fn kept(&self) -> impl Iterator<Item = bool> + '_ {
        self.blank.iter().map(|b| !b)
    }

    pub fn retained(&self) -> usize {
        self.blank.iter().filter(|b| !**b).count()
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.blank[i]).collect()
    }

    /// Compact JSON form: grid shape plus a hex bitset (bit set = kept,
    /// least significant bit first within each byte).
    pub fn to_json(&self) -> MaskJson {
        let mut bytes = vec![0u8; self.len().div_ceil(8)];
        for (i, kept) in self.kept().enumerate() {
            if kept {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        MaskJson {
            rows: self.rows,
            cols: self.cols,
            retained: self.retained(),
            kept_bits: hex::encode(bytes),
        }
    }

    pub fn from_json(json: &MaskJson) -> Result<Self> {
        let n = json.rows * json.cols;
        let bytes = hex::decode(&json.kept_bits)
            .map_err(|e| Error::InvalidConfig(format!("mask bitset: {e}")))?;
        if bytes.len() != n.div_ceil(8) {
            return Err(Error::MaskMismatch {
                mask: bytes.len() * 8,
                expected: n,
            });
        }
        let blank = (0..n).map(|i| bytes[i / 8] & (1 << (i % 8)) == 0).collect();
        let mask = Self::from_blank(json.rows, json.cols, blank)?;
        if mask.retained() != json.retained {
            return Err(Error::InvalidConfig(format!(
                "mask header says {} retained, bitset has {}",
                json.retained,
                mask.retained()
            )));
        }
        Ok(mask)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskJson {
    pub rows: usize,
    pub cols: usize,
    pub retained: usize,
    pub kept_bits: String,
}

pub fn blank_mask(grid: &PatchGrid, cfg: &PruneConfig) -> PatchMask {
    let blank = grid
        .patches
        .iter()
        .map(|p| patch_variance(&p.pixels, grid.channels) < cfg.variance_threshold)
        .collect();
    PatchMask {
        rows: grid.rows,
        cols: grid.cols,
        blank,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrunedToken {
    pub row: usize,
    pub col: usize,
    pub pixels: Vec<u8>,
}

impl PrunedToken {
    pub fn flat_index(&self, cols: usize) -> usize {
        self.row * cols + self.col
    }
}

/// Kept patches in scan order with their pre-pruning coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedSequence {
    pub patch_size: u32,
    pub rows: usize,
    pub cols: usize,
    pub channels: u8,
    pub tokens: Vec<PrunedToken>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchIndexEntry {
    pub row: usize,
    pub col: usize,
    pub index: usize,
    /// Top-left corner of the patch in the padded canvas.
    pub x: u32,
    pub y: u32,
}

impl PrunedSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn coordinates(&self) -> Vec<(usize, usize)> {
        self.tokens.iter().map(|t| (t.row, t.col)).collect()
    }

    pub fn flat_indices(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.flat_index(self.cols)).collect()
    }

    /// Keeps the tokens whose entry in `keep` is true.
    pub fn retain(&self, keep: &[bool]) -> Result<PrunedSequence> {
        if keep.len() != self.tokens.len() {
            return Err(Error::MaskMismatch {
                mask: keep.len(),
                expected: self.tokens.len(),
            });
        }
        Ok(PrunedSequence {
            tokens: self
                .tokens
                .iter()
                .zip(keep)
                .filter(|(_, k)| **k)
                .map(|(t, _)| t.clone())
                .collect(),
            ..self.clone_header()
        })
    }

    fn clone_header(&self) -> PrunedSequence {
        PrunedSequence {
            patch_size: self.patch_size,
            rows: self.rows,
            cols: self.cols,
            channels: self.channels,
            tokens: Vec::new(),
        }
    }

    /// Debug index from each kept token to its location in the padded canvas.
    pub fn index(&self) -> Vec<PatchIndexEntry> {
        self.tokens
            .iter()
            .map(|t| PatchIndexEntry {
                row: t.row,
                col: t.col,
                index: t.flat_index(self.cols),
                x: t.col as u32 * self.patch_size,
                y: t.row as u32 * self.patch_size,
            })
            .collect()
    }
}

pub fn prune(grid: &PatchGrid, mask: &PatchMask) -> Result<PrunedSequence> {
    if mask.len() != grid.len() || mask.rows != grid.rows || mask.cols != grid.cols {
        return Err(Error::MaskMismatch {
            mask: mask.len(),
            expected: grid.len(),
        });
    }
    let tokens = grid
        .patches
        .iter()
        .zip(mask.blank())
        .filter(|(_, blank)| !**blank)
        .map(|(p, _)| PrunedToken {
            row: p.row,
            col: p.col,
            pixels: p.pixels.clone(),
        })
        .collect();
    Ok(PrunedSequence {
        patch_size: grid.patch_size,
        rows: grid.rows,
        cols: grid.cols,
        channels: grid.channels,
        tokens,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneStats {
    pub total: usize,
    pub kept: usize,
    pub pruned: usize,
    pub retained_ratio: f64,
    /// Attention cost relative to the full sequence, `retained_ratio^2`.
    pub attention_cost_ratio: f64,
}

pub fn prune_stats(mask: &PatchMask) -> PruneStats {
    let total = mask.len();
    let kept = mask.retained();
    let r = if total == 0 { 0.0 } else { kept as f64 / total as f64 };
    PruneStats {
        total,
        kept,
        pruned: total - kept,
        retained_ratio: r,
        attention_cost_ratio: r * r,
    }
}
