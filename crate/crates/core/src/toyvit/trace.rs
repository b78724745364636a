//! Attention traces and last-layer attention heatmaps.
//!
//! A trace stores, per captured layer and head, the row-stochastic matrix
//! `A[t, i]` of query `t` attending to key `i`, along with the grid
//! coordinate of every token. The heatmap weight of key position `i` is the
//! head mean of `|A[t, i]|` in the last layer, averaged over query steps `t`
//! in a half-open range. Grid cells with no token (pruned patches) read 0.
//!
//! JSON dump format, used for fixtures:
//!
//! ```json
//! {"grid_rows": 1, "grid_cols": 2, "positions": [[0, 0], [0, 1]],
//!  "first_layer": 0,
//!  "layers": [[{"rows": 1, "cols": 2, "data": [0.2, 0.8]}]]}
//! ```

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::PixelCanvas;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AttnMatrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> AttnMatrix<T> {
    pub fn from_array(a: &Array2<T>) -> Self {
        Self {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.iter().copied().collect(),
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged attention rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn get(&self, t: usize, i: usize) -> T {
        self.data[t * self.cols + i]
    }

    pub fn row(&self, t: usize) -> &[T] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AttentionTrace<T> {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Grid coordinate of each token, indexing both queries and keys.
    pub positions: Vec<(usize, usize)>,
    /// Model layer index of `layers[0]`.
    pub first_layer: usize,
    /// `layers[layer][head]`.
    pub layers: Vec<Vec<AttnMatrix<T>>>,
}

impl<T: Scalar> AttentionTrace<T> {
    /// Trace holding only a final layer, as used by fixtures.
    pub fn from_last_layer(
        grid_rows: usize,
        grid_cols: usize,
        positions: Vec<(usize, usize)>,
        heads: Vec<AttnMatrix<T>>,
    ) -> Self {
        Self {
            grid_rows,
            grid_cols,
            positions,
            first_layer: 0,
            layers: vec![heads],
        }
    }

    pub fn last_layer(&self) -> Option<&[AttnMatrix<T>]> {
        self.layers.last().map(Vec::as_slice)
    }

    /// Number of query steps in the last layer.
    pub fn steps(&self) -> usize {
        self.last_layer()
            .and_then(|h| h.first())
            .map_or(0, |m| m.rows)
    }

    /// Largest deviation of any row sum from 1, or `f64::INFINITY` if an
    /// entry is negative or not finite.
    pub fn max_row_sum_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for m in self.layers.iter().flatten() {
            for t in 0..m.rows {
                let row = m.row(t);
                if row.iter().any(|v| !(v.as_f64() >= 0.0) || !v.is_finite()) {
                    return f64::INFINITY;
                }
                let sum: f64 = row.iter().map(|v| v.as_f64()).sum();
                worst = worst.max((sum - 1.0).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    /// Row-major per-cell weight.
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

fn step_weights<T: Scalar>(trace: &AttentionTrace<T>, t: usize) -> Vec<f64> {
    let heads = trace.last_layer().unwrap_or(&[]);
    let h = heads.len() as f64;
    let keys = heads.first().map_or(0, |m| m.cols);
    (0..keys)
        .map(|i| heads.iter().map(|m| m.get(t, i).as_f64().abs()).sum::<f64>() / h)
        .collect()
}

fn scatter<T: Scalar>(trace: &AttentionTrace<T>, weights: &[f64]) -> Heatmap {
    let mut values = vec![0.0; trace.grid_rows * trace.grid_cols];
    for (&(r, c), &w) in trace.positions.iter().zip(weights) {
        values[r * trace.grid_cols + c] = w;
    }
    Heatmap {
        rows: trace.grid_rows,
        cols: trace.grid_cols,
        values,
    }
}

fn check_range<T: Scalar>(trace: &AttentionTrace<T>, start: usize, end: usize) -> Result<()> {
    let steps = trace.steps();
    if start >= end || end > steps {
        return Err(Error::EmptyRange { start, end, steps });
    }
    Ok(())
}

/// Head-mean last-layer attention per key position, averaged over query
/// steps `start..end`.
pub fn heatmap<T: Scalar>(trace: &AttentionTrace<T>, start: usize, end: usize) -> Result<Heatmap> {
    check_range(trace, start, end)?;
    let keys = trace.positions.len();
    let mut acc = vec![0.0; keys];
    for t in start..end {
        for (a, w) in acc.iter_mut().zip(step_weights(trace, t)) {
            *a += w;
        }
    }
    let steps = (end - start) as f64;
    acc.iter_mut().for_each(|a| *a /= steps);
    Ok(scatter(trace, &acc))
}

/// One heatmap per query step in `start..end`.
pub fn heatmap_per_step<T: Scalar>(
    trace: &AttentionTrace<T>,
    start: usize,
    end: usize,
) -> Result<Vec<Heatmap>> {
    check_range(trace, start, end)?;
    Ok((start..end)
        .map(|t| scatter(trace, &step_weights(trace, t)))
        .collect())
}

/// Blue to red ramp through cyan, green and yellow.
fn colormap(v: f64) -> [f64; 3] {
    let stops = [
        [0.0, 0.0, 255.0],
        [0.0, 255.0, 255.0],
        [0.0, 255.0, 0.0],
        [255.0, 255.0, 0.0],
        [255.0, 0.0, 0.0],
    ];
    let x = v.clamp(0.0, 1.0) * (stops.len() - 1) as f64;
    let i = (x.floor() as usize).min(stops.len() - 2);
    let f = x - i as f64;
    [0, 1, 2].map(|c| stops[i][c] * (1.0 - f) + stops[i + 1][c] * f)
}

/// Alpha-blends the heatmap over `canvas`, one colored block per patch.
/// Values are scaled by the maximum; cells with weight 0 are left untouched.
pub fn overlay(canvas: &PixelCanvas, map: &Heatmap, patch_size: u32, alpha: f64) -> PixelCanvas {
    let mut out = canvas.to_rgb();
    let max = map.values.iter().copied().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return out;
    }
    let ps = patch_size as usize;
    for y in 0..out.height as usize {
        let r = y / ps;
        if r >= map.rows {
            break;
        }
        for x in 0..out.width as usize {
            let c = x / ps;
            if c >= map.cols {
                break;
            }
            let v = map.get(r, c);
            if v <= 0.0 {
                continue;
            }
            let color = colormap(v / max);
            let o = out.offset(x as u32, y as u32);
            for ch in 0..3 {
                let base = out.pixels[o + ch] as f64;
                out.pixels[o + ch] = (base * (1.0 - alpha) + color[ch] * alpha).round() as u8;
            }
        }
    }
    out
}
