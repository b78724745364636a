//! Seeded pre-norm patch transformer used as an executable reference.
//!
//! Tokens carry the grid coordinate of the patch they came from, and the
//! 2-D sinusoidal positional code is computed from that coordinate, so a
//! pruned sequence embeds every surviving patch exactly as the full grid
//! does. Attention is the only place tokens interact; removing a token from
//! the sequence and masking it as a key are therefore equivalent for the
//! tokens that remain.

mod cost;
mod trace;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use cost::{count_cost, CostCounter};
pub use trace::{heatmap, heatmap_per_step, overlay, AttnMatrix, AttentionTrace, Heatmap};

use crate::error::{Error, Result};
use crate::patchgrid::{PatchGrid, PatchMask, PrunedSequence};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Single,
    #[default]
    Double,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyViTConfig {
    pub embed_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub mlp_ratio: usize,
    pub patch_size: u32,
    pub channels: u8,
    pub max_rows: usize,
    pub max_cols: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for ToyViTConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            heads: 4,
            layers: 4,
            mlp_ratio: 4,
            patch_size: 28,
            channels: 1,
            max_rows: 64,
            max_cols: 64,
            seed: 0,
            precision: Precision::Double,
        }
    }
}

impl ToyViTConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.heads == 0 || self.embed_dim == 0 || self.embed_dim % self.heads != 0 {
            return bad(format!(
                "embed_dim {} is not divisible by {} heads",
                self.embed_dim, self.heads
            ));
        }
        if self.embed_dim % 4 != 0 {
            return bad(format!(
                "embed_dim {} must be a multiple of 4 for the 2-D positional code",
                self.embed_dim
            ));
        }
        if self.layers == 0 {
            return bad("at least one layer is required".into());
        }
        if self.mlp_ratio == 0 || self.patch_size == 0 {
            return bad("mlp_ratio and patch_size must be positive".into());
        }
        if self.channels != 1 && self.channels != 3 {
            return bad(format!("{} channels", self.channels));
        }
        if self.max_rows == 0 || self.max_cols == 0 {
            return bad("positional grid must be non-empty".into());
        }
        Ok(())
    }

    pub fn patch_dim(&self) -> usize {
        (self.patch_size * self.patch_size) as usize * self.channels as usize
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let d = self.embed_dim;
        let hidden = d * self.mlp_ratio;
        let block = 2 * d + 4 * (d * d + d) + 2 * d + (d * hidden + hidden) + (hidden * d + d);
        (self.patch_dim() * d + d) + self.layers * block + 2 * d
    }
}

/// 2-D sinusoidal code: the first half of the vector encodes the row, the
/// second half the column, each with the usual sine/cosine frequency ladder.
pub fn positional_code(row: usize, col: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut code = Vec::with_capacity(dim);
    for pos in [row, col] {
        for k in 0..half / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * k as f64 / half as f64);
            let angle = pos as f64 * freq;
            code.push(angle.sin());
            code.push(angle.cos());
        }
    }
    code
}

#[derive(Debug, Clone)]
struct Linear<T> {
    weight: Array2<T>,
    bias: Array1<T>,
}

impl<T: Scalar> Linear<T> {
    fn init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        let std = 1.0 / (fan_in as f64).sqrt();
        let mut normal = || -> f64 { StandardNormal.sample(rng) };
        let weight = Array2::from_shape_fn((fan_in, fan_out), |_| T::of(std * normal()));
        let bias = Array1::from_shape_fn(fan_out, |_| T::of(0.02 * normal()));
        Self { weight, bias }
    }

    fn apply(&self, x: ArrayView2<'_, T>, slot: &mut u64) -> Array2<T> {
        CostCounter::matmul(slot, x.nrows(), self.weight.nrows(), self.weight.ncols());
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }

    fn params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone)]
struct LayerNorm<T> {
    gamma: Array1<T>,
    beta: Array1<T>,
}

impl<T: Scalar> LayerNorm<T> {
    fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::from_elem(dim, T::one()),
            beta: Array1::zeros(dim),
        }
    }

    fn apply(&self, x: &Array2<T>) -> Array2<T> {
        let eps = T::of(1e-5);
        let d = T::of(x.ncols() as f64);
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            let mean = row.sum() / d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).fold(T::zero(), |a, b| a + b) / d;
            let inv = T::one() / (var + eps).sqrt();
            row.iter_mut()
                .zip(self.gamma.iter().zip(self.beta.iter()))
                .for_each(|(v, (&g, &b))| *v = (*v - mean) * inv * g + b);
        }
        out
    }

    fn params(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }
}

#[derive(Debug, Clone)]
struct Block<T> {
    ln1: LayerNorm<T>,
    q: Linear<T>,
    k: Linear<T>,
    v: Linear<T>,
    o: Linear<T>,
    ln2: LayerNorm<T>,
    fc1: Linear<T>,
    fc2: Linear<T>,
}

fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + T::of(0.044715) * x * x * x)).tanh())
}

/// Which attention matrices a forward pass keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capture {
    None,
    LastLayer,
    All,
}

/// Embedded token states with the grid coordinate each token came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Tokens<T> {
    pub states: Array2<T>,
    pub positions: Vec<(usize, usize)>,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl<T: Scalar> Tokens<T> {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Tokens whose entry in `keep` is true, in their current order.
    pub fn select(&self, keep: &[bool]) -> Result<Tokens<T>> {
        if keep.len() != self.len() {
            return Err(Error::MaskMismatch {
                mask: keep.len(),
                expected: self.len(),
            });
        }
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        Ok(self.gather(&idx))
    }

    /// Tokens reordered (or subset) by storage index.
    pub fn gather(&self, order: &[usize]) -> Tokens<T> {
        Tokens {
            states: self.states.select(Axis(0), order),
            positions: order.iter().map(|&i| self.positions[i]).collect(),
            grid_rows: self.grid_rows,
            grid_cols: self.grid_cols,
        }
    }
}

pub struct ForwardOutput<T> {
    pub hidden: Array2<T>,
    pub trace: AttentionTrace<T>,
}

#[derive(Debug, Clone)]
pub struct ToyViT<T> {
    cfg: ToyViTConfig,
    patch_proj: Linear<T>,
    blocks: Vec<Block<T>>,
    ln_f: LayerNorm<T>,
}

impl<T: Scalar> ToyViT<T> {
    /// Draws every weight from a ChaCha stream seeded with `cfg.seed`.
    /// Weights are sampled in `f64` and rounded, so `f32` and `f64` models
    /// with the same seed agree up to rounding.
    pub fn new(cfg: ToyViTConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = cfg.embed_dim;
        let hidden = d * cfg.mlp_ratio;
        let patch_proj = Linear::init(&mut rng, cfg.patch_dim(), d);
        let blocks = (0..cfg.layers)
            .map(|_| Block {
                ln1: LayerNorm::new(d),
                q: Linear::init(&mut rng, d, d),
                k: Linear::init(&mut rng, d, d),
                v: Linear::init(&mut rng, d, d),
                o: Linear::init(&mut rng, d, d),
                ln2: LayerNorm::new(d),
                fc1: Linear::init(&mut rng, d, hidden),
                fc2: Linear::init(&mut rng, hidden, d),
            })
            .collect();
        Ok(Self {
            patch_proj,
            blocks,
            ln_f: LayerNorm::new(d),
            cfg,
        })
    }

    pub fn config(&self) -> &ToyViTConfig {
        &self.cfg
    }

    pub fn param_count(&self) -> usize {
        let blocks: usize = self
            .blocks
            .iter()
            .map(|b| {
                b.ln1.params()
                    + b.q.params()
                    + b.k.params()
                    + b.v.params()
                    + b.o.params()
                    + b.ln2.params()
                    + b.fc1.params()
                    + b.fc2.params()
            })
            .sum();
        self.patch_proj.params() + blocks + self.ln_f.params()
    }

    /// Sum of the patch projection weights.
    pub fn weight_checksum(&self) -> f64 {
        self.patch_proj.weight.iter().map(|w| w.as_f64()).sum()
    }

    pub fn projection_bias(&self) -> Vec<T> {
        self.patch_proj.bias.to_vec()
    }

    pub fn embed_grid(&self, grid: &PatchGrid) -> Result<Tokens<T>> {
        self.check_patch_shape(grid.patch_size, grid.channels)?;
        self.embed_items(
            grid.rows,
            grid.cols,
            grid.patches.iter().map(|p| (p.row, p.col, p.pixels.as_slice())),
            None,
        )
    }

    pub fn embed_sequence(&self, seq: &PrunedSequence) -> Result<Tokens<T>> {
        self.embed_sequence_counted(seq, None)
    }

    pub fn embed_sequence_counted(
        &self,
        seq: &PrunedSequence,
        counter: Option<&mut CostCounter>,
    ) -> Result<Tokens<T>> {
        self.check_patch_shape(seq.patch_size, seq.channels)?;
        self.embed_items(
            seq.rows,
            seq.cols,
            seq.tokens.iter().map(|t| (t.row, t.col, t.pixels.as_slice())),
            counter,
        )
    }

    fn check_patch_shape(&self, patch_size: u32, channels: u8) -> Result<()> {
        if patch_size != self.cfg.patch_size || channels != self.cfg.channels {
            return Err(Error::InvalidConfig(format!(
                "model expects {0}x{0}x{1} patches, got {2}x{2}x{3}",
                self.cfg.patch_size, self.cfg.channels, patch_size, channels
            )));
        }
        Ok(())
    }

    /// Linear projection of `pixel / 255` plus the positional code of the
    /// token's own coordinate.
    fn embed_items<'a>(
        &self,
        grid_rows: usize,
        grid_cols: usize,
        items: impl Iterator<Item = (usize, usize, &'a [u8])>,
        counter: Option<&mut CostCounter>,
    ) -> Result<Tokens<T>> {
        let dim = self.cfg.patch_dim();
        let mut positions = Vec::new();
        let mut raw = Vec::new();
        for (row, col, pixels) in items {
            if row >= self.cfg.max_rows || col >= self.cfg.max_cols {
                return Err(Error::CoordinateOutOfRange {
                    row,
                    col,
                    max_rows: self.cfg.max_rows,
                    max_cols: self.cfg.max_cols,
                });
            }
            positions.push((row, col));
            raw.extend(pixels.iter().map(|&p| T::of(p as f64 / 255.0)));
        }
        let n = positions.len();
        let x = Array2::from_shape_vec((n, dim), raw).expect("patch buffers have patch_dim samples");
        let mut scratch = 0u64;
        let slot = match counter {
            Some(c) => &mut c.embed,
            None => &mut scratch,
        };
        let mut states = self.patch_proj.apply(x.view(), slot);
        for (mut row, &(r, c)) in states.rows_mut().into_iter().zip(&positions) {
            for (v, p) in row.iter_mut().zip(positional_code(r, c, self.cfg.embed_dim)) {
                *v = *v + T::of(p);
            }
        }
        Ok(Tokens {
            states,
            positions,
            grid_rows,
            grid_cols,
        })
    }

    /// Full forward pass capturing every layer's attention.
    pub fn forward(&self, tokens: &Tokens<T>) -> Result<(Array2<T>, AttentionTrace<T>)> {
        let out = self.forward_with(tokens, None, Capture::All, None)?;
        Ok((out.hidden, out.trace))
    }

    /// Forward pass over all tokens in which blank entries of `mask` are
    /// excluded as attention keys in every layer and head. Masked tokens
    /// still produce output rows.
    pub fn forward_masked(&self, tokens: &Tokens<T>, mask: &PatchMask) -> Result<Array2<T>> {
        if mask.len() != tokens.len() {
            return Err(Error::MaskMismatch {
                mask: mask.len(),
                expected: tokens.len(),
            });
        }
        let keys: Vec<bool> = mask.kept().collect();
        Ok(self.forward_with(tokens, Some(&keys), Capture::None, None)?.hidden)
    }

    /// General forward pass. `key_mask[j] == false` removes token `j` as a key.
    pub fn forward_with(
        &self,
        tokens: &Tokens<T>,
        key_mask: Option<&[bool]>,
        capture: Capture,
        mut counter: Option<&mut CostCounter>,
    ) -> Result<ForwardOutput<T>> {
        let n = tokens.len();
        if n == 0 {
            return Err(Error::EmptySequence);
        }
        if let Some(keys) = key_mask {
            if keys.len() != n {
                return Err(Error::MaskMismatch {
                    mask: keys.len(),
                    expected: n,
                });
            }
            if !keys.iter().any(|&k| k) {
                return Err(Error::EmptySequence);
            }
        }
        let mut local = CostCounter::default();
        let cost = counter.as_deref_mut().unwrap_or(&mut local);
        let d = self.cfg.embed_dim;
        let dh = self.cfg.head_dim();
        let scale = T::one() / T::of(dh as f64).sqrt();
        let mut layers_trace = Vec::new();
        let mut x = tokens.states.clone();
        for (li, block) in self.blocks.iter().enumerate() {
            let keep_trace = match capture {
                Capture::None => false,
                Capture::LastLayer => li + 1 == self.blocks.len(),
                Capture::All => true,
            };
            let h = block.ln1.apply(&x);
            let q = block.q.apply(h.view(), &mut cost.projection);
            let k = block.k.apply(h.view(), &mut cost.projection);
            let v = block.v.apply(h.view(), &mut cost.projection);
            let mut ctx = Array2::<T>::zeros((n, d));
            let mut heads_trace = Vec::new();
            for head in 0..self.cfg.heads {
                let cols = s![.., head * dh..(head + 1) * dh];
                let (qh, kh, vh) = (q.slice(cols), k.slice(cols), v.slice(cols));
                CostCounter::matmul(&mut cost.attention, n, dh, n);
                let mut scores = qh.dot(&kh.t());
                for mut row in scores.rows_mut() {
                    softmax_row(row.as_slice_mut().expect("contiguous"), scale, key_mask);
                }
                CostCounter::matmul(&mut cost.attention, n, n, dh);
                ctx.slice_mut(cols).assign(&scores.dot(&vh));
                if keep_trace {
                    heads_trace.push(AttnMatrix::from_array(&scores));
                }
            }
            if keep_trace {
                layers_trace.push(heads_trace);
            }
            x = x + block.o.apply(ctx.view(), &mut cost.projection);
            let h = block.ln2.apply(&x);
            let mut hidden = block.fc1.apply(h.view(), &mut cost.mlp);
            hidden.mapv_inplace(gelu);
            x = x + block.fc2.apply(hidden.view(), &mut cost.mlp);
        }
        let first_layer = match capture {
            Capture::LastLayer => self.blocks.len() - 1,
            _ => 0,
        };
        Ok(ForwardOutput {
            hidden: self.ln_f.apply(&x),
            trace: AttentionTrace {
                grid_rows: tokens.grid_rows,
                grid_cols: tokens.grid_cols,
                positions: tokens.positions.clone(),
                first_layer,
                layers: layers_trace,
            },
        })
    }
}

/// In-place scaled softmax over allowed keys; disallowed keys get exactly 0.
fn softmax_row<T: Scalar>(row: &mut [T], scale: T, key_mask: Option<&[bool]>) {
    let allowed = |j: usize| key_mask.map_or(true, |m| m[j]);
    let mut max = T::neg_infinity();
    for (j, v) in row.iter_mut().enumerate() {
        if allowed(j) {
            *v = *v * scale;
            if *v > max {
                max = *v;
            }
        } else {
            *v = T::neg_infinity();
        }
    }
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = if *v == T::neg_infinity() { T::zero() } else { (*v - max).exp() };
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}
