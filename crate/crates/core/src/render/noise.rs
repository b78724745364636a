//! Additive gray-level noise fields.
//!
//! Radial, horizontal and vertical noise scale an i.i.d. Gaussian field by an
//! envelope that grows linearly with distance from a center point (or
//! center column / row), reaching 1 at the farthest pixel. Multi-Gaussian
//! noise is a smooth sum of Gaussian blobs with random centers, widths and
//! signed weights. High-frequency noise is plain i.i.d. Gaussian.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::canvas::{sha256_hex, PixelCanvas};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    None,
    Radial,
    Horizontal,
    Vertical,
    MultiGaussian,
    HighFreqGaussian,
}

impl std::str::FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown noise kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Standard deviation in gray levels (peak blob weight for multi-gaussian).
    pub amplitude: f64,
    /// Envelope center as fractions of width and height.
    pub center: (f64, f64),
    /// Blob count for multi-gaussian.
    pub components: usize,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKind::None,
            amplitude: 8.0,
            center: (0.5, 0.5),
            components: 3,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, amplitude: f64, seed: u64) -> Self {
        Self {
            kind,
            amplitude,
            seed,
            ..Self::default()
        }
    }

    fn is_identity(&self) -> bool {
        self.kind == NoiseKind::None || self.amplitude <= 0.0 || !self.amplitude.is_finite()
    }
}

struct Blob {
    cx: f64,
    cy: f64,
    sigma: f64,
    weight: f64,
}

/// Adds the noise field to every channel, rounding and clamping to [0, 255].
pub fn apply_noise(canvas: &PixelCanvas, noise: &NoiseSpec) -> PixelCanvas {
    if noise.is_identity() {
        return canvas.clone();
    }
    let (w, h) = (canvas.width as usize, canvas.height as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let field = match noise.kind {
        NoiseKind::None => unreachable!(),
        NoiseKind::HighFreqGaussian => gaussian(&mut rng, w * h, |_, _| 1.0, w),
        NoiseKind::Radial | NoiseKind::Horizontal | NoiseKind::Vertical => {
            let cx = noise.center.0 * (w - 1) as f64;
            let cy = noise.center.1 * (h - 1) as f64;
            let dist = |x: f64, y: f64| match noise.kind {
                NoiseKind::Radial => ((x - cx).powi(2) + (y - cy).powi(2)).sqrt(),
                NoiseKind::Horizontal => (x - cx).abs(),
                _ => (y - cy).abs(),
            };
            let corners = [(0.0, 0.0), ((w - 1) as f64, 0.0), (0.0, (h - 1) as f64), ((w - 1) as f64, (h - 1) as f64)];
            let far = corners
                .iter()
                .map(|&(x, y)| dist(x, y))
                .fold(0.0f64, f64::max)
                .max(1.0);
            gaussian(&mut rng, w * h, |x, y| dist(x as f64, y as f64) / far, w)
        }
        NoiseKind::MultiGaussian => {
            let short = w.min(h) as f64;
            let blobs: Vec<Blob> = (0..noise.components.max(1))
                .map(|_| Blob {
                    cx: rng.random_range(0.0..w as f64),
                    cy: rng.random_range(0.0..h as f64),
                    sigma: short * rng.random_range(0.1..0.3),
                    weight: StandardNormal.sample(&mut rng),
                })
                .collect();
            (0..w * h)
                .map(|i| {
                    let (x, y) = ((i % w) as f64, (i / w) as f64);
                    blobs
                        .iter()
                        .map(|b| {
                            let r2 = (x - b.cx).powi(2) + (y - b.cy).powi(2);
                            b.weight * (-r2 / (2.0 * b.sigma * b.sigma)).exp()
                        })
                        .sum::<f64>()
                })
                .collect()
        }
    };
    let ch = canvas.channels as usize;
    let pixels = canvas
        .pixels
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let n = noise.amplitude * field[i / ch];
            (v as f64 + n).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    let mut out = canvas.clone();
    out.pixels = pixels;
    out.provenance.noise_sha256 = Some(sha256_hex(
        &serde_json::to_vec(noise).expect("noise spec serializes"),
    ));
    out
}

fn gaussian(
    rng: &mut ChaCha8Rng,
    n: usize,
    envelope: impl Fn(usize, usize) -> f64,
    width: usize,
) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let z: f64 = StandardNormal.sample(rng);
            z * envelope(i % width, i / width)
        })
        .collect()
}
