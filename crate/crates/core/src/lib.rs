//! Pixel-based prompting toolkit.
//!
//! Renders text and tables into grayscale canvases, detects and prunes blank
//! patches while keeping their original grid coordinates, checks pruning
//! against a small seeded patch transformer, and drives zero-shot evaluations
//! of chat-style model endpoints across text, image, semi and pruned-image
//! input modes.
//!
//! The transformer and its attention traces are generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below fix the precision for common use.

pub mod error;
pub mod harness;
pub mod metrics;
pub mod patchgrid;
pub mod render;
pub mod scalar;
pub mod toyvit;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision transformer, used wherever results are compared exactly.
pub type ToyViT64 = toyvit::ToyViT<f64>;
/// Single-precision transformer for throughput measurements.
pub type ToyViT32 = toyvit::ToyViT<f32>;
pub type Tokens64 = toyvit::Tokens<f64>;
pub type Tokens32 = toyvit::Tokens<f32>;
pub type AttentionTrace64 = toyvit::AttentionTrace<f64>;
pub type AttentionTrace32 = toyvit::AttentionTrace<f32>;
