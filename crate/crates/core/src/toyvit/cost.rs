use serde::{Deserialize, Serialize};

use super::ToyViTConfig;

/// Floating point operation counts of one forward pass, split by stage.
/// A multiply-add counts as two operations; normalization, softmax and
/// activation costs are not counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounter {
    pub embed: u64,
    /// `Q K^T` and `A V` products, the only terms quadratic in length.
    pub attention: u64,
    /// Q, K, V and output projections.
    pub projection: u64,
    pub mlp: u64,
}

impl CostCounter {
    pub fn total(&self) -> u64 {
        self.embed + self.attention + self.projection + self.mlp
    }

    /// Records an `(m x k) * (k x n)` product.
    pub(crate) fn matmul(slot: &mut u64, m: usize, k: usize, n: usize) {
        *slot += 2 * (m * k * n) as u64;
    }
}

/// Closed-form cost of a forward pass over `seq_len` tokens.
pub fn count_cost(seq_len: usize, cfg: &ToyViTConfig) -> CostCounter {
    let n = seq_len as u64;
    let d = cfg.embed_dim as u64;
    let hidden = d * cfg.mlp_ratio as u64;
    let layers = cfg.layers as u64;
    CostCounter {
        embed: 2 * n * cfg.patch_dim() as u64 * d,
        attention: layers * 4 * n * n * d,
        projection: layers * 8 * n * d * d,
        mlp: layers * 4 * n * d * hidden,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attention_is_quadratic() {
        let cfg = ToyViTConfig::default();
        let full = count_cost(1024, &cfg);
        let half = count_cost(512, &cfg);
        assert_eq!(full.attention, 4 * half.attention);
        assert_eq!(full.mlp, 2 * half.mlp);
    }

    #[test]
    fn single_token() {
        let cfg = ToyViTConfig::default();
        let one = count_cost(1, &cfg);
        let two = count_cost(2, &cfg);
        // 4 layers * 4 * 1 * 1 * 128
        assert_eq!(one.attention, 2048);
        assert_eq!(two.mlp - one.mlp, one.mlp);
        assert_eq!(one.mlp, 4 * 4 * 128 * 512);
    }
}
