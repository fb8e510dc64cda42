use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapter::{AdapterConfig, AdapterToggles};
use crate::backbone::{BackboneConfig, BackboneKind};
use crate::error::{Error, Result};

/// Every knob of training, evaluation and retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub rounds: usize,
    pub lambda: f64,
    /// Items added to the context pool per round during training.
    pub k_ctx: usize,
    /// Sampled negatives per positive (ignored with `full_vocab`).
    pub n_neg: usize,
    /// Score every item in the loss instead of sampling negatives.
    pub full_vocab: bool,
    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_len: usize,
    pub dim: usize,
    pub backbone: BackboneKind,
    #[serde(flatten)]
    pub toggles: AdapterToggles,
    pub seed: u64,
    pub eval_k: usize,
    pub dropout: f64,
    pub blocks: usize,
    pub heads: usize,
    pub cat_projections: bool,
    /// Keep the ground-truth item out of training-time context pools.
    pub ctx_exclude_target: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            lambda: 0.3,
            k_ctx: 10,
            n_neg: 1,
            full_vocab: false,
            epochs: 200,
            patience: 10,
            lr: 1e-3,
            batch_size: 1024,
            max_len: 50,
            dim: 64,
            backbone: BackboneKind::Transformer,
            toggles: AdapterToggles::default(),
            seed: 42,
            eval_k: 50,
            dropout: 0.2,
            blocks: 2,
            heads: 2,
            cat_projections: false,
            ctx_exclude_target: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.rounds == 0 {
            return fail("rounds must be at least 1".into());
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return fail(format!("lambda must lie in (0, 1], got {}", self.lambda));
        }
        if self.k_ctx == 0 {
            return fail("k_ctx must be at least 1".into());
        }
        if !self.full_vocab && self.n_neg == 0 {
            return fail("n_neg must be at least 1 unless full_vocab is set".into());
        }
        if self.batch_size == 0 || self.max_len == 0 || self.dim == 0 {
            return fail("batch_size, max_len and dim must be positive".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be a non-negative number, got {}", self.lr));
        }
        if self.eval_k < self.rounds {
            return fail(format!("eval_k {} is smaller than rounds {}", self.eval_k, self.rounds));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.backbone == BackboneKind::Transformer && (self.heads == 0 || !self.dim.is_multiple_of(self.heads)) {
            return fail(format!("dim {} is not divisible by {} heads", self.dim, self.heads));
        }
        Ok(())
    }

    /// Context slots seen by the item adapter.
    pub fn c_max(&self) -> usize {
        (self.rounds - 1) * self.k_ctx
    }

    pub fn backbone_config(&self, n_items: usize) -> BackboneConfig {
        BackboneConfig {
            kind: self.backbone,
            n_items,
            dim: self.dim,
            max_len: self.max_len,
            blocks: self.blocks,
            heads: self.heads,
            dropout: self.dropout,
            ffn_mult: 4,
            ffn: true,
        }
    }

    pub fn adapter_config(&self) -> AdapterConfig {
        AdapterConfig {
            dim: self.dim,
            c_max: self.c_max(),
            dropout: self.dropout,
            cat_projections: self.cat_projections,
        }
    }

    /// Short stable digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Items retrieved in each of `rounds` rounds for a list of `k`: `k / rounds`
/// each, with the remainder spread over the earliest rounds.
pub fn round_sizes(k: usize, rounds: usize) -> Vec<usize> {
    let rounds = rounds.max(1);
    (0..rounds).map(|t| k / rounds + usize::from(t < k % rounds)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_sizes_split_evenly() {
        assert_eq!(round_sizes(50, 5), vec![10; 5]);
        assert_eq!(round_sizes(50, 3), vec![17, 17, 16]);
        assert_eq!(round_sizes(4, 2), vec![2, 2]);
    }

    #[test]
    fn validation_and_hash() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!(c.c_max(), 40);
        assert_eq!(c.hash(), c.clone().hash());
        let other = TrainConfig {
            lambda: 0.5,
            ..c.clone()
        };
        assert_ne!(c.hash(), other.hash());
        assert!(TrainConfig {
            lambda: 0.0,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig { rounds: 0, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { dim: 63, ..c }.validate().is_err());
    }
}
