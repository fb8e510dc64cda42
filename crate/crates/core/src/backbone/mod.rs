//! Item embeddings, sequence encoders and dot-product scoring.

mod encoders;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compute::{uniform_fan_in, Bound, Graph, ParamSet, Rng, Scalar, Tensor, Var};
use crate::data::PAD;
use crate::error::{Error, Result};

pub use encoders::{encode_filter_mlp, encode_gru, encode_transformer, last_position, transformer_states};

/// Name of the item embedding table, shape `[n_items + 1, d]`.
pub const ITEM_EMB: &str = "item_emb";

/// Score given to excluded items and the pad.
pub const EXCLUDED_SCORE: f64 = f64::NEG_INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    Transformer,
    Gru,
    FilterMlp,
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackboneKind::Transformer => "transformer",
            BackboneKind::Gru => "gru",
            BackboneKind::FilterMlp => "filter_mlp",
        })
    }
}

impl FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transformer" => Ok(BackboneKind::Transformer),
            "gru" => Ok(BackboneKind::Gru),
            "filter_mlp" => Ok(BackboneKind::FilterMlp),
            other => Err(Error::Config(format!(
                "unknown backbone `{other}` (expected transformer, gru or filter_mlp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    pub n_items: usize,
    pub dim: usize,
    pub max_len: usize,
    pub blocks: usize,
    pub heads: usize,
    pub dropout: f64,
    /// Feed-forward inner width as a multiple of `dim`.
    pub ffn_mult: usize,
    /// Filter-MLP blocks include the feed-forward sublayer.
    pub ffn: bool,
}

impl BackboneConfig {
    pub fn new(kind: BackboneKind, n_items: usize, dim: usize, max_len: usize) -> Self {
        Self {
            kind,
            n_items,
            dim,
            max_len,
            blocks: 2,
            heads: 2,
            dropout: 0.2,
            ffn_mult: 4,
            ffn: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.max_len == 0 || self.n_items == 0 {
            return Err(Error::Config("dim, max_len and n_items must be positive".into()));
        }
        if self.kind == BackboneKind::Transformer && (self.heads == 0 || !self.dim.is_multiple_of(self.heads)) {
            return Err(Error::Config(format!(
                "dim {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::DropoutProbability(self.dropout));
        }
        Ok(())
    }
}

fn ln_params<T: Scalar>(p: &mut ParamSet<T>, prefix: &str, d: usize) {
    p.insert(format!("{prefix}.g"), Tensor::full([d], T::one()));
    p.insert(format!("{prefix}.b"), Tensor::zeros([d]));
}

pub(crate) fn dense_params<T: Scalar>(p: &mut ParamSet<T>, prefix: &str, din: usize, dout: usize, rng: &mut Rng) {
    p.insert(format!("{prefix}.w"), uniform_fan_in(&[din, dout], din, rng));
    p.insert(format!("{prefix}.b"), uniform_fan_in(&[dout], din, rng));
}

pub(crate) fn gru_params<T: Scalar>(p: &mut ParamSet<T>, prefix: &str, din: usize, h: usize, rng: &mut Rng) {
    p.insert(format!("{prefix}.w_ih"), uniform_fan_in(&[din, 3 * h], h, rng));
    p.insert(format!("{prefix}.w_hh"), uniform_fan_in(&[h, 3 * h], h, rng));
    p.insert(format!("{prefix}.b_ih"), Tensor::zeros([3 * h]));
    p.insert(format!("{prefix}.b_hh"), Tensor::zeros([3 * h]));
}

pub(crate) fn layer_norm<T: Scalar>(g: &mut Graph<T>, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let gamma = p.get(&format!("{prefix}.g"))?;
    let beta = p.get(&format!("{prefix}.b"))?;
    g.layer_norm(x, gamma, beta, crate::compute::DEFAULT_LN_EPS)
}

pub(crate) fn linear<T: Scalar>(g: &mut Graph<T>, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let y = g.matmul(x, p.get(&format!("{prefix}.w"))?)?;
    g.add_bias(y, p.get(&format!("{prefix}.b"))?)
}

/// Fresh backbone parameters (embedding table included).
pub fn init_backbone<T: Scalar>(cfg: &BackboneConfig, rng: &mut Rng) -> Result<ParamSet<T>> {
    cfg.validate()?;
    let d = cfg.dim;
    let mut p = ParamSet::new();
    let mut emb: Tensor<T> = uniform_fan_in(&[cfg.n_items + 1, d], d, rng);
    emb.row_mut(PAD).iter_mut().for_each(|v| *v = T::zero());
    p.insert(ITEM_EMB, emb);
    let inner = cfg.ffn_mult * d;
    match cfg.kind {
        BackboneKind::Transformer => {
            p.insert("tf.pos", uniform_fan_in(&[cfg.max_len, d], d, rng));
            for i in 0..cfg.blocks {
                for proj in ["q", "k", "v", "o"] {
                    dense_params(&mut p, &format!("tf.{i}.{proj}"), d, d, rng);
                }
                ln_params(&mut p, &format!("tf.{i}.ln1"), d);
                dense_params(&mut p, &format!("tf.{i}.ff1"), d, inner, rng);
                dense_params(&mut p, &format!("tf.{i}.ff2"), inner, d, rng);
                ln_params(&mut p, &format!("tf.{i}.ln2"), d);
            }
        }
        BackboneKind::Gru => gru_params(&mut p, "gru", d, d, rng),
        BackboneKind::FilterMlp => {
            let nb = cfg.max_len / 2 + 1;
            for i in 0..cfg.blocks {
                p.insert(format!("fm.{i}.filter_re"), Tensor::full([nb, d], T::one()));
                p.insert(format!("fm.{i}.filter_im"), Tensor::zeros([nb, d]));
                ln_params(&mut p, &format!("fm.{i}.ln1"), d);
                if cfg.ffn {
                    dense_params(&mut p, &format!("fm.{i}.ff1"), d, inner, rng);
                    dense_params(&mut p, &format!("fm.{i}.ff2"), inner, d, rng);
                    ln_params(&mut p, &format!("fm.{i}.ln2"), d);
                }
            }
        }
    }
    Ok(p)
}

/// Gathers item embeddings for row-major `ids: [rows, len]`, giving
/// `[rows, len, d]`.
pub fn embed_sequence<T: Scalar>(g: &mut Graph<T>, table: Var, ids: &[usize], rows: usize, len: usize) -> Result<Var> {
    let n_rows = g.shape(table)[0];
    if let Some(&id) = ids.iter().find(|&&i| i >= n_rows) {
        return Err(Error::ItemOutOfRange {
            id,
            n_items: n_rows.saturating_sub(1),
        });
    }
    g.gather_rows(table, ids, &[rows, len])
}

/// Runs the configured encoder on embedded `e: [B, L, d]` and returns
/// `F_u: [B, d]`.
pub fn encode<T: Scalar>(g: &mut Graph<T>, p: &Bound, cfg: &BackboneConfig, e: Var, ids: &[usize]) -> Result<Var> {
    match cfg.kind {
        BackboneKind::Transformer => encode_transformer(g, p, cfg, e, ids),
        BackboneKind::Gru => encode_gru(g, p, cfg, e, ids),
        BackboneKind::FilterMlp => encode_filter_mlp(g, p, cfg, e, ids),
    }
}

/// Dot-product scores `F · tableᵀ` with excluded ids and the pad set to
/// [`EXCLUDED_SCORE`]. Returns `[B, n_items + 1]`.
pub fn score_items<T: Scalar>(f: &Tensor<T>, table: &Tensor<T>, exclude: &[Vec<usize>]) -> Result<Tensor<T>> {
    let d = f.last_dim();
    let b = f.rows();
    if table.last_dim() != d || exclude.len() != b {
        return Err(Error::shape(
            "score_items",
            format!(
                "F {:?}, table {:?}, {} exclusion sets",
                f.shape(),
                table.shape(),
                exclude.len()
            ),
        ));
    }
    let n = table.rows();
    let mut out = crate::compute::ops::matmul_nt(f, table);
    let neg = T::from_f64(EXCLUDED_SCORE);
    for (r, ex) in exclude.iter().enumerate() {
        let row = &mut out[r * n..(r + 1) * n];
        row[PAD] = neg;
        for &i in ex {
            if i >= n {
                return Err(Error::ItemOutOfRange { id: i, n_items: n - 1 });
            }
            row[i] = neg;
        }
    }
    Tensor::new([b, n], out)
}

/// Indices of the `k` highest finite scores in `row`, best first, lower
/// index winning ties.
pub fn top_k<T: Scalar>(row: &[T], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).filter(|&i| row[i].is_finite()).collect();
    let cmp = |a: &usize, b: &usize| {
        row[*b]
            .partial_cmp(&row[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    };
    if idx.len() > k {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    idx
}
