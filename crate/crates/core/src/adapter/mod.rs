//! Item and user representation adapters conditioned on earlier rounds.

mod context;

use serde::{Deserialize, Serialize};

use crate::backbone::{dense_params, embed_sequence, gru_params, layer_norm, linear};
use crate::compute::{gru_unroll, uniform_fan_in, Bound, Graph, GruWeights, ParamSet, Rng, Scalar, Tensor, Var};
use crate::data::PAD;
use crate::error::{Error, Result};

pub use context::{extend_user_context, ItemContext, UserContextStack};

/// Prefix shared by every item-adapter parameter.
pub const IRA_PREFIX: &str = "ira.";
/// Prefix shared by every user-adapter parameter.
pub const URA_PREFIX: &str = "ura.";

/// True for adapter parameter names.
pub fn is_adapter_param(name: &str) -> bool {
    name.starts_with(IRA_PREFIX) || name.starts_with(URA_PREFIX)
}

/// Component switches for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdapterToggles {
    pub enable_lft: bool,
    pub enable_cat: bool,
    pub enable_ira: bool,
    pub enable_ura_gru: bool,
    pub enable_ura_mlp: bool,
    pub enable_ura: bool,
}

impl Default for AdapterToggles {
    fn default() -> Self {
        Self {
            enable_lft: true,
            enable_cat: true,
            enable_ira: true,
            enable_ura_gru: true,
            enable_ura_mlp: true,
            enable_ura: true,
        }
    }
}

impl AdapterToggles {
    pub fn all_off() -> Self {
        Self {
            enable_lft: false,
            enable_cat: false,
            enable_ira: false,
            enable_ura_gru: false,
            enable_ura_mlp: false,
            enable_ura: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub dim: usize,
    /// Context slots per user, `(T - 1) * k_ctx`.
    pub c_max: usize,
    pub dropout: f64,
    /// Learned query/key/value projections in the context attention.
    pub cat_projections: bool,
}

impl AdapterConfig {
    pub fn new(dim: usize, c_max: usize) -> Self {
        Self {
            dim,
            c_max,
            dropout: 0.2,
            cat_projections: false,
        }
    }
}

/// Fresh adapter parameters; the spectral filter starts as the identity.
pub fn init_adapters<T: Scalar>(cfg: &AdapterConfig, rng: &mut Rng) -> ParamSet<T> {
    let d = cfg.dim;
    let nb = cfg.c_max / 2 + 1;
    let mut p = ParamSet::new();
    p.insert("ira.lft.re", Tensor::full([nb, d], T::one()));
    p.insert("ira.lft.im", Tensor::zeros([nb, d]));
    for ln in ["ira.lft.ln", "ira.cat.ln", "ura.ln"] {
        p.insert(format!("{ln}.g"), Tensor::full([d], T::one()));
        p.insert(format!("{ln}.b"), Tensor::zeros([d]));
    }
    if cfg.cat_projections {
        for w in ["ira.cat.wq", "ira.cat.wk", "ira.cat.wv"] {
            p.insert(w, uniform_fan_in(&[d, d], d, rng));
        }
    }
    gru_params(&mut p, "ura.gru", d, d, rng);
    dense_params(&mut p, "ura.w1", 2 * d, d, rng);
    dense_params(&mut p, "ura.w2", d, d, rng);
    p
}

/// Learnable filter over the context axis of `e_ctx: [B, C, d]`:
/// `layer_norm(E + dropout(irfft(W ⊙ rfft(E))))`.
pub fn lft<T: Scalar>(g: &mut Graph<T>, p: &Bound, cfg: &AdapterConfig, e_ctx: Var) -> Result<Var> {
    let c = g.shape(e_ctx).get(1).copied().unwrap_or(0);
    if c != cfg.c_max {
        return Err(Error::shape(
            "lft",
            format!("context length {c} but capacity {}", cfg.c_max),
        ));
    }
    let filtered = g.spectral_filter(e_ctx, p.get("ira.lft.re")?, p.get("ira.lft.im")?)?;
    let filtered = g.dropout(filtered, cfg.dropout)?;
    let r = g.add(e_ctx, filtered)?;
    layer_norm(g, p, "ira.lft.ln", r)
}

/// Context-aware attention with the sequence as queries and the context
/// as keys and values: `layer_norm(E + dropout(softmax(E·Hᵀ/√d)·H))`.
///
/// `ctx_mask` is `[B, C]`; every row needs at least one valid slot.
pub fn cat<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &AdapterConfig,
    e_seq: Var,
    h_ctx: Var,
    ctx_mask: &[bool],
) -> Result<Var> {
    let (q, k, v) = if cfg.cat_projections {
        let wq = p.get("ira.cat.wq")?;
        let wk = p.get("ira.cat.wk")?;
        let wv = p.get("ira.cat.wv")?;
        (g.matmul(e_seq, wq)?, g.matmul(h_ctx, wk)?, g.matmul(h_ctx, wv)?)
    } else {
        (e_seq, h_ctx, h_ctx)
    };
    let [b, l, d] =
        <[usize; 3]>::try_from(g.shape(e_seq)).map_err(|_| Error::shape("cat", "sequence must be [B, L, d]"))?;
    let c = g.shape(h_ctx)[1];
    if ctx_mask.len() != b * c {
        return Err(Error::shape("cat", "context mask must be [B, C]"));
    }
    let mask: Vec<bool> = (0..b)
        .flat_map(|r| (0..l).flat_map(move |_| ctx_mask[r * c..(r + 1) * c].iter().copied()))
        .collect();
    let s = g.bmm(q, k, true)?;
    let s = g.scale(s, 1.0 / (d as f64).sqrt());
    let a = g.masked_softmax(s, &mask)?;
    let h = g.bmm(a, v, false)?;
    let h = g.dropout(h, cfg.dropout)?;
    let r = g.add(e_seq, h)?;
    layer_norm(g, p, "ira.cat.ln", r)
}

/// Mean of the valid slots of `h_ctx: [B, C, d]` broadcast over `L`
/// positions and added: `layer_norm(E + dropout(mean))`.
fn mean_context<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &AdapterConfig,
    e_seq: Var,
    h_ctx: Var,
    ctx_mask: &[bool],
) -> Result<Var> {
    let [b, l, _] =
        <[usize; 3]>::try_from(g.shape(e_seq)).map_err(|_| Error::shape("ira", "sequence must be [B, L, d]"))?;
    let c = g.shape(h_ctx)[1];
    let mut w = vec![T::zero(); b * c];
    for r in 0..b {
        let n = ctx_mask[r * c..(r + 1) * c].iter().filter(|&&m| m).count().max(1);
        for s in 0..c {
            if ctx_mask[r * c + s] {
                w[r * c + s] = T::one() / T::from_usize(n);
            }
        }
    }
    let w = g.constant(Tensor::new([b, 1, c], w)?);
    let m = g.bmm(w, h_ctx, false)?;
    let idx: Vec<usize> = (0..b).flat_map(|r| std::iter::repeat_n(r, l)).collect();
    let m = g.gather_rows(m, &idx, &[b, l])?;
    let m = g.dropout(m, cfg.dropout)?;
    let r = g.add(e_seq, m)?;
    layer_norm(g, p, "ira.cat.ln", r)
}

/// Item representation adapter.
///
/// Users with an empty pool, and pad positions, keep their input rows
/// bit-for-bit; with `enable_ira` off the input is returned unchanged.
#[allow(clippy::too_many_arguments)]
pub fn ira<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &AdapterConfig,
    toggles: &AdapterToggles,
    e_seq: Var,
    seq_ids: &[usize],
    table: Var,
    ctx: &ItemContext,
) -> Result<Var> {
    if !toggles.enable_ira || ctx.is_empty() {
        return Ok(e_seq);
    }
    let [b, l, _] =
        <[usize; 3]>::try_from(g.shape(e_seq)).map_err(|_| Error::shape("ira", "sequence must be [B, L, d]"))?;
    if ctx.rows() != b || ctx.capacity() != cfg.c_max {
        return Err(Error::shape(
            "ira",
            format!(
                "context {}x{} for batch {b}, capacity {}",
                ctx.rows(),
                ctx.capacity(),
                cfg.c_max
            ),
        ));
    }
    let (ids, mut mask) = ctx.padded();
    let c = cfg.c_max;
    let has_ctx: Vec<bool> = (0..b).map(|r| !ctx.pool(r).is_empty()).collect();
    for r in (0..b).filter(|&r| !has_ctx[r]) {
        mask[r * c] = true;
    }
    let e_ctx = embed_sequence(g, table, &ids, b, c)?;
    let h_ctx = if toggles.enable_lft {
        lft(g, p, cfg, e_ctx)?
    } else {
        e_ctx
    };
    let adapted = if toggles.enable_cat {
        cat(g, p, cfg, e_seq, h_ctx, &mask)?
    } else {
        mean_context(g, p, cfg, e_seq, h_ctx, &mask)?
    };
    let keep: Vec<bool> = (0..b * l).map(|i| has_ctx[i / l] && seq_ids[i] != PAD).collect();
    if keep.iter().all(|&k| k) {
        Ok(adapted)
    } else {
        g.select_rows(&keep, adapted, e_seq)
    }
}

/// Summary of the user stack: GRU final state, or the mean when the GRU is
/// disabled; zeros for an empty stack.
fn stack_summary<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    toggles: &AdapterToggles,
    f: Var,
    stack: &UserContextStack,
) -> Result<Var> {
    let shape = g.shape(f).to_vec();
    if stack.is_empty() {
        return Ok(g.constant(Tensor::zeros(shape)));
    }
    let [b, d] =
        <[usize; 2]>::try_from(shape.as_slice()).map_err(|_| Error::shape("ura", "user vectors must be [B, d]"))?;
    for &v in stack.entries() {
        if g.shape(v) != [b, d] {
            return Err(Error::shape(
                "ura",
                format!("stack entry {:?} vs [{b}, {d}]", g.shape(v)),
            ));
        }
    }
    let s = stack.len();
    if toggles.enable_ura_gru {
        let seq = if s == 1 {
            stack.entries()[0]
        } else {
            g.concat_last(stack.entries())?
        };
        let seq = g.reshape(seq, &[b, s, d])?;
        let w = GruWeights {
            w_ih: p.get("ura.gru.w_ih")?,
            w_hh: p.get("ura.gru.w_hh")?,
            b_ih: p.get("ura.gru.b_ih")?,
            b_hh: p.get("ura.gru.b_hh")?,
        };
        let h0 = g.constant(Tensor::zeros([b, d]));
        let (_, last) = gru_unroll(g, seq, h0, &w, None)?;
        Ok(last)
    } else {
        let mut acc = stack.entries()[0];
        for &v in &stack.entries()[1..] {
            acc = g.add(acc, v)?;
        }
        Ok(g.scale(acc, 1.0 / s as f64))
    }
}

/// User representation adapter:
/// `layer_norm(F + dropout(W2·relu(W1·[F̃ᶜ; F] + b1) + b2))`.
pub fn ura<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &AdapterConfig,
    toggles: &AdapterToggles,
    f: Var,
    stack: &UserContextStack,
) -> Result<Var> {
    if !toggles.enable_ura {
        return Ok(f);
    }
    let summary = stack_summary(g, p, toggles, f, stack)?;
    let r = if toggles.enable_ura_mlp {
        let x = g.concat_last(&[summary, f])?;
        let h = linear(g, p, "ura.w1", x)?;
        let h = g.relu(h);
        let m = linear(g, p, "ura.w2", h)?;
        let m = g.dropout(m, cfg.dropout)?;
        g.add(f, m)?
    } else {
        g.add(f, summary)?
    };
    layer_norm(g, p, "ura.ln", r)
}
