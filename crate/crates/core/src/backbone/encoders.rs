use super::{layer_norm, linear, BackboneConfig};
use crate::compute::{gru_unroll, Bound, Graph, GruWeights, Scalar, Tensor, Var};
use crate::data::PAD;
use crate::error::{Error, Result};

fn dims<T: Scalar>(g: &Graph<T>, e: Var, ids: &[usize]) -> Result<(usize, usize, usize)> {
    let [b, l, d] =
        <[usize; 3]>::try_from(g.shape(e)).map_err(|_| Error::shape("encode", "embeddings must be [B, L, d]"))?;
    if ids.len() != b * l {
        return Err(Error::shape("encode", format!("{} ids for [{b}, {l}]", ids.len())));
    }
    if let Some(row) = (0..b).find(|&r| ids[r * l + l - 1] == PAD) {
        return Err(Error::EmptySequence { row });
    }
    Ok((b, l, d))
}

/// Hidden state at the final (most recent) position of `x: [B, L, d]`.
pub fn last_position<T: Scalar>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let [b, l, _] =
        <[usize; 3]>::try_from(g.shape(x)).map_err(|_| Error::shape("last_position", "input must be [B, L, d]"))?;
    let idx: Vec<usize> = (0..b).map(|r| r * l + l - 1).collect();
    g.gather_rows(x, &idx, &[b])
}

fn feed_forward<T: Scalar>(g: &mut Graph<T>, p: &Bound, prefix: &str, x: Var, dropout: f64) -> Result<Var> {
    let h = linear(g, p, &format!("{prefix}.ff1"), x)?;
    let h = g.relu(h);
    let h = linear(g, p, &format!("{prefix}.ff2"), h)?;
    let h = g.dropout(h, dropout)?;
    let r = g.add(x, h)?;
    layer_norm(g, p, &format!("{prefix}.ln2"), r)
}

/// Causal self-attention mask `[B, L, L]`: query `i` sees non-pad keys
/// `j <= i`, and always itself.
pub(crate) fn causal_mask(ids: &[usize], b: usize, l: usize) -> Vec<bool> {
    let mut m = Vec::with_capacity(b * l * l);
    for r in 0..b {
        for i in 0..l {
            for j in 0..l {
                m.push(i == j || (j <= i && ids[r * l + j] != PAD));
            }
        }
    }
    m
}

/// Self-attention encoder with learned positions and a causal mask.
///
/// Positions are indexed from the most recent item backwards, so the amount
/// of left padding does not affect the representation.
pub fn encode_transformer<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &BackboneConfig,
    e: Var,
    ids: &[usize],
) -> Result<Var> {
    let x = transformer_states(g, p, cfg, e, ids)?;
    last_position(g, x)
}

/// Per-position outputs `[B, L, d]` of the self-attention encoder.
pub fn transformer_states<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &BackboneConfig,
    e: Var,
    ids: &[usize],
) -> Result<Var> {
    let (b, l, d) = dims(g, e, ids)?;
    if l > cfg.max_len {
        return Err(Error::shape(
            "encode_transformer",
            format!("length {l} exceeds max_len {}", cfg.max_len),
        ));
    }
    let pos_idx: Vec<usize> = (0..b).flat_map(|_| (0..l).map(move |j| l - 1 - j)).collect();
    let pos = g.gather_rows(p.get("tf.pos")?, &pos_idx, &[b, l])?;
    let x = g.add(e, pos)?;
    let nonpad: Vec<bool> = ids.iter().map(|&i| i != PAD).collect();
    let x = g.select_rows(&nonpad, x, e)?;
    let mut x = g.dropout(x, cfg.dropout)?;
    let mask = causal_mask(ids, b, l);
    let dh = d / cfg.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    for blk in 0..cfg.blocks {
        let pre = format!("tf.{blk}");
        let q = linear(g, p, &format!("{pre}.q"), x)?;
        let k = linear(g, p, &format!("{pre}.k"), x)?;
        let v = linear(g, p, &format!("{pre}.v"), x)?;
        let mut heads = Vec::with_capacity(cfg.heads);
        for h in 0..cfg.heads {
            let qh = g.slice_last(q, h * dh, dh)?;
            let kh = g.slice_last(k, h * dh, dh)?;
            let vh = g.slice_last(v, h * dh, dh)?;
            let s = g.bmm(qh, kh, true)?;
            let s = g.scale(s, scale);
            let a = g.masked_softmax(s, &mask)?;
            heads.push(g.bmm(a, vh, false)?);
        }
        let att = if heads.len() == 1 {
            heads[0]
        } else {
            g.concat_last(&heads)?
        };
        let att = linear(g, p, &format!("{pre}.o"), att)?;
        let att = g.dropout(att, cfg.dropout)?;
        let r = g.add(x, att)?;
        let h = layer_norm(g, p, &format!("{pre}.ln1"), r)?;
        x = feed_forward(g, p, &pre, h, cfg.dropout)?;
    }
    Ok(x)
}

/// Recurrent encoder; pad steps leave the hidden state untouched.
pub fn encode_gru<T: Scalar>(g: &mut Graph<T>, p: &Bound, cfg: &BackboneConfig, e: Var, ids: &[usize]) -> Result<Var> {
    let (b, _, d) = dims(g, e, ids)?;
    let x = g.dropout(e, cfg.dropout)?;
    let w = GruWeights {
        w_ih: p.get("gru.w_ih")?,
        w_hh: p.get("gru.w_hh")?,
        b_ih: p.get("gru.b_ih")?,
        b_hh: p.get("gru.b_hh")?,
    };
    let h0 = g.constant(Tensor::zeros([b, d]));
    let active: Vec<bool> = ids.iter().map(|&i| i != PAD).collect();
    let (_, last) = gru_unroll(g, x, h0, &w, Some(&active))?;
    Ok(last)
}

/// Filter-enhanced MLP: each block filters along the position axis in the
/// frequency domain, then applies residual normalization and an optional
/// feed-forward sublayer.
pub fn encode_filter_mlp<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &BackboneConfig,
    e: Var,
    ids: &[usize],
) -> Result<Var> {
    let (_, l, _) = dims(g, e, ids)?;
    if l != cfg.max_len {
        return Err(Error::shape(
            "encode_filter_mlp",
            format!("length {l} must equal max_len {}", cfg.max_len),
        ));
    }
    let mut x = g.dropout(e, cfg.dropout)?;
    for blk in 0..cfg.blocks {
        let pre = format!("fm.{blk}");
        let y = g.spectral_filter(
            x,
            p.get(&format!("{pre}.filter_re"))?,
            p.get(&format!("{pre}.filter_im"))?,
        )?;
        let y = g.dropout(y, cfg.dropout)?;
        let r = g.add(x, y)?;
        x = layer_norm(g, p, &format!("{pre}.ln1"), r)?;
        if cfg.ffn {
            x = feed_forward(g, p, &pre, x, cfg.dropout)?;
        }
    }
    last_position(g, x)
}
