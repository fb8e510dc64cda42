use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{forward_round, round_sizes, Model};
use crate::adapter::{extend_user_context, ItemContext, UserContextStack};
use crate::backbone::{score_items, top_k, ITEM_EMB};
use crate::compute::{Graph, Scalar};
use crate::data::{pad_row, PAD};
use crate::error::{Error, Result};

/// Retrieved list of one user in round-major order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub items: Vec<usize>,
    /// Round (1-based) that produced each item.
    pub rounds: Vec<usize>,
}

/// Multi-round top-`k` retrieval.
///
/// Round `t` selects its share of `k` by score, skipping pads, the user's
/// `exclude` set and everything already selected; the selection and the
/// round's user vector then condition the following rounds. The item
/// adapter sees at most its configured capacity of pooled items (the
/// earliest selected).
pub fn retrieve<T: Scalar>(
    model: &Model<T>,
    sequences: &[Vec<usize>],
    exclude: &[Vec<usize>],
    k: usize,
    rounds: usize,
    batch_size: usize,
) -> Result<Vec<RetrievalResult>> {
    run(model, sequences, exclude, k, rounds, batch_size, true)
}

/// Like [`retrieve`], but returns shorter lists instead of failing when a
/// user has fewer than `k` candidates.
pub fn retrieve_lenient<T: Scalar>(
    model: &Model<T>,
    sequences: &[Vec<usize>],
    exclude: &[Vec<usize>],
    k: usize,
    rounds: usize,
    batch_size: usize,
) -> Result<Vec<RetrievalResult>> {
    run(model, sequences, exclude, k, rounds, batch_size, false)
}

fn run<T: Scalar>(
    model: &Model<T>,
    sequences: &[Vec<usize>],
    exclude: &[Vec<usize>],
    k: usize,
    rounds: usize,
    batch_size: usize,
    strict: bool,
) -> Result<Vec<RetrievalResult>> {
    if sequences.len() != exclude.len() {
        return Err(Error::shape("retrieve", "one exclusion set per sequence required"));
    }
    if rounds == 0 || k < rounds {
        return Err(Error::Config(format!("cannot split k = {k} over {rounds} rounds")));
    }
    let rows: Vec<usize> = (0..sequences.len()).collect();
    let chunks: Vec<Vec<RetrievalResult>> = rows
        .par_chunks(batch_size.max(1))
        .map(|chunk| retrieve_chunk(model, sequences, exclude, chunk, k, rounds, strict))
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn retrieve_chunk<T: Scalar>(
    model: &Model<T>,
    sequences: &[Vec<usize>],
    exclude: &[Vec<usize>],
    chunk: &[usize],
    k: usize,
    rounds: usize,
    strict: bool,
) -> Result<Vec<RetrievalResult>> {
    let cfg = &model.config;
    let len = cfg.backbone.max_len;
    let b = chunk.len();
    let mut ids = Vec::with_capacity(b * len);
    for (r, &u) in chunk.iter().enumerate() {
        if sequences[u].is_empty() {
            return Err(Error::EmptySequence { row: r });
        }
        ids.extend(pad_row(&sequences[u], len));
    }
    let mut g = Graph::new();
    let p = model.params.bind(&mut g, |_| false);
    let table = p.get(ITEM_EMB)?;
    let capacity = cfg.adapter.c_max;
    let mut items = ItemContext::new(b, capacity);
    let mut users = UserContextStack::new();
    let mut out: Vec<RetrievalResult> = vec![
        RetrievalResult {
            items: Vec::with_capacity(k),
            rounds: Vec::with_capacity(k),
        };
        b
    ];
    for (t, &size) in round_sizes(k, rounds).iter().enumerate() {
        let f = forward_round(&mut g, &p, cfg, &ids, b, len, &items, &users)?;
        let excl: Vec<Vec<usize>> = chunk
            .iter()
            .zip(&out)
            .map(|(&u, res)| exclude[u].iter().chain(&res.items).copied().collect())
            .collect();
        let scores = score_items(g.value(f), g.value(table), &excl)?;
        for r in 0..b {
            let best = top_k(scores.row(r), size);
            if strict && best.len() < size {
                return Err(Error::PoolExhausted {
                    available: best.len(),
                    needed: size,
                });
            }
            if t + 1 < rounds {
                let room = capacity - items.pool(r).len();
                let add: Vec<usize> = best.iter().copied().filter(|&i| i != PAD).take(room).collect();
                items.push(r, &add)?;
            }
            out[r].rounds.extend(std::iter::repeat_n(t + 1, best.len()));
            out[r].items.extend(best);
        }
        if t + 1 < rounds {
            extend_user_context(&mut users, f);
        }
    }
    Ok(out)
}
