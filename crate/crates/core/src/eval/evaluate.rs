use std::time::Instant;

use super::{hr_at_k, ndcg_at_k, MetricReport, RoundMetric};
use crate::compute::Scalar;
use crate::data::{phase_input, Phase, SplitDataset};
use crate::engine::{retrieve_lenient, round_sizes, Model};
use crate::error::{Error, Result};

pub(crate) fn split_name(phase: Phase) -> &'static str {
    match phase {
        Phase::Train => "train",
        Phase::Valid => "valid",
        Phase::Test => "test",
    }
}

/// Leave-one-out evaluation over every user with full-candidate ranking.
///
/// Each user's input sequence (train for `Valid`, train plus the validation
/// item for `Test`) is excluded from the candidates. `Train` ranks the last
/// training item from the rest of the training sequence, skipping users
/// with a single training item. The ranked list is the
/// multi-round retrieval in round-major order; `per_round` holds the
/// cumulative metrics after each round.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    split: &SplitDataset,
    phase: Phase,
    k: usize,
    rounds: usize,
    batch_size: usize,
) -> Result<MetricReport> {
    if k == 0 {
        return Err(Error::Config("metric cutoff k must be positive".into()));
    }
    let start = Instant::now();
    let (inputs, targets): (Vec<Vec<usize>>, Vec<usize>) = (0..split.n_users())
        .filter(|&u| phase != Phase::Train || split.users[u].train.len() >= 2)
        .map(|u| phase_input(split, u, phase))
        .unzip();
    let exclude: Vec<Vec<usize>> = inputs
        .iter()
        .map(|s| {
            let mut e = s.clone();
            e.sort_unstable();
            e.dedup();
            e
        })
        .collect();
    let results = retrieve_lenient(model, &inputs, &exclude, k, rounds, batch_size)?;
    let lists: Vec<Vec<usize>> = results.into_iter().map(|r| r.items).collect();
    let mut per_round = Vec::with_capacity(rounds);
    let mut size = 0;
    for (t, s) in round_sizes(k, rounds).into_iter().enumerate() {
        size += s;
        per_round.push(RoundMetric {
            t: t + 1,
            size,
            hr: hr_at_k(&lists, &targets, size)?,
            ndcg: ndcg_at_k(&lists, &targets, size)?,
        });
    }
    Ok(MetricReport {
        split: split_name(phase).into(),
        k,
        hr: hr_at_k(&lists, &targets, k)?,
        ndcg: ndcg_at_k(&lists, &targets, k)?,
        per_round,
        epoch: 0,
        config_hash: String::new(),
        label: None,
        wall_time: start.elapsed(),
    })
}
