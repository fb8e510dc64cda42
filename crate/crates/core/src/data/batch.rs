use super::{SplitDataset, PAD};
use crate::compute::Rng;

/// Which target each row predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Input `train[..n-1]`, target the last training item.
    Train,
    /// Input `train`, target the validation item.
    Valid,
    /// Input `train + [valid]`, target the test item.
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub max_len: usize,
    /// Row-major `[rows, max_len]`, left-padded with [`PAD`].
    pub ids: Vec<usize>,
    /// True (untruncated) input length per row.
    pub lengths: Vec<usize>,
    pub targets: Vec<usize>,
    /// Index into `SplitDataset::users` per row.
    pub users: Vec<usize>,
    /// Full, untruncated input history per row, sorted and deduplicated.
    pub history: Vec<Vec<usize>>,
}

impl Batch {
    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.ids[r * self.max_len..(r + 1) * self.max_len]
    }
}

/// Input sequence and target of one user for `phase`.
pub fn phase_input(split: &SplitDataset, user: usize, phase: Phase) -> (Vec<usize>, usize) {
    let u = &split.users[user];
    match phase {
        Phase::Train => {
            let n = u.train.len();
            (u.train[..n - 1].to_vec(), u.train[n - 1])
        }
        Phase::Valid => (u.train.clone(), u.valid),
        Phase::Test => {
            let mut s = u.train.clone();
            s.push(u.valid);
            (s, u.test)
        }
    }
}

/// Left-pads or recency-truncates `seq` to `max_len`.
pub fn pad_row(seq: &[usize], max_len: usize) -> Vec<usize> {
    let keep = seq.len().min(max_len);
    let mut row = vec![PAD; max_len - keep];
    row.extend_from_slice(&seq[seq.len() - keep..]);
    row
}

/// Packs users into padded batches. With `rng`, user order is shuffled.
///
/// In the [`Phase::Train`] phase, users whose training sequence has a single
/// item have no input and are skipped.
pub fn make_batches(
    split: &SplitDataset,
    phase: Phase,
    max_len: usize,
    batch_size: usize,
    rng: Option<&mut Rng>,
) -> Vec<Batch> {
    assert!(
        max_len >= 1 && batch_size >= 1,
        "max_len and batch_size must be positive"
    );
    let mut order: Vec<usize> = (0..split.users.len())
        .filter(|&u| phase != Phase::Train || split.users[u].train.len() >= 2)
        .collect();
    if let Some(rng) = rng {
        rng.shuffle(&mut order);
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let mut b = Batch {
                max_len,
                ids: Vec::with_capacity(chunk.len() * max_len),
                lengths: Vec::with_capacity(chunk.len()),
                targets: Vec::with_capacity(chunk.len()),
                users: chunk.to_vec(),
                history: Vec::with_capacity(chunk.len()),
            };
            for &u in chunk {
                let (seq, target) = phase_input(split, u, phase);
                b.ids.extend(pad_row(&seq, max_len));
                b.lengths.push(seq.len());
                b.targets.push(target);
                let mut h = seq;
                h.sort_unstable();
                h.dedup();
                b.history.push(h);
            }
            b
        })
        .collect()
}
