//! Seeded toy datasets for tests, examples and the CLI smoke run.

use crate::compute::Rng;
use crate::data::{InteractionLog, SplitDataset};
use crate::error::Result;

/// Every user walks the ring `1..=n_items` one step at a time from a
/// user-specific start; the next item is a function of the current one.
pub fn cycle_histories(n_users: usize, n_items: usize, len: usize) -> Vec<Vec<usize>> {
    (0..n_users)
        .map(|u| (0..len).map(|j| (u + j) % n_items + 1).collect())
        .collect()
}

pub fn cycle_dataset(n_users: usize, n_items: usize, len: usize) -> Result<SplitDataset> {
    SplitDataset::from_histories(n_items, &cycle_histories(n_users, n_items, len))
}

/// Noisy ring walks: each step advances by 1 with probability `1 - noise`,
/// otherwise jumps to a uniform item. Lengths vary in `min_len..=max_len`.
pub fn noisy_cycle_histories(
    n_users: usize,
    n_items: usize,
    min_len: usize,
    max_len: usize,
    noise: f64,
    seed: u64,
) -> Vec<Vec<usize>> {
    let mut rng = Rng::new(seed);
    (0..n_users)
        .map(|_| {
            let len = min_len + rng.below(max_len - min_len + 1);
            let mut cur = rng.below(n_items);
            (0..len)
                .map(|_| {
                    let item = cur + 1;
                    cur = if rng.unit() < noise {
                        rng.below(n_items)
                    } else {
                        (cur + 1) % n_items
                    };
                    item
                })
                .collect()
        })
        .collect()
}

pub fn noisy_cycle_dataset(
    n_users: usize,
    n_items: usize,
    len: (usize, usize),
    noise: f64,
    seed: u64,
) -> Result<SplitDataset> {
    SplitDataset::from_histories(
        n_items,
        &noisy_cycle_histories(n_users, n_items, len.0, len.1, noise, seed),
    )
}

/// Two disjoint interest clusters `1..=c` and `c+1..=2c`.
///
/// Each user has a dominant and a secondary cluster. The early history
/// mixes both; the recent tail is mostly dominant, while the last training
/// item and both held-out items come from the secondary cluster. Within a
/// cluster the user walks a ring, so the held-out items continue the
/// secondary walk.
pub fn two_cluster_histories(n_users: usize, cluster: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = Rng::new(seed);
    (0..n_users)
        .map(|_| {
            let major = rng.below(2);
            let minor = 1 - major;
            let mut pos = [rng.below(cluster), rng.below(cluster)];
            let mut next = |c: usize, rng: &mut Rng| {
                let item = c * cluster + pos[c] + 1;
                pos[c] = (pos[c] + 1 + usize::from(rng.unit() < 0.2)) % cluster;
                item
            };
            let head = 4 + rng.below(5);
            let mut seq: Vec<usize> = (0..head)
                .map(|_| {
                    let c = if rng.unit() < 0.5 { major } else { minor };
                    next(c, &mut rng)
                })
                .collect();
            for _ in 0..5 {
                seq.push(next(major, &mut rng));
            }
            for _ in 0..3 {
                seq.push(next(minor, &mut rng));
            }
            seq
        })
        .collect()
}

pub fn two_cluster_dataset(n_users: usize, cluster: usize, seed: u64) -> Result<SplitDataset> {
    SplitDataset::from_histories(2 * cluster, &two_cluster_histories(n_users, cluster, seed))
}

/// Interaction log with users `u<i>`, items `i<id>` and increasing
/// timestamps, as a raw file would provide it.
pub fn histories_to_log(histories: &[Vec<usize>]) -> InteractionLog {
    InteractionLog::from_triples(histories.iter().enumerate().flat_map(|(u, h)| {
        h.iter()
            .enumerate()
            .map(move |(j, &i)| (format!("u{u}"), format!("i{i}"), 1_000 + j as i64))
    }))
}
