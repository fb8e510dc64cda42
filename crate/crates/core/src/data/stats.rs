use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::InteractionLog;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub sequences: usize,
    pub items: usize,
    pub actions: usize,
    /// Fraction in `[0, 1]`.
    pub sparsity: f64,
}

impl DatasetStats {
    pub fn from_counts(sequences: usize, items: usize, actions: usize) -> Self {
        let cells = sequences as f64 * items as f64;
        let sparsity = if cells > 0.0 {
            (1.0 - actions as f64 / cells).clamp(0.0, 1.0)
        } else {
            0.0
        };
        Self {
            sequences,
            items,
            actions,
            sparsity,
        }
    }

    /// Sparsity as a percentage rounded to two decimals.
    pub fn sparsity_percent(&self) -> f64 {
        (self.sparsity * 10_000.0).round() / 100.0
    }
}

pub fn stats(log: &InteractionLog) -> DatasetStats {
    let users: HashSet<&str> = log.records.iter().map(|r| r.user.as_str()).collect();
    let items: HashSet<&str> = log.records.iter().map(|r| r.item.as_str()).collect();
    DatasetStats::from_counts(users.len(), items.len(), log.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beauty_counts() {
        let s = DatasetStats::from_counts(22_363, 12_101, 198_502);
        assert_eq!(s.sparsity_percent(), 99.93);
    }

    #[test]
    fn small_cases() {
        let log = InteractionLog::from_triples([("a", "x", 1), ("a", "y", 2), ("b", "x", 3), ("b", "y", 4)]);
        assert_eq!(stats(&log).sparsity, 0.0);
        let s = DatasetStats::from_counts(10, 10, 10);
        assert!((s.sparsity - 0.9).abs() < 1e-12);
    }
}
