use std::io::Write;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::evaluate;
use crate::data::{Phase, SplitDataset};
use crate::engine::{finetune, Checkpoint, TrainConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub rounds: Vec<usize>,
    pub lambdas: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            rounds: (3..=8).collect(),
            lambdas: vec![0.1, 0.3, 0.5, 0.7, 0.9],
        }
    }
}

impl SweepGrid {
    pub fn new(rounds: Vec<usize>, lambdas: Vec<f64>) -> Result<Self> {
        let g = Self { rounds, lambdas };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds.is_empty() || self.lambdas.is_empty() {
            return Err(Error::Config("sweep grid must be non-empty".into()));
        }
        if self.rounds.contains(&0) {
            return Err(Error::Config("sweep rounds must be at least 1".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|&&l| !(l > 0.0 && l <= 1.0)) {
            return Err(Error::Config(format!("sweep lambda {l} outside (0, 1]")));
        }
        Ok(())
    }

    /// Grid points in Cartesian order, rounds outermost.
    pub fn cells(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rounds
            .iter()
            .flat_map(move |&t| self.lambdas.iter().map(move |&l| (t, l)))
    }

    pub fn len(&self) -> usize {
        self.rounds.len() * self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rounds: usize,
    pub lambda: f64,
    pub hr: f64,
    pub ndcg: f64,
}

/// Fine-tunes and evaluates (test split, HR/NDCG@`eval_k`) once per grid
/// point with the same seed. Failed cells become `nan`.
pub fn sweep(split: &SplitDataset, base: &Checkpoint, grid: &SweepGrid, cfg: &TrainConfig) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    let mut rows = Vec::with_capacity(grid.len());
    for (t, lambda) in grid.cells() {
        let cell = TrainConfig {
            rounds: t,
            lambda,
            ..cfg.clone()
        };
        let outcome = finetune(split, base, &cell, false)
            .and_then(|o| evaluate(&o.checkpoint.model, split, Phase::Test, cell.eval_k, t, cell.batch_size));
        let (hr, ndcg) = match outcome {
            Ok(r) => (r.hr, r.ndcg),
            Err(e) => {
                warn!("sweep cell T={t}, lambda={lambda} failed: {e}");
                (f64::NAN, f64::NAN)
            }
        };
        rows.push(SweepRow {
            rounds: t,
            lambda,
            hr,
            ndcg,
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv(mut w: impl Write, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "T,lambda,hr,ndcg")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.rounds, r.lambda, r.hr, r.ndcg)?;
    }
    Ok(())
}

pub fn save_sweep_csv(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_sweep_csv(std::io::BufWriter::new(f), rows).map_err(|e| Error::io(path, e))
}
