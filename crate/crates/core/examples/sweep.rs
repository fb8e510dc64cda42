//! Finetunes over a small grid of round counts and loss decays and prints
//! the CSV.

use multiround::engine::{pretrain, TrainConfig};
use multiround::eval::{sweep, write_sweep_csv, SweepGrid};
use multiround::synthetic::noisy_cycle_dataset;

fn main() -> multiround::Result<()> {
    let split = noisy_cycle_dataset(150, 40, (8, 14), 0.2, 3)?;
    let cfg = TrainConfig {
        k_ctx: 3,
        dim: 16,
        max_len: 12,
        epochs: 4,
        batch_size: 64,
        eval_k: 12,
        ..TrainConfig::default()
    };
    let base = pretrain(&split, &cfg)?.checkpoint;
    let grid = SweepGrid::new(vec![2, 3, 4], vec![0.3, 0.7])?;
    let rows = sweep(&split, &base, &grid, &cfg)?;
    write_sweep_csv(std::io::stdout().lock(), &rows).map_err(|e| multiround::Error::Invalid(e.to_string()))?;
    Ok(())
}
