//! Runs every component ablation on a small synthetic dataset and writes the
//! labeled reports as JSON lines.

use multiround::engine::{pretrain, TrainConfig};
use multiround::eval::{append_reports, run_ablation, Ablation};
use multiround::synthetic::noisy_cycle_dataset;

fn main() -> multiround::Result<()> {
    let split = noisy_cycle_dataset(200, 50, (8, 14), 0.2, 2)?;
    let cfg = TrainConfig {
        rounds: 3,
        k_ctx: 3,
        dim: 16,
        max_len: 12,
        epochs: 5,
        batch_size: 64,
        eval_k: 15,
        ..TrainConfig::default()
    };
    let base = pretrain(&split, &cfg)?.checkpoint;
    let path = std::env::temp_dir().join("multiround_ablations.jsonl");
    let _ = std::fs::remove_file(&path);
    for ab in Ablation::ALL {
        let r = run_ablation(&split, &base, &cfg, ab)?;
        println!("{:<8} HR@15 {:.3}  NDCG@15 {:.3}", ab.label(), r.hr, r.ndcg);
        append_reports(&path, &[r])?;
    }
    println!("reports in {}", path.display());
    Ok(())
}
