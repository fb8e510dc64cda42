//! Pretrains a base transformer on synthetic cyclic histories.

use multiround::data::Phase;
use multiround::engine::{pretrain, TrainConfig};
use multiround::eval::evaluate;
use multiround::synthetic::noisy_cycle_dataset;

fn main() -> multiround::Result<()> {
    env_logger::init();
    let split = noisy_cycle_dataset(300, 60, (8, 16), 0.1, 1)?;
    let cfg = TrainConfig {
        rounds: 1,
        dim: 32,
        max_len: 16,
        epochs: 20,
        batch_size: 64,
        eval_k: 10,
        ..TrainConfig::default()
    };
    let out = pretrain(&split, &cfg)?;
    for e in &out.history {
        println!("epoch {:2}  loss {:.4}  valid HR@10 {:.3}", e.epoch, e.loss, e.valid_hr);
    }
    let r = evaluate(&out.checkpoint.model, &split, Phase::Test, 10, 1, 128)?;
    println!(
        "kept epoch {}; test HR@10 {:.3}, NDCG@10 {:.3}",
        out.checkpoint.epoch, r.hr, r.ndcg
    );
    Ok(())
}
