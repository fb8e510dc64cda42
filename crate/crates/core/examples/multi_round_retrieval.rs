//! Pretrains a base model, finetunes the adapters and compares one-round
//! with multi-round retrieval for a few users.

use multiround::data::Phase;
use multiround::engine::{finetune, pretrain, retrieve, TrainConfig};
use multiround::eval::evaluate;
use multiround::synthetic::two_cluster_dataset;

fn main() -> multiround::Result<()> {
    let split = two_cluster_dataset(400, 30, 1)?;
    let cfg = TrainConfig {
        rounds: 3,
        lambda: 0.5,
        k_ctx: 4,
        ctx_exclude_target: true,
        dim: 32,
        max_len: 20,
        epochs: 15,
        batch_size: 64,
        eval_k: 12,
        seed: 1,
        ..TrainConfig::default()
    };
    let base = pretrain(&split, &cfg)?.checkpoint;
    let ada = finetune(&split, &base, &cfg, false)?.checkpoint;

    let seqs: Vec<Vec<usize>> = split.users[..3].iter().map(|u| u.history()).collect();
    let hits = retrieve(&ada.model, &seqs, &seqs, 12, 3, 8)?;
    for (u, r) in hits.iter().enumerate() {
        println!("user {u}: items {:?}", r.items);
        println!("        rounds {:?}", r.rounds);
    }

    let b = evaluate(&base.model, &split, Phase::Test, 12, 1, 128)?;
    let a = evaluate(&ada.model, &split, Phase::Test, 12, 3, 128)?;
    println!("test HR@12 base {:.3}, multi-round {:.3}", b.hr, a.hr);
    for r in &a.per_round {
        println!("  after round {} ({} items): HR {:.3}", r.t, r.size, r.hr);
    }
    Ok(())
}
