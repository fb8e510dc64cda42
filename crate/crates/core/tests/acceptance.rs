//! Acceptance suite. Prints one PASS/FAIL line per criterion and a summary.
//! With `ACCEPTANCE_STRICT=1` the process exits non-zero if any criterion
//! fails. Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --release --test acceptance -- 2 6`.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use multiround::adapter::{init_adapters, lft, AdapterConfig, AdapterToggles};
use multiround::backbone::{embed_sequence, encode, score_items, top_k, BackboneKind, ITEM_EMB};
use multiround::compute::{fft_real_forward, fft_real_inverse, layer_norm, masked_softmax, Graph, Rng, Tensor};
use multiround::data::{build_split, kcore_filter, pad_row, DatasetStats, InteractionLog, Phase, SplitDataset};
use multiround::engine::{finetune, pretrain, retrieve, round_sizes, Checkpoint, Model, ModelConfig, TrainConfig};
use multiround::eval::{evaluate, hr_at_k, ndcg_at_k, run_ablation, Ablation};
use multiround::synthetic::{cycle_dataset, noisy_cycle_dataset, two_cluster_dataset};
use multiround::Error;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() {
    let selected: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 10] = [
        (1, "end-to-end gradient check", c1_gradient),
        (2, "numerical primitives", c2_primitives),
        (3, "base equivalence", c3_base_equivalence),
        (4, "overfit", c4_overfit),
        (5, "multi-round gain on two-cluster data", c5_two_cluster),
        (6, "metric oracles", c6_metrics),
        (7, "data pipeline", c7_data),
        (8, "retrieval contract", c8_retrieval),
        (9, "determinism", c9_determinism),
        (10, "ablations", c10_ablations),
    ];
    let mut failed = 0;
    let mut passed = 0;
    for (n, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if o.pass {
            passed += 1;
        } else {
            failed += 1;
        }
        println!(
            "{} criterion {n} ({name}): {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {passed} passed, {failed} failed");
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn c1_gradient() -> Outcome {
    let t = common::end_to_end_gradient_error(BackboneKind::Transformer, 17);
    let g = common::end_to_end_gradient_error(BackboneKind::Gru, 17);
    outcome(
        t < 1e-4 && g < 1e-4,
        format!("max relative error transformer {t:.2e}, gru {g:.2e} (tolerance 1e-4)"),
    )
}

fn rand32(rng: &mut Rng, shape: &[usize]) -> Tensor<f32> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0) as f32).collect()).unwrap()
}

fn ln32(x: &Tensor<f32>) -> Tensor<f32> {
    let d = x.last_dim();
    layer_norm(x, &vec![1.0; d], &vec![0.0; d], 1e-12).unwrap()
}

fn c2_primitives() -> Outcome {
    let mut rng = Rng::new(2);
    let mut fft_err = 0.0f64;
    for len in 1..=64 {
        let x = rand32(&mut rng, &[len]);
        let back = fft_real_inverse(&fft_real_forward(x.data()).unwrap(), len).unwrap();
        for (a, b) in x.data().iter().zip(&back) {
            fft_err = fft_err.max((a - b).abs() as f64);
        }
    }

    let scores = rand32(&mut rng, &[64, 17]).map(|v| 20.0 * v);
    let mut mask: Vec<bool> = (0..64 * 17).map(|_| rng.unit() < 0.6).collect();
    for r in 0..64 {
        mask[r * 17 + r % 17] = true;
    }
    let p = masked_softmax(&scores, &mask).unwrap();
    let sum_err = (0..64)
        .map(|r| (p.row(r).iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);

    let x = rand32(&mut rng, &[32, 16]);
    let base = ln32(&x);
    let ln_err = [0.01f32, 0.5, 3.0, 100.0]
        .iter()
        .map(|&c| ln32(&x.map(|v| c * v)).max_abs_diff(&base))
        .fold(0.0, f64::max);

    let cfg = AdapterConfig {
        dropout: 0.0,
        ..AdapterConfig::new(16, 6)
    };
    let params = init_adapters::<f32>(&cfg, &mut rng);
    let e = rand32(&mut rng, &[4, 6, 16]);
    let mut g = Graph::new();
    let b = params.bind(&mut g, |_| false);
    let ev = g.constant(e.clone());
    let y = lft(&mut g, &b, &cfg, ev).unwrap();
    let lft_err = g.value(y).max_abs_diff(&ln32(&e));

    let pass = fft_err < 1e-5 && sum_err <= 1e-6 && ln_err < 1e-5 && lft_err < 1e-5;
    outcome(
        pass,
        format!(
            "fft round trip L=1..64 {fft_err:.1e}, softmax row sums {sum_err:.1e}, \
             layer norm scale invariance {ln_err:.1e}, identity filter vs layer norm {lft_err:.1e}"
        ),
    )
}

fn base_top_k(model: &Model<f32>, seqs: &[Vec<usize>], exclude: &[Vec<usize>], k: usize) -> Vec<Vec<usize>> {
    let len = model.config.backbone.max_len;
    let ids: Vec<usize> = seqs.iter().flat_map(|s| pad_row(s, len)).collect();
    let mut g = Graph::new();
    let p = model.params.bind(&mut g, |_| false);
    let table = p.get(ITEM_EMB).unwrap();
    let e = embed_sequence(&mut g, table, &ids, seqs.len(), len).unwrap();
    let f = encode(&mut g, &p, &model.config.backbone, e, &ids).unwrap();
    let scores = score_items(g.value(f), model.params.get(ITEM_EMB).unwrap(), exclude).unwrap();
    (0..seqs.len()).map(|r| top_k(scores.row(r), k)).collect()
}

fn c3_base_equivalence() -> Outcome {
    let split = noisy_cycle_dataset(200, 120, (8, 20), 0.2, 3).unwrap();
    let cfg = TrainConfig {
        rounds: 1,
        dim: 32,
        max_len: 20,
        epochs: 8,
        batch_size: 64,
        eval_k: 50,
        seed: 3,
        ..TrainConfig::default()
    };
    let base = pretrain(&split, &cfg).unwrap().checkpoint;
    let ada_cfg = TrainConfig {
        toggles: AdapterToggles::all_off(),
        epochs: 0,
        ..cfg.clone()
    };
    let ada = finetune(&split, &base, &ada_cfg, false).unwrap().checkpoint;

    let seqs: Vec<Vec<usize>> = split.users.iter().map(|u| u.train.clone()).collect();
    let excl: Vec<Vec<usize>> = seqs
        .iter()
        .map(|s| s.iter().copied().collect::<BTreeSet<_>>().into_iter().collect())
        .collect();
    let targets: Vec<usize> = split.users.iter().map(|u| u.valid).collect();
    let want = base_top_k(&base.model, &seqs, &excl, 50);
    let got: Vec<Vec<usize>> = retrieve(&ada.model, &seqs, &excl, 50, 1, 64)
        .unwrap()
        .into_iter()
        .map(|r| r.items)
        .collect();
    let same_lists = (0..seqs.len()).filter(|&u| want[u] == got[u]).count();
    let base_hr = hr_at_k(&want, &targets, 50).unwrap();
    let ada_report = evaluate(&ada.model, &split, Phase::Valid, 50, 1, 64).unwrap();
    let pass = same_lists == seqs.len() && ada_report.hr == base_hr;
    outcome(
        pass,
        format!(
            "{same_lists}/{} identical top-50 lists, valid HR@50 base {base_hr:.4} vs single-round no-adapter {:.4}",
            seqs.len(),
            ada_report.hr
        ),
    )
}

fn c4_overfit() -> Outcome {
    let split = cycle_dataset(50, 20, 10).unwrap();
    let cfg = TrainConfig {
        rounds: 1,
        full_vocab: true,
        epochs: 200,
        patience: 200,
        lr: 1e-3,
        dim: 64,
        max_len: 10,
        batch_size: 64,
        eval_k: 1,
        seed: 4,
        ..TrainConfig::default()
    };
    let out = pretrain(&split, &cfg).unwrap();
    let r = evaluate(&out.checkpoint.model, &split, Phase::Train, 1, 1, 64).unwrap();
    outcome(
        r.hr >= 0.95,
        format!(
            "train HR@1 {:.3} (best epoch {} of {})",
            r.hr,
            out.checkpoint.epoch,
            out.history.len()
        ),
    )
}

fn two_cluster_config(seed: u64) -> TrainConfig {
    TrainConfig {
        rounds: 4,
        lambda: 0.5,
        k_ctx: 5,
        ctx_exclude_target: true,
        epochs: 200,
        patience: 10,
        lr: 1e-3,
        dim: 32,
        max_len: 12,
        batch_size: 128,
        eval_k: 20,
        seed,
        ..TrainConfig::default()
    }
}

const FINETUNE_EPOCHS: usize = 30;

fn c5_two_cluster() -> Outcome {
    let start = Instant::now();
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 1..=3u64 {
        let split = two_cluster_dataset(1000, 50, seed).unwrap();
        let cfg = two_cluster_config(seed);
        let base = pretrain(&split, &cfg).unwrap().checkpoint;
        let ft_cfg = TrainConfig {
            epochs: FINETUNE_EPOCHS,
            ..cfg.clone()
        };
        let ada = finetune(&split, &base, &ft_cfg, false).unwrap().checkpoint;
        let b = evaluate(&base.model, &split, Phase::Test, 20, 1, 256).unwrap().hr;
        let a = evaluate(&ada.model, &split, Phase::Test, 20, 4, 256).unwrap().hr;
        let rel = a / b - 1.0;
        if rel >= 0.03 {
            wins += 1;
        }
        parts.push(format!("seed {seed}: base {b:.3} ada {a:.3} ({:+.1}%)", 100.0 * rel));
    }
    let elapsed = start.elapsed();
    let pass = wins >= 2 && elapsed < Duration::from_secs(15 * 60);
    outcome(
        pass,
        format!(
            "test HR@20 {}; {wins}/3 seeds gain >= 3% in {:.0}s",
            parts.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn oracle(lists: &[Vec<usize>], targets: &[usize], k: usize) -> (f64, f64) {
    let mut hits = 0.0;
    let mut gain = 0.0;
    for (list, &t) in lists.iter().zip(targets) {
        for (pos, &item) in list.iter().take(k).enumerate() {
            if item == t {
                hits += 1.0;
                gain += 1.0 / ((pos + 2) as f64).log2();
            }
        }
    }
    let n = lists.len() as f64;
    (hits / n, gain / n)
}

fn c6_metrics() -> Outcome {
    let mut rng = Rng::new(6);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let k = 1 + rng.below(50);
        let mut lists = Vec::with_capacity(100);
        let mut targets = Vec::with_capacity(100);
        for _ in 0..100 {
            let mut items: Vec<usize> = (1..=50).collect();
            rng.shuffle(&mut items);
            items.truncate(k);
            lists.push(items);
            targets.push(1 + rng.below(50));
        }
        let (hr, ndcg) = oracle(&lists, &targets, k);
        worst = worst
            .max((hr_at_k(&lists, &targets, k).unwrap() - hr).abs())
            .max((ndcg_at_k(&lists, &targets, k).unwrap() - ndcg).abs());
    }
    let toy = ndcg_at_k(&[vec![3, 1]], &[1], 2).unwrap();
    let toy_err = (toy - 1.0 / 3f64.log2()).abs();
    outcome(
        worst <= 1e-12 && toy_err <= 1e-9,
        format!("20 random instances max deviation {worst:.1e}; toy NDCG@2 {toy:.12} (error {toy_err:.1e})"),
    )
}

fn random_log(rng: &mut Rng) -> InteractionLog {
    let users = 5 + rng.below(40);
    let items = 5 + rng.below(30);
    let n = 20 + rng.below(500);
    InteractionLog::from_triples((0..n).map(|_| {
        (
            format!("u{}", rng.below(users)),
            format!("i{}", rng.below(items)),
            rng.below(1000) as i64,
        )
    }))
}

fn c7_data() -> Outcome {
    let mut rng = Rng::new(7);
    let mut idempotent = 0;
    let mut nonempty = 0;
    let mut reconstructed = 0;
    let mut users = 0;
    for _ in 0..20 {
        let log = random_log(&mut rng);
        let k = 3 + rng.below(3);
        match kcore_filter(&log, k) {
            Ok(once) => {
                nonempty += 1;
                if kcore_filter(&once, k).map(|twice| twice == once).unwrap_or(false) {
                    idempotent += 1;
                }
                let (split, vocab) = build_split(&once).unwrap();
                let mut by_user: BTreeMap<&str, Vec<(i64, usize, usize)>> = BTreeMap::new();
                for (pos, r) in once.records.iter().enumerate() {
                    by_user
                        .entry(&r.user)
                        .or_default()
                        .push((r.timestamp, pos, vocab.item_id(&r.item).unwrap()));
                }
                for (user, mut recs) in by_user {
                    recs.sort();
                    let want: Vec<usize> = recs.iter().map(|r| r.2).collect();
                    users += 1;
                    if split.users[vocab.user_id(user).unwrap()].history() == want {
                        reconstructed += 1;
                    }
                }
            }
            Err(Error::KcoreVanished(_)) => idempotent += 1,
            Err(e) => return outcome(false, format!("unexpected error {e}")),
        }
    }
    let table = [
        ("Beauty", 22_363, 12_101, 198_502, 99.93),
        ("Sports", 25_598, 18_357, 296_337, 99.95),
        ("Yelp", 30_431, 20_033, 316_354, 99.95),
    ];
    let sparsity: Vec<String> = table
        .iter()
        .map(|&(name, s, i, a, _)| format!("{name} {:.2}%", DatasetStats::from_counts(s, i, a).sparsity_percent()))
        .collect();
    let sparsity_ok = table
        .iter()
        .all(|&(_, s, i, a, want)| (DatasetStats::from_counts(s, i, a).sparsity_percent() - want).abs() < 1e-9);
    outcome(
        idempotent == 20 && reconstructed == users && users > 0 && nonempty > 0 && sparsity_ok,
        format!(
            "k-core idempotent on {idempotent}/20 logs ({nonempty} non-empty), \
             {reconstructed}/{users} users reconstructed, sparsity {} (table: {})",
            sparsity.join(", "),
            table.map(|t| format!("{:.2}%", t.4)).join(", ")
        ),
    )
}

fn c8_retrieval() -> Outcome {
    let n_items = 30;
    let cfg = TrainConfig {
        rounds: 4,
        k_ctx: 2,
        dim: 8,
        max_len: 8,
        dropout: 0.0,
        eval_k: 8,
        ..TrainConfig::default()
    };
    let model: Model<f32> = Model::init(ModelConfig::from_train(&cfg, n_items), &mut Rng::new(8)).unwrap();
    let mut rng = Rng::new(80);
    let mut violations = Vec::new();
    let mut exhausted = 0;
    for call in 0..1000 {
        let rounds = 1 + rng.below(4);
        let users = 1 + rng.below(4);
        let mut seqs = Vec::new();
        let mut excl = Vec::new();
        for _ in 0..users {
            let s: Vec<usize> = (0..1 + rng.below(12)).map(|_| 1 + rng.below(n_items)).collect();
            let mut e: BTreeSet<usize> = s.iter().copied().collect();
            for _ in 0..rng.below(10) {
                e.insert(1 + rng.below(n_items));
            }
            seqs.push(s);
            excl.push(e.into_iter().collect::<Vec<_>>());
        }
        let available = excl.iter().map(|e| n_items - e.len()).min().unwrap();
        let k = rounds + rng.below(available + 3);
        match retrieve(&model, &seqs, &excl, k, rounds, 1 + rng.below(4)) {
            Ok(res) => {
                let sizes = round_sizes(k, rounds);
                for (r, e) in res.iter().zip(&excl) {
                    let distinct: BTreeSet<usize> = r.items.iter().copied().collect();
                    let mut counts = vec![0; rounds];
                    for &t in &r.rounds {
                        counts[t - 1] += 1;
                    }
                    let ok = r.items.len() == k
                        && distinct.len() == k
                        && r.items
                            .iter()
                            .all(|&i| i >= 1 && i <= n_items && e.binary_search(&i).is_err())
                        && r.rounds.windows(2).all(|w| w[0] <= w[1])
                        && counts == sizes;
                    if !ok {
                        violations.push(call);
                    }
                }
            }
            Err(Error::PoolExhausted { .. }) if k > available => exhausted += 1,
            Err(_) => violations.push(call),
        }
    }

    let split = noisy_cycle_dataset(100, n_items, (6, 12), 0.3, 8).unwrap();
    let report = evaluate(&model, &split, Phase::Test, 8, 4, 32).unwrap();
    let monotone = report.per_round.windows(2).all(|w| w[0].hr <= w[1].hr);
    let per_round: Vec<String> = report.per_round.iter().map(|r| format!("{:.2}", r.hr)).collect();
    outcome(
        violations.is_empty() && monotone,
        format!(
            "1000 calls, {} contract violations, {exhausted} correctly exhausted; per-round HR [{}]",
            violations.len(),
            per_round.join(", ")
        ),
    )
}

fn pipeline(dir: &std::path::Path) -> Vec<u8> {
    let data = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let input = data.join("mini.tsv");
    let conf = data.join("mini.conf");
    let out = dir.to_str().unwrap();
    let steps: [Vec<String>; 4] = [
        vec!["prepare".into(), "--input".into(), input.display().to_string()],
        vec!["pretrain".into()],
        vec![
            "finetune".into(),
            "--checkpoint".into(),
            dir.join("pretrained").display().to_string(),
        ],
        vec![
            "evaluate".into(),
            "--checkpoint".into(),
            dir.join("finetuned").display().to_string(),
        ],
    ];
    for step in steps {
        let mut args = vec!["multiround".to_string()];
        args.extend(step);
        args.extend(["--out", out, "--config", conf.to_str().unwrap(), "--seed", "9"].map(String::from));
        let mut sink = Vec::new();
        let mut err = Vec::new();
        let code = multiround::cli::run(&args, &mut sink, &mut err);
        assert_eq!(code, 0, "{}", String::from_utf8_lossy(&err));
    }
    std::fs::read(dir.join("reports.jsonl")).unwrap()
}

fn c9_determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline(a.path());
    let rb = pipeline(b.path());
    outcome(
        !ra.is_empty() && ra == rb,
        format!(
            "two seeded runs wrote {} and {} report bytes, identical: {}",
            ra.len(),
            rb.len(),
            ra == rb
        ),
    )
}

fn c10_ablations() -> Outcome {
    let start = Instant::now();
    let split: SplitDataset = noisy_cycle_dataset(200, 60, (8, 16), 0.2, 10).unwrap();
    let cfg = TrainConfig {
        rounds: 3,
        k_ctx: 3,
        lambda: 0.5,
        dim: 16,
        max_len: 12,
        epochs: 5,
        patience: 3,
        batch_size: 64,
        eval_k: 20,
        seed: 10,
        ..TrainConfig::default()
    };
    let base: Checkpoint = pretrain(&split, &cfg).unwrap().checkpoint;
    let mut labels = BTreeSet::new();
    let mut lines = BTreeSet::new();
    let mut hashes = HashMap::new();
    for ab in Ablation::ALL {
        let r = run_ablation(&split, &base, &cfg, ab).unwrap();
        labels.insert(r.label.clone().unwrap_or_default());
        hashes.insert(r.config_hash.clone(), ab);
        lines.insert(r.to_json_line().unwrap());
    }
    let elapsed = start.elapsed();
    outcome(
        labels.len() == 7 && lines.len() == 7 && hashes.len() == 7 && elapsed < Duration::from_secs(20 * 60),
        format!(
            "{} distinct labels, {} distinct reports, {} distinct configs in {:.0}s",
            labels.len(),
            lines.len(),
            hashes.len(),
            elapsed.as_secs_f64()
        ),
    )
}
