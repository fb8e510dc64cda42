#![allow(dead_code)]

use multiround::backbone::BackboneKind;
use multiround::compute::{grad_check, Graph, Rng};
use multiround::engine::{multi_round_objective, Model, ModelConfig, ObjectiveInput, RoundPlan, Scoring, TrainConfig};

/// Full-vocabulary labels: target 1, pad and history items masked.
pub fn full_labels(ids: &[usize], len: usize, targets: &[usize], n_items: usize) -> Vec<i8> {
    let mut labels = vec![0i8; targets.len() * (n_items + 1)];
    for (r, &t) in targets.iter().enumerate() {
        let row = &mut labels[r * (n_items + 1)..(r + 1) * (n_items + 1)];
        row[0] = -1;
        for &i in &ids[r * len..(r + 1) * len] {
            row[i] = -1;
        }
        row[t] = 1;
    }
    labels
}

/// Largest relative error of a central-difference check of the two-round
/// objective (batch 2, length 4, dim 8, two pooled items per round) with
/// contexts frozen from a first pass.
pub fn end_to_end_gradient_error(kind: BackboneKind, seed: u64) -> f64 {
    let cfg = TrainConfig {
        rounds: 2,
        k_ctx: 2,
        max_len: 4,
        dim: 8,
        dropout: 0.0,
        backbone: kind,
        lambda: 0.5,
        epochs: 3,
        batch_size: 16,
        eval_k: 4,
        seed: 3,
        ..TrainConfig::default()
    };
    let n_items = 7;
    let mut model: Model<f64> = Model::init(ModelConfig::from_train(&cfg, n_items), &mut Rng::new(seed)).unwrap();
    let mut rng = Rng::new(seed + 100);
    for (name, t) in model.params.iter_mut() {
        if name.starts_with("ira.lft.re") || name.starts_with("ira.lft.im") || name.contains("filter_") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.uniform(-1.0, 1.0));
        }
    }
    let ids = [0, 3, 1, 5, 2, 6, 4, 1];
    let scoring = Scoring::Full {
        labels: full_labels(&ids, 4, &[7, 3], n_items),
    };
    let input = ObjectiveInput {
        ids: &ids,
        rows: 2,
        len: 4,
        scoring: &scoring,
        ctx_exclude: None,
    };
    let plan = RoundPlan {
        rounds: 2,
        lambda: 0.7,
        k_ctx: 2,
    };
    let mut g = Graph::new();
    let p = model.params.bind(&mut g, |_| false);
    let contexts = multi_round_objective(&mut g, &p, &model.config, plan, &input, None)
        .unwrap()
        .contexts;
    assert_eq!(contexts[1].pool(0).len(), 2);
    let report = grad_check(&model.params.to_vec(), 1e-3, |g, vars| {
        let p = model.params.bound_from(vars);
        Ok(multi_round_objective(g, &p, &model.config, plan, &input, Some(&contexts))?.total)
    })
    .unwrap();
    assert!(report.checked > 500);
    report.max_rel_error
}
