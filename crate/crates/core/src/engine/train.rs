use std::collections::BTreeMap;

use log::info;
use serde::{Deserialize, Serialize};

use super::{
    multi_round_objective, Checkpoint, CheckpointPhase, Model, ModelConfig, ObjectiveInput, RoundPlan, Scoring,
    TrainConfig,
};
use crate::adapter::is_adapter_param;
use crate::backbone::ITEM_EMB;
use crate::compute::{adam_step, AdamConfig, AdamState, Graph, Rng, Tensor};
use crate::data::{make_batches, Batch, Phase, SplitDataset, PAD};
use crate::error::{Error, Result};
use crate::eval::evaluate;

/// Learning rate per parameter group; zero freezes the group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    pub backbone: f64,
    pub adapter: f64,
}

impl LearningRates {
    pub fn uniform(lr: f64) -> Self {
        Self {
            backbone: lr,
            adapter: lr,
        }
    }

    pub fn for_param(&self, name: &str) -> f64 {
        if is_adapter_param(name) {
            self.adapter
        } else {
            self.backbone
        }
    }
}

/// Adam moments keyed by parameter name.
#[derive(Debug, Clone, Default)]
pub struct Optimizer {
    states: BTreeMap<String, AdamState<f32>>,
}

impl Optimizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&mut self, name: &str, param: &mut Tensor<f32>, grad: &Tensor<f32>, lr: f64) -> Result<()> {
        let state = self
            .states
            .entry(name.to_string())
            .or_insert_with(|| AdamState::new(param.len()));
        adam_step(param.data_mut(), grad.data(), state, &AdamConfig::with_lr(lr))
    }
}

/// `n` uniform draws from `1..=n_items` avoiding `history` (sorted) and
/// `target`.
pub fn sample_negatives(
    rng: &mut Rng,
    history: &[usize],
    target: usize,
    n_items: usize,
    n: usize,
) -> Result<Vec<usize>> {
    let blocked = history.len() + usize::from(history.binary_search(&target).is_err());
    if blocked >= n_items {
        return Err(Error::PoolExhausted {
            available: 0,
            needed: n,
        });
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let c = 1 + rng.below(n_items);
        if c != target && history.binary_search(&c).is_err() {
            out.push(c);
        }
    }
    Ok(out)
}

fn scoring_for(batch: &Batch, cfg: &TrainConfig, n_items: usize, rng: &mut Rng) -> Result<Scoring> {
    if cfg.full_vocab {
        let width = n_items + 1;
        let mut labels = vec![0i8; batch.rows() * width];
        for r in 0..batch.rows() {
            let row = &mut labels[r * width..(r + 1) * width];
            row[PAD] = -1;
            for &h in &batch.history[r] {
                row[h] = -1;
            }
            row[batch.targets[r]] = 1;
        }
        return Ok(Scoring::Full { labels });
    }
    let per_row = 1 + cfg.n_neg;
    let mut candidates = Vec::with_capacity(batch.rows() * per_row);
    for r in 0..batch.rows() {
        candidates.push(batch.targets[r]);
        candidates.extend(sample_negatives(
            rng,
            &batch.history[r],
            batch.targets[r],
            n_items,
            cfg.n_neg,
        )?);
    }
    Ok(Scoring::Sampled { candidates, per_row })
}

/// One pass over every training row; returns the mean per-row objective.
pub fn train_epoch_ada(
    model: &mut Model<f32>,
    opt: &mut Optimizer,
    split: &SplitDataset,
    cfg: &TrainConfig,
    plan: RoundPlan,
    lrs: LearningRates,
    rng: &mut Rng,
) -> Result<f64> {
    let n_items = model.config.n_items();
    let len = model.config.backbone.max_len;
    let batches = make_batches(split, Phase::Train, len, cfg.batch_size, Some(rng));
    let (mut total, mut rows) = (0.0, 0usize);
    for batch in &batches {
        let scoring = scoring_for(batch, cfg, n_items, rng)?;
        let targets: Vec<Vec<usize>> = batch.targets.iter().map(|&t| vec![t]).collect();
        let input = ObjectiveInput {
            ids: &batch.ids,
            rows: batch.rows(),
            len,
            scoring: &scoring,
            ctx_exclude: cfg.ctx_exclude_target.then_some(targets.as_slice()),
        };
        let mut g = Graph::training(rng.fork());
        let p = model.params.bind(&mut g, |n| lrs.for_param(n) > 0.0);
        let obj = multi_round_objective(&mut g, &p, &model.config, plan, &input, None)?;
        let loss = g.value(obj.total).data()[0] as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss {loss}")));
        }
        let mut grads = g.backward(obj.total)?;
        for (name, var) in p.iter() {
            let lr = lrs.for_param(name);
            if lr <= 0.0 {
                continue;
            }
            let mut grad = grads.take(var);
            if name == ITEM_EMB {
                grad.row_mut(PAD).iter_mut().for_each(|v| *v = 0.0);
            }
            opt.step(name, model.params.get_mut(name)?, &grad, lr)?;
        }
        total += loss * batch.rows() as f64;
        rows += batch.rows();
    }
    Ok(if rows == 0 { 0.0 } else { total / rows as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub valid_hr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation parameters.
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLog>,
    pub stopped_early: bool,
}

struct Run<'a> {
    split: &'a SplitDataset,
    cfg: &'a TrainConfig,
    plan: RoundPlan,
    lrs: LearningRates,
    eval_rounds: usize,
    phase: CheckpointPhase,
}

fn run_training(mut model: Model<f32>, run: Run<'_>, rng: &mut Rng) -> Result<TrainOutcome> {
    let cfg = run.cfg;
    let mut opt = Optimizer::new();
    let mut best = model.clone();
    let mut best_hr = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        let loss = train_epoch_ada(&mut model, &mut opt, run.split, cfg, run.plan, run.lrs, rng)?;
        let hr = evaluate(
            &model,
            run.split,
            Phase::Valid,
            cfg.eval_k,
            run.eval_rounds,
            cfg.batch_size,
        )?
        .hr;
        info!(
            "{} epoch {epoch}: loss {loss:.5}, valid HR@{} {hr:.5}",
            run.phase.as_str(),
            cfg.eval_k
        );
        history.push(EpochLog {
            epoch,
            loss,
            valid_hr: hr,
        });
        if hr > best_hr {
            best_hr = hr;
            best_epoch = epoch;
            best = model.clone();
        } else if epoch - best_epoch >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            phase: run.phase,
            config: cfg.clone(),
            model: best,
            epoch: best_epoch,
        },
        history,
        stopped_early,
    })
}

/// Trains the backbone alone: one round, no adapters, early stopping on
/// validation HR@`eval_k`.
pub fn pretrain(split: &SplitDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let mut init_rng = rng.fork();
    let mut train_rng = rng.fork();
    let model = Model::init(ModelConfig::base(cfg, split.n_items), &mut init_rng)?;
    let run = Run {
        split,
        cfg,
        plan: RoundPlan {
            rounds: 1,
            lambda: 1.0,
            k_ctx: cfg.k_ctx,
        },
        lrs: LearningRates {
            backbone: cfg.lr,
            adapter: 0.0,
        },
        eval_rounds: 1,
        phase: CheckpointPhase::Pretrained,
    };
    run_training(model, run, &mut train_rng)
}

/// Jointly trains backbone and fresh adapters for `cfg.rounds` rounds,
/// starting from `base` (or from scratch with `fresh_backbone`).
pub fn finetune(
    split: &SplitDataset,
    base: &Checkpoint,
    cfg: &TrainConfig,
    fresh_backbone: bool,
) -> Result<TrainOutcome> {
    finetune_with(split, base, cfg, fresh_backbone, LearningRates::uniform(cfg.lr))
}

pub(crate) fn finetune_with(
    split: &SplitDataset,
    base: &Checkpoint,
    cfg: &TrainConfig,
    fresh_backbone: bool,
    lrs: LearningRates,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if base.phase != CheckpointPhase::Pretrained {
        return Err(Error::Phase {
            found: base.phase.as_str(),
            expected: CheckpointPhase::Pretrained.as_str(),
        });
    }
    base.check_compatible(cfg, split.n_items)?;
    let mut rng = Rng::new(cfg.seed);
    let mut init_rng = rng.fork();
    let mut train_rng = rng.fork();
    let mut model = Model::init(ModelConfig::from_train(cfg, split.n_items), &mut init_rng)?;
    if !fresh_backbone {
        model.params.extend(base.model.backbone_params());
    }
    let run = Run {
        split,
        cfg,
        plan: RoundPlan {
            rounds: cfg.rounds,
            lambda: cfg.lambda,
            k_ctx: cfg.k_ctx,
        },
        lrs,
        eval_rounds: cfg.rounds,
        phase: CheckpointPhase::Finetuned,
    };
    run_training(model, run, &mut train_rng)
}
