use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::adapter::{
    extend_user_context, init_adapters, ira, is_adapter_param, ura, AdapterConfig, AdapterToggles, ItemContext,
    UserContextStack,
};
use crate::backbone::{embed_sequence, encode, init_backbone, score_items, top_k, BackboneConfig, ITEM_EMB};
use crate::compute::{Bound, Graph, ParamSet, Rng, Scalar, Tensor, Var, LOG_CLAMP};
use crate::error::{Error, Result};

/// Architecture of a model: backbone, adapters and which adapter parts run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub adapter: AdapterConfig,
    pub toggles: AdapterToggles,
}

impl ModelConfig {
    pub fn from_train(cfg: &TrainConfig, n_items: usize) -> Self {
        Self {
            backbone: cfg.backbone_config(n_items),
            adapter: cfg.adapter_config(),
            toggles: cfg.toggles,
        }
    }

    /// The plain backbone: adapters switched off.
    pub fn base(cfg: &TrainConfig, n_items: usize) -> Self {
        Self {
            toggles: AdapterToggles::all_off(),
            ..Self::from_train(cfg, n_items)
        }
    }

    pub fn n_items(&self) -> usize {
        self.backbone.n_items
    }
}

/// Parameters plus the architecture they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamSet<T>,
}

impl<T: Scalar> Model<T> {
    /// Fresh backbone parameters and, unless every adapter is off, fresh
    /// adapter parameters.
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        let mut params = init_backbone(&config.backbone, rng)?;
        if config.toggles.enable_ira || config.toggles.enable_ura {
            params.extend(init_adapters(&config.adapter, rng));
        }
        Ok(Self { config, params })
    }

    /// Backbone parameters only.
    pub fn backbone_params(&self) -> ParamSet<T> {
        self.params.filtered(|n| !is_adapter_param(n))
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }
}

/// One round: embed, adapt items, encode, adapt the user vector.
#[allow(clippy::too_many_arguments)]
pub fn forward_round<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &ModelConfig,
    ids: &[usize],
    rows: usize,
    len: usize,
    items: &ItemContext,
    users: &UserContextStack,
) -> Result<Var> {
    let table = p.get(ITEM_EMB)?;
    let e = embed_sequence(g, table, ids, rows, len)?;
    let e = ira(g, p, &cfg.adapter, &cfg.toggles, e, ids, table, items)?;
    let f = encode(g, p, &cfg.backbone, e, ids)?;
    ura(g, p, &cfg.adapter, &cfg.toggles, f, users)
}

/// Adds each user's `k` best-scoring items not yet pooled (nor in
/// `extra_exclude`) to the pool. Ties go to the lower id.
pub fn extend_item_context<T: Scalar>(
    pool: &mut ItemContext,
    f: &Tensor<T>,
    table: &Tensor<T>,
    k: usize,
    extra_exclude: Option<&[Vec<usize>]>,
) -> Result<()> {
    let exclude: Vec<Vec<usize>> = (0..pool.rows())
        .map(|r| {
            let mut ex = pool.pool(r).to_vec();
            if let Some(extra) = extra_exclude {
                ex.extend_from_slice(&extra[r]);
            }
            ex
        })
        .collect();
    let scores = score_items(f, table, &exclude)?;
    for r in 0..pool.rows() {
        let best = top_k(scores.row(r), k);
        if best.len() < k {
            return Err(Error::PoolExhausted {
                available: best.len(),
                needed: k,
            });
        }
        pool.push(r, &best)?;
    }
    Ok(())
}

/// Mean over users of `-log σ(pos) - Σ log(1 - σ(neg))`, log arguments
/// clamped at 1e-12.
pub fn round_loss(pos: &[f64], neg: &[Vec<f64>]) -> f64 {
    if pos.is_empty() {
        return 0.0;
    }
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let total: f64 = pos
        .iter()
        .zip(neg)
        .map(|(&p, ns)| {
            -sig(p).max(LOG_CLAMP).ln() - ns.iter().map(|&n| (1.0 - sig(n)).max(LOG_CLAMP).ln()).sum::<f64>()
        })
        .sum();
    total / pos.len() as f64
}

/// `Σ_t λ^t L_t` with `t` starting at 1.
pub fn total_loss(per_round: &[f64], lambda: f64) -> f64 {
    per_round
        .iter()
        .enumerate()
        .map(|(t, l)| lambda.powi(t as i32 + 1) * l)
        .sum()
}

/// How each round's loss scores items.
#[derive(Debug, Clone)]
pub enum Scoring {
    /// Row-major `[B, M]` candidate ids; column 0 is the positive.
    Sampled { candidates: Vec<usize>, per_row: usize },
    /// Labels over the whole table `[B, n_items + 1]`: 1 positive, 0
    /// negative, -1 ignored.
    Full { labels: Vec<i8> },
}

/// Inputs of the multi-round objective for one batch.
#[derive(Debug, Clone)]
pub struct ObjectiveInput<'a> {
    pub ids: &'a [usize],
    pub rows: usize,
    pub len: usize,
    pub scoring: &'a Scoring,
    /// Extra per-row ids kept out of the context pools.
    pub ctx_exclude: Option<&'a [Vec<usize>]>,
}

/// Rounds, decay and per-round context size of the objective.
#[derive(Debug, Clone, Copy)]
pub struct RoundPlan {
    pub rounds: usize,
    pub lambda: f64,
    pub k_ctx: usize,
}

pub struct Objective {
    pub total: Var,
    pub round_losses: Vec<Var>,
    pub user_vectors: Vec<Var>,
    /// Item context seen by each round.
    pub contexts: Vec<ItemContext>,
}

fn round_loss_on_graph<T: Scalar>(g: &mut Graph<T>, table: Var, f: Var, scoring: &Scoring) -> Result<Var> {
    match scoring {
        Scoring::Sampled { candidates, per_row } => {
            let b = g.shape(f)[0];
            let d = g.shape(f)[1];
            let cand = g.gather_rows(table, candidates, &[b, *per_row])?;
            let f3 = g.reshape(f, &[b, 1, d])?;
            let s = g.bmm(f3, cand, true)?;
            let s = g.reshape(s, &[b, *per_row])?;
            let labels: Vec<i8> = (0..b * per_row).map(|i| i8::from(i % per_row == 0)).collect();
            g.bce(s, &labels)
        }
        Scoring::Full { labels } => {
            let s = g.matmul_nt(f, table)?;
            g.bce(s, labels)
        }
    }
}

/// Builds `Σ_t λ^t L_t` on `g`. Gradients flow through the user stack;
/// pool selection is taken from forward values (a constant), or from
/// `fixed` contexts when given.
pub fn multi_round_objective<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &ModelConfig,
    plan: RoundPlan,
    input: &ObjectiveInput<'_>,
    fixed: Option<&[ItemContext]>,
) -> Result<Objective> {
    let table = p.get(ITEM_EMB)?;
    let mut items = ItemContext::new(input.rows, cfg.adapter.c_max);
    let mut users = UserContextStack::new();
    let mut round_losses = Vec::with_capacity(plan.rounds);
    let mut user_vectors = Vec::with_capacity(plan.rounds);
    let mut contexts = Vec::with_capacity(plan.rounds);
    let mut total: Option<Var> = None;
    for t in 1..=plan.rounds {
        if let Some(fx) = fixed {
            items = fx[t - 1].clone();
        }
        contexts.push(items.clone());
        let f = forward_round(g, p, cfg, input.ids, input.rows, input.len, &items, &users)?;
        let l = round_loss_on_graph(g, table, f, input.scoring)?;
        let weighted = g.scale(l, plan.lambda.powi(t as i32));
        total = Some(match total {
            Some(acc) => g.add(acc, weighted)?,
            None => weighted,
        });
        round_losses.push(l);
        user_vectors.push(f);
        if t < plan.rounds {
            if fixed.is_none() {
                let fv = g.value(f).clone();
                if !fv.all_finite() {
                    return Err(Error::Diverged(format!("non-finite user vector in round {t}")));
                }
                let tv = g.value(table).clone();
                extend_item_context(&mut items, &fv, &tv, plan.k_ctx, input.ctx_exclude)?;
            }
            extend_user_context(&mut users, f);
        }
    }
    let total = total.ok_or_else(|| Error::Config("rounds must be at least 1".into()))?;
    Ok(Objective {
        total,
        round_losses,
        user_vectors,
        contexts,
    })
}
