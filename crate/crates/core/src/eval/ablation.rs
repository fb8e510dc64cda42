use serde::{Deserialize, Serialize};

use super::{evaluate, MetricReport};
use crate::data::{Phase, SplitDataset};
use crate::engine::{finetune, Checkpoint, TrainConfig};
use crate::error::Result;

/// Single-component removals of the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ablation {
    NoLft,
    NoCat,
    NoIra,
    NoGru,
    NoMlp,
    NoUra,
    NoPretrain,
}

impl Ablation {
    pub const ALL: [Ablation; 7] = [
        Ablation::NoLft,
        Ablation::NoCat,
        Ablation::NoIra,
        Ablation::NoGru,
        Ablation::NoMlp,
        Ablation::NoUra,
        Ablation::NoPretrain,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::NoLft => "w/o LFT",
            Ablation::NoCat => "w/o CAT",
            Ablation::NoIra => "w/o IRA",
            Ablation::NoGru => "w/o GRU",
            Ablation::NoMlp => "w/o MLP",
            Ablation::NoUra => "w/o URA",
            Ablation::NoPretrain => "w/o PT",
        }
    }

    /// Config with the component switched off, and whether the backbone
    /// starts from scratch.
    pub fn apply(self, cfg: &TrainConfig) -> (TrainConfig, bool) {
        let mut c = cfg.clone();
        let t = &mut c.toggles;
        match self {
            Ablation::NoLft => t.enable_lft = false,
            Ablation::NoCat => t.enable_cat = false,
            Ablation::NoIra => t.enable_ira = false,
            Ablation::NoGru => t.enable_ura_gru = false,
            Ablation::NoMlp => t.enable_ura_mlp = false,
            Ablation::NoUra => t.enable_ura = false,
            Ablation::NoPretrain => return (c, true),
        }
        (c, false)
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Fine-tunes and test-evaluates one variant, returning a labeled report.
pub fn run_ablation(
    split: &SplitDataset,
    base: &Checkpoint,
    cfg: &TrainConfig,
    ablation: Ablation,
) -> Result<MetricReport> {
    let (c, fresh) = ablation.apply(cfg);
    let outcome = finetune(split, base, &c, fresh)?;
    let mut report = evaluate(
        &outcome.checkpoint.model,
        split,
        Phase::Test,
        c.eval_k,
        c.rounds,
        c.batch_size,
    )?;
    report.epoch = outcome.checkpoint.epoch;
    report.config_hash = c.hash();
    report.label = Some(ablation.label().into());
    Ok(report)
}
