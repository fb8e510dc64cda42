//! Ranking metrics, the evaluation protocol, sweeps and ablations.

mod ablation;
mod evaluate;
mod metrics;
mod report;
mod sweep;

pub use ablation::{run_ablation, Ablation};
pub use evaluate::evaluate;
pub use metrics::{hr_at_k, ndcg_at_k, rank_within};
pub use report::{append_reports, read_reports, MetricReport, RoundMetric};
pub use sweep::{save_sweep_csv, sweep, write_sweep_csv, SweepGrid, SweepRow};
