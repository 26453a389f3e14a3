//! Evaluation harness: best-of-K metrics, per-domain reports, and the
//! ablation-grid runner.

pub mod ablation;
pub mod evaluate;
pub mod metrics;

pub use ablation::{ablation_grid, standard_grid, AblationRow, AblationTable};
pub use evaluate::{config_digest, evaluate, DomainMetrics, MetricsReport};
pub use metrics::{brute_force_metric_oracle, min_ade_k, min_fde_k};
