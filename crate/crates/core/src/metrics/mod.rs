//! Recovery scores and the betweenness-change analysis.

mod analysis;
mod graph;
mod prf;
mod stats;
pub mod synthetic;

pub use analysis::{
    betweenness_change, mean_betweenness, MetricsReport, NodeChange, PerTime, SubjectGraphs, Summary, DEFAULT_ALPHA,
};
pub use graph::betweenness;
pub use prf::{f_curve, mean_f, prf_at_t, MeanCi, PrfCurve};
pub use stats::{holm_adjust, wilcoxon_rank_sum};
