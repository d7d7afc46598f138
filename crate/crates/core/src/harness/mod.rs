//! Evaluation suite, report rendering, oracle self-tests and the CLI.

pub mod cli;
mod eval;
mod metrics;
pub mod selftest;
pub mod svg;

pub use eval::{evaluate, marginalized_estimate, marginalized_trajectory, EvalOptions, EvalReport, HistogramData, ProblemEval};
pub use metrics::{distance, histogram, histogram_distance, mean_std, median, quantile_sorted, rmse, tv_distance, BoxStats};
