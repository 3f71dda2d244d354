//! Synthetic transfer-learning experiments: data generation, the method
//! comparison per replicate, grid orchestration and metrics.

mod data;
mod harness;
mod metrics;

pub use data::{gen_data, make_theta_source, make_theta_target};
pub use harness::{
    study_grid, read_results, reliability_for, results_header, run_grid, run_replicate, suite_theta_source, summarize,
    timings_path, write_reliability, write_results, write_summary, Method, MetricsRow, ReplicateOutput, Scenario,
    SimConfig, SummaryRow, STUDY_N_TARGET, STUDY_SIGMA_TL2,
};
pub use metrics::{auc, default_nominal_grid, empirical_coverage, mean_se, reliability_curve, rmse, ReliabilityPoint};
