//! Task suites, trial execution, metrics and reports.

mod metrics;
mod report;
mod suite;
mod trial;

pub use metrics::{compute_metrics, format_ratio, render_ratio_table, GroupMetrics, Metrics, MetricsError};
pub use report::{emit_report, render_summary, replay, trace_file_name, ReplayError, ReplaySummary};
pub use suite::{load_suite, trial_world, Family, Milestone, Predicate, SchemaError, Suite, TaskSpec, WorldSource};
pub use trial::{
    classify_failure, classify_trace, run_suite, run_trial, trial_seed, BackendMode, FailureClass, SuiteRun, Tallies,
    TrialResult, TrialSetup,
};
