//! Metrics, prompt classification and statistics over recorded traces.

pub mod classify;
pub mod metrics;
pub mod report;
pub mod stats;
pub mod text;

pub use classify::{classify_prompt, PromptCategory};
pub use metrics::{compute_trace_metrics, rolling_average, AnalysisConfig, MetricBank, MetricSpec, MetricValue, TraceMetrics};
pub use report::{build_report, write_report, Report, ReportConfig};
pub use stats::{group_summary, ols_dummy, ptukey, qtukey, tukey_kramer, GroupSample};
pub use text::{density, normalized_similarity, word_edit_distance};
