//! Detection metrics, redundancy statistics and the benchmark driver.

mod auroc;
mod bench;
mod redundancy;

pub use auroc::{auroc, oriented_auroc, LabeledScore};
pub use bench::{
    generate_questions, resolve_labels, run_benchmark, score_questions, BenchReport, ConditionSummary, ReportRow, ScoreRow,
    REPORT_HEADER, SUMMARY_HEADER,
};
pub use redundancy::{prefix_related, prefix_sharing_stats, RedundancyStats};
