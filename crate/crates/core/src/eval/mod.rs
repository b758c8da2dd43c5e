//! Metrics, statistics, diagnostic experiments and report files.

pub mod experiments;
pub mod metrics;
pub mod report;
pub mod stats;

pub use experiments::*;
pub use metrics::*;
pub use report::{config_hash, save_histogram_png, save_panel_png, write_csv, write_json, Stamped};
pub use stats::{compare, paired_ttest, t_two_sided_p, ComparisonReport, Direction, TTest};
