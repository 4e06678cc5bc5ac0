//! Model-comparison metrics, K-fold cross-validation and residual Moran's I.

mod cv;
mod metrics;
mod moran;
mod report;

pub use cv::{fold_assignment, kfold_cv, CvResult, FoldOutcome, FoldReport, Pipeline};
pub use metrics::{aicc, aicc_from_rss, metrics, rmse, MetricsReport};
pub use moran::{morans_i, Alternative, MoranResult, PermutationSummary, DEFAULT_PERMUTATIONS};
pub use report::{ablate, evaluate, full_grid, render_text, write_csv, EvaluationRow, Layout, MoranSettings};
