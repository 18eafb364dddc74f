//! Error metrics, error distributions and learning curves.

mod curve;
mod kde;
mod metric;
mod report;
mod split;

pub use curve::{learning_curve, parse_sizes, CurveModel, LearningCurve};
pub use kde::{default_grid, kde_pdf, silverman_bandwidth, Density};
pub use metric::{velocity_error, ErrorMetric};
pub use report::{
    dataset_digest, evaluate_models, DatasetInfo, DominanceCheck, ErrorSummary, EvalModel,
    EvalReport, ModelRow, RowKind, SplitInfo, DOMINANCE_TOL, KDE_POINTS,
};
pub use split::{check_disjoint, incidence_angle, split_dataset, Split, SplitConfig};
