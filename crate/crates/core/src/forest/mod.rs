//! Random forest regression, geographical random forests and tree SHAP.

mod grf;
pub(crate) mod model;
mod shap;
mod tree;

pub use grf::{default_grf_k, grf_fit, GrfModel};
pub use model::{rf_fit, ForestModel, ForestParams};
pub use shap::{shap_summary, tree_shap, tree_shap_single, write_beeswarm_csv, ShapSummary, ShapValues};
pub use tree::{Node, Tree};
