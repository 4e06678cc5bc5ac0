//! LASSO feature selection and local collinearity screening.

mod collinearity;
mod lasso;
mod select;

pub use collinearity::{local_collinearity, CollinearityReport, CN_THRESHOLD, VIF_THRESHOLD};
pub use lasso::{kkt_residual, lambda_grid, lambda_max, lasso_fit, lasso_path, LassoFit};
pub use select::{
    lasso_select, screen_collinearity, write_selection_csv, FeatureStatus, SelectedBy, Selection,
    PATH_LENGTH, PATH_RATIO,
};
