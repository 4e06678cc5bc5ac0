//! OLS, GWR and MGWR estimation with bandwidth search and local inference.

mod bandwidth;
pub(crate) mod gwr;
mod inference;
mod mgwr;
mod ols;
pub mod solve;

use nalgebra::DMatrix;

use crate::dataset::FeatureTable;

pub use bandwidth::{
    golden_section, select_bandwidth, BandwidthMode, BandwidthSelection, Criterion, SearchStep,
};
pub use gwr::{gwr_criterion, gwr_fit, gwr_predict, GwrFit};
pub use inference::{
    coefficient_rows, loocv_r2, significance, write_coefficients_csv, CoefficientRow, FeatureSignificance,
    LocalFit, SignificanceReport,
};
pub use mgwr::{mgwr_fit, MgwrFit, MgwrOptions, MAX_HAT_N};
pub use ols::{ols_fit, OlsFit};

pub const INTERCEPT: &str = "intercept";

/// `[1 | X]`.
pub(crate) fn design(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

pub(crate) fn term_names(table: &FeatureTable) -> Vec<String> {
    std::iter::once(INTERCEPT.to_string())
        .chain(table.feature_names())
        .collect()
}
