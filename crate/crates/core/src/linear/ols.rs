use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::solve::PivotedCholesky;
use super::{design, term_names};
use crate::dataset::FeatureTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    /// `intercept` followed by the feature names.
    pub names: Vec<String>,
    pub beta: DVector<f64>,
    #[serde(with = "crate::float_serde::vector")]
    pub se: DVector<f64>,
    #[serde(with = "crate::float_serde::vector")]
    pub tvalues: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    pub hat_diag: DVector<f64>,
    pub rss: f64,
    /// Unbiased residual standard deviation, `sqrt(RSS/(n-p-1))`.
    #[serde(with = "crate::float_serde::scalar")]
    pub sigma_hat: f64,
    pub tr_s: f64,
    pub n: usize,
}

/// Ordinary least squares with an intercept.
pub fn ols_fit(table: &FeatureTable) -> Result<OlsFit> {
    let n = table.n();
    let z = design(&table.x);
    let q = z.ncols();
    if n < q {
        return Err(Error::NotEnoughPoints {
            needed: q,
            available: n,
        });
    }
    let zt = z.transpose();
    let a = &zt * &z;
    let chol = PivotedCholesky::new(&a);
    let names = term_names(table);
    if !chol.is_full_rank() {
        return Err(Error::RankDeficient {
            dependent: chol.dependent().into_iter().map(|j| names[j].clone()).collect(),
            basis: chol.basis().into_iter().map(|j| names[j].clone()).collect(),
        });
    }
    let beta = chol.solve(&(&zt * &table.y));
    let inv = chol.inverse();
    let fitted = &z * &beta;
    let residuals = &table.y - &fitted;
    let rss = residuals.norm_squared();
    let hat_diag = DVector::from_fn(n, |i, _| {
        let zi = z.row(i);
        (zi * &inv * zi.transpose())[(0, 0)]
    });
    let dof = n as f64 - q as f64;
    let sigma_hat = if dof > 0.0 { (rss / dof).sqrt() } else { f64::NAN };
    let se = DVector::from_fn(q, |j, _| (inv[(j, j)]).sqrt() * sigma_hat);
    let tvalues = beta.component_div(&se);
    Ok(OlsFit {
        names,
        beta,
        se,
        tvalues,
        fitted,
        residuals,
        hat_diag,
        rss,
        sigma_hat,
        tr_s: q as f64,
        n,
    })
}

impl OlsFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.ncols() + 1 != self.beta.len() {
            return Err(Error::Schema(format!(
                "OLS expects {} features, got {}",
                self.beta.len() - 1,
                x.ncols()
            )));
        }
        Ok(design(x) * &self.beta)
    }
}
