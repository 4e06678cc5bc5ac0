use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bandwidth::Criterion;
use super::solve::PivotedCholesky;
use super::{design, term_names};
use crate::dataset::FeatureTable;
use crate::diagnostics::aicc_from_rss;
use crate::error::{Error, Result};
use crate::spatial::{Bandwidth, Kernel, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwrFit {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    /// Bandwidth in meters resolved at each calibration location.
    pub bandwidths_m: Vec<f64>,
    pub names: Vec<String>,
    /// n × (p+1) local coefficients, intercept first.
    pub beta: DMatrix<f64>,
    #[serde(with = "crate::float_serde::matrix")]
    pub se: DMatrix<f64>,
    #[serde(with = "crate::float_serde::matrix")]
    pub tvalues: DMatrix<f64>,
    pub hat_diag: DVector<f64>,
    pub tr_s: f64,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
    /// Pooled residual standard deviation, `sqrt(RSS/(n - trS))`.
    #[serde(with = "crate::float_serde::scalar")]
    pub sigma_hat: f64,
    #[serde(with = "crate::float_serde::scalar")]
    pub aicc: f64,
    pub train_locations: Vec<Point>,
    pub train_x: DMatrix<f64>,
    pub train_y: DVector<f64>,
}

pub(crate) fn distances(locations: &[Point], at: Point) -> Vec<f64> {
    locations.iter().map(|p| p.dist(&at)).collect()
}

/// Bandwidth in meters at a location, given its distances to the training
/// points. Adaptive bandwidths skip one zero distance (the location itself).
pub(crate) fn bandwidth_at(dists: &[f64], bw: Bandwidth) -> Result<f64> {
    match bw {
        Bandwidth::Fixed(b) => {
            if b > 0.0 && b.is_finite() {
                Ok(b)
            } else {
                Err(Error::InvalidBandwidth(b))
            }
        }
        Bandwidth::Adaptive(k) => {
            let mut others = dists.to_vec();
            if let Some(z) = others.iter().position(|&d| d == 0.0) {
                others.swap_remove(z);
            }
            if k == 0 || k > others.len() {
                return Err(Error::NotEnoughPoints {
                    needed: k,
                    available: others.len(),
                });
            }
            let (_, kth, _) = others.select_nth_unstable_by(k - 1, f64::total_cmp);
            Ok(*kth)
        }
    }
}

pub(crate) fn kernel_weights(dists: &[f64], kernel: Kernel, b: f64) -> Vec<f64> {
    dists.iter().map(|&d| kernel.eval(d, b)).collect()
}

/// Weighted least squares on the rows with positive weight.
struct Local {
    beta: DVector<f64>,
    inv: DMatrix<f64>,
    /// `diag(A⁻¹ ZᵀW²Z A⁻¹)`: coefficient variances per unit σ².
    var_unit: Option<DVector<f64>>,
}

fn local_solve(z: &DMatrix<f64>, y: &DVector<f64>, w: &[f64], want_var: bool) -> Option<Local> {
    let q = z.ncols();
    let idx: Vec<usize> = (0..w.len()).filter(|&k| w[k] > 0.0).collect();
    if idx.len() < q {
        return None;
    }
    let zs = DMatrix::from_fn(idx.len(), q, |r, c| z[(idx[r], c)]);
    let zw = DMatrix::from_fn(idx.len(), q, |r, c| zs[(r, c)] * w[idx[r]]);
    let ys = DVector::from_fn(idx.len(), |r, _| y[idx[r]]);
    let zwt = zw.transpose();
    let a = &zwt * &zs;
    let chol = PivotedCholesky::new(&a);
    if !chol.is_full_rank() {
        return None;
    }
    let beta = chol.solve(&(&zwt * ys));
    let inv = chol.inverse();
    let var_unit = want_var.then(|| {
        let b = &zwt * &zw;
        (&inv * b * &inv).diagonal()
    });
    Some(Local { beta, inv, var_unit })
}

pub(crate) struct Core {
    pub beta: DMatrix<f64>,
    pub fitted: DVector<f64>,
    pub hat_diag: DVector<f64>,
    pub var_unit: DMatrix<f64>,
    pub bandwidths_m: Vec<f64>,
}

/// Calibrates a local model at every training location. With
/// `leave_one_out`, each location's own weight is zeroed and `fitted`
/// holds the leave-one-out predictions.
pub(crate) fn gwr_core(
    locations: &[Point],
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    kernel: Kernel,
    bw: Bandwidth,
    leave_one_out: bool,
    want_var: bool,
) -> Result<Core> {
    let n = z.nrows();
    let q = z.ncols();
    let rows: Vec<(DVector<f64>, f64, f64, Option<DVector<f64>>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let dists = distances(locations, locations[i]);
            let b = bandwidth_at(&dists, bw)?;
            let mut w = kernel_weights(&dists, kernel, b);
            if leave_one_out {
                w[i] = 0.0;
            }
            let local = local_solve(z, y, &w, want_var).ok_or(Error::LocalRankDeficient { location: i })?;
            let zi = z.row(i);
            let fitted = (zi * &local.beta)[(0, 0)];
            let hat = w[i] * (zi * &local.inv * zi.transpose())[(0, 0)];
            Ok((local.beta, fitted, hat, local.var_unit, b))
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let mut beta = DMatrix::zeros(n, q);
    let mut var_unit = DMatrix::zeros(n, if want_var { q } else { 0 });
    let mut fitted = DVector::zeros(n);
    let mut hat_diag = DVector::zeros(n);
    let mut bandwidths_m = Vec::with_capacity(n);
    for (i, (b, f, h, v, bw_m)) in rows.into_iter().enumerate() {
        beta.set_row(i, &b.transpose());
        if let Some(v) = v {
            var_unit.set_row(i, &v.transpose());
        }
        fitted[i] = f;
        hat_diag[i] = h;
        bandwidths_m.push(bw_m);
    }
    Ok(Core {
        beta,
        fitted,
        hat_diag,
        var_unit,
        bandwidths_m,
    })
}

/// Geographically weighted regression at the given kernel and bandwidth.
pub fn gwr_fit(table: &FeatureTable, kernel: Kernel, bandwidth: Bandwidth) -> Result<GwrFit> {
    let n = table.n();
    let z = design(&table.x);
    bandwidth_valid(bandwidth, z.ncols(), n)?;
    let core = gwr_core(&table.locations, &z, &table.y, kernel, bandwidth, false, true)?;
    let residuals = &table.y - &core.fitted;
    let rss = residuals.norm_squared();
    let tr_s = core.hat_diag.sum();
    let sigma_hat = if (n as f64) > tr_s {
        (rss / (n as f64 - tr_s)).sqrt()
    } else {
        f64::NAN
    };
    let se = core.var_unit.map(|v| v.sqrt() * sigma_hat);
    let tvalues = core.beta.component_div(&se);
    Ok(GwrFit {
        kernel,
        bandwidth,
        bandwidths_m: core.bandwidths_m,
        names: term_names(table),
        beta: core.beta,
        se,
        tvalues,
        hat_diag: core.hat_diag,
        tr_s,
        fitted: core.fitted,
        aicc: aicc_from_rss(n, rss, tr_s),
        residuals,
        rss,
        sigma_hat,
        train_locations: table.locations.clone(),
        train_x: table.x.clone(),
        train_y: table.y.clone(),
    })
}

fn bandwidth_valid(bw: Bandwidth, q: usize, n: usize) -> Result<()> {
    match bw {
        Bandwidth::Fixed(b) if !(b > 0.0 && b.is_finite()) => Err(Error::InvalidBandwidth(b)),
        Bandwidth::Adaptive(k) if k < q + 1 => Err(Error::InvalidArgument(format!(
            "adaptive bandwidth {k} is below p+2 = {}",
            q + 1
        ))),
        Bandwidth::Adaptive(k) if k > n => Err(Error::NotEnoughPoints {
            needed: k,
            available: n,
        }),
        _ => Ok(()),
    }
}

/// Bandwidth-search score of a GWR configuration; failures score +∞.
pub fn gwr_criterion(
    table: &FeatureTable,
    kernel: Kernel,
    bandwidth: Bandwidth,
    criterion: Criterion,
) -> f64 {
    let z = design(&table.x);
    criterion_score(&table.locations, &z, &table.y, kernel, bandwidth, criterion)
}

pub(crate) fn criterion_score(
    locations: &[Point],
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    kernel: Kernel,
    bw: Bandwidth,
    criterion: Criterion,
) -> f64 {
    let n = y.len();
    let score = match criterion {
        Criterion::Aicc => gwr_core(locations, z, y, kernel, bw, false, false)
            .map(|c| aicc_from_rss(n, (y - &c.fitted).norm_squared(), c.hat_diag.sum())),
        Criterion::Cv => gwr_core(locations, z, y, kernel, bw, true, false)
            .map(|c| (y - &c.fitted).norm_squared() / n as f64),
    };
    match score {
        Ok(s) if s.is_finite() => s,
        _ => f64::INFINITY,
    }
}

impl GwrFit {
    pub fn n(&self) -> usize {
        self.train_y.len()
    }

    /// Local coefficients calibrated at an arbitrary location from the training data.
    pub fn coefficients_at(&self, at: Point) -> Result<DVector<f64>> {
        let z = design(&self.train_x);
        let dists = distances(&self.train_locations, at);
        let b = bandwidth_at(&dists, self.bandwidth)?;
        let w = kernel_weights(&dists, self.kernel, b);
        local_solve(&z, &self.train_y, &w, false)
            .map(|l| l.beta)
            .ok_or(Error::LocalRankDeficient { location: 0 })
    }
}

/// Out-of-sample prediction: a local model is calibrated at every query
/// location from the retained training data. Rows whose local design is
/// singular come back as `None`.
pub fn gwr_predict(fit: &GwrFit, locations: &[Point], x: &DMatrix<f64>) -> Result<Vec<Option<f64>>> {
    if x.ncols() != fit.train_x.ncols() {
        return Err(Error::Schema(format!(
            "GWR expects {} features, got {}",
            fit.train_x.ncols(),
            x.ncols()
        )));
    }
    if x.nrows() != locations.len() {
        return Err(Error::Schema(format!(
            "{} locations for {} feature rows",
            locations.len(),
            x.nrows()
        )));
    }
    let z = design(&fit.train_x);
    let zq = design(x);
    (0..locations.len())
        .into_par_iter()
        .map(|r| {
            let dists = distances(&fit.train_locations, locations[r]);
            let b = bandwidth_at(&dists, fit.bandwidth)?;
            let w = kernel_weights(&dists, fit.kernel, b);
            Ok(local_solve(&z, &fit.train_y, &w, false).map(|l| (zq.row(r) * l.beta)[(0, 0)]))
        })
        .collect()
}
