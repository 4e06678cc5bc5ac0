use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bandwidth::{bracket, golden_section, select_bandwidth, BandwidthMode, Criterion};
use super::solve::PivotedCholesky;
use super::{design, term_names};
use crate::dataset::FeatureTable;
use crate::diagnostics::aicc_from_rss;
use crate::error::{Error, Result};
use crate::spatial::Kernel;

/// Largest n for which n × n hat matrices are materialized.
pub const MAX_HAT_N: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgwrOptions {
    pub kernel: Kernel,
    pub criterion: Criterion,
    pub max_iterations: usize,
    /// Convergence threshold on the relative RSS change.
    pub tolerance: f64,
    /// Bandwidths are searched in every one of the first `search_every_until` iterations ...
    pub search_every_until: usize,
    /// ... and afterwards every `search_period`-th iteration.
    pub search_period: usize,
}

impl Default for MgwrOptions {
    fn default() -> Self {
        Self {
            kernel: Kernel::Bisquare,
            criterion: Criterion::Aicc,
            max_iterations: 200,
            tolerance: 1e-5,
            search_every_until: 10,
            search_period: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgwrIteration {
    pub iteration: usize,
    pub rss: f64,
    /// `|RSS_t - RSS_{t-1}| / RSS_t`.
    #[serde(with = "crate::float_serde::scalar")]
    pub soc_rss: f64,
    pub bandwidths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgwrFit {
    pub kernel: Kernel,
    pub criterion: Criterion,
    pub names: Vec<String>,
    /// Adaptive neighbour count per term, intercept first.
    pub bandwidths: Vec<usize>,
    /// Median resolved bandwidth in meters per term.
    pub bandwidth_median_m: Vec<f64>,
    pub initial_bandwidth: usize,
    pub beta: DMatrix<f64>,
    #[serde(with = "crate::float_serde::matrix")]
    pub se: DMatrix<f64>,
    #[serde(with = "crate::float_serde::matrix")]
    pub tvalues: DMatrix<f64>,
    /// Additive terms `x_ij β_ij`; they sum to `fitted` row-wise.
    pub terms: DMatrix<f64>,
    pub enp: Vec<f64>,
    pub tr_s: f64,
    pub hat_diag: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
    #[serde(with = "crate::float_serde::scalar")]
    pub sigma_hat: f64,
    #[serde(with = "crate::float_serde::scalar")]
    pub aicc: f64,
    pub converged: bool,
    pub trace: Vec<MgwrIteration>,
}

/// Pairwise distances with each row's distances to the other points sorted.
struct Distances {
    d: DMatrix<f64>,
    sorted: Vec<Vec<f64>>,
}

impl Distances {
    fn new(table: &FeatureTable) -> Self {
        let n = table.n();
        let loc = &table.locations;
        let d = DMatrix::from_fn(n, n, |i, k| loc[i].dist(&loc[k]));
        let sorted = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row: Vec<f64> = (0..n).filter(|&k| k != i).map(|k| d[(i, k)]).collect();
                row.sort_by(f64::total_cmp);
                row
            })
            .collect();
        Self { d, sorted }
    }

    fn bandwidth(&self, i: usize, k: usize) -> f64 {
        self.sorted[i][k - 1]
    }
}

/// Row-normalized univariate smoother `M[i,k] = w_ik x_k / Σ_l w_il x_l²`,
/// so that `β = M y`. Self weight is dropped when `leave_one_out`.
fn univariate_smoother(
    dist: &Distances,
    x: &[f64],
    kernel: Kernel,
    k: usize,
    leave_one_out: bool,
) -> Option<DMatrix<f64>> {
    let n = x.len();
    let rows: Vec<Option<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let b = dist.bandwidth(i, k);
            let mut row: Vec<f64> = (0..n).map(|l| kernel.eval(dist.d[(i, l)], b) * x[l]).collect();
            if leave_one_out {
                row[i] = 0.0;
            }
            let a: f64 = row.iter().zip(x).map(|(w, xl)| w * xl).sum();
            if !(a > 0.0) {
                return None;
            }
            row.iter_mut().for_each(|v| *v /= a);
            Some(row)
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        for (l, v) in row.into_iter().enumerate() {
            m[(i, l)] = v;
        }
    }
    Some(m)
}

fn univariate_score(
    dist: &Distances,
    x: &[f64],
    y: &DVector<f64>,
    kernel: Kernel,
    k: usize,
    c: Criterion,
) -> f64 {
    let n = x.len();
    let Some(m) = univariate_smoother(dist, x, kernel, k, c == Criterion::Cv) else {
        return f64::INFINITY;
    };
    let beta = &m * y;
    let rss: f64 = (0..n).map(|i| (y[i] - x[i] * beta[i]).powi(2)).sum();
    match c {
        Criterion::Cv => rss / n as f64,
        Criterion::Aicc => {
            let tr: f64 = (0..n).map(|i| x[i] * m[(i, i)]).sum();
            aicc_from_rss(n, rss, tr)
        }
    }
}

/// `a * b`, parallel over column blocks of `b`.
fn par_matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.ncols();
    let chunk = 64;
    let blocks: Vec<DMatrix<f64>> = (0..n.div_ceil(chunk))
        .into_par_iter()
        .map(|bi| {
            let s = bi * chunk;
            a * b.columns(s, chunk.min(n - s))
        })
        .collect();
    let mut out = DMatrix::zeros(a.nrows(), n);
    for (bi, blk) in blocks.into_iter().enumerate() {
        out.columns_mut(bi * chunk, blk.ncols()).copy_from(&blk);
    }
    out
}

/// Multiscale GWR by backfitting, adaptive bandwidths only. The table must
/// be standardized.
pub fn mgwr_fit(table: &FeatureTable, opts: &MgwrOptions) -> Result<MgwrFit> {
    let n = table.n();
    if table.standardization.is_none() {
        return Err(Error::InvalidArgument(
            "MGWR requires a standardized table".into(),
        ));
    }
    if n > MAX_HAT_N {
        return Err(Error::TooLarge(format!(
            "MGWR materializes n×n hat matrices; n = {n} exceeds {MAX_HAT_N}"
        )));
    }
    let z = design(&table.x);
    let q = z.ncols();
    let y = &table.y;
    let dist = Distances::new(table);
    let (lo, hi) = bracket(table, q, BandwidthMode::Adaptive)?;

    // Start from the GWR fit at its own optimal bandwidth.
    let init = select_bandwidth(table, opts.kernel, BandwidthMode::Adaptive, opts.criterion)?;
    let k0 = init.bandwidth.value() as usize;
    let per_loc: Vec<DMatrix<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let b = dist.bandwidth(i, k0);
            let w: Vec<f64> = (0..n).map(|l| opts.kernel.eval(dist.d[(i, l)], b)).collect();
            let ztw = DMatrix::from_fn(q, n, |r, l| z[(l, r)] * w[l]);
            let chol = PivotedCholesky::new(&(&ztw * &z));
            if !chol.is_full_rank() {
                return Err(Error::LocalRankDeficient { location: i });
            }
            Ok(chol.inverse() * ztw)
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    // c[j] maps y to the coefficient surface of term j.
    let mut c: Vec<DMatrix<f64>> = (0..q)
        .map(|j| DMatrix::from_fn(n, n, |i, l| per_loc[i][(j, l)]))
        .collect();
    drop(per_loc);
    let xcol: Vec<Vec<f64>> = (0..q).map(|j| z.column(j).iter().copied().collect()).collect();
    let dx = |j: usize, m: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, l| xcol[j][i] * m[(i, l)]);

    let mut beta = DMatrix::from_fn(n, q, |i, j| (c[j].row(i) * y)[(0, 0)]);
    let mut terms = DMatrix::from_fn(n, q, |i, j| xcol[j][i] * beta[(i, j)]);
    let mut e = y - DVector::from_fn(n, |i, _| terms.row(i).sum());
    // big_e = I - Σ_j R_j with R_j = D_xj C_j.
    let mut big_e = DMatrix::identity(n, n);
    for (j, cj) in c.iter().enumerate() {
        big_e -= dx(j, cj);
    }

    let mut bws = vec![k0; q];
    let mut rss_prev = e.norm_squared();
    let mut trace = Vec::new();
    let mut converged = false;
    for it in 1..=opts.max_iterations {
        let search = it <= opts.search_every_until || it % opts.search_period == 0;
        for j in 0..q {
            let partial = DVector::from_fn(n, |i, _| terms[(i, j)] + e[i]);
            if search {
                let (k, _, _) = golden_section(lo, hi, true, 0.0, |v| {
                    univariate_score(&dist, &xcol[j], &partial, opts.kernel, v as usize, opts.criterion)
                });
                bws[j] = k as usize;
            }
            let m = univariate_smoother(&dist, &xcol[j], opts.kernel, bws[j], false)
                .ok_or(Error::LocalRankDeficient { location: 0 })?;
            let bj = &m * &partial;
            let r_old = dx(j, &c[j]);
            c[j] = par_matmul(&m, &(&r_old + &big_e));
            let r_new = dx(j, &c[j]);
            big_e += r_old - r_new;
            for i in 0..n {
                beta[(i, j)] = bj[i];
                terms[(i, j)] = xcol[j][i] * bj[i];
                e[i] = partial[i] - terms[(i, j)];
            }
        }
        let rss = e.norm_squared();
        let soc = (rss - rss_prev).abs() / rss;
        trace.push(MgwrIteration {
            iteration: it,
            rss,
            soc_rss: soc,
            bandwidths: bws.clone(),
        });
        rss_prev = rss;
        if soc < opts.tolerance {
            converged = true;
            break;
        }
    }

    let fitted = y - &e;
    let rss = e.norm_squared();
    let enp: Vec<f64> = (0..q)
        .map(|j| (0..n).map(|i| xcol[j][i] * c[j][(i, i)]).sum())
        .collect();
    let tr_s: f64 = enp.iter().sum();
    let hat_diag = DVector::from_fn(n, |i, _| (0..q).map(|j| xcol[j][i] * c[j][(i, i)]).sum());
    let sigma_hat = if (n as f64) > tr_s {
        (rss / (n as f64 - tr_s)).sqrt()
    } else {
        f64::NAN
    };
    let se = DMatrix::from_fn(n, q, |i, j| c[j].row(i).norm() * sigma_hat);
    let tvalues = beta.component_div(&se);
    let bandwidth_median_m = bws
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = (0..n).map(|i| dist.bandwidth(i, k)).collect();
            v.sort_by(f64::total_cmp);
            if n % 2 == 1 {
                v[n / 2]
            } else {
                0.5 * (v[n / 2 - 1] + v[n / 2])
            }
        })
        .collect();
    Ok(MgwrFit {
        kernel: opts.kernel,
        criterion: opts.criterion,
        names: term_names(table),
        bandwidths: bws,
        bandwidth_median_m,
        initial_bandwidth: k0,
        beta,
        se,
        tvalues,
        terms,
        enp,
        tr_s,
        hat_diag,
        fitted,
        residuals: e,
        rss,
        sigma_hat,
        aicc: aicc_from_rss(n, rss, tr_s),
        converged,
        trace,
    })
}
