use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_SWEEPS: usize = 10_000;
/// Stop once no coordinate moves its gradient by more than this.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub lambda: f64,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub n_iterations: usize,
    pub converged: bool,
}

impl LassoFit {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn nonzero(&self) -> usize {
        self.coefficients.iter().filter(|b| **b != 0.0).count()
    }
}

/// Column-centered copy of the problem.
struct Centered {
    x: DMatrix<f64>,
    y: DVector<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
    sq_norm: Vec<f64>,
}

impl Centered {
    fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::Schema(format!("{n} rows in X but {} targets", y.len())));
        }
        if n == 0 {
            return Err(Error::Empty("LASSO input"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LASSO input".into()));
        }
        let x_mean: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
        let y_mean = y.mean();
        let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - x_mean[j]);
        let sq_norm = (0..p).map(|j| xc.column(j).norm_squared()).collect();
        Ok(Self {
            x: xc,
            y: y.map(|v| v - y_mean),
            x_mean,
            y_mean,
            sq_norm,
        })
    }

    fn lambda_max(&self) -> f64 {
        (0..self.x.ncols())
            .map(|j| self.x.column(j).dot(&self.y).abs())
            .fold(0.0, f64::max)
    }

    fn solve(&self, lambda: f64, start: &[f64], tol: f64, max_sweeps: usize) -> LassoFit {
        let p = self.x.ncols();
        let mut beta = start.to_vec();
        let mut r = self.y.clone();
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                r.axpy(-b, &self.x.column(j), 1.0);
            }
        }
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < max_sweeps {
            sweeps += 1;
            let mut max_change = 0.0f64;
            for j in 0..p {
                let nj = self.sq_norm[j];
                if nj == 0.0 {
                    beta[j] = 0.0;
                    continue;
                }
                let old = beta[j];
                let z = self.x.column(j).dot(&r) + nj * old;
                let new = soft_threshold(z, lambda) / nj;
                if new != old {
                    r.axpy(old - new, &self.x.column(j), 1.0);
                    beta[j] = new;
                    max_change = max_change.max((new - old).abs() * nj);
                }
            }
            if max_change < tol {
                converged = true;
                break;
            }
        }
        let intercept = self.y_mean - beta.iter().zip(&self.x_mean).map(|(b, m)| b * m).sum::<f64>();
        LassoFit {
            lambda,
            intercept,
            coefficients: beta,
            n_iterations: sweeps,
            converged,
        }
    }
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Smallest penalty at which every slope is zero, `max_j |x_jᵀ(y - ȳ)|`
/// on centered columns.
pub fn lambda_max(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    Ok(Centered::new(x, y)?.lambda_max())
}

/// Minimizes `½ Σ (y - β₀ - Xβ)² + λ Σ |β_j|` by cyclic coordinate descent;
/// the intercept is not penalized.
pub fn lasso_fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<LassoFit> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    let c = Centered::new(x, y)?;
    Ok(c.solve(
        lambda,
        &vec![0.0; x.ncols()],
        DEFAULT_TOLERANCE,
        DEFAULT_MAX_SWEEPS,
    ))
}

/// `count` log-spaced penalties from `lambda_max` down to `ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, count: usize, ratio: f64) -> Vec<f64> {
    if count == 1 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..count)
        .map(|k| {
            if k == 0 {
                lambda_max
            } else {
                (hi + (lo - hi) * k as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// Warm-started fits along `lambdas` (in the given order).
pub fn lasso_path(x: &DMatrix<f64>, y: &DVector<f64>, lambdas: &[f64]) -> Result<Vec<LassoFit>> {
    let c = Centered::new(x, y)?;
    let mut start = vec![0.0; x.ncols()];
    let mut out = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        if !(l >= 0.0) || !l.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and >= 0, got {l}"
            )));
        }
        let fit = c.solve(l, &start, DEFAULT_TOLERANCE, DEFAULT_MAX_SWEEPS);
        start.clone_from(&fit.coefficients);
        out.push(fit);
    }
    Ok(out)
}

/// Largest violation of the optimality conditions on centered data:
/// `|x_jᵀr| - λ` for zero slopes and `|x_jᵀr - λ sign(β_j)|` otherwise.
pub fn kkt_residual(x: &DMatrix<f64>, y: &DVector<f64>, fit: &LassoFit) -> Result<f64> {
    let c = Centered::new(x, y)?;
    let mut r = c.y.clone();
    for (j, &b) in fit.coefficients.iter().enumerate() {
        r.axpy(-b, &c.x.column(j), 1.0);
    }
    Ok((0..x.ncols())
        .map(|j| {
            let g = c.x.column(j).dot(&r);
            let b = fit.coefficients[j];
            if b == 0.0 {
                (g.abs() - fit.lambda).max(0.0)
            } else {
                (g - fit.lambda * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::ols_fit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn problem(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(n, |i, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            2.0 * x[(i, 0)] - x[(i, 1)] + 0.5 * x[(i, 2)] + 3.0 + e
        });
        (x, y)
    }

    fn objective(x: &DMatrix<f64>, y: &DVector<f64>, b0: f64, b: &[f64], lambda: f64) -> f64 {
        let bv = DVector::from_column_slice(b);
        let r = y - x * bv - DVector::from_element(y.len(), b0);
        0.5 * r.norm_squared() + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
    }

    #[test]
    fn zero_penalty_is_ols() {
        let (x, y) = problem(80, 4, 1);
        let fit = lasso_fit(&x, &y, 0.0).unwrap();
        let t = crate::dataset::FeatureTable::new(
            (0..80).map(|i| i.to_string()).collect(),
            (0..80)
                .map(|i| crate::spatial::Point::new(i as f64, 0.0))
                .collect(),
            (0..4)
                .map(|j| crate::dataset::Column::new(format!("x{j}"), "", ""))
                .collect(),
            x,
            y,
            crate::dataset::Column::new("y", "", ""),
        )
        .unwrap();
        let ols = ols_fit(&t).unwrap();
        assert!((fit.intercept - ols.beta[0]).abs() < 1e-6);
        for j in 0..4 {
            assert!((fit.coefficients[j] - ols.beta[j + 1]).abs() < 1e-6);
        }
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let (x, y) = problem(60, 5, 2);
        let lm = lambda_max(&x, &y).unwrap();
        for l in [lm, lm * 1.5] {
            let fit = lasso_fit(&x, &y, l).unwrap();
            assert!(fit.coefficients.iter().all(|&b| b == 0.0));
            assert!((fit.intercept - y.mean()).abs() < 1e-12);
        }
        assert!(lasso_fit(&x, &y, lm * 0.99).unwrap().nonzero() >= 1);
    }

    /// Projected subgradient on the split `β = u - v`, `u, v ≥ 0`.
    fn subgradient_objective(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, iters: usize) -> f64 {
        let (n, p) = x.shape();
        let xm: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
        let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - xm[j]);
        let yc = y.map(|v| v - y.mean());
        let step = 0.5 / (xc.transpose() * &xc).symmetric_eigenvalues().max();
        let (mut u, mut v) = (DVector::zeros(p), DVector::zeros(p));
        let mut best = f64::INFINITY;
        for _ in 0..iters {
            let b: DVector<f64> = &u - &v;
            let g = xc.transpose() * (&xc * &b - &yc);
            u = (&u - step * (&g + DVector::from_element(p, lambda))).map(|t| t.max(0.0));
            v = (&v - step * (-&g + DVector::from_element(p, lambda))).map(|t| t.max(0.0));
            let b: Vec<f64> = (&u - &v).iter().copied().collect();
            let b0 = y.mean() - b.iter().zip(&xm).map(|(a, m)| a * m).sum::<f64>();
            best = best.min(objective(x, y, b0, &b, lambda));
        }
        best
    }

    #[test]
    fn beats_subgradient_oracle_and_satisfies_kkt() {
        let (x, y) = problem(200, 10, 3);
        let lambda = 0.3 * lambda_max(&x, &y).unwrap();
        let fit = lasso_fit(&x, &y, lambda).unwrap();
        assert!(fit.converged);
        let ours = objective(&x, &y, fit.intercept, &fit.coefficients, lambda);
        let oracle = subgradient_objective(&x, &y, lambda, fit.n_iterations.max(2000));
        assert!(ours <= oracle + 1e-9 * oracle.abs(), "{ours} vs {oracle}");
        assert!(kkt_residual(&x, &y, &fit).unwrap() < 1e-6);
    }

    #[test]
    fn path_sparsity_is_nested() {
        let (x, y) = problem(150, 6, 4);
        let grid = lambda_grid(lambda_max(&x, &y).unwrap(), 100, 1e-3);
        assert_eq!(grid.len(), 100);
        assert!((grid[99] / grid[0] - 1e-3).abs() < 1e-12);
        let path = lasso_path(&x, &y, &grid).unwrap();
        for w in path.windows(2) {
            assert!(w[0].nonzero() <= w[1].nonzero());
        }
        assert_eq!(path[0].nonzero(), 0);
    }

    #[test]
    fn non_finite_rejected() {
        let (mut x, y) = problem(10, 3, 5);
        x[(3, 1)] = f64::NAN;
        assert!(matches!(lasso_fit(&x, &y, 1.0), Err(Error::NonFinite(_))));
    }
}
