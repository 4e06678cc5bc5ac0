use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::linear::gwr::{bandwidth_at, distances, kernel_weights};
use crate::linear::solve::PivotedCholesky;
use crate::spatial::{Bandwidth, Kernel};

pub const VIF_THRESHOLD: f64 = 10.0;
pub const CN_THRESHOLD: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollinearityReport {
    pub names: Vec<String>,
    /// n × p local VIF; `+∞` where the feature is a combination of the others.
    pub vif: DMatrix<f64>,
    /// Per location; `+∞` for a singular local design.
    pub condition_number: Vec<f64>,
    pub flagged: Vec<String>,
}

impl CollinearityReport {
    pub fn max_vif(&self, j: usize) -> f64 {
        self.vif
            .column(j)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// VIF_j = 1 / (1 - R²_j) from the weighted correlation matrix `r`.
fn local_vif(r: &DMatrix<f64>) -> Vec<f64> {
    let p = r.nrows();
    (0..p)
        .map(|j| {
            if p == 1 {
                return 1.0;
            }
            let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
            let sub = r.select_rows(&others).select_columns(&others);
            let rj = DVector::from_iterator(p - 1, others.iter().map(|&k| r[(k, j)]));
            let coef = PivotedCholesky::new(&sub).solve(&rj);
            let r2 = rj.dot(&coef);
            let resid = 1.0 - r2;
            if resid <= 1e-10 {
                f64::INFINITY
            } else {
                (1.0 / resid).max(1.0)
            }
        })
        .collect()
}

/// Ratio of extreme singular values of `sqrt(W) [1 | X]` with unit-length columns.
fn local_cn(z: &DMatrix<f64>, w: &[f64]) -> f64 {
    let (n, q) = z.shape();
    let mut m = DMatrix::from_fn(n, q, |i, j| z[(i, j)] * w[i].sqrt());
    for j in 0..q {
        let norm = m.column(j).norm();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        m.column_mut(j).unscale_mut(norm);
    }
    let sv = m.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if lo <= hi * 1e-12 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Local VIF and condition number at every station under GWR weights.
pub fn local_collinearity(
    table: &FeatureTable,
    kernel: Kernel,
    bandwidth: Bandwidth,
) -> Result<CollinearityReport> {
    let (n, p) = table.x.shape();
    if p < 2 {
        return Err(Error::InvalidArgument(
            "collinearity screening needs at least two features".into(),
        ));
    }
    let z = crate::linear::design(&table.x);
    let rows: Vec<Result<(Vec<f64>, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d = distances(&table.locations, table.locations[i]);
            let b = bandwidth_at(&d, bandwidth)?;
            let w = kernel_weights(&d, kernel, b);
            let sw: f64 = w.iter().sum();
            let mean: Vec<f64> = (0..p)
                .map(|j| (0..n).map(|k| w[k] * table.x[(k, j)]).sum::<f64>() / sw)
                .collect();
            let cov = DMatrix::from_fn(p, p, |a, c| {
                (0..n)
                    .map(|k| w[k] * (table.x[(k, a)] - mean[a]) * (table.x[(k, c)] - mean[c]))
                    .sum::<f64>()
            });
            let sd: Vec<f64> = (0..p).map(|j| cov[(j, j)].sqrt()).collect();
            let vif = if sd.iter().any(|s| !(*s > 0.0)) {
                vec![f64::INFINITY; p]
            } else {
                local_vif(&DMatrix::from_fn(p, p, |a, c| cov[(a, c)] / (sd[a] * sd[c])))
            };
            Ok((vif, local_cn(&z, &w)))
        })
        .collect();
    let mut vif = DMatrix::zeros(n, p);
    let mut cn = Vec::with_capacity(n);
    for (i, r) in rows.into_iter().enumerate() {
        let (v, c) = r?;
        for j in 0..p {
            vif[(i, j)] = v[j];
        }
        cn.push(c);
    }
    let names = table.feature_names();
    let bad_cn = cn.iter().any(|&c| c > CN_THRESHOLD);
    let flagged = names
        .iter()
        .enumerate()
        .filter(|&(j, _)| bad_cn || vif.column(j).iter().any(|&v| v > VIF_THRESHOLD))
        .map(|(_, s)| s.clone())
        .collect();
    Ok(CollinearityReport {
        names,
        vif,
        condition_number: cn,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Column;
    use crate::spatial::Point;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn table(x: DMatrix<f64>) -> FeatureTable {
        let n = x.nrows();
        let p = x.ncols();
        FeatureTable::new(
            (0..n).map(|i| i.to_string()).collect(),
            (0..n)
                .map(|i| Point::new((i % 10) as f64 * 100.0, (i / 10) as f64 * 100.0))
                .collect(),
            (0..p).map(|j| Column::new(format!("f{j}"), "", "")).collect(),
            x,
            DVector::from_fn(n, |i, _| i as f64),
            Column::new("y", "", ""),
        )
        .unwrap()
    }

    #[test]
    fn orthogonal_design_is_clean() {
        // Centered, mutually orthogonal ±1 columns (Walsh functions).
        let x = DMatrix::from_fn(16, 3, |i, j| if (i >> j) & 1 == 0 { 1.0 } else { -1.0 });
        let r = local_collinearity(&table(x), Kernel::Boxcar, Bandwidth::Fixed(1e7)).unwrap();
        assert!(r.vif.iter().all(|v| (v - 1.0).abs() < 1e-9));
        assert!(r.condition_number.iter().all(|c| (c - 1.0).abs() < 1e-9));
        assert!(r.flagged.is_empty());
    }

    #[test]
    fn duplicate_column_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = DMatrix::from_fn(40, 3, |_, _| StandardNormal.sample(&mut rng));
        let c = x.column(0).into_owned();
        x.set_column(2, &c);
        let r = local_collinearity(&table(x), Kernel::Gaussian, Bandwidth::Fixed(1e7)).unwrap();
        assert!(r.vif.column(0).iter().all(|v| v.is_infinite()));
        assert!(r.vif.column(2).iter().all(|v| v.is_infinite()));
        assert!(r.vif.column(1).iter().all(|v| v.is_finite()));
        assert!(r.condition_number.iter().all(|c| c.is_infinite()));
        assert!(r.flagged.contains(&"f0".to_string()) && r.flagged.contains(&"f2".to_string()));
    }

    #[test]
    fn bivariate_vif_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 400;
        let mut x: DMatrix<f64> = DMatrix::from_fn(n, 2, |_, _| StandardNormal.sample(&mut rng));
        // Orthogonalize then mix to an exact sample correlation of 0.95.
        for j in 0..2 {
            let m = x.column(j).mean();
            x.column_mut(j).add_scalar_mut(-m);
        }
        let a = x.column(0).normalize();
        let b0 = x.column(1) - &a * a.dot(&x.column(1));
        let b = b0.normalize();
        let rho: f64 = 0.95;
        x.set_column(0, &a);
        x.set_column(1, &(&a * rho + &b * (1.0 - rho * rho).sqrt()));
        let r = local_collinearity(&table(x), Kernel::Boxcar, Bandwidth::Fixed(1e7)).unwrap();
        let want = 1.0 / (1.0 - rho * rho);
        assert!(r.vif.iter().all(|v| (v - want).abs() < 0.01 * want));
    }

    #[test]
    fn vif_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(50, 3, |i, j| {
            let e: f64 = StandardNormal.sample(&mut rng);
            e + (i * j) as f64 * 0.01
        });
        let a = local_collinearity(&table(x.clone()), Kernel::Bisquare, Bandwidth::Adaptive(20)).unwrap();
        let mut xs = x;
        xs.column_mut(1).scale_mut(123.0);
        let b = local_collinearity(&table(xs), Kernel::Bisquare, Bandwidth::Adaptive(20)).unwrap();
        for (u, v) in a.vif.iter().zip(b.vif.iter()) {
            assert!((u - v).abs() < 1e-9 * u.max(1.0));
        }
    }
}
