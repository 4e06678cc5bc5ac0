use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{GwrFit, MgwrFit};
use crate::error::{Error, Result};

/// Common view of a model with per-location coefficients and t values.
pub trait LocalFit {
    fn names(&self) -> &[String];
    fn beta(&self) -> &DMatrix<f64>;
    fn se(&self) -> &DMatrix<f64>;
    fn tvalues(&self) -> &DMatrix<f64>;
    fn tr_s(&self) -> f64;
    /// Effective parameters per term, when the model has separate smoothers.
    fn term_enp(&self) -> Option<&[f64]> {
        None
    }
}

impl LocalFit for GwrFit {
    fn names(&self) -> &[String] {
        &self.names
    }
    fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }
    fn se(&self) -> &DMatrix<f64> {
        &self.se
    }
    fn tvalues(&self) -> &DMatrix<f64> {
        &self.tvalues
    }
    fn tr_s(&self) -> f64 {
        self.tr_s
    }
}

impl LocalFit for MgwrFit {
    fn names(&self) -> &[String] {
        &self.names
    }
    fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }
    fn se(&self) -> &DMatrix<f64> {
        &self.se
    }
    fn tvalues(&self) -> &DMatrix<f64> {
        &self.tvalues
    }
    fn tr_s(&self) -> f64 {
        self.tr_s
    }
    fn term_enp(&self) -> Option<&[f64]> {
        Some(&self.enp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSignificance {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub t_mean: f64,
    pub t_std: f64,
    pub adjusted_alpha: f64,
    pub critical_t: f64,
    pub percent_significant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub raw_alpha: f64,
    pub dof: f64,
    pub features: Vec<FeatureSignificance>,
    /// n × (p+1) flags, same layout as the coefficients.
    #[serde(skip)]
    pub significant: Vec<Vec<bool>>,
}

fn summary(v: &[f64]) -> (f64, f64, f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    let median = if m % 2 == 1 {
        s[m / 2]
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2])
    };
    (mean, std, s[0], median, s[m - 1])
}

/// Local t-tests with multiple-testing adjusted alpha. GWR uses
/// `α (p+1) / trS` for every term; MGWR uses `α / enp_j` per term. Both are
/// capped at `α`.
pub fn significance(fit: &dyn LocalFit, raw_alpha: f64) -> Result<SignificanceReport> {
    if !(raw_alpha > 0.0 && raw_alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be in (0, 1), got {raw_alpha}"
        )));
    }
    let beta = fit.beta();
    let t = fit.tvalues();
    let (n, q) = beta.shape();
    let tr_s = fit.tr_s();
    if !(tr_s < n as f64 - 2.0) {
        return Err(Error::DegreesOfFreedom { tr_s, n });
    }
    let dof = n as f64 - tr_s;
    let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut significant = vec![vec![false; q]; n];
    let mut features = Vec::with_capacity(q);
    for j in 0..q {
        let alpha = match fit.term_enp() {
            None => raw_alpha * q as f64 / tr_s,
            Some(enp) => raw_alpha / enp[j],
        }
        .min(raw_alpha);
        let crit = dist.inverse_cdf(1.0 - alpha / 2.0);
        let col: Vec<f64> = beta.column(j).iter().copied().collect();
        let tc: Vec<f64> = t.column(j).iter().copied().collect();
        let mut hits = 0;
        for (i, tv) in tc.iter().enumerate() {
            if tv.abs() > crit {
                significant[i][j] = true;
                hits += 1;
            }
        }
        let (mean, std, min, median, max) = summary(&col);
        let (t_mean, t_std, ..) = summary(&tc);
        features.push(FeatureSignificance {
            name: fit.names()[j].clone(),
            mean,
            std,
            min,
            median,
            max,
            t_mean,
            t_std,
            adjusted_alpha: alpha,
            critical_t: crit,
            percent_significant: 100.0 * hits as f64 / n as f64,
        });
    }
    Ok(SignificanceReport {
        raw_alpha,
        dof,
        features,
        significant,
    })
}

/// Closed-form leave-one-out R² of a linear smoother,
/// `1 - mean(((y - ŷ)/(1 - H_ii))²) / Var(y)` with population variance.
pub fn loocv_r2(y: &DVector<f64>, fitted: &DVector<f64>, hat_diag: &DVector<f64>) -> Result<f64> {
    let n = y.len();
    if fitted.len() != n || hat_diag.len() != n {
        return Err(Error::Schema("y, fitted and hat diagonal lengths differ".into()));
    }
    if n < 2 {
        return Err(Error::NotEnoughPoints {
            needed: 2,
            available: n,
        });
    }
    let mut mse = 0.0;
    for i in 0..n {
        let h = hat_diag[i];
        if !(h < 1.0 - 1e-10) {
            return Err(Error::Leverage { row: i, value: h });
        }
        mse += ((y[i] - fitted[i]) / (1.0 - h)).powi(2);
    }
    mse /= n as f64;
    let mean = y.mean();
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if !(var > 0.0) {
        return Err(Error::ZeroVariance("target".into()));
    }
    Ok(1.0 - mse / var)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub station_id: String,
    pub feature: String,
    pub beta: f64,
    pub se: f64,
    pub t: f64,
    pub significant: bool,
}

/// One row per (station, term), stations in table order.
pub fn coefficient_rows(
    fit: &dyn LocalFit,
    station_ids: &[String],
    report: &SignificanceReport,
) -> Result<Vec<CoefficientRow>> {
    let (n, q) = fit.beta().shape();
    if station_ids.len() != n {
        return Err(Error::Schema(format!(
            "{} station ids for {n} fitted rows",
            station_ids.len()
        )));
    }
    let mut rows = Vec::with_capacity(n * q);
    for (i, id) in station_ids.iter().enumerate() {
        for j in 0..q {
            rows.push(CoefficientRow {
                station_id: id.clone(),
                feature: fit.names()[j].clone(),
                beta: fit.beta()[(i, j)],
                se: fit.se()[(i, j)],
                t: fit.tvalues()[(i, j)],
                significant: report.significant[i][j],
            });
        }
    }
    Ok(rows)
}

pub fn write_coefficients_csv(rows: &[CoefficientRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth::{synth_generate, Preset};
    use crate::linear::{gwr_fit, ols_fit};
    use crate::spatial::{Bandwidth, Kernel};

    #[test]
    fn loocv_matches_refits_for_ols() {
        let (t, _) = synth_generate(&Preset::SaturatingSupply.spec(50), 4).unwrap();
        let fit = ols_fit(&t).unwrap();
        let closed = loocv_r2(&t.y, &fit.fitted, &fit.hat_diag).unwrap();
        let n = t.n();
        let mut press = 0.0;
        for i in 0..n {
            let keep: Vec<usize> = (0..n).filter(|&k| k != i).collect();
            let f = ols_fit(&t.subset(&keep)).unwrap();
            let xi = t.x.rows(i, 1).into_owned();
            press += (t.y[i] - f.predict(&xi).unwrap()[0]).powi(2);
        }
        let var = t.y.variance();
        assert!((closed - (1.0 - press / n as f64 / var)).abs() < 1e-8);
    }

    #[test]
    fn high_leverage_row_named() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let h = DVector::from_vec(vec![0.5, 1.0, 0.2]);
        assert!(matches!(
            loocv_r2(&y, &y, &h),
            Err(Error::Leverage { row: 1, .. })
        ));
    }

    #[test]
    fn strong_signal_fully_significant() {
        let (t, _) = synth_generate(&Preset::TwoCluster.spec(200), 1).unwrap();
        let fit = gwr_fit(&t, Kernel::Bisquare, Bandwidth::Fixed(20_000.0)).unwrap();
        let rep = significance(&fit, 0.05).unwrap();
        assert_eq!(rep.features[1].percent_significant, 100.0);
        let q = fit.names.len() as f64;
        assert!(fit.tr_s > q);
        assert!(rep.features.iter().all(|f| f.adjusted_alpha < 0.05));
        assert!((rep.features[0].adjusted_alpha - 0.05 * q / fit.tr_s).abs() < 1e-15);
        let rows = coefficient_rows(&fit, &t.station_ids, &rep).unwrap();
        assert_eq!(rows.len(), t.n() * 2);
        assert_eq!(rows[1].feature, "x1");
    }
}
