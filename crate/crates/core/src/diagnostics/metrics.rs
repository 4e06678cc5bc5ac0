use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub rmse: f64,
    pub r2: f64,
    /// Present when the effective number of parameters is known.
    pub adjusted_r2: Option<f64>,
    pub aicc: Option<f64>,
    pub p_effective: Option<f64>,
}

/// `2n ln σ̂ + n ln 2π + n (n + trS) / (n - 2 - trS)`, or `+∞` when the
/// correction term is undefined.
pub fn aicc(n: usize, sigma_hat: f64, tr_s: f64) -> f64 {
    let nf = n as f64;
    let denom = nf - 2.0 - tr_s;
    if !(denom > 0.0) || !(sigma_hat > 0.0) {
        return f64::INFINITY;
    }
    2.0 * nf * sigma_hat.ln() + nf * (2.0 * PI).ln() + nf * (nf + tr_s) / denom
}

/// AICc with the maximum-likelihood `σ̂ = sqrt(RSS / n)`.
pub fn aicc_from_rss(n: usize, rss: f64, tr_s: f64) -> f64 {
    aicc(n, (rss / n as f64).sqrt(), tr_s)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> f64 {
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    (sse / y.len() as f64).sqrt()
}

/// RMSE, `R² = 1 - SSE/SST`, adjusted `R² = 1 - (n-1)/(n-p) (1 - R²)` with
/// `p = trS`, and AICc when both `trS` and `σ̂` are given.
pub fn metrics(y: &[f64], yhat: &[f64], tr_s: Option<f64>, sigma_hat: Option<f64>) -> Result<MetricsReport> {
    let n = y.len();
    if yhat.len() != n {
        return Err(Error::Schema(format!(
            "{n} targets but {} predictions",
            yhat.len()
        )));
    }
    if n < 2 {
        return Err(Error::NotEnoughPoints {
            needed: 2,
            available: n,
        });
    }
    let nf = n as f64;
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    let mean = y.iter().sum::<f64>() / nf;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if !(sst > 0.0) {
        return Err(Error::ZeroVariance("target".into()));
    }
    let r2 = 1.0 - sse / sst;
    let adjusted_r2 = tr_s
        .filter(|&p| nf - p > 0.0)
        .map(|p| 1.0 - (nf - 1.0) / (nf - p) * (1.0 - r2));
    let aicc = match (tr_s, sigma_hat) {
        (Some(p), Some(s)) => Some(aicc(n, s, p)),
        _ => None,
    };
    Ok(MetricsReport {
        n,
        rmse: rmse(y, yhat),
        r2,
        adjusted_r2,
        aicc,
        p_effective: tr_s,
    })
}
