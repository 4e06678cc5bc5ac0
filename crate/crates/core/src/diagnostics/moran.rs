use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::SpatialWeights;

pub const DEFAULT_PERMUTATIONS: usize = 999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    /// Positive autocorrelation.
    #[default]
    Greater,
    TwoSided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationSummary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranResult {
    pub i: f64,
    pub expected: f64,
    pub p_value: f64,
    pub n_permutations: usize,
    pub alternative: Alternative,
    pub permuted: PermutationSummary,
    pub weights: String,
}

/// `I = (n / S0) Σ w_ij z_i z_j / Σ z_i²` on mean-centered values.
fn statistic(w: &SpatialWeights, z: &[f64], ss: f64) -> f64 {
    z.len() as f64 / w.total * w.quadratic_form(z) / ss
}

/// Moran's I of residuals with a permutation p-value. Each permutation
/// draws from its own RNG stream, so results do not depend on scheduling.
pub fn morans_i(
    residuals: &[f64],
    weights: &SpatialWeights,
    n_permutations: usize,
    seed: u64,
    alternative: Alternative,
) -> Result<MoranResult> {
    let n = residuals.len();
    if n < 4 {
        return Err(Error::NotEnoughPoints {
            needed: 4,
            available: n,
        });
    }
    if weights.len() != n {
        return Err(Error::Schema(format!(
            "{} weight rows for {n} residuals",
            weights.len()
        )));
    }
    if !(weights.total > 0.0) {
        return Err(Error::InvalidArgument("spatial weights are all zero".into()));
    }
    if n_permutations == 0 {
        return Err(Error::InvalidArgument(
            "at least one permutation is required".into(),
        ));
    }
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = residuals.iter().map(|r| r - mean).collect();
    let ss: f64 = z.iter().map(|v| v * v).sum();
    if !(ss > 1e-300) || ss <= 1e-24 * residuals.iter().map(|r| r * r).sum::<f64>() {
        return Err(Error::ZeroVariance("residuals".into()));
    }
    let observed = statistic(weights, &z, ss);
    let expected = -1.0 / (n as f64 - 1.0);
    let perms: Vec<f64> = (0..n_permutations)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut zp = z.clone();
            zp.shuffle(&mut rng);
            statistic(weights, &zp, ss)
        })
        .collect();
    let extreme = match alternative {
        Alternative::Greater => perms.iter().filter(|&&v| v >= observed).count(),
        Alternative::TwoSided => {
            let d = (observed - expected).abs();
            perms.iter().filter(|&&v| (v - expected).abs() >= d).count()
        }
    };
    let m = n_permutations as f64;
    let pm = perms.iter().sum::<f64>() / m;
    Ok(MoranResult {
        i: observed,
        expected,
        p_value: (1.0 + extreme as f64) / (m + 1.0),
        n_permutations,
        alternative,
        permuted: PermutationSummary {
            mean: pm,
            std: (perms.iter().map(|v| (v - pm).powi(2)).sum::<f64>() / m).sqrt(),
            min: perms.iter().copied().fold(f64::INFINITY, f64::min),
            max: perms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        },
        weights: weights.descriptor.clone(),
    })
}
