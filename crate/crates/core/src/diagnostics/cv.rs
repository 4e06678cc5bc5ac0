use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::rmse;
use crate::dataset::FeatureTable;
use crate::error::{Error, Result};

/// What one fold's pipeline produced on its held-out rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    /// Predictions for the test rows, in the order given, original units.
    pub predictions: Vec<f64>,
    /// Features kept by selection on the training rows.
    pub selected: Vec<String>,
    /// Tuned hyperparameter (e.g. bandwidth) if any.
    pub tuned: Option<f64>,
}

/// Select, tune, fit and predict. Both tables are in raw units; any
/// standardization must be learned from `train` alone.
pub trait Pipeline: Sync {
    fn run(&self, train: &FeatureTable, test: &FeatureTable) -> Result<FoldOutcome>;
}

impl<F> Pipeline for F
where
    F: Fn(&FeatureTable, &FeatureTable) -> Result<FoldOutcome> + Sync,
{
    fn run(&self, train: &FeatureTable, test: &FeatureTable) -> Result<FoldOutcome> {
        self(train, test)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_rows: Vec<usize>,
    /// Mean squared error on the held-out rows.
    pub mse: f64,
    pub rmse: f64,
    pub selected: Vec<String>,
    pub tuned: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub k: usize,
    pub seed: u64,
    /// Fold id of each row.
    pub assignment: Vec<usize>,
    pub folds: Vec<FoldReport>,
    /// `(1/K) Σ L_i` with `L_i` the fold MSE.
    pub cv_mean: f64,
    /// Held-out prediction for every row.
    pub predictions: Vec<f64>,
    /// Pooled over all held-out predictions.
    pub oos_rmse: f64,
    pub oos_r2: f64,
}

/// Seeded shuffle of the row indices cut into `k` contiguous folds whose
/// sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || n < k {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= k <= n, got k={k}, n={n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    let (base, extra) = (n / k, n % k);
    let mut pos = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &i in &idx[pos..pos + size] {
            assignment[i] = f;
        }
        pos += size;
    }
    Ok(assignment)
}

pub fn kfold_cv(table: &FeatureTable, pipeline: &dyn Pipeline, k: usize, seed: u64) -> Result<CvResult> {
    let n = table.n();
    let assignment = fold_assignment(n, k, seed)?;
    let raw = table.destandardize();
    let outcomes: Vec<Result<(Vec<usize>, FoldOutcome)>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            let out = pipeline.run(&raw.subset(&train), &raw.subset(&test))?;
            if out.predictions.len() != test.len() {
                return Err(Error::Schema(format!(
                    "{} predictions for {} test rows",
                    out.predictions.len(),
                    test.len()
                )));
            }
            if let Some(i) = out.predictions.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("prediction for row {}", test[i])));
            }
            Ok((test, out))
        })
        .collect();
    let mut predictions = vec![f64::NAN; n];
    let mut folds = Vec::with_capacity(k);
    for (f, res) in outcomes.into_iter().enumerate() {
        let (test, out) = res.map_err(|e| Error::Fold {
            fold: f,
            source: Box::new(e),
        })?;
        let y: Vec<f64> = test.iter().map(|&i| raw.y[i]).collect();
        let r = rmse(&y, &out.predictions);
        for (&i, &p) in test.iter().zip(&out.predictions) {
            predictions[i] = p;
        }
        folds.push(FoldReport {
            fold: f,
            test_rows: test,
            mse: r * r,
            rmse: r,
            selected: out.selected,
            tuned: out.tuned,
        });
    }
    let y: Vec<f64> = raw.y.iter().copied().collect();
    let oos_rmse = rmse(&y, &predictions);
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if !(sst > 0.0) {
        return Err(Error::ZeroVariance("target".into()));
    }
    Ok(CvResult {
        k,
        seed,
        assignment,
        cv_mean: folds.iter().map(|f| f.mse).sum::<f64>() / k as f64,
        folds,
        predictions,
        oos_rmse,
        oos_r2: 1.0 - oos_rmse * oos_rmse * n as f64 / sst,
    })
}
