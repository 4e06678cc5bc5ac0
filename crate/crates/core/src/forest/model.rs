use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, GrowParams, Tree};
use crate::dataset::{FeatureTable, COORD_X, COORD_Y};
use crate::error::{Error, Result};
use crate::spatial::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means `⌈p/3⌉`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: None,
            min_leaf: 5,
            max_depth: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or(p.div_ceil(3)).max(1)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be positive".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidArgument("min_leaf must be at least 1".into()));
        }
        if p == 0 {
            return Err(Error::InvalidArgument(
                "a forest needs at least one feature".into(),
            ));
        }
        let m = self.resolved_mtry(p);
        if m > p {
            return Err(Error::InvalidArgument(format!(
                "mtry {m} exceeds the {p} features"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub seed: u64,
    pub feature_names: Vec<String>,
    /// The last two features are the projected coordinates.
    pub uses_coordinates: bool,
    /// Mean training target.
    pub base_value: f64,
    pub trees: Vec<Tree>,
}

/// The RNG for tree `index`: one ChaCha stream per tree, so training order
/// does not matter.
pub(crate) fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub(crate) fn rows_of(x: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|i| x.row(i).iter().copied().collect())
        .collect()
}

/// Random forest regression on the table's feature columns. Tables built
/// with [`FeatureTable::with_coordinates`] give the coordinate variant.
pub fn rf_fit(table: &FeatureTable, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    let (n, p) = table.x.shape();
    if n < 2 {
        return Err(Error::NotEnoughPoints {
            needed: 2,
            available: n,
        });
    }
    params.validate(p)?;
    if let Some(i) = table.x.iter().chain(table.y.iter()).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("forest input value #{i}")));
    }
    let rows = rows_of(&table.x);
    let y: Vec<f64> = table.y.iter().copied().collect();
    let grow_params = GrowParams {
        mtry: params.resolved_mtry(p),
        min_leaf: params.min_leaf,
        max_depth: params.max_depth,
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let sample: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow(&rows, &y, sample, &grow_params, &mut rng)
        })
        .collect();
    let names = table.feature_names();
    let uses_coordinates = p >= 2 && names[p - 2] == COORD_X && names[p - 1] == COORD_Y;
    Ok(ForestModel {
        params: *params,
        seed,
        feature_names: names,
        uses_coordinates,
        base_value: y.iter().sum::<f64>() / n as f64,
        trees,
    })
}

impl ForestModel {
    pub fn p(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Mean over trees for every row of `x`, whose columns must match the
    /// training schema.
    pub fn predict(&self, x: &nalgebra::DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.p() {
            return Err(Error::Schema(format!(
                "forest expects {} columns, got {}",
                self.p(),
                x.ncols()
            )));
        }
        Ok(rows_of(x).iter().map(|r| self.predict_row(r)).collect())
    }

    /// Feature row for a location: appends the coordinates when the model
    /// was trained with them. `x` holds the non-coordinate features.
    pub fn row_at(&self, location: Point, x: &[f64]) -> Result<Vec<f64>> {
        let extra = if self.uses_coordinates { 2 } else { 0 };
        if x.len() + extra != self.p() {
            return Err(Error::Schema(format!(
                "forest expects {} features, got {}",
                self.p() - extra,
                x.len()
            )));
        }
        let mut row = x.to_vec();
        if self.uses_coordinates {
            row.push(location.x);
            row.push(location.y);
        }
        Ok(row)
    }
}
