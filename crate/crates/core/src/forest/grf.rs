use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{rf_fit, ForestModel, ForestParams};
use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::spatial::{Point, SpatialIndex};

/// Geographical random forest: one local forest per training station,
/// trained on its `k` nearest stations (itself included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrfModel {
    pub k: usize,
    pub params: ForestParams,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub station_ids: Vec<String>,
    pub locations: Vec<Point>,
    /// Training rows (sorted) behind each local forest.
    pub neighbours: Vec<Vec<usize>>,
    pub models: Vec<ForestModel>,
}

pub fn default_grf_k(n: usize) -> usize {
    n.div_ceil(4)
}

/// Every local forest uses the same seed.
pub fn grf_fit(table: &FeatureTable, k: usize, params: &ForestParams, seed: u64) -> Result<GrfModel> {
    let (n, p) = table.x.shape();
    if k > n {
        return Err(Error::NotEnoughPoints {
            needed: k,
            available: n,
        });
    }
    if k < p + 2 {
        return Err(Error::InvalidArgument(format!(
            "GRF neighbourhood k={k} is below p+2={}",
            p + 2
        )));
    }
    let index = SpatialIndex::new(&table.locations)?;
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            // Self first, then the k-1 nearest others.
            let mut ids: Vec<usize> = std::iter::once(i)
                .chain(
                    index
                        .knn_filtered(table.locations[i], k - 1, |j| j != i)
                        .into_iter()
                        .map(|(j, _)| j),
                )
                .collect();
            ids.sort_unstable();
            ids
        })
        .collect();
    let models = neighbours
        .par_iter()
        .map(|ids| rf_fit(&table.subset(ids), params, seed))
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(GrfModel {
        k,
        params: *params,
        seed,
        feature_names: table.feature_names(),
        station_ids: table.station_ids.clone(),
        locations: table.locations.clone(),
        neighbours,
        models,
    })
}

impl GrfModel {
    /// Index of the training station nearest to `location` (ties to the
    /// lowest index).
    pub fn dispatch(&self, location: Point) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.locations.iter().enumerate() {
            let d = p.dist2(&location);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    pub fn predict_one(&self, location: Point, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_names.len() {
            return Err(Error::Schema(format!(
                "GRF expects {} features, got {}",
                self.feature_names.len(),
                x.len()
            )));
        }
        Ok(self.models[self.dispatch(location)].predict_row(x))
    }

    pub fn predict(&self, locations: &[Point], x: &nalgebra::DMatrix<f64>) -> Result<Vec<f64>> {
        if locations.len() != x.nrows() {
            return Err(Error::Schema(format!(
                "{} locations for {} rows",
                locations.len(),
                x.nrows()
            )));
        }
        let rows = super::model::rows_of(x);
        locations
            .iter()
            .zip(&rows)
            .map(|(l, r)| self.predict_one(*l, r))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth::{synth_generate, Preset};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> ForestParams {
        ForestParams {
            n_trees: 20,
            ..ForestParams::default()
        }
    }

    #[test]
    fn full_neighbourhood_equals_global_forest() {
        let (t, _) = synth_generate(&Preset::SaturatingSupply.spec(40), 1).unwrap();
        let g = grf_fit(&t, 40, &small(), 5).unwrap();
        let rf = rf_fit(&t, &small(), 5).unwrap();
        let rows = crate::forest::model::rows_of(&t.x);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(g.predict_one(t.locations[i], r).unwrap(), rf.predict_row(r));
        }
        assert!(g.models.iter().all(|m| m == &rf));
        assert!(grf_fit(&t, 41, &small(), 5).is_err());
    }

    #[test]
    fn dispatch_matches_scan() {
        let (t, _) = synth_generate(&Preset::SaturatingSupply.spec(60), 2).unwrap();
        let g = grf_fit(&t, 15, &small(), 1).unwrap();
        assert!(g
            .neighbours
            .iter()
            .enumerate()
            .all(|(i, ids)| ids.len() == 15 && ids.contains(&i)));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (lo, hi) = (t.locations[0].x - 40_000.0, t.locations[0].x + 40_000.0);
        for _ in 0..500 {
            let q = Point::new(
                rng.random_range(lo..hi),
                t.locations[0].y + rng.random_range(-40_000.0..40_000.0),
            );
            let want = (0..60)
                .min_by(|&a, &b| {
                    t.locations[a]
                        .dist(&q)
                        .total_cmp(&t.locations[b].dist(&q))
                        .then(a.cmp(&b))
                })
                .unwrap();
            assert_eq!(g.dispatch(q), want);
        }
        assert_eq!(g.dispatch(t.locations[7]), 7);
    }
}
