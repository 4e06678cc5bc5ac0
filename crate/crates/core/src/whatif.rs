//! Supply what-if curves for a hypothetical station and the statistics of
//! existing stations around it.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureTable, FusionContext, SUPPLY_COLUMN};
use crate::error::{Error, Result};
use crate::model::{ModelBundle, ModelKind};
use crate::spatial::Point;

pub const NEIGHBOURHOOD_RADIUS_M: f64 = 3000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargestStation {
    pub station_id: String,
    pub supply_cars: f64,
    pub demand_trips_per_month: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighbourhoodStats {
    pub radius_m: f64,
    pub n_stations: usize,
    pub mean_supply_cars: Option<f64>,
    pub mean_demand_trips_per_month: Option<f64>,
    /// Most cars; ties go to the higher demand, then the first in table order.
    pub largest_station: Option<LargestStation>,
}

/// Existing stations within the closed 3 km disc around `location`.
pub fn neighbourhood_stats(table: &FeatureTable, location: Point) -> Result<NeighbourhoodStats> {
    let raw = table.destandardize();
    let s = raw.column_index(SUPPLY_COLUMN)?;
    let near: Vec<usize> = (0..raw.n())
        .filter(|&i| raw.locations[i].dist(&location) <= NEIGHBOURHOOD_RADIUS_M)
        .collect();
    let m = near.len() as f64;
    let mean =
        |f: &dyn Fn(usize) -> f64| (!near.is_empty()).then(|| near.iter().map(|&i| f(i)).sum::<f64>() / m);
    let largest = near
        .iter()
        .copied()
        .reduce(|a, b| {
            let ka = (raw.x[(a, s)], raw.y[a]);
            let kb = (raw.x[(b, s)], raw.y[b]);
            if kb.0 > ka.0 || (kb.0 == ka.0 && kb.1 > ka.1) {
                b
            } else {
                a
            }
        })
        .map(|i| LargestStation {
            station_id: raw.station_ids[i].clone(),
            supply_cars: raw.x[(i, s)],
            demand_trips_per_month: raw.y[i],
        });
    Ok(NeighbourhoodStats {
        radius_m: NEIGHBOURHOOD_RADIUS_M,
        n_stations: near.len(),
        mean_supply_cars: mean(&|i| raw.x[(i, s)]),
        mean_demand_trips_per_month: mean(&|i| raw.y[i]),
        largest_station: largest,
    })
}

/// Raw feature values of a hypothetical station, by column name.
pub type BaseFeatures = BTreeMap<String, f64>;

/// Features fused at `location` with the training-time configuration. The
/// flag reports whether the location lies outside the fusion boundary.
pub fn fused_base(ctx: &FusionContext, location: Point) -> Result<(BaseFeatures, bool)> {
    let row = ctx.candidate_row(location, 1.0)?;
    let map = ctx
        .columns()
        .iter()
        .zip(&row.values)
        .map(|(c, &v)| (c.name.clone(), v))
        .collect();
    Ok((map, row.extrapolated))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyCurve {
    pub model: String,
    pub kind: ModelKind,
    pub supply_cars: Vec<f64>,
    /// `None` where a local model could not be calibrated.
    pub demand_trips_per_month: Vec<Option<f64>>,
}

impl SupplyCurve {
    /// `demand(k) - demand(k-1)` for consecutive supply values.
    pub fn increments(&self) -> Vec<Option<f64>> {
        self.demand_trips_per_month
            .windows(2)
            .map(|w| match (w[0], w[1]) {
                (Some(a), Some(b)) => Some(b - a),
                _ => None,
            })
            .collect()
    }
}

/// Predicted demand at `location` as the supply feature sweeps
/// `supply_values`, all other features held at `base`.
pub fn supply_curve(
    name: &str,
    bundle: &ModelBundle,
    location: Point,
    base: &BaseFeatures,
    supply_values: &[f64],
) -> Result<SupplyCurve> {
    if !bundle.kind.predicts_out_of_sample() {
        return Err(Error::Unsupported(
            "MGWR does not support out-of-sample prediction, so it has no what-if curve".into(),
        ));
    }
    let names = bundle.feature_names();
    let s = names
        .iter()
        .position(|n| n == SUPPLY_COLUMN)
        .ok_or_else(|| Error::Schema(format!("model `{name}` does not use `{SUPPLY_COLUMN}`")))?;
    let mut row = Vec::with_capacity(names.len());
    for n in &names {
        if n == SUPPLY_COLUMN {
            row.push(0.0);
        } else {
            row.push(*base.get(n).ok_or_else(|| Error::UnknownFeature(n.clone()))?);
        }
    }
    let x = DMatrix::from_fn(supply_values.len(), names.len(), |r, c| {
        if c == s {
            supply_values[r]
        } else {
            row[c]
        }
    });
    let locations = vec![location; supply_values.len()];
    Ok(SupplyCurve {
        model: name.to_string(),
        kind: bundle.kind,
        supply_cars: supply_values.to_vec(),
        demand_trips_per_month: bundle.predict(&locations, &x)?,
    })
}

/// `1, 2, ..., k` cars.
pub fn supply_range(k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "supply range must contain at least one value".into(),
        ));
    }
    Ok((1..=k).map(|v| v as f64).collect())
}
