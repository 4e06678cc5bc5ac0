use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Point, SpatialIndex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Sum,
    Mean,
    Count,
}

/// Aggregates `values` (one per indexed point) over the closed disc of
/// `radius` around `center`.
pub fn buffer_aggregate(
    index: &SpatialIndex,
    values: &[f64],
    center: Point,
    radius: f64,
    agg: Aggregation,
) -> Result<f64> {
    if values.len() != index.len() {
        return Err(Error::Schema(format!(
            "{} values for {} indexed points",
            values.len(),
            index.len()
        )));
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "buffer radius must be >= 0, got {radius}"
        )));
    }
    let hits = index.within(center, radius);
    Ok(match agg {
        Aggregation::Count => hits.len() as f64,
        Aggregation::Sum => hits.iter().map(|&i| values[i]).sum(),
        Aggregation::Mean => {
            if hits.is_empty() {
                return Err(Error::EmptyBuffer {
                    x: center.x,
                    y: center.y,
                    radius,
                });
            }
            hits.iter().map(|&i| values[i]).sum::<f64>() / hits.len() as f64
        }
    })
}

/// Maps every source to its nearest target id (ties to the lowest id).
pub fn nearest_join(sources: &[Point], targets: &SpatialIndex) -> Result<Vec<usize>> {
    if targets.is_empty() {
        return Err(Error::Empty("nearest-join targets"));
    }
    Ok(sources
        .par_iter()
        .map(|&s| targets.nearest(s).expect("targets are non-empty").0)
        .collect())
}
