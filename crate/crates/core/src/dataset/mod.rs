//! Raw record types, trip cleaning, feature fusion and the synthetic
//! generator that feeds every model.

mod fusion;
pub mod io;
pub mod synth;
mod table;
mod trips;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::spatial::Point;

pub use fusion::{fuse_features, CandidateRow, FusionContext, FusionInputs, FusionOutput};
pub use table::{Column, FeatureTable, Scaling, Standardization, COORD_X, COORD_Y};
pub use trips::{clean_trips, compute_demand, CleaningReport, TripKind, TripRecord, DAYS_PER_MONTH};

/// Name of the fused supply column; the what-if sweep overrides it.
pub const SUPPLY_COLUMN: &str = "supply_cars";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRecord {
    pub station_id: String,
    pub location: Point,
    /// Cars stationed here.
    pub vehicles: f64,
}

/// A categorized point of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub location: Point,
    pub category: String,
}

/// Points carrying named numeric attributes (census cells, survey households).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributedPoints {
    pub names: Vec<String>,
    pub units: Vec<String>,
    pub locations: Vec<Point>,
    /// One vector per attribute, each `locations.len()` long.
    pub values: Vec<Vec<f64>>,
}

impl AttributedPoints {
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if self.names.len() != self.values.len() || self.units.len() != self.names.len() {
            return Err(Error::Schema(format!(
                "{what}: {} names, {} units, {} value columns",
                self.names.len(),
                self.units.len(),
                self.values.len()
            )));
        }
        for (name, col) in self.names.iter().zip(&self.values) {
            if col.len() != self.locations.len() {
                return Err(Error::Schema(format!(
                    "{what}: attribute `{name}` has {} values for {} points",
                    col.len(),
                    self.locations.len()
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{what} attribute `{name}`")));
            }
        }
        if self.locations.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("{what} coordinates")));
        }
        Ok(())
    }
}

/// How census attributes inside the station buffer are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CensusAggregation {
    #[default]
    Sum,
    /// Mean over the buffer; an empty buffer falls back to the nearest census point.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub buffer_radius_m: f64,
    pub competitor_radius_m: f64,
    pub census_min_households: usize,
    pub census_radius_step_m: f64,
    pub max_trip_duration_h: f64,
    /// Kept trips have distance in `(lo, hi]`.
    pub trip_distance_km: (f64, f64),
    /// Output category → raw category labels. Empty means one output
    /// category per raw label found in the data.
    pub poi_categories: BTreeMap<String, Vec<String>>,
    pub census_aggregation: CensusAggregation,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            buffer_radius_m: 750.0,
            competitor_radius_m: 1000.0,
            census_min_households: 10,
            census_radius_step_m: 250.0,
            max_trip_duration_h: 500.0,
            trip_distance_km: (0.0, 500.0),
            poi_categories: BTreeMap::new(),
            census_aggregation: CensusAggregation::Sum,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("buffer_radius_m", self.buffer_radius_m),
            ("competitor_radius_m", self.competitor_radius_m),
            ("census_radius_step_m", self.census_radius_step_m),
            ("max_trip_duration_h", self.max_trip_duration_h),
        ] {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {r}")));
            }
        }
        let (lo, hi) = self.trip_distance_km;
        if !(lo >= 0.0) || !(hi > lo) {
            return Err(Error::InvalidArgument(format!(
                "trip distance range ({lo}, {hi}] must satisfy 0 <= lo < hi"
            )));
        }
        if self.census_min_households == 0 {
            return Err(Error::InvalidArgument(
                "census_min_households must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Rejects a point set that looks like longitude/latitude degrees.
pub fn check_projected(points: &[Point]) -> Result<()> {
    if !points.is_empty() && points.iter().all(|p| p.x.abs() <= 180.0 && p.y.abs() <= 90.0) {
        return Err(Error::UnprojectedCoordinates);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = FusionConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.buffer_radius_m, 750.0);
        assert_eq!(cfg.census_min_households, 10);
        let bad = FusionConfig {
            competitor_radius_m: 0.0,
            ..FusionConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = FusionConfig::default();
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
        b.buffer_radius_m = 751.0;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn degree_coordinates_rejected() {
        let ll = [Point::new(8.54, 47.37), Point::new(7.44, 46.95)];
        assert!(matches!(check_projected(&ll), Err(Error::UnprojectedCoordinates)));
        check_projected(&[Point::new(2_683_000.0, 1_248_000.0)]).unwrap();
    }
}
