use std::collections::{BTreeSet, HashMap};
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{FusionConfig, StationRecord};
use crate::error::{Error, Result};

/// Days per month used to convert a window length into months.
pub const DAYS_PER_MONTH: f64 = 30.4375;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripKind {
    Return,
    OneWay,
    Other,
}

impl FromStr for TripKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "return" => Ok(TripKind::Return),
            "one_way" | "oneway" => Ok(TripKind::OneWay),
            "other" => Ok(TripKind::Other),
            other => Err(Error::Parse(format!("unknown trip kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub station_id: String,
    pub start: NaiveDateTime,
    pub duration_h: f64,
    pub distance_km: f64,
    pub kind: TripKind,
}

/// Removal counts per rule. A trip failing several rules is counted under
/// the first one checked (duration, distance, kind).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input: usize,
    pub removed_duration: usize,
    pub removed_distance: usize,
    pub removed_kind: usize,
    pub kept: usize,
}

/// Keeps return trips with duration ≤ max and distance in (min, max].
pub fn clean_trips(trips: &[TripRecord], cfg: &FusionConfig) -> (Vec<TripRecord>, CleaningReport) {
    let mut report = CleaningReport {
        input: trips.len(),
        ..Default::default()
    };
    let (dmin, dmax) = cfg.trip_distance_km;
    let kept: Vec<TripRecord> = trips
        .iter()
        .filter(|t| {
            if !(t.duration_h <= cfg.max_trip_duration_h) || t.duration_h < 0.0 {
                report.removed_duration += 1;
                false
            } else if !(t.distance_km > dmin && t.distance_km <= dmax) {
                report.removed_distance += 1;
                false
            } else if t.kind != TripKind::Return {
                report.removed_kind += 1;
                false
            } else {
                true
            }
        })
        .cloned()
        .collect();
    report.kept = kept.len();
    (kept, report)
}

/// Average trips per month per station over `window`. Stations without
/// trips get 0. Every trip is counted; trips outside the window are the
/// caller's concern.
pub fn compute_demand(
    trips: &[TripRecord],
    stations: &[StationRecord],
    window: (NaiveDateTime, NaiveDateTime),
) -> Result<Vec<f64>> {
    let (start, end) = window;
    if end <= start {
        return Err(Error::InvalidArgument(
            "demand window end must be after start".into(),
        ));
    }
    let days = (end - start).num_milliseconds() as f64 / 86_400_000.0;
    let months = days / DAYS_PER_MONTH;
    let position: HashMap<&str, usize> = stations
        .iter()
        .enumerate()
        .map(|(i, s)| (s.station_id.as_str(), i))
        .collect();
    let mut counts = vec![0usize; stations.len()];
    let mut unknown = BTreeSet::new();
    for t in trips {
        match position.get(t.station_id.as_str()) {
            Some(&i) => counts[i] += 1,
            None => {
                unknown.insert(t.station_id.clone());
            }
        }
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownStations(unknown.into_iter().collect()));
    }
    Ok(counts.into_iter().map(|c| c as f64 / months).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::Point;
    use chrono::{Duration, NaiveDate};

    fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2019, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
    }

    fn trip(station: &str, duration_h: f64, distance_km: f64, kind: TripKind) -> TripRecord {
        TripRecord {
            station_id: station.into(),
            start: t0(),
            duration_h,
            distance_km,
            kind,
        }
    }

    fn station(id: &str) -> StationRecord {
        StationRecord {
            station_id: id.into(),
            location: Point::new(600_000.0, 200_000.0),
            vehicles: 2.0,
        }
    }

    #[test]
    fn cleaning_rules() {
        let cfg = FusionConfig::default();
        let trips = vec![
            trip("a", 501.0, 10.0, TripKind::Return),
            trip("a", 500.0, 0.0, TripKind::Return),
            trip("a", 3.0, 500.5, TripKind::Return),
            trip("a", 3.0, 12.0, TripKind::OneWay),
            trip("a", 3.0, 500.0, TripKind::Return),
            trip("a", 500.0, 0.1, TripKind::Return),
        ];
        let (kept, report) = clean_trips(&trips, &cfg);
        assert_eq!(kept.len(), 2);
        assert_eq!(report.removed_duration, 1);
        assert_eq!(report.removed_distance, 2);
        assert_eq!(report.removed_kind, 1);
        assert_eq!(report.kept, 2);
    }

    #[test]
    fn clean_input_untouched_and_idempotent() {
        let cfg = FusionConfig::default();
        let trips: Vec<TripRecord> = (0..20)
            .map(|i| trip("a", i as f64, 1.0 + i as f64, TripKind::Return))
            .collect();
        let (once, _) = clean_trips(&trips, &cfg);
        assert_eq!(once, trips);
        let (twice, _) = clean_trips(&once, &cfg);
        assert_eq!(once, twice);
    }

    #[test]
    fn demand_per_month() {
        let stations = vec![station("a"), station("b")];
        let trips: Vec<TripRecord> = (0..24).map(|_| trip("a", 1.0, 1.0, TripKind::Return)).collect();
        let window = (
            t0(),
            t0() + Duration::milliseconds((365.25 * 86_400_000.0) as i64),
        );
        let d = compute_demand(&trips, &stations, window).unwrap();
        assert!((d[0] - 2.0).abs() < 1e-12);
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn demand_over_long_window() {
        let stations = vec![station("a")];
        let trips: Vec<TripRecord> = (0..870).map(|_| trip("a", 1.0, 1.0, TripKind::Return)).collect();
        let d = compute_demand(&trips, &stations, (t0(), t0() + Duration::days(423))).unwrap();
        assert!((d[0] - 870.0 / (423.0 / DAYS_PER_MONTH)).abs() < 1e-12);
        assert!((d[0] - 62.6).abs() < 0.05);
    }

    #[test]
    fn demand_total_conserved() {
        let stations: Vec<StationRecord> = ["a", "b", "c"].iter().map(|s| station(s)).collect();
        let trips: Vec<TripRecord> = (0..101)
            .map(|i| trip(["a", "b", "c"][i % 3], 1.0, 1.0, TripKind::Return))
            .collect();
        let window = (t0(), t0() + Duration::days(100));
        let d = compute_demand(&trips, &stations, window).unwrap();
        let total: f64 = d.iter().sum::<f64>() * (100.0 / DAYS_PER_MONTH);
        assert!((total - 101.0).abs() / 101.0 < 1e-9);
    }

    #[test]
    fn unknown_stations_listed() {
        let trips = vec![
            trip("zz", 1.0, 1.0, TripKind::Return),
            trip("yy", 1.0, 1.0, TripKind::Return),
        ];
        match compute_demand(&trips, &[station("a")], (t0(), t0() + Duration::days(1))) {
            Err(Error::UnknownStations(ids)) => assert_eq!(ids, vec!["yy", "zz"]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(compute_demand(&[], &[station("a")], (t0(), t0())).is_err());
    }
}
