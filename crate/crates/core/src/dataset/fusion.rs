use std::collections::{BTreeSet, HashSet};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::table::{Column, FeatureTable};
use super::{
    check_projected, AttributedPoints, CensusAggregation, FusionConfig, Poi, StationRecord, SUPPLY_COLUMN,
};
use crate::error::{Error, Result};
use crate::spatial::{
    build_voronoi, cell_around, convex_hull, Point, Polygon, SpatialIndex, VoronoiPartition,
};

/// Raw inputs of the fusion step, all in the same projected CRS.
#[derive(Debug, Clone, Default)]
pub struct FusionInputs {
    pub stations: Vec<StationRecord>,
    /// Target per station (trips per month), aligned with `stations`.
    pub demand: Vec<f64>,
    pub pois: Vec<Poi>,
    pub census: AttributedPoints,
    pub households: AttributedPoints,
    /// Voronoi clipping boundary; the buffered station hull when absent.
    pub boundary: Option<Polygon>,
}

#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub table: FeatureTable,
    /// Radius at which the household-radius attributes were averaged, per station.
    pub household_radius_m: Vec<f64>,
    pub partition: VoronoiPartition,
    pub config_fingerprint: String,
}

/// Features of a hypothetical station, in the fused column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub values: Vec<f64>,
    pub supply_index: usize,
    pub voronoi_area_km2: f64,
    pub household_radius_m: f64,
    /// The location lies outside the fusion boundary, which was grown to include it.
    pub extrapolated: bool,
}

/// Indexed fusion inputs. Built once, then used for the training table and
/// for any number of candidate locations.
#[derive(Debug)]
pub struct FusionContext {
    inputs: FusionInputs,
    cfg: FusionConfig,
    stations: SpatialIndex,
    pois: SpatialIndex,
    census: SpatialIndex,
    households: SpatialIndex,
    partition: VoronoiPartition,
    /// Output POI categories in column order.
    categories: Vec<String>,
    /// Output category of each POI, if any.
    poi_category: Vec<Option<usize>>,
    columns: Vec<Column>,
}

impl FusionContext {
    pub fn new(inputs: FusionInputs, cfg: FusionConfig) -> Result<Self> {
        cfg.validate()?;
        check_inputs(&inputs, &cfg)?;
        let station_pts: Vec<Point> = inputs.stations.iter().map(|s| s.location).collect();
        let partition = build_voronoi(&station_pts, inputs.boundary.as_ref())?;
        let stations = SpatialIndex::new(&station_pts)?;
        let poi_pts: Vec<Point> = inputs.pois.iter().map(|p| p.location).collect();
        let pois = SpatialIndex::new(&poi_pts)?;
        let census = SpatialIndex::new(&inputs.census.locations)?;
        let households = SpatialIndex::new(&inputs.households.locations)?;

        let categories: Vec<String> = if cfg.poi_categories.is_empty() {
            inputs
                .pois
                .iter()
                .map(|p| p.category.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        } else {
            cfg.poi_categories.keys().cloned().collect()
        };
        let poi_category = inputs
            .pois
            .iter()
            .map(|p| {
                if cfg.poi_categories.is_empty() {
                    categories.iter().position(|c| *c == p.category)
                } else {
                    cfg.poi_categories
                        .values()
                        .position(|labels| labels.iter().any(|l| *l == p.category))
                }
            })
            .collect();
        let columns = fused_columns(&cfg, &categories, &inputs.census, &inputs.households);
        Ok(Self {
            inputs,
            cfg,
            stations,
            pois,
            census,
            households,
            partition,
            categories,
            poi_category,
            columns,
        })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.cfg
    }

    pub fn inputs(&self) -> &FusionInputs {
        &self.inputs
    }

    pub fn partition(&self) -> &VoronoiPartition {
        &self.partition
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn poi_categories(&self) -> &[String] {
        &self.categories
    }

    /// Fuses every station into a feature table.
    pub fn fuse(&self) -> Result<FusionOutput> {
        let n = self.inputs.stations.len();
        let station_pts = self.stations.points();

        // POIs inside the boundary belong to their nearest station's cell.
        let mut poi_counts = vec![vec![0usize; self.categories.len()]; n];
        for (k, p) in self.inputs.pois.iter().enumerate() {
            if let Some(c) = self.poi_category[k] {
                if self.partition.boundary.contains(p.location) {
                    let (s, _) = self.stations.nearest(p.location).expect("stations non-empty");
                    poi_counts[s][c] += 1;
                }
            }
        }
        let hh = &self.inputs.households;
        let mut hh_members: Vec<Vec<usize>> = vec![Vec::new(); n];
        if !hh.names.is_empty() {
            for (h, &loc) in hh.locations.iter().enumerate() {
                let (s, _) = self.stations.nearest(loc).expect("stations non-empty");
                hh_members[s].push(h);
            }
        }

        let rows: Vec<(Vec<f64>, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let loc = station_pts[i];
                let area = self.partition.areas_km2[i];
                let densities: Vec<f64> = poi_counts[i].iter().map(|&c| c as f64 / area).collect();
                self.assemble(
                    loc,
                    area,
                    &densities,
                    &hh_members[i],
                    |j| j != i,
                    self.inputs.stations[i].vehicles,
                )
            })
            .collect::<Result<_>>()?;

        let mut x = DMatrix::zeros(n, self.columns.len());
        let mut radii = Vec::with_capacity(n);
        for (i, (row, r)) in rows.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                x[(i, j)] = v;
            }
            radii.push(r);
        }
        let table = FeatureTable::new(
            self.inputs
                .stations
                .iter()
                .map(|s| s.station_id.clone())
                .collect(),
            station_pts.to_vec(),
            self.columns.clone(),
            x,
            DVector::from_vec(self.inputs.demand.clone()),
            Column::new(
                "demand_trips_per_month",
                "trips/month",
                "return trips per station / window months",
            ),
        )?;
        Ok(FusionOutput {
            table,
            household_radius_m: radii,
            partition: self.partition.clone(),
            config_fingerprint: self.cfg.fingerprint(),
        })
    }

    /// Features of a hypothetical station at `location` with `supply` cars.
    /// An existing station at the same coordinates is replaced, not competed with.
    pub fn candidate_row(&self, location: Point, supply: f64) -> Result<CandidateRow> {
        if !location.is_finite() || !supply.is_finite() {
            return Err(Error::NonFinite("candidate location or supply".into()));
        }
        let keep = |j: usize| self.stations.point(j) != location;
        if !(0..self.stations.len()).any(keep) {
            return Err(Error::Geometry("no other station to partition against".into()));
        }
        let extrapolated = !self.partition.boundary.contains(location);
        let boundary = if extrapolated {
            let mut pts = self.partition.boundary.vertices.clone();
            pts.push(location);
            Polygon::new(convex_hull(&pts))
        } else {
            self.partition.boundary.clone()
        };
        let cell = cell_around(&self.stations, location, &boundary, keep);
        let area = cell.area() / 1e6;
        let reach = cell
            .vertices
            .iter()
            .map(|v| v.dist(&location))
            .fold(0.0f64, f64::max);

        // The candidate loses distance ties against existing stations.
        let wins = |p: Point| match self.stations.knn_filtered(p, 1, keep).first() {
            Some(&(_, d)) => p.dist2(&location) < d * d,
            None => true,
        };
        let mut counts = vec![0usize; self.categories.len()];
        for k in self.pois.within(location, reach) {
            if let Some(c) = self.poi_category[k] {
                let p = self.pois.point(k);
                if boundary.contains(p) && wins(p) {
                    counts[c] += 1;
                }
            }
        }
        let densities: Vec<f64> = counts.iter().map(|&c| c as f64 / area).collect();
        let members: Vec<usize> = if self.inputs.households.names.is_empty() {
            Vec::new()
        } else {
            // Nearest-station membership is not limited to the boundary.
            (0..self.households.len())
                .filter(|&h| wins(self.households.point(h)))
                .collect()
        };
        let (values, radius) = self.assemble(location, area, &densities, &members, keep, supply)?;
        Ok(CandidateRow {
            values,
            supply_index: self.columns.len() - 1,
            voronoi_area_km2: area,
            household_radius_m: radius,
            extrapolated,
        })
    }

    /// Builds one row from the cell-level pieces plus the radius-based
    /// aggregates around `loc`. `competitor` selects stations that count as
    /// competition.
    fn assemble(
        &self,
        loc: Point,
        area_km2: f64,
        densities: &[f64],
        hh_members: &[usize],
        competitor: impl Fn(usize) -> bool,
        supply: f64,
    ) -> Result<(Vec<f64>, f64)> {
        let cfg = &self.cfg;
        let hh = &self.inputs.households;
        let census = &self.inputs.census;
        let mut row = Vec::with_capacity(self.columns.len());
        row.push(area_km2);
        row.extend_from_slice(densities);

        if !hh.names.is_empty() {
            let fallback;
            let members = if hh_members.is_empty() {
                fallback = [self.households.nearest(loc).expect("households non-empty").0];
                &fallback[..]
            } else {
                hh_members
            };
            for col in &hh.values {
                row.push(members.iter().map(|&h| col[h]).sum::<f64>() / members.len() as f64);
            }
        }

        if !census.names.is_empty() {
            let hits = self.census.within(loc, cfg.buffer_radius_m);
            for col in &census.values {
                let v = match cfg.census_aggregation {
                    CensusAggregation::Sum => hits.iter().map(|&c| col[c]).sum(),
                    CensusAggregation::Mean if hits.is_empty() => {
                        let (c, _) = self.census.nearest(loc).ok_or(Error::Empty("census points"))?;
                        col[c]
                    }
                    CensusAggregation::Mean => hits.iter().map(|&c| col[c]).sum::<f64>() / hits.len() as f64,
                };
                row.push(v);
            }
        }

        let rivals: Vec<usize> = self
            .stations
            .within(loc, cfg.competitor_radius_m)
            .into_iter()
            .filter(|&j| competitor(j))
            .collect();
        row.push(rivals.len() as f64);
        row.push(rivals.iter().map(|&j| self.inputs.stations[j].vehicles).sum());

        let mut radius = cfg.competitor_radius_m;
        if !hh.names.is_empty() {
            let mut step = 0usize;
            let mut found = self.households.within(loc, radius);
            while found.len() < cfg.census_min_households {
                step += 1;
                radius = cfg.competitor_radius_m + step as f64 * cfg.census_radius_step_m;
                found = self.households.within(loc, radius);
            }
            for col in &hh.values {
                row.push(found.iter().map(|&h| col[h]).sum::<f64>() / found.len() as f64);
            }
        }

        row.push(supply);
        Ok((row, radius))
    }
}

/// Fuses raw inputs into the station feature table.
pub fn fuse_features(inputs: FusionInputs, cfg: &FusionConfig) -> Result<FusionOutput> {
    FusionContext::new(inputs, cfg.clone())?.fuse()
}

fn check_inputs(inputs: &FusionInputs, cfg: &FusionConfig) -> Result<()> {
    let stations = &inputs.stations;
    if stations.len() != inputs.demand.len() {
        return Err(Error::Schema(format!(
            "{} demand values for {} stations",
            inputs.demand.len(),
            stations.len()
        )));
    }
    let mut seen = HashSet::new();
    for s in stations {
        if !seen.insert(s.station_id.as_str()) {
            return Err(Error::Schema(format!("duplicate station id `{}`", s.station_id)));
        }
        if !(s.vehicles >= 0.0) || !s.vehicles.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "station `{}` has vehicle count {}",
                s.station_id, s.vehicles
            )));
        }
    }
    if inputs.demand.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("demand".into()));
    }
    let station_pts: Vec<Point> = stations.iter().map(|s| s.location).collect();
    let poi_pts: Vec<Point> = inputs.pois.iter().map(|p| p.location).collect();
    for pts in [
        &station_pts,
        &poi_pts,
        &inputs.census.locations,
        &inputs.households.locations,
    ] {
        check_projected(pts)?;
    }
    if poi_pts.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("POI coordinates".into()));
    }
    inputs.census.validate("census")?;
    inputs.households.validate("households")?;
    if !inputs.households.names.is_empty() && inputs.households.len() < cfg.census_min_households {
        return Err(Error::TooFewHouseholds {
            found: inputs.households.len(),
            required: cfg.census_min_households,
        });
    }
    Ok(())
}

fn fused_columns(
    cfg: &FusionConfig,
    categories: &[String],
    census: &AttributedPoints,
    households: &AttributedPoints,
) -> Vec<Column> {
    let mut cols = vec![Column::new("voronoi_area_km2", "km2", "voronoi cell area")];
    for c in categories {
        cols.push(Column::new(
            format!("poi_density_{c}"),
            "1/km2",
            "poi count in voronoi cell / cell area",
        ));
    }
    for (name, unit) in households.names.iter().zip(&households.units) {
        cols.push(Column::new(
            format!("hh_nearest_{name}"),
            unit.clone(),
            "mean over households whose nearest station is this one",
        ));
    }
    let census_rule = match cfg.census_aggregation {
        CensusAggregation::Sum => "sum",
        CensusAggregation::Mean => "mean",
    };
    for (name, unit) in census.names.iter().zip(&census.units) {
        cols.push(Column::new(
            format!("census_{name}"),
            unit.clone(),
            format!("{census_rule} within {} m", cfg.buffer_radius_m),
        ));
    }
    let within = format!("within {} m, self excluded", cfg.competitor_radius_m);
    cols.push(Column::new(
        "competing_stations",
        "stations",
        format!("count {within}"),
    ));
    cols.push(Column::new(
        "competing_cars",
        "cars",
        format!("sum of vehicles {within}"),
    ));
    for (name, unit) in households.names.iter().zip(&households.units) {
        cols.push(Column::new(
            format!("hh_radius_{name}"),
            unit.clone(),
            format!(
                "mean within {} m grown by {} m until {} households",
                cfg.competitor_radius_m, cfg.census_radius_step_m, cfg.census_min_households
            ),
        ));
    }
    cols.push(Column::new(SUPPLY_COLUMN, "cars", "station vehicle count"));
    cols
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    const ORIGIN: Point = Point::new(2_600_000.0, 1_200_000.0);

    fn at(x: f64, y: f64) -> Point {
        Point::new(ORIGIN.x + x, ORIGIN.y + y)
    }

    fn station(id: usize, p: Point, vehicles: f64) -> StationRecord {
        StationRecord {
            station_id: format!("s{id}"),
            location: p,
            vehicles,
        }
    }

    fn attrs(name: &str, locations: Vec<Point>, values: Vec<f64>) -> AttributedPoints {
        AttributedPoints {
            names: vec![name.into()],
            units: vec!["u".into()],
            locations,
            values: vec![values],
        }
    }

    // --- independent oracle helpers -------------------------------------

    fn clip_half_plane(poly: &[Point], a: Point, c: f64) -> Vec<Point> {
        let mut out = Vec::new();
        for i in 0..poly.len() {
            let p = poly[i];
            let q = poly[(i + 1) % poly.len()];
            let fp = a.x * p.x + a.y * p.y - c;
            let fq = a.x * q.x + a.y * q.y - c;
            if fp <= 0.0 {
                out.push(p);
            }
            if fp * fq < 0.0 {
                let t = fp / (fp - fq);
                out.push(Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)));
            }
        }
        out
    }

    fn shoelace(poly: &[Point]) -> f64 {
        let mut acc = 0.0;
        for i in 1..poly.len().saturating_sub(1) {
            let (a, b) = (poly[i], poly[i + 1]);
            acc += (a.x - poly[0].x) * (b.y - poly[0].y) - (a.y - poly[0].y) * (b.x - poly[0].x);
        }
        0.5 * acc.abs()
    }

    /// Cell of station i: the boundary cut by every other station's bisector.
    fn oracle_area_km2(stations: &[Point], i: usize, boundary: &[Point]) -> f64 {
        let s = stations[i];
        let mut poly: Vec<Point> = boundary
            .iter()
            .map(|p| Point::new(p.x - s.x, p.y - s.y))
            .collect();
        for (j, q) in stations.iter().enumerate() {
            if j != i {
                let a = Point::new(q.x - s.x, q.y - s.y);
                poly = clip_half_plane(&poly, a, 0.5 * (a.x * a.x + a.y * a.y));
            }
        }
        shoelace(&poly) / 1e6
    }

    fn inside_ccw(poly: &[Point], p: Point) -> bool {
        (0..poly.len()).all(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= 0.0
        })
    }

    fn argmin(pts: &[Point], q: Point) -> usize {
        (0..pts.len())
            .min_by(|&a, &b| q.dist2(&pts[a]).total_cmp(&q.dist2(&pts[b])).then(a.cmp(&b)))
            .unwrap()
    }

    fn scan(pts: &[Point], q: Point, r: f64) -> Vec<usize> {
        (0..pts.len()).filter(|&k| q.dist2(&pts[k]) <= r * r).collect()
    }

    fn random_layout(seed: u64) -> (FusionInputs, FusionConfig) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = rng.random_range(4_000.0..12_000.0);
        let pt = |rng: &mut ChaCha8Rng| at(rng.random_range(0.0..side), rng.random_range(0.0..side));
        let n = rng.random_range(8..40);
        let stations: Vec<StationRecord> = (0..n)
            .map(|i| {
                let p = pt(&mut rng);
                station(i, p, rng.random_range(1..12) as f64)
            })
            .collect();
        let demand = (0..n).map(|_| rng.random_range(0.0..200.0)).collect();
        let cats = ["food", "shop", "public"];
        let pois = (0..rng.random_range(50..400))
            .map(|_| Poi {
                location: pt(&mut rng),
                category: cats[rng.random_range(0..3)].to_string(),
            })
            .collect();
        let m = rng.random_range(100..600);
        let census = AttributedPoints {
            names: vec!["population".into(), "jobs".into()],
            units: vec!["persons".into(), "jobs".into()],
            locations: (0..m).map(|_| pt(&mut rng)).collect(),
            values: vec![
                (0..m).map(|_| rng.random_range(0..50) as f64).collect(),
                (0..m).map(|_| rng.random_range(0.0..30.0)).collect(),
            ],
        };
        let h = rng.random_range(12..80);
        let households = AttributedPoints {
            names: vec!["income".into(), "cars".into()],
            units: vec!["chf".into(), "cars".into()],
            locations: (0..h).map(|_| pt(&mut rng)).collect(),
            values: vec![
                (0..h).map(|_| rng.random_range(3_000.0..15_000.0)).collect(),
                (0..h).map(|_| rng.random_range(0..3) as f64).collect(),
            ],
        };
        let boundary = Polygon::rectangle(at(-100.0, -100.0), at(side + 100.0, side + 100.0));
        let mut cfg = FusionConfig::default();
        if seed % 2 == 0 {
            cfg.poi_categories = BTreeMap::from([
                (
                    "leisure".to_string(),
                    vec!["food".to_string(), "shop".to_string()],
                ),
                ("public".to_string(), vec!["public".to_string()]),
            ]);
        }
        if seed % 3 == 0 {
            cfg.census_aggregation = CensusAggregation::Mean;
        }
        let inputs = FusionInputs {
            stations,
            demand,
            pois,
            census,
            households,
            boundary: Some(boundary),
        };
        (inputs, cfg)
    }

    fn col(table: &FeatureTable, name: &str) -> Vec<f64> {
        let j = table.column_index(name).unwrap();
        table.x.column(j).iter().copied().collect()
    }

    /// Every fused column against a direct O(n·m) re-derivation.
    fn check_against_oracle(inputs: &FusionInputs, cfg: &FusionConfig, out: &FusionOutput) {
        let t = &out.table;
        let st: Vec<Point> = inputs.stations.iter().map(|s| s.location).collect();
        let boundary = inputs.boundary.as_ref().unwrap();
        let bverts = &boundary.vertices;
        let n = st.len();
        let areas: Vec<f64> = (0..n).map(|i| oracle_area_km2(&st, i, bverts)).collect();
        for (i, a) in col(t, "voronoi_area_km2").iter().enumerate() {
            assert!(
                (a - areas[i]).abs() <= 1e-9 * areas[i],
                "area {i}: {a} vs {}",
                areas[i]
            );
        }

        let groups: Vec<(String, Vec<String>)> = if cfg.poi_categories.is_empty() {
            let set: BTreeSet<String> = inputs.pois.iter().map(|p| p.category.clone()).collect();
            set.into_iter().map(|c| (c.clone(), vec![c])).collect()
        } else {
            cfg.poi_categories.clone().into_iter().collect()
        };
        for (name, labels) in &groups {
            let got = col(t, &format!("poi_density_{name}"));
            let mut counts = vec![0usize; n];
            for p in inputs.pois.iter().filter(|p| labels.contains(&p.category)) {
                if inside_ccw(bverts, p.location) {
                    counts[argmin(&st, p.location)] += 1;
                }
            }
            for i in 0..n {
                let want = counts[i] as f64 / areas[i];
                assert!(
                    (got[i] - want).abs() <= 1e-9 * want.max(1.0),
                    "{name} density at {i}"
                );
            }
        }

        let hh = &inputs.households;
        let owner: Vec<usize> = hh.locations.iter().map(|&h| argmin(&st, h)).collect();
        for (a, name) in hh.names.iter().enumerate() {
            let got = col(t, &format!("hh_nearest_{name}"));
            for i in 0..n {
                let mine: Vec<usize> = (0..hh.len()).filter(|&h| owner[h] == i).collect();
                let want = if mine.is_empty() {
                    hh.values[a][argmin(&hh.locations, st[i])]
                } else {
                    mine.iter().map(|&h| hh.values[a][h]).sum::<f64>() / mine.len() as f64
                };
                assert!((got[i] - want).abs() <= 1e-9 * want.abs().max(1.0));
            }
        }

        let cs = &inputs.census;
        for (a, name) in cs.names.iter().enumerate() {
            let got = col(t, &format!("census_{name}"));
            for i in 0..n {
                let hits = scan(&cs.locations, st[i], cfg.buffer_radius_m);
                let sum: f64 = hits.iter().map(|&k| cs.values[a][k]).sum();
                let want = match cfg.census_aggregation {
                    CensusAggregation::Sum => sum,
                    CensusAggregation::Mean if hits.is_empty() => cs.values[a][argmin(&cs.locations, st[i])],
                    CensusAggregation::Mean => sum / hits.len() as f64,
                };
                assert!(
                    (got[i] - want).abs() <= 1e-9 * want.abs().max(1.0),
                    "census {name} at {i}"
                );
            }
        }

        let comp = col(t, "competing_stations");
        let cars = col(t, "competing_cars");
        for i in 0..n {
            let rivals: Vec<usize> = scan(&st, st[i], cfg.competitor_radius_m)
                .into_iter()
                .filter(|&j| j != i)
                .collect();
            assert_eq!(comp[i], rivals.len() as f64);
            assert_eq!(
                cars[i],
                rivals.iter().map(|&j| inputs.stations[j].vehicles).sum::<f64>()
            );
        }

        for i in 0..n {
            let mut r = cfg.competitor_radius_m;
            let mut k = 0;
            while scan(&hh.locations, st[i], r).len() < cfg.census_min_households {
                k += 1;
                r = cfg.competitor_radius_m + k as f64 * cfg.census_radius_step_m;
            }
            assert_eq!(out.household_radius_m[i], r);
            let hits = scan(&hh.locations, st[i], r);
            for (a, name) in hh.names.iter().enumerate() {
                let want = hits.iter().map(|&h| hh.values[a][h]).sum::<f64>() / hits.len() as f64;
                let got = col(t, &format!("hh_radius_{name}"))[i];
                assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
            }
        }
        let supply = col(t, SUPPLY_COLUMN);
        for i in 0..n {
            assert_eq!(supply[i], inputs.stations[i].vehicles);
        }
    }

    #[test]
    fn random_layouts_match_scan_oracle() {
        for seed in 0..20 {
            let (inputs, cfg) = random_layout(seed);
            let out = fuse_features(inputs.clone(), &cfg).unwrap();
            check_against_oracle(&inputs, &cfg, &out);
        }
    }

    #[test]
    fn candidate_at_station_reproduces_its_row() {
        for seed in 0..5 {
            let (inputs, cfg) = random_layout(seed);
            let ctx = FusionContext::new(inputs.clone(), cfg).unwrap();
            let out = ctx.fuse().unwrap();
            for (i, s) in inputs.stations.iter().enumerate() {
                let row = ctx.candidate_row(s.location, s.vehicles).unwrap();
                assert!(!row.extrapolated);
                for (j, (&a, &b)) in row.values.iter().zip(out.table.x.row(i).iter()).enumerate() {
                    assert!(
                        (a - b).abs() <= 1e-9 * b.abs().max(1.0),
                        "station {i} col {j}: {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn candidate_outside_boundary_is_flagged() {
        let (inputs, cfg) = random_layout(1);
        let ctx = FusionContext::new(inputs, cfg).unwrap();
        let row = ctx.candidate_row(at(-5_000.0, -5_000.0), 3.0).unwrap();
        assert!(row.extrapolated);
        assert!(row.voronoi_area_km2 > 0.0);
        assert_eq!(row.values[row.supply_index], 3.0);
    }

    fn square_layout() -> FusionInputs {
        let stations = vec![
            station(0, at(500.0, 500.0), 2.0),
            station(1, at(1500.0, 500.0), 3.0),
            station(2, at(500.0, 1500.0), 4.0),
            station(3, at(1500.0, 1500.0), 5.0),
        ];
        let hh: Vec<Point> = (0..12).map(|k| at(100.0 + 150.0 * k as f64, 20.0)).collect();
        FusionInputs {
            demand: vec![1.0; 4],
            stations,
            pois: Vec::new(),
            census: AttributedPoints::default(),
            households: attrs("size", hh, (0..12).map(|k| k as f64).collect()),
            boundary: Some(Polygon::rectangle(at(0.0, 0.0), at(2000.0, 2000.0))),
        }
    }

    #[test]
    fn poi_density_is_count_over_area() {
        // Six public POIs in a 2 km² cell.
        let stations = vec![
            station(0, at(500.0, 1000.0), 1.0),
            station(1, at(1500.0, 1000.0), 1.0),
            station(2, at(500.0, 3000.0), 1.0),
            station(3, at(1500.0, 3000.0), 1.0),
        ];
        let pois = (0..6)
            .map(|k| Poi {
                location: at(200.0 + 100.0 * k as f64, 300.0),
                category: "public".into(),
            })
            .collect();
        let inputs = FusionInputs {
            demand: vec![0.0; 4],
            stations,
            pois,
            boundary: Some(Polygon::rectangle(at(0.0, 0.0), at(2000.0, 4000.0))),
            ..FusionInputs::default()
        };
        let out = fuse_features(inputs, &FusionConfig::default()).unwrap();
        let d = col(&out.table, "poi_density_public");
        assert!((d[0] - 3.0).abs() < 1e-12);
        assert_eq!(d[1], 0.0);
        assert!((col(&out.table, "voronoi_area_km2")[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn household_radius_grows_in_steps() {
        // 4 households within 1 km, 11 within 1.5 km, none in between.
        let c = at(0.0, 0.0);
        let mut hh = Vec::new();
        for k in 0..4 {
            hh.push(at(900.0 * (k as f64 * 1.5).cos(), 900.0 * (k as f64 * 1.5).sin()));
        }
        for k in 0..7 {
            hh.push(at(1450.0 * (k as f64).cos(), 1450.0 * (k as f64).sin()));
        }
        let stations = vec![
            station(0, c, 1.0),
            station(1, at(5000.0, 0.0), 1.0),
            station(2, at(0.0, 5000.0), 1.0),
        ];
        let inputs = FusionInputs {
            demand: vec![0.0; 3],
            stations,
            households: attrs("size", hh, vec![1.0; 11]),
            boundary: Some(Polygon::rectangle(at(-6000.0, -6000.0), at(6000.0, 6000.0))),
            ..FusionInputs::default()
        };
        let out = fuse_features(inputs, &FusionConfig::default()).unwrap();
        assert_eq!(out.household_radius_m[0], 1500.0);
    }

    #[test]
    fn competitors_exclude_self_and_include_boundary() {
        let mut inputs = square_layout();
        inputs.stations[1].location = at(1500.0, 500.0);
        let out = fuse_features(inputs, &FusionConfig::default()).unwrap();
        // Stations 0 and 1 are exactly 1000 m apart.
        let comp = col(&out.table, "competing_stations");
        let cars = col(&out.table, "competing_cars");
        assert_eq!(comp[0], 2.0);
        assert_eq!(cars[0], 3.0 + 4.0);
        assert_eq!(comp[3], 2.0);
    }

    #[test]
    fn column_schema_is_fixed_order() {
        let out = fuse_features(square_layout(), &FusionConfig::default()).unwrap();
        let names = out.table.feature_names();
        assert_eq!(
            names,
            vec![
                "voronoi_area_km2",
                "hh_nearest_size",
                "competing_stations",
                "competing_cars",
                "hh_radius_size",
                "supply_cars"
            ]
        );
    }

    #[test]
    fn too_few_households_rejected() {
        let mut inputs = square_layout();
        inputs.households.locations.truncate(5);
        inputs.households.values[0].truncate(5);
        assert!(matches!(
            fuse_features(inputs, &FusionConfig::default()),
            Err(Error::TooFewHouseholds {
                found: 5,
                required: 10
            })
        ));
    }

    #[test]
    fn lon_lat_rejected() {
        let mut inputs = square_layout();
        for (k, s) in inputs.stations.iter_mut().enumerate() {
            s.location = Point::new(8.5 + 0.01 * k as f64, 47.3 + 0.013 * (k * k) as f64);
        }
        inputs.boundary = None;
        assert!(matches!(
            fuse_features(inputs, &FusionConfig::default()),
            Err(Error::UnprojectedCoordinates)
        ));
    }
}
