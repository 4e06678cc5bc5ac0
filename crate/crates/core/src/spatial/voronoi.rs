use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Point, SpatialIndex};
use crate::error::{Error, Result};

const HULL_BUFFER_SEGMENTS: usize = 32;

/// Simple polygon with counter-clockwise vertices (no closing repeat).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Self {
        let mut poly = Self { vertices };
        if poly.signed_area() < 0.0 {
            poly.vertices.reverse();
        }
        poly
    }

    pub fn rectangle(min: Point, max: Point) -> Self {
        Self::new(vec![min, Point::new(max.x, min.y), max, Point::new(min.x, max.y)])
    }

    fn signed_area(&self) -> f64 {
        let v = &self.vertices;
        if v.len() < 3 {
            return 0.0;
        }
        // Shoelace relative to the first vertex to limit cancellation.
        let o = v[0];
        let mut acc = 0.0;
        for i in 1..v.len() - 1 {
            let a = Point::new(v[i].x - o.x, v[i].y - o.y);
            let b = Point::new(v[i + 1].x - o.x, v[i + 1].y - o.y);
            acc += a.x * b.y - a.y * b.x;
        }
        0.5 * acc
    }

    /// Area in square meters.
    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Whether every turn is left (or straight).
    pub fn is_convex(&self) -> bool {
        let v = &self.vertices;
        let n = v.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| cross(v[i], v[(i + 1) % n], v[(i + 2) % n]) >= 0.0)
    }

    /// Closed point-in-convex-polygon test.
    pub fn contains(&self, p: Point) -> bool {
        let v = &self.vertices;
        let n = v.len();
        n >= 3 && (0..n).all(|i| cross(v[i], v[(i + 1) % n], p) >= 0.0)
    }

    /// Keeps the part of the polygon where `a·p <= c`.
    fn clip(&self, a: Point, c: f64) -> Polygon {
        let v = &self.vertices;
        let mut out = Vec::with_capacity(v.len() + 1);
        let side = |p: &Point| a.x * p.x + a.y * p.y - c;
        for i in 0..v.len() {
            let cur = v[i];
            let next = v[(i + 1) % v.len()];
            let (sc, sn) = (side(&cur), side(&next));
            if sc <= 0.0 {
                out.push(cur);
            }
            if (sc < 0.0 && sn > 0.0) || (sc > 0.0 && sn < 0.0) {
                let t = sc / (sc - sn);
                out.push(Point::new(
                    cur.x + t * (next.x - cur.x),
                    cur.y + t * (next.y - cur.y),
                ));
            }
        }
        Polygon { vertices: out }
    }

    fn translated(&self, dx: f64, dy: f64) -> Polygon {
        Polygon {
            vertices: self
                .vertices
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
        }
    }
}

#[inline]
fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Stations' convex hull grown outward by the 95th-percentile
/// nearest-neighbour distance (polygonal approximation of the buffer).
pub fn default_boundary(stations: &[Point]) -> Result<Polygon> {
    check_stations(stations)?;
    let index = SpatialIndex::new(stations)?;
    let mut nn: Vec<f64> = stations
        .iter()
        .enumerate()
        .map(|(i, &p)| index.knn_filtered(p, 1, |j| j != i)[0].1)
        .collect();
    nn.sort_by(f64::total_cmp);
    let rank = ((0.95 * nn.len() as f64).ceil() as usize).clamp(1, nn.len()) - 1;
    let radius = nn[rank];
    let hull = convex_hull(stations);
    let mut grown = Vec::with_capacity(hull.len() * HULL_BUFFER_SEGMENTS);
    for v in &hull {
        for s in 0..HULL_BUFFER_SEGMENTS {
            let theta = std::f64::consts::TAU * s as f64 / HULL_BUFFER_SEGMENTS as f64;
            grown.push(Point::new(v.x + radius * theta.cos(), v.y + radius * theta.sin()));
        }
    }
    Ok(Polygon::new(convex_hull(&grown)))
}

/// Voronoi cells of a station set clipped to a convex boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoronoiPartition {
    pub cells: Vec<Polygon>,
    /// Cell areas in km².
    pub areas_km2: Vec<f64>,
    pub boundary: Polygon,
    /// True when the boundary was derived from the stations rather than supplied.
    pub default_boundary: bool,
}

impl VoronoiPartition {
    pub fn total_area_km2(&self) -> f64 {
        self.areas_km2.iter().sum()
    }
}

fn check_stations(stations: &[Point]) -> Result<()> {
    if stations.len() < 3 {
        return Err(Error::Geometry(format!(
            "need at least 3 stations, got {}",
            stations.len()
        )));
    }
    if let Some(i) = stations.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite(format!("station {i}")));
    }
    let mut order: Vec<usize> = (0..stations.len()).collect();
    order.sort_by(|&a, &b| {
        stations[a]
            .x
            .total_cmp(&stations[b].x)
            .then(stations[a].y.total_cmp(&stations[b].y))
            .then(a.cmp(&b))
    });
    let dups: Vec<(String, String)> = order
        .windows(2)
        .filter(|w| stations[w[0]] == stations[w[1]])
        .map(|w| (w[0].to_string(), w[1].to_string()))
        .collect();
    if !dups.is_empty() {
        return Err(Error::DuplicateStations(dups));
    }
    if convex_hull(stations).len() < 3 {
        return Err(Error::Geometry("stations are collinear".into()));
    }
    Ok(())
}

/// Builds the clipped Voronoi partition. With `boundary = None` the
/// buffered convex hull from [`default_boundary`] is used.
pub fn build_voronoi(stations: &[Point], boundary: Option<&Polygon>) -> Result<VoronoiPartition> {
    check_stations(stations)?;
    let (boundary, is_default) = match boundary {
        Some(b) => (Polygon::new(b.vertices.clone()), false),
        None => (default_boundary(stations)?, true),
    };
    if !boundary.is_convex() {
        return Err(Error::Geometry(
            "clipping boundary must be a convex polygon".into(),
        ));
    }
    if let Some(i) = stations.iter().position(|&p| !boundary.contains(p)) {
        return Err(Error::Geometry(format!("station {i} lies outside the boundary")));
    }
    let index = SpatialIndex::new(stations)?;
    let cells: Vec<Polygon> = (0..stations.len())
        .into_par_iter()
        .map(|i| voronoi_cell(&index, i, &boundary))
        .collect();
    let areas_km2 = cells.iter().map(|c| c.area() / 1e6).collect();
    Ok(VoronoiPartition {
        cells,
        areas_km2,
        boundary,
        default_boundary: is_default,
    })
}

/// Clips the boundary by bisectors of progressively farther neighbours until
/// no remaining neighbour can reach the cell.
fn voronoi_cell(index: &SpatialIndex, i: usize, boundary: &Polygon) -> Polygon {
    cell_around(index, index.point(i), boundary, |j| j != i)
}

/// Voronoi cell of an arbitrary site `s` against the indexed sites accepted
/// by `keep`, clipped to `boundary`.
pub(crate) fn cell_around(
    index: &SpatialIndex,
    s: Point,
    boundary: &Polygon,
    keep: impl Fn(usize) -> bool,
) -> Polygon {
    let n = index.len();
    // Local frame centred on the site keeps the bisector arithmetic small.
    let mut cell = boundary.translated(-s.x, -s.y);
    let mut k = 16.min(n);
    let mut done = 0usize;
    loop {
        let near = index.knn(s, k);
        for &(j, d) in &near[done..] {
            if !keep(j) {
                continue;
            }
            let reach = cell
                .vertices
                .iter()
                .map(|v| v.x * v.x + v.y * v.y)
                .fold(0.0f64, f64::max)
                .sqrt();
            if d > 2.0 * reach {
                return cell.translated(s.x, s.y);
            }
            let q = index.point(j);
            let a = Point::new(q.x - s.x, q.y - s.y);
            let c = 0.5 * (a.x * a.x + a.y * a.y);
            cell = cell.clip(a, c);
        }
        done = near.len();
        if k >= n {
            return cell.translated(s.x, s.y);
        }
        k = (2 * k).min(n);
    }
}
