//! Planar spatial primitives shared by every model.
//!
//! All coordinates are projected meters and all distances are Euclidean.
//! Nothing in this module reprojects; callers are expected to hand over
//! coordinates in a metric CRS.

mod aggregate;
mod index;
mod kernel;
mod voronoi;
mod weights;

pub use aggregate::{buffer_aggregate, nearest_join, Aggregation};
pub use index::{resolve_bandwidth, SpatialIndex};
pub use kernel::{kernel_weight, Bandwidth, Kernel};
pub(crate) use voronoi::cell_around;
pub use voronoi::{build_voronoi, convex_hull, default_boundary, Polygon, VoronoiPartition};
pub use weights::{knn_weights, SpatialWeights};

use serde::{Deserialize, Serialize};

/// A projected location in meters (easting, northing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Squared distance. Every inclusion and tie decision in the crate goes
    /// through this so that brute-force scans and indexed queries agree.
    #[inline]
    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Largest pairwise distance in a point set (via its convex hull).
pub fn diameter(points: &[Point]) -> f64 {
    let hull = convex_hull(points);
    let mut best = 0.0f64;
    for (i, a) in hull.iter().enumerate() {
        for b in &hull[i + 1..] {
            best = best.max(a.dist2(b));
        }
    }
    best.sqrt()
}
