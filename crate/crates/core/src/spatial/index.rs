use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Bandwidth, Point};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: u8,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static 2-d tree over a point set. Ids are positions in the input slice.
///
/// Queries order results by `(squared distance, id)`, so equal distances
/// always resolve to the lowest id.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    id: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then_with(|| self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl SpatialIndex {
    pub fn new(points: &[Point]) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("point {i}")));
        }
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build(0, points.len());
        }
        Ok(index)
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let slot = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return slot;
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for &i in &self.order[start..end] {
            let p = self.points[i];
            lo[0] = lo[0].min(p.x);
            hi[0] = hi[0].max(p.x);
            lo[1] = lo[1].min(p.y);
            hi[1] = hi[1].max(p.y);
        }
        let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0u8 } else { 1u8 };
        let mid = start + (end - start) / 2;
        let points = &self.points;
        let coord = |i: usize| if axis == 0 { points[i].x } else { points[i].y };
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| coord(a).total_cmp(&coord(b)));
        let value = coord(self.order[mid]);
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[slot] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        slot
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, id: usize) -> Point {
        self.points[id]
    }

    /// The `min(k, n)` nearest ids with their distances, ordered by
    /// non-decreasing distance and then by id.
    pub fn knn(&self, q: Point, k: usize) -> Vec<(usize, f64)> {
        self.knn_filtered(q, k, |_| true)
    }

    /// As [`knn`](Self::knn) but skipping ids rejected by `keep`.
    pub fn knn_filtered(&self, q: Point, k: usize, keep: impl Fn(usize) -> bool) -> Vec<(usize, f64)> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_node(0, q, k, &keep, &mut heap);
        let mut out = heap.into_sorted_vec();
        out.truncate(k);
        out.into_iter().map(|c| (c.id, c.d2.sqrt())).collect()
    }

    fn knn_node(
        &self,
        node: usize,
        q: Point,
        k: usize,
        keep: &impl Fn(usize) -> bool,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &id in &self.order[start..end] {
                    if !keep(id) {
                        continue;
                    }
                    let c = Candidate {
                        d2: q.dist2(&self.points[id]),
                        id,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = if axis == 0 { q.x - value } else { q.y - value };
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.knn_node(near, q, k, keep, heap);
                // Equal-distance candidates on the far side may carry lower ids.
                let must_visit = heap.len() < k || diff * diff <= heap.peek().map_or(f64::INFINITY, |c| c.d2);
                if must_visit {
                    self.knn_node(far, q, k, keep, heap);
                }
            }
        }
    }

    /// Nearest id (ties to the lowest id) and its distance.
    pub fn nearest(&self, q: Point) -> Option<(usize, f64)> {
        self.knn(q, 1).into_iter().next()
    }

    /// Ids within `radius` of `q` (closed ball), sorted ascending.
    pub fn within(&self, q: Point, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() || !(radius >= 0.0) {
            return out;
        }
        let r2 = radius * radius;
        self.within_node(0, q, radius, r2, &mut out);
        out.sort_unstable();
        out
    }

    fn within_node(&self, node: usize, q: Point, r: f64, r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                out.extend(
                    self.order[start..end]
                        .iter()
                        .copied()
                        .filter(|&id| q.dist2(&self.points[id]) <= r2),
                );
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = if axis == 0 { q.x - value } else { q.y - value };
                if diff <= r {
                    self.within_node(left, q, r, r2, out);
                }
                if diff >= -r {
                    self.within_node(right, q, r, r2, out);
                }
            }
        }
    }
}

/// Resolves a bandwidth specification to a distance at `at`.
///
/// Adaptive bandwidths are the distance to the k-th nearest indexed point.
/// When `at` coincides with an indexed point, that point (the lowest such
/// id) is not counted among the neighbours.
pub fn resolve_bandwidth(index: &SpatialIndex, at: Point, spec: Bandwidth) -> Result<f64> {
    match spec {
        Bandwidth::Fixed(d) => {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidBandwidth(d));
            }
            Ok(d)
        }
        Bandwidth::Adaptive(k) => {
            if index.is_empty() {
                return Err(Error::Empty("spatial index"));
            }
            if k == 0 {
                return Err(Error::InvalidArgument("adaptive bandwidth needs k >= 1".into()));
            }
            let near = index.knn(at, k + 1);
            let skip = usize::from(near.first().is_some_and(|&(_, d)| d == 0.0));
            let available = near.len() - skip;
            if available < k {
                return Err(Error::NotEnoughPoints {
                    needed: k,
                    available: index.len() - skip,
                });
            }
            Ok(near[skip + k - 1].1)
        }
    }
}
