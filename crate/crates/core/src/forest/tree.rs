use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        n_samples: usize,
        /// Training weight reaching the node (bootstrap multiplicity included).
        cover: f64,
    },
    Leaf {
        value: f64,
        n_samples: usize,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match *self {
            Node::Split { cover, .. } => cover,
            Node::Leaf { n_samples, .. } => n_samples as f64,
        }
    }
}

/// Regression tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, n_samples: usize) -> Self {
        Self {
            nodes: vec![Node::Leaf { value, n_samples }],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// Cover-weighted mean of the leaf values.
    pub fn expected_value(&self) -> f64 {
        fn go(t: &Tree, i: usize) -> f64 {
            match t.nodes[i] {
                Node::Leaf { value, .. } => value,
                Node::Split {
                    left, right, cover, ..
                } => (t.nodes[left].cover() * go(t, left) + t.nodes[right].cover() * go(t, right)) / cover,
            }
        }
        go(self, 0)
    }

    pub fn uses_feature(&self, f: usize) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n, Node::Split { feature, .. } if *feature == f))
    }
}

pub(crate) struct GrowParams {
    pub mtry: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

/// Grows a tree on `rows` (indices into `x`/`y`, repeats allowed) by
/// variance reduction. Candidate thresholds are midpoints between
/// consecutive distinct values; ties prefer the lowest feature, then the
/// lowest threshold.
pub(crate) fn grow(
    x: &[Vec<f64>],
    y: &[f64],
    rows: Vec<usize>,
    params: &GrowParams,
    rng: &mut impl Rng,
) -> Tree {
    let mut tree = Tree { nodes: Vec::new() };
    build(&mut tree, x, y, rows, 0, params, rng);
    tree
}

fn build(
    tree: &mut Tree,
    x: &[Vec<f64>],
    y: &[f64],
    rows: Vec<usize>,
    depth: usize,
    params: &GrowParams,
    rng: &mut impl Rng,
) -> usize {
    let id = tree.nodes.len();
    let n = rows.len();
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n as f64;
    tree.nodes.push(Node::Leaf {
        value: mean,
        n_samples: n,
    });
    let pure = rows.iter().all(|&r| y[r] == y[rows[0]]);
    if pure || n < 2 * params.min_leaf || params.max_depth.is_some_and(|d| depth >= d) {
        return id;
    }
    let p = x.first().map_or(0, Vec::len);
    let mut features = sample(rng, p, params.mtry).into_vec();
    features.sort_unstable();
    let Some((feature, threshold)) = best_split(x, y, &rows, &features, params.min_leaf) else {
        return id;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][feature] <= threshold);
    let left = build(tree, x, y, l, depth + 1, params, rng);
    let right = build(tree, x, y, r, depth + 1, params, rng);
    tree.nodes[id] = Node::Split {
        feature,
        threshold,
        left,
        right,
        n_samples: n,
        cover: n as f64,
    };
    id
}

fn best_split(
    x: &[Vec<f64>],
    y: &[f64],
    rows: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<(usize, f64)> {
    let n = rows.len();
    let total: f64 = rows.iter().map(|&r| y[r]).sum();
    let total_sq: f64 = rows.iter().map(|&r| y[r] * y[r]).sum();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    for &f in features {
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (x[r][f], y[r])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut s, mut sq) = (0.0, 0.0);
        for k in 0..n - 1 {
            s += pairs[k].1;
            sq += pairs[k].1 * pairs[k].1;
            let nl = k + 1;
            if nl < min_leaf || n - nl < min_leaf || pairs[k].0 == pairs[k + 1].0 {
                continue;
            }
            let nr = (n - nl) as f64;
            let sse = (sq - s * s / nl as f64) + ((total_sq - sq) - (total - s).powi(2) / nr);
            let thr = 0.5 * (pairs[k].0 + pairs[k + 1].0);
            // Midpoint of adjacent floats can round up to the right value.
            let thr = if thr < pairs[k + 1].0 { thr } else { pairs[k].0 };
            let better = match best {
                None => true,
                Some((b, bf, bt)) => sse < b || (sse == b && (f < bf || (f == bf && thr < bt))),
            };
            if better {
                best = Some((sse, f, thr));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}
