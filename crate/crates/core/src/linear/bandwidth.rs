use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::design;
use super::gwr::criterion_score;
use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::spatial::{diameter, Bandwidth, Kernel, SpatialIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aicc,
    /// Leave-one-out squared error with each location's own weight zeroed.
    Cv,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Aicc => "aicc",
            Criterion::Cv => "cv",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Criterion::Aicc => "AICc",
            Criterion::Cv => "CV",
        }
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aicc" => Ok(Criterion::Aicc),
            "cv" | "loocv" => Ok(Criterion::Cv),
            other => Err(Error::InvalidArgument(format!("unknown criterion `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthMode {
    Fixed,
    Adaptive,
}

impl BandwidthMode {
    pub fn label(self) -> &'static str {
        match self {
            BandwidthMode::Fixed => "Fixed",
            BandwidthMode::Adaptive => "Adaptive",
        }
    }
}

impl FromStr for BandwidthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" => Ok(BandwidthMode::Fixed),
            "adaptive" => Ok(BandwidthMode::Adaptive),
            other => Err(Error::InvalidArgument(format!(
                "unknown bandwidth mode `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub bandwidth: f64,
    #[serde(with = "crate::float_serde::scalar")]
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub bandwidth: Bandwidth,
    pub criterion: Criterion,
    pub score: f64,
    pub lower: f64,
    pub upper: f64,
    /// Every distinct evaluation in the order it was made.
    pub trace: Vec<SearchStep>,
}

/// Golden-section minimization of `f` on `[lo, hi]`. With `integer`, probes
/// are rounded and the search stops once the bracket is at most one unit
/// wide; otherwise it stops when the bracket is narrower than `tol`.
/// Returns the best evaluated point and the evaluation trace.
pub fn golden_section(
    lo: f64,
    hi: f64,
    integer: bool,
    tol: f64,
    mut f: impl FnMut(f64) -> f64,
) -> (f64, f64, Vec<SearchStep>) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let snap = |v: f64| if integer { v.round() } else { v };
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut trace = Vec::new();
    let mut eval = |v: f64, trace: &mut Vec<SearchStep>| -> f64 {
        *cache.entry(v.to_bits()).or_insert_with(|| {
            let s = f(v);
            let s = if s.is_finite() { s } else { f64::INFINITY };
            trace.push(SearchStep {
                bandwidth: v,
                score: s,
            });
            s
        })
    };
    let (mut a, mut c) = (lo, hi);
    let mut b = snap(a + (1.0 - ratio) * (c - a));
    let mut d = snap(a + ratio * (c - a));
    let mut fb = eval(b, &mut trace);
    let mut fd = eval(d, &mut trace);
    let done = |a: f64, c: f64| if integer { c - a <= 1.0 } else { c - a < tol };
    while !done(a, c) {
        if fb <= fd {
            c = d;
            d = b;
            fd = fb;
            b = snap(a + (1.0 - ratio) * (c - a));
            if integer && b >= d {
                b = d - 1.0;
            }
            fb = eval(b, &mut trace);
        } else {
            a = b;
            b = d;
            fb = fd;
            d = snap(a + ratio * (c - a));
            if integer && d <= b {
                d = b + 1.0;
            }
            fd = eval(d, &mut trace);
        }
        if integer && c - a <= 3.0 {
            // Finish the last few integers exhaustively.
            let mut v = a.ceil();
            while v <= c {
                eval(v, &mut trace);
                v += 1.0;
            }
            break;
        }
    }
    let best = trace
        .iter()
        .copied()
        .min_by(|x, y| {
            x.score
                .total_cmp(&y.score)
                .then(x.bandwidth.total_cmp(&y.bandwidth))
        })
        .expect("at least two evaluations");
    (best.bandwidth, best.score, trace)
}

/// Search bracket for a model with `q` columns (intercept included).
pub(crate) fn bracket(table: &FeatureTable, q: usize, mode: BandwidthMode) -> Result<(f64, f64)> {
    let n = table.n();
    match mode {
        BandwidthMode::Adaptive => Ok(((q + 1) as f64, (n - 1) as f64)),
        BandwidthMode::Fixed => {
            let index = SpatialIndex::new(&table.locations)?;
            let k = q + 1;
            let lo = (0..n)
                .map(|i| {
                    index
                        .knn_filtered(table.locations[i], k, |j| j != i)
                        .last()
                        .map_or(0.0, |&(_, d)| d)
                })
                .fold(0.0f64, f64::max);
            Ok((lo, diameter(&table.locations)))
        }
    }
}

/// Golden-section bandwidth selection for GWR.
pub fn select_bandwidth(
    table: &FeatureTable,
    kernel: Kernel,
    mode: BandwidthMode,
    criterion: Criterion,
) -> Result<BandwidthSelection> {
    let n = table.n();
    let q = table.p() + 1;
    if n < q + 2 {
        return Err(Error::NotEnoughPoints {
            needed: q + 2,
            available: n,
        });
    }
    let (lo, hi) = bracket(table, q, mode)?;
    if !(hi > lo) {
        return Err(Error::Geometry(format!("empty bandwidth bracket [{lo}, {hi}]")));
    }
    let z = design(&table.x);
    let to_bw = |v: f64| match mode {
        BandwidthMode::Fixed => Bandwidth::Fixed(v),
        BandwidthMode::Adaptive => Bandwidth::Adaptive(v as usize),
    };
    let (best, score, trace) =
        golden_section(lo, hi, mode == BandwidthMode::Adaptive, 1e-3 * (hi - lo), |v| {
            criterion_score(&table.locations, &z, &table.y, kernel, to_bw(v), criterion)
        });
    if !score.is_finite() {
        return Err(Error::CriterionNonFinite);
    }
    Ok(BandwidthSelection {
        bandwidth: to_bw(best),
        criterion,
        score,
        lower: lo,
        upper: hi,
        trace,
    })
}
