//! Synthetic station datasets with known coefficient surfaces.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::table::{Column, FeatureTable};
use super::SUPPLY_COLUMN;
use crate::error::{Error, Result};
use crate::spatial::Point;

/// Origin of generated coordinates, chosen inside the Swiss LV95 extent so
/// the lon/lat guard never fires.
pub const SYNTH_ORIGIN: Point = Point::new(2_600_000.0, 1_200_000.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// Uniform over a `width_m × height_m` rectangle.
    Uniform { width_m: f64, height_m: f64 },
    /// Isotropic normal clusters; stations are dealt round-robin.
    Clustered { centers: Vec<Point>, spread_m: f64 },
}

/// Coefficient as a function of the offset `(u, v)` from the origin, in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Surface {
    Constant {
        value: f64,
    },
    /// `c0 + gx·u/1000 + gy·v/1000` (gradients per km).
    Linear {
        c0: f64,
        gx: f64,
        gy: f64,
    },
    /// `west` for `u < split_u_m`, `east` otherwise.
    Step {
        west: f64,
        east: f64,
        split_u_m: f64,
    },
}

impl Surface {
    pub fn at(&self, u: f64, v: f64) -> f64 {
        match *self {
            Surface::Constant { value } => value,
            Surface::Linear { c0, gx, gy } => c0 + gx * u / 1000.0 + gy * v / 1000.0,
            Surface::Step {
                west,
                east,
                split_u_m,
            } => {
                if u < split_u_m {
                    west
                } else {
                    east
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureDist {
    Normal {
        mean: f64,
        std: f64,
    },
    /// Integers uniform on `lo..=hi`.
    Integer {
        lo: i64,
        hi: i64,
    },
}

/// How a feature enters the response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Effect {
    /// `β(u, v) · x`.
    Linear { surface: Surface },
    /// `slope · min(x, knee)`: linear up to the knee, flat beyond it.
    Capped { slope: f64, knee: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub dist: FeatureDist,
    pub effect: Effect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub layout: Layout,
    pub intercept: Surface,
    pub features: Vec<FeatureSpec>,
    /// Noise standard deviation.
    pub sigma: f64,
}

/// Generating truth: the local coefficient of every feature at every station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    /// n × (p+1), intercept first. Capped effects report their slope.
    pub coefficients: DMatrix<f64>,
    /// Noise-free response.
    pub signal: DVector<f64>,
    pub sigma: f64,
}

pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<(FeatureTable, SynthTruth)> {
    let n = spec.n;
    let p = spec.features.len();
    if n < p + 2 {
        return Err(Error::InvalidArgument(format!(
            "synthetic n={n} must be at least p+2={}",
            p + 2
        )));
    }
    if !(spec.sigma >= 0.0) || !spec.sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be >= 0, got {}",
            spec.sigma
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<(f64, f64)> = match &spec.layout {
        Layout::Uniform { width_m, height_m } => (0..n)
            .map(|_| (rng.random_range(0.0..*width_m), rng.random_range(0.0..*height_m)))
            .collect(),
        Layout::Clustered { centers, spread_m } => {
            if centers.is_empty() {
                return Err(Error::InvalidArgument("clustered layout needs a center".into()));
            }
            let jitter = Normal::new(0.0, *spread_m).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            (0..n)
                .map(|i| {
                    let c = centers[i % centers.len()];
                    (c.x + jitter.sample(&mut rng), c.y + jitter.sample(&mut rng))
                })
                .collect()
        }
    };

    let mut x = DMatrix::zeros(n, p);
    for (j, f) in spec.features.iter().enumerate() {
        match f.dist {
            FeatureDist::Normal { mean, std } => {
                let d = Normal::new(mean, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                for i in 0..n {
                    x[(i, j)] = d.sample(&mut rng);
                }
            }
            FeatureDist::Integer { lo, hi } => {
                for i in 0..n {
                    x[(i, j)] = rng.random_range(lo..=hi) as f64;
                }
            }
        }
    }

    let mut coefficients = DMatrix::zeros(n, p + 1);
    let mut signal = DVector::zeros(n);
    for (i, &(u, v)) in offsets.iter().enumerate() {
        let b0 = spec.intercept.at(u, v);
        coefficients[(i, 0)] = b0;
        let mut s = b0;
        for (j, f) in spec.features.iter().enumerate() {
            match &f.effect {
                Effect::Linear { surface } => {
                    let b = surface.at(u, v);
                    coefficients[(i, j + 1)] = b;
                    s += b * x[(i, j)];
                }
                Effect::Capped { slope, knee } => {
                    coefficients[(i, j + 1)] = *slope;
                    s += slope * x[(i, j)].min(*knee);
                }
            }
        }
        signal[i] = s;
    }
    let y = if spec.sigma > 0.0 {
        let noise = Normal::new(0.0, spec.sigma).expect("sigma checked");
        DVector::from_iterator(n, signal.iter().map(|s| s + noise.sample(&mut rng)))
    } else {
        signal.clone()
    };

    let table = FeatureTable::new(
        (0..n).map(|i| format!("s{i:04}")).collect(),
        offsets
            .iter()
            .map(|&(u, v)| Point::new(SYNTH_ORIGIN.x + u, SYNTH_ORIGIN.y + v))
            .collect(),
        spec.features
            .iter()
            .map(|f| Column::new(f.name.clone(), "", "synthetic"))
            .collect(),
        x,
        y,
        Column::new("demand_trips_per_month", "trips/month", "synthetic"),
    )?;
    Ok((
        table,
        SynthTruth {
            coefficients,
            signal,
            sigma: spec.sigma,
        },
    ))
}

/// Named generator configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Two clusters 100 km apart; slope 2 in the west, −1 in the east.
    TwoCluster,
    /// One step-surface feature among three constant ones.
    Multiscale,
    /// Demand grows with supply up to a knee, then flattens.
    SaturatingSupply,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::TwoCluster, Preset::Multiscale, Preset::SaturatingSupply];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::TwoCluster => "two-cluster",
            Preset::Multiscale => "multiscale",
            Preset::SaturatingSupply => "saturating-supply",
        }
    }

    pub fn default_n(self) -> usize {
        match self {
            Preset::TwoCluster => 800,
            Preset::Multiscale => 600,
            Preset::SaturatingSupply => 600,
        }
    }

    pub fn spec(self, n: usize) -> SynthSpec {
        match self {
            Preset::TwoCluster => SynthSpec {
                n,
                layout: Layout::Clustered {
                    centers: vec![Point::new(0.0, 0.0), Point::new(100_000.0, 0.0)],
                    spread_m: 10_000.0,
                },
                intercept: Surface::Constant { value: 0.0 },
                features: vec![FeatureSpec {
                    name: "x1".into(),
                    dist: FeatureDist::Normal { mean: 1.0, std: 1.0 },
                    effect: Effect::Linear {
                        surface: Surface::Step {
                            west: 2.0,
                            east: -1.0,
                            split_u_m: 50_000.0,
                        },
                    },
                }],
                sigma: 0.1,
            },
            Preset::Multiscale => {
                let constant = |name: &str, value: f64| FeatureSpec {
                    name: name.into(),
                    dist: FeatureDist::Normal { mean: 0.0, std: 1.0 },
                    effect: Effect::Linear {
                        surface: Surface::Constant { value },
                    },
                };
                SynthSpec {
                    n,
                    layout: Layout::Uniform {
                        width_m: 50_000.0,
                        height_m: 50_000.0,
                    },
                    intercept: Surface::Constant { value: 0.0 },
                    features: vec![
                        FeatureSpec {
                            name: "x_step".into(),
                            dist: FeatureDist::Normal { mean: 0.0, std: 1.0 },
                            effect: Effect::Linear {
                                surface: Surface::Step {
                                    west: 1.0,
                                    east: -1.0,
                                    split_u_m: 25_000.0,
                                },
                            },
                        },
                        constant("x_const1", 1.0),
                        constant("x_const2", 0.5),
                        constant("x_const3", -0.5),
                    ],
                    sigma: 0.5,
                }
            }
            Preset::SaturatingSupply => SynthSpec {
                n,
                layout: Layout::Uniform {
                    width_m: 30_000.0,
                    height_m: 30_000.0,
                },
                intercept: Surface::Constant { value: 10.0 },
                features: vec![
                    FeatureSpec {
                        name: SUPPLY_COLUMN.into(),
                        dist: FeatureDist::Integer { lo: 1, hi: 15 },
                        effect: Effect::Capped {
                            slope: 8.0,
                            knee: 6.0,
                        },
                    },
                    FeatureSpec {
                        name: "poi_density".into(),
                        dist: FeatureDist::Normal { mean: 5.0, std: 2.0 },
                        effect: Effect::Linear {
                            surface: Surface::Constant { value: 3.0 },
                        },
                    },
                ],
                sigma: 1.0,
            },
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preset `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_table() {
        let spec = Preset::TwoCluster.spec(200);
        let (a, _) = synth_generate(&spec, 7).unwrap();
        let (b, _) = synth_generate(&spec, 7).unwrap();
        assert_eq!(a, b);
        let (c, _) = synth_generate(&spec, 8).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn noiseless_is_exactly_linear() {
        let mut spec = Preset::Multiscale.spec(50);
        spec.features[0].effect = Effect::Linear {
            surface: Surface::Constant { value: 2.0 },
        };
        spec.sigma = 0.0;
        let (t, truth) = synth_generate(&spec, 1).unwrap();
        for i in 0..t.n() {
            let want = 2.0 * t.x[(i, 0)] + t.x[(i, 1)] + 0.5 * t.x[(i, 2)] - 0.5 * t.x[(i, 3)];
            assert!((t.y[i] - want).abs() < 1e-12);
            assert_eq!(truth.signal[i], t.y[i]);
        }
    }

    #[test]
    fn too_small_n_rejected() {
        let spec = Preset::Multiscale.spec(5);
        assert!(synth_generate(&spec, 0).is_err());
    }

    #[test]
    fn capped_effect_saturates() {
        let (t, truth) = synth_generate(&Preset::SaturatingSupply.spec(300), 3).unwrap();
        for i in 0..t.n() {
            let s = t.x[(i, 0)];
            assert!((1.0..=15.0).contains(&s) && s.fract() == 0.0);
            let want = 10.0 + 8.0 * s.min(6.0) + 3.0 * t.x[(i, 1)];
            assert!((truth.signal[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn surfaces() {
        let step = Surface::Step {
            west: 2.0,
            east: -1.0,
            split_u_m: 50_000.0,
        };
        assert_eq!(step.at(49_999.0, 0.0), 2.0);
        assert_eq!(step.at(50_000.0, 0.0), -1.0);
        let lin = Surface::Linear {
            c0: 1.0,
            gx: 0.5,
            gy: -1.0,
        };
        assert!((lin.at(2000.0, 1000.0) - 1.0).abs() < 1e-15);
        assert_eq!("two-cluster".parse::<Preset>().unwrap(), Preset::TwoCluster);
    }
}
