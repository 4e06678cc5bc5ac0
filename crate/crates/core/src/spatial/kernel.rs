use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance-decay kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Gaussian,
    Exponential,
    Bisquare,
    Boxcar,
}

impl Kernel {
    pub const ALL: [Kernel; 4] = [
        Kernel::Gaussian,
        Kernel::Exponential,
        Kernel::Bisquare,
        Kernel::Boxcar,
    ];

    /// Kernel weight for distance `d` at bandwidth `b`, validated.
    pub fn weight(self, d: f64, b: f64) -> Result<f64> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::InvalidBandwidth(b));
        }
        if !(d >= 0.0) {
            return Err(Error::InvalidArgument(format!("distance must be >= 0, got {d}")));
        }
        Ok(self.eval(d, b))
    }

    /// Unchecked evaluation; `b > 0` and `d >= 0` are the caller's job.
    #[inline]
    pub(crate) fn eval(self, d: f64, b: f64) -> f64 {
        let z = d / b;
        match self {
            Kernel::Gaussian => (-0.5 * z * z).exp(),
            Kernel::Exponential => (-z).exp(),
            Kernel::Bisquare => {
                if z < 1.0 {
                    let t = 1.0 - z * z;
                    t * t
                } else {
                    0.0
                }
            }
            Kernel::Boxcar => {
                if z < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Compact kernels are exactly zero at and beyond the bandwidth.
    pub fn is_compact(self) -> bool {
        matches!(self, Kernel::Bisquare | Kernel::Boxcar)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Kernel::Gaussian => "gaussian",
            Kernel::Exponential => "exponential",
            Kernel::Bisquare => "bisquare",
            Kernel::Boxcar => "boxcar",
        }
    }

    /// Capitalized label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Kernel::Gaussian => "Gaussian",
            Kernel::Exponential => "Exponential",
            Kernel::Bisquare => "Bisquare",
            Kernel::Boxcar => "Boxcar",
        }
    }
}

/// Free-function form of [`Kernel::weight`].
pub fn kernel_weight(kernel: Kernel, d: f64, b: f64) -> Result<f64> {
    kernel.weight(d, b)
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Kernel::Gaussian),
            "exponential" => Ok(Kernel::Exponential),
            "bisquare" => Ok(Kernel::Bisquare),
            "boxcar" => Ok(Kernel::Boxcar),
            other => Err(Error::Parse(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Spatial reach of a local model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "value")]
pub enum Bandwidth {
    /// Fixed distance in meters.
    Fixed(f64),
    /// Distance to the k-th nearest neighbour.
    Adaptive(usize),
}

impl Bandwidth {
    /// Checks the bandwidth against a problem with `p` features and `n` points.
    pub fn validate(&self, p: usize, n: usize) -> Result<()> {
        match *self {
            Bandwidth::Fixed(d) if !(d > 0.0) || !d.is_finite() => Err(Error::InvalidBandwidth(d)),
            Bandwidth::Fixed(_) => Ok(()),
            Bandwidth::Adaptive(k) if k < p + 2 || k > n => Err(Error::InvalidArgument(format!(
                "adaptive bandwidth k={k} must lie in [{}, {n}]",
                p + 2
            ))),
            Bandwidth::Adaptive(_) => Ok(()),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Bandwidth::Fixed(_))
    }

    pub fn value(&self) -> f64 {
        match *self {
            Bandwidth::Fixed(d) => d,
            Bandwidth::Adaptive(k) => k as f64,
        }
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Fixed(d) => write!(f, "fixed:{d}"),
            Bandwidth::Adaptive(k) => write!(f, "adaptive:{k}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distance_is_one() {
        for k in Kernel::ALL {
            assert_eq!(k.weight(0.0, 1000.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn bisquare_vanishes_at_bandwidth() {
        assert_eq!(Kernel::Bisquare.weight(250.0, 250.0).unwrap(), 0.0);
        assert_eq!(Kernel::Boxcar.weight(250.0, 250.0).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_at_bandwidth() {
        let w = Kernel::Gaussian.weight(3.0, 3.0).unwrap();
        assert!((w - (-0.5f64).exp()).abs() < 1e-15);
        assert!((w - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_bandwidth() {
        assert!(matches!(
            Kernel::Gaussian.weight(1.0, 0.0),
            Err(Error::InvalidBandwidth(_))
        ));
        assert!(Kernel::Gaussian.weight(1.0, -3.0).is_err());
        assert!(Kernel::Gaussian.weight(1.0, f64::NAN).is_err());
    }

    #[test]
    fn adaptive_range_validation() {
        assert!(Bandwidth::Adaptive(6).validate(4, 10).is_ok());
        assert!(Bandwidth::Adaptive(5).validate(4, 10).is_err());
        assert!(Bandwidth::Adaptive(11).validate(4, 10).is_err());
        assert!(Bandwidth::Fixed(0.0).validate(4, 10).is_err());
    }

    #[test]
    fn parse_roundtrip() {
        for k in Kernel::ALL {
            assert_eq!(k.as_str().parse::<Kernel>().unwrap(), k);
        }
        assert!("triangle".parse::<Kernel>().is_err());
    }

    proptest::proptest! {
        #[test]
        fn monotone_in_distance(d1 in 0.0f64..1e5, d2 in 0.0f64..1e5, b in 1.0f64..1e4) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            for k in Kernel::ALL {
                proptest::prop_assert!(k.eval(lo, b) >= k.eval(hi, b));
            }
        }

        #[test]
        fn support(d in 0.0f64..1e4, b in 1.0f64..1e3) {
            for k in Kernel::ALL {
                let w = k.eval(d, b);
                proptest::prop_assert!((0.0..=1.0).contains(&w));
                if k.is_compact() && d >= b {
                    proptest::prop_assert_eq!(w, 0.0);
                }
                if !k.is_compact() && d < 30.0 * b {
                    proptest::prop_assert!(w > 0.0);
                }
            }
        }
    }
}
