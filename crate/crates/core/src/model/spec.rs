use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::linear::{BandwidthMode, Criterion, MgwrOptions};
use crate::spatial::{Bandwidth, Kernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ols,
    Gwr,
    Mgwr,
    Rf,
    RfCoords,
    Grf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Ols,
        ModelKind::Gwr,
        ModelKind::Mgwr,
        ModelKind::Rf,
        ModelKind::RfCoords,
        ModelKind::Grf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ols => "ols",
            ModelKind::Gwr => "gwr",
            ModelKind::Mgwr => "mgwr",
            ModelKind::Rf => "rf",
            ModelKind::RfCoords => "rf_coords",
            ModelKind::Grf => "grf",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Ols => "OLS",
            ModelKind::Gwr => "GWR",
            ModelKind::Mgwr => "MGWR",
            ModelKind::Rf => "RF",
            ModelKind::RfCoords => "RF (with coordinates)",
            ModelKind::Grf => "GRF",
        }
    }

    pub fn is_linear(self) -> bool {
        matches!(self, ModelKind::Ols | ModelKind::Gwr | ModelKind::Mgwr)
    }

    /// Whether the model can predict at locations it was not trained on.
    pub fn predicts_out_of_sample(self) -> bool {
        self != ModelKind::Mgwr
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ols" => Ok(ModelKind::Ols),
            "gwr" => Ok(ModelKind::Gwr),
            "mgwr" => Ok(ModelKind::Mgwr),
            "rf" => Ok(ModelKind::Rf),
            "rf_coords" | "rfcoords" => Ok(ModelKind::RfCoords),
            "grf" => Ok(ModelKind::Grf),
            other => Err(Error::InvalidArgument(format!("unknown model kind `{other}`"))),
        }
    }
}

/// A bandwidth mode with either a given value or `auto` (golden-section search).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSpec {
    pub mode: BandwidthMode,
    pub value: Option<f64>,
}

impl BandwidthSpec {
    pub fn auto(mode: BandwidthMode) -> Self {
        Self { mode, value: None }
    }

    pub fn given(&self) -> Option<Bandwidth> {
        self.value.map(|v| match self.mode {
            BandwidthMode::Fixed => Bandwidth::Fixed(v),
            BandwidthMode::Adaptive => Bandwidth::Adaptive(v as usize),
        })
    }
}

impl fmt::Display for BandwidthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            BandwidthMode::Fixed => "fixed",
            BandwidthMode::Adaptive => "adaptive",
        };
        match self.value {
            None => write!(f, "{mode}:auto"),
            Some(v) => write!(f, "{mode}:{v}"),
        }
    }
}

/// `fixed:auto`, `adaptive:auto`, `fixed:<meters>` or `adaptive:<k>`.
impl FromStr for BandwidthSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (mode, value) = s.split_once(':').unwrap_or((s, "auto"));
        let mode: BandwidthMode = mode.parse()?;
        let value = match value {
            "auto" => None,
            v => {
                let x: f64 = v
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad bandwidth value `{v}`")))?;
                if !(x > 0.0) || !x.is_finite() {
                    return Err(Error::InvalidBandwidth(x));
                }
                if mode == BandwidthMode::Adaptive && x.fract() != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "adaptive bandwidth must be an integer, got {v}"
                    )));
                }
                Some(x)
            }
        };
        Ok(Self { mode, value })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub kernel: Kernel,
    pub bandwidth: BandwidthSpec,
    pub criterion: Criterion,
    /// Z-score features and target before fitting a linear model. MGWR
    /// always standardizes.
    pub standardize: bool,
    pub forest: ForestParams,
    /// GRF neighbourhood size; `⌈n/4⌉` when absent.
    pub grf_k: Option<usize>,
    pub mgwr: MgwrOptions,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            kernel: Kernel::Bisquare,
            bandwidth: BandwidthSpec::auto(BandwidthMode::Adaptive),
            criterion: Criterion::Aicc,
            standardize: true,
            forest: ForestParams::default(),
            grf_k: None,
            mgwr: MgwrOptions::default(),
            seed: 0,
        }
    }

    pub fn gwr(kernel: Kernel, bandwidth: BandwidthSpec, criterion: Criterion) -> Self {
        Self {
            kernel,
            bandwidth,
            criterion,
            ..Self::new(ModelKind::Gwr)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_bandwidth_specs() {
        let b: BandwidthSpec = "fixed:auto".parse().unwrap();
        assert_eq!(b, BandwidthSpec::auto(BandwidthMode::Fixed));
        let b: BandwidthSpec = "adaptive:120".parse().unwrap();
        assert_eq!(b.given(), Some(Bandwidth::Adaptive(120)));
        assert_eq!(b.to_string(), "adaptive:120");
        assert!("adaptive:1.5".parse::<BandwidthSpec>().is_err());
        assert!("fixed:-3".parse::<BandwidthSpec>().is_err());
        assert!("sideways:auto".parse::<BandwidthSpec>().is_err());
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
    }
}
