use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::spec::{ModelKind, ModelSpec};
use crate::dataset::{Column, FeatureTable, Standardization};
use crate::diagnostics::aicc_from_rss;
use crate::error::{Error, Result};
use crate::forest::{default_grf_k, grf_fit, rf_fit, ForestModel, GrfModel};
use crate::linear::{
    gwr_fit, gwr_predict, loocv_r2, mgwr_fit, ols_fit, select_bandwidth, BandwidthSelection, GwrFit, MgwrFit,
    MgwrOptions, OlsFit,
};
use crate::spatial::Point;

pub const BUNDLE_FORMAT: &str = "carshare-bundle v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "fit", rename_all = "snake_case")]
pub enum FittedModel {
    Ols(OlsFit),
    Gwr(GwrFit),
    Mgwr(MgwrFit),
    Rf(ForestModel),
    RfCoords(ForestModel),
    Grf(GrfModel),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Ols(_) => ModelKind::Ols,
            FittedModel::Gwr(_) => ModelKind::Gwr,
            FittedModel::Mgwr(_) => ModelKind::Mgwr,
            FittedModel::Rf(_) => ModelKind::Rf,
            FittedModel::RfCoords(_) => ModelKind::RfCoords,
            FittedModel::Grf(_) => ModelKind::Grf,
        }
    }
}

/// A fitted model with everything needed to predict from raw inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub kind: ModelKind,
    pub toolkit_version: String,
    /// RFC 3339 UTC.
    pub fitted_at: String,
    pub seed: u64,
    pub spec: ModelSpec,
    /// Input features in model order, coordinates excluded.
    pub features: Vec<Column>,
    pub target: Column,
    /// Present when the model was fit on z-scored data.
    pub standardization: Option<Standardization>,
    pub fusion_fingerprint: Option<String>,
    pub tuning: Option<BandwidthSelection>,
    pub model: FittedModel,
}

/// In-sample quantities on the original target scale.
#[derive(Debug, Clone, PartialEq)]
pub struct InSample {
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Effective number of parameters, linear models only.
    pub tr_s: Option<f64>,
    /// As computed on the fitting scale.
    pub aicc: Option<f64>,
    pub loocv_r2: Option<f64>,
}

/// Fits `spec` on a table; the table is brought back to raw units first.
pub fn fit_model(
    table: &FeatureTable,
    spec: &ModelSpec,
    fusion_fingerprint: Option<String>,
) -> Result<ModelBundle> {
    let raw = table.destandardize();
    let standardize = spec.kind == ModelKind::Mgwr || (spec.kind.is_linear() && spec.standardize);
    let work = if standardize {
        raw.standardize()?
    } else {
        raw.clone()
    };
    let mut tuning = None;
    let model = match spec.kind {
        ModelKind::Ols => FittedModel::Ols(ols_fit(&work)?),
        ModelKind::Gwr => {
            let bw = match spec.bandwidth.given() {
                Some(b) => b,
                None => {
                    let sel = select_bandwidth(&work, spec.kernel, spec.bandwidth.mode, spec.criterion)?;
                    let b = sel.bandwidth;
                    tuning = Some(sel);
                    b
                }
            };
            FittedModel::Gwr(gwr_fit(&work, spec.kernel, bw)?)
        }
        ModelKind::Mgwr => {
            let opts = MgwrOptions {
                kernel: spec.kernel,
                criterion: spec.criterion,
                ..spec.mgwr.clone()
            };
            FittedModel::Mgwr(mgwr_fit(&work, &opts)?)
        }
        ModelKind::Rf => FittedModel::Rf(rf_fit(&work, &spec.forest, spec.seed)?),
        ModelKind::RfCoords => {
            FittedModel::RfCoords(rf_fit(&work.with_coordinates(), &spec.forest, spec.seed)?)
        }
        ModelKind::Grf => {
            let k = spec.grf_k.unwrap_or_else(|| default_grf_k(work.n()));
            FittedModel::Grf(grf_fit(&work, k, &spec.forest, spec.seed)?)
        }
    };
    Ok(ModelBundle {
        kind: spec.kind,
        toolkit_version: crate::VERSION.to_string(),
        fitted_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        seed: spec.seed,
        spec: spec.clone(),
        features: raw.columns.clone(),
        target: raw.target.clone(),
        standardization: work.standardization.clone(),
        fusion_fingerprint,
        tuning,
        model,
    })
}

impl ModelBundle {
    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|c| c.name.clone()).collect()
    }

    /// Predictions in target units from raw feature rows in
    /// [`features`](Self::features) order. `None` marks rows a local model
    /// could not be calibrated for.
    pub fn predict(&self, locations: &[Point], raw_x: &DMatrix<f64>) -> Result<Vec<Option<f64>>> {
        let p = self.features.len();
        if raw_x.ncols() != p {
            return Err(Error::Schema(format!(
                "model expects {p} features, got {}",
                raw_x.ncols()
            )));
        }
        if locations.len() != raw_x.nrows() {
            return Err(Error::Schema(format!(
                "{} locations for {} feature rows",
                locations.len(),
                raw_x.nrows()
            )));
        }
        if let Some(i) = raw_x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature value #{i}")));
        }
        let x = match &self.standardization {
            Some(s) => DMatrix::from_fn(raw_x.nrows(), p, |r, c| s.features[c].1.forward(raw_x[(r, c)])),
            None => raw_x.clone(),
        };
        let out: Vec<Option<f64>> = match &self.model {
            FittedModel::Ols(f) => f.predict(&x)?.iter().map(|&v| Some(v)).collect(),
            FittedModel::Gwr(f) => gwr_predict(f, locations, &x)?,
            FittedModel::Mgwr(_) => {
                return Err(Error::Unsupported(
                    "MGWR does not support out-of-sample prediction; use GWR or a forest".into(),
                ))
            }
            FittedModel::Rf(m) => m.predict(&x)?.into_iter().map(Some).collect(),
            FittedModel::RfCoords(m) => {
                let mut rows = Vec::with_capacity(x.nrows());
                for (r, loc) in locations.iter().enumerate() {
                    let row: Vec<f64> = x.row(r).iter().copied().collect();
                    rows.push(Some(m.predict_row(&m.row_at(*loc, &row)?)));
                }
                rows
            }
            FittedModel::Grf(g) => g.predict(locations, &x)?.into_iter().map(Some).collect(),
        };
        Ok(match &self.standardization {
            Some(s) => out.into_iter().map(|v| v.map(|z| s.target.inverse(z))).collect(),
            None => out,
        })
    }

    /// Fitted values, residuals and fit statistics on the training table.
    pub fn in_sample(&self, table: &FeatureTable) -> Result<InSample> {
        let raw = table.destandardize();
        if raw.feature_names() != self.feature_names() {
            return Err(Error::Schema("table columns do not match the model".into()));
        }
        let n = raw.n();
        let back = |v: &DVector<f64>| -> Vec<f64> {
            match &self.standardization {
                Some(s) => v.iter().map(|&z| s.target.inverse(z)).collect(),
                None => v.iter().copied().collect(),
            }
        };
        let z_y = match &self.standardization {
            Some(s) => raw.y.map(|v| s.target.forward(v)),
            None => raw.y.clone(),
        };
        let linear = |fitted: &DVector<f64>, hat: &DVector<f64>, tr_s: f64, aicc: f64| -> Result<InSample> {
            if fitted.len() != n {
                return Err(Error::Schema(format!(
                    "model was fit on {} rows, table has {n}",
                    fitted.len()
                )));
            }
            let f = back(fitted);
            Ok(InSample {
                residuals: raw.y.iter().zip(&f).map(|(a, b)| a - b).collect(),
                fitted: f,
                tr_s: Some(tr_s),
                aicc: Some(aicc),
                loocv_r2: loocv_r2(&z_y, fitted, hat).ok(),
            })
        };
        match &self.model {
            FittedModel::Ols(f) => linear(&f.fitted, &f.hat_diag, f.tr_s, aicc_from_rss(f.n, f.rss, f.tr_s)),
            FittedModel::Gwr(f) => linear(&f.fitted, &f.hat_diag, f.tr_s, f.aicc),
            FittedModel::Mgwr(f) => linear(&f.fitted, &f.hat_diag, f.tr_s, f.aicc),
            FittedModel::Rf(_) | FittedModel::RfCoords(_) | FittedModel::Grf(_) => {
                let fitted: Vec<f64> = self
                    .predict(&raw.locations, &raw.x)?
                    .into_iter()
                    .map(|v| v.expect("forests always predict"))
                    .collect();
                Ok(InSample {
                    residuals: raw.y.iter().zip(&fitted).map(|(a, b)| a - b).collect(),
                    fitted,
                    tr_s: None,
                    aicc: None,
                    loocv_r2: None,
                })
            }
        }
    }

    pub fn to_text(&self) -> Result<String> {
        Ok(format!("{BUNDLE_FORMAT}\n{}\n", serde_json::to_string(self)?))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (header, body) = text.split_once('\n').unwrap_or((text, ""));
        let header = header.trim_end_matches('\r');
        if header != BUNDLE_FORMAT {
            return Err(Error::BundleFormat {
                found: header.chars().take(64).collect(),
                expected: BUNDLE_FORMAT.to_string(),
            });
        }
        let bundle: ModelBundle = serde_json::from_str(body)?;
        if bundle.model.kind() != bundle.kind {
            return Err(Error::Schema(format!(
                "bundle declares `{}` but holds a `{}` model",
                bundle.kind,
                bundle.model.kind()
            )));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}
