use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::collinearity::{local_collinearity, CollinearityReport};
use super::lasso::{lambda_grid, lambda_max, lasso_fit, lasso_path};
use crate::dataset::FeatureTable;
use crate::diagnostics::fold_assignment;
use crate::error::{Error, Result};
use crate::spatial::{Bandwidth, Kernel};

pub const PATH_LENGTH: usize = 100;
pub const PATH_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectedBy {
    Lasso,
    Manual,
    NotSelected,
    RemovedCollinear,
}

impl SelectedBy {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectedBy::Lasso => "lasso",
            SelectedBy::Manual => "manual",
            SelectedBy::NotSelected => "not_selected",
            SelectedBy::RemovedCollinear => "removed_collinear",
        }
    }

    /// Human-readable label used in printed reports.
    pub fn label(self) -> &'static str {
        match self {
            SelectedBy::Lasso => "LASSO",
            SelectedBy::Manual => "Manually",
            SelectedBy::NotSelected => "Not selected",
            SelectedBy::RemovedCollinear => "LASSO (manually removed)",
        }
    }

    pub fn is_selected(self) -> bool {
        matches!(self, SelectedBy::Lasso | SelectedBy::Manual)
    }
}

impl fmt::Display for SelectedBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectedBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lasso" => Ok(SelectedBy::Lasso),
            "manual" => Ok(SelectedBy::Manual),
            "not_selected" => Ok(SelectedBy::NotSelected),
            "removed_collinear" => Ok(SelectedBy::RemovedCollinear),
            other => Err(Error::Parse(format!("unknown selection status `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStatus {
    pub feature: String,
    pub selected_by: SelectedBy,
    pub coefficient: f64,
    /// Largest local VIF seen while screening, if screened.
    pub max_local_vif: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub lambda: f64,
    pub lambda_max: f64,
    pub lambdas: Vec<f64>,
    /// Mean held-out MSE per penalty.
    pub cv_mse: Vec<f64>,
    pub features: Vec<FeatureStatus>,
}

impl Selection {
    /// Selected names in table column order.
    pub fn selected(&self) -> Vec<String> {
        self.features
            .iter()
            .filter(|f| f.selected_by.is_selected())
            .map(|f| f.feature.clone())
            .collect()
    }
}

/// LASSO selection with the penalty chosen by K-fold CV (minimum mean MSE),
/// then `include` added and `exclude` removed.
pub fn lasso_select(
    table: &FeatureTable,
    k_folds: usize,
    seed: u64,
    include: &[String],
    exclude: &[String],
) -> Result<Selection> {
    let names = table.feature_names();
    for m in include.iter().chain(exclude) {
        if !names.contains(m) {
            return Err(Error::UnknownFeature(m.clone()));
        }
    }
    let n = table.n();
    let lmax = lambda_max(&table.x, &table.y)?;
    let lambdas = if lmax > 0.0 {
        lambda_grid(lmax, PATH_LENGTH, PATH_RATIO)
    } else {
        vec![0.0]
    };
    let assignment = fold_assignment(n, k_folds, seed)?;
    let mut cv_mse = vec![0.0; lambdas.len()];
    for f in 0..k_folds {
        let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
        let tr = table.subset(&train);
        let path = lasso_path(&tr.x, &tr.y, &lambdas)?;
        for (l, fit) in path.iter().enumerate() {
            let sse: f64 = test
                .iter()
                .map(|&i| (table.y[i] - fit.predict_row(&table.row(i))).powi(2))
                .sum();
            cv_mse[l] += sse / test.len() as f64 / k_folds as f64;
        }
    }
    let best = (0..lambdas.len())
        .min_by(|&a, &b| cv_mse[a].total_cmp(&cv_mse[b]))
        .expect("non-empty path");
    let lambda = lambdas[best];
    let fit = lasso_fit(&table.x, &table.y, lambda)?;
    let features = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let by = if exclude.contains(name) {
                SelectedBy::NotSelected
            } else if fit.coefficients[j] != 0.0 {
                SelectedBy::Lasso
            } else if include.contains(name) {
                SelectedBy::Manual
            } else {
                SelectedBy::NotSelected
            };
            FeatureStatus {
                feature: name.clone(),
                selected_by: by,
                coefficient: fit.coefficients[j],
                max_local_vif: None,
            }
        })
        .collect();
    Ok(Selection {
        lambda,
        lambda_max: lmax,
        lambdas,
        cv_mse,
        features,
    })
}

/// Removes, one at a time, the flagged feature with the smallest absolute
/// LASSO coefficient until the local screen reports no flags. Manually
/// included features are never removed. Returns the final screen.
pub fn screen_collinearity(
    table: &FeatureTable,
    selection: &mut Selection,
    kernel: Kernel,
    bandwidth: Bandwidth,
) -> Result<Option<CollinearityReport>> {
    let mut last = None;
    loop {
        let kept = selection.selected();
        if kept.len() < 2 {
            return Ok(last);
        }
        let report = local_collinearity(&table.select(&kept)?, kernel, bandwidth)?;
        for (j, name) in report.names.iter().enumerate() {
            let v = report.max_vif(j);
            let st = selection
                .features
                .iter_mut()
                .find(|f| &f.feature == name)
                .expect("known feature");
            st.max_local_vif = Some(st.max_local_vif.map_or(v, |old: f64| old.max(v)));
        }
        let victim = selection
            .features
            .iter()
            .filter(|f| f.selected_by == SelectedBy::Lasso && report.flagged.contains(&f.feature))
            .min_by(|a, b| a.coefficient.abs().total_cmp(&b.coefficient.abs()))
            .map(|f| f.feature.clone());
        let Some(victim) = victim else {
            return Ok(Some(report));
        };
        let st = selection
            .features
            .iter_mut()
            .find(|f| f.feature == victim)
            .expect("known feature");
        st.selected_by = SelectedBy::RemovedCollinear;
        last = Some(report);
    }
}

#[derive(Debug, Serialize)]
struct ReportRow<'a> {
    feature: &'a str,
    selected_by: &'a str,
    max_local_vif: Option<f64>,
    lambda: f64,
}

/// CSV with `feature, selected_by, max_local_vif, lambda`.
pub fn write_selection_csv(selection: &Selection, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for f in &selection.features {
        w.serialize(ReportRow {
            feature: &f.feature,
            selected_by: f.selected_by.as_str(),
            max_local_vif: f.max_local_vif,
            lambda: selection.lambda,
        })?;
    }
    w.flush()?;
    Ok(())
}
