use serde::{Deserialize, Serialize};

use super::bundle::fit_model;
use super::spec::ModelSpec;
use crate::dataset::FeatureTable;
use crate::diagnostics::{FoldOutcome, Pipeline};
use crate::error::{Error, Result};
use crate::selection::{lasso_select, screen_collinearity, Selection};
use crate::spatial::{Bandwidth, Kernel};

/// LASSO selection, optionally followed by local collinearity screening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub k_folds: usize,
    pub seed: u64,
    pub include: Vec<String>,
    pub exclude: Vec<String>,
    pub screen: Option<(Kernel, Bandwidth)>,
}

impl SelectionStep {
    /// Runs on a raw table and returns the selection.
    pub fn run(&self, table: &FeatureTable) -> Result<Selection> {
        let z = table.destandardize().standardize()?;
        let mut sel = lasso_select(&z, self.k_folds, self.seed, &self.include, &self.exclude)?;
        if let Some((kernel, bw)) = self.screen {
            screen_collinearity(&z, &mut sel, kernel, bw)?;
        }
        if sel.selected().is_empty() {
            return Err(Error::Empty("selected features"));
        }
        Ok(sel)
    }
}

/// Selection (optional) then fit then predict, all learned on the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPipeline {
    pub spec: ModelSpec,
    pub selection: Option<SelectionStep>,
}

impl Pipeline for ModelPipeline {
    fn run(&self, train: &FeatureTable, test: &FeatureTable) -> Result<FoldOutcome> {
        let (train, test) = match &self.selection {
            Some(step) => {
                let keep = step.run(train)?.selected();
                (train.select(&keep)?, test.select(&keep)?)
            }
            None => (train.clone(), test.clone()),
        };
        let bundle = fit_model(&train, &self.spec, None)?;
        let pred = bundle.predict(&test.locations, &test.destandardize().x)?;
        let predictions = pred
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or(Error::LocalRankDeficient { location: i }))
            .collect::<Result<_>>()?;
        Ok(FoldOutcome {
            predictions,
            selected: train.feature_names(),
            tuned: bundle.tuning.map(|t| t.bandwidth.value()),
        })
    }
}
