use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{kfold_cv, CvResult};
use super::metrics::metrics;
use super::moran::{morans_i, Alternative, DEFAULT_PERMUTATIONS};
use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::linear::{BandwidthMode, Criterion};
use crate::model::{fit_model, BandwidthSpec, ModelKind, ModelPipeline, ModelSpec, SelectionStep};
use crate::spatial::{knn_weights, Kernel, SpatialIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoranSettings {
    pub k_neighbours: usize,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for MoranSettings {
    fn default() -> Self {
        Self {
            k_neighbours: 8,
            permutations: DEFAULT_PERMUTATIONS,
            seed: 0,
        }
    }
}

/// One model configuration's row in a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub algorithm: String,
    pub bandwidth_mode: Option<String>,
    pub criterion: Option<String>,
    pub kernel: Option<String>,
    pub adjusted_r2: Option<f64>,
    pub aicc: Option<f64>,
    pub oos_rmse: Option<f64>,
    pub oos_r2: Option<f64>,
    pub loocv_r2: Option<f64>,
    pub moran_p: Option<f64>,
    /// Mean tuned bandwidth over folds, where tuned.
    pub mean_tuned_bandwidth: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub cv: Option<CvResult>,
}

impl EvaluationRow {
    fn describe(spec: &ModelSpec) -> Self {
        let local = matches!(spec.kind, ModelKind::Gwr | ModelKind::Mgwr);
        let mode = match spec.kind {
            ModelKind::Mgwr => Some(BandwidthMode::Adaptive.label().to_string()),
            ModelKind::Gwr => Some(spec.bandwidth.mode.label().to_string()),
            ModelKind::Grf => Some(BandwidthMode::Adaptive.label().to_string()),
            _ => None,
        };
        Self {
            algorithm: spec.kind.label().to_string(),
            bandwidth_mode: mode,
            criterion: local.then(|| spec.criterion.label().to_string()),
            kernel: if local {
                Some(spec.kernel.label().to_string())
            } else if spec.kind == ModelKind::Grf {
                Some(Kernel::Boxcar.label().to_string())
            } else {
                None
            },
            adjusted_r2: None,
            aicc: None,
            oos_rmse: None,
            oos_r2: None,
            loocv_r2: None,
            moran_p: None,
            mean_tuned_bandwidth: None,
            error: None,
            cv: None,
        }
    }
}

fn evaluate_one(
    table: &FeatureTable,
    spec: &ModelSpec,
    selection: Option<&SelectionStep>,
    k: usize,
    seed: u64,
    moran: &MoranSettings,
) -> Result<EvaluationRow> {
    let mut row = EvaluationRow::describe(spec);
    let raw = table.destandardize();
    let full = match selection {
        Some(step) => raw.select(&step.run(&raw)?.selected())?,
        None => raw.clone(),
    };
    let bundle = fit_model(&full, spec, None)?;
    let ins = bundle.in_sample(&full)?;
    let y: Vec<f64> = full.y.iter().copied().collect();
    let m = metrics(&y, &ins.fitted, ins.tr_s, None)?;
    row.adjusted_r2 = m.adjusted_r2;
    row.aicc = ins.aicc;
    row.loocv_r2 = ins.loocv_r2;
    let index = SpatialIndex::new(&full.locations)?;
    let w = knn_weights(&index, moran.k_neighbours.min(full.n() - 1), true)?;
    row.moran_p = Some(
        morans_i(
            &ins.residuals,
            &w,
            moran.permutations,
            moran.seed,
            Alternative::Greater,
        )?
        .p_value,
    );
    if spec.kind.predicts_out_of_sample() {
        let pipeline = ModelPipeline {
            spec: spec.clone(),
            selection: selection.cloned(),
        };
        let cv = kfold_cv(&raw, &pipeline, k, seed)?;
        row.oos_rmse = Some(cv.oos_rmse);
        row.oos_r2 = Some(cv.oos_r2);
        let tuned: Vec<f64> = cv.folds.iter().filter_map(|f| f.tuned).collect();
        if !tuned.is_empty() {
            row.mean_tuned_bandwidth = Some(tuned.iter().sum::<f64>() / tuned.len() as f64);
        }
        row.cv = Some(cv);
    }
    Ok(row)
}

/// Table-1 style comparison: in-sample fit statistics, residual Moran p and
/// pooled K-fold out-of-sample scores per model. Rows keep input order; a
/// failing model yields a row with `error` set.
pub fn evaluate(
    table: &FeatureTable,
    specs: &[ModelSpec],
    selection: Option<&SelectionStep>,
    k: usize,
    seed: u64,
    moran: &MoranSettings,
) -> Vec<EvaluationRow> {
    specs
        .par_iter()
        .map(|spec| {
            evaluate_one(table, spec, selection, k, seed, moran).unwrap_or_else(|e| EvaluationRow {
                error: Some(e.to_string()),
                ..EvaluationRow::describe(spec)
            })
        })
        .collect()
}

/// GWR parameter sweep in Table-4 layout, sorted by out-of-sample R²
/// (failed rows last).
pub fn ablate(
    table: &FeatureTable,
    grid: &[(BandwidthMode, Criterion, Kernel)],
    selection: Option<&SelectionStep>,
    k: usize,
    seed: u64,
    moran: &MoranSettings,
) -> Result<Vec<EvaluationRow>> {
    if grid.is_empty() {
        return Err(Error::Empty("ablation grid"));
    }
    let specs: Vec<ModelSpec> = grid
        .iter()
        .map(|&(mode, criterion, kernel)| ModelSpec::gwr(kernel, BandwidthSpec::auto(mode), criterion))
        .collect();
    let mut rows = evaluate(table, &specs, selection, k, seed, moran);
    rows.sort_by(|a, b| match (a.oos_r2, b.oos_r2) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(rows)
}

/// Every (mode, criterion, kernel) combination.
pub fn full_grid() -> Vec<(BandwidthMode, Criterion, Kernel)> {
    let mut g = Vec::new();
    for mode in [BandwidthMode::Fixed, BandwidthMode::Adaptive] {
        for criterion in [Criterion::Aicc, Criterion::Cv] {
            for kernel in Kernel::ALL {
                g.push((mode, criterion, kernel));
            }
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Model comparison.
    Comparison,
    /// GWR parameter sweep.
    Ablation,
}

impl Layout {
    pub fn headers(self) -> Vec<&'static str> {
        match self {
            Layout::Comparison => vec![
                "Algorithm",
                "Fixed/Adaptive",
                "Kernel",
                "Adjusted R²",
                "AICc",
                "Out-of-Sample RMSE",
                "Out-of-Sample R²",
                "LOOCV R²",
                "Residual Moran's I P-Value",
            ],
            Layout::Ablation => vec![
                "Algorithm",
                "Fixed/Adaptive",
                "Bandwidth Selection",
                "Kernel",
                "Adjusted R²",
                "AICc",
                "Out-of-Sample RMSE",
                "Out-of-Sample R²",
                "Residual Moran's I P-Value",
            ],
        }
    }

    fn cells(self, r: &EvaluationRow) -> Vec<String> {
        let s = |v: &Option<String>| v.clone().unwrap_or_else(|| "-".into());
        let f = |v: Option<f64>, d: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.d$}"));
        let mut algorithm = r.algorithm.clone();
        if r.error.is_some() {
            algorithm.push_str(" (failed)");
        }
        match self {
            Layout::Comparison => vec![
                algorithm,
                s(&r.bandwidth_mode),
                s(&r.kernel),
                f(r.adjusted_r2, 4),
                f(r.aicc, 2),
                f(r.oos_rmse, 2),
                f(r.oos_r2, 4),
                f(r.loocv_r2, 4),
                f(r.moran_p, 3),
            ],
            Layout::Ablation => vec![
                algorithm,
                s(&r.bandwidth_mode),
                s(&r.criterion),
                s(&r.kernel),
                f(r.adjusted_r2, 4),
                f(r.aicc, 2),
                f(r.oos_rmse, 2),
                f(r.oos_r2, 4),
                f(r.moran_p, 3),
            ],
        }
    }
}

/// Column-aligned plain text, failed rows followed by their error.
pub fn render_text(rows: &[EvaluationRow], layout: Layout) -> String {
    let headers = layout.headers();
    let body: Vec<Vec<String>> = rows.iter().map(|r| layout.cells(r)).collect();
    let mut width: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for r in &body {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<String>| -> String {
        cells
            .iter()
            .zip(&width)
            .enumerate()
            .map(|(i, (c, w))| {
                let pad = w - c.chars().count();
                if i == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(headers.iter().map(|h| h.to_string()).collect());
    out.push('\n');
    out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * (width.len() - 1)));
    out.push('\n');
    for (r, cells) in rows.iter().zip(body) {
        out.push_str(&line(cells));
        out.push('\n');
        if let Some(e) = &r.error {
            out.push_str(&format!("  error: {e}\n"));
        }
    }
    out
}

/// CSV with the layout's headers plus a trailing `Error` column.
pub fn write_csv(rows: &[EvaluationRow], layout: Layout, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut headers = layout.headers();
    headers.push("Error");
    w.write_record(&headers)?;
    for r in rows {
        let mut cells = layout.cells(r);
        cells.push(r.error.clone().unwrap_or_default());
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth::{synth_generate, Preset};

    fn quick() -> MoranSettings {
        MoranSettings {
            permutations: 99,
            ..MoranSettings::default()
        }
    }

    #[test]
    fn single_config_matches_direct_cv() {
        let (t, _) = synth_generate(&Preset::TwoCluster.spec(120), 4).unwrap();
        let grid = [(BandwidthMode::Adaptive, Criterion::Aicc, Kernel::Bisquare)];
        let rows = ablate(&t, &grid, None, 5, 9, &quick()).unwrap();
        let spec = ModelSpec::gwr(
            Kernel::Bisquare,
            BandwidthSpec::auto(BandwidthMode::Adaptive),
            Criterion::Aicc,
        );
        let direct = kfold_cv(
            &t,
            &ModelPipeline {
                spec,
                selection: None,
            },
            5,
            9,
        )
        .unwrap();
        assert_eq!(rows[0].oos_r2, Some(direct.oos_r2));
        assert_eq!(rows[0].oos_rmse, Some(direct.oos_rmse));
        let text = render_text(&rows, Layout::Ablation);
        assert!(text.starts_with("Algorithm"));
        assert!(text.contains("Bisquare"));
    }

    #[test]
    fn failures_are_marked_and_sorted_last() {
        let (t, _) = synth_generate(&Preset::TwoCluster.spec(60), 4).unwrap();
        let mut bad = ModelSpec::gwr(Kernel::Boxcar, "fixed:1".parse().unwrap(), Criterion::Aicc);
        bad.standardize = false;
        let good = ModelSpec::new(ModelKind::Ols);
        let rows = evaluate(&t, &[bad, good], None, 4, 1, &quick());
        assert!(rows[0].error.is_some());
        assert!(rows[1].error.is_none());
        assert!(render_text(&rows, Layout::Comparison).contains("GWR (failed)"));
        let grid = full_grid();
        assert_eq!(grid.len(), 16);
    }
}
