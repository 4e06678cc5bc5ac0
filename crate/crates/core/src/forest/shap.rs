use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::ForestModel;
use super::tree::{Node, Tree};
use crate::dataset::FeatureTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapValues {
    pub phi: Vec<f64>,
    pub base_value: f64,
}

#[derive(Debug, Clone, Copy)]
struct PathElem {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: Option<usize>) {
    let l = path.len();
    path.push(PathElem {
        feature,
        zero,
        one,
        weight: if l == 0 { 1.0 } else { 0.0 },
    });
    let lf = (l + 1) as f64;
    for i in (0..l).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / lf;
        path[i].weight = zero * path[i].weight * (l - i) as f64 / lf;
    }
}

fn unwind(path: &mut Vec<PathElem>, index: usize) {
    let d = path.len() - 1;
    let (one, zero) = (path[index].one, path[index].zero);
    let mut next = path[d].weight;
    let df = (d + 1) as f64;
    for i in (0..d).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * df / ((i + 1) as f64 * one);
            next = tmp - path[i].weight * zero * (d - i) as f64 / df;
        } else {
            path[i].weight = path[i].weight * df / (zero * (d - i) as f64);
        }
    }
    for i in index..d {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
    path.pop();
}

/// Total weight of the path with element `index` removed.
fn unwound_sum(path: &[PathElem], index: usize) -> f64 {
    let d = path.len() - 1;
    let (one, zero) = (path[index].one, path[index].zero);
    let mut total = 0.0;
    if one != 0.0 {
        let mut next = path[d].weight;
        for i in (0..d).rev() {
            let tmp = next / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (d - i) as f64;
        }
    } else {
        for i in (0..d).rev() {
            total += path[i].weight / (zero * (d - i) as f64);
        }
    }
    total * (d + 1) as f64
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &Tree,
    node: usize,
    mut path: Vec<PathElem>,
    zero: f64,
    one: f64,
    feature: Option<usize>,
    x: &[f64],
    phi: &mut [f64],
) {
    extend(&mut path, zero, one, feature);
    match tree.nodes[node] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let e = path[i];
                phi[e.feature.expect("only the root element has no feature")] += w * (e.one - e.zero) * value;
            }
        }
        Node::Split {
            feature: f,
            threshold,
            left,
            right,
            cover,
            ..
        } => {
            let (hot, cold) = if x[f] <= threshold {
                (left, right)
            } else {
                (right, left)
            };
            let (mut iz, mut io) = (1.0, 1.0);
            if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(f)) {
                iz = path[k].zero;
                io = path[k].one;
                unwind(&mut path, k);
            }
            let hot_frac = tree.nodes[hot].cover() / cover;
            let cold_frac = tree.nodes[cold].cover() / cover;
            recurse(tree, hot, path.clone(), iz * hot_frac, io, Some(f), x, phi);
            recurse(tree, cold, path, iz * cold_frac, 0.0, Some(f), x, phi);
        }
    }
}

/// Exact path-dependent SHAP values of one tree.
pub fn tree_shap_single(tree: &Tree, x: &[f64], p: usize) -> Vec<f64> {
    let mut phi = vec![0.0; p];
    recurse(tree, 0, Vec::new(), 1.0, 1.0, None, x, &mut phi);
    phi
}

/// Path-dependent tree SHAP averaged over the forest. `base_value` is the
/// mean of the trees' cover-weighted expectations.
pub fn tree_shap(model: &ForestModel, x: &[f64]) -> Result<ShapValues> {
    let p = model.p();
    if x.len() != p {
        return Err(Error::Schema(format!(
            "forest expects {p} features, got {}",
            x.len()
        )));
    }
    let m = model.trees.len() as f64;
    let mut phi = vec![0.0; p];
    for t in &model.trees {
        for (a, b) in phi.iter_mut().zip(tree_shap_single(t, x, p)) {
            *a += b;
        }
    }
    phi.iter_mut().for_each(|v| *v /= m);
    let base_value = model.trees.iter().map(Tree::expected_value).sum::<f64>() / m;
    Ok(ShapValues { phi, base_value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummary {
    /// `(feature, mean |φ|)`, most important first.
    pub importance: Vec<(String, f64)>,
    pub base_value: f64,
    /// Per row: `φ` in model column order.
    pub phi: Vec<Vec<f64>>,
    /// Feature values behind each row of `phi`.
    pub values: Vec<Vec<f64>>,
    pub feature_names: Vec<String>,
    pub station_ids: Vec<String>,
}

/// Mean absolute SHAP value per feature over the table's rows. The table
/// must carry the model's columns (coordinates included when used).
pub fn shap_summary(model: &ForestModel, table: &FeatureTable) -> Result<ShapSummary> {
    if table.feature_names() != model.feature_names {
        return Err(Error::Schema("table columns do not match the forest".into()));
    }
    let rows = super::model::rows_of(&table.x);
    let shap: Vec<ShapValues> = rows.iter().map(|r| tree_shap(model, r)).collect::<Result<_>>()?;
    let p = model.p();
    let n = rows.len() as f64;
    let mut importance: Vec<(String, f64)> = (0..p)
        .map(|j| {
            (
                model.feature_names[j].clone(),
                shap.iter().map(|s| s.phi[j].abs()).sum::<f64>() / n,
            )
        })
        .collect();
    importance.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(ShapSummary {
        importance,
        base_value: shap.first().map_or(0.0, |s| s.base_value),
        phi: shap.into_iter().map(|s| s.phi).collect(),
        values: rows,
        feature_names: model.feature_names.clone(),
        station_ids: table.station_ids.clone(),
    })
}

#[derive(Serialize)]
struct BeeswarmRow<'a> {
    station_id: &'a str,
    feature: &'a str,
    value: f64,
    shap: f64,
}

/// Long-format `station_id, feature, value, shap` export.
pub fn write_beeswarm_csv(summary: &ShapSummary, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, id) in summary.station_ids.iter().enumerate() {
        for (j, f) in summary.feature_names.iter().enumerate() {
            w.serialize(BeeswarmRow {
                station_id: id,
                feature: f,
                value: summary.values[i][j],
                shap: summary.phi[i][j],
            })?;
        }
    }
    w.flush()?;
    Ok(())
}
