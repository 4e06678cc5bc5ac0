use serde::{Deserialize, Serialize};

use super::SpatialIndex;
use crate::error::{Error, Result};

/// Sparse non-negative spatial weights with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialWeights {
    /// Row `i` lists `(j, w_ij)` with `j` ascending.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub row_standardized: bool,
    /// Sum of all weights.
    pub total: f64,
    pub descriptor: String,
}

impl SpatialWeights {
    /// Builds weights from explicit rows, sorting entries and dropping self-links.
    pub fn from_rows(
        mut rows: Vec<Vec<(usize, f64)>>,
        row_standardize: bool,
        descriptor: &str,
    ) -> Result<Self> {
        let n = rows.len();
        for (i, row) in rows.iter_mut().enumerate() {
            row.retain(|&(j, _)| j != i);
            row.sort_by_key(|&(j, _)| j);
            if let Some(&(j, w)) = row
                .iter()
                .find(|&&(j, w)| j >= n || !(w >= 0.0) || !w.is_finite())
            {
                return Err(Error::InvalidArgument(format!("bad weight w[{i}][{j}] = {w}")));
            }
            if row_standardize {
                let s: f64 = row.iter().map(|&(_, w)| w).sum();
                if s > 0.0 {
                    for e in row.iter_mut() {
                        e.1 /= s;
                    }
                }
            }
        }
        let total = rows.iter().flatten().map(|&(_, w)| w).sum();
        Ok(Self {
            rows,
            row_standardized: row_standardize,
            total,
            descriptor: descriptor.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `Σ_i Σ_j w_ij z_i z_j`.
    pub fn quadratic_form(&self, z: &[f64]) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| z[i] * row.iter().map(|&(j, w)| w * z[j]).sum::<f64>())
            .sum()
    }
}

/// Binary k-nearest-neighbour weights (self excluded), optionally
/// row-standardized. Neighbour ties resolve to the lowest id.
pub fn knn_weights(index: &SpatialIndex, k: usize, row_standardize: bool) -> Result<SpatialWeights> {
    let n = index.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "knn weights need 1 <= k < n, got k={k}, n={n}"
        )));
    }
    let rows = (0..n)
        .map(|i| {
            index
                .knn_filtered(index.point(i), k, |j| j != i)
                .into_iter()
                .map(|(j, _)| (j, 1.0))
                .collect()
        })
        .collect();
    let descriptor = format!(
        "knn(k={k}{})",
        if row_standardize { ", row-standardized" } else { "" }
    );
    SpatialWeights::from_rows(rows, row_standardize, &descriptor)
}
