use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::Point;

/// Name, unit and aggregation rule of a table column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
    pub provenance: String,
}

impl Column {
    pub fn new(name: impl Into<String>, unit: impl Into<String>, provenance: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            provenance: provenance.into(),
        }
    }
}

/// Mean and population standard deviation of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: f64,
    pub std: f64,
}

impl Scaling {
    #[inline]
    pub fn forward(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    #[inline]
    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Per-column z-score parameters for the features and the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub features: Vec<(String, Scaling)>,
    pub target: Scaling,
}

impl Standardization {
    /// Standardizes a raw feature row given in this standardization's column order.
    pub fn forward_row(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.features)
            .map(|(&v, (_, s))| s.forward(v))
            .collect()
    }

    pub fn scaling_of(&self, name: &str) -> Option<Scaling> {
        self.features.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }
}

/// Station-indexed model input: features, target and projected locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub station_ids: Vec<String>,
    pub locations: Vec<Point>,
    pub columns: Vec<Column>,
    /// n × p feature matrix.
    pub x: DMatrix<f64>,
    /// Target, trips per month per station unless stated otherwise.
    pub y: DVector<f64>,
    pub target: Column,
    pub standardization: Option<Standardization>,
}

impl FeatureTable {
    pub fn new(
        station_ids: Vec<String>,
        locations: Vec<Point>,
        columns: Vec<Column>,
        x: DMatrix<f64>,
        y: DVector<f64>,
        target: Column,
    ) -> Result<Self> {
        let table = Self {
            station_ids,
            locations,
            columns,
            x,
            y,
            target,
            standardization: None,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.nrows();
        if self.y.len() != n || self.locations.len() != n || self.station_ids.len() != n {
            return Err(Error::Schema(format!(
                "row counts disagree: x={n}, y={}, locations={}, ids={}",
                self.y.len(),
                self.locations.len(),
                self.station_ids.len()
            )));
        }
        if self.columns.len() != self.x.ncols() {
            return Err(Error::Schema(format!(
                "{} column descriptors for {} feature columns",
                self.columns.len(),
                self.x.ncols()
            )));
        }
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
        }
        if let Some((r, c)) = (0..self.x.ncols())
            .flat_map(|c| (0..n).map(move |r| (r, c)))
            .find(|&(r, c)| !self.x[(r, c)].is_finite())
        {
            return Err(Error::NonFinite(format!(
                "feature `{}` at row {r}",
                self.columns[c].name
            )));
        }
        if let Some(r) = self.y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("target at row {r}")));
        }
        if let Some(r) = self.locations.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("location at row {r}")));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// Keeps the named feature columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<FeatureTable> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n))
            .collect::<Result<_>>()?;
        let x = DMatrix::from_fn(self.n(), idx.len(), |r, c| self.x[(r, idx[c])]);
        let standardization = self.standardization.as_ref().map(|s| Standardization {
            features: idx.iter().map(|&i| s.features[i].clone()).collect(),
            target: s.target,
        });
        Ok(FeatureTable {
            station_ids: self.station_ids.clone(),
            locations: self.locations.clone(),
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
            x,
            y: self.y.clone(),
            target: self.target.clone(),
            standardization,
        })
    }

    /// Rows at `rows`, in that order.
    pub fn subset(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable {
            station_ids: rows.iter().map(|&r| self.station_ids[r].clone()).collect(),
            locations: rows.iter().map(|&r| self.locations[r]).collect(),
            columns: self.columns.clone(),
            x: DMatrix::from_fn(rows.len(), self.p(), |r, c| self.x[(rows[r], c)]),
            y: DVector::from_fn(rows.len(), |r, _| self.y[rows[r]]),
            target: self.target.clone(),
            standardization: self.standardization.clone(),
        }
    }

    /// Appends the projected coordinates as two ordinary feature columns.
    pub fn with_coordinates(&self) -> FeatureTable {
        let n = self.n();
        let p = self.p();
        let x = DMatrix::from_fn(n, p + 2, |r, c| match c {
            c if c < p => self.x[(r, c)],
            c if c == p => self.locations[r].x,
            _ => self.locations[r].y,
        });
        let mut columns = self.columns.clone();
        columns.push(Column::new(COORD_X, "m", "location:x"));
        columns.push(Column::new(COORD_Y, "m", "location:y"));
        FeatureTable {
            x,
            columns,
            standardization: None,
            ..self.clone()
        }
    }

    /// Z-scores every feature column and the target using the population
    /// standard deviation. Binary columns are treated like any other.
    ///
    /// Standardizing an already standardized table composes the parameters,
    /// so [`destandardize`](Self::destandardize) always returns raw units.
    pub fn standardize(&self) -> Result<FeatureTable> {
        let n = self.n() as f64;
        let scale = |name: &str, v: &mut dyn Iterator<Item = f64>| -> Result<Scaling> {
            let vals: Vec<f64> = v.collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if !(std > 0.0) || std <= 1e-12 * mean.abs() {
                return Err(Error::ZeroVariance(name.to_string()));
            }
            Ok(Scaling { mean, std })
        };
        let mut features = Vec::with_capacity(self.p());
        let mut x = self.x.clone();
        for (c, col) in self.columns.iter().enumerate() {
            let s = scale(&col.name, &mut self.x.column(c).iter().copied())?;
            x.column_mut(c).apply(|v| *v = s.forward(*v));
            features.push((col.name.clone(), s));
        }
        let ts = scale(&self.target.name, &mut self.y.iter().copied())?;
        let y = self.y.map(|v| ts.forward(v));

        let standardization = match &self.standardization {
            None => Standardization { features, target: ts },
            Some(prev) => Standardization {
                features: prev
                    .features
                    .iter()
                    .zip(&features)
                    .map(|((name, a), (_, b))| {
                        (
                            name.clone(),
                            Scaling {
                                mean: a.mean + a.std * b.mean,
                                std: a.std * b.std,
                            },
                        )
                    })
                    .collect(),
                target: Scaling {
                    mean: prev.target.mean + prev.target.std * ts.mean,
                    std: prev.target.std * ts.std,
                },
            },
        };
        Ok(FeatureTable {
            x,
            y,
            standardization: Some(standardization),
            ..self.clone()
        })
    }

    /// Inverse of [`standardize`](Self::standardize); a no-op on raw tables.
    pub fn destandardize(&self) -> FeatureTable {
        let Some(s) = &self.standardization else {
            return self.clone();
        };
        let mut x = self.x.clone();
        for (c, (_, sc)) in s.features.iter().enumerate() {
            x.column_mut(c).apply(|v| *v = sc.inverse(*v));
        }
        FeatureTable {
            x,
            y: self.y.map(|v| s.target.inverse(v)),
            standardization: None,
            ..self.clone()
        }
    }

    /// Applies existing standardization parameters to a raw table with the
    /// same columns (e.g. held-out rows).
    pub fn apply_standardization(&self, s: &Standardization) -> Result<FeatureTable> {
        if self.standardization.is_some() {
            return Err(Error::Schema("table is already standardized".into()));
        }
        if s.features.len() != self.p()
            || s.features
                .iter()
                .zip(&self.columns)
                .any(|((a, _), c)| a != &c.name)
        {
            return Err(Error::Schema(
                "standardization columns do not match the table".into(),
            ));
        }
        let mut x = self.x.clone();
        for (c, (_, sc)) in s.features.iter().enumerate() {
            x.column_mut(c).apply(|v| *v = sc.forward(*v));
        }
        Ok(FeatureTable {
            x,
            y: self.y.map(|v| s.target.forward(v)),
            standardization: Some(s.clone()),
            ..self.clone()
        })
    }
}

pub const COORD_X: &str = "coord_x";
pub const COORD_Y: &str = "coord_y";

#[cfg(test)]
mod tests {
    use super::*;

    fn table(x: DMatrix<f64>, y: Vec<f64>) -> FeatureTable {
        let n = x.nrows();
        let columns = (0..x.ncols())
            .map(|i| Column::new(format!("f{i}"), "-", "test"))
            .collect();
        FeatureTable::new(
            (0..n).map(|i| i.to_string()).collect(),
            (0..n).map(|i| Point::new(1000.0 * i as f64, 0.0)).collect(),
            columns,
            x,
            DVector::from_vec(y),
            Column::new("y", "trips/month", "test"),
        )
        .unwrap()
    }

    #[test]
    fn two_point_column() {
        let t = table(DMatrix::from_row_slice(2, 1, &[0.0, 2.0]), vec![1.0, 5.0]);
        let s = t.standardize().unwrap();
        assert_eq!(s.x.column(0).as_slice(), &[-1.0, 1.0]);
        assert_eq!(s.y.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn zero_variance_named() {
        let t = table(
            DMatrix::from_row_slice(3, 2, &[1.0, 4.0, 2.0, 4.0, 3.0, 4.0]),
            vec![1.0, 2.0, 4.0],
        );
        match t.standardize() {
            Err(Error::ZeroVariance(name)) => assert_eq!(name, "f1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn idempotent_and_invertible() {
        let x = DMatrix::from_fn(40, 3, |r, c| {
            ((r * 7 + c * 13) % 11) as f64 * (c as f64 + 0.5) + 100.0 * c as f64
        });
        let y: Vec<f64> = (0..40).map(|r| (r as f64).sin() * 30.0 + 60.0).collect();
        let t = table(x, y);
        let s = t.standardize().unwrap();
        for c in 0..3 {
            let col = s.x.column(c);
            let mean = col.mean();
            let std = (col.map(|v| (v - mean).powi(2)).sum() / 40.0).sqrt();
            assert!(mean.abs() < 1e-9 && (std - 1.0).abs() < 1e-9);
        }
        let s2 = s.standardize().unwrap();
        assert!((&s2.x - &s.x).amax() < 1e-12);
        assert!((&s2.y - &s.y).amax() < 1e-12);
        let back = s2.destandardize();
        assert!((&back.x - &t.x).amax() < 1e-10);
        assert!((&back.y - &t.y).amax() < 1e-10);
    }

    #[test]
    fn select_and_subset() {
        let t = table(
            DMatrix::from_fn(5, 3, |r, c| (r * 3 + c) as f64),
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
        );
        let s = t.select(&["f2".into(), "f0".into()]).unwrap();
        assert_eq!(s.row(1), vec![5.0, 3.0]);
        assert!(t.select(&["nope".into()]).is_err());
        let sub = t.subset(&[4, 0]);
        assert_eq!(sub.station_ids, vec!["4", "0"]);
        assert_eq!(sub.y.as_slice(), &[4.0, 0.0]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let r = FeatureTable::new(
            vec!["a".into()],
            vec![Point::new(0.0, 0.0)],
            vec![Column::new("a", "", ""), Column::new("a", "", "")],
            DMatrix::zeros(1, 2),
            DVector::zeros(1),
            Column::new("y", "", ""),
        );
        assert!(matches!(r, Err(Error::Schema(_))));
    }
}
