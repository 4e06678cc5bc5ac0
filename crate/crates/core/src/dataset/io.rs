//! CSV ingestion driven by a `key = value` manifest, and feature-table
//! persistence (CSV plus a JSON sidecar).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::table::{Column, FeatureTable, Standardization};
use super::trips::{clean_trips, compute_demand, CleaningReport, TripKind, TripRecord};
use super::{AttributedPoints, CensusAggregation, FusionConfig, FusionInputs, Poi, StationRecord};
use crate::error::{Error, Result};
use crate::spatial::{Point, Polygon};

pub const TABLE_FORMAT: &str = "carshare-table v1";

const FILE_KEYS: [&str; 6] = ["stations", "trips", "pois", "census", "households", "boundary"];
const SCALAR_KEYS: [&str; 10] = [
    "window_start",
    "window_end",
    "buffer_radius_m",
    "competitor_radius_m",
    "census_min_households",
    "census_radius_step_m",
    "max_trip_duration_h",
    "trip_distance_min_km",
    "trip_distance_max_km",
    "census_aggregation",
];

/// Parsed manifest. File paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub dir: PathBuf,
    pub entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, dir)
    }

    /// Lines are `key = value`; `#` starts a comment. Unknown keys are rejected.
    pub fn parse(text: &str, dir: PathBuf) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Schema(format!("manifest line {}: expected key = value", lineno + 1))
            })?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !known_key(&k) {
                return Err(Error::Schema(format!(
                    "manifest line {}: unknown key `{k}`",
                    lineno + 1
                )));
            }
            if entries.insert(k.clone(), v).is_some() {
                return Err(Error::Schema(format!(
                    "manifest line {}: duplicate key `{k}`",
                    lineno + 1
                )));
            }
        }
        if !entries.contains_key("stations") {
            return Err(Error::Schema("manifest must name a `stations` file".into()));
        }
        Ok(Self { dir, entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|p| self.dir.join(p))
    }

    fn column(&self, file: &str, role: &'static str) -> String {
        self.get(&format!("column.{file}.{role}"))
            .unwrap_or(role)
            .to_string()
    }

    fn number<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Schema(format!("manifest `{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    pub fn fusion_config(&self) -> Result<FusionConfig> {
        let mut cfg = FusionConfig::default();
        if let Some(v) = self.number("buffer_radius_m")? {
            cfg.buffer_radius_m = v;
        }
        if let Some(v) = self.number("competitor_radius_m")? {
            cfg.competitor_radius_m = v;
        }
        if let Some(v) = self.number("census_min_households")? {
            cfg.census_min_households = v;
        }
        if let Some(v) = self.number("census_radius_step_m")? {
            cfg.census_radius_step_m = v;
        }
        if let Some(v) = self.number("max_trip_duration_h")? {
            cfg.max_trip_duration_h = v;
        }
        if let Some(v) = self.number("trip_distance_min_km")? {
            cfg.trip_distance_km.0 = v;
        }
        if let Some(v) = self.number("trip_distance_max_km")? {
            cfg.trip_distance_km.1 = v;
        }
        if let Some(v) = self.get("census_aggregation") {
            cfg.census_aggregation = match v {
                "sum" => CensusAggregation::Sum,
                "mean" => CensusAggregation::Mean,
                other => {
                    return Err(Error::Schema(format!(
                        "census_aggregation `{other}` is not sum|mean"
                    )))
                }
            };
        }
        for (k, v) in &self.entries {
            if let Some(name) = k.strip_prefix("poi_category.") {
                let labels = v
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty());
                cfg.poi_categories.insert(name.to_string(), labels.collect());
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn window(&self) -> Result<(NaiveDateTime, NaiveDateTime)> {
        let parse = |key: &str| -> Result<NaiveDateTime> {
            let v = self
                .get(key)
                .ok_or_else(|| Error::Schema(format!("manifest must set `{key}` when trips are given")))?;
            parse_timestamp(v).ok_or_else(|| Error::Schema(format!("manifest `{key}`: bad timestamp `{v}`")))
        };
        Ok((parse("window_start")?, parse("window_end")?))
    }

    fn units(&self, file: &str) -> BTreeMap<String, String> {
        let prefix = format!("unit.{file}.");
        self.entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&prefix).map(|a| (a.to_string(), v.clone())))
            .collect()
    }
}

fn known_key(k: &str) -> bool {
    FILE_KEYS.contains(&k)
        || SCALAR_KEYS.contains(&k)
        || k.strip_prefix("poi_category.").is_some_and(|s| !s.is_empty())
        || ["unit.census.", "unit.households."]
            .iter()
            .any(|p| k.strip_prefix(p).is_some_and(|s| !s.is_empty()))
        || k.strip_prefix("column.").is_some_and(|rest| {
            rest.split_once('.')
                .is_some_and(|(file, role)| FILE_KEYS.contains(&file) && !role.is_empty())
        })
}

pub fn parse_timestamp(v: &str) -> Option<NaiveDateTime> {
    let v = v.trim();
    NaiveDateTime::parse_from_str(v, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(v, "%Y-%m-%d %H:%M:%S"))
        .ok()
        .or_else(|| {
            NaiveDate::parse_from_str(v, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

/// A CSV file with its header resolved.
struct Sheet {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Sheet {
    fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} not found", path.display()),
            )));
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr.records().collect::<std::result::Result<_, _>>()?;
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{}: missing column `{name}`", self.path.display())))
    }

    fn f64_at(&self, row: usize, col: usize) -> Result<f64> {
        let v = &self.rows[row][col];
        v.parse().map_err(|_| {
            Error::Schema(format!(
                "{} line {}: `{v}` in column `{}` is not a number",
                self.path.display(),
                row + 2,
                self.headers[col]
            ))
        })
    }
}

pub fn read_stations(manifest: &Manifest) -> Result<Vec<StationRecord>> {
    let sheet = Sheet::read(&manifest.path("stations").expect("checked at parse"))?;
    let id = sheet.index(&manifest.column("stations", "station_id"))?;
    let x = sheet.index(&manifest.column("stations", "x"))?;
    let y = sheet.index(&manifest.column("stations", "y"))?;
    let cars = sheet.index(&manifest.column("stations", "vehicles"))?;
    (0..sheet.rows.len())
        .map(|r| {
            Ok(StationRecord {
                station_id: sheet.rows[r][id].to_string(),
                location: Point::new(sheet.f64_at(r, x)?, sheet.f64_at(r, y)?),
                vehicles: sheet.f64_at(r, cars)?,
            })
        })
        .collect()
}

pub fn read_trips(path: &Path, manifest: &Manifest) -> Result<Vec<TripRecord>> {
    let sheet = Sheet::read(path)?;
    let id = sheet.index(&manifest.column("trips", "station_id"))?;
    let start = sheet.index(&manifest.column("trips", "start"))?;
    let dur = sheet.index(&manifest.column("trips", "duration_h"))?;
    let dist = sheet.index(&manifest.column("trips", "distance_km"))?;
    let kind = sheet.index(&manifest.column("trips", "kind"))?;
    (0..sheet.rows.len())
        .map(|r| {
            let row = &sheet.rows[r];
            Ok(TripRecord {
                station_id: row[id].to_string(),
                start: parse_timestamp(&row[start]).ok_or_else(|| {
                    Error::Schema(format!(
                        "{} line {}: bad timestamp `{}`",
                        path.display(),
                        r + 2,
                        &row[start]
                    ))
                })?,
                duration_h: sheet.f64_at(r, dur)?,
                distance_km: sheet.f64_at(r, dist)?,
                kind: row[kind].parse::<TripKind>()?,
            })
        })
        .collect()
}

pub fn read_pois(path: &Path, manifest: &Manifest) -> Result<Vec<Poi>> {
    let sheet = Sheet::read(path)?;
    let x = sheet.index(&manifest.column("pois", "x"))?;
    let y = sheet.index(&manifest.column("pois", "y"))?;
    let cat = sheet.index(&manifest.column("pois", "category"))?;
    (0..sheet.rows.len())
        .map(|r| {
            Ok(Poi {
                location: Point::new(sheet.f64_at(r, x)?, sheet.f64_at(r, y)?),
                category: sheet.rows[r][cat].to_string(),
            })
        })
        .collect()
}

/// Every column other than the coordinates is an attribute.
pub fn read_attributed(path: &Path, file: &str, manifest: &Manifest) -> Result<AttributedPoints> {
    let sheet = Sheet::read(path)?;
    let x = sheet.index(&manifest.column(file, "x"))?;
    let y = sheet.index(&manifest.column(file, "y"))?;
    let units = manifest.units(file);
    let attr_cols: Vec<usize> = (0..sheet.headers.len()).filter(|&c| c != x && c != y).collect();
    let mut out = AttributedPoints {
        names: attr_cols.iter().map(|&c| sheet.headers[c].clone()).collect(),
        ..Default::default()
    };
    out.units = out
        .names
        .iter()
        .map(|n| units.get(n).cloned().unwrap_or_default())
        .collect();
    out.values = vec![Vec::with_capacity(sheet.rows.len()); attr_cols.len()];
    for r in 0..sheet.rows.len() {
        out.locations
            .push(Point::new(sheet.f64_at(r, x)?, sheet.f64_at(r, y)?));
        for (k, &c) in attr_cols.iter().enumerate() {
            out.values[k].push(sheet.f64_at(r, c)?);
        }
    }
    Ok(out)
}

/// Boundary polygon from a CSV of `x,y` vertices.
pub fn read_boundary(path: &Path) -> Result<Polygon> {
    let sheet = Sheet::read(path)?;
    let x = sheet.index("x")?;
    let y = sheet.index("y")?;
    let pts = (0..sheet.rows.len())
        .map(|r| Ok(Point::new(sheet.f64_at(r, x)?, sheet.f64_at(r, y)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Polygon::new(pts))
}

/// Reads every input named by the manifest, cleans trips and computes demand.
pub fn load_fusion_inputs(manifest: &Manifest) -> Result<(FusionInputs, FusionConfig, CleaningReport)> {
    let cfg = manifest.fusion_config()?;
    let stations = read_stations(manifest)?;
    let (demand, report) = match manifest.path("trips") {
        Some(p) => {
            let window = manifest.window()?;
            let trips = read_trips(&p, manifest)?;
            let (kept, report) = clean_trips(&trips, &cfg);
            (compute_demand(&kept, &stations, window)?, report)
        }
        None => (vec![0.0; stations.len()], CleaningReport::default()),
    };
    let pois = match manifest.path("pois") {
        Some(p) => read_pois(&p, manifest)?,
        None => Vec::new(),
    };
    let census = match manifest.path("census") {
        Some(p) => read_attributed(&p, "census", manifest)?,
        None => AttributedPoints::default(),
    };
    let households = match manifest.path("households") {
        Some(p) => read_attributed(&p, "households", manifest)?,
        None => AttributedPoints::default(),
    };
    let boundary = manifest.path("boundary").map(|p| read_boundary(&p)).transpose()?;
    Ok((
        FusionInputs {
            stations,
            demand,
            pois,
            census,
            households,
            boundary,
        },
        cfg,
        report,
    ))
}

/// Sidecar metadata stored next to a feature-table CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub format: String,
    pub toolkit_version: String,
    pub columns: Vec<Column>,
    pub target: Column,
    pub standardization: Option<Standardization>,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes `station_id,x,y,<features>,<target>` plus the sidecar.
pub fn write_table(table: &FeatureTable, path: &Path, notes: &BTreeMap<String, String>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["station_id".to_string(), "x".into(), "y".into()];
    header.extend(table.feature_names());
    header.push(table.target.name.clone());
    w.write_record(&header)?;
    for i in 0..table.n() {
        let mut rec = vec![
            table.station_ids[i].clone(),
            table.locations[i].x.to_string(),
            table.locations[i].y.to_string(),
        ];
        rec.extend(table.x.row(i).iter().map(|v| v.to_string()));
        rec.push(table.y[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    let meta = TableMeta {
        format: TABLE_FORMAT.into(),
        toolkit_version: crate::VERSION.into(),
        columns: table.columns.clone(),
        target: table.target.clone(),
        standardization: table.standardization.clone(),
        notes: notes.clone(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_table_meta(path: &Path) -> Result<Option<TableMeta>> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    let meta: TableMeta = serde_json::from_str(&fs::read_to_string(side)?)?;
    if meta.format != TABLE_FORMAT {
        return Err(Error::Schema(format!(
            "table format `{}` is not `{TABLE_FORMAT}`",
            meta.format
        )));
    }
    Ok(Some(meta))
}

/// Reads a table written by [`write_table`]. Without a sidecar the last
/// column is taken as the target.
pub fn read_table(path: &Path) -> Result<FeatureTable> {
    let sheet = Sheet::read(path)?;
    let meta = read_table_meta(path)?;
    if sheet.headers.len() < 5 || sheet.headers[..3] != ["station_id", "x", "y"] {
        return Err(Error::Schema(format!(
            "{}: expected station_id,x,y,<features...>,<target>",
            path.display()
        )));
    }
    let p = sheet.headers.len() - 4;
    let (columns, target) = match &meta {
        Some(m) => {
            let names: Vec<&str> = m.columns.iter().map(|c| c.name.as_str()).collect();
            if names != sheet.headers[3..3 + p] || m.target.name != sheet.headers[3 + p] {
                return Err(Error::Schema(format!(
                    "{}: header disagrees with sidecar",
                    path.display()
                )));
            }
            (m.columns.clone(), m.target.clone())
        }
        None => (
            sheet.headers[3..3 + p]
                .iter()
                .map(|h| Column::new(h.clone(), "", ""))
                .collect(),
            Column::new(sheet.headers[3 + p].clone(), "", ""),
        ),
    };
    let n = sheet.rows.len();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut ids = Vec::with_capacity(n);
    let mut locations = Vec::with_capacity(n);
    for r in 0..n {
        ids.push(sheet.rows[r][0].to_string());
        locations.push(Point::new(sheet.f64_at(r, 1)?, sheet.f64_at(r, 2)?));
        for j in 0..p {
            x[(r, j)] = sheet.f64_at(r, 3 + j)?;
        }
        y[r] = sheet.f64_at(r, 3 + p)?;
    }
    let mut table = FeatureTable::new(ids, locations, columns, x, y, target)?;
    table.standardization = meta.and_then(|m| m.standardization);
    Ok(table)
}
