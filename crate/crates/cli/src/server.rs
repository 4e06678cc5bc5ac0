//! HTTP JSON service under `/v1`: health, stations, predict and supply what-if.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use carshare_core::dataset::{FeatureTable, FusionContext, SUPPLY_COLUMN};
use carshare_core::model::{ModelBundle, ModelKind};
use carshare_core::spatial::{convex_hull, Point, Polygon};
use carshare_core::whatif::{
    fused_base, neighbourhood_stats, supply_curve, supply_range, NeighbourhoodStats,
};
use carshare_core::Error as CoreError;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SUPPLY_MAX: usize = 20;
pub const MAX_SUPPLY_MAX: usize = 500;
pub const MAX_PREDICT_ROWS: usize = 100_000;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Unsupported(m) => Self::unprocessable("unsupported", m),
            CoreError::Schema(_)
            | CoreError::UnknownFeature(_)
            | CoreError::NonFinite(_)
            | CoreError::InvalidArgument(_) => Self::bad_request(e.to_string()),
            CoreError::Geometry(_)
            | CoreError::LocalRankDeficient { .. }
            | CoreError::NotEnoughPoints { .. } => Self::unprocessable("unprocessable", e.to_string()),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code,
            message: &self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

/// Immutable state shared by all requests.
pub struct AppState {
    pub bundles: BTreeMap<String, ModelBundle>,
    /// Fused table of the existing stations, raw units.
    pub table: FeatureTable,
    /// Present when the service can fuse features at new locations.
    pub fusion: Option<FusionContext>,
    /// Answer 422 instead of flagging when a location is outside the data boundary.
    pub refuse_extrapolation: bool,
    hull: Polygon,
}

impl AppState {
    pub fn new(
        bundles: BTreeMap<String, ModelBundle>,
        table: FeatureTable,
        fusion: Option<FusionContext>,
        refuse_extrapolation: bool,
    ) -> carshare_core::Result<Self> {
        if bundles.is_empty() {
            return Err(CoreError::Empty("model bundles"));
        }
        let table = table.destandardize();
        if let Some(ctx) = &fusion {
            let fused: BTreeSet<String> = ctx.columns().iter().map(|c| c.name.clone()).collect();
            for (name, b) in &bundles {
                if let Some(missing) = b.feature_names().iter().find(|f| !fused.contains(*f)) {
                    return Err(CoreError::Schema(format!(
                        "model `{name}` uses `{missing}`, which fusion does not produce"
                    )));
                }
            }
        }
        let hull = Polygon::new(convex_hull(&table.locations));
        Ok(Self {
            bundles,
            table,
            fusion,
            refuse_extrapolation,
            hull,
        })
    }

    fn bundle(&self, name: &str) -> Result<&ModelBundle, ApiError> {
        self.bundles.get(name).ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_model",
                format!("no model named `{name}`; loaded: {}", self.names().join(", ")),
            )
        })
    }

    fn names(&self) -> Vec<String> {
        self.bundles.keys().cloned().collect()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/stations", get(stations))
        .route("/v1/predict", post(predict))
        .route("/v1/whatif", post(whatif))
        .with_state(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub kind: ModelKind,
    pub features: Vec<String>,
    pub target: String,
    pub predicts_out_of_sample: bool,
    pub fusion_fingerprint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub toolkit_version: String,
    pub n_stations: usize,
    pub auto_fuse: bool,
    pub models: Vec<ModelInfo>,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
        toolkit_version: carshare_core::VERSION.into(),
        n_stations: state.table.n(),
        auto_fuse: state.fusion.is_some(),
        models: state
            .bundles
            .iter()
            .map(|(name, b)| ModelInfo {
                name: name.clone(),
                kind: b.kind,
                features: b.feature_names(),
                target: b.target.name.clone(),
                predicts_out_of_sample: b.kind.predicts_out_of_sample(),
                fusion_fingerprint: b.fusion_fingerprint.clone(),
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationOut {
    pub station_id: String,
    pub x_m: f64,
    pub y_m: f64,
    pub supply_cars: Option<f64>,
    pub demand_trips_per_month: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationsResponse {
    pub n_stations: usize,
    pub stations: Vec<StationOut>,
}

async fn stations(State(state): State<Arc<AppState>>) -> Json<StationsResponse> {
    let t = &state.table;
    let s = t.column_index(SUPPLY_COLUMN).ok();
    Json(StationsResponse {
        n_stations: t.n(),
        stations: (0..t.n())
            .map(|i| StationOut {
                station_id: t.station_ids[i].clone(),
                x_m: t.locations[i].x,
                y_m: t.locations[i].y,
                supply_cars: s.map(|s| t.x[(i, s)]),
                demand_trips_per_month: t.y[i],
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationM {
    pub x_m: f64,
    pub y_m: f64,
}

impl LocationM {
    fn point(self) -> Result<Point, ApiError> {
        let p = Point::new(self.x_m, self.y_m);
        if !p.is_finite() {
            return Err(ApiError::bad_request("location must be finite"));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRow {
    pub x_m: f64,
    pub y_m: f64,
    /// Raw feature values by column name.
    pub features: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub model: String,
    pub rows: Vec<PredictRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub model: String,
    pub kind: ModelKind,
    /// `null` where a local model could not be calibrated.
    pub demand_trips_per_month: Vec<Option<f64>>,
}

/// Feature matrix in the bundle's column order; every column must be given
/// and nothing else.
fn feature_matrix(bundle: &ModelBundle, rows: &[PredictRow]) -> Result<DMatrix<f64>, ApiError> {
    let names = bundle.feature_names();
    let mut x = DMatrix::zeros(rows.len(), names.len());
    for (r, row) in rows.iter().enumerate() {
        if let Some(extra) = row.features.keys().find(|k| !names.contains(k)) {
            return Err(ApiError::bad_request(format!(
                "row {r}: model does not use feature `{extra}`"
            )));
        }
        for (c, n) in names.iter().enumerate() {
            x[(r, c)] = *row
                .features
                .get(n)
                .ok_or_else(|| ApiError::bad_request(format!("row {r}: missing feature `{n}`")))?;
        }
    }
    Ok(x)
}

pub fn predict_blocking(state: &AppState, req: &PredictRequest) -> Result<PredictResponse, ApiError> {
    let bundle = state.bundle(&req.model)?;
    if !bundle.kind.predicts_out_of_sample() {
        return Err(ApiError::unprocessable(
            "unsupported",
            "MGWR does not support out-of-sample prediction; use GWR or a forest",
        ));
    }
    if req.rows.is_empty() {
        return Err(ApiError::bad_request("rows must not be empty"));
    }
    if req.rows.len() > MAX_PREDICT_ROWS {
        return Err(ApiError::bad_request(format!(
            "at most {MAX_PREDICT_ROWS} rows per request"
        )));
    }
    let x = feature_matrix(bundle, &req.rows)?;
    let locations = req
        .rows
        .iter()
        .map(|r| {
            LocationM {
                x_m: r.x_m,
                y_m: r.y_m,
            }
            .point()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PredictResponse {
        model: req.model.clone(),
        kind: bundle.kind,
        demand_trips_per_month: bundle.predict(&locations, &x)?,
    })
}

async fn predict(
    State(state): State<Arc<AppState>>,
    body: Result<Json<PredictRequest>, JsonRejection>,
) -> Result<Json<PredictResponse>, ApiError> {
    let Json(req) = body?;
    blocking(move || predict_blocking(&state, &req)).await.map(Json)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// Fuse every feature at the location with the training configuration.
    #[default]
    AutoFuse,
    /// Use the caller's `base_features` for everything but supply.
    FixedFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub location: LocationM,
    #[serde(default)]
    pub mode: FeatureMode,
    #[serde(default)]
    pub base_features: Option<BTreeMap<String, f64>>,
    /// Supply sweeps `1..=supply_max_cars`.
    #[serde(default)]
    pub supply_max_cars: Option<usize>,
    /// Model names; all out-of-sample capable models when absent.
    #[serde(default)]
    pub models: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveOut {
    pub model: String,
    pub kind: ModelKind,
    pub demand_trips_per_month: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub location: LocationM,
    pub mode: FeatureMode,
    pub supply_cars: Vec<f64>,
    pub curves: Vec<CurveOut>,
    pub neighbourhood: NeighbourhoodStats,
    /// Features held fixed along the curves; supply is the swept value.
    pub base_features: BTreeMap<String, f64>,
    pub extrapolated: bool,
    pub fusion_fingerprint: Option<String>,
    pub warnings: Vec<String>,
}

pub fn whatif_blocking(state: &AppState, req: &WhatIfRequest) -> Result<WhatIfResponse, ApiError> {
    let location = req.location.point()?;
    let k = req.supply_max_cars.unwrap_or(DEFAULT_SUPPLY_MAX);
    if k == 0 || k > MAX_SUPPLY_MAX {
        return Err(ApiError::bad_request(format!(
            "supply_max_cars must be in 1..={MAX_SUPPLY_MAX}"
        )));
    }
    let names: Vec<String> = match &req.models {
        Some(m) if m.is_empty() => return Err(ApiError::bad_request("models must not be empty")),
        Some(m) => m.clone(),
        None => state
            .bundles
            .iter()
            .filter(|(_, b)| b.kind.predicts_out_of_sample())
            .map(|(n, _)| n.clone())
            .collect(),
    };
    if names.is_empty() {
        return Err(ApiError::unprocessable(
            "unsupported",
            "no loaded model supports out-of-sample prediction",
        ));
    }
    let mut bundles = Vec::with_capacity(names.len());
    for n in &names {
        let b = state.bundle(n)?;
        if !b.kind.predicts_out_of_sample() {
            return Err(ApiError::unprocessable(
                "unsupported",
                format!(
                    "model `{n}`: MGWR does not support out-of-sample prediction, so it has no what-if curve"
                ),
            ));
        }
        bundles.push((n.as_str(), b));
    }
    let used: BTreeSet<String> = bundles
        .iter()
        .flat_map(|(_, b)| b.feature_names())
        .filter(|f| f != SUPPLY_COLUMN)
        .collect();

    let mut warnings = Vec::new();
    let (base, extrapolated, fingerprint) =
        match req.mode {
            FeatureMode::AutoFuse => {
                if req.base_features.is_some() {
                    return Err(ApiError::bad_request(
                        "base_features is only accepted with mode `fixed-features`",
                    ));
                }
                let ctx = state.fusion.as_ref().ok_or_else(|| {
                    ApiError::unprocessable(
                        "auto_fuse_unavailable",
                        "the service was started without fusion inputs; use mode `fixed-features`",
                    )
                })?;
                let fp = ctx.config().fingerprint();
                for (n, b) in &bundles {
                    match &b.fusion_fingerprint {
                        Some(f) if *f != fp => return Err(ApiError::unprocessable(
                            "fusion_mismatch",
                            format!(
                                "model `{n}` was trained with fusion config {f}, the service fuses with {fp}"
                            ),
                        )),
                        None => warnings.push(format!("model `{n}` does not record its fusion config")),
                        _ => {}
                    }
                }
                let (base, extrapolated) = fused_base(ctx, location)?;
                (base, extrapolated, Some(fp))
            }
            FeatureMode::FixedFeatures => {
                let given = req
                    .base_features
                    .as_ref()
                    .ok_or_else(|| ApiError::bad_request("mode `fixed-features` requires base_features"))?;
                if let Some(extra) = given.keys().find(|k| !used.contains(*k) && *k != SUPPLY_COLUMN) {
                    return Err(ApiError::bad_request(format!(
                        "no requested model uses feature `{extra}`"
                    )));
                }
                if let Some(missing) = used.iter().find(|f| !given.contains_key(*f)) {
                    return Err(ApiError::bad_request(format!(
                        "base_features is missing `{missing}`"
                    )));
                }
                if let Some((n, _)) = given.iter().find(|(_, v)| !v.is_finite()) {
                    return Err(ApiError::bad_request(format!("base feature `{n}` is not finite")));
                }
                (given.clone(), !state.hull.contains(location), None)
            }
        };
    if extrapolated {
        if state.refuse_extrapolation {
            return Err(ApiError::unprocessable(
                "outside_boundary",
                "location lies outside the data boundary and extrapolation is disabled",
            ));
        }
        warnings.push("location lies outside the data boundary; predictions extrapolate".into());
    }
    let supply = supply_range(k)?;
    let curves = bundles
        .iter()
        .map(|(n, b)| {
            let c = supply_curve(n, b, location, &base, &supply)?;
            Ok(CurveOut {
                model: c.model,
                kind: c.kind,
                demand_trips_per_month: c.demand_trips_per_month,
            })
        })
        .collect::<Result<Vec<_>, CoreError>>()?;
    let base_features = base.into_iter().filter(|(k, _)| used.contains(k)).collect();
    Ok(WhatIfResponse {
        location: req.location,
        mode: req.mode,
        supply_cars: supply,
        curves,
        neighbourhood: neighbourhood_stats(&state.table, location)?,
        base_features,
        extrapolated,
        fusion_fingerprint: fingerprint,
        warnings,
    })
}

async fn whatif(
    State(state): State<Arc<AppState>>,
    body: Result<Json<WhatIfRequest>, JsonRejection>,
) -> Result<Json<WhatIfResponse>, ApiError> {
    let Json(req) = body?;
    blocking(move || whatif_blocking(&state, &req)).await.map(Json)
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.unwrap_or_else(|e| {
        Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            format!("worker failed: {e}"),
        ))
    })
}

/// Binds `addr` and serves until the process is stopped.
pub fn serve(state: AppState, addr: &str) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(Arc::new(state))).await
    })
}
