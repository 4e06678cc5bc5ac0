mod common;

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use carshare_cli::commands::{build_state, ServiceArgs};
use carshare_cli::server::{
    router, AppState, HealthResponse, PredictResponse, StationsResponse, WhatIfResponse,
};
use carshare_core::dataset::io::Manifest;
use carshare_core::dataset::synth::{synth_generate, Preset};
use carshare_core::dataset::{FeatureTable, FusionContext, SUPPLY_COLUMN};
use carshare_core::forest::ForestParams;
use carshare_core::model::{fit_model, FittedModel, ModelBundle, ModelKind, ModelSpec};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    table: FeatureTable,
    bundles: BTreeMap<String, ModelBundle>,
}

fn small_forest() -> ForestParams {
    ForestParams {
        n_trees: 40,
        ..ForestParams::default()
    }
}

/// Saturating-supply table with GWR, RF and MGWR bundles.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let (table, _) = synth_generate(&Preset::SaturatingSupply.spec(150), 3).unwrap();
        let mut bundles = BTreeMap::new();
        bundles.insert(
            "gwr".to_string(),
            fit_model(&table, &ModelSpec::new(ModelKind::Gwr), None).unwrap(),
        );
        let rf = ModelSpec {
            forest: small_forest(),
            seed: 4,
            ..ModelSpec::new(ModelKind::Rf)
        };
        bundles.insert("rf".to_string(), fit_model(&table, &rf, None).unwrap());
        bundles.insert(
            "mgwr".to_string(),
            fit_model(&table, &ModelSpec::new(ModelKind::Mgwr), None).unwrap(),
        );
        Fixture { table, bundles }
    })
}

fn app_with(refuse: bool) -> axum::Router {
    let f = fixture();
    router(Arc::new(
        AppState::new(f.bundles.clone(), f.table.clone(), None, refuse).unwrap(),
    ))
}

fn app() -> axum::Router {
    app_with(false)
}

async fn send(
    app: axum::Router,
    method: &str,
    uri: &str,
    body: Option<String>,
) -> (StatusCode, Value, String) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map_or_else(Body::empty, Body::from)).unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    let value = serde_json::from_str(&text).unwrap_or(Value::Null);
    (status, value, text)
}

async fn post(app: axum::Router, uri: &str, body: Value) -> (StatusCode, Value, String) {
    send(app, "POST", uri, Some(body.to_string())).await
}

fn features_of(table: &FeatureTable, i: usize) -> Value {
    let m: BTreeMap<String, f64> = table.feature_names().into_iter().zip(table.row(i)).collect();
    json!(m)
}

fn base_without_supply(table: &FeatureTable, i: usize) -> Value {
    let mut m: BTreeMap<String, f64> = table.feature_names().into_iter().zip(table.row(i)).collect();
    m.remove(SUPPLY_COLUMN);
    json!(m)
}

#[tokio::test]
async fn health_lists_models() {
    let (status, v, _) = send(app(), "GET", "/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let h: HealthResponse = serde_json::from_value(v).unwrap();
    assert_eq!(h.status, "ok");
    assert!(!h.auto_fuse);
    let names: Vec<&str> = h.models.iter().map(|m| m.name.as_str()).collect();
    assert_eq!(names, ["gwr", "mgwr", "rf"]);
    assert!(!h.models[1].predicts_out_of_sample);
}

#[tokio::test]
async fn stations_carry_units_in_field_names() {
    let f = fixture();
    let (status, v, _) = send(app(), "GET", "/v1/stations", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(v["stations"][0].get("supply_cars").is_some());
    assert!(v["stations"][0].get("demand_trips_per_month").is_some());
    let s: StationsResponse = serde_json::from_value(v).unwrap();
    assert_eq!(s.n_stations, f.table.n());
    let si = f.table.column_index(SUPPLY_COLUMN).unwrap();
    assert_eq!(s.stations[7].supply_cars, Some(f.table.x[(7, si)]));
    assert_eq!(s.stations[7].demand_trips_per_month, f.table.y[7]);
}

#[tokio::test]
async fn predict_on_training_rows_reproduces_fits() {
    let f = fixture();
    let rows: Vec<Value> = (0..10)
        .map(|i| {
            json!({
                "x_m": f.table.locations[i].x,
                "y_m": f.table.locations[i].y,
                "features": features_of(&f.table, i),
            })
        })
        .collect();
    let (status, v, _) = post(app(), "/v1/predict", json!({"model": "gwr", "rows": rows})).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let p: PredictResponse = serde_json::from_value(v).unwrap();
    let stored = f.bundles["gwr"].in_sample(&f.table).unwrap().fitted;
    for i in 0..10 {
        assert!((p.demand_trips_per_month[i].unwrap() - stored[i]).abs() < 1e-9);
    }

    let (status, v, _) = post(app(), "/v1/predict", json!({"model": "rf", "rows": rows})).await;
    assert_eq!(status, StatusCode::OK);
    let p: PredictResponse = serde_json::from_value(v).unwrap();
    let FittedModel::Rf(m) = &f.bundles["rf"].model else {
        panic!()
    };
    for i in 0..10 {
        assert_eq!(
            p.demand_trips_per_month[i].unwrap(),
            m.predict_row(&f.table.row(i))
        );
    }
}

#[tokio::test]
async fn predict_errors() {
    let f = fixture();
    let row = json!({"x_m": f.table.locations[0].x, "y_m": f.table.locations[0].y, "features": features_of(&f.table, 0)});

    let (status, v, _) = post(app(), "/v1/predict", json!({"model": "nope", "rows": [row]})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_model");

    let (status, v, _) = post(app(), "/v1/predict", json!({"model": "mgwr", "rows": [row]})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["message"].as_str().unwrap().contains("out-of-sample"));

    let mut missing = row.clone();
    missing["features"].as_object_mut().unwrap().remove(SUPPLY_COLUMN);
    let (status, _, _) = post(app(), "/v1/predict", json!({"model": "gwr", "rows": [missing]})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let mut extra = row.clone();
    extra["features"]["bogus"] = json!(1.0);
    let (status, _, _) = post(app(), "/v1/predict", json!({"model": "gwr", "rows": [extra]})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, v, _) = send(app(), "POST", "/v1/predict", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "bad_request");

    let (status, _, _) = post(
        app(),
        "/v1/predict",
        json!({"model": "gwr", "rows": [row], "x": 1}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _, _) = post(app(), "/v1/predict", json!({"model": "gwr", "rows": []})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn whatif_fixed_features_curves() {
    let f = fixture();
    let loc = f.table.locations[5];
    let req = json!({
        "location": {"x_m": loc.x, "y_m": loc.y},
        "mode": "fixed-features",
        "base_features": base_without_supply(&f.table, 5),
        "supply_max_cars": 15,
    });
    let (status, v, text) = post(app(), "/v1/whatif", req.clone()).await;
    assert_eq!(status, StatusCode::OK, "{text}");
    let r: WhatIfResponse = serde_json::from_value(v).unwrap();
    assert_eq!(r.supply_cars, (1..=15).map(f64::from).collect::<Vec<_>>());
    // MGWR is skipped by default.
    let names: Vec<&str> = r.curves.iter().map(|c| c.model.as_str()).collect();
    assert_eq!(names, ["gwr", "rf"]);
    for c in &r.curves {
        assert_eq!(c.demand_trips_per_month.len(), 15);
    }
    let g: Vec<f64> = r.curves[0]
        .demand_trips_per_month
        .iter()
        .map(|v| v.unwrap())
        .collect();
    let d0 = g[1] - g[0];
    assert!(g.windows(2).all(|w| ((w[1] - w[0]) - d0).abs() < 1e-9));
    let ymax = f.table.y.max();
    assert!(r.curves[1]
        .demand_trips_per_month
        .iter()
        .all(|v| v.unwrap() <= ymax));
    assert!(!r.extrapolated);
    assert!(r.fusion_fingerprint.is_none());

    let near = (0..f.table.n())
        .filter(|&i| f.table.locations[i].dist(&loc) <= 3000.0)
        .count();
    assert_eq!(r.neighbourhood.n_stations, near);
    assert_eq!(r.neighbourhood.radius_m, 3000.0);

    let (_, _, again) = post(app(), "/v1/whatif", req).await;
    assert_eq!(text, again);
}

#[tokio::test]
async fn whatif_errors() {
    let f = fixture();
    let loc = f.table.locations[0];
    let base = base_without_supply(&f.table, 0);
    let at = json!({"x_m": loc.x, "y_m": loc.y});

    // No fusion inputs loaded, so the default mode cannot run.
    let (status, v, _) = post(app(), "/v1/whatif", json!({"location": at})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "auto_fuse_unavailable");

    let (status, _, _) = post(
        app(),
        "/v1/whatif",
        json!({"location": at, "mode": "fixed-features", "base_features": base, "models": ["mgwr"]}),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, _, _) = post(
        app(),
        "/v1/whatif",
        json!({"location": at, "mode": "fixed-features", "base_features": base, "models": ["lm"]}),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _, _) = post(
        app(),
        "/v1/whatif",
        json!({"location": at, "mode": "fixed-features"}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _, _) = post(
        app(),
        "/v1/whatif",
        json!({"location": at, "mode": "fixed-features", "base_features": base, "supply_max_cars": 0}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _, _) = post(app(), "/v1/whatif", json!({"location": {"x_m": 1.0}})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn whatif_outside_hull_flags_or_refuses() {
    let f = fixture();
    let far = json!({"x_m": f.table.locations[0].x + 1e6, "y_m": f.table.locations[0].y});
    let req = json!({
        "location": far,
        "mode": "fixed-features",
        "base_features": base_without_supply(&f.table, 0),
        "models": ["rf"],
    });
    let (status, v, _) = post(app(), "/v1/whatif", req.clone()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["extrapolated"], true);
    assert!(!v["warnings"].as_array().unwrap().is_empty());
    assert_eq!(v["neighbourhood"]["n_stations"], 0);

    let (status, v, _) = post(app_with(true), "/v1/whatif", req).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "outside_boundary");
}

struct Fused {
    _dir: tempfile::TempDir,
    manifest: std::path::PathBuf,
    table: FeatureTable,
    fingerprint: String,
}

fn fused() -> &'static Fused {
    static F: OnceLock<Fused> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let manifest = common::write_raw_inputs(dir.path(), 80, 11);
        let m = Manifest::load(&manifest).unwrap();
        let (inputs, cfg, _) = carshare_core::dataset::io::load_fusion_inputs(&m).unwrap();
        let ctx = FusionContext::new(inputs, cfg).unwrap();
        let out = ctx.fuse().unwrap();
        Fused {
            _dir: dir,
            manifest,
            table: out.table,
            fingerprint: out.config_fingerprint,
        }
    })
}

fn fused_state(fingerprint: Option<String>, refuse: bool) -> AppState {
    let f = fused();
    let dir = tempfile::tempdir().unwrap();
    let rf = ModelSpec {
        forest: small_forest(),
        ..ModelSpec::new(ModelKind::Rf)
    };
    let b = fit_model(&f.table, &rf, fingerprint).unwrap();
    let path = dir.path().join("rf.bundle");
    b.save(&path).unwrap();
    let ols = fit_model(
        &f.table,
        &ModelSpec::new(ModelKind::Ols),
        Some(f.fingerprint.clone()),
    )
    .unwrap();
    let ols_path = dir.path().join("ols.bundle");
    ols.save(&ols_path).unwrap();
    build_state(&ServiceArgs {
        bundles: vec![
            format!("rf={}", path.display()),
            format!("ols={}", ols_path.display()),
        ],
        table: None,
        manifest: Some(f.manifest.clone()),
        refuse_extrapolation: refuse,
    })
    .unwrap()
}

#[tokio::test]
async fn whatif_auto_fuse_echoes_fingerprint() {
    let f = fused();
    let app = router(Arc::new(fused_state(Some(f.fingerprint.clone()), false)));
    let (_, h, _) = send(app.clone(), "GET", "/v1/health", None).await;
    assert_eq!(h["auto_fuse"], true);

    let (cx, cy) = (common::ORIGIN.0 + 5_000.0, common::ORIGIN.1 + 5_000.0);
    let (status, v, text) = post(
        app.clone(),
        "/v1/whatif",
        json!({"location": {"x_m": cx, "y_m": cy}}),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{text}");
    let r: WhatIfResponse = serde_json::from_value(v).unwrap();
    assert_eq!(r.fusion_fingerprint.as_deref(), Some(f.fingerprint.as_str()));
    assert!(!r.extrapolated);
    assert_eq!(r.supply_cars.len(), 20);
    let ols: Vec<f64> = r.curves[0]
        .demand_trips_per_month
        .iter()
        .map(|v| v.unwrap())
        .collect();
    assert_eq!(r.curves[0].model, "ols");
    let d = ols[1] - ols[0];
    assert!(ols.windows(2).all(|w| ((w[1] - w[0]) - d).abs() < 1e-9));
    // Every non-supply feature was fused at the location.
    assert_eq!(r.base_features.len(), f.table.p() - 1);

    let far = json!({"location": {"x_m": cx + 50_000.0, "y_m": cy}});
    let (status, v, _) = post(app, "/v1/whatif", far.clone()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["extrapolated"], true);

    let strict = router(Arc::new(fused_state(Some(f.fingerprint.clone()), true)));
    let (status, _, _) = post(strict, "/v1/whatif", far).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn whatif_auto_fuse_rejects_other_fusion_config() {
    let app = router(Arc::new(fused_state(Some("0".repeat(64)), false)));
    let loc = json!({"location": {"x_m": common::ORIGIN.0 + 4_000.0, "y_m": common::ORIGIN.1 + 4_000.0}});
    let (status, v, _) = post(app, "/v1/whatif", loc).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "fusion_mismatch");
}
