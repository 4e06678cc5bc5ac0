//! Command-line definitions and their implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use axum::http::StatusCode;
use carshare_core::dataset::io::{load_fusion_inputs, read_table, read_table_meta, write_table, Manifest};
use carshare_core::dataset::synth::{synth_generate, Preset};
use carshare_core::dataset::{FeatureTable, FusionContext};
use carshare_core::diagnostics::{
    ablate, evaluate, full_grid, metrics, render_text, write_csv, EvaluationRow, Layout, MoranSettings,
};
use carshare_core::forest::{shap_summary, write_beeswarm_csv, ForestParams};
use carshare_core::linear::{coefficient_rows, significance, write_coefficients_csv, Criterion, LocalFit};
use carshare_core::model::{
    fit_model, BandwidthSpec, FittedModel, ModelBundle, ModelKind, ModelSpec, SelectionStep,
};
use carshare_core::selection::write_selection_csv;
use carshare_core::spatial::Kernel;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::{CliError, CliResult, ErrorKind};
use crate::server::{self, ApiError, AppState, FeatureMode, LocationM, WhatIfRequest};

/// Table-sidecar note holding the fusion config fingerprint.
pub const FINGERPRINT_NOTE: &str = "fusion_fingerprint";

#[derive(Debug, Parser)]
#[command(
    name = "carshare",
    version,
    about = "Spatial demand models for station-based car sharing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fuse stations, trips, POIs, census and household data into a feature table.
    Fuse(FuseArgs),
    /// LASSO feature selection with optional local collinearity screening.
    Select(SelectArgs),
    /// Fit one model and write a model bundle.
    Fit(FitArgs),
    /// Compare models: in-sample fit, residual Moran's I and K-fold out-of-sample scores.
    Evaluate(EvaluateArgs),
    /// Sweep GWR bandwidth mode, criterion and kernel.
    Ablate(AblateArgs),
    /// Demand-versus-supply curves for a hypothetical station.
    Whatif(WhatifArgs),
    /// Serve the /v1 HTTP API.
    Serve(ServeArgs),
    /// Write a synthetic feature table from a named generator.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// `key = value` manifest naming the input CSVs (paths relative to it).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output feature table (CSV, with a `.meta.json` sidecar).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k_folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Features always kept, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub include: Vec<String>,
    /// Features never considered, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    /// Kernel for local collinearity screening; screening is off without it.
    #[arg(long)]
    pub screen_kernel: Option<Kernel>,
    /// Bandwidth for screening, `fixed:<m>` or `adaptive:<k>`.
    #[arg(long, default_value = "adaptive:50")]
    pub screen_bandwidth: BandwidthSpec,
    /// Selection report CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the table restricted to the selected features.
    #[arg(long)]
    pub table_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// ols, gwr, mgwr, rf, rf_coords or grf.
    #[arg(long, default_value = "gwr")]
    pub model: ModelKind,
    /// gaussian, exponential, bisquare or boxcar.
    #[arg(long, default_value = "bisquare")]
    pub kernel: Kernel,
    /// `fixed:auto`, `adaptive:auto`, `fixed:<m>` or `adaptive:<k>`.
    #[arg(long, default_value = "adaptive:auto")]
    pub bandwidth: BandwidthSpec,
    /// Bandwidth search criterion: aicc or cv.
    #[arg(long, default_value = "aicc")]
    pub criterion: Criterion,
    /// Fit linear models on raw rather than z-scored data (MGWR always standardizes).
    #[arg(long)]
    pub no_standardize: bool,
    /// Trees per forest; 500 for rf/rf_coords and 100 for grf when absent.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Features tried per split; ⌈p/3⌉ when absent.
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub min_leaf: usize,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// GRF neighbourhood size; ⌈n/4⌉ when absent.
    #[arg(long)]
    pub grf_k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Trees per GRF local forest when not given.
pub const GRF_DEFAULT_TREES: usize = 100;

impl ModelArgs {
    pub fn spec(&self) -> ModelSpec {
        let default_trees = match self.model {
            ModelKind::Grf => GRF_DEFAULT_TREES,
            _ => ForestParams::default().n_trees,
        };
        ModelSpec {
            kernel: self.kernel,
            bandwidth: self.bandwidth,
            criterion: self.criterion,
            standardize: !self.no_standardize,
            forest: ForestParams {
                n_trees: self.trees.unwrap_or(default_trees),
                mtry: self.mtry,
                min_leaf: self.min_leaf,
                max_depth: self.max_depth,
                ..ForestParams::default()
            },
            grf_k: self.grf_k,
            seed: self.seed,
            ..ModelSpec::new(self.model)
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Restrict to these features, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    /// Output model bundle.
    #[arg(long)]
    pub out: PathBuf,
    /// Local coefficient export (GWR/MGWR) with significance flags.
    #[arg(long)]
    pub coefficients: Option<PathBuf>,
    /// Significance level before multiple-testing adjustment.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// SHAP values per station and feature (rf/rf_coords).
    #[arg(long)]
    pub shap: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, default_value_t = 10)]
    pub k_folds: usize,
    /// Seed for fold assignment and Moran permutations.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 999)]
    pub permutations: usize,
    /// Neighbours in the row-standardized kNN weights for Moran's I.
    #[arg(long, default_value_t = 8)]
    pub moran_k: usize,
    /// Run LASSO selection inside every training fold.
    #[arg(long)]
    pub select: bool,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ReportArgs {
    fn moran(&self) -> MoranSettings {
        MoranSettings {
            k_neighbours: self.moran_k,
            permutations: self.permutations,
            seed: self.seed,
        }
    }

    fn selection(&self) -> Option<SelectionStep> {
        self.select.then(|| SelectionStep {
            k_folds: self.k_folds,
            seed: self.seed,
            include: Vec::new(),
            exclude: Vec::new(),
            screen: None,
        })
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub table: PathBuf,
    /// Model kinds with default settings, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<ModelKind>,
    /// Evaluate the settings stored in these bundles on the table.
    #[arg(long = "bundle")]
    pub bundles: Vec<PathBuf>,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ServiceArgs {
    /// Model bundle as `name=path` or `path` (named after the file stem).
    #[arg(long = "bundle", required = true)]
    pub bundles: Vec<String>,
    /// Fused table of existing stations.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Fusion manifest; enables auto-fuse at new locations.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Refuse locations outside the data boundary instead of flagging them.
    #[arg(long)]
    pub refuse_extrapolation: bool,
}

#[derive(Debug, Args)]
pub struct WhatifArgs {
    #[command(flatten)]
    pub service: ServiceArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub x: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub y: f64,
    /// Hold non-supply features at these values (`name=value`) instead of fusing.
    #[arg(long = "base", value_delimiter = ',')]
    pub base: Vec<String>,
    /// Hold non-supply features at this existing station's values.
    #[arg(long)]
    pub base_station: Option<String>,
    #[arg(long, default_value_t = server::DEFAULT_SUPPLY_MAX)]
    pub supply_max: usize,
    /// Restrict to these bundle names, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    /// Curve CSV: one row per supply value, one column per model.
    #[arg(long)]
    pub out: PathBuf,
    /// Full response (curves, neighbourhood, flags) as JSON for plotting.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub service: ServiceArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// two-cluster, multiscale or saturating-supply.
    #[arg(long)]
    pub preset: Preset,
    /// Stations; the preset's default when absent.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Generating coefficients and noise-free signal as JSON.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fuse(a) => fuse(&a),
        Command::Select(a) => select(&a),
        Command::Fit(a) => fit(&a),
        Command::Evaluate(a) => evaluate_cmd(&a),
        Command::Ablate(a) => ablate_cmd(&a),
        Command::Whatif(a) => whatif(&a),
        Command::Serve(a) => serve(&a),
        Command::Synth(a) => synth(&a),
    }
}

fn print_json(v: serde_json::Value) {
    println!("{v}");
}

fn load_table(path: &Path) -> CliResult<FeatureTable> {
    read_table(path).map_err(|e| CliError::reading(path, e))
}

fn fingerprint_of(path: &Path) -> CliResult<Option<String>> {
    let meta = read_table_meta(path).map_err(|e| CliError::reading(path, e))?;
    Ok(meta.and_then(|m| m.notes.get(FINGERPRINT_NOTE).cloned()))
}

fn load_manifest(path: &Path) -> CliResult<Manifest> {
    Manifest::load(path).map_err(|e| CliError::reading(path, e))
}

fn fusion_context(path: &Path) -> CliResult<FusionContext> {
    let manifest = load_manifest(path)?;
    let (inputs, cfg, _) = load_fusion_inputs(&manifest).map_err(|e| CliError::reading(path, e))?;
    Ok(FusionContext::new(inputs, cfg)?)
}

fn fuse(a: &FuseArgs) -> CliResult<()> {
    let manifest = load_manifest(&a.manifest)?;
    let (inputs, cfg, cleaning) =
        load_fusion_inputs(&manifest).map_err(|e| CliError::reading(&a.manifest, e))?;
    let ctx = FusionContext::new(inputs, cfg)?;
    let out = ctx.fuse()?;
    let mut notes = BTreeMap::new();
    notes.insert(FINGERPRINT_NOTE.to_string(), out.config_fingerprint.clone());
    if out.partition.default_boundary {
        notes.insert(
            "voronoi_boundary".to_string(),
            "default: station hull buffered by the 95th percentile nearest-neighbour distance".to_string(),
        );
    }
    notes.insert("trip_cleaning".to_string(), serde_json::to_string(&cleaning)?);
    write_table(&out.table, &a.out, &notes)?;
    print_json(json!({
        "table": a.out,
        "n_stations": out.table.n(),
        "features": out.table.feature_names(),
        "fusion_fingerprint": out.config_fingerprint,
        "default_boundary": out.partition.default_boundary,
        "trip_cleaning": cleaning,
    }));
    Ok(())
}

fn select(a: &SelectArgs) -> CliResult<()> {
    let table = load_table(&a.table)?;
    let step = SelectionStep {
        k_folds: a.k_folds,
        seed: a.seed,
        include: a.include.clone(),
        exclude: a.exclude.clone(),
        screen: a.screen_kernel.map(|k| {
            (
                k,
                a.screen_bandwidth
                    .given()
                    .unwrap_or(carshare_core::spatial::Bandwidth::Adaptive(50)),
            )
        }),
    };
    if a.screen_kernel.is_some() && a.screen_bandwidth.value.is_none() {
        return Err(CliError::usage(
            "--screen-bandwidth needs a value, e.g. adaptive:50",
        ));
    }
    let sel = step.run(&table)?;
    write_selection_csv(&sel, &a.out)?;
    let chosen = sel.selected();
    if let Some(path) = &a.table_out {
        let notes = read_table_meta(&a.table)?.map(|m| m.notes).unwrap_or_default();
        write_table(&table.destandardize().select(&chosen)?, path, &notes)?;
    }
    print_json(json!({
        "lambda": sel.lambda,
        "lambda_max": sel.lambda_max,
        "selected": chosen,
        "features": sel.features,
    }));
    Ok(())
}

fn fit(a: &FitArgs) -> CliResult<()> {
    let mut table = load_table(&a.table)?.destandardize();
    if !a.features.is_empty() {
        table = table.select(&a.features)?;
    }
    let spec = a.model.spec();
    let bundle = fit_model(&table, &spec, fingerprint_of(&a.table)?)?;
    bundle.save(&a.out)?;
    let ins = bundle.in_sample(&table)?;
    let y: Vec<f64> = table.y.iter().copied().collect();
    let m = metrics(&y, &ins.fitted, ins.tr_s, None)?;
    let mut summary = json!({
        "bundle": a.out,
        "kind": bundle.kind,
        "n": table.n(),
        "features": bundle.feature_names(),
        "r2": m.r2,
        "adjusted_r2": m.adjusted_r2,
        "rmse": m.rmse,
        "aicc": ins.aicc,
        "loocv_r2": ins.loocv_r2,
    });
    let local: Option<&dyn LocalFit> = match &bundle.model {
        FittedModel::Gwr(f) => {
            summary["bandwidth"] = json!(f.bandwidth.to_string());
            Some(f)
        }
        FittedModel::Mgwr(f) => {
            summary["bandwidths"] = json!(f.names.iter().zip(&f.bandwidths).collect::<BTreeMap<_, _>>());
            Some(f)
        }
        _ => None,
    };
    if let Some(path) = &a.coefficients {
        let fit = local.ok_or_else(|| CliError::usage("--coefficients needs a gwr or mgwr model"))?;
        let report = significance(fit, a.alpha)?;
        write_coefficients_csv(&coefficient_rows(fit, &table.station_ids, &report)?, path)?;
        summary["significance"] = serde_json::to_value(&report.features)?;
    }
    if let Some(path) = &a.shap {
        let (model, t) = match &bundle.model {
            FittedModel::Rf(m) => (m, table.clone()),
            FittedModel::RfCoords(m) => (m, table.with_coordinates()),
            _ => return Err(CliError::usage("--shap needs an rf or rf_coords model")),
        };
        let s = shap_summary(model, &t)?;
        write_beeswarm_csv(&s, path)?;
        summary["shap_importance"] = json!(s.importance);
    }
    print_json(summary);
    Ok(())
}

fn emit_report(rows: &[EvaluationRow], layout: Layout, r: &ReportArgs) -> CliResult<()> {
    match (r.format, &r.out) {
        (Format::Csv, Some(path)) => write_csv(rows, layout, path)?,
        (Format::Csv, None) => return Err(CliError::usage("--format csv needs --out")),
        (Format::Text, out) => write_or_print(&render_text(rows, layout), out.as_deref())?,
        (Format::Json, out) => write_or_print(&(serde_json::to_string_pretty(rows)? + "\n"), out.as_deref())?,
    }
    Ok(())
}

fn write_or_print(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs) -> CliResult<()> {
    if a.models.is_empty() && a.bundles.is_empty() {
        return Err(CliError::usage("give --models and/or --bundle"));
    }
    let table = load_table(&a.table)?.destandardize();
    let r = &a.report;
    let selection = r.selection();
    let specs: Vec<ModelSpec> = a
        .models
        .iter()
        .map(|&k| ModelArgs {
            model: k,
            ..default_model_args()
        })
        .map(|m| m.spec())
        .collect();
    let mut rows = evaluate(&table, &specs, selection.as_ref(), r.k_folds, r.seed, &r.moran());
    for path in &a.bundles {
        let bundle = ModelBundle::load(path).map_err(|e| CliError::loading_bundle(path, e))?;
        let t = table.select(&bundle.feature_names()).map_err(|e| {
            CliError::new(
                ErrorKind::Schema,
                format!("{}: table does not fit the model: {e}", path.display()),
            )
        })?;
        rows.extend(evaluate(
            &t,
            std::slice::from_ref(&bundle.spec),
            None,
            r.k_folds,
            r.seed,
            &r.moran(),
        ));
    }
    emit_report(&rows, Layout::Comparison, r)
}

fn default_model_args() -> ModelArgs {
    ModelArgs {
        model: ModelKind::Gwr,
        kernel: Kernel::Bisquare,
        bandwidth: BandwidthSpec::auto(carshare_core::linear::BandwidthMode::Adaptive),
        criterion: Criterion::Aicc,
        no_standardize: false,
        trees: None,
        mtry: None,
        min_leaf: 5,
        max_depth: None,
        grf_k: None,
        seed: 0,
    }
}

fn ablate_cmd(a: &AblateArgs) -> CliResult<()> {
    let table = load_table(&a.table)?.destandardize();
    let r = &a.report;
    let rows = ablate(
        &table,
        &full_grid(),
        r.selection().as_ref(),
        r.k_folds,
        r.seed,
        &r.moran(),
    )?;
    emit_report(&rows, Layout::Ablation, r)
}

/// `name=path` or `path`.
fn parse_bundle_arg(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(arg);
            let name = p
                .file_stem()
                .map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
            (name, p)
        }
    }
}

pub fn build_state(a: &ServiceArgs) -> CliResult<AppState> {
    let mut bundles = BTreeMap::new();
    for arg in &a.bundles {
        let (name, path) = parse_bundle_arg(arg);
        let b = ModelBundle::load(&path).map_err(|e| CliError::loading_bundle(&path, e))?;
        if bundles.insert(name.clone(), b).is_some() {
            return Err(CliError::usage(format!("model name `{name}` given twice")));
        }
    }
    let fusion = a.manifest.as_deref().map(fusion_context).transpose()?;
    let table = match (&a.table, &fusion) {
        (Some(p), _) => load_table(p)?,
        (None, Some(ctx)) => ctx.fuse()?.table,
        (None, None) => return Err(CliError::usage("give --table or --manifest")),
    };
    AppState::new(bundles, table, fusion, a.refuse_extrapolation).map_err(|e| match e {
        carshare_core::Error::Schema(m) => CliError::model(m),
        other => other.into(),
    })
}

fn api_to_cli(e: ApiError) -> CliError {
    let kind = match e.status {
        StatusCode::NOT_FOUND => ErrorKind::Model,
        StatusCode::BAD_REQUEST => ErrorKind::Schema,
        StatusCode::UNPROCESSABLE_ENTITY if e.code == "unsupported" => ErrorKind::Model,
        _ => ErrorKind::Other,
    };
    CliError::new(kind, e.message)
}

fn whatif(a: &WhatifArgs) -> CliResult<()> {
    let state = build_state(&a.service)?;
    let mut base = BTreeMap::new();
    if let Some(id) = &a.base_station {
        let t = &state.table;
        let i = t
            .station_ids
            .iter()
            .position(|s| s == id)
            .ok_or_else(|| CliError::usage(format!("no station `{id}` in the table")))?;
        base.extend(t.feature_names().into_iter().zip(t.row(i)));
    }
    for kv in &a.base {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--base expects name=value, got `{kv}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("--base {k}: `{v}` is not a number")))?;
        base.insert(k.trim().to_string(), v);
    }
    let fixed = !base.is_empty();
    let models = (!a.models.is_empty()).then(|| a.models.clone());
    if fixed {
        // Keep only what the chosen models use so a station row can seed any subset.
        let names = models
            .clone()
            .unwrap_or_else(|| state.bundles.keys().cloned().collect());
        let used: std::collections::BTreeSet<String> = names
            .iter()
            .filter_map(|n| state.bundles.get(n))
            .flat_map(|b| b.feature_names())
            .collect();
        base.retain(|k, _| used.contains(k));
    }
    let req = WhatIfRequest {
        location: LocationM { x_m: a.x, y_m: a.y },
        mode: if fixed {
            FeatureMode::FixedFeatures
        } else {
            FeatureMode::AutoFuse
        },
        base_features: fixed.then_some(base),
        supply_max_cars: Some(a.supply_max),
        models,
    };
    let resp = server::whatif_blocking(&state, &req).map_err(api_to_cli)?;
    let mut w = csv::Writer::from_path(&a.out)?;
    let mut header = vec!["supply_cars".to_string()];
    header.extend(
        resp.curves
            .iter()
            .map(|c| format!("{}_demand_trips_per_month", c.model)),
    );
    w.write_record(&header)?;
    for (r, s) in resp.supply_cars.iter().enumerate() {
        let mut rec = vec![s.to_string()];
        rec.extend(
            resp.curves
                .iter()
                .map(|c| c.demand_trips_per_month[r].map_or(String::new(), |v| v.to_string())),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    if let Some(p) = &a.json {
        fs::write(p, serde_json::to_string_pretty(&resp)?)?;
    }
    print_json(json!({
        "curve": a.out,
        "models": resp.curves.iter().map(|c| c.model.clone()).collect::<Vec<_>>(),
        "extrapolated": resp.extrapolated,
        "neighbourhood": resp.neighbourhood,
        "warnings": resp.warnings,
    }));
    Ok(())
}

fn serve(a: &ServeArgs) -> CliResult<()> {
    let state = build_state(&a.service)?;
    server::serve(state, &a.addr)?;
    Ok(())
}

fn synth(a: &SynthArgs) -> CliResult<()> {
    let n = a.n.unwrap_or(a.preset.default_n());
    let (table, truth) = synth_generate(&a.preset.spec(n), a.seed)?;
    let mut notes = BTreeMap::new();
    notes.insert("synthetic_preset".to_string(), a.preset.as_str().to_string());
    notes.insert("synthetic_seed".to_string(), a.seed.to_string());
    write_table(&table, &a.out, &notes)?;
    if let Some(p) = &a.truth {
        fs::write(p, serde_json::to_string(&truth)?)?;
    }
    print_json(json!({
        "table": a.out,
        "preset": a.preset.as_str(),
        "n": n,
        "seed": a.seed,
        "features": table.feature_names(),
    }));
    Ok(())
}
