//! Batch front end for the biomass / soil-carbon estimation pipeline.
//!
//! Every subcommand reads a JSON configuration (see [`config`]), writes its
//! products under `--out`, and exits 0 only when everything requested was
//! written. Outputs are deterministic: identical inputs, seed and
//! configuration produce byte-identical files regardless of `--threads`.

mod config;

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use terracarbon::dataset::registry::{find_spec, ModelSpec, Target};
use terracarbon::dataset::{extract_samples, SampleTable};
use terracarbon::ensembles::{fit, EnsembleModel, EnsembleParams, Technique};
use terracarbon::grid::{read_grid, write_grid, GeoTransform, Grid, GridStack};
use terracarbon::indices::{compute_index, IndexKind};
use terracarbon::jsonio::{fmt_real, write_json_file};
use terracarbon::mapping::{
    error_map, predict_map, scale_grid, total_carbon_map, write_quicklook,
};
use terracarbon::selection::{
    eliminate_collinear, EliminationStep, DEFAULT_R_THRESHOLD, DEFAULT_VIF_THRESHOLD,
};
use terracarbon::synth::{write_scene, SceneFile, SceneParams};
use terracarbon::tuning::{
    baseline_delta, cross_validate, default_grid, grid_results_csv, grid_search, EvalReport,
    FeatureImportance, REPORT_VERSION,
};

use config::{Config, InputEntry, LoadedConfig, ModelConfig, Reference, OUTPUT_VERSION};

#[derive(Parser)]
#[command(
    name = "terracarbon",
    version,
    about = "Joint above-ground biomass and soil organic carbon estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    /// Seed override; takes precedence over the configuration file.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,

    /// Worker threads, 0 = auto. Falls back to the TERRACARBON_THREADS
    /// environment variable when the flag is absent.
    #[arg(long, global = true, value_name = "INT")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Resample the configured inputs onto the reference geometry and
    /// write the aligned band stack plus its manifest.
    Stack,
    /// Compute NDVI, EVI and SATVI over the configured stack.
    Indices,
    /// Extract the sample table for the configured model spec as CSV.
    Dataset,
    /// Run collinearity elimination; write the trace and the reduced table.
    Select,
    /// Grid-search, cross-validate and fit the configured model.
    Train,
    /// Cross-validate one explicit parameter block.
    Evaluate,
    /// Tabulate percentage R² differences of candidate reports against a
    /// baseline report.
    Compare,
    /// Predict wall-to-wall maps from trained models; write error and
    /// total-carbon surfaces where inputs allow.
    Map,
    /// Generate the bundled synthetic scene and a ready-to-train
    /// configuration.
    Synth,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    match cli.command {
        Command::Stack => cmd_stack(&cli),
        Command::Indices => cmd_indices(&cli),
        Command::Dataset => cmd_dataset(&cli),
        Command::Select => cmd_select(&cli),
        Command::Train => cmd_train(&cli),
        Command::Evaluate => cmd_evaluate(&cli),
        Command::Compare => cmd_compare(&cli),
        Command::Map => cmd_map(&cli),
        Command::Synth => cmd_synth(&cli),
    }
}

/// Install the global thread pool: `--threads` wins, then
/// `TERRACARBON_THREADS`, then one thread per core. 0 means auto.
fn init_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("TERRACARBON_THREADS") {
            Ok(text) => text
                .trim()
                .parse::<usize>()
                .with_context(|| format!("TERRACARBON_THREADS {text:?} is not a thread count"))?,
            Err(_) => 0,
        },
    };
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot install the thread pool")?;
    }
    Ok(())
}

fn require_config(cli: &Cli) -> Result<LoadedConfig> {
    let path = cli
        .config
        .as_deref()
        .context("missing --config <PATH> (this subcommand reads a configuration file)")?;
    LoadedConfig::read(path)
}

/// Read every configured input and rename it to its configured band name.
fn load_inputs(cfg: &LoadedConfig) -> Result<Vec<Grid>> {
    if cfg.config.inputs.is_empty() {
        bail!("config key inputs is missing or empty");
    }
    cfg.config
        .inputs
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let path = cfg.resolve(&entry.path);
            let mut grid = read_grid(&path)
                .with_context(|| format!("config key inputs[{i}].path ({})", path.display()))?;
            grid.name = entry.name.clone();
            Ok(grid)
        })
        .collect()
}

/// Assemble the aligned stack: resample onto `reference` when one is
/// configured, otherwise require the inputs to align as-is.
fn build_stack(cfg: &LoadedConfig) -> Result<GridStack> {
    let grids = load_inputs(cfg)?;
    match &cfg.config.reference {
        Some(r) => {
            let transform =
                GeoTransform::new(r.origin_x, r.origin_y, r.pixel_w, r.pixel_h, &r.crs);
            Ok(terracarbon::grid::stack(grids, &transform, r.width, r.height)?)
        }
        None => Ok(GridStack::new(grids)?),
    }
}

fn effective_seed(cli: &Cli, config_seed: Option<u64>, key: &str) -> Result<u64> {
    cli.seed
        .or(config_seed)
        .with_context(|| format!("config key {key} is missing and no --seed was given"))
}

/// Parse the model section and extract its sample table from the stack.
fn model_table(
    cli: &Cli,
    cfg: &LoadedConfig,
) -> Result<(SampleTable, &'static ModelSpec, Technique)> {
    let mc = cfg.model()?;
    let target = Target::from_str(&mc.target)
        .with_context(|| format!("config key model.target ({:?})", mc.target))?;
    let spec = find_spec(&mc.spec, target)
        .with_context(|| format!("config key model.spec ({:?})", mc.spec))?;
    let technique = Technique::from_str(&mc.technique)
        .with_context(|| format!("config key model.technique ({:?})", mc.technique))?;
    let stack = build_stack(cfg)?;
    let target_grid = stack.get(target.band_name()).with_context(|| {
        format!(
            "no input is named {:?} (config key inputs must include the target band)",
            target.band_name()
        )
    })?;
    let table = extract_samples(&stack, spec, target_grid)?;
    let _ = cli;
    Ok((table, spec, technique))
}

/// Importance entries largest-first; name breaks exact ties so report
/// ordering never depends on map iteration order.
fn ranked_importance(model: &EnsembleModel) -> Vec<FeatureImportance> {
    let importance = model.importance();
    let mut entries: Vec<FeatureImportance> = model
        .feature_names
        .iter()
        .cloned()
        .zip(importance.percent)
        .map(|(name, percent)| FeatureImportance { name, percent })
        .collect();
    entries.sort_by(|a, b| b.percent.total_cmp(&a.percent).then_with(|| a.name.cmp(&b.name)));
    entries
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn file_stem(spec: &ModelSpec, technique: Technique) -> String {
    format!("{}_{}_{}", spec.name, spec.target.band_name(), technique.name())
}

/// Manifest written next to a stacked band set.
#[derive(Serialize)]
struct StackManifest {
    version: u32,
    width: usize,
    height: usize,
    crs: String,
    origin_x: f64,
    origin_y: f64,
    pixel_w: f64,
    pixel_h: f64,
    files: Vec<SceneFile>,
}

fn cmd_stack(cli: &Cli) -> Result<()> {
    let cfg = require_config(cli)?;
    if cfg.config.reference.is_none() {
        bail!("config key reference is missing (stack needs a target geometry)");
    }
    let stack = build_stack(&cfg)?;

    let mut files = Vec::with_capacity(stack.len());
    for grid in stack.grids() {
        let file = format!("{}.tif", grid.name);
        write_grid(grid, &cli.out.join(&file))?;
        let role = cfg
            .config
            .inputs
            .iter()
            .find(|e| e.name == grid.name)
            .map(|e| e.role.clone())
            .unwrap_or_else(|| "predictor".to_string());
        files.push(SceneFile {
            name: grid.name.clone(),
            path: file,
            role,
        });
    }
    let t = stack.transform();
    let manifest = StackManifest {
        version: OUTPUT_VERSION,
        width: stack.width(),
        height: stack.height(),
        crs: t.crs.clone(),
        origin_x: t.origin_x,
        origin_y: t.origin_y,
        pixel_w: t.pixel_w,
        pixel_h: t.pixel_h,
        files,
    };
    write_json_file(&cli.out.join("stack.json"), &manifest)?;
    println!(
        "stacked {} bands at {}x{} -> {}",
        stack.len(),
        stack.width(),
        stack.height(),
        cli.out.display()
    );
    Ok(())
}

fn cmd_indices(cli: &Cli) -> Result<()> {
    let cfg = require_config(cli)?;
    let stack = build_stack(&cfg)?;
    for kind in IndexKind::ALL {
        let index = compute_index(kind, &stack)?;
        write_grid(&index, &cli.out.join(format!("{}.tif", index.name)))?;
    }
    println!("wrote NDVI, EVI, SATVI -> {}", cli.out.display());
    Ok(())
}

fn cmd_dataset(cli: &Cli) -> Result<()> {
    let cfg = require_config(cli)?;
    let (table, spec, _) = model_table(cli, &cfg)?;
    let file = cli.out.join(format!(
        "dataset_{}_{}.csv",
        spec.name,
        spec.target.band_name()
    ));
    write_text(&file, &table.to_csv())?;
    println!(
        "extracted {} samples x {} features -> {}",
        table.n_samples(),
        table.n_features(),
        file.display()
    );
    Ok(())
}

/// Elimination trace plus the thresholds that produced it.
#[derive(Serialize)]
struct SelectReport {
    version: u32,
    model_spec: String,
    target: String,
    vif_threshold: f64,
    r_threshold: f64,
    steps: Vec<EliminationStep>,
    surviving: Vec<String>,
}

fn cmd_select(cli: &Cli) -> Result<()> {
    let cfg = require_config(cli)?;
    let (table, spec, _) = model_table(cli, &cfg)?;
    let (vif_threshold, r_threshold) = match &cfg.config.selection {
        Some(s) => (
            s.vif_threshold.unwrap_or(DEFAULT_VIF_THRESHOLD),
            s.r_threshold.unwrap_or(DEFAULT_R_THRESHOLD),
        ),
        None => (DEFAULT_VIF_THRESHOLD, DEFAULT_R_THRESHOLD),
    };
    let trace = eliminate_collinear(&table, vif_threshold, r_threshold)?;
    let reduced = table.select_features(&trace.surviving)?;

    let base = format!("{}_{}", spec.name, spec.target.band_name());
    let report = SelectReport {
        version: OUTPUT_VERSION,
        model_spec: spec.name.clone(),
        target: spec.target.band_name().to_string(),
        vif_threshold,
        r_threshold,
        steps: trace.steps,
        surviving: trace.surviving,
    };
    write_json_file(&cli.out.join(format!("selection_{base}.json")), &report)?;
    write_text(
        &cli.out.join(format!("dataset_{base}_reduced.csv")),
        &reduced.to_csv(),
    )?;
    println!(
        "removed {} of {} features, {} survive -> {}",
        report.steps.len(),
        table.n_features(),
        report.surviving.len(),
        cli.out.display()
    );
    Ok(())
}

fn cmd_train(cli: &Cli) -> Result<()> {
    let cfg = require_config(cli)?;
    let (table, spec, technique) = model_table(cli, &cfg)?;
    let mc = cfg.model()?;
    let k = mc.k.unwrap_or(5);
    let seed = effective_seed(cli, mc.seed, "model.seed")?;
    let grid = match &mc.grid {
        Some(g) => g.clone(),
        None => default_grid(technique),
    };

    let outcome = grid_search(&table, technique, &grid, k, seed)?;
    let mut best_params = outcome.best.params.clone();
    best_params.set_seed(seed);
    let model = fit(&table, &best_params)?;

    let report = EvalReport {
        version: REPORT_VERSION,
        model_spec: spec.name.clone(),
        target: spec.target.band_name().to_string(),
        technique,
        k,
        seed,
        per_fold: outcome.best.per_fold.clone(),
        aggregate: outcome.best.aggregate.clone(),
        best_params,
        importance: ranked_importance(&model),
        baseline_delta_pct: None,
    };

    let stem = file_stem(spec, technique);
    model.save(&cli.out.join(format!("model_{stem}.json")))?;
    write_json_file(&cli.out.join(format!("report_{stem}.json")), &report)?;
    write_text(
        &cli.out.join(format!("grid_{stem}.csv")),
        &grid_results_csv(&spec.name, spec.target.band_name(), technique, &outcome),
    )?;
    println!(
        "model {} {} {}: {} grid points, pooled R2 {:.4}, RMSE {:.4} -> {}",
        spec.name,
        spec.target.band_name(),
        technique,
        outcome.all.len(),
        report.aggregate.r2,
        report.aggregate.rmse,
        cli.out.display()
    );
    Ok(())
}

fn cmd_evaluate(cli: &Cli) -> Result<()> {
    let cfg = require_config(cli)?;
    let (table, spec, technique) = model_table(cli, &cfg)?;
    let mc = cfg.model()?;
    let k = mc.k.unwrap_or(5);
    let seed = effective_seed(cli, mc.seed, "model.seed")?;
    let params_value = mc
        .params
        .as_ref()
        .context("config key model.params is missing (evaluate runs one parameter block)")?;
    let params: EnsembleParams = serde_json::from_value(params_value.clone())
        .context("config key model.params is not a parameter block")?;
    if params.technique() != technique {
        bail!(
            "config key model.params describes {} but model.technique says {}",
            params.technique(),
            technique
        );
    }

    let cv = cross_validate(&table, &params, k, seed)?;
    let mut best_params = params;
    best_params.set_seed(seed);
    let model = fit(&table, &best_params)?;

    let report = EvalReport {
        version: REPORT_VERSION,
        model_spec: spec.name.clone(),
        target: spec.target.band_name().to_string(),
        technique,
        k,
        seed,
        per_fold: cv.per_fold,
        aggregate: cv.aggregate,
        best_params,
        importance: ranked_importance(&model),
        baseline_delta_pct: None,
    };
    let file = cli.out.join(format!("report_{}.json", file_stem(spec, technique)));
    write_json_file(&file, &report)?;
    println!(
        "evaluated {} {} {}: pooled R2 {:.4}, RMSE {:.4} -> {}",
        spec.name,
        spec.target.band_name(),
        technique,
        report.aggregate.r2,
        report.aggregate.rmse,
        file.display()
    );
    Ok(())
}

fn read_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read report {}", path.display()))?;
    let report: EvalReport = serde_json::from_str(&text)
        .with_context(|| format!("report {} is not valid", path.display()))?;
    if report.version != REPORT_VERSION {
        bail!(
            "report {} has version {}, expected {}",
            path.display(),
            report.version,
            REPORT_VERSION
        );
    }
    Ok(report)
}

fn cmd_compare(cli: &Cli) -> Result<()> {
    let cfg = require_config(cli)?;
    let cc = cfg
        .config
        .compare
        .as_ref()
        .context("config key compare is missing")?;
    if cc.candidates.is_empty() {
        bail!("config key compare.candidates is empty");
    }
    let baseline = read_report(&cfg.resolve(&cc.baseline))?;

    let mut csv = String::from(
        "candidate_model,candidate_target,candidate_technique,candidate_r2,\
         baseline_model,baseline_target,baseline_technique,baseline_r2,delta_pct\n",
    );
    for path in &cc.candidates {
        let candidate = read_report(&cfg.resolve(path))?;
        let delta = baseline_delta(candidate.aggregate.r2, baseline.aggregate.r2)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            candidate.model_spec,
            candidate.target,
            candidate.technique,
            fmt_real(candidate.aggregate.r2),
            baseline.model_spec,
            baseline.target,
            baseline.technique,
            fmt_real(baseline.aggregate.r2),
            fmt_real(delta),
        ));
    }
    let file = cli.out.join("compare.csv");
    write_text(&file, &csv)?;
    println!(
        "compared {} candidates against {} {} {} -> {}",
        cc.candidates.len(),
        baseline.model_spec,
        baseline.target,
        baseline.technique,
        file.display()
    );
    Ok(())
}

fn cmd_map(cli: &Cli) -> Result<()> {
    let cfg = require_config(cli)?;
    let mc = cfg
        .config
        .map
        .as_ref()
        .context("config key map is missing")?;
    if mc.agb_model.is_none() && mc.soc_model.is_none() {
        bail!("config key map needs agb_model and/or soc_model");
    }
    let stack = build_stack(&cfg)?;

    let slots = [
        (Target::Agb, "map.agb_model", &mc.agb_model, mc.agb_multiplier),
        (Target::Soc, "map.soc_model", &mc.soc_model, mc.soc_multiplier),
    ];
    let mut written = Vec::new();
    let mut scaled: Vec<Option<Grid>> = vec![None, None];
    for (i, (target, key, path, multiplier)) in slots.iter().enumerate() {
        let Some(path) = path else { continue };
        let model = EnsembleModel::load(&cfg.resolve(path))
            .with_context(|| format!("config key {key}"))?;
        if model.target_name != target.band_name() {
            bail!(
                "config key {key}: the model predicts {:?}, expected {:?}",
                model.target_name,
                target.band_name()
            );
        }
        let pred = predict_map(&model, &stack)?;
        write_grid(&pred, &cli.out.join(format!("{}.tif", pred.name)))?;
        write_quicklook(&pred, &cli.out.join(format!("{}.png", pred.name)))?;
        written.push(pred.name.clone());
        if let Some(truth) = stack.get(target.band_name()) {
            let errors = error_map(&pred, truth)?;
            write_grid(&errors, &cli.out.join(format!("{}.tif", errors.name)))?;
            written.push(errors.name.clone());
        }
        scaled[i] = Some(scale_grid(&pred, multiplier.unwrap_or(1.0)));
    }
    if let (Some(agb), Some(soc)) = (&scaled[0], &scaled[1]) {
        let total = total_carbon_map(agb, soc)?;
        write_grid(&total, &cli.out.join(format!("{}.tif", total.name)))?;
        write_quicklook(&total, &cli.out.join(format!("{}.png", total.name)))?;
        written.push(total.name.clone());
    }
    println!("wrote {} -> {}", written.join(", "), cli.out.display());
    Ok(())
}

fn cmd_synth(cli: &Cli) -> Result<()> {
    // The configuration is optional here: geometry has documented defaults
    // and the seed may come from --seed alone.
    let scene = match &cli.config {
        Some(path) => LoadedConfig::read(path)?.config.scene.unwrap_or_default(),
        None => config::SceneConfig::default(),
    };
    let seed = effective_seed(cli, scene.seed, "scene.seed")?;
    let params = SceneParams {
        width: scene.width,
        height: scene.height,
        seed,
        border: scene.border,
    };
    let manifest = write_scene(&params, &cli.out.join("scene"))?;

    let generated = Config {
        version: Some(OUTPUT_VERSION),
        inputs: manifest
            .files
            .iter()
            .map(|f| InputEntry {
                path: format!("scene/{}", f.path),
                name: f.name.clone(),
                role: f.role.clone(),
            })
            .collect(),
        reference: Some(Reference {
            origin_x: manifest.origin_x,
            origin_y: manifest.origin_y,
            pixel_w: manifest.pixel_w,
            pixel_h: manifest.pixel_h,
            width: manifest.width,
            height: manifest.height,
            crs: manifest.crs.clone(),
        }),
        model: Some(ModelConfig {
            spec: "D".to_string(),
            target: "AGB".to_string(),
            technique: "RF".to_string(),
            grid: Some(starter_grid()),
            params: None,
            seed: Some(seed),
            k: Some(5),
        }),
        selection: None,
        scene: Some(config::SceneConfig {
            width: params.width,
            height: params.height,
            border: params.border,
            seed: Some(seed),
        }),
        map: None,
        compare: None,
    };
    write_json_file(&cli.out.join("config.json"), &generated)?;
    println!(
        "scene: {} bands at {}x{} (seed {}) -> {}; config.json is ready for train",
        manifest.files.len(),
        manifest.width,
        manifest.height,
        seed,
        cli.out.display()
    );
    Ok(())
}

/// A deliberately small grid for the generated configuration, so the
/// bundled walkthrough trains in seconds rather than minutes.
fn starter_grid() -> terracarbon::tuning::SearchGrid {
    let mut map = std::collections::BTreeMap::new();
    map.insert(
        "n_trees".to_string(),
        vec![serde_json::Value::from(100u64)],
    );
    map.insert(
        "max_depth".to_string(),
        vec![serde_json::Value::from(10u64), serde_json::Value::from("unlimited")],
    );
    terracarbon::tuning::SearchGrid(map)
}
