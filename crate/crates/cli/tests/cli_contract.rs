//! Black-box checks of the command-line contract: exit codes, error
//! messages that name the offending config key, versioned outputs, seed
//! precedence, and path resolution relative to the config file.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_terracarbon"))
        .args(args)
        .env_remove("TERRACARBON_THREADS")
        .output()
        .expect("the binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let output = run(args);
    assert!(
        output.status.success(),
        "terracarbon {args:?} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr_of(args: &[&str]) -> String {
    let output = run(args);
    assert!(
        !output.status.success(),
        "terracarbon {args:?} was expected to fail but exited 0"
    );
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// Generate a scene bundle and return the path of its generated config.
fn bundle(dir: &Path, width: u32, height: u32, seed: u64) -> PathBuf {
    let synth_cfg = dir.join("synth.json");
    std::fs::write(
        &synth_cfg,
        format!(r#"{{"scene": {{"width": {width}, "height": {height}, "border": 2, "seed": {seed}}}}}"#),
    )
    .unwrap();
    let out = dir.join("bundle");
    run_ok(&[
        "synth",
        "--config",
        synth_cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    out.join("config.json")
}

fn read_json(path: &Path) -> Value {
    let text = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{} is not JSON: {e}", path.display()))
}

fn edit_json(path: &Path, edit: impl FnOnce(&mut Value)) {
    let mut value = read_json(path);
    edit(&mut value);
    std::fs::write(path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
}

#[test]
fn unknown_flag_exits_nonzero_with_usage_text() {
    let stderr = stderr_of(&["train", "--config", "x.json", "--bogus"]);
    assert!(
        stderr.contains("--bogus"),
        "the message should quote the unknown flag, got:\n{stderr}"
    );
    assert!(
        stderr.to_lowercase().contains("usage"),
        "expected usage text, got:\n{stderr}"
    );
}

#[test]
fn missing_model_section_error_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, r#"{"inputs": []}"#).unwrap();
    let stderr = stderr_of(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        stderr.contains("model"),
        "the error must name the missing key, got:\n{stderr}"
    );
}

#[test]
fn invalid_role_error_names_the_entry() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"inputs": [{"path": "a.tif", "name": "B4", "role": "label"}]}"#,
    )
    .unwrap();
    let stderr = stderr_of(&["stack", "--config", cfg.to_str().unwrap()]);
    assert!(
        stderr.contains("inputs[0].role"),
        "the error must point at the bad entry, got:\n{stderr}"
    );
}

#[test]
fn missing_input_file_error_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{
            "inputs": [{"path": "absent/B4.tif", "name": "B4", "role": "predictor"}],
            "reference": {"origin_x": 0, "origin_y": 0, "pixel_w": 10, "pixel_h": 10,
                          "width": 4, "height": 4, "crs": "EPSG:32630"}
        }"#,
    )
    .unwrap();
    let stderr = stderr_of(&["stack", "--config", cfg.to_str().unwrap()]);
    assert!(
        stderr.contains("B4.tif") && stderr.contains("inputs[0].path"),
        "the error must name the unreadable path and its key, got:\n{stderr}"
    );
}

#[test]
fn train_on_the_generated_bundle_writes_versioned_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundle(dir.path(), 28, 28, 3);
    edit_json(&cfg, |v| {
        v["model"]["spec"] = "B".into();
        v["model"]["grid"] = serde_json::json!({"n_trees": [30], "max_depth": [8]});
    });
    let out = dir.path().join("fit");
    run_ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);

    let model = read_json(&out.join("model_B_AGB_RF.json"));
    assert_eq!(model["version"], 1, "model files carry a version");
    assert_eq!(model["target_name"], "AGB");

    let report = read_json(&out.join("report_B_AGB_RF.json"));
    assert_eq!(report["version"], 1, "reports carry a version");
    assert_eq!(report["model_spec"], "B");
    let pooled = report["aggregate"]["r2"].as_f64().expect("pooled R2 present");
    assert!(pooled.is_finite(), "pooled R2 should be a number, got {pooled}");
    assert_eq!(
        report["per_fold"].as_array().map(Vec::len),
        Some(5),
        "one metrics row per fold"
    );

    let grid_csv = std::fs::read_to_string(out.join("grid_B_AGB_RF.csv")).unwrap();
    assert_eq!(
        grid_csv.lines().count(),
        2,
        "a single grid point flattens to a header plus one row"
    );
}

#[test]
fn compare_of_identical_reports_is_a_zero_delta_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundle(dir.path(), 16, 16, 8);
    edit_json(&cfg, |v| {
        v["model"]["grid"] = serde_json::json!({"n_trees": [20], "max_depth": [6]});
    });
    let out = dir.path().join("fit");
    run_ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);

    let report = out.join("report_D_AGB_RF.json");
    let compare_cfg = dir.path().join("compare.json");
    std::fs::write(
        &compare_cfg,
        serde_json::to_string(&serde_json::json!({
            "compare": {
                "baseline": report.to_str().unwrap(),
                "candidates": [report.to_str().unwrap()],
            }
        }))
        .unwrap(),
    )
    .unwrap();
    run_ok(&[
        "compare",
        "--config",
        compare_cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);

    let csv = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().expect("header");
    assert!(header.starts_with("candidate_model,"), "header row first");
    let row = lines.next().expect("one candidate row");
    let delta: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(delta, 0.0, "a model compared to itself improves by exactly 0%");
}

#[test]
fn the_seed_flag_overrides_the_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundle(dir.path(), 16, 16, 21);
    edit_json(&cfg, |v| {
        v["model"].as_object_mut().unwrap().remove("grid");
        v["model"]["params"] = serde_json::json!({"n_trees": 20});
        v["model"]["seed"] = 5.into();
    });

    let report_for = |out: &Path, extra: &[&str]| -> Vec<u8> {
        let mut args = vec![
            "evaluate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        run_ok(&args);
        std::fs::read(out.join("report_D_AGB_RF.json")).unwrap()
    };

    let from_config = report_for(&dir.path().join("a"), &[]);
    let same_seed = report_for(&dir.path().join("b"), &["--seed", "5"]);
    let other_seed = report_for(&dir.path().join("c"), &["--seed", "6"]);
    assert_eq!(
        from_config, same_seed,
        "--seed equal to the config seed must not change anything"
    );
    assert_ne!(
        from_config, other_seed,
        "a different --seed must reshuffle the folds and change the report"
    );
}

#[test]
fn scene_paths_resolve_against_the_config_directory() {
    // The generated config refers to rasters as scene/<band>; running from
    // an unrelated working directory must still find them.
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundle(dir.path(), 16, 16, 2);
    let out = dir.path().join("tables");
    run_ok(&[
        "dataset",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);

    let csv = std::fs::read_to_string(out.join("dataset_D_AGB.csv")).unwrap();
    let header = csv.lines().next().expect("header row");
    assert!(
        header.contains("Woodland") && header.ends_with("AGB"),
        "the table lists Model D features and ends with the target, got: {header}"
    );
    let rows = csv.lines().count() - 1;
    assert!(
        rows > 0 && rows <= 12 * 12,
        "at most one row per interior cell of a 16x16 scene with border 2 \
         (the generator also punches nodata holes), got {rows}"
    );
}

#[test]
fn select_writes_the_elimination_trace_with_version() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundle(dir.path(), 24, 24, 14);
    let out = dir.path().join("selected");
    run_ok(&[
        "select",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);

    let trace = read_json(&out.join("selection_D_AGB.json"));
    assert_eq!(trace["version"], 1);
    let surviving = trace["surviving"].as_array().expect("surviving list");
    assert!(!surviving.is_empty(), "elimination must leave features behind");

    let reduced = std::fs::read_to_string(out.join("dataset_D_AGB_reduced.csv")).unwrap();
    let header_cols = reduced.lines().next().unwrap().split(',').count();
    assert_eq!(
        header_cols,
        surviving.len() + 1,
        "the reduced table holds the survivors plus the target"
    );
}

#[test]
fn stack_and_indices_produce_rasters_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundle(dir.path(), 16, 16, 5);
    let out = dir.path().join("stacked");
    run_ok(&[
        "stack",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let manifest = read_json(&out.join("stack.json"));
    assert_eq!(manifest["version"], 1);
    assert_eq!(manifest["width"], 16);

    run_ok(&[
        "indices",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    for name in ["NDVI.tif", "EVI.tif", "SATVI.tif"] {
        assert!(out.join(name).exists(), "{name} should be written");
    }
}
