//! End-to-end pipeline runs through the library API and the installed
//! binary: artifact layout, verb sequencing, determinism, exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use susmap_cli::config::load_config;
use susmap_cli::pipeline::{execute, Overrides, RunContext, Stage};
use susmap_core::data::{write_factor_table_csv, FactorMeta};
use susmap_core::raster::write_ascii_grid;
use susmap_core::synth;

/// Two custom continuous factors with grids, coordinate-bearing samples
/// drawn from them, and the config text wired to both.
fn toy_workspace(dir: &Path) -> PathBuf {
    let metas = vec![
        FactorMeta::continuous("x1", false, ""),
        FactorMeta::continuous("x2", false, ""),
    ];
    let grids = synth::factor_grid_stack(&metas, 24, 18, 5);
    let grids_dir = dir.join("grids");
    fs::create_dir_all(&grids_dir).unwrap();
    for (meta, grid) in metas.iter().zip(&grids) {
        write_ascii_grid(grid, grids_dir.join(format!("{}.asc", meta.name))).unwrap();
    }
    let table = synth::sample_cells(&metas, &grids, 160, 7);
    write_factor_table_csv(&table, dir.join("samples.csv")).unwrap();

    let config = format!(
        r#"
        [data]
        samples = "{samples}"
        grids_dir = "{grids}"

        [[data.factor]]
        name = "x1"
        kind = "continuous"

        [[data.factor]]
        name = "x2"
        kind = "continuous"

        [experiment]
        models = ["iv"]
        seed = 3

        [[experiment.factor_set]]
        name = "pair"
        select = ["x1", "x2"]

        [binning]
        classes = 4
        "#,
        samples = dir.join("samples.csv").display(),
        grids = grids_dir.display(),
    );
    let path = dir.join("toy.toml");
    fs::write(&path, config).unwrap();
    path
}

fn names_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = match fs::read_dir(dir) {
        Ok(entries) => entries.map(|e| e.unwrap().file_name().into_string().unwrap()).collect(),
        Err(_) => Vec::new(),
    };
    names.sort();
    names
}

#[test]
fn single_index_model_map_writes_weights_and_grid_and_nothing_more() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = toy_workspace(dir.path());
    let config = load_config(&config_path).unwrap();
    let overrides = Overrides {
        out: Some(dir.path().join("runs")),
        ..Overrides::default()
    };
    let ctx = RunContext::new(config, &overrides).unwrap();
    execute(&ctx, Stage::Map).unwrap();

    assert_eq!(names_in(&ctx.run_dir.join("models")), vec!["iv_pair.json"]);
    assert_eq!(names_in(&ctx.run_dir.join("weights")), vec!["weights_pair.csv"]);
    assert_eq!(
        names_in(&ctx.run_dir.join("map")),
        vec![
            "classes_iv_pair.asc",
            "density_iv_pair.csv",
            "legend_iv_pair.csv",
            "susceptibility_iv_pair.asc",
        ]
    );
    // Only what the verb needed: no metrics, no explanations, no diagnostics.
    assert!(!ctx.run_dir.join("metrics.csv").exists());
    assert!(!ctx.run_dir.join("explain").exists());
    assert!(!ctx.run_dir.join("diagnostics").exists());
    assert!(!ctx.run_dir.join("FAILED").exists());

    let weights = fs::read_to_string(ctx.run_dir.join("weights/weights_pair.csv")).unwrap();
    assert!(weights.starts_with("factor,class,"));
    // 4 quantile classes per continuous factor.
    assert_eq!(weights.lines().count(), 1 + 8);

    let legend = fs::read_to_string(ctx.run_dir.join("map/legend_iv_pair.csv")).unwrap();
    assert_eq!(legend.lines().count(), 1 + 5);
    assert!(legend.contains("very high"));
}

#[test]
fn verbs_build_on_each_other_and_clear_the_failure_marker() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = toy_workspace(dir.path());
    let mut config = load_config(&config_path).unwrap();
    config.experiment.models = vec!["iv".into(), "lr".into()];
    config.data.grids_dir = None;
    let overrides = Overrides {
        out: Some(dir.path().join("runs")),
        ..Overrides::default()
    };
    let ctx = RunContext::new(config, &overrides).unwrap();

    // Mapping without grids is an explicit-stage error and leaves a marker.
    let err = execute(&ctx, Stage::Map).unwrap_err();
    assert!(format!("{err:#}").contains("stage map"), "{err:#}");
    let marker = fs::read_to_string(ctx.run_dir.join("FAILED")).unwrap();
    assert!(marker.contains("stage map"), "{marker}");

    // Train, then evaluate on top of the persisted models.
    execute(&ctx, Stage::Train).unwrap();
    let models = names_in(&ctx.run_dir.join("models"));
    assert_eq!(models, vec!["iv_pair.json", "lr_pair.json"]);
    execute(&ctx, Stage::Evaluate).unwrap();
    assert!(!ctx.run_dir.join("FAILED").exists());

    let metrics = fs::read_to_string(ctx.run_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2);
    assert!(metrics.lines().nth(1).unwrap().starts_with("iv,pair,"));
    assert!(metrics.lines().nth(2).unwrap().starts_with("lr,pair,"));
}

#[test]
fn full_grid_smoke_emits_sixteen_metric_rows() {
    let dir = tempfile::tempdir().unwrap();
    let table = synth::benchmark_table(260, 21);
    write_factor_table_csv(&table, dir.path().join("samples.csv")).unwrap();
    let config_text = format!(
        r#"
        [data]
        samples = "{samples}"

        [experiment]
        models = ["fr", "iv", "woe", "lr", "svm", "gbt", "cnn", "lstm"]
        seed = 9

        [[experiment.factor_set]]
        name = "all_19"
        select = "all"

        [[experiment.factor_set]]
        name = "triggering_9"
        select = "triggering"

        [binning]
        classes = 5

        [models.gbt]
        n_estimators = 12
        max_depth = 3

        [models.cnn]
        filters = 4
        epochs = 3

        [models.lstm]
        units = 6
        epochs = 3

        [explain]
        methods = ["shapley", "lime", "deeplift"]
        instances = 2
        background = 8
        permutations = 25
        "#,
        samples = dir.path().join("samples.csv").display(),
    );
    let config_path = dir.path().join("smoke.toml");
    fs::write(&config_path, config_text).unwrap();

    let config = load_config(&config_path).unwrap();
    let overrides = Overrides {
        out: Some(dir.path().join("runs")),
        ..Overrides::default()
    };
    let ctx = RunContext::new(config, &overrides).unwrap();
    execute(&ctx, Stage::Run).unwrap();

    let metrics = fs::read_to_string(ctx.run_dir.join("metrics.csv")).unwrap();
    assert_eq!(
        metrics.lines().count(),
        1 + 16,
        "8 models x 2 factor sets:\n{metrics}"
    );
    assert_eq!(
        metrics.lines().next().unwrap(),
        "model,factors,Accuracy,Precision,Recall,F1 score,AUC,Kappa"
    );

    for tag in ["all_19", "triggering_9"] {
        assert!(ctx.run_dir.join(format!("diagnostics/vif_{tag}.csv")).exists());
        assert!(ctx.run_dir.join(format!("diagnostics/ols_{tag}.csv")).exists());
        assert!(ctx.run_dir.join(format!("weights/weights_{tag}.csv")).exists());
        assert!(ctx.run_dir.join(format!("explain/attributions_{tag}.csv")).exists());
        assert!(ctx.run_dir.join(format!("explain/importance_{tag}.csv")).exists());
        let consistency =
            fs::read_to_string(ctx.run_dir.join(format!("explain/consistency_{tag}.csv")))
                .unwrap();
        // 8 models x {shapley, lime} plus deeplift for the two networks.
        assert_eq!(consistency.lines().count(), 1 + 18);
    }
    // 8 model files per factor set; no grids were configured.
    assert_eq!(names_in(&ctx.run_dir.join("models")).len(), 16);
    assert!(!ctx.run_dir.join("map").exists());
}

#[test]
fn identical_configs_produce_byte_identical_run_directories() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = toy_workspace(dir.path());
    let mut config = load_config(&config_path).unwrap();
    config.experiment.models = vec!["iv".into(), "lr".into(), "gbt".into()];
    config.models.gbt.n_estimators = Some(10);
    config.models.gbt.max_depth = Some(3);
    config.explain.instances = 2;
    config.explain.permutations = 20;
    config.explain.methods = vec!["shapley".into(), "lime".into()];

    let mut dirs = Vec::new();
    for root in ["first", "second"] {
        let overrides = Overrides {
            out: Some(dir.path().join(root)),
            ..Overrides::default()
        };
        let ctx = RunContext::new(config.clone(), &overrides).unwrap();
        execute(&ctx, Stage::Run).unwrap();
        dirs.push(ctx.run_dir);
    }

    // Same run name under both roots, same files, same bytes.
    assert_eq!(dirs[0].file_name(), dirs[1].file_name());
    let mut files = Vec::new();
    collect_files(&dirs[0], &dirs[0], &mut files);
    assert!(files.len() >= 10, "expected a real bundle, got {files:?}");
    let mut other = Vec::new();
    collect_files(&dirs[1], &dirs[1], &mut other);
    assert_eq!(files, other);
    for rel in &files {
        let a = fs::read(dirs[0].join(rel)).unwrap();
        let b = fs::read(dirs[1].join(rel)).unwrap();
        assert_eq!(a, b, "{} differs between reruns", rel.display());
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            out.push(path.strip_prefix(root).unwrap().to_path_buf());
        }
    }
    out.sort();
}

#[test]
fn binary_reports_validation_and_stage_failures() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = toy_workspace(dir.path());
    let bin = env!("CARGO_BIN_EXE_susmap");

    // Clean config validates quietly.
    let ok = Command::new(bin)
        .args(["validate", "--config"])
        .arg(&config_path)
        .output()
        .unwrap();
    assert!(ok.status.success(), "{ok:?}");
    assert!(String::from_utf8_lossy(&ok.stdout).contains("config OK"));

    // An unknown model is a named diagnostic and a nonzero exit.
    let broken = fs::read_to_string(&config_path)
        .unwrap()
        .replace("models = [\"iv\"]", "models = [\"iv\", \"banana\"]");
    let broken_path = dir.path().join("broken.toml");
    fs::write(&broken_path, broken).unwrap();
    let out = Command::new(bin)
        .args(["validate", "--config"])
        .arg(&broken_path)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("unknown model \"banana\""));

    // Other verbs refuse a config that fails validation.
    let out = Command::new(bin)
        .args(["train", "--config"])
        .arg(&broken_path)
        .output()
        .unwrap();
    assert!(!out.status.success());

    // A valid config that cannot run its stage exits with a tagged error.
    let no_grids = fs::read_to_string(&config_path)
        .unwrap()
        .lines()
        .filter(|l| !l.contains("grids_dir"))
        .collect::<Vec<_>>()
        .join("\n");
    let no_grids_path = dir.path().join("no_grids.toml");
    fs::write(&no_grids_path, no_grids).unwrap();
    let out = Command::new(bin)
        .args(["map", "--config"])
        .arg(&no_grids_path)
        .arg("--out")
        .arg(dir.path().join("runs"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("stage map"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
