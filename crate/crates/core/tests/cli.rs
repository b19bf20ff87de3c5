use std::path::Path;

use coxbvs::cli::main_with_args;

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn tiny_experiment(dir: &Path) -> std::path::PathBuf {
    let design = coxbvs::simulate::SimulationDesign {
        p: 5,
        n_per_subgroup: vec![30, 30],
        true_effects: vec![vec![1.0, -1.0, 0.0, 0.0, 0.0], vec![0.0, -1.0, 1.0, 0.0, 0.0]],
        weibull_scale: vec![0.2, 0.1],
        weibull_shape: vec![0.9, 1.1],
        partial_corr: -0.5,
        blocks: vec![vec![0, 1, 2]],
        censoring: coxbvs::simulate::CensoringMode::BaselineOnly,
        seed: 0,
    };
    let config = serde_json::json!({
        "design": {"kind": "custom", "design": design},
        "replications": 1,
        "models": [{"variant": "coxbvs-sl"}, {"variant": "sub-struct"}, {"variant": "subgroup"}, {"variant": "pooled"}],
        "chain": {"iterations": 200, "burn_in": 100},
        "seed": 12
    });
    let path = dir.join("experiment.json");
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

#[test]
fn tiny_design_produces_full_artifact_tree() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_experiment(dir.path());
    let out = dir.path().join("out");
    assert_eq!(main_with_args(["coxbvs", "run-experiment", "--config", &s(&config), "--out", &s(&out)]), 0);
    for f in [
        "config.json",
        "report_summary.csv",
        "report_edges.csv",
        "report_ibs.csv",
        "report.json",
        "failures.json",
        "results.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let rep = out.join("p5_n30").join("rep00");
    assert!(rep.join("train.csv").is_file() && rep.join("test.csv").is_file());
    for model in ["coxbvs-sl", "sub-struct", "subgroup", "pooled"] {
        for f in ["chain.bin", "chain.json", "summary.csv", "edges.csv", "fit.json", "prediction_error.csv"] {
            assert!(rep.join(model).join(f).is_file(), "missing {model}/{f}");
        }
    }
    let failures: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("failures.json")).unwrap()).unwrap();
    assert_eq!(failures.as_array().unwrap().len(), 0);
    // Every CSV names the configuration hash.
    let hash: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let hash = hash["config_hash"].as_str().unwrap().to_string();
    let summary = std::fs::read_to_string(out.join("report_summary.csv")).unwrap();
    assert!(summary.starts_with(&format!("# config_hash: {hash}")));
}

#[test]
fn rerun_overwrites_with_identical_content() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_experiment(dir.path());
    let out = dir.path().join("out");
    let args = ["coxbvs", "run-experiment", "--config", &s(&config), "--out", &s(&out)];
    assert_eq!(main_with_args(args), 0);
    let first = std::fs::read(out.join("report.json")).unwrap();
    let first_ibs = std::fs::read(out.join("report_ibs.csv")).unwrap();
    assert_eq!(main_with_args(args), 0);
    assert_eq!(std::fs::read(out.join("report.json")).unwrap(), first);
    assert_eq!(std::fs::read(out.join("report_ibs.csv")).unwrap(), first_ibs);
}

#[test]
fn subcommands_chain_together() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(main_with_args(["coxbvs", "simulate", "--p", "9", "--n", "25", "--seed", "3", "--out", &s(&data)]), 0);
    let fit = dir.path().join("fit");
    assert_eq!(
        main_with_args([
            "coxbvs", "fit", "--data", &s(&data.join("train.csv")), "--model", "coxbvs-sl", "--iterations", "120",
            "--burn-in", "60", "--seed", "1", "--out", &s(&fit),
        ]),
        0
    );
    for f in ["chain.json", "chain.bin", "summary.csv", "edges.csv", "fit.json", "diagnostics.json", "standardization.json"] {
        assert!(fit.join(f).is_file(), "missing {f}");
    }
    let eval = dir.path().join("eval");
    assert_eq!(
        main_with_args([
            "coxbvs", "evaluate", "--fit-dir", &s(&fit), "--test", &s(&data.join("test.csv")), "--out", &s(&eval),
        ]),
        0
    );
    let ibs = std::fs::read_to_string(eval.join("ibs.csv")).unwrap();
    // Header comment, column names, then two subgroups × two estimators.
    assert_eq!(ibs.lines().count(), 2 + 4);
    let curve = std::fs::read_to_string(eval.join("prediction_error.csv")).unwrap();
    assert!(curve.lines().nth(1).unwrap().starts_with("subgroup,estimator,t,bs"));
}

#[test]
fn seed_flag_changes_simulated_data() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    main_with_args(["coxbvs", "simulate", "--p", "9", "--n", "10", "--seed", "1", "--out", &s(&a)]);
    main_with_args(["coxbvs", "simulate", "--p", "9", "--n", "10", "--seed", "2", "--out", &s(&b)]);
    assert_ne!(std::fs::read(a.join("train.csv")).unwrap(), std::fs::read(b.join("train.csv")).unwrap());
}

#[test]
fn failed_replications_give_exit_code_one_and_a_failure_manifest() {
    let dir = tempfile::tempdir().unwrap();
    // Subgroup 2 is fully censored, so per-subgroup fits cannot be identified.
    let mut rows = vec!["time,status,subgroup,g1,g2,g3,g4".to_string()];
    for s in 1..=2 {
        for k in 0..30 {
            let x = |j: usize| ((k * 7 + j * 13 + s * 3) % 17) as f64 / 17.0 - 0.5;
            let event = if s == 1 && k % 3 != 0 { 1 } else { 0 };
            rows.push(format!("{},{event},{s},{},{},{},{}", 0.2 + 0.15 * k as f64, x(1), x(2), x(3), x(4)));
        }
    }
    let data = dir.path().join("data.csv");
    std::fs::write(&data, rows.join("\n") + "\n").unwrap();
    let config = serde_json::json!({
        "design": {"kind": "dataset", "path": s(&data)},
        "replications": 1,
        "models": [{"variant": "subgroup"}],
        "chain": {"iterations": 60, "burn_in": 30},
        "seed": 1
    });
    let path = dir.path().join("c.json");
    std::fs::write(&path, config.to_string()).unwrap();
    let out = dir.path().join("out");
    assert_eq!(main_with_args(["coxbvs", "run-experiment", "--config", &s(&path), "--out", &s(&out)]), 1);
    let failures: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("failures.json")).unwrap()).unwrap();
    let failures = failures.as_array().unwrap();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0]["stage"], "fit");
    assert!(out.join("report.json").is_file());
    // The report subcommand propagates the partial failure.
    assert_eq!(main_with_args(["coxbvs", "report", &s(&out), "--out", &s(&dir.path().join("r"))]), 1);
}

#[test]
fn bad_arguments_exit_with_two() {
    assert_eq!(main_with_args(["coxbvs", "fit"]), 2);
    assert_eq!(main_with_args(["coxbvs", "frobnicate"]), 2);
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        main_with_args(["coxbvs", "fit", "--data", &s(&dir.path().join("missing.csv")), "--out", &s(dir.path())]),
        2
    );
}

#[test]
fn shipped_configs_load_and_expand() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let grid = coxbvs::experiment::ExperimentConfig::load(dir.join("simulation_grid.json")).unwrap();
    assert_eq!(grid.scenarios().len(), 2 * 4);
    assert_eq!(grid.replications, 10);
    for name in ["simulation_low_dim.json", "tiny.json"] {
        coxbvs::experiment::ExperimentConfig::load(dir.join(name)).unwrap();
    }
}
