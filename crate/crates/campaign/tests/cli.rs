use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use geosample_core::config::RunConfig;
use geosample_core::design::DesignConfig;
use geosample_core::domain::CovariateSet;
use geosample_core::prior::HyperParams;
use geosample_core::sim::{ExperimentConfig, GeneratorConfig, Layout, StrategySpec};
use serde_json::Value;

fn geosample(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geosample"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .unwrap_or_else(|| panic!("no JSON in {text:?}"));
    serde_json::from_str(line).unwrap()
}

/// A small, fast configuration: one village, two strategies, one replicate.
fn small_config(dir: &Path) -> String {
    let cfg = RunConfig {
        design: DesignConfig {
            initial_size: 6,
            batch_size: 4,
            mc_draws: 300,
            ..Default::default()
        },
        experiment: ExperimentConfig {
            villages: vec![GeneratorConfig {
                name: "tiny".into(),
                n: 24,
                layout: Layout::Uniform { side_m: 300.0 },
                hyper: HyperParams::new(0.3, 1.0, 0.5).unwrap(),
                baseline_rate: 0.3,
                effects: Default::default(),
                covariates: vec![],
                seed: 4,
            }],
            strategies: vec![StrategySpec::Adaptive { alpha: 0.3 }, StrategySpec::Random],
            covariate_sets: vec![CovariateSet::Global],
            reps: 1,
            workers: 1,
        },
        ..Default::default()
    };
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn prep_scales_the_toy_village_to_unit_diameter() {
    let dir = tempfile::tempdir().unwrap();
    let village = dir.path().join("toy.csv");
    fs::write(&village, "id,x_m,y_m\na,0,0\nb,0,100\nc,0,200\n").unwrap();
    let out = geosample(&["prep", "--village", village.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let export: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(export["diameter_m"], 200.0);
    let ys: Vec<f64> = export["houses"]
        .as_array()
        .unwrap()
        .iter()
        .map(|h| h["y"].as_f64().unwrap())
        .collect();
    assert_eq!(ys, vec![0.0, 0.5, 1.0]);
}

#[test]
fn usage_errors_exit_two_with_json() {
    let out = geosample(&["prep", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["code"], "usage");

    let help = geosample(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_one_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = geosample(&["prep", "--village", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert!(err["code"].is_string() && err["message"].is_string(), "{err}");

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,x_m,y_m\na,0,0\na,1,1\n").unwrap();
    let out = geosample(&["prep", "--village", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_json(&out)["code"].is_string());

    // a village with nothing surveyed cannot be fitted
    let out = geosample(&["fit", "--village", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn generated_villages_fit_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let villages = dir.path().join("villages");
    let out = geosample(&[
        "--config",
        &config,
        "generate",
        "--out-dir",
        villages.to_str().unwrap(),
        "--surveyed",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = villages.join("tiny.csv");
    assert!(villages.join("tiny.schema.json").exists());
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 25);

    let fit = |name: &str| {
        let path = dir.path().join(name);
        let out = geosample(&[
            "--config",
            &config,
            "--seed",
            "11",
            "fit",
            "--village",
            csv.to_str().unwrap(),
            "--variant",
            "full",
            "--draws",
            "200",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(path).unwrap()
    };
    let first = fit("a.json");
    assert_eq!(first, fit("b.json"));
    let report: Value = serde_json::from_slice(&first).unwrap();
    let full = &report["reports"][0];
    assert_eq!(full["variant"], "full");
    assert_eq!(full["n_observed"], 24);
    assert_eq!(full["seed"], 11);
    assert!(full["log_marginal_likelihood"].as_f64().unwrap().is_finite());
}

#[test]
fn experiments_are_reproducible_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let run = |name: &str, extra: &[&str]| {
        let out_dir = dir.path().join(name);
        let mut args = vec![
            "--config",
            &config,
            "--seed",
            "3",
            "experiment",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let out = geosample(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let counts: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(counts["runs"], 2);
        assert_eq!(counts["failures"], 0);
        out_dir
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    for file in ["results.csv", "results.json", "summary.json", "plot.csv", "runs.jsonl"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }

    // keep one finished run and a torn line; resuming completes the same results
    let log = fs::read_to_string(a.join("runs.jsonl")).unwrap();
    let first = log.lines().next().unwrap();
    let c = dir.path().join("c");
    fs::create_dir_all(&c).unwrap();
    fs::write(c.join("runs.jsonl"), format!("{first}\n{{\"outcome\":\"do")).unwrap();
    run("c", &["--resume"]);
    assert_eq!(
        fs::read(a.join("results.json")).unwrap(),
        fs::read(c.join("results.json")).unwrap()
    );
}
