use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lambdahat::{quad_lambda_estimates, sample_true, EstimateRecord, EstimatorSettings, ModelSpec, TrueDistribution};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lambdahat"));
    c.env_remove("LAMBDAHAT_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn estimate_smoke_prints_finite_record() {
    let o = run(&[
        "estimate", "--model", "poisson-mix:2", "--true", "poisson:3", "--n", "750", "--seed", "7",
        "--iters", "1200", "--burn-in", "600",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rec: EstimateRecord = serde_json::from_slice(&o.stdout).unwrap();
    assert!(rec.lambda_t.is_finite());
    assert_eq!(rec.n, 750);
    assert_eq!(rec.metadata.method, "mcmc");
}

#[test]
fn estimate_oracle_matches_library() {
    let o = run(&["estimate", "--model", "example1", "--true", "normal:0,1", "--n", "300", "--seed", "4", "--oracle"]);
    assert_eq!(code(&o), 0);
    let rec: EstimateRecord = serde_json::from_slice(&o.stdout).unwrap();
    let truth = TrueDistribution::Normal { mean: 0.0, sd: 1.0 };
    let data = sample_true(&truth, 300, 4).unwrap();
    let mut want = quad_lambda_estimates(
        &ModelSpec::example1_uniform_normal(),
        Some(&truth),
        &data,
        &EstimatorSettings::default(),
    )
    .unwrap();
    want.seed = 4;
    assert_eq!(rec, want);
    assert!(rec.metadata.mcmc.is_none());
}

#[test]
fn usage_errors_exit_2() {
    let cases: [&[&str]; 6] = [
        &["estimate", "--model", "example1", "--true", "normal:0,1", "--n", "1"],
        &["estimate", "--model", "nope", "--true", "normal:0,1", "--n", "50"],
        &["estimate", "--model", "example1", "--true", "poisson:3", "--n", "50"],
        &["estimate", "--model", "gauss-mix:4", "--true", "normal:0,1", "--n", "50", "--oracle"],
        &["estimate", "--model", "example1", "--true", "normal:0,1", "--n", "50", "--iters", "10", "--burn-in", "20"],
        &["no-such-command"],
    ];
    for args in cases {
        let o = run(args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn malformed_configs_exit_2_and_list_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.json", r#"{"study":"estimate","replicatez":3,"mcmc":{"iter":10}}"#);
    let o = run(&["experiment", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("replicatez") && err.contains("mcmc.iter"), "{err}");

    let cfg = write(dir.path(), "b.json", r#"{"study":"table-one"}"#);
    assert_eq!(code(&run(&["experiment", &cfg])), 2);
    let cfg = write(dir.path(), "c.json", "{not json");
    assert_eq!(code(&run(&["experiment", &cfg])), 2);
    assert_eq!(code(&run(&["experiment", "/nonexistent/config.json"])), 2);
    let cfg = write(dir.path(), "d.json", r#"{"study":"estimate"}"#);
    assert_eq!(code(&run(&["outlier-study", "--config", &cfg])), 2);
}

fn small_config(dir: &Path) -> String {
    write(
        dir,
        "t1.json",
        r#"{"study":"estimate","replicates":3,"sample_sizes":[120],
            "mcmc":{"total_iters":800,"burn_in":400},"base_seed":11}"#,
    )
}

#[test]
fn table1_layout_and_rerun_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for (out, jobs) in [(&out_a, "1"), (&out_b, "4")] {
        let o = run(&["experiment", &cfg, "--out", out.to_str().unwrap(), "--jobs", jobs]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let t1 = fs::read_to_string(out_a.join("table1.csv")).unwrap();
    let lines: Vec<&str> = t1.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("n,metric,"));
    let metrics: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(metrics, ["Mean", "Bias", "Variance", "MSE"]);
    for f in ["summary.json", "table1.csv", "table2.csv", "table3.csv", "records.jsonl"] {
        assert_eq!(
            fs::read(out_a.join(f)).unwrap(),
            fs::read(out_b.join(f)).unwrap(),
            "{f} differs between runs"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out_a.join("manifest.json")).unwrap()).unwrap();
    for f in manifest["files"].as_array().unwrap() {
        assert!(out_a.join(f.as_str().unwrap()).is_file());
    }
    assert_eq!(manifest["seeds"], serde_json::json!([11, 12, 13]));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let env_out = dir.path().join("env-out");
    let o = bin()
        .args(["experiment", &cfg, "--replicates", "1"])
        .env("LAMBDAHAT_OUT_DIR", &env_out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(env_out.join("table1.csv").is_file());
}

#[test]
fn oracle_check_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["oracle-check", "--out", dir.path().to_str().unwrap(), "--n", "200"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rep["pass"], serde_json::json!(true));
    assert_eq!(rep["comparisons"].as_array().unwrap().len(), 5);
}

#[test]
fn plot_polylines_reference_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "c.csv", "x,a,b\n1,0.5,0.7\n2,0.6,0.71\n3,0.65,0.72\n");
    let svg1 = dir.path().join("1.svg");
    let svg2 = dir.path().join("2.svg");
    for svg in [&svg1, &svg2] {
        assert_eq!(code(&run(&["plot", &csv, svg.to_str().unwrap()])), 0);
    }
    let text = fs::read_to_string(&svg1).unwrap();
    assert_eq!(text.matches("<polyline").count(), 2);
    assert!(!text.contains("class=\"reference\""));
    assert_eq!(fs::read(&svg1).unwrap(), fs::read(&svg2).unwrap());

    let outlier = write(
        dir.path(),
        "curve_outlier.csv",
        "delta,lambda_I,lambda_T,true_lambda\n0,1.2,1.3,1.25\n100,3,1.5,1.25\n200,9,1.7,1.25\n",
    );
    let svg = dir.path().join("o.svg");
    assert_eq!(code(&run(&["plot", &outlier, svg.to_str().unwrap()])), 0);
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<polyline").count(), 2);
    assert_eq!(text.matches("class=\"reference\"").count(), 1);

    let empty = write(dir.path(), "e.csv", "");
    assert_eq!(code(&run(&["plot", &empty, svg.to_str().unwrap()])), 2);
    let header_only = write(dir.path(), "h.csv", "x,a\n");
    assert_eq!(code(&run(&["plot", &header_only, svg.to_str().unwrap()])), 2);
}
