//! End-to-end tests of the binary: artifact contents, exit codes,
//! overrides, and byte-level reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gibbsmix")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary launches")
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

fn two_point_gaussian_config(dir: &Path) -> String {
    let path = dir.join("exact.json");
    write(
        &path,
        r#"{
  "model": {"kind": "dirichlet_process", "theta": 1.0},
  "family": {"kind": "gaussian_known_variance", "variances": [1.0]},
  "prior": {"xi": [0.0], "nu": 1.0},
  "data": {"scalars": [0.0, 0.0]}
}"#,
    );
    path.to_str().unwrap().to_string()
}

#[test]
fn exact_two_point_gaussian_posterior() {
    let dir = tempfile::tempdir().unwrap();
    let config = two_point_gaussian_config(dir.path());
    for engine in ["subset-dp", "enumeration"] {
        let out = dir.path().join(engine);
        let result = run(&[
            "exact",
            "--config",
            &config,
            "--engine",
            engine,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "{result:?}");
        let text = fs::read_to_string(out.join("exact_posterior.json")).unwrap();
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        let posterior = json["posterior"].as_array().unwrap();
        assert!((posterior[0].as_f64().unwrap() - 0.535898).abs() < 1e-6);
        assert!((posterior[1].as_f64().unwrap() - 0.464102).abs() < 1e-6);
        assert!(out.join("manifest.json").exists());
    }
}

#[test]
fn fig3_pmf_matches_exact_fractions() {
    let dir = tempfile::tempdir().unwrap();
    let result = run(&[
        "fig3",
        "--theta",
        "1",
        "--n",
        "4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let text = fs::read_to_string(dir.path().join("fig3.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config: "));
    assert_eq!(lines.next().unwrap(), "a,pmf,cdf");
    let pmf: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(pmf.len(), 3);
    assert!((pmf[0] - 4.0 / 11.0).abs() < 1e-12);
    assert!((pmf[1] - 3.0 / 11.0).abs() < 1e-12);
    assert!((pmf[2] - 4.0 / 11.0).abs() < 1e-12);
}

#[test]
fn caps_refuse_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.json");
    write(
        &path,
        r#"{
  "model": {"kind": "dirichlet_process", "theta": 1.0},
  "family": {"kind": "poisson_gamma"},
  "prior": {"xi": [1.0], "nu": 1.0},
  "data": {"generate": {"weights": [0.5, 0.5], "component_means": [[1.0], [5.0]],
           "n": 25, "seed": 4}}
}"#,
    );
    let result = run(&[
        "exact",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("20"), "cap not named: {stderr}");

    // the --n override brings the same config under the cap
    let ok = run(&[
        "exact",
        "--config",
        path.to_str().unwrap(),
        "--n",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(ok.status.success());
}

#[test]
fn config_errors_exit_one_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.json");
    write(
        &path,
        r#"{
  "model": {"kind": "dirichlet_process", "thetaa": 1.0},
  "family": {"kind": "poisson_gamma"},
  "prior": {"xi": [1.0], "nu": 1.0},
  "data": {"scalars": [1.0]}
}"#,
    );
    let result = run(&[
        "exact",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("thetaa"), "field not named: {stderr}");

    let missing = run(&["exact", "--config", "/nonexistent/x.json"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical_apart_from_manifest_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    let config = two_point_gaussian_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let result = run(&["exact", "--config", &config, "--out", out.to_str().unwrap()]);
        assert!(result.status.success());
    }
    assert_eq!(
        fs::read(a.join("exact_posterior.json")).unwrap(),
        fs::read(b.join("exact_posterior.json")).unwrap()
    );
    let normalize = |path: &Path| -> serde_json::Value {
        let mut v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        v["timestamp_unix"] = 0.into();
        v["timestamp_utc"] = "".into();
        v
    };
    assert_eq!(
        normalize(&a.join("manifest.json")),
        normalize(&b.join("manifest.json"))
    );
}

#[test]
fn prior_shortcut_emits_a_normalized_csv() {
    let dir = tempfile::tempdir().unwrap();
    let result = run(&[
        "prior",
        "--theta",
        "1",
        "--n",
        "6",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let text = fs::read_to_string(dir.path().join("prior_on_t.csv")).unwrap();
    let total: f64 = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12, "prior sums to {total}");

    // both flag and config at once is a usage error
    let both = run(&["prior", "--theta", "1"]);
    assert_eq!(both.status.code(), Some(1));
}

#[test]
fn gibbs_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gibbs.json");
    write(
        &path,
        r#"{
  "model": {"kind": "dirichlet_process", "theta": 1.0},
  "family": {"kind": "poisson_gamma"},
  "prior": {"xi": [1.0], "nu": 1.0},
  "data": {"generate": {"weights": [0.5, 0.5], "component_means": [[1.0], [5.0]],
           "n": 15, "seed": 4}},
  "gibbs": {"seed": 7, "burn_in_sweeps": 50, "sample_sweeps": 300, "chains": 2}
}"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let result = run(&[
            "gibbs",
            "--config",
            path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "{result:?}");
    }
    let bytes = fs::read(a.join("gibbs_chains.json")).unwrap();
    assert_eq!(bytes, fs::read(b.join("gibbs_chains.json")).unwrap());
    let json: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    let pooled: f64 = json["pooled_posterior"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!((pooled - 1.0).abs() < 1e-12);

    // a different sampler seed changes the estimates
    let c = dir.path().join("c");
    let result = run(&[
        "gibbs",
        "--config",
        path.to_str().unwrap(),
        "--seed",
        "8",
        "--out",
        c.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    assert_ne!(bytes, fs::read(c.join("gibbs_chains.json")).unwrap());
}

#[test]
fn bounds_report_for_a_poisson_region() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bounds.json");
    write(
        &path,
        r#"{
  "model": {"kind": "dirichlet_process", "theta": 1.0},
  "family": {"kind": "poisson_gamma"},
  "prior": {"xi": [1.0], "nu": 1.0},
  "data": {"generate": {"weights": [0.5, 0.5], "component_means": [[1.0], [5.0]],
           "n": 10, "seed": 4}},
  "t": 2,
  "region": {"points": [[0.0], [1.0]]}
}"#,
    );
    let result = run(&[
        "bounds",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bound_report.json")).unwrap())
            .unwrap();
    assert_eq!(json["t"], 2);
    assert_eq!(json["phi_mode"], "exact");
    let bound = json["bound"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&bound));
    if json["preconditions_hold"].as_bool().unwrap() {
        assert!(json["posterior_at_t"].as_f64().unwrap() <= bound);
    }
}

#[test]
fn certify_and_capture_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("certify.json");
    write(
        &cert,
        r#"{
  "family": {"kind": "poisson_gamma"},
  "prior": {"xi": [2.0], "nu": 1.0},
  "lo": [1.0],
  "hi": [3.0]
}"#,
    );
    let result = run(&[
        "certify",
        "--config",
        cert.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let json: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("certificate.json")).unwrap(),
    )
    .unwrap();
    assert!(json["log_singleton_constant"].as_f64().unwrap().is_finite());
    assert!(json["hull"]["lo"][0].as_f64().unwrap() <= 1.0);

    let cap = dir.path().join("capture.json");
    write(
        &cap,
        r#"{
  "family": {"kind": "poisson_gamma"},
  "lo": [0.5],
  "hi": [5.5],
  "beta": 0.5,
  "n_grid": [10, 40],
  "num_seeds": 8,
  "master_seed": 3,
  "mixture": {"weights": [0.5, 0.5], "component_means": [[1.0], [5.0]]}
}"#,
    );
    let result = run(&[
        "capture",
        "--config",
        cap.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let text = fs::read_to_string(dir.path().join("capture_frequencies.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let freq: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&freq));
    }
}

#[test]
fn sweep_emits_rows_and_census() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.json");
    write(
        &path,
        r#"{
  "model": {"kind": "dirichlet_process", "theta": 1.0},
  "family": {"kind": "poisson_gamma"},
  "prior": {"xi": [1.0], "nu": 1.0},
  "mixture": {"weights": [0.5, 0.5], "component_means": [[1.0], [5.0]]},
  "t_star": 2,
  "exact_ns": [8],
  "mcmc_ns": [10],
  "gibbs": {"seed": 5, "burn_in_sweeps": 50, "sample_sweeps": 200, "chains": 2},
  "region": {"points": [[0.0], [1.0]]},
  "data_seed": 4,
  "census_threshold": 2
}"#,
    );
    let result = run(&[
        "sweep",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# config: "));
    assert_eq!(
        lines[1],
        "n,engine,posterior_t_star,se,c,phi_hat,preconditions_hold,bound,phi_exact,\
         bound_exact_phi,excluded,running_max"
    );
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("8,exact,"));
    assert!(lines[3].starts_with("10,gibbs,"));
    let census: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("census.json")).unwrap())
            .unwrap();
    assert_eq!(census["threshold"], 2);
    assert_eq!(census["sweeps"], 400);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    let artifacts: Vec<&str> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(artifacts, vec!["sweep.csv", "census.json"]);
}

#[test]
fn env_var_sets_the_default_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let config = two_point_gaussian_config(dir.path());
    let out = dir.path().join("from-env");
    let result = Command::new(bin())
        .args(["exact", "--config", &config])
        .env("GIBBSMIX_OUT_DIR", out.to_str().unwrap())
        .output()
        .unwrap();
    assert!(result.status.success(), "{result:?}");
    assert!(out.join("exact_posterior.json").exists());
    assert!(out.join("manifest.json").exists());
}
