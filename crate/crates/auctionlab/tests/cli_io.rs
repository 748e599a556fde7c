//! End-to-end tests of the `auctionlab` binary: exit codes, file outputs,
//! and rerun determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_auctionlab"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn sim_config(seeker_count: usize, depths: &[usize], seed: u64) -> String {
    serde_json::json!({
        "schema_version": 1,
        "seeker_count": seeker_count,
        "depth_grid": depths,
        "seed": seed,
        "bid_dist": {"family": "lognormal", "mu": 0.0, "sigma": 0.5},
        "pctr_dist": {"family": "positional_decay",
                      "quality": {"family": "uniform", "lo": 0.2, "hi": 1.0},
                      "noise": {"family": "uniform", "lo": 0.8, "hi": 1.2}},
        "erelevance_dist": {"family": "positional_decay",
                            "quality": {"family": "uniform", "lo": 0.2, "hi": 1.0},
                            "noise": {"family": "uniform", "lo": 0.8, "hi": 1.2}},
        "weight_dist": {"family": "uniform", "lo": 0.5, "hi": 2.0},
        "combiner": {"kind": "additive"}
    })
    .to_string()
}

#[test]
fn simulate_writes_outputs_and_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_file(dir.path(), "config.json", &sim_config(40, &[2, 3], 5));
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");

    for out in [&out_a, &out_b] {
        let output = run(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--per-seeker",
            "--quiet",
        ]);
        assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    }

    let a = fs::read(out_a.join("summary.csv")).unwrap();
    let b = fs::read(out_b.join("summary.csv")).unwrap();
    assert_eq!(a, b, "summary CSVs differ between identical runs");

    let summary = String::from_utf8(a).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(out_a.join("per_seeker.csv").exists());
    assert!(out_a.join("run_manifest.json").exists());
}

#[test]
fn simulate_seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_file(dir.path(), "config.json", &sim_config(30, &[2], 5));
    let base = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("base").to_str().unwrap(),
    ]);
    assert!(base.status.success());
    let reseeded = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("reseeded").to_str().unwrap(),
        "--seed",
        "99",
    ]);
    assert!(reseeded.status.success());
    let a = fs::read_to_string(dir.path().join("base/summary.csv")).unwrap();
    let b = fs::read_to_string(dir.path().join("reseeded/summary.csv")).unwrap();
    assert_ne!(a, b, "a different seed should change the sweep");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("reseeded/run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 99);
}

#[test]
fn simulate_rejects_malformed_config_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_file(dir.path(), "config.json", "{ this is not json");
    let out = dir.path().join("out");
    let output = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(!out.join("summary.csv").exists(), "failed run must not leave outputs");
    assert!(!out.join("run_manifest.json").exists());
}

#[test]
fn allocate_solves_the_capacity_fixture() {
    let dir = tempfile::tempdir().unwrap();
    // bids/pctr/erelevance chosen so the additive scores are [[0,1],[2,3]]
    let instance = serde_json::json!({
        "schema_version": 1,
        "seeker_id": "capacity",
        "bids": [1.0, 1.0],
        "pctr": [[0.0, 1.0], [1.0, 1.0]],
        "erelevance": [[0.0, 0.0], [1.0, 2.0]],
        "seeker_weight": 1.0
    })
    .to_string();
    let config = write_file(dir.path(), "instance.json", &instance);
    let out = dir.path().join("out");
    let output = run(&[
        "allocate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("gfp:") && stdout.contains("vcg:"), "stdout: {stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("allocation.json")).unwrap()).unwrap();
    assert_eq!(report["vcg"]["total_position_aware_score"], 3.0);
    assert_eq!(report["vcg"]["assignment"], serde_json::json!([0, 1]));
}

#[test]
fn allocate_single_job_instance_is_trivial() {
    let dir = tempfile::tempdir().unwrap();
    let instance = serde_json::json!({
        "bids": [2.0],
        "pctr": [[0.5]],
        "erelevance": [[0.3]],
        "seeker_weight": 1.5
    })
    .to_string();
    let config = write_file(dir.path(), "instance.json", &instance);
    let out = dir.path().join("out");
    let output = run(&[
        "allocate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("allocation.json")).unwrap()).unwrap();
    assert_eq!(report["gfp"], report["vcg"]);
}

#[test]
fn allocate_random_instance_shows_matching_dominance() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let n = 5;
    let matrix = |rng: &mut ChaCha8Rng, hi: f64| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..n).map(|_| rng.random_range(0.0..hi)).collect()).collect()
    };
    let instance = serde_json::json!({
        "bids": (0..n).map(|_| rng.random_range(0.2..3.0)).collect::<Vec<f64>>(),
        "pctr": matrix(&mut rng, 1.0),
        "erelevance": matrix(&mut rng, 2.0),
        "seeker_weight": 1.2
    })
    .to_string();
    let config = write_file(dir.path(), "instance.json", &instance);
    let out = dir.path().join("out");
    let output = run(&[
        "allocate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("allocation.json")).unwrap()).unwrap();
    let vcg = report["vcg"]["total_position_aware_score"].as_f64().unwrap();
    let gfp = report["gfp"]["total_position_aware_score"].as_f64().unwrap();
    assert!(vcg >= gfp, "matching total {vcg} below gfp total {gfp}");
}

#[test]
fn allocate_rejects_non_square_matrices_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let instance = serde_json::json!({
        "bids": [1.0, 2.0],
        "pctr": [[0.1, 0.2]],
        "erelevance": [[0.1, 0.2], [0.3, 0.4]],
        "seeker_weight": 1.0
    })
    .to_string();
    let config = write_file(dir.path(), "instance.json", &instance);
    let output = run(&[
        "allocate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("square") || stderr.contains("dimension"), "stderr: {stderr}");
}

#[test]
fn calibrate_recovers_alpha_and_required_weights() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("segment_id,seeker_weight,relevance\n");
    for w in [1.0_f64, 2.0, 4.0, 8.0] {
        csv.push_str(&format!("g,{},{}\n", w, 2.0 * w.sqrt()));
    }
    let config = write_file(dir.path(), "observations.csv", &csv);
    let targets = write_file(dir.path(), "targets.csv", "segment_id,target_relevance\ng,6.0\n");
    let out = dir.path().join("out");
    let output = run(&[
        "calibrate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--targets",
        targets.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    assert!((fit["alpha"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert!((fit["r_squared"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((fit["z"]["g"].as_f64().unwrap() - 2.0).abs() < 1e-9);

    let weights = fs::read_to_string(out.join("required_weights.csv")).unwrap();
    let value: f64 = weights.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((value - 9.0).abs() < 1e-6); // (6/2)^2
    assert!(out.join("dispersion.csv").exists());
}

#[test]
fn calibrate_constant_relevance_fits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_file(
        dir.path(),
        "observations.csv",
        "segment_id,seeker_weight,relevance\ng,1.0,3.0\ng,2.0,3.0\ng,4.0,3.0\n",
    );
    let out = dir.path().join("out");
    let output = run(&[
        "calibrate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    assert_eq!(fit["alpha"], 0.0);
    assert_eq!(fit["alpha_in_domain"], false);
}

#[test]
fn calibrate_single_weight_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_file(
        dir.path(),
        "observations.csv",
        "segment_id,seeker_weight,relevance\ng,2.0,3.0\ng,2.0,4.0\n",
    );
    let output = run(&[
        "calibrate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn optimize_weights_geometric_model() {
    let dir = tempfile::tempdir().unwrap();
    let config_text = serde_json::json!({
        "model": {
            "states": ["only"],
            "actions": [1.0],
            "gain": [[1.0]],
            "kernel": [[[1.0]]],
            "discount": 0.5
        }
    })
    .to_string();
    let config = write_file(dir.path(), "optimize.json", &config_text);
    let out = dir.path().join("out");
    let output = run(&[
        "optimize-weights",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let policy: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("policy.json")).unwrap()).unwrap();
    assert!((policy["values"][0].as_f64().unwrap() - 2.0).abs() < 1e-8);
}

#[test]
fn optimize_weights_matches_the_golden_policy() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let output = run(&[
        "optimize-weights",
        "--config",
        data.join("tiny_model.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let produced: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("policy.json")).unwrap()).unwrap();
    let golden: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(data.join("tiny_model_policy.golden.json")).unwrap())
            .unwrap();
    assert_eq!(produced["policy"], golden["policy"]);
    assert_eq!(produced["policy_weights"], golden["policy_weights"]);
    for (got, want) in produced["values"]
        .as_array()
        .unwrap()
        .iter()
        .zip(golden["values"].as_array().unwrap())
    {
        assert!((got.as_f64().unwrap() - want.as_f64().unwrap()).abs() < 1e-6);
    }
}

#[test]
fn optimize_weights_rejects_discount_one_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config_text = serde_json::json!({
        "model": {
            "states": ["only"],
            "actions": [1.0],
            "gain": [[1.0]],
            "kernel": [[[1.0]]],
            "discount": 1.0
        }
    })
    .to_string();
    let config = write_file(dir.path(), "optimize.json", &config_text);
    let output = run(&[
        "optimize-weights",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unknown_arguments_exit_2() {
    let output = run(&["simulate", "--definitely-not-a-flag"]);
    assert_eq!(output.status.code(), Some(2));
}
