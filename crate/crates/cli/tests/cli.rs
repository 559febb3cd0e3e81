use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn thinrod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thinrod"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Rows of `x1, x2, |u−H|, |∇u−∇H|, near_flag`.
fn rows(csv: &str) -> Vec<[f64; 5]> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
            [v[0], v[1], v[2], v[3], v[4]]
        })
        .collect()
}

const LONG_ROD: &str = "L = 10.0\ndelta = 0.43744331762962\nsigma0 = 2.0\n\
    xmin = -7.5\nxmax = 7.5\nymin = -3.0\nymax = 3.0\nnx = 121\nny = 49\n";

#[test]
fn two_by_two_grid_gives_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", "nx = 2\nny = 2\n");
    let o = thinrod(&["fieldmap", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(
        text.lines().next().unwrap(),
        "x1,x2,abs_u_minus_h,abs_grad_u_minus_grad_h,near_flag"
    );
    assert_eq!(rows(&text).len(), 4);
}

#[test]
fn long_rod_gradient_peaks_at_a_cap() {
    let dir = tempfile::tempdir().unwrap();
    let delta = 0.43744331762962;
    for (name, a) in [("x", "[1.0, 0.0]"), ("y", "[0.0, 1.0]"), ("xy", "[1.0, 1.0]")] {
        let cfg = config(dir.path(), &format!("{name}.toml"), &format!("{LONG_ROD}a = {a}\n"));
        let o = thinrod(&["fieldmap", "--config", &cfg, "--model", "bem"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let best = rows(&stdout(&o))
            .into_iter()
            .filter(|r| r[4] == 0.0 && (r[0].abs() > 5.0 || r[1].abs() > delta))
            .max_by(|a, b| a[3].total_cmp(&b[3]))
            .unwrap();
        let d = ((best[0].abs() - 5.0).powi(2) + best[1].powi(2)).sqrt();
        assert!(
            d <= 2.0 * delta,
            "a = {a}: argmax at ({}, {}), {d} from the nearer cap",
            best[0],
            best[1]
        );
    }
}

#[test]
fn asymptotic_map_scales_with_background_magnitude() {
    let dir = tempfile::tempdir().unwrap();
    let one = config(dir.path(), "one.toml", &format!("{LONG_ROD}a = [1.0, 0.0]\n"));
    let diag = config(dir.path(), "diag.toml", &format!("{LONG_ROD}a = [1.0, 1.0]\n"));
    let a = rows(&stdout(&thinrod(&[
        "fieldmap",
        "--config",
        &one,
        "--model",
        "asymptotic",
    ])));
    let b = rows(&stdout(&thinrod(&[
        "fieldmap",
        "--config",
        &diag,
        "--model",
        "asymptotic",
    ])));
    assert_eq!(a.len(), b.len());
    let mut compared = 0;
    for (p, q) in a.iter().zip(&b) {
        if p[3].is_finite() && p[4] == 0.0 {
            assert!(
                (q[3] - 2f64.sqrt() * p[3]).abs() <= 1e-12 * q[3].max(1.0),
                "{p:?} {q:?}"
            );
            compared += 1;
        }
    }
    assert!(compared > 1000);
}

#[test]
fn outputs_are_bit_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", "nx = 21\nny = 11\nnoise_rms = 1e-3\n");
    let f1 = thinrod(&["forward", "--config", &cfg, "--threads", "2"]);
    let f2 = thinrod(&["forward", "--config", &cfg, "--threads", "2"]);
    assert!(f1.status.success());
    assert_eq!(f1.stdout, f2.stdout);
    let i1 = thinrod(&[
        "invert",
        "--synthesize",
        "--config",
        &cfg,
        "--seed",
        "7",
        "--model",
        "asymptotic",
    ]);
    let i2 = thinrod(&[
        "invert",
        "--synthesize",
        "--config",
        &cfg,
        "--seed",
        "7",
        "--model",
        "asymptotic",
    ]);
    assert_eq!(i1.stdout, i2.stdout);
    let i3 = thinrod(&[
        "invert",
        "--synthesize",
        "--config",
        &cfg,
        "--seed",
        "8",
        "--model",
        "asymptotic",
    ]);
    assert_ne!(i1.stdout, i3.stdout);
}

#[test]
fn forward_and_asymptotic_dump_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", "nx = 5\nny = 3\nymin = 0.5\nymax = 1.5\n");
    for cmd in ["forward", "asymptotic"] {
        let out = dir.path().join(format!("{cmd}.csv"));
        let o = thinrod(&[cmd, "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x1,x2,u,ux,uy,near_boundary_flag");
        assert_eq!(text.lines().count(), 16);
        // u ≈ x₁ for a = (1, 0) this far from a thin rod
        let first: Vec<f64> = text
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .map(|s| s.parse().unwrap())
            .collect();
        assert!((first[2] - first[0]).abs() < 0.05, "{cmd}: {first:?}");
    }
}

#[test]
fn compare_reports_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", "deltas = [0.1, 0.05]\nprobe_count = 32\n");
    let o = thinrod(&["compare", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r["nodes"].as_u64().unwrap() > 100);
        assert!(r["seconds"].as_f64().unwrap() >= 0.0);
        let d = r["delta"].as_f64().unwrap();
        assert!(r["error"].as_f64().unwrap() < 0.02 * d);
    }
    assert!(v["ratio_strictly_decreasing"].is_boolean());
}

#[test]
fn compare_rejects_a_disc() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", "L = 0.0\ndelta = 0.5\n");
    let o = thinrod(&["compare", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("L = 0"), "{}", stderr(&o));
}

#[test]
fn validate_passes_and_detects_corruption() {
    let o = thinrod(&["validate", "--verbose"]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 9, "{text}");
    assert!(text.contains("margin"));

    let o = thinrod(&["validate", "--corrupt-weights"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("[FAIL] geometry closure")), "{text}");
}

#[test]
fn invert_round_trip_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "c.toml",
        "L = 2.0\ndelta = 0.05\nsigma0 = 2.0\ncenter = [0.3, -0.2]\nangle = 0.4\na = [1.0, 1.0]\n",
    );
    let data = dir.path().join("m.csv");
    let o = thinrod(&[
        "invert",
        "--synthesize",
        "--model",
        "asymptotic",
        "--config",
        &cfg,
        "--write-data",
        data.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["truth"]["endpoint_error"].as_f64().unwrap() < 1e-3);
    assert!((v["strength"].as_f64().unwrap() - 0.05).abs() < 0.01 * 0.05);

    let o = thinrod(&["invert", "--config", &cfg, "--data", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["converged"], Value::Bool(true));
    assert!(v.get("truth").is_none());
    let q = v["endpoints"][1].as_array().unwrap();
    let want = [0.3 + 0.4f64.cos(), -0.2 + 0.4f64.sin()];
    assert!((q[0].as_f64().unwrap() - want[0]).abs() < 1e-3 && (q[1].as_f64().unwrap() - want[1]).abs() < 1e-3);
}

#[test]
fn noisy_inversion_stays_within_five_thicknesses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "c.toml",
        "L = 2.0\ndelta = 0.05\ncenter = [0.3, -0.2]\nangle = 0.4\na = [1.0, 1.0]\nnoise_rms = 1e-3\nsensor_radius = 3.0\nsensor_count = 128\n",
    );
    let o = thinrod(&[
        "invert",
        "--synthesize",
        "--model",
        "asymptotic",
        "--config",
        &cfg,
        "--seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let err = v["truth"]["endpoint_error"].as_f64().unwrap();
    assert!(err < 5.0 * 0.05, "endpoint error {err}");
}

#[test]
fn invert_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = thinrod(&["invert", "--data", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hint"), "{}", stderr(&o));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x1,x2,u\n5,0,5.0\n0,5,oops\n").unwrap();
    let o = thinrod(&["invert", "--data", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = thinrod(&["invert"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_usage_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", "L = 2.0\nsigma_0 = 3.0\n");
    let o = thinrod(&["fieldmap", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sigma_0"));

    let cfg = config(dir.path(), "d.toml", "sigma0 = 1.0\n");
    let o = thinrod(&["fieldmap", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sigma0"), "{}", stderr(&o));
}
