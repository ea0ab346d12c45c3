use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bmsi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bmsi")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn config1(n_sweeps: usize) -> Value {
    json!({
        "schema": 1,
        "kind": "oscillator_infer",
        "preset": 1,
        "inference": { "sampler": { "n_sweeps": n_sweeps, "burn_in": n_sweeps / 2, "thinning": 5, "seed": 1 } }
    })
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).map(str::to_owned).collect()
}

#[test]
fn simulate_config1_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config1(100));
    let out = tmp.path().join("out");
    let o = bmsi(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&out.join("trajectory.csv"));
    assert_eq!(rows.len(), 2001 + 1);
    assert_eq!(rows[0].split(',').count(), 4);
    let first: Vec<f64> = rows[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(first, vec![0.0, 0.0, 2.0, 4.0]);
    let truth: Value = serde_json::from_str(&fs::read_to_string(out.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["network"]["terms"].as_array().unwrap().len(), 4);
}

#[test]
fn missing_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = config1(100);
    v.as_object_mut().unwrap().remove("kind");
    let cfg = write_config(tmp.path(), "c.json", &v);
    let o = bmsi(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kind"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = config1(100);
    v["inference"]["sampler"]["n_sweep"] = json!(10);
    let cfg = write_config(tmp.path(), "c.json", &v);
    let o = bmsi(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_sweep"), "{}", stderr(&o));
}

#[test]
fn single_node_without_noise_is_pure_drift() {
    let tmp = tempfile::tempdir().unwrap();
    let v = json!({
        "schema": 1,
        "kind": "oscillator_infer",
        "network": { "n_nodes": 1, "omega": [0.7], "terms": [], "l2_true": 1, "l3_true": 1 },
        "sim": { "dt": 0.1, "n_steps": 50, "sigma_d": 0.0, "sigma_o": 0.0, "x0": [0.3], "seed": 4 }
    });
    let cfg = write_config(tmp.path(), "c.json", &v);
    let o = bmsi(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for (m, row) in data_rows(&tmp.path().join("trajectory.csv")).iter().skip(1).enumerate() {
        let x: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((x - (0.3 + 0.7 * 0.1 * m as f64)).abs() < 1e-12, "row {m}: {x}");
    }
}

fn infer(tmp: &Path, cfg: &Path, trajectory: &str) -> Output {
    let traj = tmp.join("t.csv");
    fs::write(&traj, trajectory).unwrap();
    bmsi(&[
        "infer",
        "--config",
        cfg.to_str().unwrap(),
        "--trajectory",
        traj.to_str().unwrap(),
        "--out",
        tmp.join("out").to_str().unwrap(),
    ])
}

#[test]
fn empty_trajectory_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config1(100));
    let o = infer(tmp.path(), &cfg, "");
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = infer(tmp.path(), &cfg, "t,x1,x2,x3\n");
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn node_count_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config1(100));
    let o = infer(tmp.path(), &cfg, "t,x1,x2\n0,0,1\n0.1,0.1,1.1\n0.2,0.2,1.2\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("2 phase columns"), "{}", stderr(&o));
}

#[test]
fn reproduce_config1_recovers_edges_and_is_thread_invariant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config1(3000));
    let run = |threads: &str, dir: &str| {
        let out = tmp.path().join(dir);
        let o = bmsi(&["reproduce", "--id", "1", "--config", cfg.to_str().unwrap(), "--threads", threads, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let a = run("1", "a");
    let b = run("1", "b");
    let c = run("3", "c");
    for f in ["c_pairwise.csv", "c_asym.csv", "c_sym.csv", "d.csv", "theta_hat.csv", "diagnostics.json", "metrics.json"] {
        let x = fs::read(a.join(f)).unwrap();
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f} differs between reruns");
        assert_eq!(x, fs::read(c.join(f)).unwrap(), "{f} differs across thread counts");
    }
    let m: Value = serde_json::from_str(&fs::read_to_string(a.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["exact"], json!(true), "{m}");
    let edges: Vec<&str> = m["edges_hat"].as_array().unwrap().iter().map(|e| e.as_str().unwrap()).collect();
    assert_eq!(edges.len(), 4, "{edges:?}");

    // pairwise grid: row i, column j holds P(j drives i)
    let grid = data_rows(&a.join("c_pairwise.csv"));
    let p = |i: usize, j: usize| -> f64 { grid[i].split(',').nth(j).unwrap().parse().unwrap() };
    assert!(p(2, 1) > 0.5 && p(3, 1) > 0.5);
    assert!(p(1, 2) < 0.5 && p(1, 3) < 0.5 && p(2, 3) < 0.5 && p(3, 2) < 0.5);
}

#[test]
fn single_point_sweep_has_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let v = json!({
        "schema": 1,
        "kind": "sweep",
        "preset": 1,
        "inference": { "sampler": { "n_sweeps": 300, "burn_in": 100, "thinning": 5 } },
        "sweep": { "axis": "sigma_d", "values": [0.1], "repeats": 2 }
    });
    let cfg = write_config(tmp.path(), "c.json", &v);
    let o = bmsi(&["sweep", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&tmp.path().join("sweep.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("sigma_d,runs"));
    assert_eq!(data_rows(&tmp.path().join("sweep_runs.csv")).len(), 3);
}

#[test]
fn metronome_window_beyond_run_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let v = json!({
        "schema": 1,
        "kind": "metronome_infer",
        "metronome": { "mechanics": { "t_end": 100.0 }, "windows": [50, 200] }
    });
    let cfg = write_config(tmp.path(), "c.json", &v);
    let o = bmsi(&["metronome", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn bad_reproduce_id_fails() {
    let o = bmsi(&["reproduce", "--id", "4"]);
    assert!(!o.status.success());
}
