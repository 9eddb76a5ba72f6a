use std::path::Path;
use std::process::{Command, Output};

use ph_core::grid::{load_grid, save_grid, ScalarGrid};

fn ph_tool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ph-tool")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_ring(dir: &Path) -> String {
    // 8-bit graymap: border 51/255 = 0.2, center 204/255 = 0.8
    let mut bytes = b"P5\n3 3\n255\n".to_vec();
    bytes.extend([51, 51, 51, 51, 204, 51, 51, 51, 51]);
    let path = dir.join("ring.pgm");
    std::fs::write(&path, bytes).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn ring_diagram_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    let ring = write_ring(dir.path());
    let o = ph_tool(&["diagram", "--in", &ring, "--dims", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("1,0.2,0.8,"), "{}", rows[0]);
}

#[test]
fn identical_maps_have_zero_loss() {
    let dir = tempfile::tempdir().unwrap();
    let ring = write_ring(dir.path());
    let o = ph_tool(&["loss", "--pred", &ring, "--gt", &ring, "--window", "3"]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["total"], 0.0);
}

#[test]
fn ring_loss_and_gradient_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gt = ScalarGrid::from_dims(&[3, 3], vec![0.2, 0.2, 0.2, 0.2, 0.8, 0.2, 0.2, 0.2, 0.2]).unwrap();
    let pred = ScalarGrid::from_dims(&[3, 3], vec![0.3, 0.3, 0.3, 0.3, 0.7, 0.3, 0.3, 0.3, 0.3]).unwrap();
    save_grid(&gt, d.join("gt.raw")).unwrap();
    save_grid(&pred, d.join("pred.raw")).unwrap();
    let p = |name: &str| d.join(name).to_str().unwrap().to_string();
    let o = ph_tool(&[
        "loss", "--pred", &p("pred.raw"), "--gt", &p("gt.raw"), "--window", "3", "--filtration", "plain",
        "--no-frame", "--alpha", "1", "--grad-out", &p("grad.raw"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    // f32 storage of 0.3/0.7 makes the match cost only approximately 0.02
    assert!((report["topo"].as_f64().unwrap() - 0.02).abs() < 1e-6);
    let grad = load_grid(d.join("grad.raw")).unwrap();
    let nonzero: Vec<(usize, f64)> = grad
        .values()
        .iter()
        .enumerate()
        .filter(|(_, g)| **g != 0.0)
        .map(|(i, g)| (i, *g))
        .collect();
    assert_eq!(nonzero.len(), 9);
    assert!((grad.values()[4] - (-0.2 + 2.0 * (0.7 - 0.8) / 9.0)).abs() < 1e-6);
}

#[test]
fn exit_codes() {
    let o = ph_tool(&["loss", "--pred", "/no/such/pred.pgm", "--gt", "/no/such/gt.pgm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/pred.pgm"));
    assert_eq!(ph_tool(&["loss", "--bogus"]).status.code(), Some(1));
    assert_eq!(ph_tool(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(ph_tool(&["--help"]).status.code(), Some(0));
    assert_eq!(ph_tool(&["loss", "--help"]).status.code(), Some(0));
}

#[test]
fn help_lists_every_command() {
    let text = stdout(&ph_tool(&["--help"]));
    for cmd in ["diagram", "match", "loss", "optimize", "synth", "metrics", "dt", "--seed", "--threads", "--format"] {
        assert!(text.contains(cmd), "missing {cmd}");
    }
}

#[test]
fn distance_transform_then_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let o = ph_tool(&["synth", "--size", "64", "--maps", "1", "--errors", "2", "--trials", "1", "--gt-out", &p("gt"), "--csv", &p("d.csv")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(p("d.csv")).unwrap().starts_with("kind,trial,step,delta\n"));
    let mask = p("gt/gt_0.pgm");
    assert!(ph_tool(&["dt", "--in", &mask, "--out", &p("dt.raw"), "--truncation", "20"]).status.success());
    let dt = load_grid(p("dt.raw")).unwrap();
    assert!(dt.values().iter().all(|v| (0.0..=1.0).contains(v)));
    let o = ph_tool(&["metrics", "--pred", &mask, "--gt", &mask]);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["quality"], 1.0);
    assert_eq!(report["betti_error"], 0.0);
    let o = ph_tool(&["metrics", "--pred", &p("dt.raw"), "--gt", &p("dt.raw"), "--threshold", "0.025", "--format", "csv"]);
    assert_eq!(stdout(&o), "correctness,completeness,quality,betti_error\n1,1,1,0\n");
}

#[test]
fn matching_two_diagrams() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    std::fs::write(&a, "dim,birth,death\n1,0.3,0.7\n").unwrap();
    std::fs::write(&b, "dim,birth,death\n1,0.2,0.8\n").unwrap();
    let o = ph_tool(&["match", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap()]);
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((m["total_cost"].as_f64().unwrap() - 0.02).abs() < 1e-12);
    assert_eq!(m["pairs"], serde_json::json!([[0, 0]]));
}
