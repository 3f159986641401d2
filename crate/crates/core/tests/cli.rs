use std::path::Path;
use std::process::{Command, Output};

use evfilt::design::design_classical_matrix_ls;
use evfilt::experiments::{target_exponential_kernel, ExperimentConfig, GraphConfig, ResultTable};
use evfilt::io::{self, fmt_f64};
use evfilt::{build_shift, eigendecompose, FilterSpec, ShiftKind};

fn evfilt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evfilt"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn graph_ring_writes_eight_edges() {
    let dir = tempfile::tempdir().unwrap();
    let o = evfilt(dir.path(), &["graph", "ring", "--n", "8", "--out", "ring.tsv"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("edges 8"));
    let g = io::read_edge_list(&std::fs::read_to_string(dir.path().join("ring.tsv")).unwrap()).unwrap();
    assert_eq!((g.n(), g.num_edges()), (8, 8));
}

#[test]
fn graph_generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.tsv", "b.tsv"] {
        let o = evfilt(dir.path(), &["graph", "community", "--n", "64", "--seed", "7", "--out", out]);
        assert!(o.status.success());
    }
    let a = std::fs::read(dir.path().join("a.tsv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.tsv")).unwrap());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(evfilt(dir.path(), &["graph", "knn", "--k", "0"]).status.code(), Some(2));
    assert_eq!(evfilt(dir.path(), &["graph", "moebius"]).status.code(), Some(2));
    assert_eq!(evfilt(dir.path(), &["experiment", "spectral"]).status.code(), Some(2));
    assert_eq!(
        evfilt(dir.path(), &["experiment", "consensus", "--orders", "5..2"]).status.code(),
        Some(2)
    );
}

#[test]
fn identity_design_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let o = evfilt(
        dir.path(),
        &["design", "--generator", "ring", "--n", "10", "--family", "cev", "-K", "2", "--target", "identity"],
    );
    assert!(o.status.success());
    let nse: f64 = stdout(&o).trim().strip_prefix("nse ").unwrap().parse().unwrap();
    assert!(nse <= 1e-12);
    assert!(dir.path().join("filter.json").exists() && dir.path().join("report.json").exists());
}

#[test]
fn infeasible_delta_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = evfilt(
        dir.path(),
        &["design", "--generator", "ring", "--n", "6", "--family", "evarma1", "--delta", "1.5", "--target", "identity"],
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn design_matches_library_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let o = evfilt(
        dir.path(),
        &[
            "design", "--generator", "community", "--n", "32", "--seed", "11", "--family", "classical", "-K", "6",
            "--target", "exp-kernel", "--gamma", "3", "--mu", "0.75",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let cfg = GraphConfig {
        generator: "community".into(),
        n: 32,
        ..GraphConfig::default()
    };
    let s = build_shift::<f64>(&cfg.build(11).unwrap(), ShiftKind::Laplacian).unwrap();
    let dec = eigendecompose(&s).unwrap();
    let target = dec.synthesize_diagonal(&target_exponential_kernel(dec.eigvals(), 3.0, 0.75));
    let r = design_classical_matrix_ls(&s, &target, 6).unwrap();
    assert_eq!(stdout(&o).trim(), format!("nse {}", fmt_f64(r.nse)));
    let stored = std::fs::read_to_string(dir.path().join("filter.json")).unwrap();
    assert_eq!(stored, r.fitted.to_json().unwrap());
}

fn write_signal(dir: &Path, name: &str, values: &[f64]) {
    let x = evfilt::GraphSignal::from_vec(values.to_vec());
    std::fs::write(dir.join(name), io::write_signal_csv(&x)).unwrap();
}

#[test]
fn apply_and_simulate_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(evfilt(d, &["graph", "knn", "--n", "12", "--k", "3", "--seed", "2", "--out", "g.tsv"]).status.success());
    for (family, k) in [("cev", "3"), ("nv", "2"), ("ev-arma1", "1"), ("siev", "2")] {
        let o = evfilt(d, &["design", "--graph", "g.tsv", "--family", family, "-K", k, "--target", "lowpass"]);
        assert!(o.status.success(), "{family}: {}", String::from_utf8_lossy(&o.stderr));
        write_signal(d, "x.csv", &(0..12).map(|i| (i as f64 * 0.7).sin()).collect::<Vec<_>>());
        let common = ["--graph", "g.tsv", "--filter", "filter.json", "--signal", "x.csv", "--tol", "1e-13"];
        let a = evfilt(d, &[&["apply"][..], &common, &["--out", "a.csv"]].concat());
        let b = evfilt(d, &[&["simulate"][..], &common, &["--out", "b.csv", "--trace", "t.json"]].concat());
        assert!(a.status.success() && b.status.success(), "{family}");
        let ya = io::read_signal_csv::<f64>(&std::fs::read_to_string(d.join("a.csv")).unwrap()).unwrap();
        let yb = io::read_signal_csv::<f64>(&std::fs::read_to_string(d.join("b.csv")).unwrap()).unwrap();
        let gap = (ya.values() - yb.values()).norm() / ya.norm().max(1e-300);
        assert!(gap <= 1e-9, "{family}: {gap:.3e}");
        assert!(stdout(&b).contains("violations 0"));
    }
}

#[test]
fn zero_signal_gives_zero_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(evfilt(d, &["graph", "path", "--n", "5", "--out", "g.tsv"]).status.success());
    assert!(evfilt(d, &["design", "--graph", "g.tsv", "--family", "cev", "-K", "2"]).status.success());
    write_signal(d, "z.csv", &[0.0; 5]);
    let o = evfilt(d, &["simulate", "--graph", "g.tsv", "--filter", "filter.json", "--signal", "z.csv"]);
    assert!(o.status.success());
    let y = io::read_signal_csv::<f64>(&std::fs::read_to_string(d.join("output.csv")).unwrap()).unwrap();
    assert!(y.values().iter().all(|&v| v == 0.0));
}

#[test]
fn wrong_signal_length_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(evfilt(d, &["graph", "ring", "--n", "6", "--out", "g.tsv"]).status.success());
    assert!(evfilt(d, &["design", "--graph", "g.tsv", "--family", "classical", "-K", "2"]).status.success());
    write_signal(d, "x.csv", &[1.0, 2.0, 3.0]);
    for cmd in ["apply", "simulate"] {
        let o = evfilt(d, &[cmd, "--graph", "g.tsv", "--filter", "filter.json", "--signal", "x.csv"]);
        assert_eq!(o.status.code(), Some(4), "{cmd}");
    }
}

#[test]
fn filter_from_another_graph_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(evfilt(d, &["graph", "complete", "--n", "6", "--out", "k6.tsv"]).status.success());
    assert!(evfilt(d, &["graph", "ring", "--n", "6", "--out", "c6.tsv"]).status.success());
    assert!(evfilt(d, &["design", "--graph", "k6.tsv", "--family", "cev", "-K", "1", "--target", "consensus"])
        .status
        .success());
    write_signal(d, "x.csv", &[1.0; 6]);
    let o = evfilt(d, &["simulate", "--graph", "c6.tsv", "--filter", "filter.json", "--signal", "x.csv"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn consensus_row_count_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["r1", "r2"] {
        let o = evfilt(d, &["experiment", "consensus", "--n", "16", "--orders", "1..6", "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = std::fs::read_to_string(d.join("r1/consensus.csv")).unwrap();
    let families = ExperimentConfig::preset("consensus").unwrap().families.map_or(4, |f| f.len());
    assert_eq!(csv.lines().count() - 1, 6 * families);
    assert_eq!(csv, std::fs::read_to_string(d.join("r2/consensus.csv")).unwrap());
    let json = std::fs::read_to_string(d.join("r1/consensus.json")).unwrap();
    let table: ResultTable = serde_json::from_str(&json).unwrap();
    assert_eq!(table.to_csv(), csv);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"graph": {"generator": "ring", "n": 10}, "families": ["classical"]}"#).unwrap();
    let o = evfilt(d, &["experiment", "response", "--config", "cfg.json", "--orders", "2,4", "--out", "r"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("r/response.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    std::fs::write(d.join("bad.json"), r#"{"graf": {}}"#).unwrap();
    let o = evfilt(d, &["experiment", "response", "--config", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn complex_field_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(evfilt(d, &["graph", "ring", "--n", "6", "--out", "g.tsv"]).status.success());
    let o = evfilt(d, &["design", "--graph", "g.tsv", "--field", "complex", "--family", "cev", "-K", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let g = io::read_edge_list(&std::fs::read_to_string(d.join("g.tsv")).unwrap()).unwrap();
    let s = build_shift::<num_complex::Complex64>(&g, ShiftKind::Laplacian).unwrap();
    let f = FilterSpec::from_json(&std::fs::read_to_string(d.join("filter.json")).unwrap(), &s).unwrap();
    assert_eq!(f.order(), 2);
    std::fs::write(d.join("x.csv"), "re,im\n1,0\n0,1\n1,1\n0,0\n2,-1\n1,0\n").unwrap();
    let o = evfilt(d, &["apply", "--graph", "g.tsv", "--field", "complex", "--filter", "filter.json", "--signal", "x.csv"]);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(d.join("output.csv")).unwrap().starts_with("re,im\n"));
}
