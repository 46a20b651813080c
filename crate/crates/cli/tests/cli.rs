use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hdinfer::inference::InferenceReport;
use hdinfer::simharness::CoverageReport;

fn hdinfer(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdinfer"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Centered, mutually orthogonal columns (exact in floating point).
const TOY_X: [[f64; 3]; 10] = [
    [1., 1., 1.],
    [-1., 1., -1.],
    [1., -1., -1.],
    [-1., -1., 1.],
    [1., 1., 1.],
    [-1., 1., -1.],
    [1., -1., -1.],
    [-1., -1., 1.],
    [0., 0., 0.],
    [0., 0., 0.],
];
const TOY_Y: [f64; 10] = [2.5, -0.3, 1.7, -2.2, 3.1, 0.4, 0.9, -1.8, 0.2, -0.6];

fn toy_files(dir: &Path) {
    let mut x = String::from("10,3\n");
    for r in TOY_X {
        x.push_str(&format!("{},{},{}\n", r[0], r[1], r[2]));
    }
    write(dir, "x.csv", &x);
    let mut y = String::from("10,1\n");
    for v in TOY_Y {
        y.push_str(&format!("{v}\n"));
    }
    write(dir, "y.csv", &y);
}

#[test]
fn orthogonal_toy_recovers_marginal_ratios() {
    let dir = tempfile::tempdir().unwrap();
    toy_files(dir.path());
    let o = hdinfer(
        dir.path(),
        &["infer", "--design", "x.csv", "--response", "y.csv", "--variance", "classic", "--out", "r.json", "--seed", "3"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("coordinates significant"));
    let report: InferenceReport = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    for j in 0..3 {
        let xy: f64 = (0..10).map(|i| TOY_X[i][j] * TOY_Y[i]).sum();
        let xx: f64 = (0..10).map(|i| TOY_X[i][j] * TOY_X[i][j]).sum();
        assert!((report.b_hat[j] - xy / xx).abs() < 1e-10, "{j}: {} vs {}", report.b_hat[j], xy / xx);
    }
    assert!(dir.path().join("r.json.log").exists());
}

#[test]
fn infer_is_byte_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    toy_files(dir.path());
    let run = |out: &str| {
        let o = hdinfer(dir.path(), &["infer", "--design", "x.csv", "--response", "y.csv", "--out", out, "--seed", "11"]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(dir.path().join(out)).unwrap()
    };
    let a = run("a.json");
    let b = run("b.json");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    for key in ["\"b_hat\"", "\"se\"", "\"ci_lower\"", "\"ci_upper\"", "\"p_values\"", "\"alpha\"", "\"variance_mode\"", "\"diagnostics\""] {
        assert!(text.contains(key), "missing {key}");
    }
    let parsed: InferenceReport = serde_json::from_str(&text).unwrap();
    assert_eq!(hdinfer::io::to_json_string(&parsed).unwrap(), text);
}

#[test]
fn malformed_csv_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    toy_files(dir.path());
    write(dir.path(), "bad.csv", "3,2\n1,2\n3,4,5\n6,7\n");
    let o = hdinfer(dir.path(), &["infer", "--design", "bad.csv", "--response", "y.csv", "--out", "r.json"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bad.csv") && err.contains("line 3"), "{err}");
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn missing_flags_and_shape_mismatch_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    toy_files(dir.path());
    let o = hdinfer(dir.path(), &["infer", "--design", "x.csv", "--out", "r.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--response"));
    write(dir.path(), "short.csv", "3,1\n1\n2\n3\n");
    let o = hdinfer(dir.path(), &["infer", "--design", "x.csv", "--response", "short.csv", "--out", "r.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hdinfer(dir.path(), &["infer", "--design", "x.csv", "--response", "y.csv", "--out", "r.json", "--alpha", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    toy_files(dir.path());
    write(
        dir.path(),
        "cfg.json",
        r#"{"design": "x.csv", "response": "y.csv", "out": "cfg.json.out", "variance": "classic", "alpha": 0.1, "seed": 5}"#,
    );
    let o = hdinfer(dir.path(), &["infer", "--config", "cfg.json", "--alpha", "0.2", "--out", "flag.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: InferenceReport = serde_json::from_str(&fs::read_to_string(dir.path().join("flag.json")).unwrap()).unwrap();
    assert_eq!(r.alpha, 0.2);
    assert_eq!(r.variance_mode, hdinfer::inference::VarianceMode::Classic);
    assert!(!dir.path().join("cfg.json.out").exists());

    write(dir.path(), "bad.json", r#"{"design": "x.csv", "lamda": 0.1}"#);
    let o = hdinfer(dir.path(), &["infer", "--config", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lamda"));
}

#[test]
fn simulate_smoke_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec!["simulate", "--model", "M2", "--n", "100", "--p", "50", "--replicates", "1", "--seed", "4", "--out", out]
    };
    let o = hdinfer(dir.path(), &args("a.json"));
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.starts_with("M2 "), "{line}");
    assert_eq!(line.split_whitespace().count(), 5);
    let o = hdinfer(dir.path(), &args("b.json"));
    assert!(o.status.success());
    let a = fs::read_to_string(dir.path().join("a.json")).unwrap();
    assert_eq!(a, fs::read_to_string(dir.path().join("b.json")).unwrap());

    let report: CoverageReport = serde_json::from_str(&a).unwrap();
    assert_eq!(report.per_coordinate.len(), 50);
    assert!(report.per_coordinate.iter().all(|r| r.coverage == 0.0 || r.coverage == 1.0));
    assert_eq!(report.s0, vec![3, 5, 6]);
    assert_eq!(hdinfer::io::to_json_string(&report).unwrap(), a);

    let table = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert!(table.starts_with("j,beta0,coverage,mean_length\n1,"));
    assert_eq!(table.lines().count(), 51);
    let log = fs::read_to_string(dir.path().join("a.json.log")).unwrap();
    assert!(log.contains("seed: 4") && log.contains("elapsed_seconds"));
}

#[test]
fn simulate_rejects_bad_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdinfer(dir.path(), &["simulate", "--model", "M9", "--out", "r.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hdinfer(
        dir.path(),
        &["simulate", "--model", "M1", "--n", "100", "--p", "50", "--design", "fixed", "--out", "r.json"],
    );
    assert_eq!(o.status.code(), Some(2), "fixed design needs n <= p");
    assert!(!dir.path().join("r.json").exists());
}

fn read_table(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn oracle_matches_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdinfer(dir.path(), &["oracle", "--model", "M1", "--draws", "1000000", "--out", "m1.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_table(&dir.path().join("m1.csv"));
    assert_eq!(rows.len(), 1000);
    for (row, want) in rows.iter().zip([0.0, 0.0, -4.0, 0.0, 2.0, 1.0]) {
        assert!((row[1] - want).abs() <= 0.03, "{row:?}");
    }
    let head = fs::read_to_string(dir.path().join("m1.csv")).unwrap();
    assert!(head.starts_with("# model=M1 p=1000 method=monte-carlo draws=1000000 seed=1\nj,beta0,mc_se\n"));

    let o = hdinfer(dir.path(), &["oracle", "--model", "M2", "--p", "50", "--out", "m2.csv"]);
    assert!(o.status.success());
    let rows = read_table(&dir.path().join("m2.csv"));
    for (row, want) in rows.iter().zip([0.0, 0.0, 0.6, 0.0, 1.0, 0.5]) {
        assert!((row[1] - want).abs() < 1e-12, "{row:?}");
    }

    write(
        dir.path(),
        "lin.json",
        r#"{"covariance": {"kind": "identity", "p": 4}, "terms": [{"kind": "linear", "var": 0, "coef": 1.0}]}"#,
    );
    let o = hdinfer(dir.path(), &["oracle", "--model-spec", "lin.json", "--method", "analytic", "--out", "lin.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let beta: Vec<f64> = read_table(&dir.path().join("lin.csv")).iter().map(|r| r[1]).collect();
    assert_eq!(beta, vec![1.0, 0.0, 0.0, 0.0]);

    let o = hdinfer(dir.path(), &["oracle", "--model", "M1", "--draws", "10", "--out", "few.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

fn read_vector(path: &Path) -> Vec<f64> {
    let m = hdinfer::io::read_matrix(path).unwrap();
    m.col(0).to_vec()
}

#[test]
fn basis_pursuit_examples() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "x.csv", "1,2\n1,2\n");
    write(dir.path(), "f.csv", "1,1\n2\n");
    let o = hdinfer(dir.path(), &["basis-pursuit", "--design", "x.csv", "--target", "f.csv", "--out", "b.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert!(text.starts_with("# feasibility_gap="), "{text}");
    assert!(text.lines().next().unwrap().contains("l1_norm="));
    let b = read_vector(&dir.path().join("b.csv"));
    assert!(b[0].abs() < 1e-9 && (b[1] - 1.0).abs() < 1e-9, "{b:?}");

    write(dir.path(), "sq.csv", "2,2\n2,1\n1,3\n");
    write(dir.path(), "g.csv", "2,1\n3\n5\n");
    let o = hdinfer(dir.path(), &["basis-pursuit", "--design", "sq.csv", "--target", "g.csv", "--out", "s.csv"]);
    assert!(o.status.success());
    let b = read_vector(&dir.path().join("s.csv"));
    assert!((b[0] - 0.8).abs() < 1e-9 && (b[1] - 1.4).abs() < 1e-9, "{b:?}");

    write(dir.path(), "tall.csv", "2,1\n1\n2\n");
    let o = hdinfer(dir.path(), &["basis-pursuit", "--design", "tall.csv", "--target", "g.csv", "--out", "t.csv"]);
    assert_eq!(o.status.code(), Some(2));
    write(dir.path(), "dup.csv", "2,3\n1,2,3\n2,4,6\n");
    let o = hdinfer(dir.path(), &["basis-pursuit", "--design", "dup.csv", "--target", "g.csv", "--out", "t.csv"]);
    assert_eq!(o.status.code(), Some(2), "rank failure");
    assert!(!dir.path().join("t.csv").exists());
}

#[test]
fn sparsity_curves() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "beta.csv", "2,1\n1\n0\n");
    let o = hdinfer(dir.path(), &["sparsity-curve", "--beta", "beta.csv", "--out", "c.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert!(text.starts_with("r,norm_r\n0,1\n0.01,1\n"));
    let rows = read_table(&dir.path().join("c.csv"));
    assert_eq!(rows.len(), 101);
    assert!(rows.iter().all(|r| r[1] == 1.0));

    let o = hdinfer(dir.path(), &["sparsity-curve", "--model", "M1", "--design", "random", "--out", "m1.csv"]);
    assert!(o.status.success());
    assert_eq!(read_table(&dir.path().join("m1.csv"))[0], vec![0.0, 3.0]);

    let o = hdinfer(
        dir.path(),
        &["sparsity-curve", "--model", "M3", "--design", "fixed", "--n", "200", "--p", "1000", "--runs", "3", "--out", "m3.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_table(&dir.path().join("m3.csv"));
    assert_eq!(rows.len(), 303);
    let zero: Vec<&Vec<f64>> = rows.iter().filter(|r| r[1] == 0.0).collect();
    assert_eq!(zero.len(), 3);
    for (k, r) in zero.iter().enumerate() {
        assert_eq!(r[0], (k + 1) as f64);
        assert_eq!(r[2], 200.0);
    }

    write(dir.path(), "junk.csv", "2,1\n1\nx\n");
    let o = hdinfer(dir.path(), &["sparsity-curve", "--beta", "junk.csv", "--out", "j.csv"]);
    assert_eq!(o.status.code(), Some(2));
}
