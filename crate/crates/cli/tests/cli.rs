use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn arbor(args: &[&str], config: &str, out: &Path) -> Output {
    let cfg = out.join("run.toml");
    std::fs::create_dir_all(out).unwrap();
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_arbor"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn report(out: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join(format!("{name}.json"))).unwrap()).unwrap()
}

const GEOMETRIC: &str = r#"
tree = { kind = "geometric", d = 1.5, b = 2, generations = 30 }
[[potential]]
kind = "gaussian"
coef = -1.0
width = 1.0
[sweep]
lambda_min = 1e-3
lambda_max = 1e-2
points_per_decade = 4
"#;

#[test]
fn tree_info_reports_dimension_and_multiplicities() {
    let dir = tempfile::tempdir().unwrap();
    let o = arbor(&["tree-info"], GEOMETRIC, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path(), "tree-info");
    assert_eq!(r["schema_version"], 1);
    let d = r["result"]["dimension_estimate"].as_f64().unwrap();
    assert!((d - 1.5).abs() < 0.05, "{d}");
    let m: Vec<u64> = r["result"]["multiplicities"].as_array().unwrap()[..5].iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(m, [1, 1, 2, 4, 8]);
}

#[test]
fn star_spectrum_matches_direct_solve() {
    let cfg = r#"
tree = { kind = "explicit", t = [1.0], b = [3] }
[[potential]]
kind = "well"
value = -1.0
a = 0.0
b = 2.5
[numerics]
h = 0.01
L = 5.0
[spectrum]
lambda = 20.0
"#;
    let dir = tempfile::tempdir().unwrap();
    let o = arbor(&["spectrum", "--compare-direct"], cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path(), "spectrum");
    assert_eq!(r["result"]["match"], true);
    assert!(r["result"]["max_rel_diff"].as_f64().unwrap() <= 1e-4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("match: true"));
    let csv = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("value,multiplicity,channels\n"));
}

#[test]
fn repulsive_sweep_is_empty_and_succeeds() {
    let cfg = GEOMETRIC.replace("coef = -1.0", "coef = 1.0");
    let dir = tempfile::tempdir().unwrap();
    let o = arbor(&["weak-sweep"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(dir.path(), "weak-sweep")["verdict"], "empty spectrum at weak coupling");
}

#[test]
fn sweep_output_is_independent_of_thread_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(arbor(&["weak-sweep", "--threads", "1", "--svg"], GEOMETRIC, a.path()).status.success());
    assert!(arbor(&["weak-sweep", "--threads", "4", "--svg"], GEOMETRIC, b.path()).status.success());
    for f in ["weak-sweep.json", "weak-sweep.csv", "weak-sweep.svg"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        // the config path differs between runs and is not part of the report
        assert_eq!(x, y, "{f}");
    }
    let csv = std::fs::read_to_string(a.path().join("weak-sweep.csv")).unwrap();
    assert!(csv.starts_with("lambda,E1,E_minus,E_plus,N_minus,bound_cor1,certified_channels\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn bad_config_points_at_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = arbor(&["tree-info"], "tree = { kind = \"half-line\" }\n[[potential]]\nkind = \"well\"\nvalue = -1.0\na = 0.0\nbb = 1.0\n", dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line") && err.contains("bb"), "{err}");
    assert_eq!(report(dir.path(), "tree-info")["error"]["kind"], "config");
}

#[test]
fn numerical_failure_is_structured() {
    let cfg = r#"
tree = { kind = "half-line" }
[[potential]]
kind = "gaussian"
coef = -1.0
width = 1.0
[bs]
lambda = 0.1
d = 2.0
"#;
    let dir = tempfile::tempdir().unwrap();
    let o = arbor(&["bs-solve"], cfg, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(report(dir.path(), "bs-solve")["error"]["kind"], "near_singular");
}

#[test]
fn failed_verdict_exits_with_two() {
    let cfg = r#"
tree = { kind = "half-line" }
[[potential]]
kind = "well"
value = -1.0
a = 0.0
b = 1.0
[weyl]
lambdas = [4.0]
"#;
    let dir = tempfile::tempdir().unwrap();
    let o = arbor(&["weyl"], cfg, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(report(dir.path(), "weyl")["pass"], false);
}

#[test]
fn bs_solve_reports_root_and_hs_table() {
    let cfg = r#"
tree = { kind = "half-line" }
[[potential]]
kind = "well"
value = -1.0
a = 0.0
b = 1.0
[bs]
lambda = 0.01
d = 1.0
"#;
    let dir = tempfile::tempdir().unwrap();
    let o = arbor(&["bs-solve"], cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path(), "bs-solve");
    let e = r["result"]["solution"]["energy"].as_f64().unwrap();
    assert!((e + 1e-4).abs() < 2e-6, "{e}");
    assert_eq!(r["result"]["hs_convergence"].as_array().unwrap().len(), 3);
}
