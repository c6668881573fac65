use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn rotor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotor")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn field(report: &str, key: &str) -> f64 {
    let prefix = format!("{key}: ");
    report
        .lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} in\n{report}"))
        .parse()
        .unwrap()
}

fn instance(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn single_rotor_bound_is_zero() {
    let dir = TempDir::new().unwrap();
    let p = instance(&dir, "one.json", r#"{"k": 3, "a": 1, "b": 0, "n": 1, "edges": []}"#);
    let o = rotor(&["solve", s(&p)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(field(&stdout(&o), "lower_bound").abs() < 1e-6);
}

#[test]
fn ratio_reports_k_over_k_minus_one() {
    let o = rotor(&["ratio", "--k", "10", "--seed", "7", "--samples", "2000", "--grid", "41"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!((field(&out, "k_over_k_minus_1") - 10.0 / 9.0).abs() < 1e-12);
    assert!(field(&out, "alpha_k") >= field(&out, "alpha_bov"));
}

#[test]
fn ratio_csv_and_determinism() {
    let dir = TempDir::new().unwrap();
    let (c1, c2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let args = |c: &Path| ["ratio", "--k", "4", "--seed", "3", "--samples", "5000", "--grid", "21", "--csv", s(c)].map(String::from);
    let o1 = Command::new(env!("CARGO_BIN_EXE_rotor")).args(args(&c1)).output().unwrap();
    let o2 = Command::new(env!("CARGO_BIN_EXE_rotor")).args(args(&c2)).output().unwrap();
    assert_eq!(o1.stdout, o2.stdout);
    let csv = fs::read_to_string(&c1).unwrap();
    assert_eq!(csv, fs::read_to_string(&c2).unwrap());
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# k=4"));
    assert_eq!(lines.next(), Some("t,g,std_err"));
    assert_eq!(lines.count(), 21);
}

#[test]
fn algebra_catalogue_passes() {
    let o = rotor(&["verify", "algebra", "--k", "3", "--degree", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(field(&out, "failures"), 0.0);
    assert_eq!(out.lines().filter(|l| l.ends_with(" PASS")).count(), 13);
}

#[test]
fn moyal_identity_passes() {
    let o = rotor(&["verify", "moyal", "--modes", "3"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).matches("PASS").count(), 3);
}

#[test]
fn malformed_instances_exit_2_with_line() {
    let dir = TempDir::new().unwrap();
    let loop_ = instance(&dir, "loop.json", "{\"k\": 2, \"a\": 1, \"b\": 1,\n\"edges\": [\n [0, 1],\n [1, 1]\n]}");
    let o = rotor(&["solve", s(&loop_)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
    let syntax = instance(&dir, "syntax.json", "{\"k\": 2,\n\"a\": 1,\n\"b\": ,\n}");
    let o = rotor(&["solve", s(&syntax)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    let o = rotor(&["solve", "/nonexistent/instance.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stochastic_commands_need_a_seed() {
    let dir = TempDir::new().unwrap();
    let p = instance(&dir, "edge.json", r#"{"k": 2, "a": 1, "b": 1, "edges": [[0, 1]]}"#);
    assert_eq!(rotor(&["round", s(&p)]).status.code(), Some(2));
    assert_eq!(rotor(&["ratio", "--k", "3"]).status.code(), Some(2));
    assert_eq!(rotor(&["oracle", s(&p), "--truncation", "4"]).status.code(), Some(2));
}

#[test]
fn non_convergence_exits_3() {
    let dir = TempDir::new().unwrap();
    let p = instance(&dir, "edge.json", r#"{"k": 2, "a": 1, "b": 1, "edges": [[0, 1]]}"#);
    let o = rotor(&["solve", s(&p), "--max-iter", "2"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn oracle_round_sandwich() {
    let dir = TempDir::new().unwrap();
    let p = instance(&dir, "edge.json", r#"{"k": 2, "a": 1, "b": 1, "edges": [[0, 1]]}"#);
    let out_file = dir.path().join("oracle.txt");
    let o = rotor(&["oracle", s(&p), "--truncation", "10", "--restarts", "4", "--seed", "1", "--output", s(&out_file)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let oracle = fs::read_to_string(&out_file).unwrap();
    let e0 = field(&oracle, "ground_energy");
    assert!(e0 <= field(&oracle, "product_upper_bound") + 1e-9);
    let args = ["round", s(&p), "--seed", "5", "--samples", "20000"];
    let r1 = rotor(&args);
    assert!(r1.status.success(), "{}", stderr(&r1));
    assert_eq!(r1.stdout, rotor(&args).stdout);
    let round = stdout(&r1);
    assert!(field(&round, "lower_bound") <= e0 + 1e-5);
    assert!(field(&round, "upper_bound") + 4.0 * field(&round, "upper_bound_std_err") >= e0);
}

#[test]
fn certify_random_states() {
    let o = rotor(&["certify", "--seed", "2", "--states", "40"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(field(&out, "failures"), 0.0);
    assert!(out.ends_with("HOLDS\n"), "{out}");
}
