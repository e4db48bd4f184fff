use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ridgesv::datakit::load_model;
use ridgesv::datakit::synthetic::{noisy_sine, two_gaussians};
use ridgesv::model::{Region, Sample};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ridgesv"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn ridgesv")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_csv(path: &Path, samples: &[Sample]) {
    let mut s = String::new();
    for x in samples {
        for v in &x.features {
            let _ = write!(s, "{v},");
        }
        let _ = writeln!(s, "{}", x.target);
    }
    std::fs::write(path, s).unwrap();
}

fn p(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn train_two_point_toy() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "toy.csv");
    std::fs::write(&data, "1,1\n-1,0\n").unwrap();
    let model = p(dir.path(), "m.json");
    let o = run(&["train", "--data", s(&data), "--kernel", "linear", "--ridge", "0.5", "--C", "1", "--out", s(&model)]);
    assert!(o.status.success(), "{o:?}");
    let out = stdout(&o);
    assert!(out.contains("multipliers: [0.4, 0.4]"), "{out}");
    assert!(out.contains("bias: 0\n"), "{out}");
    assert!(out.contains("regions: S=2 B=0 O=0"), "{out}");

    let o = run(&["eval", "--model", s(&model), "--data", s(&data)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("accuracy: 100.0000%"));
}

#[test]
fn input_and_training_failures() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--data", s(&p(dir.path(), "missing.csv")), "--out", s(&p(dir.path(), "m.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse error"));

    let one = p(dir.path(), "one.csv");
    std::fs::write(&one, "1,2,1\n2,1,1\n0,3,1\n").unwrap();
    let o = run(&["train", "--data", s(&one), "--out", s(&p(dir.path(), "m.json"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("single class"));

    let bad = p(dir.path(), "bad.csv");
    std::fs::write(&bad, "1,2,1\n2,oops,0\n").unwrap();
    let o = run(&["train", "--data", s(&bad), "--out", s(&p(dir.path(), "m.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

fn trained_gaussians(dir: &Path) -> (PathBuf, PathBuf) {
    let all = two_gaussians(130, 7, 0);
    let train = p(dir, "train.csv");
    let add = p(dir, "add.csv");
    write_csv(&train, &all[..120]);
    write_csv(&add, &all[120..126]);
    let model = p(dir, "m.json");
    let o = run(&["train", "--data", s(&train), "--kernel", "rbf", "--sigma", "1", "--ridge", "0.5", "--out", s(&model)]);
    assert!(o.status.success(), "{o:?}");
    (model, add)
}

#[test]
fn update_engines_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (model, add) = trained_gaussians(dir.path());
    let prop = p(dir.path(), "prop.json");
    let base = p(dir.path(), "base.json");
    for (engine, out) in [("proposed", &prop), ("baseline", &base)] {
        let o = run(&["update", "--model", s(&model), "--add", s(&add), "--remove", "3,17", "--engine", engine, "--out", s(out)]);
        assert!(o.status.success(), "{o:?}");
        let text = stdout(&o);
        assert!(text.contains("added: 6 removed: 2"), "{text}");
        let residual: f64 = text
            .lines()
            .find_map(|l| l.strip_prefix("kkt residual: "))
            .unwrap()
            .parse()
            .unwrap();
        assert!(residual <= 1e-6, "{residual}");
        assert!(text.contains("violations: 0"));
    }
    let a = load_model(&prop).unwrap().model;
    let b = load_model(&base).unwrap().model;
    assert_eq!(a.len(), 124);
    for i in 0..25 {
        let x = [-3.0 + 0.25 * i as f64, 1.5 - 0.1 * i as f64];
        assert!((a.decision_value(&x).unwrap() - b.decision_value(&x).unwrap()).abs() < 1e-6);
    }
}

#[test]
fn empty_update_is_noop() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = trained_gaussians(dir.path());
    let before = std::fs::read_to_string(&model).unwrap();
    let o = run(&["update", "--model", s(&model)]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert!(text.contains("added: 0 removed: 0"));
    assert!(text.contains("delta S +0"));
    assert_eq!(before, std::fs::read_to_string(&model).unwrap());
}

#[test]
fn update_unknown_id_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = trained_gaussians(dir.path());
    let o = run(&["update", "--model", s(&model), "--remove", "99999"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_regression_and_empty() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "r.csv");
    std::fs::write(&data, "0,-2\n1,-1\n2,0\n3,1\n4,2\n").unwrap();
    let model = p(dir.path(), "r.json");
    // tube wider than every standardized label: all multipliers vanish
    let o = run(&["train", "--data", s(&data), "--task", "regression", "--epsilon", "5", "--kernel", "linear", "--out", s(&model)]);
    assert!(o.status.success(), "{o:?}");
    let o = run(&["eval", "--model", s(&model), "--data", s(&data)]);
    assert!(o.status.success());
    let mse: f64 = stdout(&o).lines().find_map(|l| l.strip_prefix("mse: ")).unwrap().parse().unwrap();
    assert!((mse - 1.0).abs() < 1e-6, "{mse}");

    let empty = p(dir.path(), "empty.csv");
    std::fs::write(&empty, "").unwrap();
    let o = run(&["eval", "--model", s(&model), "--data", s(&empty)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_two_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "bench");
    let args = ["bench", "--synthetic", "gaussians", "--limit", "200", "--rounds", "2", "--seed", "5", "--out", s(&out)];
    let o = run(&args);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("parity pass"));
    let csv = std::fs::read_to_string(out.join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(out.join("bench.txt").exists());
    let strip = |t: &str| -> Vec<String> {
        t.lines().map(|l| l.split(',').enumerate().filter(|(k, _)| *k != 3 && *k != 4).map(|(_, v)| v.to_string()).collect()).collect()
    };
    let o = run(&args);
    assert!(o.status.success());
    let again = std::fs::read_to_string(out.join("bench.csv")).unwrap();
    assert_eq!(strip(&csv), strip(&again));

    let o = run(&["bench", "--synthetic", "gaussians", "--limit", "100", "--rounds", "5", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn wec_dump() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = trained_gaussians(dir.path());
    let out = p(dir.path(), "wec.csv");
    let o = run(&["wec", "--model", s(&model), "--out", s(&out)]);
    assert!(o.status.success(), "{o:?}");
    let slope: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("unbounded slope: "))
        .and_then(|l| l.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((slope + 2.0).abs() < 0.1, "{slope}");
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("id,output,signed,multiplier,label,region"));
    assert_eq!(text.lines().count(), 121);

    let sine = p(dir.path(), "sine.csv");
    write_csv(&sine, &noisy_sine(150, 2, 0));
    let m = p(dir.path(), "svr.json");
    let o = run(&["train", "--data", s(&sine), "--task", "regression", "--epsilon", "0.2", "--no-standardize", "--out", s(&m)]);
    assert!(o.status.success(), "{o:?}");
    let o = run(&["wec", "--model", s(&m), "--out", s(&out)]);
    let line = stdout(&o).lines().find_map(|l| l.strip_prefix("zero crossings: ").map(str::to_string)).unwrap();
    let v: Vec<f64> = line.split_whitespace().take(2).map(|t| t.parse().unwrap()).collect();
    assert!((v[0] + 0.2).abs() < 1e-3 && (v[1] - 0.2).abs() < 1e-3, "{line}");
    let stored = load_model(&m).unwrap();
    assert!(stored.model.regions().contains(&Region::Unbounded));
}
