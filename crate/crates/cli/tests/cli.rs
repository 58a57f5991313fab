use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bankwatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bankwatch"))
        .args(args)
        .env_remove("BANKWATCH_OUT")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(args: &[&str]) -> Output {
    let out = bankwatch(args);
    assert_eq!(code(&out), 0, "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_is_byte_deterministic_and_commercial_shaped() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["synth", "--recipe", "gaussian-sep2", "--seed", "3", "--out", s(&a)]);
    ok(&["synth", "--recipe", "gaussian-sep2", "--seed", "3", "--out", s(&b)]);
    let text = fs::read_to_string(a.join("data.csv")).unwrap();
    assert_eq!(text, fs::read_to_string(b.join("data.csv")).unwrap());
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 22);
    assert_eq!((header[1], header[20], header[21]), ("CA1", "SMR4", "label"));
    let labels: Vec<&str> = lines.map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(labels.len(), 65);
    assert_eq!(labels.iter().filter(|&&l| l == "1").count(), 21);
}

#[test]
fn stepwise_commands_chain_and_evaluate_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = |name: &str| d.join(name);
    ok(&["synth", "--out", s(&out("synth"))]);
    ok(&["clean", "--input", s(&out("synth/data.csv")), "--out", s(&out("clean"))]);
    ok(&["smote", "--input", s(&out("clean/clean.csv")), "--out", s(&out("smote"))]);
    let smote = json(&out("smote/smote_report.json"));
    assert_eq!((smote["active"].as_u64(), smote["bankrupt"].as_u64()), (Some(44), Some(44)));
    ok(&["split", "--input", s(&out("smote/balanced.csv")), "--out", s(&out("split"))]);
    let split = json(&out("split/split_report.json"));
    assert_eq!(split["train"]["active"], 33);
    assert_eq!(split["train"]["bankrupt"], 33);
    assert_eq!(split["test"]["active"], 11);
    assert_eq!(split["test"]["bankrupt"], 11);

    ok(&["train", "--model", "forest", "--B", "100", "--p", "4", "--input", s(&out("split/train.csv")), "--out", s(&out("train"))]);
    let model: Value = json(&out("train/model.json"));
    assert_eq!(model["model"], "forest");
    assert_eq!(model["n_trees"], 100);
    assert_eq!(model["max_features"], 4);

    let eval = |dest: &str| {
        ok(&[
            "evaluate",
            "--model-file", s(&out("train/model.json")),
            "--input", s(&out("split/test.csv")),
            "--train", s(&out("split/train.csv")),
            "--out", s(&out(dest)),
        ])
    };
    eval("eval1");
    eval("eval2");
    for f in ["evaluation.json", "evaluation.txt", "manifest.json"] {
        assert_eq!(fs::read(out("eval1").join(f)).unwrap(), fs::read(out("eval2").join(f)).unwrap(), "{f}");
    }
    let table = fs::read_to_string(out("eval1/evaluation.txt")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    let header = lines.iter().position(|l| l.contains("Predicted Class")).unwrap();
    assert!(lines[header + 1].find("Bankrupt") < lines[header + 1].find("Active"));
    assert!(lines[header + 2].starts_with("Actual Class") && lines[header + 2].contains("Bankrupt"));
    assert!(lines[header + 3].contains("Active"));
    let report = json(&out("eval1/evaluation.json"));
    assert!(report["training"]["accuracy"].is_number() && report["testing"]["accuracy"].is_number());
    let cm = &report["testing"]["confusion"];
    let total: u64 = ["tp", "fn", "fp", "tn"].iter().map(|k| cm[k].as_u64().unwrap()).sum();
    assert_eq!(total, 22);
}

#[test]
fn exit_codes_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = s(d);
    assert_eq!(code(&bankwatch(&["synth", "--recipe", "spiral", "--out", o])), 2);
    assert_eq!(code(&bankwatch(&["synth", "--bogus-flag"])), 2);
    assert_eq!(code(&bankwatch(&["train", "--model", "tree", "--input", "x.csv", "--out", o])), 2);
    assert_eq!(code(&bankwatch(&["clean", "--input", s(&d.join("nope.csv")), "--out", o])), 3);

    fs::write(d.join("bad.csv"), "bank_id,CAR,NPM,ROA,LDR,label\nx,1,2,3,4,0\n").unwrap();
    let out = bankwatch(&["clean", "--schema", "rural", "--input", s(&d.join("bad.csv")), "--out", o]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("AssetQuality"));
    let manifest = json(&d.join("manifest.json"));
    assert_eq!(manifest["exit_code"], 3);

    ok(&["synth", "--schema", "rural", "--n-active", "20", "--n-bankrupt", "20", "--out", s(&d.join("syn"))]);
    let data = d.join("syn/data.csv");
    let bad_gamma = bankwatch(&["train", "--schema", "rural", "--model", "svm", "--kernel", "linear", "--gamma", "0.5", "--input", s(&data), "--out", o]);
    assert_eq!(code(&bad_gamma), 2);
    let wrong_family = bankwatch(&["train", "--schema", "rural", "--model", "logreg", "--B", "10", "--input", s(&data), "--out", o]);
    assert_eq!(code(&wrong_family), 2);
}

#[test]
fn convergence_failure_still_writes_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--schema", "rural", "--n-active", "30", "--n-bankrupt", "30", "--out", s(&d.join("syn"))]);
    let out = d.join("train");
    let run = bankwatch(&["train", "--schema", "rural", "--model", "logreg", "--max-iter", "1", "--input", s(&d.join("syn/data.csv")), "--out", s(&out)]);
    assert_eq!(code(&run), 4);
    assert!(out.join("model.json").exists());
    let report = json(&out.join("train_report.json"));
    assert_eq!(report["converged"], false);
    assert_eq!(json(&out.join("manifest.json"))["exit_code"], 4);
}

#[test]
fn gridsearch_with_a_grid_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--schema", "rural", "--n-active", "25", "--n-bankrupt", "25", "--out", s(&d.join("syn"))]);
    fs::write(
        d.join("grid.json"),
        r#"{"model": "svm", "axes": {"C": [0.1, 10], "kernel": ["linear", "rbf", {"type": "rbf", "gamma": 2.0}]}, "folds": 5, "seed": 4}"#,
    )
    .unwrap();
    let out = d.join("grid");
    ok(&["gridsearch", "--schema", "rural", "--model", "svm", "--grid", s(&d.join("grid.json")), "--input", s(&d.join("syn/data.csv")), "--out", s(&out)]);
    let table = fs::read_to_string(out.join("grid_svm.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(table.as_bytes());
    let means: Vec<f64> = rdr.records().map(|r| r.unwrap()[8].parse().unwrap()).collect();
    assert_eq!(means.len(), 6);
    let summary = json(&out.join("grid_svm.json"));
    let best = summary["best_mean_accuracy"].as_f64().unwrap();
    assert_eq!(best, means.iter().cloned().fold(f64::MIN, f64::max));
    let first_best = means.iter().position(|&m| m == best).unwrap();
    assert_eq!(summary["best_combination"], first_best);
    assert_eq!(json(&out.join("best_svm.json"))["model"], "svm");

    let mismatch = bankwatch(&["gridsearch", "--schema", "rural", "--model", "forest", "--grid", s(&d.join("grid.json")), "--input", s(&d.join("syn/data.csv")), "--out", s(&out)]);
    assert_eq!(code(&mismatch), 2);
}

#[test]
fn trend_flags_first_warnings_per_bank() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--schema", "rural", "--recipe", "gaussian-sep3", "--n-active", "43", "--n-bankrupt", "43", "--report-banks", "3", "--out", s(&d.join("syn"))]);
    for (model, extra) in [("forest", vec!["--B", "25"]), ("svm", vec![]), ("logreg", vec![])] {
        let mut args = vec!["train", "--schema", "rural", "--model", model, "--input"];
        let data = d.join("syn/data.csv");
        let dest = d.join(model);
        args.push(s(&data));
        args.extend(extra);
        args.extend(["--out", s(&dest)]);
        ok(&args);
    }
    let out = d.join("trend");
    ok(&[
        "trend",
        "--reports", s(&d.join("syn/reports.csv")),
        "--model-file", s(&d.join("forest/model.json")),
        "--model-file", s(&d.join("svm/model.json")),
        "--model-file", s(&d.join("logreg/model.json")),
        "--event-date", "2018-08-29",
        "--out", s(&out),
    ]);
    let text = fs::read_to_string(out.join("trend.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["bank_id", "period", "forest", "svm", "logreg"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 24);
    for r in &rows {
        let forest: f64 = r[2].parse().unwrap();
        assert_eq!((forest * 25.0).fract(), 0.0);
        for c in 2..5 {
            let v: f64 = r[c].parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
    let summary = json(&out.join("trend_summary.json"));
    assert_eq!(summary.as_array().unwrap().len(), 3);
    for bank in summary.as_array().unwrap() {
        assert_eq!(bank["event_date"], "2018-08-29");
        for model in ["forest", "svm", "logreg"] {
            let warning = &bank["warnings"][model];
            let lead = &bank["lead_times"][model];
            assert_eq!(warning.is_null(), lead.is_null());
        }
    }
}

#[test]
fn replay_reproduces_and_detects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--schema", "rural", "--n-active", "20", "--n-bankrupt", "12", "--out", s(&d.join("syn"))]);
    let first = d.join("smote1");
    ok(&["smote", "--schema", "rural", "--k", "3", "--seed", "5", "--input", s(&d.join("syn/data.csv")), "--out", s(&first)]);
    let second = d.join("smote2");
    ok(&["replay", "--manifest", s(&first.join("manifest.json")), "--out", s(&second)]);
    assert_eq!(fs::read(first.join("balanced.csv")).unwrap(), fs::read(second.join("balanced.csv")).unwrap());
    assert_eq!(fs::read(first.join("manifest.json")).unwrap(), fs::read(second.join("manifest.json")).unwrap());

    fs::write(d.join("syn/data.csv"), "tampered").unwrap();
    let third = bankwatch(&["replay", "--manifest", s(&first.join("manifest.json")), "--out", s(&d.join("smote3"))]);
    assert_eq!(code(&third), 3);
}

#[test]
fn output_does_not_depend_on_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |jobs: &str, dest: &str| {
        let out = d.join(dest);
        ok(&["pipeline", "--schema", "rural", "--recipe", "xor-pair", "--n-active", "30", "--n-bankrupt", "20", "--jobs", jobs, "--out", s(&out)]);
        json(&out.join("manifest.json"))["outputs"].clone()
    };
    assert_eq!(run("1", "serial"), run("4", "parallel"));
}

#[test]
fn output_directory_defaults_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_bankwatch"))
        .args(["synth", "--n-active", "5", "--n-bankrupt", "5"])
        .env("BANKWATCH_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(target.join("data.csv").exists() && target.join("manifest.json").exists());
}
