use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

/// Scripted config with output and run directories redirected into `tmp`.
fn config_in(tmp: &Path) -> PathBuf {
    let root = repo_root();
    let text = format!(
        "[data]\nsource = \"fixture:{}\"\n\n[llm]\nbackend = \"scripted\"\nscript = \"{}\"\n\n[paths]\nout_dir = \"{}\"\nruns_dir = \"{}\"\n",
        root.join("fixtures").display(),
        root.join("scripts/byd.rules.json").display(),
        tmp.join("out").display(),
        tmp.join("runs").display(),
    );
    let path = tmp.join("cli.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn valuator(cfg: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_valuator"))
        .arg("--config")
        .arg(cfg)
        .args(["--clock", "2024-11-04"])
        .args(args)
        .current_dir(repo_root())
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn base_value_needs_no_agents() {
    let tmp = tempfile::tempdir().unwrap();
    let o = valuator(&config_in(tmp.path()), &["--json", "value", "BYD", "--base"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["value_per_share"].as_f64().unwrap() > 0.0);
}

#[test]
fn agent_value_reports_decision() {
    let tmp = tempfile::tempdir().unwrap();
    let o = valuator(&config_in(tmp.path()), &["value", "BYD"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("Buy"), "{out}");
    assert!(out.contains("BYD-20241104-"), "{out}");
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn report_persists_record_and_sensitivity_reads_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_in(tmp.path());
    let o = valuator(&cfg, &["--json", "report", "BYD"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let id = rec["run_id"].as_str().unwrap().to_string();
    assert!(tmp.path().join("runs").join(&id).join("record.json").is_file());

    let o = valuator(
        &cfg,
        &[
            "--json",
            "sensitivity",
            "BYD",
            "--rows",
            "terminal_margin=0.05,0.06,0.07",
            "--cols",
            "cost_of_capital=0.08,0.09",
            "--run",
            &id,
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let cells = t["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 3);
    assert_eq!(cells[0].as_array().unwrap().len(), 2);
    let col0: Vec<f64> = cells.iter().map(|r| r[0].as_f64().unwrap()).collect();
    assert!(col0.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn backtest_prints_one_row_per_date() {
    let tmp = tempfile::tempdir().unwrap();
    let dates = repo_root().join("byd_dates.txt");
    let o = valuator(&config_in(tmp.path()), &["backtest", "BYD", "--dates", dates.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    for d in ["2024-10-14", "2024-10-21", "2024-10-28", "2024-11-04"] {
        assert!(out.contains(d), "{out}");
    }
}

#[test]
fn stability_counts_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = valuator(&config_in(tmp.path()), &["--json", "stability", "BYD", "--n", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(m["n_runs"].as_u64(), Some(3));
    assert_eq!(m["decision_flip_rate"].as_f64(), Some(0.0));
}

#[test]
fn batch_runs_every_listed_ticker() {
    let tmp = tempfile::tempdir().unwrap();
    let list = tmp.path().join("tickers.txt");
    std::fs::write(&list, "BYD\nCTSO\n# comment\n").unwrap();
    let o = valuator(&config_in(tmp.path()), &["batch", "--tickers", list.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("BYD") && out.contains("CTSO"), "{out}");
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_in(tmp.path());
    assert_eq!(valuator(&cfg, &["value", "NOPE", "--base"]).status.code(), Some(2));
    assert_eq!(
        valuator(&cfg, &["sensitivity", "BYD", "--rows", "bogus", "--cols", "cost_of_capital=0.09"]).status.code(),
        Some(2)
    );
    let dates = tmp.path().join("dates.txt");
    std::fs::write(&dates, "2024-13-40\n").unwrap();
    assert_eq!(
        valuator(&cfg, &["backtest", "BYD", "--dates", dates.to_str().unwrap()]).status.code(),
        Some(2)
    );
    assert_eq!(valuator(&tmp.path().join("missing.toml"), &["value", "BYD"]).status.code(), Some(2));
}

#[test]
fn llm_failure_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_in(tmp.path());
    let empty = tmp.path().join("empty.rules.json");
    std::fs::write(&empty, r#"{"rules": []}"#).unwrap();
    let text = std::fs::read_to_string(&cfg).unwrap().replace(
        &repo_root().join("scripts/byd.rules.json").display().to_string(),
        &empty.display().to_string(),
    );
    std::fs::write(&cfg, text).unwrap();
    let o = valuator(&cfg, &["value", "BYD"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
