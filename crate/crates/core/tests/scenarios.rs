use std::process::Command;

use lngate::scenario::{builtin_names, load_builtin, run, RunOptions, Scenario};

fn fast() -> RunOptions {
    RunOptions {
        paillier_bits: Some(1024),
        ..RunOptions::default()
    }
}

#[test]
fn every_builtin_scenario_passes() {
    let mut failed = vec![];
    for name in builtin_names() {
        let report = run(&load_builtin(name).unwrap(), &fast());
        for a in report.failures() {
            failed.push(format!("{name}: {} ({})", a.name, a.detail));
        }
        assert_eq!(report.passed, report.failures().next().is_none());
    }
    assert!(failed.is_empty(), "{failed:#?}");
}

#[test]
fn equal_seeds_give_identical_reports() {
    for name in ["pay", "gateway_cheat", "route_failure"] {
        let s = load_builtin(name).unwrap();
        let a = run(&s, &fast()).to_json();
        let b = run(&s, &fast()).to_json();
        assert_eq!(a, b, "{name}");
        let other = run(
            &s,
            &RunOptions {
                seed: Some(s.seed + 1),
                ..fast()
            },
        )
        .to_json();
        assert_ne!(a, other, "{name}: seed has no effect");
    }
}

#[test]
fn noop_uses_no_link_bytes() {
    let r = run(&load_builtin("noop").unwrap(), &fast());
    assert!(r.passed);
    assert!(r.flows.iter().all(|f| f.iot_bytes_total == 0));
}

#[test]
fn failing_expectation_is_reported() {
    let text = r#"
name = "wrong"
[[actions]]
op = "open"
capacity = 100_000_000
[[expect]]
kind = "state_num"
n = 7
"#;
    let r = run(&Scenario::parse(text).unwrap(), &fast());
    assert!(!r.passed);
    assert_eq!(r.failures().count(), 1);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lngate"))
}

#[test]
fn cli_exit_codes_and_json_output() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("report.json");
    let chain = dir.path().join("chain.json");
    let ok = cli()
        .args([
            "run",
            "pay",
            "--paillier-bits",
            "1024",
            "--seed",
            "3",
            "--json",
        ])
        .arg(&json)
        .arg("--dump-chain")
        .arg(&chain)
        .output()
        .unwrap();
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(report["scenario"], "pay");
    assert_eq!(report["seed"], 3);
    assert_eq!(report["passed"], true);
    let dump: serde_json::Value = serde_json::from_slice(&std::fs::read(&chain).unwrap()).unwrap();
    assert!(dump.is_object());

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"bad\"\n[[actions]]\nop = \"open\"\ncapacity = 100_000_000\n[[expect]]\nkind = \"state_num\"\nn = 9\n").unwrap();
    let fail = cli()
        .args(["run", "--paillier-bits", "1024"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(fail.status.code(), Some(1));

    let usage = cli().args(["run", "no_such_scenario"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
    let usage = cli().args(["run", "pay", "--seed", "x"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));

    let list = cli().arg("list").output().unwrap();
    assert_eq!(list.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&list.stdout).contains("toll_month"));
}
