use std::fs;
use std::path::Path;
use std::process::Command as Process;

use fracwave::solver::{dalembert_i0, InitialData};
use fracwave_cli::*;
use serde_json::Value;

fn with_out(text: &str, out: &Path) -> String {
    format!("out = {:?}\n{text}", out.display().to_string())
}

fn read_manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn content_hash_is_the_git_sha256_blob_hash() {
    assert_eq!(
        content_hash(b""),
        "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
    );
    assert_eq!(
        content_hash(b"hello\n"),
        "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
    );
}

#[test]
fn minimal_config_takes_defaults() {
    let c = parse_config("command = \"simulate\"").unwrap();
    assert_eq!(c.command, Command::Simulate);
    assert_eq!(c.hurst, 0.4);
    assert_eq!(c.grid.dx, 1.0 / 64.0);
    assert_eq!(c.solver.eps, 4.0 * c.grid.dx * c.grid.dx);
    assert_eq!(c.solver.realizations, 1);
    assert!(c.warnings.is_empty());
    let echo = c.to_json();
    assert_eq!(echo["noise"]["hurst"], 0.4);
    assert_eq!(echo["solver"]["n_max"], 12);
    assert_eq!(parse_config_for(Command::Holder, "").unwrap().solver.realizations, 500);
}

#[test]
fn hurst_outside_the_domain_is_rejected() {
    let e = parse_config_for(Command::Params, "[noise]\nhurst = 0.6").unwrap_err();
    assert!(e.0.iter().any(|m| m.contains("H = 0.6 outside (0, 1/2]")), "{e}");
    let e = parse_config_for(Command::Simulate, "[noise]\nhurst = 0.2").unwrap_err();
    assert!(e.0[0].contains("(1/4, 1/2)"));
    // the chaos diagnostics accept H below 1/4
    assert!(parse_config_for(Command::Chaos, "[noise]\nhurst = 0.2").is_ok());
}

#[test]
fn every_error_is_reported() {
    let text = "
seed = -1
color = 3
[grid]
dx = \"small\"
bogus = 1
[solver]
eps = 0.0
[sigma]
kind = \"cubic\"
";
    let e = parse_config_for(Command::Simulate, text).unwrap_err();
    let all = e.0.join("\n");
    for needle in [
        "unknown key `color`",
        "unknown key `grid.bogus`",
        "grid.dx must be a number",
        "seed must be",
        "solver.eps",
        "sigma.kind `cubic`",
    ] {
        assert!(all.contains(needle), "missing {needle:?} in\n{all}");
    }
    assert!(parse_config("").unwrap_err().0[0].contains("command"));
    assert!(parse_config("command = \"fly\"").is_err());
    assert!(parse_config_for(Command::Chaos, "command = \"params\"").is_err());
    assert!(parse_config("command = ").unwrap_err().0[0].starts_with("syntax"));
}

#[test]
fn threshold_violation_warns_but_validates() {
    let c = parse_config_for(Command::Simulate, "[noise]\nhurst = 0.3\n[norm]\np = 8").unwrap();
    assert_eq!(c.warnings.len(), 1);
    assert!(c.warnings[0].contains("2/(4H-1)"), "{}", c.warnings[0]);
    let c = parse_config_for(Command::Simulate, "[noise]\nhurst = 0.3\n[norm]\np = 12").unwrap();
    assert!(c.warnings.is_empty());
}

#[test]
fn params_run_writes_a_report_and_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let text = with_out("[noise]\nhurst = 0.4\n[params]\np = 10", dir.path());
    let c = parse_config_for(Command::Params, &text).unwrap();
    let summary = run(&c).unwrap();
    assert!(summary.files.contains(&"params.csv".to_string()));
    let report = fs::read_to_string(dir.path().join("params.csv")).unwrap();
    assert!(report
        .lines()
        .any(|l| l.starts_with("COND_J_EST,") && l.ends_with(",true")));
    assert!(report.lines().any(|l| l.starts_with("APPC_1,")));
    let m = read_manifest(dir.path());
    for (name, meta) in m["outputs"].as_object().unwrap() {
        let bytes = fs::read(dir.path().join(name)).unwrap();
        assert_eq!(meta["sha256"], content_hash(&bytes));
    }
    assert_eq!(m["config"]["params"]["p"], 10.0);
    assert!(!dir.path().join(".lock").exists());
}

#[test]
fn zero_sigma_simulation_is_the_dalembert_term() {
    let dir = tempfile::tempdir().unwrap();
    let text = with_out(
        "[grid]\nt_count = 9\nx_count = 17\ndx = 0.125\n[sigma]\nkind = \"zero\"",
        dir.path(),
    );
    let c = parse_config_for(Command::Simulate, &text).unwrap();
    run(&c).unwrap();
    let csv = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 9);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let exact = dalembert_i0(&InitialData::gaussian(), c.grid.t_at(i), c.grid.x_at(j)).unwrap();
            assert_eq!(*v, exact);
        }
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let body = "seed = 9\n[grid]\nt_count = 9\nx_count = 17\ndx = 0.125\n[solver]\nrealizations = 3";
    for d in [&a, &b] {
        run(&parse_config_for(Command::Simulate, &with_out(body, d.path())).unwrap()).unwrap();
    }
    for f in ["solution.csv", "residuals.csv", "manifest.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let other = tempfile::tempdir().unwrap();
    let changed = body.replace("seed = 9", "seed = 10");
    run(&parse_config_for(Command::Simulate, &with_out(&changed, other.path())).unwrap()).unwrap();
    assert_ne!(
        fs::read(a.path().join("solution.csv")).unwrap(),
        fs::read(other.path().join("solution.csv")).unwrap()
    );
}

#[test]
fn failed_runs_leave_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let text = with_out(
        "[grid]\nt_count = 17\nx_count = 33\ndx = 0.03125\n[sigma]\na = 400.0",
        dir.path(),
    );
    let c = parse_config_for(Command::Simulate, &text).unwrap();
    match run(&c) {
        Err(RunError::Numeric { module, .. }) => assert_eq!(module, "solver"),
        other => panic!("expected a solver failure, got {other:?}"),
    }
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn locked_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(".lock"), "").unwrap();
    let c = parse_config_for(Command::Params, &with_out("", dir.path())).unwrap();
    assert!(matches!(run(&c), Err(RunError::Locked(_))));
    assert!(!dir.path().join("manifest.json").exists());
    assert!(dir.path().join(".lock").exists());
}

#[test]
fn covariance_and_chaos_pipelines() {
    let c = parse_config_for(
        Command::Covariance,
        "[grid]\nt_count = 2000\nx_count = 64\ndx = 0.015625\ndt = 0.5\n[noise]\nhurst = 0.35",
    )
    .unwrap();
    let out = compute(&c).unwrap();
    let text = String::from_utf8(out["covariance.csv"].clone()).unwrap();
    for line in text.lines().skip(1) {
        let z: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(z.abs() < 4.0, "{line}");
    }
    let c = parse_config_for(
        Command::Chaos,
        "[noise]\nhurst = 0.35\n[chaos]\nt = 2.0\nxi_nodes = 1024\nlags = [0.0625, 0.03125]\nscan_eps = [0.0625, 0.03125, 0.015625]",
    )
    .unwrap();
    let out = compute(&c).unwrap();
    assert_eq!(String::from_utf8(out["chaos.csv"].clone()).unwrap().lines().count(), 5);
    let fit: Value = serde_json::from_slice(&out["scan_fit.json"]).unwrap();
    assert!(fit["slope"].is_number());
}

#[test]
fn kernels_verify_passes_at_defaults() {
    let c = parse_config_for(Command::KernelsVerify, "[kernels]\ndraws = 200").unwrap();
    let out = compute(&c).unwrap();
    let text = String::from_utf8(out["kernels.csv"].clone()).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")), "{text}");
    assert_eq!(text.lines().count(), 1 + 1 + 6 + 2 + 9);
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_fracwave");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[noise]\nhurst = 0.4\n[params]\np = 10\n").unwrap();
    let out = dir.path().join("out");
    let status = Process::new(exe)
        .args([
            "params",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert_eq!(read_manifest(&out)["seed"], 3);
    fs::write(&cfg, "[noise]\nhurst = 0.6\n").unwrap();
    let bad = Process::new(exe)
        .args(["params", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("outside (0, 1/2]"));
    let warn_cfg = dir.path().join("warn.toml");
    fs::write(
        &warn_cfg,
        "[grid]\nt_count = 5\nx_count = 9\ndx = 0.125\n[noise]\nhurst = 0.3\n",
    )
    .unwrap();
    let warned = Process::new(exe)
        .args([
            "simulate",
            "--config",
            warn_cfg.to_str().unwrap(),
            "--out",
            dir.path().join("w").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(warned.status.success());
    assert!(String::from_utf8_lossy(&warned.stderr).contains("warning"));
}
