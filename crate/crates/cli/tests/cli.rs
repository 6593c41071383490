use std::fs;
use std::path::Path;
use std::process::Command as Process;

use serde_json::Value;

use supsearch_cli::artifacts::FAILED_MARKER;
use supsearch_cli::config::{Command, Format};
use supsearch_cli::{run, Invocation};

fn invocation(command: Command, out: &Path, sets: &[&str]) -> Invocation {
    Invocation {
        command: Some(command),
        seed: Some(11),
        out: Some(out.to_path_buf()),
        set: sets.iter().map(|s| s.to_string()).collect(),
        ..Default::default()
    }
}

fn bin() -> Process {
    Process::new(env!("CARGO_BIN_EXE_supsearch"))
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn simulate_is_byte_identical_serial_and_parallel() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for (i, threads) in [Some(1), Some(4), None].into_iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let mut inv = invocation(Command::Simulate, &out, &["simulate.n_firms=400", "simulate.traces=true"]);
        inv.threads = threads;
        run(&inv).unwrap();
        outs.push(out);
    }
    for name in ["firms.csv", "import_curve.csv", "moments.json", "traces.jsonl"] {
        let a = read(&outs[0], name);
        assert_eq!(a, read(&outs[1], name), "{name}");
        assert_eq!(a, read(&outs[2], name), "{name}");
    }
}

#[test]
fn artifacts_carry_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    run(&invocation(Command::Simulate, &out, &["simulate.n_firms=50"])).unwrap();
    let text = String::from_utf8(read(&out, "firms.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "# schema_version=1 table=firms");
    let meta: Value = serde_json::from_str(lines.next().unwrap().strip_prefix("# meta ").unwrap()).unwrap();
    assert_eq!(meta["seed"], 11);
    assert_eq!(meta["command"], "simulate");
    assert_eq!(meta["params"]["simulate"]["n_firms"], 50);
    assert!(meta["build"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
    assert!(lines.next().unwrap().starts_with("firm_id,"));
    let moments: Value = serde_json::from_slice(&read(&out, "moments.json")).unwrap();
    assert_eq!(moments["meta"], meta);
}

#[test]
fn format_flag_limits_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let mut inv = invocation(Command::Simulate, &out, &["simulate.n_firms=30"]);
    inv.format = Some(Format::Json);
    run(&inv).unwrap();
    assert!(out.join("moments.json").exists());
    assert!(!out.join("firms.csv").exists());
}

#[test]
fn seed_changes_output() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(&invocation(Command::Simulate, &a, &["simulate.n_firms=50"])).unwrap();
    let mut inv = invocation(Command::Simulate, &b, &["simulate.n_firms=50"]);
    inv.seed = Some(12);
    run(&inv).unwrap();
    assert_ne!(read(&a, "firms.csv"), read(&b, "firms.csv"));
}

#[test]
fn unknown_key_exits_with_validation_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bad");
    let res = bin()
        .args(["simulate", "--set", "params.no_such_field=1", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(report["kind"], "validation");
    assert!(report["message"].as_str().unwrap().contains("params.no_such_field"));
    assert!(out.join(FAILED_MARKER).exists());
}

#[test]
fn config_file_with_unknown_field_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, r#"{"command": "simulate", "sed": 3}"#).unwrap();
    let res = bin().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(res.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&res.stderr).unwrap();
    assert!(report["message"].as_str().unwrap().contains("sed"));
}

#[test]
fn config_file_drives_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    let out = tmp.path().join("from_config");
    fs::write(
        &cfg,
        serde_json::json!({
            "command": "simulate",
            "seed": 5,
            "out": out,
            "emit": {"json": true, "csv": false},
            "overrides": {"simulate.n_firms": 20, "params.f_s": 0.3}
        })
        .to_string(),
    )
    .unwrap();
    let res = bin().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let m: Value = serde_json::from_slice(&read(&out, "moments.json")).unwrap();
    assert_eq!(m["meta"]["seed"], 5);
    assert_eq!(m["meta"]["params"]["params"]["f_s"], 0.3);
    assert_eq!(m["data"]["n_firms"], 20);
}

#[test]
fn output_root_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let res = bin()
        .args(["simulate", "--set", "simulate.n_firms=10"])
        .env("SUPSEARCH_OUT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0));
    assert!(tmp.path().join("simulate").join("firms.csv").exists());
}

#[test]
fn invalid_parameters_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let res = bin()
        .args(["simulate", "--set", "params.varphi=1.5", "--out"])
        .arg(tmp.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn missing_panel_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let err = run(&invocation(Command::Facts, &tmp.path().join("f"), &[])).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn partial_commit_leaves_failure_marker_and_rerun_clears_it() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    // a directory in the way makes the second rename fail after the
    // first artifact has moved into place
    fs::create_dir_all(out.join("import_curve.csv").join("blocker")).unwrap();
    let res = bin().args(["simulate", "--set", "simulate.n_firms=20", "--out"]).arg(&out).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    let report: Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(report["kind"], "runtime");
    assert!(out.join("firms.csv").exists());
    let marker: Value = serde_json::from_slice(&read(&out, FAILED_MARKER)).unwrap();
    assert_eq!(marker["exit_code"], 2);

    fs::remove_dir_all(out.join("import_curve.csv")).unwrap();
    run(&invocation(Command::Simulate, &out, &["simulate.n_firms=20"])).unwrap();
    assert!(!out.join(FAILED_MARKER).exists());
    assert!(!out.join(".staging").exists());
}

#[test]
fn synthgen_then_data_pipeline_recovers_planted_effects() {
    let tmp = tempfile::tempdir().unwrap();
    let syn = tmp.path().join("syn");
    // noiseless log prices, so the extracted supplier effects equal the truth
    run(&invocation(Command::Synthgen, &syn, &["synthgen.n_firms=150", "synth.shocks.noise_sd=0"])).unwrap();
    let panel = syn.join("panel.csv");
    let panel_set = format!("inputs.panel={}", serde_json::to_string(&panel).unwrap());

    let ss = tmp.path().join("ss");
    let mut inv = invocation(Command::Shiftshare, &ss, &[&panel_set]);
    inv.set.push(r#"shiftshare.definitions=["log_diff"]"#.into());
    run(&inv).unwrap();

    let truth = effects(&syn.join("truth_supplier_effects.csv"), "log_value");
    let est = effects(&ss.join("supplier_effects_log_diff.csv"), "value");
    let component = effects(&ss.join("supplier_effects_log_diff.csv"), "component");
    assert!(est.len() > 100);
    // effects are identified up to one constant per connected component
    let mut offset: std::collections::HashMap<u64, f64> = Default::default();
    let mut worst: f64 = 0.0;
    for (key, g) in &est {
        let gap = g - truth[key];
        let base = *offset.entry(component[key] as u64).or_insert(gap);
        worst = worst.max((gap - base).abs());
    }
    assert!(worst < 1e-8, "worst = {worst}");

    for cmd in [Command::Facts, Command::Regress] {
        let out = tmp.path().join(cmd.name());
        run(&invocation(cmd, &out, &[&panel_set])).unwrap();
    }
    let reg: Value = serde_json::from_slice(&read(&tmp.path().join("regress"), "regression.json")).unwrap();
    assert!(reg["data"]["n"].as_u64().unwrap() > 0);
}

/// `(id, period) -> value` from a CSV with `id`/`supplier`, `period` and the
/// named value column, skipping `#` lines.
fn effects(path: &Path, column: &str) -> std::collections::HashMap<(u32, i32), f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let id = col("supplier").or_else(|| col("id")).unwrap();
    let period = col("period").unwrap();
    let value = col(column).unwrap_or_else(|| panic!("{column} not in {header:?}"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            ((f[id].parse().unwrap(), f[period].parse().unwrap()), f[value].parse().unwrap())
        })
        .collect()
}
