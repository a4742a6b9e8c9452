use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn hexplan(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hexplan"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("HEXPLAN_THREADS", t),
        None => cmd.env_remove("HEXPLAN_THREADS"),
    };
    cmd.output().unwrap()
}

fn fig1_args<'a>(cluster: &'a str, model: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec!["--cluster", cluster, "--model", model, "--global-batch", "24", "--iterations", "6"];
    args.extend_from_slice(extra);
    args
}

#[test]
fn schedule_writes_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (c, m) = (fixture("fig1_cluster.toml"), fixture("fig1_model.toml"));
    let out_dir = dir.path().join("out");
    let mut args = vec!["schedule"];
    args.extend(fig1_args(
        c.to_str().unwrap(),
        m.to_str().unwrap(),
        &["--format", "json", "--output-dir", out_dir.to_str().unwrap()],
    ));
    let out = hexplan(&args, None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["status"], "feasible");
    assert!(doc["cost"]["mfu"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["manifest"]["inputs"].as_array().unwrap().len(), 2);
    let written = std::fs::read(out_dir.join("schedule.json")).unwrap();
    assert_eq!(written, out.stdout);
    assert!(out_dir.join("schedule.txt").exists());
    let run: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "schedule");
}

#[test]
fn table_output_lists_stages() {
    let (c, m) = (fixture("fig1_cluster.toml"), fixture("fig1_model.toml"));
    let mut args = vec!["schedule"];
    args.extend(fig1_args(c.to_str().unwrap(), m.to_str().unwrap(), &[]));
    let out = hexplan(&args, None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("A-0"), "{text}");
}

#[test]
fn missing_and_malformed_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture("fig1_model.toml");
    let out = hexplan(
        &["schedule", "--cluster", "/nonexistent.toml", "--model", m.to_str().unwrap(), "--global-batch", "8"],
        None,
    );
    assert_eq!(out.status.code(), Some(1));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "devices = 3").unwrap();
    let out = hexplan(
        &["schedule", "--cluster", bad.to_str().unwrap(), "--model", m.to_str().unwrap(), "--global-batch", "8"],
        None,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml"));
    let txt = dir.path().join("cluster.yaml");
    std::fs::write(&txt, "").unwrap();
    let out = hexplan(
        &["schedule", "--cluster", txt.to_str().unwrap(), "--model", m.to_str().unwrap(), "--global-batch", "8"],
        None,
    );
    assert_eq!(out.status.code(), Some(1));
    let out = hexplan(&["schedule", "--global-batch", "8"], None);
    assert_eq!(out.status.code(), Some(1));
    let out = hexplan(&["schedule", "--cluster", "x.toml", "--model", m.to_str().unwrap(), "--global-batch", "8"], Some("zero"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn infeasible_search_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("huge.json");
    std::fs::write(
        &model,
        r#"{"num_layers": 8, "hidden_dim": 65536, "seq_len": 4096, "bytes_per_element": 2}"#,
    )
    .unwrap();
    let c = fixture("fig1_cluster.toml");
    let out = hexplan(
        &[
            "schedule", "--cluster", c.to_str().unwrap(), "--model", model.to_str().unwrap(),
            "--global-batch", "8", "--iterations", "3", "--format", "json",
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["status"], "infeasible");
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let (c, m) = (fixture("setting1_cluster.toml"), fixture("llama7b.toml"));
    let args = [
        "schedule", "--cluster", c.to_str().unwrap(), "--model", m.to_str().unwrap(),
        "--global-batch", "512", "--iterations", "6", "--seed", "3", "--format", "json",
    ];
    let one = hexplan(&args, Some("1"));
    let four = hexplan(&args, Some("4"));
    let default = hexplan(&args, None);
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stdout, default.stdout);
}

#[test]
fn compare_reports_all_three_rows() {
    let (c, m) = (fixture("fig1_cluster.toml"), fixture("fig1_model.toml"));
    let mut args = vec!["compare"];
    args.extend(fig1_args(c.to_str().unwrap(), m.to_str().unwrap(), &["--format", "json"]));
    let out = hexplan(&args, None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in ["scheduler", "symmetric", "oracle", "speedup_vs_symmetric"] {
        assert!(text.contains(needle), "{needle} missing from {text}");
    }
}

#[test]
fn oracle_counts_plans() {
    let dir = tempfile::tempdir().unwrap();
    let cluster = dir.path().join("pair.toml");
    std::fs::write(
        &cluster,
        r#"
[[devices]]
id = "g0"
machine = "m"
memory_gib = 24.0
peak_tflops = 165.0

[[devices]]
id = "g1"
machine = "m"
memory_gib = 24.0
peak_tflops = 165.0

[machines.m]
intra_bandwidth_gbps = 32.0
intra_latency_us = 10.0

[inter]
bandwidth_gbps = 1.0
latency_us = 100.0
"#,
    )
    .unwrap();
    let model = dir.path().join("m.toml");
    std::fs::write(&model, "num_layers = 4\nhidden_dim = 1024\nseq_len = 1024\nbytes_per_element = 2\n").unwrap();
    let out = hexplan(
        &[
            "oracle", "--cluster", cluster.to_str().unwrap(), "--model", model.to_str().unwrap(),
            "--global-batch", "8", "--count-only", "--format", "json",
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["plan_count"], "39");
}

#[test]
fn bandwidth_sweep_has_one_row_per_scale() {
    let (c, m) = (fixture("fig1_cluster.toml"), fixture("fig1_model.toml"));
    let mut args = vec!["bandwidth-sweep"];
    args.extend(fig1_args(c.to_str().unwrap(), m.to_str().unwrap(), &["--scales", "0.5,2", "--format", "json"]));
    let out = hexplan(&args, None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn help_exits_zero() {
    assert_eq!(hexplan(&["--help"], None).status.code(), Some(0));
}
