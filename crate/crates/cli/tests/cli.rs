use std::path::Path;
use std::process::{Command, Output};

const SMALL_PROFILE: &str = r#"
name = "small"
frames = 100
repetitions = 3
input_w = 128
input_h = 96
channel_capacity = 4
watchdog_s = 30
seed = 0

[latency]
source_us = 0
source_pacing = "fixed"
resize_us = 0
infer_overhead_us = 1000
infer_per_item_us = 0
parse_us = 0
sink_us = 0

[[config]]
name = "sequential"
mode = "sequential"
scheduler = false
batch_max = 1
linger_us = 0

[[config]]
name = "pipelined"
mode = "pipelined"
scheduler = false
batch_max = 1
linger_us = 0
baseline = "sequential"
"#;

fn posestream(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posestream"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn demo_scenes() -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes/demo.toml");
    format!("synth:{}", p.canonicalize().unwrap().display())
}

fn run_poses(out: &Path, extra: &[&str]) -> Vec<u8> {
    let backend = demo_scenes();
    let out_s = out.to_str().unwrap();
    let mut args = vec!["run", "--backend", &backend, "--frames", "100", "--out", out_s, "--out-overlay", "off"];
    args.extend_from_slice(extra);
    let o = posestream(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::read(out.join("poses.jsonl")).unwrap()
}

#[test]
fn run_writes_one_line_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let poses = String::from_utf8(run_poses(dir.path(), &[])).unwrap();
    assert_eq!(poses.lines().count(), 100);
    assert!(dir.path().join("stats.json").exists());
    // Demo scenes hold 2, 1 and 3 humans and frames cycle through them.
    let first = poses.lines().next().unwrap();
    assert_eq!(first.matches("\"keypoints\"").count(), 2, "{first}");
}

#[test]
fn scheduler_settings_do_not_change_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_poses(&dir.path().join("a"), &["--scheduler", "off", "--batch-max", "1"]);
    let b = run_poses(&dir.path().join("b"), &["--scheduler", "on", "--batch-max", "8"]);
    assert_eq!(a, b);
}

#[test]
fn missing_topology_is_a_config_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = posestream(&[
        "run",
        "--topology",
        dir.path().join("nope.toml").to_str().unwrap(),
        "--frames",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn failing_backend_reports_the_operator() {
    let dir = tempfile::tempdir().unwrap();
    let maps = dir.path().join("maps");
    std::fs::create_dir(&maps).unwrap();
    let backend = format!("file:{}", maps.display());
    let out = dir.path().join("out");
    let o = posestream(&["run", "--backend", &backend, "--frames", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("operator `infer`"), "{}", stderr(&o));
}

#[test]
fn printed_config_loads_back_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let o = posestream(&["run", "--frames", "42", "--batch-max", "3", "--print-config"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, &text).unwrap();
    let again = posestream(&["run", "--config", path.to_str().unwrap(), "--print-config"]);
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(stdout(&again), text);
    assert!(text.contains("frames = 42"));
}

#[test]
fn bench_rejects_too_few_repetitions_and_empty_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r");
    let o = posestream(&["bench", "--profile", "pipelining", "--repetitions", "1", "--report", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let empty = dir.path().join("empty.toml");
    std::fs::write(&empty, SMALL_PROFILE.replace("frames = 100", "frames = 0")).unwrap();
    let o = posestream(&["bench", "--profile", empty.to_str().unwrap(), "--report", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!report.join("bench_report.json").exists());
}

#[test]
fn bench_small_profile_writes_table_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("small.toml");
    std::fs::write(&profile, SMALL_PROFILE).unwrap();
    let report = dir.path().join("r");
    let o = posestream(&["bench", "--profile", profile.to_str().unwrap(), "--report", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.contains("sequential") && table.contains("pipelined"), "{table}");
    let json = std::fs::read_to_string(report.join("bench_report.json")).unwrap();
    assert!(json.contains("\"sequential\"") && json.contains("\"pipelined\""));
    assert!(report.join("bench_table.txt").exists());
}

#[test]
fn selftest_passes_every_check() {
    let o = posestream(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 8);
}

#[test]
fn selftest_flags_a_corrupted_topology() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let good = posestream::topology::SkeletonTopology::bundled_source();
    std::fs::write(&path, good.replacen("[1, 8]", "[1, 99]", 1)).unwrap();
    let o = posestream(&["selftest", "--topology", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let fail = stdout(&o).lines().find(|l| l.starts_with("FAIL")).map(str::to_owned).unwrap_or_default();
    assert!(fail.contains("topology") && fail.contains("99"), "{}", stdout(&o));
}

#[test]
fn selftest_prints_a_loadable_default_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = posestream(&["selftest", "--print-config"]);
    assert!(o.status.success());
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, stdout(&o)).unwrap();
    let again = posestream(&["run", "--config", path.to_str().unwrap(), "--print-config"]);
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(stdout(&again), stdout(&o));
}
