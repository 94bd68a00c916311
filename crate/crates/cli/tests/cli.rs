use std::fs;
use std::process::Command;

fn agectl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_agectl")).args(args).output().expect("spawn agectl")
}

#[test]
fn simulate_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "name = demo\npolicy = lazy\npackets = 300\nchannel = small-delay\nseeds = 1,2\n").unwrap();
    let out = dir.path().join("out");
    let o = agectl(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = out.join("demo/seed-4.csv");
    assert!(trace.exists());
    assert!(out.join("demo/summary.txt").exists());
    assert!(out.join("plot/demo.age_cdf.dat").exists());

    let report = dir.path().join("report");
    let o = agectl(&["analyze", trace.to_str().unwrap(), "--report", report.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(report.join("pooled.summary.txt")).unwrap();
    assert!(summary.contains("weighted_mean_age_ns = "));
}

#[test]
fn unknown_config_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "policy = acp\nspeed = 11\n").unwrap();
    let o = agectl(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key 'speed'"));
}

#[test]
fn sweep_writes_sweep_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("base.conf");
    fs::write(&cfg, "packets = 200\n").unwrap();
    let out = dir.path().join("sweep");
    let o = agectl(&[
        "sweep-kappa",
        "--values",
        "0.1,0.5",
        "--runs",
        "2",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sweep = fs::read_to_string(out.join("plot/sweep.dat")).unwrap();
    assert_eq!(sweep.lines().filter(|l| !l.starts_with('#')).count(), 2);
    assert_eq!(fs::read_dir(out.join("acp-kappa-0.5")).unwrap().count(), 3);
}

#[test]
fn trace_reruns_as_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "name = again\npolicy = acp\npackets = 200\nseeds = 3\n").unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = agectl(&["simulate", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = a.join("again/seed-3.csv");
    let o = agectl(&["simulate", "--config", trace.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(trace).unwrap(), fs::read(b.join("again/seed-3.csv")).unwrap());
}
