use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spiking-ips")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bound_at_zero_is_one_half() {
    let o = run(&["bound", "--gamma", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: f64 = stdout(&o).trim().rsplit(' ').next().unwrap().parse().unwrap();
    assert_eq!(v, 0.5);
}

#[test]
fn exact_single_site() {
    let o = run(&["exact", "--n", "0", "--gamma", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("mean_tau = 0.5"), "{}", stdout(&o));
}

#[test]
fn unknown_flag_exits_one() {
    let o = run(&["simulate", "--bogus", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--bogus"));
}

#[test]
fn out_of_range_values_name_the_flag() {
    for (args, flag) in [
        (vec!["bound", "--gamma", "0.5"], "--gamma"),
        (vec!["simulate", "--gamma=-1"], "--gamma"),
        (vec!["density", "--gamma", "0.05", "--horizon", "50", "--m", "10"], "--m"),
        (vec!["exact", "--n", "30"], "--n"),
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(stderr(&o).contains(flag), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn verify_writes_manifest_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--suite", "duality", "--sites", "4", "--reps", "200", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(report.starts_with("check,checks,violations,excluded,inconclusive\n"));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["config"]["seed"], 1);
    assert!(manifest["finished_unix"].is_u64());
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let base = ["sweep", "--gamma", "0.2,0.6", "--horizon", "5", "--m", "20", "--replicas", "300", "--seed", "9"];
    for (dir, w) in [(&a, "1"), (&b, "3")] {
        let mut args = base.to_vec();
        args.extend(["--workers", w, "--out", path(dir.path())]);
        let o = run(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_eq!(fs::read(a.path().join("sweep.csv")).unwrap(), fs::read(b.path().join("sweep.csv")).unwrap());
}

#[test]
fn manifest_replay_reproduces_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--n", "2", "--gamma", "0.4", "--replicas", "500", "--seed", "17", "--out", path(a.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest = a.path().join("manifest.json");
    let o = run(&["simulate", "--manifest", path(&manifest), "--workers", "4", "--out", path(b.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(a.path().join("samples.csv")).unwrap(), fs::read(b.path().join("samples.csv")).unwrap());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "# run\ngamma = 0.3\nn = 1\nreplicas = 50\nseed = 4\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&["simulate", "--config", path(&conf), "--n", "2", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["n"], serde_json::json!([2]));
    assert_eq!(manifest["config"]["gamma"], serde_json::json!([0.3]));
    assert_eq!(manifest["config"]["replicas"], 50);
    assert_eq!(manifest["config"]["seed"], 4);
}

#[test]
fn bad_config_line_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "gamma 0.3\n").unwrap();
    let o = run(&["bound", "--config", path(&conf)]);
    assert_eq!(o.status.code(), Some(1));
}
