use std::fs;
use std::process::Command;

fn lmeec() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lmeec"))
}

const SMALL: &[&str] = &[
    "--set",
    "experiment.node_counts=[20]",
    "--set",
    "experiment.seeds=[3]",
    "--set",
    "experiment.protocols=[\"lmeec\"]",
    "--set",
    "sim.duration=60",
];

#[test]
fn single_triple_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = lmeec()
        .args(SMALL)
        .arg("--out")
        .arg(dir.path())
        .arg("run")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let runs = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    let lines: Vec<_> = runs.lines().collect();
    assert_eq!(lines.len(), 2, "{runs}");
    assert!(lines[1].starts_with("lmeec,20,3,"));
    assert!(dir.path().join("summary.csv").exists());
    assert!(dir.path().join("summary.json").exists());
    assert!(!dir.path().join("failures.txt").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "--set",
        "experiment.node_counts=[15, 30]",
        "--set",
        "experiment.seeds=[1, 2]",
        "--set",
        "sim.duration=40",
    ];
    for d in [&a, &b] {
        let st = lmeec()
            .args(args)
            .arg("--out")
            .arg(d.path())
            .arg("run")
            .status()
            .unwrap();
        assert!(st.success());
    }
    for f in ["runs.csv", "summary.csv", "summary.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn dump_config_round_trips() {
    let out = lmeec()
        .args(["--set", "radio.e_elec=1e-8", "--dump-config"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.lines().find(|l| l.starts_with("e_elec")).unwrap();
    let value: f64 = line.split('=').nth(1).unwrap().trim().parse().unwrap();
    assert_eq!(value, 1e-8);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    fs::write(&path, &text).unwrap();
    let again = lmeec()
        .arg("--config")
        .arg(&path)
        .arg("--dump-config")
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn bad_override_exits_with_validation_code() {
    let out = lmeec().args(["--set", "radio.bogus=1", "run"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("radio.bogus"));

    let out = lmeec().args(["--set", "lmeec.alpha=2", "run"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn trace_writes_ndjson() {
    let dir = tempfile::tempdir().unwrap();
    let out = lmeec()
        .args(["--set", "sim.duration=20", "--out"])
        .arg(dir.path())
        .args(["trace", "--protocol", "leach", "--n", "10", "--seed", "4"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("trace_leach_n10_s4.ndjson")).unwrap();
    assert!(text.lines().count() > 10);
    assert!(text.lines().all(|l| l.starts_with('{') && l.contains("\"action\"")));
}

#[test]
fn unreachable_calibration_target_is_reported() {
    let out = lmeec()
        .args(["calibrate", "--target", "0.01", "--n", "60", "--trials", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
}
