use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pam-lab"));
    c.env_remove("PAM_LAB_THREADS");
    c
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const TINY_SIMULATE: &str = r#"{
  "kind": "simulate",
  "seed": 21,
  "solver": {"model": "circle", "bandwidth": 12, "noise_bandwidth": 6, "alpha": 1.0, "rho": 6.283185307179586,
             "beta": 0.5, "dt": 0.01, "horizon": 0.5, "smoothing": 0.02, "paths": 300},
  "initial": {"atoms": [{"at": [0.0]}]},
  "checkpoints": 10,
  "probes": [[0.0], [1.0]],
  "dump_paths": 3
}"#;

#[test]
fn malformed_json_exits_64_with_a_located_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        "{\n  \"kind\": \"simulate\",\n  \"seed\": 1,,\n}",
    );
    let o = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 64);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn unreadable_or_invalid_configs_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .arg("run")
        .arg(dir.path().join("missing.json"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 64);
    assert!(!o.stderr.is_empty());
    let unknown = write(
        dir.path(),
        "u.json",
        &TINY_SIMULATE.replace("\"dump_paths\": 3", "\"dump_paths\": 3,\n  \"colour\": 1"),
    );
    let o = bin().arg("run").arg(&unknown).output().unwrap();
    assert_eq!(code(&o), 64);
    assert!(String::from_utf8_lossy(&o.stderr).contains("`colour`"));
    let no_seed = write(
        dir.path(),
        "s.json",
        &TINY_SIMULATE.replace("\"seed\": 21,", ""),
    );
    let o = bin()
        .arg("run")
        .arg(&no_seed)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 64);
    assert_eq!(code(&bin().arg("run").output().unwrap()), 64);
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);
}

#[test]
fn runs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.json", TINY_SIMULATE);
    let mut outputs = vec![];
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let o = bin()
            .arg("run")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .env("PAM_LAB_THREADS", threads)
            .output()
            .unwrap();
        assert!(
            matches!(code(&o), 0..=2),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        outputs.push(out);
    }
    let out = dir.path().join("flag");
    let o = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("--threads")
        .arg("2")
        .output()
        .unwrap();
    assert!(matches!(code(&o), 0..=2));
    outputs.push(out);
    for f in [
        "results.json",
        "trajectories.bin",
        "moments.csv",
        "second_moment-mean.svg",
    ] {
        let first = fs::read(outputs[0].join(f)).unwrap();
        for o in &outputs[1..] {
            assert_eq!(first, fs::read(o.join(f)).unwrap(), "{f} differs");
        }
    }
    let timing: serde_json::Value =
        serde_json::from_slice(&fs::read(outputs[2].join("timing.json")).unwrap()).unwrap();
    assert_eq!(timing["threads"], 2);

    let other = dir.path().join("seed");
    bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&other)
        .arg("--seed")
        .arg("22")
        .output()
        .unwrap();
    assert_ne!(
        fs::read(outputs[0].join("results.json")).unwrap(),
        fs::read(other.join("results.json")).unwrap()
    );
}

#[test]
fn geometry_suite_passes_and_emits_the_zeta_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "g.json",
        r#"{"kind": "verify-geometry", "seed": 5, "models": ["circle", "torus2", "sphere2"], "samples": 20000, "zeta_samples": 20000}"#,
    );
    let out = dir.path().join("geometry");
    let o = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let zeta = fs::read_to_string(out.join("zeta.csv")).unwrap();
    assert_eq!(zeta.lines().count(), 4);
    assert!(zeta.contains("torus2,0.25,local"));

    let o = bin().arg("report").arg(dir.path()).output().unwrap();
    assert_eq!(code(&o), 0);
    let matrix = fs::read_to_string(dir.path().join("traceability.csv")).unwrap();
    let rows: Vec<&str> = matrix.lines().skip(1).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.contains(",pass,")), "{matrix}");
}

#[test]
fn short_intermittency_window_is_inconclusive_with_target_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "i.json",
        r#"{"kind": "intermittency", "seed": 2,
            "solver": {"model": "circle", "bandwidth": 8, "noise_bandwidth": 4, "alpha": 1.0, "rho": 6.283185307179586,
                       "beta": 0.5, "dt": 0.01, "horizon": 0.6, "smoothing": 0.02, "paths": 200},
            "initial": {"volume": 1.0}, "betas": [0.5], "window": [0.2, 0.6], "checkpoint_spacing": 0.1, "probe": [0.0]}"#,
    );
    let out = dir.path().join("i");
    let o = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stdout));
    let csv = fs::read_to_string(out.join("lyapunov.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "0.5");
    assert!((row[1].parse::<f64>().unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn failing_checks_exit_1_and_numerical_errors_exit_70() {
    let dir = tempfile::tempdir().unwrap();
    let rough = write(
        dir.path(),
        "m.json",
        r#"{"kind": "moments", "model": "circle", "alpha": 1.0, "rho": 1.6449340668482264, "beta": 3.0,
            "time": 2.0, "smoothing": 0.01, "at": [0.0], "initial": {"atoms": [{"at": [0.0]}]},
            "series": {"bandwidth": 8, "noise_bandwidth": 4, "time_intervals": 16, "orders": 1}}"#,
    );
    let o = bin()
        .arg("run")
        .arg(&rough)
        .arg("--out")
        .arg(dir.path().join("m"))
        .arg("--seed")
        .arg("1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));

    let blowup = write(
        dir.path(),
        "b.json",
        &TINY_SIMULATE.replace("\"beta\": 0.5", "\"beta\": 1e9"),
    );
    let o = bin()
        .arg("run")
        .arg(&blowup)
        .arg("--out")
        .arg(dir.path().join("b"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 70);
    assert!(String::from_utf8_lossy(&o.stderr).contains("[solver]"));
}

#[test]
fn report_on_an_empty_directory_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().arg("report").arg(dir.path()).output().unwrap();
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("traceability.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}
