//! Runs the criterion configs in `configs/` through the binary and reports one line per criterion.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

struct Run {
    code: i32,
    results: Value,
    dir: PathBuf,
}

fn run(name: &str, out: &Path, threads: Option<(&str, &str)>) -> Run {
    let dir = out.join(name);
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pam-lab"));
    cmd.arg("run")
        .arg(configs().join(format!("{name}.json")))
        .arg("--out")
        .arg(&dir)
        .env_remove("PAM_LAB_THREADS");
    match threads {
        Some(("env", n)) => {
            cmd.env("PAM_LAB_THREADS", n);
        }
        Some((_, n)) => {
            cmd.arg("--threads").arg(n);
        }
        None => {}
    }
    let o = cmd.output().expect("binary runs");
    let code = o.status.code().unwrap_or(-1);
    assert!(
        matches!(code, 0..=2),
        "{name} exited with {code}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    let results =
        serde_json::from_slice(&std::fs::read(dir.join("results.json")).unwrap()).unwrap();
    Run { code, results, dir }
}

/// Every verdict filed under `criterion` across `runs`; passes when there is at least one and all pass.
fn verdicts(runs: &[&Run], criterion: &str) -> (bool, String) {
    let mut n = 0;
    let mut failed = vec![];
    for r in runs {
        for v in r.results["verdicts"].as_array().unwrap() {
            if v["criterion"] == criterion {
                n += 1;
                if v["verdict"] != "pass" {
                    failed.push(format!(
                        "{} ({}): {}",
                        v["claim"], v["verdict"], v["detail"]
                    ));
                }
            }
        }
    }
    let ok = n > 0 && failed.is_empty();
    let detail = if failed.is_empty() {
        format!("{n} checks")
    } else {
        failed.join("; ")
    };
    (ok, detail)
}

#[test]
fn acceptance_criteria() {
    let out = tempfile::tempdir().unwrap();
    let geometry = run("verify-geometry", out.path(), None);
    let kernels = run("verify-kernels", out.path(), None);
    let noise = run("verify-noise", out.path(), None);
    let integrals = run("verify-integrals", out.path(), None);
    let moments = run("moments-crosscheck", out.path(), None);
    let intermittency = run("intermittency", out.path(), None);
    let compare = run("compare", out.path(), None);
    let simulate = run("simulate", out.path(), None);

    let mut lines: BTreeMap<usize, (String, bool, String)> = BTreeMap::new();
    let mut record = |n: usize, name: &str, (ok, detail): (bool, String)| {
        lines.insert(n, (name.to_string(), ok, detail));
    };
    record(
        1,
        "heat-kernel-oracle",
        verdicts(&[&kernels], "heat-kernel-oracle"),
    );
    record(
        2,
        "three-distance-sweep",
        verdicts(&[&geometry], "three-distance-sweep"),
    );
    record(
        3,
        "decomposition-identity",
        verdicts(&[&geometry], "decomposition-identity"),
    );
    record(4, "zeta-scale", verdicts(&[&geometry], "zeta-scale"));
    record(5, "noise-kernel", verdicts(&[&noise], "noise-kernel"));
    record(
        6,
        "envelope-suite",
        verdicts(&[&kernels, &noise, &integrals], "envelope-suite"),
    );
    record(
        7,
        "series-mc-crosscheck",
        verdicts(&[&moments], "series-mc-crosscheck"),
    );
    record(
        8,
        "lyapunov-lower-bound",
        verdicts(&[&intermittency], "lyapunov-lower-bound"),
    );
    record(
        9,
        "comparison-principle",
        verdicts(&[&compare], "comparison-principle"),
    );
    record(
        10,
        "moment-envelope",
        verdicts(&[&simulate], "moment-envelope"),
    );

    let mut same = true;
    let mut detail = vec![];
    let reference = std::fs::read(simulate.dir.join("results.json")).unwrap();
    let reference_dump = std::fs::read(simulate.dir.join("trajectories.bin")).unwrap();
    for (i, threads) in [("env", "1"), ("flag", "4"), ("flag", "8")]
        .into_iter()
        .enumerate()
    {
        let r = run(
            "simulate",
            &out.path().join(format!("threads{i}")),
            Some(threads),
        );
        let identical = std::fs::read(r.dir.join("results.json")).unwrap() == reference
            && std::fs::read(r.dir.join("trajectories.bin")).unwrap() == reference_dump;
        same &= identical && r.code == simulate.code;
        detail.push(format!(
            "{} threads: {}",
            threads.1,
            if identical { "identical" } else { "different" }
        ));
    }
    record(11, "reproducibility", (same, detail.join(", ")));

    let mut stdout = std::io::stdout().lock();
    for (n, (name, ok, detail)) in &lines {
        writeln!(
            stdout,
            "criterion {n} {name}: {} ({detail})",
            if *ok { "PASS" } else { "FAIL" }
        )
        .unwrap();
    }
    let failed: Vec<_> = lines
        .iter()
        .filter(|(_, l)| !l.1)
        .map(|(n, _)| *n)
        .collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
