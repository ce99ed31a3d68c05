use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_strip-lab"));
    c.env_remove("STRIP_LAB_THREADS");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const SMALL: &str = "[grid]\nnx = 16\nny = 15\n[params]\ndt = 0.01\nt_end = 0.2\nsample_every = 2\neps_ladder = [0.2, 0.1, 0.05]\n";

fn write_config(dir: &Path, extra: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, format!("{SMALL}{extra}")).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn selftest_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["selftest"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout)
        .lines()
        .all(|l| l.starts_with("PASS")));
}

#[test]
fn missing_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sweep", "--config", "missing.toml"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[band]\nwidth = 1.0\n");
    let o = run(&["simulate-aniso", "--config", &cfg], dir.path());
    assert_eq!(code(&o), 2);
    let o = run(&["simulate-aniso", "--eps", "-0.1"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_aniso_writes_monotone_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = run(
        &[
            "simulate-aniso",
            "--config",
            &cfg,
            "--eps",
            "0.1",
            "--t-end",
            "1",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ts = strip_lab::report::read_csv(&dir.path().join("o/aniso.csv")).unwrap();
    assert_eq!(ts.columns[0], "t");
    assert!(ts.columns.iter().any(|c| c == "B12_eps_u_psi"));
    let t = ts.column("t").unwrap();
    assert!(t.windows(2).all(|w| w[1] > w[0]));
    assert!((t.last().unwrap() - 1.0).abs() < 1e-9);
    assert!(ts.rows.iter().flatten().all(|v| v.is_finite()));
    for name in [
        "aniso_initial.json",
        "aniso_final.json",
        "aniso_final.bin",
        "aniso_summary.json",
    ] {
        assert!(dir.path().join("o").join(name).exists(), "{name}");
    }

    let o = run(
        &[
            "besov",
            "o/aniso_final.json",
            "o/aniso_initial.json",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["times"][0], 0.0);
    assert_eq!(v["fields"].as_array().unwrap().len(), 4);
}

#[test]
fn simulate_hydro_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = run(
        &["simulate-hydro", "--config", &cfg, "--out", "h"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ts = strip_lab::report::read_csv(&dir.path().join("h/hydro.csv")).unwrap();
    assert!(ts.column("compat").unwrap().iter().all(|&c| c < 1e-10));
}

#[test]
fn blowup_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "blowup_threshold = 1e-9\n");
    let o = run(
        &["simulate-aniso", "--config", &cfg, "--out", "o"],
        dir.path(),
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_writes_report_and_fails_strict_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = run(
        &["sweep", "--config", &cfg, "--threads", "2", "--out", "s"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s/report.json")).unwrap())
            .unwrap();
    assert!(report["criteria"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["pass"] == true));
    assert!(dir.path().join("s/sweep.svg").exists());
    assert!(dir.path().join("s/sweep_eps0.05.csv").exists());

    let strict = write_config(dir.path(), "[sweep]\nmin_slope = 10.0\n");
    let o = run(&["sweep", "--config", &strict, "--out", "s2"], dir.path());
    assert_eq!(code(&o), 4);
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    for (t, out) in [("1", "a"), ("3", "b")] {
        let o = bin()
            .args(["sweep", "--config", &cfg, "--out", out])
            .env("STRIP_LAB_THREADS", t)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
    }
    let a = std::fs::read(dir.path().join("a/sweep.json")).unwrap();
    let b = std::fs::read(dir.path().join("b/sweep.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn strict_gates_reject_large_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[initial]\namplitude = 0.01\n");
    let o = run(
        &["simulate-aniso", "--config", &cfg, "--strict-gates"],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    let o = run(
        &["simulate-aniso", "--config", &cfg, "--out", "o"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
}
