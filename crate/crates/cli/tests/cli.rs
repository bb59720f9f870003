use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_jumpgauss"));
    c.env_remove("JUMPGAUSS_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.ini");
    fs::write(&p, body).unwrap();
    p
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

fn manifest(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn eta_row_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    ok(&["eta", "--eps-list", "0.1", "--out", out.to_str().unwrap()]);
    let r = rows(&out.join("eta.csv"));
    assert_eq!(r.len(), 1);
    let eta3: f64 = r[0][3].parse().unwrap();
    assert!((eta3 - 1.26491106406735e-3).abs() <= 1e-15);
    let m = manifest(&out.join("eta.manifest.jsonl"));
    assert_eq!(m.len(), 1);
    assert_eq!(m[0]["config"]["scheme.eps_list"]["origin"], "flag");
    assert_eq!(m[0]["config"]["measure.b"]["origin"], "default");
    assert_eq!(m[0]["config_hash"].as_str().unwrap().len(), 64);
    let body = fs::read(out.join("eta.csv")).unwrap();
    assert_eq!(
        m[0]["content_hash"],
        jumpgauss_cli::output::blob_hash(&body)
    );
}

#[test]
fn zero_coefficient_leaves_state_at_x0() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "[coefficient]\npreset = zero\n[scheme]\nx0 = 1.25\neps_list = 0.2, 0.05\npaths = 50\n",
    );
    let out = dir.path().join("o");
    ok(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let r = rows(&out.join("terminals.csv"));
    assert_eq!(r.len(), 50 * 5);
    assert!(r.iter().all(|row| row[3].parse::<f64>().unwrap() == 1.25));
    let schemes: std::collections::BTreeSet<&str> = r.iter().map(|row| &row[1]).collect();
    assert_eq!(
        schemes.into_iter().collect::<Vec<_>>(),
        ["gaussian", "reference", "truncation"]
    );
}

#[test]
fn weak_rate_rerun_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "seed = 11\n[coefficient]\npreset = sigma-tanh\n[scheme]\npaths = 400\nsteps_per_unit = 8\n",
    );
    let mut outs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let out = dir.path().join(name);
        ok(&[
            "weak-rate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        outs.push(out);
    }
    for file in ["weak_errors.csv", "weak_proxy.csv", "weak_fit.csv"] {
        let a = fs::read(outs[0].join(file)).unwrap();
        assert!(!a.is_empty());
        for o in &outs[1..] {
            assert_eq!(a, fs::read(o.join(file)).unwrap(), "{file}");
        }
    }
    let m = manifest(&outs[0].join("weak-rate.manifest.jsonl"));
    assert_eq!(m.len(), 3);
    assert_eq!(m[0]["seed"], 11);
    assert_eq!(m[0]["coefficient"]["sigma_upper"], 3.0);
    assert_eq!(m[0]["event_digest"], m[2]["event_digest"]);
}

#[test]
fn threads_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = bin()
        .env("JUMPGAUSS_THREADS", "0")
        .args(["eta", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin()
        .env("JUMPGAUSS_THREADS", "2")
        .args(["eta", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success());
}

#[test]
fn tv_rate_and_split_check_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "[scheme]\npaths = 2000\neps_list = 0.2, 0.1\nsteps_per_unit = 4\n[stats]\nkde_grid = 256\n[split]\nbands = 2\ndraws = 5000\n",
    );
    let out = dir.path().join("o");
    let c = cfg.to_str().unwrap();
    let o = out.to_str().unwrap();
    ok(&["tv-rate", "--config", c, "--out", o]);
    ok(&["split-check", "--config", c, "--out", o]);
    ok(&["gen-check", "--config", c, "--out", o, "--eps-list", "0.2"]);

    let tv = rows(&out.join("tv.csv"));
    assert_eq!(tv.len(), 4);
    assert!(tv
        .iter()
        .all(|r| (0.0..=1.0).contains(&r[2].parse::<f64>().unwrap())));
    let fit = rows(&out.join("tv_fit.csv"));
    assert_eq!(fit.len(), 2);
    assert_eq!(&fit[0][1], "insufficient-data");

    let split = rows(&out.join("split_check.csv"));
    assert_eq!(split.len(), 2);
    assert_eq!(split[0].len(), 7 + 12);

    let gen = rows(&out.join("gen_check.csv"));
    assert_eq!(gen.len(), 5 * 105);
    assert!(gen.iter().all(|r| &r[8] == "true"));
    for m in ["tv-rate", "split-check", "gen-check"] {
        assert!(out.join(format!("{m}.manifest.jsonl")).exists());
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();

    let bad = config(dir.path(), "[scheme]\nmystery = 3\n");
    let r = run(&["eta", "--config", bad.to_str().unwrap(), "--out", o]);
    assert_eq!(r.status.code(), Some(2));
    let rec: Value = serde_json::from_slice(&r.stderr).unwrap();
    assert_eq!(rec["error"], "config");

    let r = run(&[
        "weak-rate",
        "--out",
        o,
        "--eps-list",
        "0.2",
        "--paths",
        "10",
    ]);
    assert_eq!(
        r.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let rec: Value = serde_json::from_slice(&r.stderr).unwrap();
    assert_eq!(rec["error"], "insufficient-data");

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let r = run(&["eta", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(4));

    ok(&["eta", "--out", o]);
    let r = run(&["eta", "--out", o]);
    assert_eq!(r.status.code(), Some(4));
}

#[test]
fn shipped_example_config_loads() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/example.ini");
    let cfg = jumpgauss_cli::ExperimentConfig::load(Some(&path), &Default::default(), "weak-rate")
        .unwrap();
    assert_eq!(cfg.paths, 200_000);
    assert_eq!(cfg.eps_ref, 0.025 / 16.0);
    assert_eq!(cfg.coefficient, "sigma-tanh");
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "eta",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
}
