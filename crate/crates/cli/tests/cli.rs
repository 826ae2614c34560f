use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn zklab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zklab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn record(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn small_solve() -> Vec<&'static str> {
    vec![
        "solve",
        "--override",
        "lattice.modes=32",
        "--override",
        "solve.horizon=0.05",
        "--override",
        "solver.record_every=10",
    ]
}

#[test]
fn zero_data_gives_flat_series() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = small_solve();
    args.extend(["--override", "initial.kind=zero"]);
    let o = zklab(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("functionals.csv"));
    assert_eq!(rows.len(), 6);
    for row in rows {
        for v in &row[1..] {
            assert_eq!(v.parse::<f64>().unwrap(), 0.0);
        }
    }
}

#[test]
fn solve_is_byte_identical_across_runs_and_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut args = small_solve();
    args.extend(["--override", "initial={\"kind\":\"band_limited\",\"k_min\":1,\"k_max\":8,\"decay\":1,\"l2_norm\":1,\"seed\":4}"]);
    assert_eq!(code(&zklab(&args, a.path())), 0);
    args.extend(["--threads", "2"]);
    assert_eq!(code(&zklab(&args, b.path())), 0);
    let x = fs::read(a.path().join("functionals.csv")).unwrap();
    let y = fs::read(b.path().join("functionals.csv")).unwrap();
    assert_eq!(x, y);
    assert_eq!(record(a.path())["config_hash"], record(b.path())["config_hash"]);
}

#[test]
fn csv_layout_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let o = zklab(&small_solve(), dir.path());
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("functionals.csv")).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.ends_with('\n'));
    let hash = record(dir.path())["config_hash"].as_str().unwrap().to_string();
    assert_eq!(zklab::io::csv_provenance(&text, "config_hash"), Some(hash));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "t,mass,energy,E0,Lambda3_sigma3,E1_tilde");
    let first = text.lines().nth(3).unwrap();
    let mantissa = first.split(',').nth(1).unwrap().split('e').next().unwrap();
    assert_eq!(mantissa.replace(['-', '.'], "").len(), 17);
}

#[test]
fn manifest_files_exist_and_carry_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = small_solve();
    args.extend(["--override", "solve.checkpoint=true"]);
    assert_eq!(code(&zklab(&args, dir.path())), 0);
    let rec = record(dir.path());
    let hash = rec["config_hash"].as_str().unwrap();
    let files = rec["files"].as_array().unwrap();
    assert!(files.len() >= 6);
    for f in files {
        let name = f["path"].as_str().unwrap();
        let path = dir.path().join(name);
        assert!(path.exists(), "{name}");
        match f["kind"].as_str().unwrap() {
            "checkpoint" => {
                let (tr, meta) = zklab::io::read_checkpoint(&path).unwrap();
                assert_eq!(meta.config_hash, hash);
                assert_eq!(tr.len(), 6);
            }
            "csv" => assert!(fs::read_to_string(&path).unwrap().contains(hash)),
            _ => {
                let v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
                assert_eq!(v["config_hash"], hash, "{name}");
            }
        }
    }
}

#[test]
fn missing_output_directory_is_created() {
    let dir = tempfile::tempdir().unwrap();
    let nested = dir.path().join("a/b/c");
    assert_eq!(code(&zklab(&small_solve(), &nested)), 0);
    assert!(nested.join("run.json").exists());
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    fs::write(&file, b"x").unwrap();
    let o = zklab(&small_solve(), &file.join("sub"));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("output directory"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["solve", "--override", "lattice.mdoes=32"],
        vec!["solve", "--override", "noequals"],
        vec!["solve", "--threads", "0"],
        vec!["solve", "--config", "/nonexistent/config.json"],
        vec!["frobnicate"],
        vec!["scan-n", "--override", "scan.n_list=[4]"],
        vec!["solve", "--override", "lattice.modes=7"],
    ];
    for args in cases {
        let o = zklab(&args, dir.path());
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn unknown_verifier_lists_the_available_ones() {
    let dir = tempfile::tempdir().unwrap();
    let o = zklab(&["verify", "--verifier", "bogus"], dir.path());
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    for v in ["fti1", "differentiation", "strichartz", "transversality", "orthogonality"] {
        assert!(err.contains(v), "{err}");
    }
}

#[test]
fn fti1_without_smoothing_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = zklab(
        &[
            "verify",
            "--verifier",
            "fti1",
            "--override",
            "symbols.s=0",
            "--override",
            "verify.fti1.samples=2000",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    for v in record(dir.path())["verdicts"].as_array().unwrap() {
        assert_eq!(v["observed"], 0.0);
    }
}

#[test]
fn transversality_identity_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = zklab(&["verify", "--verifier", "transversality"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("PASS transversality/example"));
}

#[test]
fn unsmoothed_scan_has_flat_slope_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = zklab(
        &[
            "scan-n",
            "--override",
            "lattice.modes=16",
            "--override",
            "symbols.s=0",
            "--override",
            "scan.n_list=[2,4,8]",
            "--override",
            "scan.delta=0.01",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let rec = record(dir.path());
    let slope = rec["verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .find(|v| v["cell"] == "slope")
        .unwrap()["observed"]
        .as_f64()
        .unwrap();
    assert!(slope.abs() < 1e-6, "{slope}");
    assert_eq!(csv_rows(&dir.path().join("drift.csv")).len(), 3);
}

#[test]
fn decomp_stats_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = zklab(&["decomp-stats", "--override", "decomp.a_list=[128,256]"], dir.path());
    assert!(matches!(code(&o), 0 | 1), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("decomp.csv"));
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.len() == 8));
    assert_eq!(csv_rows(&dir.path().join("orthogonality.csv")).len(), 2);
}

#[test]
fn committed_configs_reproduce_their_payloads() {
    for name in ["transversality.json", "solve_gaussian.json", "decomp_stats.json"] {
        let cfg = repo().join("configs").join(name);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut args = vec!["--config", cfg.to_str().unwrap()];
        let sub = match name {
            "transversality.json" => "transversality",
            "solve_gaussian.json" => "solve",
            _ => "decomp-stats",
        };
        args.insert(0, sub);
        if sub == "decomp-stats" {
            args.extend(["--override", "decomp.a_list=[256,512]"]);
        }
        let x = zklab(&args, a.path());
        let y = zklab(&args, b.path());
        assert_eq!(code(&x), code(&y));
        let mut compared = 0;
        for entry in fs::read_dir(a.path()).unwrap() {
            let p = entry.unwrap().path();
            if p.extension().is_some_and(|e| e == "csv") {
                let other = b.path().join(p.file_name().unwrap());
                assert_eq!(fs::read(&p).unwrap(), fs::read(other).unwrap(), "{}", p.display());
                compared += 1;
            }
        }
        assert!(compared > 0, "{name}");
    }
}
