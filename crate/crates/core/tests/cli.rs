mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gmekf::bench::{EQUIV_CSV_HEADER, NEES_CSV_HEADER, RUN_CSV_HEADER};

use common::config_path;

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("gmekf-cli-{tag}-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        TempDir(dir)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        fs::remove_dir_all(&self.0).ok();
    }
}

fn gmekf(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmekf"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

const SHORT: &str = "[scenario]\nduration_s = 20.0\n";

#[test]
fn run_writes_documented_columns() {
    let tmp = TempDir::new("run");
    let cfg = tmp.write("short.toml", SHORT);
    let out = tmp.path("run.csv");
    let o = gmekf(&["run", "--filter", "mekf"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(RUN_CSV_HEADER));
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| r.split(',').count() == 14));
}

#[test]
fn equiv_writes_discrepancies() {
    let tmp = TempDir::new("equiv");
    let cfg = tmp.write("short.toml", SHORT);
    let out = tmp.path("equiv.csv");
    let o = gmekf(&["equiv", "--seed", "3"], &cfg, &out);
    assert!(o.status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with(EQUIV_CSV_HEADER));
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn montecarlo_writes_run_files_and_nees() {
    let tmp = TempDir::new("mc");
    let cfg = tmp.write("short.toml", SHORT);
    let out = tmp.path("mc");
    let o = gmekf(&["montecarlo", "--runs", "3", "--seed", "10"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for seed in 10..13 {
        assert!(out.join(format!("run_{seed}.csv")).is_file());
    }
    let nees = fs::read_to_string(out.join("nees.csv")).unwrap();
    assert!(nees.starts_with(NEES_CSV_HEADER));
    assert_eq!(
        fs::read_to_string(out.join("summary.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );
}

#[test]
fn covariance_mod_flag_changes_gmekf_output() {
    let tmp = TempDir::new("covmod");
    let cfg = tmp.write("short.toml", SHORT);
    let on = tmp.path("on.csv");
    let off = tmp.path("off.csv");
    assert!(gmekf(
        &["--covariance-mod", "on", "run", "--filter", "gmekf"],
        &cfg,
        &on
    )
    .status
    .success());
    assert!(gmekf(
        &["run", "--filter", "gmekf", "--covariance-mod", "off"],
        &cfg,
        &off
    )
    .status
    .success());
    assert_ne!(fs::read(on).unwrap(), fs::read(off).unwrap());
}

#[test]
fn seed_flag_is_deterministic_and_matters() {
    let tmp = TempDir::new("seed");
    let cfg = tmp.write("short.toml", SHORT);
    let read = |seed: &str, name: &str| {
        let out = tmp.path(name);
        assert!(
            gmekf(&["run", "--filter", "gekf", "--seed", seed], &cfg, &out)
                .status
                .success()
        );
        fs::read(out).unwrap()
    };
    assert_eq!(read("5", "a.csv"), read("5", "b.csv"));
    assert_ne!(read("5", "c.csv"), read("6", "d.csv"));
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = TempDir::new("cfgerr");
    let out = tmp.path("x.csv");
    let cases = [
        ("unknown.toml", "[scenario]\nduration = 10.0\n"),
        ("syntax.toml", "[scenario\n"),
        ("negative.toml", "[scenario]\nduration_s = -1.0\n"),
        ("ratio.toml", "[scenario]\nmeas_dt_s = 0.25\n"),
        ("sigmas.toml", "[scenario.noise]\nmeas_deg = [0.001]\n"),
    ];
    for (name, text) in cases {
        let cfg = tmp.write(name, text);
        let o = gmekf(&["run", "--filter", "gmekf"], &cfg, &out);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let o = gmekf(
        &["run", "--filter", "gmekf"],
        &tmp.path("missing.toml"),
        &out,
    );
    assert_eq!(o.status.code(), Some(2));
    let o = gmekf(
        &["montecarlo", "--runs", "0"],
        &config_path("default.toml"),
        &tmp.path("mc"),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn singular_innovation_exits_with_3() {
    let tmp = TempDir::new("numerr");
    let cfg = tmp.write(
        "singular.toml",
        "[scenario]\nduration_s = 5.0\n\n\
         [filter]\ninitial_sigma_attitude_deg = [0.0, 0.0, 0.0]\ninitial_sigma_bias_degph = [0.0, 0.0, 0.0]\n\n\
         [filter.noise]\narw_deg_rt_h = 0.0\nrrw_deg_h32 = 0.0\nmeas_deg = [1e-300, 1e-300]\n",
    );
    let o = gmekf(&["run", "--filter", "gmekf"], &cfg, &tmp.path("x.csv"));
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
