//! The command-line tool, driven as a subprocess.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qdcascade"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

fn simulate(dir: &TempDir, cfg: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.path().join(name);
    let mut args = vec!["--config", s(cfg)];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["simulate", "--out", s(&out)]);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn records(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_owned)
        .collect()
}

/// Rows of a CSV with `#` comments and one header line.
fn csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

const BRIGHT: &str = "[cascade]\neta = 0.05\nprecession_ps = 122\n[run]\npulses_per_setting = 4000000\nseed = 5\n";

#[test]
fn simulate_is_deterministic_and_seed_sensitive() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", "[run]\npulses_per_setting = 200000000\n");
    let a = simulate(&dir, &cfg, "a.csv", &[]);
    let b = simulate(&dir, &cfg, "b.csv", &["--threads", "1"]);
    let c = simulate(&dir, &cfg, "c.csv", &["--seed", "2"]);
    let (a, b, c) = (fs::read(a).unwrap(), fs::read(b).unwrap(), fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(String::from_utf8(a).unwrap().starts_with("# cascade-events v1\n"));
}

#[test]
fn zero_efficiency_gives_header_only_file() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", "[cascade]\neta = 0\n[run]\npulses_per_setting = 1000\n");
    let ev = simulate(&dir, &cfg, "e.csv", &[]);
    assert!(records(&ev).is_empty());
    let hist = dir.path().join("h");
    assert_eq!(code(&run(&["histogram", s(&ev), "--out", s(&hist)])), 0);
    let files: Vec<_> = fs::read_dir(&hist).unwrap().collect();
    assert_eq!(files.len(), 16);
    for f in files {
        let (_, rows) = csv(&f.unwrap().path());
        assert!(rows.iter().all(|r| r[1] == 0.0));
    }
}

#[test]
fn bad_config_key_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", "[cascade]\ntau_x = 410\n");
    let o = run(&["--config", s(&cfg), "simulate", "--out", s(&dir.path().join("e.csv"))]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("tau_x") && err.contains("[cascade]"), "{err}");
    assert!(!dir.path().join("e.csv").exists());

    let cfg = config(&dir, "d.toml", "[cascade]\neta = 1.5\n");
    assert_eq!(code(&run(&["--config", s(&cfg), "simulate", "--out", "x.csv"])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);
}

#[test]
fn missing_and_unknown_settings() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", BRIGHT);
    let ev = simulate(&dir, &cfg, "e.csv", &[]);
    let text = fs::read_to_string(&ev).unwrap();

    // drop setting 15 from the header and the records
    let dropped: String = text
        .lines()
        .filter(|l| !l.starts_with("# setting: 15 ") && l.split(',').nth(1) != Some("15"))
        .map(|l| format!("{l}\n"))
        .collect();
    let short = dir.path().join("short.csv");
    fs::write(&short, dropped).unwrap();
    let out = dir.path().join("t.csv");
    let o = run(&["tomograph", s(&short), "--method", "linear", "--resamples", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));

    let first = records(&ev)[0].clone();
    let mut fields: Vec<&str> = first.split(',').collect();
    fields[1] = "99";
    let bad = text.replacen(&first, &fields.join(","), 1);
    let bad_path = dir.path().join("bad.csv");
    fs::write(&bad_path, bad).unwrap();
    assert_eq!(code(&run(&["fit", s(&bad_path), "--out", s(&dir.path().join("f.txt"))])), 3);
    assert_eq!(code(&run(&["fit", s(&dir.path().join("absent.csv")), "--out", "f.txt"])), 3);
}

#[test]
fn histograms_conserve_events_and_show_precession() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.toml", BRIGHT);
    let ev = simulate(&dir, &cfg, "e.csv", &[]);
    let n_events = records(&ev).len();
    let hist = dir.path().join("h");
    let o = run(&["histogram", s(&ev), "--bin-ps", "4", "--t-max-ps", "20000", "--out", s(&hist)]);
    assert_eq!(code(&o), 0);
    let mut total = 0.0;
    for f in fs::read_dir(&hist).unwrap() {
        let (header, rows) = csv(&f.unwrap().path());
        assert_eq!(header, ["dt_bin_ps", "count"]);
        total += rows.iter().map(|r| r[1]).sum::<f64>();
    }
    assert_eq!(total as usize, n_events);

    // (L,L) is at a minimum near dt = 0 and again near dt = T_P
    let (_, rows) = csv(&hist.join("setting_15_LL.csv"));
    let in_range = |a: f64, b: f64| rows.iter().filter(|r| r[0] >= a && r[0] < b).map(|r| r[1]).sum::<f64>();
    let low_0 = in_range(0.0, 20.0);
    let high = in_range(51.0, 71.0);
    let low_tp = in_range(112.0, 132.0);
    assert!(high > 3.0 * low_0 && high > 2.0 * low_tp, "{low_0} {high} {low_tp}");

    let grid = dir.path().join("g");
    let o = run(&["histogram", s(&ev), "--mode", "2d", "--bin-ps", "50", "--t-max-ps", "5000", "--out", s(&grid)]);
    assert_eq!(code(&o), 0);
    let (header, rows) = csv(&grid.join("setting_00_HH.csv"));
    assert_eq!(header.len(), 3);
    // the 2d map covers [0, 5000) on both axes; jitter can push times below zero
    let hh = records(&ev)
        .iter()
        .map(|r| r.split(',').map(|x| x.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .filter(|r| r[1] == 0.0 && r[2] >= 0.0 && r[3] >= 0.0 && r[2] < 5000.0 && r[3] < 5000.0)
        .count();
    assert_eq!(rows.iter().map(|r| r[2]).sum::<f64>() as usize, hh);
}

#[test]
fn sweep_fit_and_tomograph_outputs() {
    let dir = TempDir::new().unwrap();
    // sweep windows snap to bin edges, so use bins that hit 122 and 174.5
    let cfg = config(&dir, "c.toml", &format!("{BRIGHT}[analysis]\nbin_ps = 0.5\n"));
    let ev = simulate(&dir, &cfg, "e.csv", &[]);

    let sweep = dir.path().join("s.csv");
    let o = run(&[
        "negativity-sweep", s(&ev), "--dtmin", "122", "--dtmax", "174.5", "--steps", "2", "--method", "linear",
        "--out", s(&sweep),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv(&sweep);
    assert_eq!(header, ["delta_t_ps", "n_data", "n_sigma", "n_ideal", "n_irf_model", "low_stats"]);
    assert_eq!(rows.len(), 2);
    let ideal = column(&header, "n_ideal");
    for r in &rows {
        // closed form of the flat window average
        let x = std::f64::consts::PI * r[0] / 122.0;
        assert!((r[ideal] - 0.5 * (x.sin() / x).abs()).abs() < 1e-9);
        assert!((r[ideal] - common::windowed_negativity(0.0, r[0], 122.0)).abs() < 1e-8);
    }
    assert!(rows[0][ideal] < 1e-3);
    assert!((rows[1][ideal] - 0.109).abs() < 5e-4, "{}", rows[1][ideal]);

    let cfg = config(&dir, "d.toml", BRIGHT);
    let ev = simulate(&dir, &cfg, "e4.csv", &[]);
    let report = dir.path().join("fit.txt");
    assert_eq!(code(&run(&["fit", s(&ev), "--out", s(&report)])), 0);
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.contains("precession_ps = 122 # fixed"), "{text}");
    let tau: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("tau_r_ps = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((tau - 410.0).abs() < 25.0, "{tau}");
    let (header, _) = csv(&dir.path().join("fit.txt.curves.csv"));
    assert_eq!(header, ["setting_id", "dt_center_ps", "data", "model", "residual"]);

    let series = dir.path().join("t.csv");
    let o = run(&["tomograph", s(&ev), "--method", "linear", "--resamples", "0", "--out", s(&series)]);
    assert_eq!(code(&o), 0);
    let loaded = qdcascade::io::MatrixSeries::read(&series).unwrap();
    assert!(!loaded.rows.is_empty());
    for row in &loaded.rows {
        assert!((row.rho.trace().re - 1.0).abs() < 1e-9);
    }
}
