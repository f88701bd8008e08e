//! The `qdcascade` command-line tool.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 data error,
//! 4 missing projection settings, 5 fit failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use crate::analysis::{fit_tau_r, negativity_vs_window, FitOptions, Irf, SweepOptions};
use crate::error::{Error, Result};
use crate::io::{provenance_line, write_atomic, Config, EventFile, MatrixSeries, SeriesRow};
use crate::metrics::negativity;
use crate::simulator::{histogram_2d, histogram_dt, run_experiment_with_threads, DtHistogram};
use crate::tomography::{
    bootstrap_uncertainty, default_settings, reconstruct_time_series, window_grid, Method,
    TomographyInput, Weighting,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_MISSING_SETTINGS: i32 = 4;
pub const EXIT_FIT: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "qdcascade", version, about = "Simulate and analyse entangled photon pairs from a biexciton cascade")]
pub struct Cli {
    /// TOML configuration; analysis commands default to the copy embedded in the event file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `[run] seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HistMode {
    #[value(name = "2d")]
    TwoD,
    Dt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Linear,
    Mle,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Linear => Method::Linear,
            MethodArg::Mle => Method::Mle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Uniform,
    Counts,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Uniform => Weighting::Uniform,
            WeightingArg::Counts => Weighting::Counts,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Monte-Carlo experiment over the 16 analyzer settings.
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Bin an event file, one CSV per setting.
    Histogram {
        events: PathBuf,
        #[arg(long)]
        bin_ps: Option<f64>,
        #[arg(long, value_enum, default_value = "dt")]
        mode: HistMode,
        /// Histogram range: [0, t) per axis in 2d mode, [-t, t) in dt mode.
        #[arg(long)]
        t_max_ps: Option<f64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct the two-photon state in sliding time-difference windows.
    Tomograph {
        events: PathBuf,
        #[arg(long)]
        window_ps: Option<f64>,
        /// Window step (default: the window width).
        #[arg(long)]
        step_ps: Option<f64>,
        #[arg(long, value_enum, default_value = "mle")]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "uniform")]
        weighting: WeightingArg,
        /// Bootstrap resamples per window; 0 skips the uncertainty.
        #[arg(long, default_value_t = 100)]
        resamples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Negativity of the state in [0, dT) against the window width dT.
    NegativitySweep {
        events: PathBuf,
        #[arg(long)]
        dtmin: f64,
        #[arg(long)]
        dtmax: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, value_enum, default_value = "mle")]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "uniform")]
        weighting: WeightingArg,
        #[arg(long, default_value_t = 100)]
        resamples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the radiative lifetime to all time-difference histograms.
    Fit {
        events: PathBuf,
        /// Text report.
        #[arg(long)]
        out: PathBuf,
        /// Fitted curves and residuals (default: `<out>.curves.csv`).
        #[arg(long)]
        curves: Option<PathBuf>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
        Error::MissingSettings(_) => EXIT_MISSING_SETTINGS,
        Error::Data(_) | Error::EmptyWindow { .. } | Error::Io(_) | Error::ResourceExhausted { .. } => {
            EXIT_DATA
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::invalid("--threads must be >= 1"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Simulate { out } => simulate(cli, out),
        Command::Histogram { events, bin_ps, mode, t_max_ps, out } => {
            histogram(cli, events, *bin_ps, *mode, *t_max_ps, out)
        }
        Command::Tomograph { events, window_ps, step_ps, method, weighting, resamples, out } => tomograph(
            cli,
            events,
            *window_ps,
            *step_ps,
            (*method).into(),
            (*weighting).into(),
            *resamples,
            out,
        ),
        Command::NegativitySweep { events, dtmin, dtmax, steps, method, weighting, resamples, out } => {
            sweep(cli, events, (*dtmin, *dtmax, *steps), (*method).into(), (*weighting).into(), *resamples, out)
        }
        Command::Fit { events, out, curves } => fit(cli, events, out, curves.as_deref()),
    }
}

fn load_config(cli: &Cli, embedded: Option<&Config>) -> Result<Config> {
    let mut cfg = match (&cli.config, embedded) {
        (Some(p), _) => Config::load(p)?,
        (None, Some(c)) => c.clone(),
        (None, None) => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(cli: &Cli, out: &Path) -> Result<i32> {
    let cfg = load_config(cli, None)?;
    let rc = cfg.run_config()?;
    let threads = cli.threads.unwrap_or_else(rayon::current_num_threads);
    info!(
        "simulating {} pulses x {} settings, seed {}",
        rc.pulses_per_setting,
        rc.settings.len(),
        rc.rng_seed
    );
    let run = run_experiment_with_threads(&rc, threads)?;
    if run.partial {
        warn!("event limit reached; the output is flagged partial");
    }
    info!("{} coincidences", run.records.len());
    EventFile::from_run(&cfg, &rc.settings, run).write(out)?;
    Ok(EXIT_OK)
}

fn read_events(cli: &Cli, path: &Path) -> Result<(EventFile, Config)> {
    let ev = EventFile::read(path)?;
    if ev.partial {
        warn!("{} is flagged partial", path.display());
    }
    let cfg = load_config(cli, Some(&ev.config))?;
    Ok((ev, cfg))
}

fn histogram(
    cli: &Cli,
    events: &Path,
    bin_ps: Option<f64>,
    mode: HistMode,
    t_max_ps: Option<f64>,
    out: &Path,
) -> Result<i32> {
    let (ev, cfg) = read_events(cli, events)?;
    let bin = bin_ps.unwrap_or(cfg.analysis.bin_ps);
    let t_max = t_max_ps.unwrap_or(cfg.analysis.dt_max_ps);
    std::fs::create_dir_all(out)?;
    let head = provenance_line(&cfg.hash());
    for st in &ev.settings {
        let recs = ev.records.iter().filter(|r| r.setting_id == st.id);
        let mut s = format!("{head}\n# setting {} {}\n", st.id, st.label());
        match mode {
            HistMode::TwoD => {
                let h = histogram_2d(recs, bin, t_max)?;
                s.push_str("t1_bin_ps,t2_bin_ps,count\n");
                for (i, j, n) in h.nonzero() {
                    let _ = writeln!(s, "{},{},{n}", i as f64 * bin, j as f64 * bin);
                }
            }
            HistMode::Dt => {
                let template = DtHistogram::symmetric(bin, t_max)?;
                let h = histogram_dt(recs, bin, t_max)?
                    .remove(&st.id)
                    .unwrap_or_else(|| template.zeros_like());
                s.push_str("dt_bin_ps,count\n");
                for (k, &n) in h.counts.iter().enumerate() {
                    if n > 0.0 {
                        let _ = writeln!(s, "{},{n}", h.edges(k).0);
                    }
                }
            }
        }
        let name = format!("setting_{:02}_{}.csv", st.id, st.label().replace(',', ""));
        write_atomic(&out.join(name), &s)?;
    }
    Ok(EXIT_OK)
}

/// Histograms for the 16 standard settings; any of them absent from the
/// file is an error.
fn tomography_input(ev: &EventFile, cfg: &Config, weighting: Weighting) -> Result<TomographyInput> {
    let standard = default_settings();
    let missing: Vec<usize> = standard
        .iter()
        .filter(|s| ev.setting(s.id).is_none_or(|f| f.label() != s.label()))
        .map(|s| s.id)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingSettings(missing));
    }
    let (bin, t_max) = (cfg.analysis.bin_ps, cfg.analysis.dt_max_ps);
    let template = DtHistogram::symmetric(bin, t_max)?;
    let map = histogram_dt(ev.records.iter().filter(|r| r.setting_id < standard.len()), bin, t_max)?;
    Ok(TomographyInput::from_histogram_map(standard, &map, &template)?.with_weighting(weighting))
}

#[allow(clippy::too_many_arguments)]
fn tomograph(
    cli: &Cli,
    events: &Path,
    window_ps: Option<f64>,
    step_ps: Option<f64>,
    method: Method,
    weighting: Weighting,
    resamples: usize,
    out: &Path,
) -> Result<i32> {
    let (ev, cfg) = read_events(cli, events)?;
    let input = tomography_input(&ev, &cfg, weighting)?;
    let width = window_ps.unwrap_or(cfg.analysis.window_ps);
    let step = step_ps.unwrap_or(width);
    let windows = window_grid(0.0, cfg.analysis.dt_max_ps, width, step)?;
    let results = reconstruct_time_series(&input, &windows, method)?;
    let mut rows = Vec::with_capacity(results.len());
    for (k, (w, res)) in results.into_iter().enumerate() {
        let res = match res {
            Ok(r) => r,
            Err(Error::EmptyWindow { .. }) => {
                warn!("window [{}, {}) ps has no events; skipped", w.start_ps, w.end_ps);
                continue;
            }
            Err(e) => return Err(e),
        };
        let sigma = if resamples > 0 {
            bootstrap_uncertainty(&input, &w, method, resamples, cfg.run.seed.wrapping_add(k as u64))?
                .negativity_sigma
        } else {
            f64::NAN
        };
        if res.low_statistics {
            warn!("window [{}, {}) ps: fewer than 100 events", w.start_ps, w.end_ps);
        }
        rows.push(SeriesRow {
            t_start_ps: w.start_ps,
            t_end_ps: w.end_ps,
            negativity: negativity(&res.rho)?.value,
            rho: res.rho,
            negativity_sigma: sigma,
            low_stats: res.low_statistics,
        });
    }
    let comments = vec![
        provenance_line(&cfg.hash())[2..].to_string(),
        format!("method={method} window_ps={width} step_ps={step} resamples={resamples}"),
    ];
    MatrixSeries { comments, rows }.write(out)?;
    Ok(EXIT_OK)
}

fn sweep(
    cli: &Cli,
    events: &Path,
    (dtmin, dtmax, steps): (f64, f64, usize),
    method: Method,
    weighting: Weighting,
    resamples: usize,
    out: &Path,
) -> Result<i32> {
    if steps == 0 || !(dtmin > 0.0 && dtmax >= dtmin) {
        return Err(Error::invalid("need 0 < dtmin <= dtmax and steps >= 1"));
    }
    let (ev, cfg) = read_events(cli, events)?;
    let params = cfg.cascade_params()?;
    let input = tomography_input(&ev, &cfg, weighting)?;
    let grid: Vec<f64> = (0..steps)
        .map(|k| if steps == 1 { dtmin } else { dtmin + (dtmax - dtmin) * k as f64 / (steps - 1) as f64 })
        .collect();
    let irf = Irf::from_params(&params);
    let options = SweepOptions { method, resamples, seed: cfg.run.seed, start_ps: 0.0 };
    let points = negativity_vs_window(&input, &params, irf.as_ref(), &grid, options)?;
    let mut s = provenance_line(&cfg.hash());
    s.push_str("\ndelta_t_ps,n_data,n_sigma,n_ideal,n_irf_model,low_stats\n");
    for p in &points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            p.delta_t_ps,
            p.n_data,
            p.n_sigma,
            p.n_ideal,
            p.n_irf_model,
            u8::from(p.low_statistics)
        );
    }
    write_atomic(out, &s)?;
    Ok(EXIT_OK)
}

fn fit(cli: &Cli, events: &Path, out: &Path, curves: Option<&Path>) -> Result<i32> {
    let (ev, cfg) = read_events(cli, events)?;
    let params = cfg.cascade_params()?;
    let (bin, t_max) = (cfg.analysis.bin_ps, cfg.analysis.dt_max_ps);
    let template = DtHistogram::symmetric(bin, t_max)?;
    let mut map = histogram_dt(&ev.records, bin, t_max)?;
    let data: Vec<_> = ev
        .settings
        .iter()
        .map(|s| (*s, map.remove(&s.id).unwrap_or_else(|| template.zeros_like())))
        .collect();
    let irf = Irf::from_params(&params);
    let res = match fit_tau_r(&data, &params, irf.as_ref(), FitOptions::default()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: fit failed: {e}");
            return Ok(EXIT_FIT);
        }
    };

    let head = provenance_line(&cfg.hash());
    let mut report = format!("{head}\n");
    let _ = writeln!(report, "tau_r_ps = {}", res.tau_r_ps);
    let _ = writeln!(report, "tau_r_sigma_ps = {}", res.tau_r_sigma_ps);
    let _ = writeln!(report, "scale = {}", res.scale);
    let _ = writeln!(report, "deviance = {}", res.deviance);
    let _ = writeln!(report, "chi2_per_dof = {}", res.chi2_per_dof);
    let _ = writeln!(report, "dof = {}", res.dof);
    let _ = writeln!(report, "precession_ps = {} # fixed", res.precession_ps);
    let _ = writeln!(report, "irf_fwhm_ps = {} # fixed", params.irf_fwhm_ps());
    let _ = writeln!(report, "converged = {}", res.converged);
    let _ = writeln!(report, "evaluations = {}", res.evaluations);
    write_atomic(out, &report)?;

    let mut csv = format!("{head}\nsetting_id,dt_center_ps,data,model,residual\n");
    for (c, (_, h)) in res.curves.iter().zip(&data) {
        let resid: std::collections::HashMap<usize, f64> = c.residuals.iter().copied().collect();
        for k in 0..h.n_bins() {
            let r = resid.get(&k).copied().unwrap_or(f64::NAN);
            let _ = writeln!(csv, "{},{},{},{},{}", c.setting_id, h.center(k), h.counts[k], c.model.counts[k], r);
        }
    }
    let curves_path = curves.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".curves.csv");
        PathBuf::from(p)
    });
    write_atomic(&curves_path, &csv)?;

    if !res.converged {
        eprintln!("error: fit did not converge (tau_R = {} ps)", res.tau_r_ps);
        return Ok(EXIT_FIT);
    }
    Ok(EXIT_OK)
}
