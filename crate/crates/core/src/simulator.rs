//! Monte Carlo generator of coincidence events.
//!
//! Every laser pulse deterministically creates a biexciton. The biexciton
//! photon leaves after an exponential delay (mean `tau_XX`), the exciton
//! photon after a further exponential delay (mean `tau_R`). Both photons
//! reach their detectors with probability `eta` each, the analyzers pass
//! the pair with the Born probability of the pair state at the emission
//! time difference, and each detector adds independent Gaussian jitter.
//!
//! Pulses are simulated in fixed-size blocks, each with its own ChaCha
//! stream derived from `(seed, setting, block)`, so results do not depend on
//! how blocks are scheduled across threads.

use std::collections::BTreeMap;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric, Normal};
use rayon::prelude::*;

use crate::cascade::{CascadeParams, RateComponents};
use crate::error::{Error, Result};
use crate::polarization::{identify_named, PolarizationState};

/// Pulses per independent random stream.
pub const PULSE_BLOCK: u64 = 1 << 20;
pub const DEFAULT_REPETITION_MHZ: f64 = 76.0;
/// Blocks simulated between checks of the event cap.
const ABORT_BATCH_BLOCKS: usize = 256;

/// One pair of analyzer settings: `p1` in the biexciton arm, `p2` in the
/// exciton arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionSetting {
    pub id: usize,
    pub p1: PolarizationState,
    pub p2: PolarizationState,
}

impl ProjectionSetting {
    pub fn new(id: usize, p1: PolarizationState, p2: PolarizationState) -> Self {
        ProjectionSetting { id, p1, p2 }
    }

    /// `"H,V"`-style label for named states, angles otherwise.
    pub fn label(&self) -> String {
        let name = |p: &PolarizationState| match identify_named(p) {
            Some(n) => n.label().to_string(),
            None => {
                let (t, f) = p.angles();
                format!("P({t:.6};{f:.6})")
            }
        };
        format!("{},{}", name(&self.p1), name(&self.p2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceRecord {
    pub pulse_index: u64,
    pub setting_id: usize,
    /// Biexciton-photon detection time after the pulse.
    pub t1_ps: f64,
    /// Exciton-photon detection time after the pulse.
    pub t2_ps: f64,
}

impl CoincidenceRecord {
    pub fn dt_ps(&self) -> f64 {
        self.t2_ps - self.t1_ps
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: CascadeParams,
    pub settings: Vec<ProjectionSetting>,
    pub pulses_per_setting: u64,
    pub rng_seed: u64,
    pub repetition_period_ps: f64,
    /// Abort (with a partial-output flag) once this many events exist.
    pub max_events: Option<usize>,
}

impl RunConfig {
    pub fn new(
        params: CascadeParams,
        settings: Vec<ProjectionSetting>,
        pulses_per_setting: u64,
        rng_seed: u64,
    ) -> Self {
        RunConfig {
            params,
            settings,
            pulses_per_setting,
            rng_seed,
            repetition_period_ps: repetition_period_ps(DEFAULT_REPETITION_MHZ),
            max_events: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.pulses_per_setting == 0 {
            return Err(Error::config("pulses_per_setting must be > 0"));
        }
        if self.settings.is_empty() {
            return Err(Error::config("no projection settings"));
        }
        let mut ids: Vec<usize> = self.settings.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("duplicate setting ids"));
        }
        if !(self.repetition_period_ps.is_finite() && self.repetition_period_ps > 0.0) {
            return Err(Error::config("repetition period must be > 0"));
        }
        let cascade = self.params.tau_xx_ps() + self.params.tau_x_ps();
        if self.repetition_period_ps < 10.0 * cascade {
            warn!(
                "repetition period {:.1} ps is not much longer than the cascade ({cascade:.1} ps)",
                self.repetition_period_ps
            );
        }
        Ok(())
    }
}

pub fn repetition_period_ps(repetition_mhz: f64) -> f64 {
    1e6 / repetition_mhz
}

/// Emission times of the two photons after the pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emission {
    pub t_xx_ps: f64,
    pub t_x_ps: f64,
}

impl Emission {
    /// Exciton minus biexciton emission time.
    pub fn delay_ps(&self) -> f64 {
        self.t_x_ps - self.t_xx_ps
    }
}

pub fn sample_emission<R: Rng + ?Sized>(rng: &mut R, params: &CascadeParams) -> Emission {
    let t_xx = sample_exp(rng, params.tau_xx_ps());
    let t_x = t_xx + sample_exp(rng, params.tau_x_ps());
    Emission {
        t_xx_ps: t_xx,
        t_x_ps: t_x,
    }
}

fn sample_exp<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    if mean <= 0.0 {
        0.0
    } else {
        Exp::new(1.0 / mean).expect("positive rate").sample(rng)
    }
}

/// Detected timestamps of an accepted pair (before it gets a pulse index).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub t1_ps: f64,
    pub t2_ps: f64,
}

/// Accepts the pair with probability `eta^2 |<P1 P2|psi(delay)>|^2` and
/// jitters both timestamps.
pub fn detect_pair<R: Rng + ?Sized>(
    rng: &mut R,
    emission: &Emission,
    setting: &ProjectionSetting,
    params: &CascadeParams,
) -> Option<Detection> {
    let eta2 = params.eta() * params.eta();
    if rng.random::<f64>() >= eta2 {
        return None;
    }
    let components = RateComponents::new(&setting.p1, &setting.p2);
    let jitter = jitter_distribution(params);
    analyze(rng, emission, &components, jitter.as_ref(), params)
}

fn jitter_distribution(params: &CascadeParams) -> Option<Normal<f64>> {
    let sigma = params.detector_sigma_ps();
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"))
}

/// Born-rule analyzer and detector jitter for a harvested pair.
fn analyze<R: Rng + ?Sized>(
    rng: &mut R,
    emission: &Emission,
    components: &RateComponents,
    jitter: Option<&Normal<f64>>,
    params: &CascadeParams,
) -> Option<Detection> {
    let p = components.factor(emission.delay_ps(), params).clamp(0.0, 1.0);
    if rng.random::<f64>() >= p {
        return None;
    }
    let (j1, j2) = match jitter {
        Some(n) => (n.sample(rng), n.sample(rng)),
        None => (0.0, 0.0),
    };
    Some(Detection {
        t1_ps: quantize(emission.t_xx_ps + j1),
        t2_ps: quantize(emission.t_x_ps + j2),
    })
}

/// Rounds to the 1e-6 ps resolution of the event file.
fn quantize(t: f64) -> f64 {
    (t * 1e6).round() / 1e6 + 0.0
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Sorted by `(setting_id, pulse_index)`.
    pub records: Vec<CoincidenceRecord>,
    pub partial: bool,
}

impl RunOutput {
    pub fn records_for(&self, setting_id: usize) -> impl Iterator<Item = &CoincidenceRecord> {
        self.records.iter().filter(move |r| r.setting_id == setting_id)
    }

    pub fn count_for(&self, setting_id: usize) -> usize {
        self.records_for(setting_id).count()
    }
}

/// Runs the experiment on the global rayon pool.
pub fn run_experiment(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    Ok(simulate_blocks(config))
}

/// Runs the experiment on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(config: &RunConfig, threads: usize) -> Result<RunOutput> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(|| simulate_blocks(config)))
}

fn simulate_blocks(config: &RunConfig) -> RunOutput {
    let blocks_per_setting = config.pulses_per_setting.div_ceil(PULSE_BLOCK);
    let mut settings: Vec<ProjectionSetting> = config.settings.clone();
    settings.sort_by_key(|s| s.id);
    let work: Vec<(usize, u64)> = (0..settings.len())
        .flat_map(|s| (0..blocks_per_setting).map(move |b| (s, b)))
        .collect();

    // Batches run in parallel but are appended in canonical order, so an
    // event cap truncates at the same record for any thread count.
    let mut records: Vec<CoincidenceRecord> = Vec::new();
    let mut partial = false;
    for batch in work.chunks(ABORT_BATCH_BLOCKS) {
        let chunks: Vec<Vec<CoincidenceRecord>> = batch
            .par_iter()
            .map(|&(s, block)| simulate_block(config, &settings[s], block))
            .collect();
        records.extend(chunks.into_iter().flatten());
        if let Some(cap) = config.max_events {
            if records.len() > cap {
                records.truncate(cap);
                partial = true;
                warn!("event limit {cap} reached; output is partial");
                break;
            }
        }
    }
    RunOutput { records, partial }
}

fn stream_id(setting_id: usize, block: u64) -> u64 {
    ((setting_id as u64) << 44) | block
}

fn simulate_block(config: &RunConfig, setting: &ProjectionSetting, block: u64) -> Vec<CoincidenceRecord> {
    let params = &config.params;
    let eta2 = params.eta() * params.eta();
    if eta2 <= 0.0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng.set_stream(stream_id(setting.id, block));

    let start = block * PULSE_BLOCK;
    let end = (start + PULSE_BLOCK).min(config.pulses_per_setting);
    let components = RateComponents::new(&setting.p1, &setting.p2);
    let jitter = jitter_distribution(params);
    // gaps between pulses on which both photons are collected
    let gaps = Geometric::new(eta2).expect("eta^2 in (0, 1]");

    let mut out = Vec::new();
    let mut pulse = start;
    loop {
        pulse = pulse.saturating_add(gaps.sample(&mut rng));
        if pulse >= end {
            break;
        }
        let emission = sample_emission(&mut rng, params);
        if let Some(d) = analyze(&mut rng, &emission, &components, jitter.as_ref(), params) {
            out.push(CoincidenceRecord {
                pulse_index: pulse,
                setting_id: setting.id,
                t1_ps: d.t1_ps,
                t2_ps: d.t2_ps,
            });
        }
        pulse += 1;
    }
    out
}

/// Counts over `(t1, t2)` on `[0, t_max)^2`, row index from `t1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2d {
    pub bin_ps: f64,
    pub n_bins: usize,
    pub counts: Vec<u64>,
}

impl Histogram2d {
    pub fn get(&self, i1: usize, i2: usize) -> u64 {
        self.counts[i1 * self.n_bins + i2]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k / self.n_bins, k % self.n_bins, c))
    }

    /// Marginal over `t2`: counts per `t1` bin.
    pub fn marginal_t1(&self) -> Vec<u64> {
        self.counts.chunks(self.n_bins).map(|row| row.iter().sum()).collect()
    }
}

pub fn histogram_2d<'a, I>(events: I, bin_ps: f64, t_max_ps: f64) -> Result<Histogram2d>
where
    I: IntoIterator<Item = &'a CoincidenceRecord>,
{
    check_binning(bin_ps, t_max_ps)?;
    let n = (t_max_ps / bin_ps).ceil() as usize;
    let mut counts = vec![0u64; n * n];
    for e in events {
        if let (Some(i), Some(j)) = (bin_index(e.t1_ps, 0.0, bin_ps, n), bin_index(e.t2_ps, 0.0, bin_ps, n)) {
            counts[i * n + j] += 1;
        }
    }
    Ok(Histogram2d {
        bin_ps,
        n_bins: n,
        counts,
    })
}

fn check_binning(bin_ps: f64, t_max_ps: f64) -> Result<()> {
    if !(bin_ps.is_finite() && bin_ps > 0.0) {
        return Err(Error::invalid(format!("bin width must be > 0, got {bin_ps}")));
    }
    if !(t_max_ps.is_finite() && t_max_ps > 0.0) {
        return Err(Error::invalid(format!("t_max must be > 0, got {t_max_ps}")));
    }
    Ok(())
}

fn bin_index(x: f64, lo: f64, bin: f64, n: usize) -> Option<usize> {
    let k = ((x - lo) / bin).floor();
    (k >= 0.0 && (k as usize) < n).then_some(k as usize)
}

/// Counts over the time difference `t2 - t1` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DtHistogram {
    pub lo_ps: f64,
    pub bin_ps: f64,
    pub counts: Vec<f64>,
}

impl DtHistogram {
    /// Empty histogram on `[-t_max, t_max)` with a bin edge at zero.
    pub fn symmetric(bin_ps: f64, t_max_ps: f64) -> Result<Self> {
        check_binning(bin_ps, t_max_ps)?;
        let half = (t_max_ps / bin_ps).ceil() as usize;
        Ok(DtHistogram {
            lo_ps: -(half as f64) * bin_ps,
            bin_ps,
            counts: vec![0.0; 2 * half],
        })
    }

    pub fn zeros_like(&self) -> Self {
        DtHistogram {
            lo_ps: self.lo_ps,
            bin_ps: self.bin_ps,
            counts: vec![0.0; self.counts.len()],
        }
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn edges(&self, k: usize) -> (f64, f64) {
        let lo = self.lo_ps + k as f64 * self.bin_ps;
        (lo, lo + self.bin_ps)
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo_ps + (k as f64 + 0.5) * self.bin_ps
    }

    pub fn hi_ps(&self) -> f64 {
        self.lo_ps + self.counts.len() as f64 * self.bin_ps
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn same_binning(&self, other: &DtHistogram) -> bool {
        self.counts.len() == other.counts.len()
            && (self.lo_ps - other.lo_ps).abs() < 1e-9
            && (self.bin_ps - other.bin_ps).abs() < 1e-12
    }

    /// Adds one event; returns false when it falls outside the range.
    pub fn add(&mut self, dt_ps: f64) -> bool {
        match bin_index(dt_ps, self.lo_ps, self.bin_ps, self.counts.len()) {
            Some(k) => {
                self.counts[k] += 1.0;
                true
            }
            None => false,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DtHistogram {
            lo_ps: self.lo_ps,
            bin_ps: self.bin_ps,
            counts: self.counts.iter().map(|c| c * factor).collect(),
        }
    }
}

/// Per-setting histograms of `t2 - t1` on `[-t_max, t_max)`.
pub fn histogram_dt<'a, I>(events: I, bin_ps: f64, t_max_ps: f64) -> Result<BTreeMap<usize, DtHistogram>>
where
    I: IntoIterator<Item = &'a CoincidenceRecord>,
{
    let template = DtHistogram::symmetric(bin_ps, t_max_ps)?;
    let mut out: BTreeMap<usize, DtHistogram> = BTreeMap::new();
    for e in events {
        out.entry(e.setting_id)
            .or_insert_with(|| template.zeros_like())
            .add(e.dt_ps());
    }
    Ok(out)
}
