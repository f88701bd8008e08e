//! Reconstruction of the time-dependent two-photon density matrix from the
//! 16 projection histograms.
//!
//! Counts are aggregated over a window of time differences, normalized by
//! the rectilinear quadruple `HH + HV + VH + VV` in the same window, and
//! inverted either linearly or by maximum likelihood.

pub mod linear;
pub mod mle;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::metrics::negativity;
use crate::polarization::{identify_named, pair_projector, NamedState, PairProjector};
use crate::simulator::{DtHistogram, ProjectionSetting};

pub use linear::Design;

/// Windows with fewer raw events than this are flagged.
pub const LOW_STATS_EVENTS: f64 = 100.0;
pub const MIN_RESAMPLES: usize = 100;

/// The informationally complete set `{H, V, D, L} x {H, V, D, L}`, ids in
/// row-major order.
pub fn default_settings() -> Vec<ProjectionSetting> {
    use NamedState::*;
    let states = [H, V, D, L];
    states
        .iter()
        .enumerate()
        .flat_map(|(i, a)| {
            states
                .iter()
                .enumerate()
                .map(move |(j, b)| ProjectionSetting::new(4 * i + j, a.state(), b.state()))
        })
        .collect()
}

/// How bins inside a window are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Every time bin contributes its normalized frequencies with equal
    /// weight: a square window in time, independent of the exciton decay.
    #[default]
    Uniform,
    /// Raw counts are summed, so early bins dominate.
    Counts,
}

impl std::str::FromStr for Weighting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Weighting::Uniform),
            "counts" => Ok(Weighting::Counts),
            other => Err(Error::invalid(format!("unknown weighting `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Linear,
    Mle,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Linear => "linear",
            Method::Mle => "mle",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Method::Linear),
            "mle" => Ok(Method::Mle),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

/// Half-open window `[start, end)` of time differences; a bin belongs to the
/// window when its center does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start_ps: f64,
    pub end_ps: f64,
}

impl Window {
    pub fn new(start_ps: f64, end_ps: f64) -> Result<Self> {
        if !(start_ps.is_finite() && end_ps.is_finite() && end_ps > start_ps) {
            return Err(Error::invalid(format!("bad window [{start_ps}, {end_ps})")));
        }
        Ok(Window { start_ps, end_ps })
    }

    pub fn width(&self) -> f64 {
        self.end_ps - self.start_ps
    }
}

/// Histograms for all settings on a common binning.
#[derive(Debug, Clone)]
pub struct TomographyInput {
    settings: Vec<ProjectionSetting>,
    histograms: Vec<DtHistogram>,
    projectors: Vec<PairProjector>,
    quadruple: [usize; 4],
    design: Design,
    pub weighting: Weighting,
}

impl TomographyInput {
    /// `histograms[k]` belongs to `settings[k]`.
    pub fn new(settings: Vec<ProjectionSetting>, histograms: Vec<DtHistogram>) -> Result<Self> {
        if settings.len() != histograms.len() || settings.is_empty() {
            return Err(Error::config("one histogram per setting is required"));
        }
        let first = &histograms[0];
        for h in &histograms {
            if !h.same_binning(first) {
                return Err(Error::Data("histograms do not share a binning".into()));
            }
            if h.counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
                return Err(Error::Data("counts must be finite and >= 0".into()));
            }
        }
        let projectors: Vec<PairProjector> =
            settings.iter().map(|s| pair_projector(&s.p1, &s.p2)).collect();
        let design = Design::new(&projectors)?;
        let quadruple = rectilinear_quadruple(&settings)?;
        Ok(TomographyInput {
            settings,
            histograms,
            projectors,
            quadruple,
            design,
            weighting: Weighting::default(),
        })
    }

    /// Builds the input from per-setting histograms keyed by setting id;
    /// settings without an entry get an all-zero histogram.
    pub fn from_histogram_map(
        settings: Vec<ProjectionSetting>,
        map: &BTreeMap<usize, DtHistogram>,
        template: &DtHistogram,
    ) -> Result<Self> {
        if let Some(unknown) = map.keys().find(|id| !settings.iter().any(|s| s.id == **id)) {
            return Err(Error::Data(format!("histogram for unknown setting id {unknown}")));
        }
        let histograms = settings
            .iter()
            .map(|s| map.get(&s.id).cloned().unwrap_or_else(|| template.zeros_like()))
            .collect();
        Self::new(settings, histograms)
    }

    pub fn with_weighting(mut self, weighting: Weighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn settings(&self) -> &[ProjectionSetting] {
        &self.settings
    }

    pub fn histograms(&self) -> &[DtHistogram] {
        &self.histograms
    }

    pub fn projectors(&self) -> &[PairProjector] {
        &self.projectors
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn bin_ps(&self) -> f64 {
        self.histograms[0].bin_ps
    }

    /// Same settings with replaced histograms.
    pub fn with_histograms(&self, histograms: Vec<DtHistogram>) -> Result<Self> {
        let mut out = Self::new(self.settings.clone(), histograms)?;
        out.weighting = self.weighting;
        Ok(out)
    }

    fn bins_in(&self, window: &Window) -> Vec<usize> {
        let h = &self.histograms[0];
        (0..h.n_bins())
            .filter(|&k| {
                let c = h.center(k);
                c >= window.start_ps && c < window.end_ps
            })
            .collect()
    }

    /// Aggregated (effective) counts for one window.
    pub fn window_counts(&self, window: &Window) -> Result<WindowCounts> {
        let bins = self.bins_in(window);
        let n = self.settings.len();
        let mut raw = vec![0.0; n];
        let mut normalization = 0.0;
        let mut uniform = vec![0.0; n];
        let mut used_bins = 0usize;
        for &k in &bins {
            let quad: f64 = self.quadruple.iter().map(|&q| self.histograms[q].counts[k]).sum();
            for (nu, h) in self.histograms.iter().enumerate() {
                raw[nu] += h.counts[k];
                if quad > 0.0 {
                    uniform[nu] += h.counts[k] / quad;
                }
            }
            if quad > 0.0 {
                used_bins += 1;
            }
            normalization += quad;
        }
        if normalization <= 0.0 {
            return Err(Error::EmptyWindow {
                t_start_ps: window.start_ps,
                t_end_ps: window.end_ps,
            });
        }
        let counts = match self.weighting {
            Weighting::Counts => raw.clone(),
            Weighting::Uniform => uniform
                .iter()
                .map(|f| f / used_bins as f64 * normalization)
                .collect(),
        };
        let total_events: f64 = raw.iter().sum();
        Ok(WindowCounts {
            window: *window,
            counts,
            normalization,
            total_events,
            n_bins: bins.len(),
        })
    }
}

fn rectilinear_quadruple(settings: &[ProjectionSetting]) -> Result<[usize; 4]> {
    use NamedState::{H, V};
    let mut out = [usize::MAX; 4];
    for (k, s) in settings.iter().enumerate() {
        let slot = match (identify_named(&s.p1), identify_named(&s.p2)) {
            (Some(H), Some(H)) => 0,
            (Some(H), Some(V)) => 1,
            (Some(V), Some(H)) => 2,
            (Some(V), Some(V)) => 3,
            _ => continue,
        };
        out[slot] = k;
    }
    if out.contains(&usize::MAX) {
        return Err(Error::config(
            "settings must contain the rectilinear quadruple HH, HV, VH, VV for normalization",
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct WindowCounts {
    pub window: Window,
    /// Counts per setting after weighting.
    pub counts: Vec<f64>,
    /// `N`: rectilinear quadruple sum in the window.
    pub normalization: f64,
    /// Raw events over all settings.
    pub total_events: f64,
    pub n_bins: usize,
}

impl WindowCounts {
    pub fn low_statistics(&self) -> bool {
        self.total_events < LOW_STATS_EVENTS
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|c| c / self.normalization).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub rho: DensityMatrix,
    pub method: Method,
    pub log_likelihood: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub low_statistics: bool,
    pub window: Window,
}

pub fn linear_reconstruct(input: &TomographyInput, window: &Window) -> Result<ReconstructionResult> {
    let wc = input.window_counts(window)?;
    linear_from_counts(input, &wc)
}

fn linear_from_counts(input: &TomographyInput, wc: &WindowCounts) -> Result<ReconstructionResult> {
    let rho = input.design.invert(&wc.frequencies())?;
    Ok(ReconstructionResult {
        rho,
        method: Method::Linear,
        log_likelihood: None,
        converged: true,
        iterations: 0,
        low_statistics: wc.low_statistics(),
        window: wc.window,
    })
}

/// Maximum-likelihood estimate; `init` defaults to the linear estimate.
pub fn mle_reconstruct(
    input: &TomographyInput,
    window: &Window,
    init: Option<&DensityMatrix>,
) -> Result<ReconstructionResult> {
    let wc = input.window_counts(window)?;
    mle_from_counts(input, &wc, init)
}

fn mle_from_counts(
    input: &TomographyInput,
    wc: &WindowCounts,
    init: Option<&DensityMatrix>,
) -> Result<ReconstructionResult> {
    let start = match init {
        Some(r) => r.clone(),
        None => input.design.invert(&wc.frequencies())?,
    };
    let lik = mle::Likelihood {
        projectors: &input.projectors,
        counts: &wc.counts,
        normalization: wc.normalization,
    };
    let out = mle::maximize(&lik, &start);
    Ok(ReconstructionResult {
        rho: out.rho,
        method: Method::Mle,
        log_likelihood: Some(out.log_likelihood),
        converged: out.converged,
        iterations: out.iterations,
        low_statistics: wc.low_statistics(),
        window: wc.window,
    })
}

pub fn reconstruct(input: &TomographyInput, window: &Window, method: Method) -> Result<ReconstructionResult> {
    match method {
        Method::Linear => linear_reconstruct(input, window),
        Method::Mle => mle_reconstruct(input, window, None),
    }
}

/// Windows `[t, t + width)` for `t = start, start + step, ...` while the
/// window fits below `end`.
pub fn window_grid(start_ps: f64, end_ps: f64, width_ps: f64, step_ps: f64) -> Result<Vec<Window>> {
    if !(width_ps > 0.0 && step_ps > 0.0) {
        return Err(Error::invalid("window width and step must be > 0"));
    }
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let t = start_ps + k as f64 * step_ps;
        if t + width_ps > end_ps + 1e-9 {
            break;
        }
        out.push(Window::new(t, t + width_ps)?);
        k += 1;
    }
    Ok(out)
}

/// Per-window reconstruction; failures stay attached to their window.
pub fn reconstruct_time_series(
    input: &TomographyInput,
    windows: &[Window],
    method: Method,
) -> Result<Vec<(Window, Result<ReconstructionResult>)>> {
    if let Some(w) = windows.first() {
        if w.width() < input.bin_ps() - 1e-9 {
            return Err(Error::invalid(format!(
                "window {} ps narrower than a bin ({} ps)",
                w.width(),
                input.bin_ps()
            )));
        }
    }
    Ok(windows
        .par_iter()
        .map(|w| (*w, reconstruct(input, w, method)))
        .collect())
}

/// Sample standard deviations from a Poisson parametric bootstrap.
#[derive(Debug, Clone)]
pub struct Uncertainty {
    /// Row-major standard deviations of the real parts.
    pub re_sigma: [f64; 16],
    /// Row-major standard deviations of the imaginary parts.
    pub im_sigma: [f64; 16],
    pub negativity_sigma: f64,
    pub negativity_mean: f64,
    pub resamples: usize,
}

impl Uncertainty {
    pub fn element_sigma(&self, row: usize, col: usize) -> (f64, f64) {
        (self.re_sigma[4 * row + col], self.im_sigma[4 * row + col])
    }
}

/// Resamples every bin count as `Poisson(n)` and repeats the
/// reconstruction. Resample `k` uses its own stream of `seed`.
pub fn bootstrap_uncertainty(
    input: &TomographyInput,
    window: &Window,
    method: Method,
    n_resamples: usize,
    seed: u64,
) -> Result<Uncertainty> {
    if n_resamples < MIN_RESAMPLES {
        return Err(Error::config(format!(
            "bootstrap needs at least {MIN_RESAMPLES} resamples, got {n_resamples}"
        )));
    }
    let bins = input.bins_in(window);
    let samples: Vec<Option<([f64; 16], [f64; 16], f64)>> = (0..n_resamples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let histograms: Vec<DtHistogram> = input
                .histograms
                .iter()
                .map(|h| {
                    let mut r = h.zeros_like();
                    for &b in &bins {
                        let lambda = h.counts[b];
                        r.counts[b] = if lambda > 0.0 {
                            Poisson::new(lambda).map(|p| p.sample(&mut rng)).unwrap_or(0.0)
                        } else {
                            0.0
                        };
                    }
                    r
                })
                .collect();
            let resampled = TomographyInput {
                histograms,
                ..input.clone()
            };
            let res = reconstruct(&resampled, window, method).ok()?;
            let n = negativity(&res.rho).ok()?.value;
            let m = res.rho.matrix();
            let re: [f64; 16] = std::array::from_fn(|i| m[(i / 4, i % 4)].re);
            let im: [f64; 16] = std::array::from_fn(|i| m[(i / 4, i % 4)].im);
            Some((re, im, n))
        })
        .collect();
    let ok: Vec<_> = samples.into_iter().flatten().collect();
    if ok.len() < 2 {
        return Err(Error::EmptyWindow {
            t_start_ps: window.start_ps,
            t_end_ps: window.end_ps,
        });
    }
    let re_sigma = std::array::from_fn(|i| std_dev(ok.iter().map(|s| s.0[i])));
    let im_sigma = std::array::from_fn(|i| std_dev(ok.iter().map(|s| s.1[i])));
    let negs: Vec<f64> = ok.iter().map(|s| s.2).collect();
    Ok(Uncertainty {
        re_sigma,
        im_sigma,
        negativity_sigma: std_dev(negs.iter().copied()),
        negativity_mean: negs.iter().sum::<f64>() / negs.len() as f64,
        resamples: ok.len(),
    })
}

fn std_dev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{density_matrix, CascadeParams};
    use crate::density::trace_distance;

    fn exact_input(rho: &DensityMatrix, total: f64) -> TomographyInput {
        let settings = default_settings();
        let histograms = settings
            .iter()
            .map(|s| {
                let pi = pair_projector(&s.p1, &s.p2);
                DtHistogram {
                    lo_ps: 0.0,
                    bin_ps: 4.0,
                    counts: vec![total * pi.expectation(rho.matrix()); 6],
                }
            })
            .collect();
        TomographyInput::new(settings, histograms).unwrap()
    }

    #[test]
    fn default_settings_layout() {
        let s = default_settings();
        assert_eq!(s.len(), 16);
        assert_eq!(s[0].label(), "H,H");
        assert_eq!(s[7].label(), "V,L");
        assert_eq!(s[15].label(), "L,L");
        assert!(s.iter().enumerate().all(|(k, x)| x.id == k));
    }

    #[test]
    fn linear_inverts_exact_counts() {
        let p = CascadeParams::with_precession(122.0, 410.0, 260.0, 1.0, 42.0).unwrap();
        let truth = density_matrix(0.0, &p);
        let input = exact_input(&truth, 1000.0);
        let w = Window::new(0.0, 24.0).unwrap();
        let res = linear_reconstruct(&input, &w).unwrap();
        assert!((res.rho.matrix() - truth.matrix()).iter().all(|z| z.norm() < 1e-10));
        assert!(!res.low_statistics);
    }

    #[test]
    fn maximally_mixed_from_equal_rates() {
        let input = exact_input(&DensityMatrix::maximally_mixed(), 400.0);
        let res = linear_reconstruct(&input, &Window::new(0.0, 24.0).unwrap()).unwrap();
        assert!(trace_distance(&res.rho, &DensityMatrix::maximally_mixed()) < 1e-12);
    }

    #[test]
    fn empty_window_is_an_error() {
        let input = exact_input(&DensityMatrix::maximally_mixed(), 400.0);
        let w = Window::new(100.0, 124.0).unwrap();
        assert!(matches!(linear_reconstruct(&input, &w), Err(Error::EmptyWindow { .. })));
        assert!(matches!(mle_reconstruct(&input, &w, None), Err(Error::EmptyWindow { .. })));
    }

    #[test]
    fn incomplete_settings_rejected() {
        let settings: Vec<_> = default_settings().into_iter().take(15).collect();
        let h = DtHistogram { lo_ps: 0.0, bin_ps: 4.0, counts: vec![1.0; 3] };
        let err = TomographyInput::new(settings, vec![h; 15]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn too_few_resamples() {
        let input = exact_input(&DensityMatrix::maximally_mixed(), 400.0);
        let w = Window::new(0.0, 24.0).unwrap();
        assert!(matches!(bootstrap_uncertainty(&input, &w, Method::Linear, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn window_grid_layout() {
        let g = window_grid(0.0, 100.0, 24.0, 24.0).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g[3].start_ps, 72.0);
    }
}
