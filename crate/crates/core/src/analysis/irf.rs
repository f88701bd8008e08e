use std::f64::consts::PI;

use crate::cascade::{decay_moments, CascadeParams, RateComponents, FWHM_PER_SIGMA};
use crate::density::C64;
use crate::error::{Error, Result};
use crate::simulator::{DtHistogram, ProjectionSetting};
use crate::tomography::TomographyInput;

/// Kernel half-width in standard deviations.
const KERNEL_HALF_WIDTH_SIGMA: f64 = 8.0;
/// Model cells per histogram bin.
const OVERSAMPLE: usize = 8;

/// Gaussian pair timing response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Irf {
    pub fwhm_ps: f64,
}

impl Irf {
    pub fn new(fwhm_ps: f64) -> Result<Self> {
        if !(fwhm_ps.is_finite() && fwhm_ps > 0.0) {
            return Err(Error::invalid(format!("IRF FWHM must be > 0, got {fwhm_ps}")));
        }
        Ok(Irf { fwhm_ps })
    }

    /// `None` for ideal timing (zero width).
    pub fn from_params(params: &CascadeParams) -> Option<Self> {
        (params.irf_fwhm_ps() > 0.0).then(|| Irf {
            fwhm_ps: params.irf_fwhm_ps(),
        })
    }

    pub fn sigma_ps(&self) -> f64 {
        self.fwhm_ps / FWHM_PER_SIGMA
    }

    pub fn density(&self, t: f64) -> f64 {
        let s = self.sigma_ps();
        (-0.5 * (t / s).powi(2)).exp() / (s * (2.0 * PI).sqrt())
    }

    /// Kernel weights on a grid of spacing `dt`, centered, summing to one.
    pub fn kernel(&self, dt: f64) -> Vec<f64> {
        let half = (KERNEL_HALF_WIDTH_SIGMA * self.sigma_ps() / dt).ceil() as i64;
        let mut k: Vec<f64> = (-half..=half).map(|j| self.density(j as f64 * dt)).collect();
        let sum: f64 = k.iter().sum();
        k.iter_mut().for_each(|v| *v /= sum);
        k
    }
}

/// Values on the uniform grid `t0 + k dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    pub t0_ps: f64,
    pub dt_ps: f64,
    pub values: Vec<f64>,
}

impl SampledCurve {
    pub fn from_fn(t0_ps: f64, dt_ps: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        SampledCurve {
            t0_ps,
            dt_ps,
            values: (0..n).map(|k| f(t0_ps + k as f64 * dt_ps)).collect(),
        }
    }

    pub fn t(&self, k: usize) -> f64 {
        self.t0_ps + k as f64 * self.dt_ps
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dt_ps
    }
}

#[derive(Debug, Clone)]
pub struct Convolved {
    pub curve: SampledCurve,
    /// The grid is coarser than half a standard deviation of the IRF.
    pub coarse_grid: bool,
}

/// Discrete convolution with the IRF on the curve's own grid.
pub fn convolve(curve: &SampledCurve, irf: &Irf) -> Convolved {
    let kernel = irf.kernel(curve.dt_ps);
    Convolved {
        curve: SampledCurve {
            t0_ps: curve.t0_ps,
            dt_ps: curve.dt_ps,
            values: convolve_same(&curve.values, &kernel),
        },
        coarse_grid: curve.dt_ps > 0.5 * irf.sigma_ps(),
    }
}

fn convolve_same(values: &[f64], kernel: &[f64]) -> Vec<f64> {
    let half = kernel.len() / 2;
    let n = values.len();
    let mut out = vec![0.0; n];
    for (i, &v) in values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        for j in lo..=hi {
            out[j] += v * kernel[j + half - i];
        }
    }
    out
}

/// Expected per-pulse probabilities per histogram bin, split into the
/// population part and the complex coherence part so that any projection
/// setting is a linear combination of the two.
#[derive(Debug, Clone)]
pub struct BinnedModel {
    pub template: DtHistogram,
    pub population: Vec<f64>,
    pub coherence: Vec<C64>,
}

impl BinnedModel {
    pub fn new(template: &DtHistogram, params: &CascadeParams, irf: Option<&Irf>) -> Self {
        let cell = template.bin_ps / OVERSAMPLE as f64;
        let margin = irf
            .map(|i| (KERNEL_HALF_WIDTH_SIGMA * i.sigma_ps() / cell).ceil() as usize + 1)
            .unwrap_or(0);
        let n_cells = template.n_bins() * OVERSAMPLE + 2 * margin;
        let start = template.lo_ps - margin as f64 * cell;
        let mut pop = Vec::with_capacity(n_cells);
        let mut re = Vec::with_capacity(n_cells);
        let mut im = Vec::with_capacity(n_cells);
        for k in 0..n_cells {
            let a = start + k as f64 * cell;
            let (p, c) = decay_moments(a, a + cell, params);
            pop.push(p);
            re.push(c.re);
            im.push(c.im);
        }
        if let Some(irf) = irf {
            let kernel = irf.kernel(cell);
            pop = convolve_same(&pop, &kernel);
            re = convolve_same(&re, &kernel);
            im = convolve_same(&im, &kernel);
        }
        let mut population = vec![0.0; template.n_bins()];
        let mut coherence = vec![C64::new(0.0, 0.0); template.n_bins()];
        for b in 0..template.n_bins() {
            for s in 0..OVERSAMPLE {
                let k = margin + b * OVERSAMPLE + s;
                population[b] += pop[k];
                coherence[b] += C64::new(re[k], im[k]);
            }
        }
        BinnedModel {
            template: template.zeros_like(),
            population,
            coherence,
        }
    }

    /// Expected counts for one setting, `scale` times the per-pulse
    /// probability.
    pub fn histogram(&self, setting: &ProjectionSetting, scale: f64) -> DtHistogram {
        let rc = RateComponents::new(&setting.p1, &setting.p2);
        let mut h = self.template.clone();
        for (b, c) in h.counts.iter_mut().enumerate() {
            *c = scale * (rc.constant * self.population[b] + (rc.coherence * self.coherence[b]).re).max(0.0);
        }
        h
    }
}

/// Expected histograms of all settings on the binning of `template`.
pub fn model_histograms(
    settings: &[ProjectionSetting],
    template: &DtHistogram,
    params: &CascadeParams,
    irf: Option<&Irf>,
    scale: f64,
) -> Vec<DtHistogram> {
    let model = BinnedModel::new(template, params, irf);
    settings.iter().map(|s| model.histogram(s, scale)).collect()
}

/// Noise-free tomography input built from the model.
pub fn model_input(
    settings: &[ProjectionSetting],
    template: &DtHistogram,
    params: &CascadeParams,
    irf: Option<&Irf>,
    scale: f64,
) -> Result<TomographyInput> {
    TomographyInput::new(settings.to_vec(), model_histograms(settings, template, params, irf, scale))
}
