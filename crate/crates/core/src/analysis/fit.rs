//! Joint fit of the exciton lifetime to all projection histograms.
//!
//! The model curves are the convolved rates with a fixed precession period
//! and a single shared scale. The scale is profiled out in closed form
//! (`s = sum n / sum m`), leaving a one-dimensional minimization of the
//! Poisson deviance in `tau_R`.

use super::irf::{BinnedModel, Irf};
use crate::cascade::CascadeParams;
use crate::error::{Error, Result};
use crate::simulator::{DtHistogram, ProjectionSetting};

/// Bins with fewer expected counts are left out of Pearson statistics.
const PEARSON_MIN_EXPECTED: f64 = 5.0;

/// `2 sum [n ln(n/mu) - (n - mu)]` over bins with `mu > 0` or `n > 0`.
pub fn poisson_deviance(data: &[f64], model: &[f64]) -> f64 {
    data.iter()
        .zip(model)
        .map(|(&n, &mu)| {
            if mu <= 0.0 {
                if n > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            } else if n > 0.0 {
                2.0 * (n * (n / mu).ln() - (n - mu))
            } else {
                2.0 * mu
            }
        })
        .sum()
}

/// Pearson chi-square over bins with at least 5 expected counts; returns
/// `(chi2, bins used)`.
pub fn pearson_chi2(data: &[f64], model: &[f64]) -> (f64, usize) {
    data.iter()
        .zip(model)
        .filter(|(_, &mu)| mu >= PEARSON_MIN_EXPECTED)
        .fold((0.0, 0), |(chi2, k), (&n, &mu)| (chi2 + (n - mu).powi(2) / mu, k + 1))
}

/// `(bin, (n - mu) / sqrt(mu))` for every bin with `mu > 0`.
pub fn residuals_normalized(data: &DtHistogram, model: &DtHistogram) -> Result<Vec<(usize, f64)>> {
    if !data.same_binning(model) {
        return Err(Error::Data("data and model binning differ".into()));
    }
    Ok(data
        .counts
        .iter()
        .zip(&model.counts)
        .enumerate()
        .filter(|(_, (_, &mu))| mu > 0.0)
        .map(|(k, (&n, &mu))| (k, (n - mu) / mu.sqrt()))
        .collect())
}

#[derive(Debug, Clone)]
pub struct CurveFit {
    pub setting_id: usize,
    pub model: DtHistogram,
    pub deviance: f64,
    pub chi2: f64,
    pub chi2_bins: usize,
    pub residuals: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub tau_r_ps: f64,
    pub tau_r_sigma_ps: f64,
    pub scale: f64,
    pub deviance: f64,
    /// Pearson chi-square per degree of freedom over well-populated bins.
    pub chi2_per_dof: f64,
    pub dof: usize,
    /// Held fixed during the fit.
    pub precession_ps: f64,
    pub curves: Vec<CurveFit>,
    pub converged: bool,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Lower and upper bound of the lifetime search, in ps.
    pub tau_bounds_ps: (f64, f64),
    pub tolerance_ps: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tau_bounds_ps: (20.0, 20_000.0),
            tolerance_ps: 1e-3,
        }
    }
}

struct Objective<'a> {
    data: &'a [(ProjectionSetting, DtHistogram)],
    params: CascadeParams,
    irf: Option<&'a Irf>,
    total_counts: f64,
    evaluations: std::cell::Cell<usize>,
}

impl Objective<'_> {
    /// Model histograms (scale 1) at lifetime `tau`.
    fn models(&self, tau: f64) -> Result<Vec<DtHistogram>> {
        let params = self.params.with_tau_x(tau)?;
        let template = &self.data[0].1;
        let model = BinnedModel::new(template, &params, self.irf);
        Ok(self.data.iter().map(|(s, _)| model.histogram(s, 1.0)).collect())
    }

    /// Profiled deviance and the optimal scale.
    fn eval(&self, tau: f64) -> (f64, f64) {
        self.evaluations.set(self.evaluations.get() + 1);
        let Ok(models) = self.models(tau) else {
            return (f64::INFINITY, 0.0);
        };
        let model_total: f64 = models.iter().map(|m| m.total()).sum();
        if model_total <= 0.0 {
            return (f64::INFINITY, 0.0);
        }
        let scale = self.total_counts / model_total;
        let d = self
            .data
            .iter()
            .zip(&models)
            .map(|((_, h), m)| poisson_deviance(&h.counts, &m.scaled(scale).counts))
            .sum();
        (d, scale)
    }
}

/// Fits `tau_R` and one shared scale to all curves by minimizing the
/// summed Poisson deviance. The 1-sigma interval is where the profiled
/// deviance rises by one.
pub fn fit_tau_r(
    data: &[(ProjectionSetting, DtHistogram)],
    params: &CascadeParams,
    irf: Option<&Irf>,
    options: FitOptions,
) -> Result<FitResult> {
    let Some((_, first)) = data.first() else {
        return Err(Error::Data("no histograms to fit".into()));
    };
    if data.iter().any(|(_, h)| !h.same_binning(first)) {
        return Err(Error::Data("histograms do not share a binning".into()));
    }
    let total_counts: f64 = data.iter().map(|(_, h)| h.total()).sum();
    if total_counts <= 0.0 {
        return Err(Error::Data("all histograms are empty".into()));
    }
    let obj = Objective {
        data,
        params: *params,
        irf,
        total_counts,
        evaluations: std::cell::Cell::new(0),
    };
    let f = |tau: f64| obj.eval(tau).0;

    // coarse logarithmic scan, then golden-section refinement
    let (lo, hi) = options.tau_bounds_ps;
    let n_scan = 48;
    let grid: Vec<f64> = (0..=n_scan)
        .map(|k| lo * (hi / lo).powf(k as f64 / n_scan as f64))
        .collect();
    let values: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let at_edge = best == 0 || best == n_scan;
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n_scan)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iterations = 0;
    while (b - a) > options.tolerance_ps && iterations < 200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        iterations += 1;
    }
    let tau_hat = 0.5 * (a + b);
    let (d_min, scale) = obj.eval(tau_hat);
    let converged = !at_edge && (b - a) <= options.tolerance_ps && d_min.is_finite();

    let sigma = profile_sigma(&f, tau_hat, d_min, options.tolerance_ps);

    let models = obj.models(tau_hat)?;
    let mut curves = Vec::with_capacity(data.len());
    let mut chi2_total = 0.0;
    let mut bins_total = 0;
    for ((setting, h), m) in data.iter().zip(models) {
        let m = m.scaled(scale);
        let (chi2, bins) = pearson_chi2(&h.counts, &m.counts);
        chi2_total += chi2;
        bins_total += bins;
        curves.push(CurveFit {
            setting_id: setting.id,
            deviance: poisson_deviance(&h.counts, &m.counts),
            chi2,
            chi2_bins: bins,
            residuals: residuals_normalized(h, &m)?,
            model: m,
        });
    }
    // fewer than three well-populated bins leave no degrees of freedom
    let dof = bins_total.saturating_sub(2);
    Ok(FitResult {
        tau_r_ps: tau_hat,
        tau_r_sigma_ps: sigma,
        scale,
        deviance: d_min,
        chi2_per_dof: if dof == 0 { f64::NAN } else { chi2_total / dof as f64 },
        dof,
        precession_ps: params.precession_ps(),
        curves,
        converged,
        evaluations: obj.evaluations.get(),
    })
}

/// Half the width of the interval where the deviance is below
/// `d_min + 1`.
fn profile_sigma(f: &impl Fn(f64) -> f64, tau_hat: f64, d_min: f64, tol: f64) -> f64 {
    let target = d_min + 1.0;
    let crossing = |dir: f64| -> f64 {
        let mut step = (0.01 * tau_hat).max(tol);
        let mut inner = tau_hat;
        let mut outer = tau_hat + dir * step;
        let mut guard = 0;
        while f(outer) < target && guard < 60 {
            inner = outer;
            step *= 2.0;
            outer = (tau_hat + dir * step).max(tol);
            guard += 1;
        }
        for _ in 0..60 {
            let mid = 0.5 * (inner + outer);
            if f(mid) < target {
                inner = mid;
            } else {
                outer = mid;
            }
            if (outer - inner).abs() < 1e-3 * tol {
                break;
            }
        }
        0.5 * (inner + outer)
    };
    0.5 * (crossing(1.0) - crossing(-1.0))
}
