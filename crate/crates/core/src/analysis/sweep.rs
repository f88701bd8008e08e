//! Negativity as a function of the temporal window width.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::irf::{model_input, Irf};
use crate::cascade::{windowed_negativity_analytic, CascadeParams};
use crate::error::{Error, Result};
use crate::metrics::negativity;
use crate::tomography::{
    bootstrap_uncertainty, linear_reconstruct, reconstruct, Method, TomographyInput, Window,
};

/// Coherence attenuation `exp(-2 pi^2 sigma_pair^2 / T_P^2)` of a window
/// far from `t = 0` when the time difference is smeared by the pair
/// response.
pub fn irf_attenuation(params: &CascadeParams) -> f64 {
    let s = params.pair_sigma_ps();
    (-2.0 * PI * PI * s * s / params.precession_ps().powi(2)).exp()
}

/// Ideal windowed negativity times [`irf_attenuation`].
pub fn irf_degraded_analytic(delta_t: f64, params: &CascadeParams) -> Result<f64> {
    Ok(irf_attenuation(params) * windowed_negativity_analytic(delta_t, params)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// Window width after snapping to whole bins.
    pub delta_t_ps: f64,
    pub n_data: f64,
    pub n_sigma: f64,
    /// `(1/2)|sinc(pi dT / T_P)|`.
    pub n_ideal: f64,
    /// The same pipeline applied to the noise-free IRF-convolved model.
    pub n_irf_model: f64,
    pub low_statistics: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub method: Method,
    /// Bootstrap resamples per point; 0 skips the uncertainty.
    pub resamples: usize,
    pub seed: u64,
    /// Windows are `[start, start + dT)`.
    pub start_ps: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            method: Method::Mle,
            resamples: 100,
            seed: 0,
            start_ps: 0.0,
        }
    }
}

/// Reconstructs the state in `[start, start + dT)` for every `dT` in the
/// grid and reports its negativity next to the ideal and IRF-model curves.
pub fn negativity_vs_window(
    input: &TomographyInput,
    params: &CascadeParams,
    irf: Option<&Irf>,
    delta_t_grid: &[f64],
    options: SweepOptions,
) -> Result<Vec<SweepPoint>> {
    let bin = input.bin_ps();
    let template = input.histograms()[0].zeros_like();
    let model = model_input(input.settings(), &template, params, irf, 1.0)?.with_weighting(input.weighting);

    delta_t_grid
        .par_iter()
        .enumerate()
        .map(|(k, &dt)| {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::invalid(format!("window width {dt} must be > 0")));
            }
            let width = (dt / bin).round().max(1.0) * bin;
            let window = Window::new(options.start_ps, options.start_ps + width)?;
            let res = reconstruct(input, &window, options.method)?;
            let n_data = negativity(&res.rho)?.value;
            let n_sigma = if options.resamples > 0 {
                bootstrap_uncertainty(input, &window, options.method, options.resamples, options.seed.wrapping_add(k as u64))?
                    .negativity_sigma
            } else {
                f64::NAN
            };
            let n_irf_model = negativity(&linear_reconstruct(&model, &window)?.rho)?.value;
            Ok(SweepPoint {
                delta_t_ps: width,
                n_data,
                n_sigma,
                n_ideal: windowed_negativity_analytic(width, params)?,
                n_irf_model,
                low_statistics: res.low_statistics,
            })
        })
        .collect()
}
