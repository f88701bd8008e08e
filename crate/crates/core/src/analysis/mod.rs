//! Instrument-response convolution, the single-parameter lifetime fit and
//! the negativity-versus-window sweep.

mod fit;
mod irf;
mod sweep;

pub use fit::{fit_tau_r, pearson_chi2, poisson_deviance, residuals_normalized, CurveFit, FitOptions, FitResult};
pub use irf::{convolve, model_histograms, model_input, BinnedModel, Convolved, Irf, SampledCurve};
pub use sweep::{
    irf_attenuation, irf_degraded_analytic, negativity_vs_window, SweepOptions, SweepPoint,
};
