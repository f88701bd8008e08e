//! Closed-form model of the biexciton-exciton cascade.
//!
//! After the biexciton photon is emitted the exciton precesses between its
//! two eigenstates with period `T_P = h / Delta`. When the exciton photon
//! leaves a time `t` later the pair is in
//! `(|HH> + e^{-i 2 pi t / T_P} |VV>) / sqrt(2)`, and the exciton emission
//! time is exponentially distributed with the radiative lifetime `tau_R`.
//! Everything here is exact; quadrature cross-checks live in the tests.

use std::f64::consts::{PI, TAU};

use crate::density::{DensityMatrix, Ket4, Mat4, C64};
use crate::error::{Error, Result};
use crate::polarization::{pair_ket, PolarizationState};

/// Planck constant in ueV * ps.
pub const PLANCK_UEV_PS: f64 = 4135.667696;

/// Conversion from a Gaussian FWHM to its standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.3548;

pub const DEFAULT_DELTA_UEV: f64 = 34.0;
pub const DEFAULT_TAU_X_PS: f64 = 410.0;
pub const DEFAULT_TAU_XX_PS: f64 = 260.0;
pub const DEFAULT_IRF_FWHM_PS: f64 = 42.0;
/// Per-arm collection efficiency giving ~1e-6 coincidences per pulse
/// averaged over the projection settings.
pub const DEFAULT_ETA: f64 = 0.002;

/// Physical parameters of the source and the detection chain.
///
/// `irf_fwhm_ps = 0` means ideal timing and `tau_xx_ps = 0` an instantaneous
/// biexciton decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeParams {
    delta_uev: f64,
    precession_ps: f64,
    tau_x_ps: f64,
    tau_xx_ps: f64,
    eta: f64,
    irf_fwhm_ps: f64,
}

impl Default for CascadeParams {
    fn default() -> Self {
        CascadeParams::new(
            DEFAULT_DELTA_UEV,
            DEFAULT_TAU_X_PS,
            DEFAULT_TAU_XX_PS,
            DEFAULT_ETA,
            DEFAULT_IRF_FWHM_PS,
        )
        .expect("default parameters are valid")
    }
}

impl CascadeParams {
    /// Parameters from the fine-structure splitting; `T_P = h / Delta`.
    pub fn new(
        delta_uev: f64,
        tau_x_ps: f64,
        tau_xx_ps: f64,
        eta: f64,
        irf_fwhm_ps: f64,
    ) -> Result<Self> {
        if !(delta_uev.is_finite() && delta_uev > 0.0) {
            return Err(Error::invalid(format!("delta_ueV must be > 0, got {delta_uev}")));
        }
        let p = CascadeParams {
            delta_uev,
            precession_ps: PLANCK_UEV_PS / delta_uev,
            tau_x_ps,
            tau_xx_ps,
            eta,
            irf_fwhm_ps,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters from the precession period; `Delta = h / T_P`.
    pub fn with_precession(
        precession_ps: f64,
        tau_x_ps: f64,
        tau_xx_ps: f64,
        eta: f64,
        irf_fwhm_ps: f64,
    ) -> Result<Self> {
        if !(precession_ps.is_finite() && precession_ps > 0.0) {
            return Err(Error::invalid(format!("precession_ps must be > 0, got {precession_ps}")));
        }
        let p = CascadeParams {
            delta_uev: PLANCK_UEV_PS / precession_ps,
            precession_ps,
            tau_x_ps,
            tau_xx_ps,
            eta,
            irf_fwhm_ps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        positive("delta_ueV", self.delta_uev)?;
        positive("precession_ps", self.precession_ps)?;
        positive("tau_x_ps", self.tau_x_ps)?;
        non_negative("tau_xx_ps", self.tau_xx_ps)?;
        non_negative("irf_fwhm_ps", self.irf_fwhm_ps)?;
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        let implied = PLANCK_UEV_PS / self.delta_uev;
        if ((implied - self.precession_ps) / self.precession_ps).abs() > 1e-3 {
            return Err(Error::invalid(format!(
                "precession {} ps inconsistent with h/Delta = {implied} ps",
                self.precession_ps
            )));
        }
        Ok(())
    }

    pub fn delta_uev(&self) -> f64 {
        self.delta_uev
    }
    pub fn precession_ps(&self) -> f64 {
        self.precession_ps
    }
    pub fn tau_x_ps(&self) -> f64 {
        self.tau_x_ps
    }
    pub fn tau_xx_ps(&self) -> f64 {
        self.tau_xx_ps
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn irf_fwhm_ps(&self) -> f64 {
        self.irf_fwhm_ps
    }

    /// Angular precession frequency `2 pi / T_P` in rad/ps.
    pub fn omega(&self) -> f64 {
        TAU / self.precession_ps
    }

    /// Standard deviation of the pair timing response.
    pub fn pair_sigma_ps(&self) -> f64 {
        self.irf_fwhm_ps / FWHM_PER_SIGMA
    }

    /// Standard deviation of a single detector's jitter; two detectors add
    /// up to the pair response.
    pub fn detector_sigma_ps(&self) -> f64 {
        self.irf_fwhm_ps / (FWHM_PER_SIGMA * std::f64::consts::SQRT_2)
    }

    pub fn with_tau_x(mut self, tau_x_ps: f64) -> Result<Self> {
        self.tau_x_ps = tau_x_ps;
        self.validate().map(|_| self)
    }

    pub fn with_tau_xx(mut self, tau_xx_ps: f64) -> Result<Self> {
        self.tau_xx_ps = tau_xx_ps;
        self.validate().map(|_| self)
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        self.eta = eta;
        self.validate().map(|_| self)
    }

    pub fn with_irf_fwhm(mut self, irf_fwhm_ps: f64) -> Result<Self> {
        self.irf_fwhm_ps = irf_fwhm_ps;
        self.validate().map(|_| self)
    }
}

/// Exciton recombination density `e^{-t/tau_R} / tau_R` (zero for `t < 0`).
pub fn exciton_decay_density(t: f64, params: &CascadeParams) -> f64 {
    if t < 0.0 {
        0.0
    } else {
        (-t / params.tau_x_ps).exp() / params.tau_x_ps
    }
}

pub fn two_photon_state(t: f64, params: &CascadeParams) -> Ket4 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let zero = C64::new(0.0, 0.0);
    Ket4::new(
        C64::new(s, 0.0),
        zero,
        zero,
        C64::from_polar(s, -params.omega() * t),
    )
}

/// `|psi(t)><psi(t)|`; the (HH, VV) corner is `e^{+i 2 pi t / T_P} / 2`.
pub fn density_matrix(t: f64, params: &CascadeParams) -> DensityMatrix {
    DensityMatrix::from_pure(&two_photon_state(t, params))
}

/// Uniform time average of `density_matrix` over `[t0, t0 + delta_t]`.
pub fn window_average_density_matrix(
    t0: f64,
    delta_t: f64,
    params: &CascadeParams,
) -> Result<DensityMatrix> {
    if !(delta_t.is_finite() && delta_t > 0.0) || !t0.is_finite() {
        return Err(Error::invalid(format!("window must be finite and > 0, got {delta_t}")));
    }
    let w = params.omega();
    // mean of e^{i w t} over the window, written via sinc to avoid cancellation
    let mean_phase = C64::from_polar(sinc(0.5 * w * delta_t), w * (t0 + 0.5 * delta_t));
    let mut m = Mat4::zeros();
    m[(0, 0)] = C64::new(0.5, 0.0);
    m[(3, 3)] = C64::new(0.5, 0.0);
    m[(0, 3)] = mean_phase * 0.5;
    m[(3, 0)] = mean_phase.conj() * 0.5;
    Ok(DensityMatrix::from_matrix_unchecked(m))
}

/// Unnormalized sinc, `sin(x)/x`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Negativity measured with a square resolution window of width `delta_t`:
/// `(1/2)|sinc(pi delta_t / T_P)|`.
pub fn windowed_negativity_analytic(delta_t: f64, params: &CascadeParams) -> Result<f64> {
    if !(delta_t.is_finite() && delta_t > 0.0) {
        return Err(Error::invalid(format!("delta_t must be > 0, got {delta_t}")));
    }
    Ok(0.5 * sinc(PI * delta_t / params.precession_ps).abs())
}

/// The rate for a projection pair written as
/// `p_X(t) * [constant + Re(coherence * e^{i 2 pi t / T_P})]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateComponents {
    pub constant: f64,
    pub coherence: C64,
}

impl RateComponents {
    pub fn new(p1: &PolarizationState, p2: &PolarizationState) -> Self {
        let (a1h, a1v) = p1.amplitudes();
        let (a2h, a2v) = p2.amplitudes();
        let a = (a1h * a2h).conj();
        let b = (a1v * a2v).conj();
        RateComponents {
            constant: 0.5 * (a.norm_sqr() + b.norm_sqr()),
            coherence: a * b.conj(),
        }
    }

    /// Projection probability `|<P1 P2|psi(t)>|^2`.
    pub fn factor(&self, t: f64, params: &CascadeParams) -> f64 {
        self.constant + (self.coherence * C64::from_polar(1.0, params.omega() * t)).re
    }

    /// Exact `int_a^b rate dt`, with the rate taken as zero for `t < 0`.
    pub fn integral(&self, a: f64, b: f64, params: &CascadeParams) -> f64 {
        let (decay, osc) = decay_moments(a, b, params);
        self.constant * decay + (self.coherence * osc).re
    }
}

/// `(int p_X dt, int p_X e^{i 2 pi t / T_P} dt)` over `[a, b]`, with
/// `p_X = 0` for `t < 0`.
pub fn decay_moments(a: f64, b: f64, params: &CascadeParams) -> (f64, C64) {
    let a = a.max(0.0);
    if b <= a {
        return (0.0, C64::new(0.0, 0.0));
    }
    let tau = params.tau_x_ps;
    let decay = (-a / tau).exp() - (-b / tau).exp();
    let z = C64::new(-1.0 / tau, params.omega());
    let osc = ((z * b).exp() - (z * a).exp()) / (z * tau);
    (decay, osc)
}

/// Coincidence rate density via the Born rule:
/// `p_X(t) * |<P1 P2|psi(t)>|^2`, in 1/ps.
pub fn coincidence_rate(
    t: f64,
    p1: &PolarizationState,
    p2: &PolarizationState,
    params: &CascadeParams,
) -> Result<f64> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::invalid(format!("time difference must be finite and >= 0, got {t}")));
    }
    let amp = pair_ket(p1, p2).dotc(&two_photon_state(t, params));
    Ok(exciton_decay_density(t, params) * amp.norm_sqr())
}

/// The same rate written in terms of the Poincaré angles of both analyzers.
pub fn coincidence_rate_from_angles(
    t: f64,
    (theta1, phi1): (f64, f64),
    (theta2, phi2): (f64, f64),
    params: &CascadeParams,
) -> f64 {
    let arg = 0.5 * (phi1 + phi2) + PI * t / params.precession_ps;
    let re = (0.5 * (theta1 - theta2)).cos() * arg.cos();
    let im = (0.5 * (theta1 + theta2)).cos() * arg.sin();
    (-t / params.tau_x_ps).exp() / (2.0 * params.tau_x_ps) * (re * re + im * im)
}

/// The five cases into which pairs of basis states fall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateCase {
    /// Both rectilinear and equal: `1/2`.
    CoRectilinear,
    /// Both rectilinear and orthogonal: `0`.
    CrossRectilinear,
    /// Rectilinear first photon, equatorial second: `1/4`.
    RectilinearEquatorial,
    /// Equatorial first photon, rectilinear second: `1/4`.
    EquatorialRectilinear,
    /// Both equatorial: `(1/4)[1 + cos(phase + 2 pi t / T_P)]`, phase = phi1 + phi2.
    Equatorial { phase: f64 },
    /// Not on the poles or equator.
    General,
}

impl RateCase {
    /// Row number (1-5) in the usual tabulation; `None` for general states.
    pub fn row(&self) -> Option<u8> {
        match self {
            RateCase::CoRectilinear => Some(1),
            RateCase::CrossRectilinear => Some(2),
            RateCase::RectilinearEquatorial => Some(3),
            RateCase::EquatorialRectilinear => Some(4),
            RateCase::Equatorial { .. } => Some(5),
            RateCase::General => None,
        }
    }

    /// `rate / p_X(t)` at time `t`, or `None` for general states.
    pub fn factor(&self, t: f64, params: &CascadeParams) -> Option<f64> {
        match *self {
            RateCase::CoRectilinear => Some(0.5),
            RateCase::CrossRectilinear => Some(0.0),
            RateCase::RectilinearEquatorial | RateCase::EquatorialRectilinear => Some(0.25),
            RateCase::Equatorial { phase } => {
                Some(0.25 * (1.0 + (phase + params.omega() * t).cos()))
            }
            RateCase::General => None,
        }
    }

    /// Time-independent prefactor for the non-oscillating rows.
    pub fn constant(&self) -> Option<f64> {
        match self {
            RateCase::CoRectilinear => Some(0.5),
            RateCase::CrossRectilinear => Some(0.0),
            RateCase::RectilinearEquatorial | RateCase::EquatorialRectilinear => Some(0.25),
            _ => None,
        }
    }
}

const CLASSIFY_TOL: f64 = 1e-9;

#[derive(PartialEq)]
enum Latitude {
    North,
    South,
    Equator,
    Other,
}

fn latitude(theta: f64) -> Latitude {
    if theta.abs() < CLASSIFY_TOL {
        Latitude::North
    } else if (theta - PI).abs() < CLASSIFY_TOL {
        Latitude::South
    } else if (theta - PI / 2.0).abs() < CLASSIFY_TOL {
        Latitude::Equator
    } else {
        Latitude::Other
    }
}

pub fn classify_rate(p1: &PolarizationState, p2: &PolarizationState) -> RateCase {
    let (t1, f1) = p1.angles();
    let (t2, f2) = p2.angles();
    use Latitude::*;
    match (latitude(t1), latitude(t2)) {
        (North, North) | (South, South) => RateCase::CoRectilinear,
        (North, South) | (South, North) => RateCase::CrossRectilinear,
        (North | South, Equator) => RateCase::RectilinearEquatorial,
        (Equator, North | South) => RateCase::EquatorialRectilinear,
        (Equator, Equator) => RateCase::Equatorial {
            phase: (f1 + f2).rem_euclid(TAU),
        },
        _ => RateCase::General,
    }
}

/// `int_0^inf coincidence_rate dt` in closed form.
pub fn integrated_pair_probability(
    p1: &PolarizationState,
    p2: &PolarizationState,
    params: &CascadeParams,
) -> f64 {
    let c = RateComponents::new(p1, p2);
    // int_0^inf e^{-t/tau} e^{i w t} / tau dt = 1 / (1 - i w tau)
    let lorentz = C64::new(1.0, 0.0) / C64::new(1.0, -params.omega() * params.tau_x_ps);
    c.constant + (c.coherence * lorentz).re
}
