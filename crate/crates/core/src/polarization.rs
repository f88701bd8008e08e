//! Single-photon polarization states on the Poincaré sphere and the
//! two-photon projectors built from them.
//!
//! `H` and `V` sit on the poles, `D`/`Dbar` and `L`/`R` on the equator:
//! `|P(theta, phi)> = cos(theta/2)|H> + e^{i phi} sin(theta/2)|V>`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};

use crate::density::{Ket4, Mat4, C64};
use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-12;
/// Below this sine of the polar angle the azimuth is reported as 0.
const POLE_TOL: f64 = 1e-12;

/// The six named states of the rectilinear, diagonal and circular bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NamedState {
    H,
    V,
    D,
    Dbar,
    L,
    R,
}

impl NamedState {
    pub const ALL: [NamedState; 6] = [
        NamedState::H,
        NamedState::V,
        NamedState::D,
        NamedState::Dbar,
        NamedState::L,
        NamedState::R,
    ];

    /// Poincaré-sphere angles `(theta, phi)`.
    pub fn angles(self) -> (f64, f64) {
        match self {
            NamedState::H => (0.0, 0.0),
            NamedState::V => (PI, 0.0),
            NamedState::D => (PI / 2.0, 0.0),
            NamedState::Dbar => (PI / 2.0, PI),
            NamedState::L => (PI / 2.0, PI / 2.0),
            NamedState::R => (PI / 2.0, 3.0 * PI / 2.0),
        }
    }

    pub fn state(self) -> PolarizationState {
        named_state(self)
    }

    pub fn label(self) -> &'static str {
        match self {
            NamedState::H => "H",
            NamedState::V => "V",
            NamedState::D => "D",
            NamedState::Dbar => "Dbar",
            NamedState::L => "L",
            NamedState::R => "R",
        }
    }

    /// The orthogonal partner within the same basis.
    pub fn orthogonal(self) -> NamedState {
        match self {
            NamedState::H => NamedState::V,
            NamedState::V => NamedState::H,
            NamedState::D => NamedState::Dbar,
            NamedState::Dbar => NamedState::D,
            NamedState::L => NamedState::R,
            NamedState::R => NamedState::L,
        }
    }
}

impl fmt::Display for NamedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for NamedState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "H" => Ok(NamedState::H),
            "V" => Ok(NamedState::V),
            "D" => Ok(NamedState::D),
            "Dbar" | "A" => Ok(NamedState::Dbar),
            "L" => Ok(NamedState::L),
            "R" => Ok(NamedState::R),
            other => Err(Error::invalid(format!("unknown polarization state `{other}`"))),
        }
    }
}

/// A pure polarization state stored as the normalized amplitude pair
/// `(a_H, a_V)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationState {
    amp: Vector2<C64>,
}

impl PolarizationState {
    /// Normalizes `(a_h, a_v)`; the zero vector is rejected.
    pub fn from_amplitudes(a_h: C64, a_v: C64) -> Result<Self> {
        let norm = (a_h.norm_sqr() + a_v.norm_sqr()).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::invalid("polarization amplitudes must be finite and non-zero"));
        }
        Ok(PolarizationState {
            amp: Vector2::new(a_h / norm, a_v / norm),
        })
    }

    pub fn amplitudes(&self) -> (C64, C64) {
        (self.amp[0], self.amp[1])
    }

    pub fn ket(&self) -> &Vector2<C64> {
        &self.amp
    }

    /// `(theta, phi)` with `theta` in `[0, pi]`, `phi` in `[0, 2pi)`, global
    /// phase removed. At the poles `phi` is 0.
    pub fn angles(&self) -> (f64, f64) {
        let (h, v) = (self.amp[0].norm(), self.amp[1].norm());
        let theta = 2.0 * v.atan2(h);
        if v < POLE_TOL || h < POLE_TOL {
            return (theta, 0.0);
        }
        let phi = (self.amp[1].arg() - self.amp[0].arg()).rem_euclid(TAU);
        // rem_euclid can return TAU itself for tiny negative inputs
        let phi = if phi >= TAU { 0.0 } else { phi };
        (theta, phi)
    }

    /// Multiplies both amplitudes by `e^{i alpha}`.
    pub fn with_global_phase(&self, alpha: f64) -> Self {
        let p = C64::from_polar(1.0, alpha);
        PolarizationState { amp: self.amp * p }
    }

    pub fn is_normalized(&self) -> bool {
        (self.amp.norm_squared() - 1.0).abs() <= NORM_TOL
    }

    /// `|<self|other>|^2`.
    pub fn overlap_probability(&self, other: &PolarizationState) -> f64 {
        overlap_probability(self, other)
    }

    /// `|P><P|`.
    pub fn projector(&self) -> Matrix2<C64> {
        self.amp * self.amp.adjoint()
    }

    /// Swaps the H and V amplitudes (a half-wave plate at 45 degrees).
    pub fn swap_hv(&self) -> Self {
        PolarizationState {
            amp: Vector2::new(self.amp[1], self.amp[0]),
        }
    }
}

/// Constructs `cos(theta/2)|H> + e^{i phi} sin(theta/2)|V>`.
pub fn state_from_angles(theta: f64, phi: f64) -> Result<PolarizationState> {
    if !theta.is_finite() || !phi.is_finite() {
        return Err(Error::invalid(format!("non-finite angles ({theta}, {phi})")));
    }
    if !(-1e-12..=PI + 1e-12).contains(&theta) {
        return Err(Error::invalid(format!("theta = {theta} outside [0, pi]")));
    }
    let theta = theta.clamp(0.0, PI);
    let phi = phi.rem_euclid(TAU);
    let a_h = C64::new((theta / 2.0).cos(), 0.0);
    let a_v = C64::from_polar((theta / 2.0).sin(), phi);
    Ok(PolarizationState {
        amp: Vector2::new(a_h, a_v),
    })
}

/// Exact amplitudes for the six named states.
pub fn named_state(name: NamedState) -> PolarizationState {
    let s = FRAC_1_SQRT_2;
    let (h, v) = match name {
        NamedState::H => (C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
        NamedState::V => (C64::new(0.0, 0.0), C64::new(1.0, 0.0)),
        NamedState::D => (C64::new(s, 0.0), C64::new(s, 0.0)),
        NamedState::Dbar => (C64::new(s, 0.0), C64::new(-s, 0.0)),
        NamedState::L => (C64::new(s, 0.0), C64::new(0.0, s)),
        NamedState::R => (C64::new(s, 0.0), C64::new(0.0, -s)),
    };
    PolarizationState {
        amp: Vector2::new(h, v),
    }
}

/// Parses a state name (`H`, `V`, `D`, `Dbar`, `L`, `R`).
pub fn named_state_by_label(name: &str) -> Result<PolarizationState> {
    name.parse::<NamedState>().map(named_state)
}

/// Which named state this is, if any (up to global phase).
pub fn identify_named(state: &PolarizationState) -> Option<NamedState> {
    NamedState::ALL
        .into_iter()
        .find(|n| (overlap_probability(&n.state(), state) - 1.0).abs() < 1e-9)
}

/// Born probability `|<a|b>|^2`.
pub fn overlap_probability(a: &PolarizationState, b: &PolarizationState) -> f64 {
    a.amp.dotc(&b.amp).norm_sqr().clamp(0.0, 1.0)
}

/// Rank-1 projector `|P1 P2><P1 P2|`, basis order `{HH, HV, VH, VV}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairProjector(Mat4);

impl PairProjector {
    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    /// `Tr(M rho)`, real for Hermitian `rho`.
    pub fn expectation(&self, rho: &Mat4) -> f64 {
        (self.0 * rho).trace().re
    }
}

/// The two-photon product ket `|P1> (x) |P2>`.
pub fn pair_ket(p1: &PolarizationState, p2: &PolarizationState) -> Ket4 {
    let (a, b) = p1.amplitudes();
    let (c, d) = p2.amplitudes();
    Ket4::new(a * c, a * d, b * c, b * d)
}

pub fn pair_projector(p1: &PolarizationState, p2: &PolarizationState) -> PairProjector {
    let k = pair_ket(p1, p2);
    PairProjector(k * k.adjoint())
}
