//! Entanglement and fidelity measures for two-photon density matrices.

use crate::cascade::{window_average_density_matrix, CascadeParams};
use crate::density::{hermitian_eigenvalues, hermiticity_defect, DensityMatrix, Mat4, C64};
use crate::error::{Error, Result};

/// Eigenvalues in `[-NOISE_FLOOR, 0)` count as zero.
pub const NOISE_FLOOR: f64 = 1e-9;
const TRACE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct NegativityValue {
    pub value: f64,
    pub negative_eigenvalues: Vec<f64>,
}

/// Transposes the second photon's index: `((i,j),(k,l)) -> ((i,l),(k,j))`.
pub fn partial_transpose(rho: &Mat4) -> Mat4 {
    let mut out = Mat4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + l, 2 * k + j)] = rho[(2 * i + j, 2 * k + l)];
                }
            }
        }
    }
    out
}

/// Sum of the magnitudes of the partial transpose's negative eigenvalues.
pub fn negativity(rho: &DensityMatrix) -> Result<NegativityValue> {
    negativity_of_matrix(rho.matrix())
}

pub fn negativity_of_matrix(m: &Mat4) -> Result<NegativityValue> {
    let tr = m.trace();
    if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
        return Err(Error::invalid(format!("trace {tr} deviates from 1")));
    }
    if hermiticity_defect(m) > TRACE_TOL {
        return Err(Error::invalid("negativity needs a Hermitian matrix"));
    }
    let negative_eigenvalues: Vec<f64> = hermitian_eigenvalues(&partial_transpose(m))
        .into_iter()
        .filter(|&v| v < -NOISE_FLOOR)
        .collect();
    let value = negative_eigenvalues
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
        .clamp(0.0, 0.5);
    Ok(NegativityValue {
        value,
        negative_eigenvalues,
    })
}

/// `<Phi|rho|Phi>` with `|Phi> = (|HH> + e^{-i phase}|VV>)/sqrt(2)`.
pub fn bell_fidelity(rho: &DensityMatrix, phase: f64) -> f64 {
    let m = rho.matrix();
    let pop = 0.5 * (m[(0, 0)].re + m[(3, 3)].re);
    let coh = (m[(0, 3)] * C64::from_polar(1.0, -phase)).re;
    (pop + coh).clamp(0.0, 1.0)
}

/// Bell fidelity maximized over the relative phase: `(fidelity, phase)`.
pub fn max_bell_fidelity(rho: &DensityMatrix) -> (f64, f64) {
    let corner = rho.get(0, 3);
    let phase = if corner.norm() > 0.0 { corner.arg() } else { 0.0 };
    (bell_fidelity(rho, phase), phase)
}

/// Negativity of the density matrix averaged uniformly over
/// `[t0, t0 + delta_t]`.
pub fn window_average_negativity(t0: f64, delta_t: f64, params: &CascadeParams) -> Result<f64> {
    let rho = window_average_density_matrix(t0, delta_t, params)?;
    negativity(&rho).map(|n| n.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::density_matrix;
    use crate::density::Ket4;
    use std::f64::consts::PI;

    fn params() -> CascadeParams {
        CascadeParams::with_precession(122.0, 410.0, 260.0, 1.0, 42.0).unwrap()
    }

    #[test]
    fn partial_transpose_of_bell_state() {
        let rho = density_matrix(0.0, &params());
        let ev = hermitian_eigenvalues(&partial_transpose(rho.matrix()));
        let expected = [-0.5, 0.5, 0.5, 0.5];
        for (a, b) in ev.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_transpose_is_involution() {
        let rho = density_matrix(40.0, &params());
        let twice = partial_transpose(&partial_transpose(rho.matrix()));
        assert_eq!(&twice, rho.matrix());
    }

    #[test]
    fn product_state_is_ppt() {
        let mut m = Mat4::zeros();
        m[(0, 0)] = C64::new(1.0, 0.0);
        assert_eq!(partial_transpose(&m), m);
        let n = negativity(&DensityMatrix::new(m, 1e-12).unwrap()).unwrap();
        assert_eq!(n.value, 0.0);
    }

    #[test]
    fn negativity_examples() {
        for t in [0.0, 13.0, 61.0, 300.0] {
            let n = negativity(&density_matrix(t, &params())).unwrap();
            assert!((n.value - 0.5).abs() < 1e-12);
            assert_eq!(n.negative_eigenvalues.len(), 1);
        }
        assert_eq!(negativity(&DensityMatrix::maximally_mixed()).unwrap().value, 0.0);
        let mut m = Mat4::zeros();
        m[(0, 0)] = C64::new(0.5, 0.0);
        m[(3, 3)] = C64::new(0.5, 0.0);
        let classical = DensityMatrix::new(m, 1e-12).unwrap();
        assert_eq!(negativity(&classical).unwrap().value, 0.0);
    }

    #[test]
    fn negativity_rejects_bad_trace() {
        let m = Mat4::identity().scale(0.3);
        assert!(negativity_of_matrix(&m).is_err());
    }

    #[test]
    fn bell_fidelity_examples() {
        let p = params();
        let t = 37.0;
        let rho = density_matrix(t, &p);
        let phase = 2.0 * PI * t / 122.0;
        assert!((bell_fidelity(&rho, phase) - 1.0).abs() < 1e-12);
        assert!(bell_fidelity(&rho, phase + PI) < 1e-12);
        let (f, best) = max_bell_fidelity(&rho);
        assert!((f - 1.0).abs() < 1e-12);
        assert!((C64::from_polar(1.0, best) - C64::from_polar(1.0, phase)).norm() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed();
        assert!((bell_fidelity(&mixed, 0.3) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn bell_fidelity_agrees_with_expectation() {
        let p = params();
        let rho = density_matrix(50.0, &p);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let phase = 0.4;
        let phi = Ket4::new(
            C64::new(s, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::from_polar(s, -phase),
        );
        assert!((bell_fidelity(&rho, phase) - rho.expectation(&phi)).abs() < 1e-12);
    }

    #[test]
    fn window_examples() {
        let p = params();
        assert!((window_average_negativity(5.0, 1e-6, &p).unwrap() - 0.5).abs() < 1e-10);
        assert!(window_average_negativity(0.0, 122.0, &p).unwrap() < 1e-12);
        let expected = 0.5 * (24.0 * PI / 122.0).sin() / (24.0 * PI / 122.0);
        let got = window_average_negativity(0.0, 24.0, &p).unwrap();
        assert!((got - expected).abs() < 1e-12);
        // T_P = h / 34 ueV
        let measured = CascadeParams::default();
        assert!((window_average_negativity(0.0, 24.0, &measured).unwrap() - 0.4686).abs() < 1e-4);
    }
}
