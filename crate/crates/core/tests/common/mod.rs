//! Independent numerical oracles shared by the integration tests.
//!
//! Nothing here calls into the model code it is used to check: states,
//! rates and windows are rebuilt from their closed definitions and
//! evaluated by brute-force quadrature or dense linear algebra.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use num_complex::Complex64 as C;

/// Adaptive Simpson quadrature with Richardson correction.
pub fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    // split into panels so narrow features are not stepped over
    let panels = 64;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let (x0, x1) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let (f0, f1, fm) = (f(x0), f(x1), f(0.5 * (x0 + x1)));
            rec(f, x0, x1, f0, fm, f1, h / 6.0 * (f0 + 4.0 * fm + f1), tol / panels as f64, 40)
        })
        .sum()
}

pub fn integrate_c(f: &impl Fn(f64) -> C, a: f64, b: f64, tol: f64) -> C {
    C::new(integrate(&|t| f(t).re, a, b, tol), integrate(&|t| f(t).im, a, b, tol))
}

pub fn omega(tp: f64) -> f64 {
    2.0 * PI / tp
}

/// `(|HH> + e^{-i w t}|VV>)/sqrt(2)` as a projector, written out by hand.
pub fn rho_t(t: f64, tp: f64) -> Matrix4<C> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let psi = [C::new(s, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::from_polar(s, -omega(tp) * t)];
    Matrix4::from_fn(|i, j| psi[i] * psi[j].conj())
}

/// Uniform time average of `rho_t` over `[t0, t0 + dt]` by quadrature.
pub fn window_average(t0: f64, dt: f64, tp: f64) -> Matrix4<C> {
    let mut m = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            let v = integrate_c(&|t| rho_t(t, tp)[(i, j)], t0, t0 + dt, 1e-13);
            m[(i, j)] = v / dt;
        }
    }
    m
}

/// Eigenvalues of a Hermitian 4x4 via its real 8x8 embedding.
pub fn hermitian_eigenvalues(m: &Matrix4<C>) -> Vec<f64> {
    let big = DMatrix::from_fn(8, 8, |r, c| {
        let (i, j) = (r % 4, c % 4);
        let z = m[(i, j)];
        match (r < 4, c < 4) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(big).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    // every eigenvalue appears twice
    ev.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

/// Partial transpose on the second photon, by explicit index swap.
pub fn partial_transpose(m: &Matrix4<C>) -> Matrix4<C> {
    Matrix4::from_fn(|r, c| {
        let (a, b) = (r / 2, r % 2);
        let (a2, b2) = (c / 2, c % 2);
        m[(2 * a + b2, 2 * a2 + b)]
    })
}

pub fn negativity(m: &Matrix4<C>) -> f64 {
    hermitian_eigenvalues(&partial_transpose(m))
        .into_iter()
        .filter(|&e| e < 0.0)
        .map(|e| -e)
        .sum()
}

/// Windowed negativity from quadrature of the averaged state.
pub fn windowed_negativity(t0: f64, dt: f64, tp: f64) -> f64 {
    negativity(&window_average(t0, dt, tp))
}

/// Single-photon ket for Poincaré angles.
pub fn ket(theta: f64, phi: f64) -> [C; 2] {
    [C::new((0.5 * theta).cos(), 0.0), C::from_polar((0.5 * theta).sin(), phi)]
}

/// Coincidence rate density by direct amplitude arithmetic.
pub fn rate(t: f64, a: [C; 2], b: [C; 2], tp: f64, tau: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let amp = a[0].conj() * b[0].conj() * s + a[1].conj() * b[1].conj() * C::from_polar(s, -omega(tp) * t);
    (-t / tau).exp() / tau * amp.norm_sqr()
}

/// `rate` convolved with a normalized Gaussian of width `sigma`.
pub fn convolved_rate(t: f64, a: [C; 2], b: [C; 2], tp: f64, tau: f64, sigma: f64) -> f64 {
    let g = |u: f64| (-0.5 * (u / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt());
    let lo = (t - 12.0 * sigma).max(0.0);
    let hi = t + 12.0 * sigma;
    integrate(&|s| rate(s, a, b, tp, tau) * g(t - s), lo, hi.max(lo), 1e-14)
}

/// Golden-section maximization on a unimodal bracket.
pub fn maximize(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-10 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Singular values of the 16x16 real design matrix mapping the Pauli
/// coordinates of rho to the projection probabilities of `kets`.
pub fn design_singular_values(kets: &[([C; 2], [C; 2])]) -> Vec<f64> {
    let pauli = |k: usize| -> [[C; 2]; 2] {
        let (o, z, i) = (C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 1.0));
        match k {
            0 => [[o, z], [z, o]],
            1 => [[z, o], [o, z]],
            2 => [[z, -i], [i, z]],
            _ => [[o, z], [z, -o]],
        }
    };
    let a = DMatrix::from_fn(kets.len(), 16, |r, c| {
        let (p, q) = kets[r];
        let (s1, s2) = (pauli(c / 4), pauli(c % 4));
        // <p|s1|p><q|s2|q>
        let e = |k: [C; 2], s: [[C; 2]; 2]| -> C {
            let mut acc = C::new(0.0, 0.0);
            for x in 0..2 {
                for y in 0..2 {
                    acc += k[x].conj() * s[x][y] * k[y];
                }
            }
            acc
        };
        (e(p, s1) * e(q, s2)).re
    });
    let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Named states by label, from their defining amplitudes.
pub fn named(label: &str) -> [C; 2] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match label {
        "H" => [C::new(1.0, 0.0), C::new(0.0, 0.0)],
        "V" => [C::new(0.0, 0.0), C::new(1.0, 0.0)],
        "D" => [C::new(s, 0.0), C::new(s, 0.0)],
        "Dbar" => [C::new(s, 0.0), C::new(-s, 0.0)],
        "L" => [C::new(s, 0.0), C::new(0.0, s)],
        "R" => [C::new(s, 0.0), C::new(0.0, -s)],
        _ => panic!("unknown state {label}"),
    }
}

pub const LABELS: [&str; 6] = ["H", "V", "D", "Dbar", "L", "R"];

/// Deviation of a count from its Poisson expectation, in standard errors.
pub fn poisson_z(observed: f64, expected: f64) -> f64 {
    (observed - expected) / expected.sqrt()
}

/// Oscillation phase of a time-difference profile from a weighted linear
/// fit of `e^{-t/tau}(a + b cos wt + c sin wt)`.
pub fn oscillation_phase(counts: &[(f64, f64)], omega: f64, tau: f64) -> (f64, f64) {
    let basis = |t: f64| {
        let e = (-t / tau).exp();
        [e, e * (omega * t).cos(), e * (omega * t).sin()]
    };
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for &(t, n) in counts {
        let f = basis(t);
        let w = 1.0 / n.max(1.0);
        for i in 0..3 {
            atb[i] += w * f[i] * n;
            for j in 0..3 {
                ata[(i, j)] += w * f[i] * f[j];
            }
        }
    }
    let x = ata.lu().solve(&atb).unwrap();
    (x[2].atan2(x[1]), (x[1] * x[1] + x[2] * x[2]).sqrt() / x[0])
}
