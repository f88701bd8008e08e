//! Maximum-likelihood refinement over the Cholesky-parameterized set of
//! density matrices.
//!
//! `rho = T^dagger T / Tr(T^dagger T)` with `T` lower triangular: four real
//! diagonal entries and six complex sub-diagonal entries, 16 reals in total.
//! The Poisson log-likelihood `sum_nu n_nu ln mu_nu - mu_nu` with
//! `mu_nu = N Tr(Pi_nu rho)` is maximized by L-BFGS with a backtracking
//! Armijo line search, so every accepted iterate increases the likelihood.

use std::collections::VecDeque;

use crate::density::{DensityMatrix, Mat4, C64};
use crate::polarization::PairProjector;

pub const GRAD_TOL: f64 = 1e-8;
pub const REL_CHANGE_TOL: f64 = 1e-12;
pub const MAX_ITERATIONS: usize = 20_000;
const HISTORY: usize = 12;
/// Weight of the maximally mixed state blended into the starting point so
/// that its Cholesky factor is regular.
const INIT_MIXING: f64 = 1e-10;
/// Consecutive tiny relative changes required before stopping.
const STALL_ITERATIONS: usize = 3;

/// Problem data: projectors, observed counts and the normalization `N`.
pub struct Likelihood<'a> {
    pub projectors: &'a [PairProjector],
    pub counts: &'a [f64],
    pub normalization: f64,
}

impl Likelihood<'_> {
    /// `sum n ln mu - mu` for a physical `rho`.
    pub fn log_likelihood(&self, rho: &Mat4) -> f64 {
        self.projectors
            .iter()
            .zip(self.counts)
            .map(|(pi, &n)| {
                let mu = self.normalization * pi.expectation(rho).max(0.0);
                let log_term = if n > 0.0 { n * mu.ln() } else { 0.0 };
                log_term - mu
            })
            .sum()
    }

    /// Gradient of the log-likelihood with respect to `rho`, as a
    /// Hermitian matrix `sum_nu N (n_nu / mu_nu - 1) Pi_nu`.
    pub fn rho_gradient(&self, rho: &Mat4) -> Mat4 {
        let mut g = Mat4::zeros();
        for (pi, &n) in self.projectors.iter().zip(self.counts) {
            let mu = self.normalization * pi.expectation(rho);
            let w = if n > 0.0 { n / mu - 1.0 } else { -1.0 };
            g += pi.matrix().scale(self.normalization * w);
        }
        g
    }
}

/// Outcome of the optimizer.
#[derive(Debug, Clone)]
pub struct MleOutcome {
    pub rho: DensityMatrix,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood after each accepted iteration, starting point first.
    pub trace: Vec<f64>,
}

/// Packs lower-triangular `T` into 16 reals: diagonal, then (re, im) of the
/// sub-diagonal entries row by row.
pub fn pack(t: &Mat4) -> [f64; 16] {
    let mut x = [0.0; 16];
    for i in 0..4 {
        x[i] = t[(i, i)].re;
    }
    let mut k = 4;
    for i in 1..4 {
        for j in 0..i {
            x[k] = t[(i, j)].re;
            x[k + 1] = t[(i, j)].im;
            k += 2;
        }
    }
    x
}

pub fn unpack(x: &[f64; 16]) -> Mat4 {
    let mut t = Mat4::zeros();
    for i in 0..4 {
        t[(i, i)] = C64::new(x[i], 0.0);
    }
    let mut k = 4;
    for i in 1..4 {
        for j in 0..i {
            t[(i, j)] = C64::new(x[k], x[k + 1]);
            k += 2;
        }
    }
    t
}

/// `T^dagger T / Tr(T^dagger T)`.
pub fn rho_from_params(x: &[f64; 16]) -> Mat4 {
    let t = unpack(x);
    let m = t.adjoint() * t;
    let tr = m.trace().re;
    crate::density::hermitize(&m.unscale(tr))
}

/// Lower-triangular `T` with `T^dagger T = rho` for positive definite `rho`.
pub fn params_from_rho(rho: &Mat4) -> Option<[f64; 16]> {
    // reverse the basis order: J rho J = L L^dagger gives rho = (J L J)(J L J)^dagger
    let j = Mat4::from_fn(|r, c| if r + c == 3 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    let chol = nalgebra::Cholesky::new(j * rho * j)?;
    let upper = j * chol.l() * j;
    Some(pack(&upper.adjoint()))
}

fn objective(lik: &Likelihood, x: &[f64; 16]) -> (f64, [f64; 16]) {
    let t = unpack(x);
    let m = t.adjoint() * t;
    let tau = m.trace().re;
    let rho = m.unscale(tau);
    let ll = lik.log_likelihood(&rho);
    let g = lik.rho_gradient(&rho);
    let gbar = (g * rho).trace().re;
    let k = (g - Mat4::identity().scale(gbar)) * t.adjoint();
    // d LL / d Re T_ij = (2/tau) Re K_ji, d LL / d Im T_ij = -(2/tau) Im K_ji
    let mut grad = [0.0; 16];
    let s = 2.0 / tau;
    for i in 0..4 {
        grad[i] = s * k[(i, i)].re;
    }
    let mut idx = 4;
    for i in 1..4 {
        for j in 0..i {
            grad[idx] = s * k[(j, i)].re;
            grad[idx + 1] = -s * k[(j, i)].im;
            idx += 2;
        }
    }
    // minimize the negative log-likelihood
    (-ll, grad.map(|v| -v))
}

fn dot(a: &[f64; 16], b: &[f64; 16]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64; 16]) -> f64 {
    dot(a, a).sqrt()
}

/// Maximizes the likelihood starting from `init` (clipped to the PSD cone
/// and blended with a little of the maximally mixed state).
pub fn maximize(lik: &Likelihood, init: &DensityMatrix) -> MleOutcome {
    let start = init.clip_to_physical();
    let blended = start.matrix().scale(1.0 - INIT_MIXING) + Mat4::identity().scale(INIT_MIXING / 4.0);
    let mut x = params_from_rho(&blended).unwrap_or_else(|| {
        params_from_rho(&Mat4::identity().scale(0.25)).expect("identity is positive definite")
    });

    let (mut f, mut g) = objective(lik, &x);
    let mut trace = vec![-f];
    let mut history: VecDeque<([f64; 16], [f64; 16], f64)> = VecDeque::with_capacity(HISTORY);
    let mut converged = false;
    let mut stalled = 0;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        if norm(&g) < GRAD_TOL {
            converged = true;
            break;
        }
        // two-loop recursion
        let mut q = g;
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for k in 0..16 {
                q[k] -= a * y[k];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q = q.map(|v| v * gamma);
        } else {
            let scale = 1e-2 / norm(&g).max(1e-300) * norm(&x).max(1e-3);
            q = q.map(|v| v * scale);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for k in 0..16 {
                q[k] += s[k] * (a - b);
            }
        }
        let mut dir = q.map(|v| -v);
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            history.clear();
            let scale = 1e-2 / norm(&g).max(1e-300) * norm(&x).max(1e-3);
            dir = g.map(|v| -v * scale);
            slope = dot(&dir, &g);
        }

        // backtracking line search with the Armijo condition
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn = x;
            for k in 0..16 {
                xn[k] += step * dir[k];
            }
            let (fn_, gn) = objective(lik, &xn);
            if fn_.is_finite() && fn_ <= f + 1e-4 * step * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((xn, fn_, gn)) = accepted else {
            // no descent possible at machine precision
            converged = history.is_empty() || norm(&g) < GRAD_TOL;
            if !history.is_empty() {
                history.clear();
                continue;
            }
            break;
        };

        let mut s = [0.0; 16];
        let mut y = [0.0; 16];
        for k in 0..16 {
            s[k] = xn[k] - x[k];
            y[k] = gn[k] - g[k];
        }
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if history.len() == HISTORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let rel = (f - fn_).abs() / f.abs().max(1e-300);
        x = xn;
        f = fn_;
        g = gn;
        trace.push(-f);
        if rel < REL_CHANGE_TOL {
            stalled += 1;
            if stalled >= STALL_ITERATIONS {
                converged = true;
                break;
            }
        } else {
            stalled = 0;
        }
    }

    let rho = DensityMatrix::from_matrix_unchecked(rho_from_params(&x));
    MleOutcome {
        log_likelihood: -f,
        rho,
        converged,
        iterations,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{density_matrix, CascadeParams};
    use crate::polarization::{pair_projector, NamedState};

    fn projectors() -> Vec<PairProjector> {
        use NamedState::*;
        let s = [H, V, D, L];
        s.iter()
            .flat_map(|a| s.iter().map(move |b| pair_projector(&a.state(), &b.state())))
            .collect()
    }

    #[test]
    fn cholesky_round_trip() {
        let mut rho = Mat4::identity().scale(0.25);
        rho[(0, 3)] = C64::new(0.1, 0.05);
        rho[(3, 0)] = C64::new(0.1, -0.05);
        let x = params_from_rho(&rho).unwrap();
        let back = rho_from_params(&x);
        assert!((back - rho).norm() < 1e-13);
        assert_eq!(unpack(&pack(&unpack(&x))), unpack(&x));
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let pis = projectors();
        let counts: Vec<f64> = (0..16).map(|k| 100.0 + 37.0 * k as f64).collect();
        let lik = Likelihood {
            projectors: &pis,
            counts: &counts,
            normalization: 900.0,
        };
        let x0 = [0.9, 0.7, 0.5, 0.8, 0.1, -0.2, 0.05, 0.3, -0.1, 0.2, 0.15, 0.0, -0.3, 0.1, 0.2, 0.05];
        let (_, g) = objective(&lik, &x0);
        for k in 0..16 {
            let h = 1e-6;
            let mut xp = x0;
            let mut xm = x0;
            xp[k] += h;
            xm[k] -= h;
            let fd = (objective(&lik, &xp).0 - objective(&lik, &xm).0) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-5 * (1.0 + g[k].abs()), "param {k}: fd {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn exact_counts_recover_state() {
        let p = CascadeParams::with_precession(122.0, 410.0, 260.0, 1.0, 42.0).unwrap();
        let truth = density_matrix(30.5, &p);
        let pis = projectors();
        let counts: Vec<f64> = pis.iter().map(|pi| 1e5 * pi.expectation(truth.matrix())).collect();
        let lik = Likelihood {
            projectors: &pis,
            counts: &counts,
            normalization: 1e5,
        };
        let out = maximize(&lik, &DensityMatrix::maximally_mixed());
        assert!(out.converged);
        assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(crate::density::fidelity(&out.rho, &truth) > 1.0 - 1e-8);
    }
}
