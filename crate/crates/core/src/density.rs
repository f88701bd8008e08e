//! Two-photon density matrices in the fixed `{HH, HV, VH, VV}` basis and the
//! small amount of Hermitian linear algebra shared by the other modules.

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat4 = Matrix4<C64>;
pub type Ket4 = Vector4<C64>;

/// Labels of the basis vectors, in storage order.
pub const BASIS_LABELS: [&str; 4] = ["HH", "HV", "VH", "VV"];

/// A 4x4 Hermitian, unit-trace matrix. Positivity is not part of the type:
/// linear tomography can return slightly non-physical matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Mat4);

impl DensityMatrix {
    /// Wraps `m` after checking Hermiticity and unit trace to `tol`.
    pub fn new(m: Mat4, tol: f64) -> Result<Self> {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("density matrix has non-finite entries"));
        }
        let herm = hermiticity_defect(&m);
        if herm > tol {
            return Err(Error::invalid(format!(
                "matrix is not Hermitian (max |m - m^dagger| = {herm:e})"
            )));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::invalid(format!("trace {tr} differs from 1")));
        }
        Ok(DensityMatrix(m))
    }

    /// Builds `|psi><psi|` from a normalized ket.
    pub fn from_pure(psi: &Ket4) -> Self {
        DensityMatrix(psi * psi.adjoint())
    }

    /// Hermitian part of `m` scaled to unit trace.
    pub fn from_hermitian_part(m: &Mat4) -> Result<Self> {
        let h = (m + m.adjoint()).scale(0.5);
        let tr = h.trace().re;
        if !(tr.abs() > 0.0) || !tr.is_finite() {
            return Err(Error::invalid("matrix has zero trace"));
        }
        Ok(DensityMatrix(h.unscale(tr)))
    }

    pub(crate) fn from_matrix_unchecked(m: Mat4) -> Self {
        DensityMatrix(m)
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Mat4::identity().scale(0.25))
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat4 {
        self.0
    }

    /// Zero-based element access.
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> [f64; 4] {
        hermitian_eigenvalues(&self.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        hermiticity_defect(&self.0) <= tol
    }

    pub fn diagonal(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|i| self.0[(i, i)].re)
    }

    /// Projects onto the PSD cone by clipping negative eigenvalues and
    /// renormalizing the trace.
    pub fn clip_to_physical(&self) -> Self {
        let eig = hermitian_eigen(&self.0);
        let clipped: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        if total <= 0.0 {
            return Self::maximally_mixed();
        }
        let mut m = Mat4::zeros();
        for (k, &v) in clipped.iter().enumerate() {
            if v > 0.0 {
                let col = eig.vectors.column(k);
                m += (col * col.adjoint()).scale(v / total);
            }
        }
        DensityMatrix(hermitize(&m))
    }

    /// `<psi|rho|psi>` for a normalized ket.
    pub fn expectation(&self, psi: &Ket4) -> f64 {
        (psi.adjoint() * self.0 * psi)[(0, 0)].re
    }
}

pub(crate) struct HermitianEigen {
    pub values: [f64; 4],
    pub vectors: Mat4,
}

/// Eigen-decomposition of a Hermitian 4x4 matrix, eigenvalues ascending.
pub(crate) fn hermitian_eigen(m: &Mat4) -> HermitianEigen {
    let eig = hermitize(m).symmetric_eigen();
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.map(|k| eig.eigenvalues[k]);
    let mut vectors = Mat4::zeros();
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    HermitianEigen { values, vectors }
}

pub fn hermitian_eigenvalues(m: &Mat4) -> [f64; 4] {
    hermitian_eigen(m).values
}

pub(crate) fn hermitize(m: &Mat4) -> Mat4 {
    (m + m.adjoint()).scale(0.5)
}

pub(crate) fn hermiticity_defect(m: &Mat4) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Trace distance `(1/2) Tr|a - b|`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    let diff = a.matrix() - b.matrix();
    0.5 * hermitian_eigenvalues(&diff).iter().map(|v| v.abs()).sum::<f64>()
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(a) b sqrt(a)))^2`. Both inputs are
/// clipped to the PSD cone before taking square roots.
pub fn fidelity(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    let sa = psd_sqrt(a.matrix());
    let inner = sa * b.matrix() * sa;
    let s: f64 = hermitian_eigenvalues(&inner)
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .sum();
    s * s
}

fn psd_sqrt(m: &Mat4) -> Mat4 {
    let eig = hermitian_eigen(m);
    let mut out = Mat4::zeros();
    for k in 0..4 {
        let v = eig.values[k].max(0.0).sqrt();
        if v > 0.0 {
            let col = eig.vectors.column(k);
            out += (col * col.adjoint()).scale(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bell() -> Ket4 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Ket4::new(C64::new(s, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(s, 0.0))
    }

    #[test]
    fn pure_state_eigenvalues() {
        let rho = DensityMatrix::from_pure(&bell());
        let ev = rho.eigenvalues();
        assert!((ev[3] - 1.0).abs() < 1e-12);
        assert!(ev[..3].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = Mat4::identity().scale(0.25);
        m[(0, 1)] = C64::new(0.1, 0.0);
        assert!(DensityMatrix::new(m, 1e-9).is_err());
    }

    #[test]
    fn rejects_bad_trace() {
        assert!(DensityMatrix::new(Mat4::identity(), 1e-9).is_err());
    }

    #[test]
    fn clipping_makes_psd() {
        let mut m = Mat4::zeros();
        m[(0, 0)] = C64::new(0.7, 0.0);
        m[(3, 3)] = C64::new(0.4, 0.0);
        m[(1, 1)] = C64::new(-0.1, 0.0);
        let rho = DensityMatrix::new(m, 1e-12).unwrap().clip_to_physical();
        assert!(rho.min_eigenvalue() >= -1e-15);
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        assert!((rho.get(0, 0).re - 0.7 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn distance_and_fidelity_of_identical_states() {
        let rho = DensityMatrix::from_pure(&bell());
        assert!(trace_distance(&rho, &rho) < 1e-12);
        assert!((fidelity(&rho, &rho) - 1.0).abs() < 1e-9);
        let mixed = DensityMatrix::maximally_mixed();
        assert!((fidelity(&rho, &mixed) - 0.25).abs() < 1e-12);
        assert!((trace_distance(&rho, &mixed) - 0.75).abs() < 1e-12);
    }
}
