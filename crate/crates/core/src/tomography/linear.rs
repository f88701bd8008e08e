//! Linear inversion of the projection frequencies.

use nalgebra::{DMatrix, DVector};

use crate::density::{DensityMatrix, Mat4, C64};
use crate::error::{Error, Result};
use crate::polarization::PairProjector;

/// Relative singular value below which the design is treated as singular.
const RANK_TOL: f64 = 1e-10;

fn pauli(k: usize) -> nalgebra::Matrix2<C64> {
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match k {
        0 => nalgebra::Matrix2::new(o, z, z, o),
        1 => nalgebra::Matrix2::new(z, o, o, z),
        2 => nalgebra::Matrix2::new(z, -i, i, z),
        _ => nalgebra::Matrix2::new(o, z, z, -o),
    }
}

/// `sigma_a (x) sigma_b` for `k = 4a + b`.
pub fn pauli_product(k: usize) -> Mat4 {
    pauli(k / 4).kronecker(&pauli(k % 4))
}

/// The design matrix `A[nu][k] = Tr(Pi_nu sigma_k) / 4` and its
/// pseudo-inverse, so that `rho = sum_k r_k sigma_k / 4` with `A r = f`.
#[derive(Debug, Clone)]
pub struct Design {
    matrix: DMatrix<f64>,
    pinv: DMatrix<f64>,
    singular_values: Vec<f64>,
}

impl Design {
    pub fn new(projectors: &[PairProjector]) -> Result<Self> {
        let basis: Vec<Mat4> = (0..16).map(pauli_product).collect();
        let matrix = DMatrix::from_fn(projectors.len(), 16, |nu, k| {
            0.25 * projectors[nu].expectation(&basis[k])
        });
        let svd = matrix.clone().svd(true, true);
        let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
        singular_values.sort_by(|a, b| b.total_cmp(a));
        let max = singular_values.first().copied().unwrap_or(0.0);
        if singular_values.len() < 16 || singular_values[15] <= RANK_TOL * max {
            return Err(Error::config(
                "projection settings are not informationally complete (singular design matrix)",
            ));
        }
        let pinv = svd
            .pseudo_inverse(RANK_TOL * max)
            .map_err(|e| Error::config(format!("pseudo-inverse failed: {e}")))?;
        Ok(Design {
            matrix,
            pinv,
            singular_values,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Singular values, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn condition_number(&self) -> f64 {
        self.singular_values[0] / self.singular_values[15]
    }

    /// Least-squares `rho` from frequencies `f_nu = n_nu / N`; the result
    /// is Hermitian and scaled to unit trace.
    pub fn invert(&self, frequencies: &[f64]) -> Result<DensityMatrix> {
        let f = DVector::from_column_slice(frequencies);
        let r = &self.pinv * f;
        let mut m = Mat4::zeros();
        for (k, &rk) in r.iter().enumerate() {
            m += pauli_product(k).scale(0.25 * rk);
        }
        DensityMatrix::from_hermitian_part(&m)
    }
}
