//! Constant coupling data of the system `y' + (D A + Q) y = R B v`.

use alloc::format;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest supported number of equations or control channels.
pub const MAX_DIM: usize = 16;

/// Minimum eigenvalue of the symmetric part of `D` below which the system is rejected.
pub const COERCIVITY_FLOOR: f64 = 1e-10;

/// Diffusion coupling `D`, zero-order coupling `Q` and control matrix `R`,
/// together with the constants derived from them.
///
/// Immutable once built; every accessor is a plain read.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledSystem {
    n: usize,
    m: usize,
    diffusion: DMatrix<f64>,
    coupling: DMatrix<f64>,
    control: DMatrix<f64>,
    coercivity: f64,
    coupling_norm: f64,
}

impl CoupledSystem {
    /// Validates the data and computes the coercivity constant
    /// `c = lambda_min((D + D^T)/2)` and `|Q|_2`.
    pub fn new(
        n: usize,
        m: usize,
        diffusion: DMatrix<f64>,
        coupling: DMatrix<f64>,
        control: DMatrix<f64>,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument(format!(
                "n and m must be positive (got n={n}, m={m})"
            )));
        }
        if n > MAX_DIM || m > MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "n={n}, m={m} outside the supported envelope (<= {MAX_DIM})"
            )));
        }
        check_shape("D", &diffusion, n, n)?;
        check_shape("Q", &coupling, n, n)?;
        check_shape("R", &control, n, m)?;
        for (name, mat) in [("D", &diffusion), ("Q", &coupling), ("R", &control)] {
            if mat.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(name));
            }
        }
        let (coercivity, coupling_norm) = derived_constants(&diffusion, &coupling);
        if coercivity <= COERCIVITY_FLOOR {
            return Err(Error::NotCoercive(coercivity));
        }
        Ok(CoupledSystem { n, m, diffusion, coupling, control, coercivity, coupling_norm })
    }

    /// Same as [`CoupledSystem::new`] from row-major slices.
    pub fn from_row_slices(n: usize, m: usize, d: &[f64], q: &[f64], r: &[f64]) -> Result<Self> {
        if d.len() != n * n || q.len() != n * n || r.len() != n * m {
            return Err(Error::Dimension(format!(
                "expected {} + {} + {} entries for n={n}, m={m}",
                n * n,
                n * n,
                n * m
            )));
        }
        Self::new(
            n,
            m,
            DMatrix::from_row_slice(n, n, d),
            DMatrix::from_row_slice(n, n, q),
            DMatrix::from_row_slice(n, m, r),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.diffusion
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.control
    }

    /// Smallest eigenvalue of the symmetric part of `D`.
    pub fn coercivity(&self) -> f64 {
        self.coercivity
    }

    /// Spectral norm of `Q`.
    pub fn q_norm(&self) -> f64 {
        self.coupling_norm
    }

    /// Recomputes `(coercivity, q_norm)` from the stored matrices.
    pub fn recompute_constants(&self) -> (f64, f64) {
        derived_constants(&self.diffusion, &self.coupling)
    }
}

fn check_shape(name: &str, mat: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if mat.nrows() != rows || mat.ncols() != cols {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            mat.nrows(),
            mat.ncols()
        )));
    }
    Ok(())
}

fn derived_constants(d: &DMatrix<f64>, q: &DMatrix<f64>) -> (f64, f64) {
    let sym = (d + d.transpose()) * 0.5;
    let c = sym.symmetric_eigenvalues().min();
    let qn = q.singular_values().max();
    (c, qn)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_case() {
        let s = CoupledSystem::from_row_slices(
            2,
            2,
            &[1.0, 0.0, 0.0, 2.0],
            &[0.0; 4],
            &[1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        assert!((s.coercivity() - 1.0).abs() < 1e-12);
        assert_eq!(s.q_norm(), 0.0);
    }

    #[test]
    fn non_coercive_upper_triangular_rejected() {
        // symmetric part [[1, 1.5], [1.5, 1]] has eigenvalues 2.5 and -0.5
        let e = CoupledSystem::from_row_slices(2, 1, &[1.0, 3.0, 0.0, 1.0], &[0.0; 4], &[1.0, 0.0])
            .unwrap_err();
        match e {
            Error::NotCoercive(c) => assert!((c + 0.5).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scalar_case() {
        for (d, q) in [(0.3, -4.0), (2.0, 0.0), (1e-3, 7.5)] {
            let s = CoupledSystem::from_row_slices(1, 1, &[d], &[q], &[1.0]).unwrap();
            assert!((s.coercivity() - d).abs() <= 1e-12 * d);
            assert!((s.q_norm() - q.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            CoupledSystem::from_row_slices(1, 1, &[f64::NAN], &[0.0], &[1.0]),
            Err(Error::NonFinite("D"))
        ));
        assert!(CoupledSystem::new(0, 1, DMatrix::zeros(0, 0), DMatrix::zeros(0, 0), DMatrix::zeros(0, 1)).is_err());
        assert!(CoupledSystem::new(2, 1, DMatrix::identity(2, 2), DMatrix::zeros(2, 2), DMatrix::zeros(1, 2)).is_err());
        assert!(matches!(
            CoupledSystem::from_row_slices(1, 1, &[1e-11], &[0.0], &[1.0]),
            Err(Error::NotCoercive(_))
        ));
    }

    #[test]
    fn build_is_deterministic() {
        let d = [2.0, 0.7, -0.3, 1.5];
        let q = [0.1, -2.0, 3.0, 0.4];
        let a = CoupledSystem::from_row_slices(2, 1, &d, &q, &[1.0, 0.5]).unwrap();
        let b = CoupledSystem::from_row_slices(2, 1, &d, &q, &[1.0, 0.5]).unwrap();
        assert_eq!(a.coercivity().to_bits(), b.coercivity().to_bits());
        assert_eq!(a.q_norm().to_bits(), b.q_norm().to_bits());
        assert_eq!(a.recompute_constants(), (a.coercivity(), a.q_norm()));
    }
}
