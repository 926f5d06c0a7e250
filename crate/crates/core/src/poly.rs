//! Dense real polynomials in the monomial basis: interpolation, products and
//! companion-matrix roots.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// `sum coeffs[i] * x^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    pub coeffs: Vec<f64>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Poly::zero();
        }
        let mut out = alloc::vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly { coeffs: out }
    }

    pub fn add_assign(&mut self, other: &Poly) {
        if self.coeffs.len() < other.coeffs.len() {
            self.coeffs.resize(other.coeffs.len(), 0.0);
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Drops leading coefficients below `rel_tol * max|c|`; returns the remaining degree
    /// (`None` for the zero polynomial).
    pub fn trim(&mut self, rel_tol: f64) -> Option<usize> {
        let scale = self.max_abs_coeff();
        if scale == 0.0 {
            self.coeffs.clear();
            return None;
        }
        while let Some(&c) = self.coeffs.last() {
            if c.abs() <= rel_tol * scale {
                self.coeffs.pop();
            } else {
                break;
            }
        }
        Some(self.coeffs.len() - 1)
    }

    /// All complex roots via the eigenvalues of the companion matrix.
    ///
    /// The variable is rescaled so the coefficients are balanced before the
    /// eigenvalue solve.
    pub fn roots(&self) -> Result<Vec<Complex<f64>>> {
        let mut p = self.clone();
        let deg = match p.trim(1e-14) {
            None | Some(0) => return Ok(Vec::new()),
            Some(d) => d,
        };
        let lead = p.coeffs[deg];
        // Fujiwara-style radius: p(rho u) has coefficients of comparable size.
        let rho = (0..deg)
            .filter(|&i| p.coeffs[i] != 0.0)
            .map(|i| libm::pow((p.coeffs[i] / lead).abs(), 1.0 / (deg - i) as f64))
            .fold(0.0, f64::max);
        let rho = if rho > 0.0 { rho } else { 1.0 };
        let mut comp = DMatrix::<f64>::zeros(deg, deg);
        for i in 1..deg {
            comp[(i, i - 1)] = 1.0;
        }
        for i in 0..deg {
            let scaled = p.coeffs[i] / lead / libm::pow(rho, (deg - i) as f64);
            comp[(i, deg - 1)] = -scaled;
        }
        let schur = comp.try_schur(f64::EPSILON, 100_000).ok_or(Error::Eigensolver)?;
        Ok(schur.complex_eigenvalues().iter().map(|z| z * rho).collect())
    }
}

/// `count` Chebyshev points of the first kind mapped to [a, b], increasing.
pub fn chebyshev_points(a: f64, b: f64, count: usize) -> Vec<f64> {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (0..count)
        .map(|j| {
            let theta = PI * (2 * (count - j) - 1) as f64 / (2 * count) as f64;
            mid + half * libm::cos(theta)
        })
        .collect()
}

/// Interpolating polynomial of degree `< xs.len()` through `(xs, ys)`.
pub fn interpolate(xs: &[f64], ys: &[f64]) -> Result<Poly> {
    let n = xs.len();
    if n == 0 || ys.len() != n {
        return Err(Error::Dimension("interpolation needs matching, nonempty samples".into()));
    }
    let vander = DMatrix::from_fn(n, n, |i, j| libm::pow(xs[i], j as f64));
    let rhs = DVector::from_column_slice(ys);
    let c = vander
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidArgument("interpolation nodes are not distinct".into()))?;
    Ok(Poly { coeffs: c.iter().copied().collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_reproduces_cubic() {
        let xs = chebyshev_points(-1.0, 1.0, 4);
        let f = |x: f64| 2.0 - x + 0.5 * x * x * x;
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let p = interpolate(&xs, &ys).unwrap();
        for c in p.coeffs.iter().zip([2.0, -1.0, 0.0, 0.5]) {
            assert!((c.0 - c.1).abs() < 1e-14);
        }
    }

    #[test]
    fn roots_of_product() {
        // (x - 3)(x + 0.5)(x^2 + 1)
        let p = Poly { coeffs: alloc::vec![-3.0, 1.0] }
            .mul(&Poly { coeffs: alloc::vec![0.5, 1.0] })
            .mul(&Poly { coeffs: alloc::vec![1.0, 0.0, 1.0] });
        let mut real: Vec<f64> = p.roots().unwrap().iter().filter(|z| z.im.abs() < 1e-9).map(|z| z.re).collect();
        real.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(real.len(), 2);
        assert!((real[0] + 0.5).abs() < 1e-12 && (real[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_and_zero_have_no_roots() {
        assert!(Poly { coeffs: alloc::vec![4.0] }.roots().unwrap().is_empty());
        assert!(Poly::zero().roots().unwrap().is_empty());
        let mut z = Poly { coeffs: alloc::vec![0.0, 0.0] };
        assert_eq!(z.trim(1e-14), None);
    }
}
