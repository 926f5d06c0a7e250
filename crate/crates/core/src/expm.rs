//! Matrix exponential by scaling and squaring with the degree-13 Padé approximant.
//!
//! No eigendecomposition is involved, so defective and strongly non-normal
//! matrices (`gamma * D + Q` with `D` only coercive) are handled uniformly.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Backward-error bound for the [13/13] approximant in the 1-norm.
const THETA_13: f64 = 5.371920351148152;

/// Induced 1-norm (maximum absolute column sum).
pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(a)` for a square matrix.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension(alloc::format!(
            "expm needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("expm argument"));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let norm = norm1(a);
    let squarings = if norm > THETA_13 {
        libm::ceil(libm::log2(norm / THETA_13)).max(0.0) as i32
    } else {
        0
    };
    let scaled = a * libm::exp2(-(squarings as f64));

    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).ok_or(Error::InvalidArgument(
        "singular denominator in Pade approximant".into(),
    ))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain Taylor series, summed after scaling so that every term is small.
    fn taylor_oracle(a: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
        let n = a.nrows();
        let mut s = 0;
        while norm1(a) * libm::exp2(-(s as f64)) > 0.5 {
            s += 1;
        }
        let b = a * libm::exp2(-(s as f64));
        let mut sum = DMatrix::<f64>::identity(n, n);
        let mut term = DMatrix::<f64>::identity(n, n);
        for k in 1..terms {
            term = &term * &b / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn scalar_and_zero() {
        let e = expm(&DMatrix::from_element(1, 1, -1.0)).unwrap();
        assert!((e[(0, 0)] - libm::exp(-1.0)).abs() < 1e-15);
        let z = expm(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(z, DMatrix::identity(3, 3));
    }

    #[test]
    fn jordan_block_closed_form() {
        // exp(-(I + N)) with nilpotent N = [[0,1],[0,0]] is e^{-1} (I - N).
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, -1.0, 0.0, -1.0]);
        let e = expm(&m).unwrap();
        let c = libm::exp(-1.0);
        let want = DMatrix::from_row_slice(2, 2, &[c, -c, 0.0, c]);
        assert!((e - want).abs().max() < 1e-15);
    }

    #[test]
    fn matches_taylor_on_non_normal_matrices() {
        let cases = [
            DMatrix::from_row_slice(3, 3, &[-4.0, 30.0, 0.0, 0.0, -5.0, 7.0, 1.0, 0.0, -2.0]),
            DMatrix::from_row_slice(2, 2, &[-12.0, 3.0, -0.5, -25.0]),
            DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 0.0, 0.1]),
        ];
        for a in cases {
            let e = expm(&a).unwrap();
            let t = taylor_oracle(&a, 50);
            let scale = t.abs().max().max(1e-300);
            assert!((e - &t).abs().max() / scale < 1e-12);
        }
    }

    #[test]
    fn rejects_non_square() {
        assert!(expm(&DMatrix::zeros(2, 3)).is_err());
    }
}
