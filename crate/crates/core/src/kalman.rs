//! Kalman rank condition over the whole spectrum.
//!
//! The condition `rank K_p = n` must hold for every eigenvalue `gamma_p` of the
//! Stokes/Laplace operator, an infinite family. The set of `gamma` where the rank
//! of `K(gamma) = [R | (gamma D + Q) R | ... ]` drops is the common real zero set
//! of its `n x n` minors, which are polynomials in `gamma`. That set is finite
//! unless every minor vanishes identically, so a finite list of roots checked
//! against the (discrete, unbounded) spectrum settles the question.
//!
//! Minors are taken of the shifted Krylov matrix built from
//! `gamma (D - tr(D)/n I) + Q`. Krylov spaces are invariant under shifts, so the
//! rank and the zero set are unchanged, while the columns no longer blow up like
//! `gamma^(n-1)` when `D` is close to a multiple of the identity.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::poly::{chebyshev_points, interpolate, Poly};
use crate::spectral::SpectralModel;
use crate::system::CoupledSystem;

/// Relative singular-value threshold of the numerical rank.
pub const RANK_RTOL: f64 = 1e-10;
/// Relative tolerance for matching an eigenvalue to a bad root.
pub const MATCH_RTOL: f64 = 1e-8;
/// Largest `n` accepted by the certificate.
/// Refined roots below this fraction of the anchor are the root at the origin.
pub const ZERO_ROOT_RTOL: f64 = 1e-8;
pub const MAX_CERTIFICATE_N: usize = 8;
/// Above this many minors the squared sum is interpolated directly as `det(K K^T)`.
pub const MAX_ENUMERATED_MINORS: usize = 4096;

/// `K_p = [R | (gamma D + Q) R | ... | (gamma D + Q)^(n-1) R]`, blocks by repeated
/// multiplication.
pub fn kalman_matrix(sys: &CoupledSystem, gamma: f64) -> Result<DMatrix<f64>> {
    check_gamma(gamma)?;
    let a = sys.d() * gamma + sys.q();
    Ok(krylov(&a, sys.r(), sys.n(), 1.0))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

/// Krylov matrix `[R | (A/s) R | ... | (A/s)^(n-1) R]`.
fn krylov(a: &DMatrix<f64>, r: &DMatrix<f64>, n: usize, scale: f64) -> DMatrix<f64> {
    let m = r.ncols();
    let mut out = DMatrix::zeros(n, n * m);
    let mut block = r.clone();
    for i in 0..n {
        out.view_mut((0, i * m), (n, m)).copy_from(&block);
        if i + 1 < n {
            block = a * &block / scale;
        }
    }
    out
}

fn shifted_generator(sys: &CoupledSystem, gamma: f64) -> DMatrix<f64> {
    let n = sys.n();
    let mean = sys.d().trace() / n as f64;
    (sys.d() - DMatrix::identity(n, n) * mean) * gamma + sys.q()
}

/// Shifted Krylov matrix with every block scaled to unit size; same column span as `K_p`.
fn normalized_kalman(sys: &CoupledSystem, gamma: f64) -> DMatrix<f64> {
    let a = shifted_generator(sys, gamma);
    let scale = a.norm().max(1.0);
    krylov(&a, sys.r(), sys.n(), scale)
}

fn rank_ratio(k: &DMatrix<f64>) -> (f64, usize) {
    let sv = k.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return (0.0, 0);
    }
    let rank = sv.iter().filter(|&&s| s > RANK_RTOL * smax).count();
    let smin = if sv.len() < k.nrows() { 0.0 } else { sv.min() };
    (smin / smax, rank)
}

/// Numerical rank of `K_p` at `gamma`: singular values above `1e-10 * sigma_max`
/// of the block-normalized shifted Krylov matrix.
pub fn rank_at(sys: &CoupledSystem, gamma: f64) -> Result<usize> {
    check_gamma(gamma)?;
    Ok(rank_ratio(&normalized_kalman(sys, gamma)).1)
}

/// Unit vector `z` minimizing `|K_p^T z|`, and the residual `|K_p^T z|` for the raw `K_p`.
pub fn kernel_vector(sys: &CoupledSystem, gamma: f64) -> Result<(DVector<f64>, f64)> {
    check_gamma(gamma)?;
    let k = normalized_kalman(sys, gamma);
    let svd = k.clone().svd(true, false);
    let u = svd.u.as_ref().ok_or(Error::Eigensolver)?;
    let z: DVector<f64> = if svd.singular_values.len() < sys.n() {
        // wide matrix with fewer singular values than rows cannot happen (n <= n m)
        return Err(Error::Eigensolver);
    } else {
        let imin = svd.singular_values.imin();
        u.column(imin).into_owned()
    };
    let residual = (kalman_matrix(sys, gamma)?.transpose() * &z).norm();
    Ok((z, residual))
}

/// `n x n` minors of the shifted Kalman matrix as polynomials in the scaled variable
/// `s = (gamma - center) / half`.
#[derive(Clone, Debug)]
pub struct MinorPolynomials {
    pub center: f64,
    pub half: f64,
    /// Column subsets, one per minor.
    pub columns: Vec<Vec<usize>>,
    pub polys: Vec<Poly>,
    /// `n (n - 1)`.
    pub degree_bound: usize,
}

impl MinorPolynomials {
    pub fn to_scaled(&self, gamma: f64) -> f64 {
        (gamma - self.center) / self.half
    }

    pub fn eval(&self, index: usize, gamma: f64) -> f64 {
        self.polys[index].eval(self.to_scaled(gamma))
    }

    /// The same minor evaluated directly from the matrix.
    pub fn direct(&self, sys: &CoupledSystem, index: usize, gamma: f64) -> f64 {
        let s = shifted_kalman(sys, gamma);
        minor(&s, &self.columns[index])
    }

    /// `g = sum of squared minors`, equal to `det(S S^T)` by Cauchy-Binet.
    pub fn squared_sum(&self) -> Poly {
        let mut g = Poly::zero();
        for p in &self.polys {
            g.add_assign(&p.mul(p));
        }
        g
    }
}

fn shifted_kalman(sys: &CoupledSystem, gamma: f64) -> DMatrix<f64> {
    krylov(&shifted_generator(sys, gamma), sys.r(), sys.n(), 1.0)
}

fn minor(s: &DMatrix<f64>, cols: &[usize]) -> f64 {
    let n = s.nrows();
    DMatrix::from_fn(n, n, |i, j| s[(i, cols[j])]).determinant()
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Sample interval `[anchor, anchor + n(n-1) + 1]` in the variable `s in [-1, 1]`.
fn sample_frame(n: usize, anchor: f64) -> (f64, f64) {
    let width = (n * (n - 1) + 1) as f64;
    (anchor + 0.5 * width, 0.5 * width)
}

/// Interpolates every minor from `n(n-1)+1` Chebyshev samples.
pub fn minor_polynomials(sys: &CoupledSystem, anchor: f64) -> Result<MinorPolynomials> {
    let n = sys.n();
    let cols = n * sys.m();
    if binomial(cols, n) > MAX_ENUMERATED_MINORS {
        return Err(Error::InvalidArgument(alloc::format!(
            "{} minors exceed the enumeration limit",
            binomial(cols, n)
        )));
    }
    let degree_bound = n * (n - 1);
    let (center, half) = sample_frame(n, anchor);
    let ss = chebyshev_points(-1.0, 1.0, degree_bound + 1);
    let mats: Vec<DMatrix<f64>> = ss.iter().map(|s| shifted_kalman(sys, center + half * s)).collect();
    let columns = combinations(cols, n);
    let mut polys = Vec::with_capacity(columns.len());
    for c in &columns {
        let ys: Vec<f64> = mats.iter().map(|m| minor(m, c)).collect();
        polys.push(interpolate(&ss, &ys)?);
    }
    Ok(MinorPolynomials { center, half, columns, polys, degree_bound })
}

/// `g(gamma) = det(S S^T)` interpolated from `2 n (n-1) + 1` samples, in the same
/// scaled variable as [`minor_polynomials`].
pub fn gram_determinant_polynomial(sys: &CoupledSystem, anchor: f64) -> Result<(Poly, f64, f64)> {
    let n = sys.n();
    let (center, half) = sample_frame(n, anchor);
    let ss = chebyshev_points(-1.0, 1.0, 2 * n * (n - 1) + 1);
    let ys: Vec<f64> = ss
        .iter()
        .map(|s| {
            let k = shifted_kalman(sys, center + half * s);
            (&k * k.transpose()).determinant()
        })
        .collect();
    Ok((interpolate(&ss, &ys)?, center, half))
}

/// A confirmed rank drop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BadRoot {
    pub gamma: f64,
    pub rank: usize,
}

/// The finite set of positive `gamma` where `rank K(gamma) < n`.
#[derive(Clone, Debug, PartialEq)]
pub struct BadSet {
    pub roots: Vec<BadRoot>,
    /// Rank is below `n` for every `gamma`.
    pub everywhere: bool,
}

/// Finds the bad set: companion roots of the squared-sum polynomial (and of the
/// dominant minor, whose roots are simple), refined on the singular values of the
/// Kalman matrix and kept only when [`rank_at`] confirms the drop.
pub fn bad_set(sys: &CoupledSystem, anchor: f64) -> Result<BadSet> {
    let n = sys.n();
    let (center, half) = sample_frame(n, anchor);
    let samples = chebyshev_points(center - half, center + half, n * (n - 1) + 1);
    let mut all_deficient = true;
    for &g in &samples {
        if g <= 0.0 || rank_at(sys, g)? == n {
            all_deficient = false;
            break;
        }
    }
    if all_deficient {
        // A nonzero polynomial of degree <= n(n-1) cannot vanish at n(n-1)+1 points.
        return Ok(BadSet { roots: Vec::new(), everywhere: true });
    }

    let mut candidates: Vec<(f64, f64)> = Vec::new();
    let mut push_roots = |p: &Poly| -> Result<()> {
        for z in p.roots()? {
            if z.im.abs() <= 1e-3 * (1.0 + libm::hypot(z.re, z.im)) {
                candidates.push((center + half * z.re, half * z.im.abs()));
            }
        }
        Ok(())
    };
    match minor_polynomials(sys, anchor) {
        Ok(minors) => {
            push_roots(&minors.squared_sum())?;
            if let Some(dominant) = minors
                .polys
                .iter()
                .max_by(|a, b| a.max_abs_coeff().partial_cmp(&b.max_abs_coeff()).unwrap())
            {
                push_roots(dominant)?;
            }
        }
        Err(Error::InvalidArgument(_)) => {
            let (g, _, _) = gram_determinant_polynomial(sys, anchor)?;
            push_roots(&g)?;
        }
        Err(e) => return Err(e),
    }

    let mut roots: Vec<BadRoot> = Vec::new();
    for (guess, spread) in candidates {
        let width = (1e-6 * (1.0 + guess.abs())).max(4.0 * spread);
        let gamma = refine_root(sys, guess - width, guess + width);
        // a root at gamma = 0 refines onto the clamp at the origin
        if !(gamma.is_finite() && gamma > ZERO_ROOT_RTOL * anchor) {
            continue;
        }
        let rank = rank_at(sys, gamma)?;
        if rank < n && !roots.iter().any(|r| (r.gamma - gamma).abs() <= MATCH_RTOL * (1.0 + gamma)) {
            roots.push(BadRoot { gamma, rank });
        }
    }
    roots.sort_by(|a, b| a.gamma.partial_cmp(&b.gamma).unwrap());
    Ok(BadSet { roots, everywhere: false })
}

/// Golden-section minimization of `sigma_min / sigma_max` over `[lo, hi]`.
fn refine_root(sys: &CoupledSystem, lo: f64, hi: f64) -> f64 {
    let lo = lo.max(f64::MIN_POSITIVE);
    if hi <= lo {
        return f64::NAN;
    }
    let f = |g: f64| rank_ratio(&normalized_kalman(sys, g)).0;
    let phi = 0.5 * (libm::sqrt(5.0) - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a) <= 4.0 * f64::EPSILON * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd { c } else { d }
}

/// Outcome of the certificate.
#[derive(Clone, Debug, PartialEq)]
pub enum KalmanVerdict {
    /// No eigenvalue hits the bad set. `bad_roots` are the rank drops that fall
    /// between eigenvalues.
    Controllable { bad_roots: Vec<BadRoot>, tolerance: f64 },
    /// The rank drops at eigenvalue `gamma` of mode index `mode` (0-based);
    /// `z0` spans part of `ker K_p^T`.
    Fails { mode: usize, gamma: f64, z0: DVector<f64>, residual: f64 },
}

impl KalmanVerdict {
    pub fn is_controllable(&self) -> bool {
        matches!(self, KalmanVerdict::Controllable { .. })
    }
}

/// Certificate over all eigenvalues of `model`.
pub fn kalman_certificate(sys: &CoupledSystem, model: &SpectralModel) -> Result<KalmanVerdict> {
    let gammas: Vec<f64> = model.gammas().collect();
    certify_spectrum(sys, &gammas)
}

/// Certificate over an explicit nondecreasing list of eigenvalues.
pub fn certify_spectrum(sys: &CoupledSystem, gammas: &[f64]) -> Result<KalmanVerdict> {
    if sys.n() > MAX_CERTIFICATE_N {
        return Err(Error::InvalidArgument(alloc::format!(
            "certificate supports n <= {MAX_CERTIFICATE_N}"
        )));
    }
    let first = *gammas.first().ok_or_else(|| Error::InvalidArgument("empty spectrum".into()))?;
    check_gamma(first)?;
    let bad = bad_set(sys, first)?;
    let fails = |mode: usize, gamma: f64| -> Result<KalmanVerdict> {
        let (z0, residual) = kernel_vector(sys, gamma)?;
        Ok(KalmanVerdict::Fails { mode, gamma, z0, residual })
    };
    if bad.everywhere {
        return fails(0, first);
    }
    for (mode, &gamma) in gammas.iter().enumerate() {
        let near = bad.roots.iter().any(|r| (gamma - r.gamma).abs() <= MATCH_RTOL * (1.0 + gamma));
        if near && rank_at(sys, gamma)? < sys.n() {
            return fails(mode, gamma);
        }
    }
    Ok(KalmanVerdict::Controllable { bad_roots: bad.roots, tolerance: MATCH_RTOL })
}

/// Adjoint solution `phi(t) = exp(-(gamma D^T + Q^T)(T - t)) z0 * phi_p0` that the
/// observation `R^T phi` never sees.
#[derive(Clone, Debug)]
pub struct InvisibleSolution {
    pub mode: usize,
    pub gamma: f64,
    pub z0: DVector<f64>,
    pub horizon: f64,
    adjoint_generator: DMatrix<f64>,
    control_t: DMatrix<f64>,
}

impl InvisibleSolution {
    /// Coefficient vector (one entry per equation) of `phi(t)` on the eigenfunction.
    pub fn coefficients(&self, t: f64) -> Result<DVector<f64>> {
        let e = expm(&(&self.adjoint_generator * (-(self.horizon - t))))?;
        Ok(e * &self.z0)
    }

    /// `|R^T phi(t)|` relative to the (unit) eigenfunction norm.
    pub fn observation_norm(&self, t: f64) -> Result<f64> {
        Ok((&self.control_t * self.coefficients(t)?).norm())
    }

    /// `|phi(0)|`.
    pub fn initial_norm(&self) -> Result<f64> {
        Ok(self.coefficients(0.0)?.norm())
    }
}

pub fn invisible_adjoint_solution(
    sys: &CoupledSystem,
    model: &SpectralModel,
    mode: usize,
    z0: &DVector<f64>,
    horizon: f64,
) -> Result<InvisibleSolution> {
    if mode >= model.len() {
        return Err(Error::InvalidArgument(alloc::format!("mode {mode} not in model")));
    }
    if z0.len() != sys.n() {
        return Err(Error::Dimension(alloc::format!("z0 has {} entries, n = {}", z0.len(), sys.n())));
    }
    if (z0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument("z0 must have unit norm".into()));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let gamma = model.gamma(mode);
    let residual = (kalman_matrix(sys, gamma)?.transpose() * z0).norm();
    if residual > 1e-8 {
        return Err(Error::NotInKernel(residual));
    }
    Ok(InvisibleSolution {
        mode,
        gamma,
        z0: z0.clone(),
        horizon,
        adjoint_generator: (sys.d() * gamma + sys.q()).transpose(),
        control_t: sys.r().transpose(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_1_SQRT_2, PI};

    fn sys(n: usize, m: usize, d: &[f64], q: &[f64], r: &[f64]) -> CoupledSystem {
        CoupledSystem::from_row_slices(n, m, d, q, r).unwrap()
    }

    #[test]
    fn kalman_matrix_case2() {
        let s = sys(2, 2, &[1., 0., 0., 2.], &[0.; 4], &[1., 0., 0., 1.]);
        let k = kalman_matrix(&s, 3.0).unwrap();
        let want = DMatrix::from_row_slice(2, 4, &[1., 0., 3., 0., 0., 1., 0., 6.]);
        assert_eq!(k, want);
        assert_eq!(rank_at(&s, 3.0).unwrap(), 2);
    }

    #[test]
    fn kalman_matrix_cascade_and_scalar() {
        let s = sys(2, 1, &[1., 0., 0., 1.], &[0., 0., 1., 0.], &[1., 0.]);
        assert_eq!(kalman_matrix(&s, 2.0).unwrap(), DMatrix::from_row_slice(2, 2, &[1., 2., 0., 1.]));
        assert_eq!(rank_at(&s, 2.0).unwrap(), 2);
        let one = sys(1, 3, &[2.0], &[5.0], &[1., -2., 0.5]);
        assert_eq!(kalman_matrix(&one, 7.0).unwrap(), DMatrix::from_row_slice(1, 3, &[1., -2., 0.5]));
    }

    #[test]
    fn repeated_column_has_rank_one() {
        let s = sys(2, 1, &[1., 0., 0., 1.], &[0.; 4], &[1., 1.]);
        for g in [0.5, 1.0, 3.0, 1e4] {
            assert_eq!(rank_at(&s, g).unwrap(), 1);
        }
        assert!(rank_at(&s, 0.0).is_err());
    }

    #[test]
    fn case1_cascade_is_controllable() {
        let s = sys(2, 1, &[1., 0., 0., 1.], &[0., 1., 0., 0.], &[0., 1.]);
        let model = SpectralModel::dirichlet_interval(50, PI).unwrap();
        let v = kalman_certificate(&s, &model).unwrap();
        assert!(matches!(v, KalmanVerdict::Controllable { ref bad_roots, .. } if bad_roots.is_empty()));
    }

    #[test]
    fn equal_viscosities_single_control_fails_at_first_mode() {
        let s = sys(2, 1, &[1., 0., 0., 1.], &[0.; 4], &[1., 1.]);
        let model = SpectralModel::dirichlet_interval(10, PI).unwrap();
        match kalman_certificate(&s, &model).unwrap() {
            KalmanVerdict::Fails { mode, z0, residual, .. } => {
                assert_eq!(mode, 0);
                let sign = z0[0].signum();
                assert!((z0[0] * sign - FRAC_1_SQRT_2).abs() < 1e-12);
                assert!((z0[1] * sign + FRAC_1_SQRT_2).abs() < 1e-12);
                assert!(residual <= 1e-9);
            }
            v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn isolated_bad_root_between_and_on_eigenvalues() {
        // (gamma D + Q) = diag(gamma, 2 gamma + q2), R = (1, 1): det K = gamma + q2.
        let model = SpectralModel::dirichlet_interval(20, PI).unwrap();
        let between = sys(2, 1, &[1., 0., 0., 2.], &[0., 0., 0., -3.], &[1., 1.]);
        match kalman_certificate(&between, &model).unwrap() {
            KalmanVerdict::Controllable { bad_roots, .. } => {
                assert_eq!(bad_roots.len(), 1);
                assert!((bad_roots[0].gamma - 3.0).abs() < 1e-9);
                assert_eq!(bad_roots[0].rank, 1);
            }
            v => panic!("unexpected {v:?}"),
        }
        let on = sys(2, 1, &[1., 0., 0., 2.], &[0., 0., 0., -4.], &[1., 1.]);
        match kalman_certificate(&on, &model).unwrap() {
            KalmanVerdict::Fails { mode, gamma, residual, .. } => {
                assert_eq!(mode, 1);
                assert_eq!(gamma, 4.0);
                assert!(residual <= 1e-9);
            }
            v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn root_at_origin_is_not_bad() {
        // det K = gamma: the only root is gamma = 0
        let s = sys(2, 1, &[1., 0., 0., 2.], &[0.; 4], &[1., 1.]);
        let bad = bad_set(&s, 1.0).unwrap();
        assert!(bad.roots.is_empty() && !bad.everywhere, "{bad:?}");
    }

    #[test]
    fn large_bad_root_is_found() {
        // det = gamma - 400 after the same construction; mode 20 has gamma = 400.
        let model = SpectralModel::dirichlet_interval(30, PI).unwrap();
        let s = sys(2, 1, &[1., 0., 0., 2.], &[0., 0., 0., -400.], &[1., 1.]);
        match kalman_certificate(&s, &model).unwrap() {
            KalmanVerdict::Fails { mode, .. } => assert_eq!(mode, 19),
            v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn minor_polynomials_match_direct_evaluation() {
        let s = sys(3, 1, &[1., 0.2, 0., 0., 2., 0.3, 0.1, 0., 3.], &[0., 1., 0., 0.5, 0., -1., 0., 2., 0.], &[1., 0., 1.]);
        let mp = minor_polynomials(&s, 1.0).unwrap();
        assert_eq!(mp.degree_bound, 6);
        for p in &mp.polys {
            assert!(p.coeffs.len() <= mp.degree_bound + 1);
        }
        for g in [0.3, 2.5, 7.0, 11.0, 25.0] {
            for j in 0..mp.polys.len() {
                let want = mp.direct(&s, j, g);
                let got = mp.eval(j, g);
                assert!((want - got).abs() <= 1e-9 * want.abs().max(1.0), "g={g}: {want} vs {got}");
            }
        }
        // Cauchy-Binet: both routes produce the same squared sum.
        let (gram, _, _) = gram_determinant_polynomial(&s, 1.0).unwrap();
        let sq = mp.squared_sum();
        for x in [-1.0, -0.3, 0.2, 0.9, 1.5] {
            let (a, b) = (gram.eval(x), sq.eval(x));
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0));
        }
    }

    #[test]
    fn invisible_solution_is_unobserved() {
        let s = sys(2, 1, &[1., 0., 0., 1.], &[0.; 4], &[1., 1.]);
        let model = SpectralModel::dirichlet_interval(5, PI).unwrap();
        let z0 = DVector::from_vec(alloc::vec![FRAC_1_SQRT_2, -FRAC_1_SQRT_2]);
        let phi = invisible_adjoint_solution(&s, &model, 0, &z0, 1.0).unwrap();
        for i in 0..100 {
            assert!(phi.observation_norm(i as f64 / 99.0).unwrap() <= 1e-10);
        }
        assert!((phi.initial_norm().unwrap() - libm::exp(-1.0)).abs() < 1e-14);
        let e1 = DVector::from_vec(alloc::vec![1.0, 0.0]);
        let good = sys(2, 2, &[1., 0., 0., 2.], &[0.; 4], &[1., 0., 0., 1.]);
        assert!(matches!(
            invisible_adjoint_solution(&good, &model, 0, &e1, 1.0),
            Err(Error::NotInKernel(_))
        ));
    }
}
