//! Exact per-mode evolution of the coupled system and of its adjoint.
//!
//! Mode `k` evolves by `a_k' + (gamma_k D + Q) a_k = 0`; the adjoint uses the
//! transposed matrices. Both are integrated with a single matrix exponential,
//! so the uncontrolled dynamics carry no time-stepping error.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::expm::{expm, norm1};
use crate::spectral::{is_low, SpectralModel};
use crate::system::CoupledSystem;

/// Largest admissible `dt * |M|_1` for one exponential.
pub const MAX_STEP_NORM: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Adjoint,
}

/// `gamma D + Q` (forward) or `gamma D^T + Q^T` (adjoint).
pub fn mode_matrix(sys: &CoupledSystem, gamma: f64, dir: Direction) -> Result<DMatrix<f64>> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("gamma must be positive, got {gamma}")));
    }
    let m = sys.d() * gamma + sys.q();
    Ok(match dir {
        Direction::Forward => m,
        Direction::Adjoint => m.transpose(),
    })
}

/// `exp(-dt * M)` for the mode matrix of `gamma`.
pub fn propagator(sys: &CoupledSystem, gamma: f64, dt: f64, dir: Direction) -> Result<DMatrix<f64>> {
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("dt must be nonnegative, got {dt}")));
    }
    let m = mode_matrix(sys, gamma, dir)?;
    let size = dt * norm1(&m);
    if size > MAX_STEP_NORM {
        return Err(Error::StepTooLarge(size));
    }
    expm(&(m * -dt))
}

/// Spectral coefficients of a state in `H^n`: column `j` of `coeffs` holds the
/// vector `a_k` (one entry per equation) for mode `modes[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeState {
    modes: Vec<usize>,
    coeffs: DMatrix<f64>,
    pub time: f64,
}

impl ModeState {
    pub fn zeros(n: usize, modes: Vec<usize>, time: f64) -> Self {
        let k = modes.len();
        ModeState { modes, coeffs: DMatrix::zeros(n, k), time }
    }

    pub fn new(modes: Vec<usize>, coeffs: DMatrix<f64>, time: f64) -> Result<Self> {
        if coeffs.ncols() != modes.len() {
            return Err(Error::Dimension(alloc::format!(
                "{} coefficient columns for {} modes",
                coeffs.ncols(),
                modes.len()
            )));
        }
        let mut seen = modes.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != modes.len() {
            return Err(Error::InvalidArgument("repeated mode index in state".into()));
        }
        Ok(ModeState { modes, coeffs, time })
    }

    pub fn n(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.coeffs
    }

    /// Coefficient vector of model mode `mode`, if retained.
    pub fn coefficient(&self, mode: usize) -> Option<DVector<f64>> {
        self.modes.iter().position(|&m| m == mode).map(|j| self.coeffs.column(j).into_owned())
    }

    /// `sum_k |a_k|^2`, the squared `H^n` norm by Parseval.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ModeState { modes: self.modes.clone(), coeffs: &self.coeffs * factor, time: self.time }
    }

    /// Re-expresses the state on `target`, zero on modes it does not carry.
    /// Fails if a mode with a nonzero coefficient is missing from `target`.
    pub fn embed(&self, target: &[usize]) -> Result<Self> {
        let mut out = ModeState::zeros(self.n(), target.to_vec(), self.time);
        for (j, &mode) in self.modes.iter().enumerate() {
            match target.iter().position(|&t| t == mode) {
                Some(i) => out.coeffs.set_column(i, &self.coeffs.column(j)),
                None if self.coeffs.column(j).iter().all(|&x| x == 0.0) => {}
                None => {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "mode {mode} carries energy but is not retained"
                    )))
                }
            }
        }
        Ok(out)
    }

    /// Componentwise inner product `sum_k <a_k, b_k>` over shared modes.
    pub fn dot(&self, other: &ModeState) -> f64 {
        let mut acc = 0.0;
        for (j, &mode) in self.modes.iter().enumerate() {
            if let Some(i) = other.modes.iter().position(|&m| m == mode) {
                acc += self.coeffs.column(j).dot(&other.coeffs.column(i));
            }
        }
        acc
    }

    /// Values of `y^(i)(x)` at quadrature node `node`; entry `[i][c]` is component `c`
    /// of equation `i`.
    pub fn field_at(&self, model: &SpectralModel, node: usize) -> Vec<[f64; 2]> {
        let mut out = alloc::vec![[0.0; 2]; self.n()];
        for (j, &mode) in self.modes.iter().enumerate() {
            let phi = model.eval(mode, node);
            for (i, slot) in out.iter_mut().enumerate() {
                let a = self.coeffs[(i, j)];
                slot[0] += a * phi[0];
                slot[1] += a * phi[1];
            }
        }
        out
    }

    /// Squared `L^2` norm of the reconstructed field under the model quadrature.
    pub fn quadrature_norm_sq(&self, model: &SpectralModel) -> f64 {
        let w = model.weights();
        (0..w.len())
            .map(|node| {
                let v = self.field_at(model, node);
                w[node] * v.iter().map(|c| c[0] * c[0] + c[1] * c[1]).sum::<f64>()
            })
            .sum()
    }
}

/// Exact evolution over `dt` (forward in time for the state, backward for the adjoint).
pub fn propagate(
    sys: &CoupledSystem,
    model: &SpectralModel,
    state: &ModeState,
    dt: f64,
    dir: Direction,
) -> Result<ModeState> {
    if state.n() != sys.n() {
        return Err(Error::Dimension("state and system disagree on n".into()));
    }
    let mut out = state.clone();
    for (j, &mode) in state.modes.iter().enumerate() {
        let e = propagator(sys, model.gamma(mode), dt, dir)?;
        let col = &e * state.coeffs.column(j);
        out.coeffs.set_column(j, &col);
    }
    out.time = match dir {
        Direction::Forward => state.time + dt,
        Direction::Adjoint => state.time - dt,
    };
    Ok(out)
}

fn project(state: &ModeState, model: &SpectralModel, keep: impl Fn(f64) -> bool) -> ModeState {
    let idx: Vec<usize> = (0..state.modes.len()).filter(|&j| keep(model.gamma(state.modes[j]))).collect();
    let modes = idx.iter().map(|&j| state.modes[j]).collect();
    let coeffs = DMatrix::from_fn(state.n(), idx.len(), |i, c| state.coeffs[(i, idx[c])]);
    ModeState { modes, coeffs, time: state.time }
}

/// Orthogonal projection onto modes with `gamma <= cutoff`.
pub fn project_low(state: &ModeState, model: &SpectralModel, cutoff: f64) -> ModeState {
    project(state, model, |g| is_low(g, cutoff))
}

/// Complement of [`project_low`].
pub fn project_high(state: &ModeState, model: &SpectralModel, cutoff: f64) -> ModeState {
    project(state, model, |g| !is_low(g, cutoff))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DissipationRow {
    pub t: f64,
    pub max_ratio: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DissipationReport {
    pub cutoff: f64,
    pub trials: usize,
    pub rows: Vec<DissipationRow>,
}

impl DissipationReport {
    /// True when every observed ratio is within `bound * (1 + rel) + abs`.
    pub fn holds(&self, rel: f64, abs: f64) -> bool {
        self.rows.iter().all(|r| r.max_ratio <= r.bound * (1.0 + rel) + abs)
    }
}

/// Random unit-norm initial data supported on modes `gamma > cutoff`, evolved freely;
/// reports the worst ratio `|y(t)| / |y0|` next to `exp((|Q| - c cutoff) t)`.
pub fn dissipation_check<R: Rng + ?Sized>(
    sys: &CoupledSystem,
    model: &SpectralModel,
    cutoff: f64,
    times: &[f64],
    trials: usize,
    rng: &mut R,
) -> Result<DissipationReport> {
    if let Some(&t) = times.iter().find(|&&t| !(0.0..=1.0).contains(&t)) {
        return Err(Error::InvalidArgument(alloc::format!("sample time {t} outside [0, 1]")));
    }
    let high: Vec<usize> = (0..model.len()).filter(|&i| !is_low(model.gamma(i), cutoff)).collect();
    if high.is_empty() {
        return Err(Error::InvalidArgument(alloc::format!(
            "no model modes above the cutoff {cutoff}"
        )));
    }
    let n = sys.n();
    // propagators[t][j]
    let mut propagators: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(times.len());
    for &t in times {
        let mut per_mode = Vec::with_capacity(high.len());
        for &mode in &high {
            per_mode.push(propagator(sys, model.gamma(mode), t, Direction::Forward)?);
        }
        propagators.push(per_mode);
    }
    let mut worst = alloc::vec![0.0f64; times.len()];
    for _ in 0..trials {
        let mut y0 = DMatrix::<f64>::from_fn(n, high.len(), |_, _| rng.random_range(-1.0..1.0));
        let norm = y0.norm();
        if norm == 0.0 {
            continue;
        }
        y0 /= norm;
        for (ti, per_mode) in propagators.iter().enumerate() {
            let mut sq = 0.0;
            for (j, e) in per_mode.iter().enumerate() {
                sq += (e * y0.column(j)).norm_squared();
            }
            worst[ti] = worst[ti].max(libm::sqrt(sq));
        }
    }
    let rate = sys.q_norm() - sys.coercivity() * cutoff;
    let rows = times
        .iter()
        .zip(worst)
        .map(|(&t, max_ratio)| DissipationRow { t, max_ratio, bound: libm::exp(rate * t) })
        .collect();
    Ok(DissipationReport { cutoff, trials, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use rand::SeedableRng;

    fn scalar() -> CoupledSystem {
        CoupledSystem::from_row_slices(1, 1, &[1.0], &[0.0], &[1.0]).unwrap()
    }

    #[test]
    fn mode_matrix_examples() {
        let id = CoupledSystem::from_row_slices(2, 1, &[1., 0., 0., 1.], &[0.; 4], &[1., 0.]).unwrap();
        assert_eq!(mode_matrix(&id, 4.0, Direction::Forward).unwrap(), DMatrix::identity(2, 2) * 4.0);
        let cascade = CoupledSystem::from_row_slices(2, 1, &[1., 0., 0., 1.], &[0., 0., 1., 0.], &[1., 0.]).unwrap();
        assert_eq!(
            mode_matrix(&cascade, 2.0, Direction::Forward).unwrap(),
            DMatrix::from_row_slice(2, 2, &[2., 0., 1., 2.])
        );
        assert_eq!(
            mode_matrix(&cascade, 2.0, Direction::Adjoint).unwrap(),
            DMatrix::from_row_slice(2, 2, &[2., 1., 0., 2.])
        );
        assert!(mode_matrix(&id, 0.0, Direction::Forward).is_err());
    }

    #[test]
    fn scalar_decay_and_identity_step() {
        let model = SpectralModel::dirichlet_interval(3, PI).unwrap();
        let s = ModeState::new(alloc::vec![0], DMatrix::from_element(1, 1, 1.0), 0.0).unwrap();
        let out = propagate(&scalar(), &model, &s, 1.0, Direction::Forward).unwrap();
        assert!((out.coeffs()[(0, 0)] - libm::exp(-1.0)).abs() < 1e-15);
        assert_eq!(out.time, 1.0);
        let same = propagate(&scalar(), &model, &s, 0.0, Direction::Forward).unwrap();
        assert_eq!(same.coeffs(), s.coeffs());
    }

    #[test]
    fn jordan_mode_against_series() {
        // D = I, Q = [[0,1],[0,0]], gamma = 1: exp(-(I + N)) (0,1) = e^{-1} (-1, 1).
        let sys = CoupledSystem::from_row_slices(2, 1, &[1., 0., 0., 1.], &[0., 1., 0., 0.], &[0., 1.]).unwrap();
        let model = SpectralModel::dirichlet_interval(1, PI).unwrap();
        let s = ModeState::new(alloc::vec![0], DMatrix::from_column_slice(2, 1, &[0.0, 1.0]), 0.0).unwrap();
        let out = propagate(&sys, &model, &s, 1.0, Direction::Forward).unwrap();
        let c = libm::exp(-1.0);
        assert!((out.coeffs()[(0, 0)] + c).abs() < 1e-15);
        assert!((out.coeffs()[(1, 0)] - c).abs() < 1e-15);
    }

    #[test]
    fn step_guard() {
        let model = SpectralModel::dirichlet_interval(200, PI).unwrap();
        let s = ModeState::new(alloc::vec![199], DMatrix::from_element(1, 1, 1.0), 0.0).unwrap();
        assert!(matches!(
            propagate(&scalar(), &model, &s, 1.0, Direction::Forward),
            Err(Error::StepTooLarge(_))
        ));
    }

    #[test]
    fn projections() {
        let model = SpectralModel::dirichlet_interval(6, PI).unwrap();
        let s = ModeState::new((0..6).collect(), DMatrix::from_fn(2, 6, |i, j| (i + 2 * j) as f64 + 1.0), 0.0).unwrap();
        assert!(project_low(&s, &model, 0.5).modes().is_empty());
        assert_eq!(project_low(&s, &model, 1e9), s);
        let low = project_low(&s, &model, 5.0);
        assert_eq!(low.modes(), &[0, 1]);
        let high = project_high(&s, &model, 5.0);
        assert!((low.norm_sq() + high.norm_sq() - s.norm_sq()).abs() < 1e-12);
        let mut back = high.embed(&(0..6).collect::<Vec<_>>()).unwrap();
        back.coeffs_mut().view_mut((0, 0), (2, 2)).copy_from(low.coeffs());
        assert_eq!(back, s);
    }

    #[test]
    fn dissipation_examples() {
        let model = SpectralModel::dirichlet_interval(8, PI).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        // single mode above the cutoff: the ratio is exactly exp(-gamma t)
        let r = dissipation_check(&scalar(), &model, 50.0, &[0.0, 0.01, 0.1], 5, &mut rng).unwrap();
        assert_eq!(r.rows[0].max_ratio, 1.0);
        assert!((r.rows[1].max_ratio - libm::exp(-0.64)).abs() < 1e-15);
        let diag = CoupledSystem::from_row_slices(2, 2, &[1., 0., 0., 2.], &[0.; 4], &[1., 0., 0., 1.]).unwrap();
        let r = dissipation_check(&diag, &model, 9.0, &[0.0, 0.05, 0.2, 1.0], 200, &mut rng).unwrap();
        for row in &r.rows {
            // componentwise rates gamma and 2 gamma with gamma >= 16
            assert!(row.max_ratio <= libm::exp(-16.0 * row.t) * (1.0 + 1e-12));
        }
        assert!(r.holds(1e-9, 0.0));
        assert!(dissipation_check(&diag, &model, 1e6, &[0.1], 1, &mut rng).is_err());
    }
}
