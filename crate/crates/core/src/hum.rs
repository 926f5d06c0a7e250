//! Minimal-norm null control of the low-frequency part by the Hilbert Uniqueness Method.
//!
//! Adjoint data are indexed by `(mode, equation)` pairs flattened as `k * n + a`,
//! which is the column-major layout of a [`ModeState`] coefficient matrix.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dynamics::{propagator, Direction, ModeState};
use crate::error::{Error, Result};
use crate::expm::norm1;
use crate::kalman::rank_at;
use crate::quadrature::CompositeRule;
use crate::spectral::{mass_matrix, mass_matrix_rect, SpectralModel, SubdomainMask};
use crate::system::CoupledSystem;

/// Gauss nodes per time panel.
pub const PANEL_ORDER: usize = 8;
pub const DEFAULT_QUAD_NODES: usize = 32;
/// Accept the time quadrature once a doubling moves no entry by more than this times `max |G|`.
pub const GRAMIAN_RTOL: f64 = 1e-10;
pub const MAX_DOUBLINGS: usize = 4;
/// Eigenvalues below this fraction of the largest are dropped by the pseudo-inverse.
pub const SPECTRAL_CUTOFF: f64 = 1e-12;
pub const SOLVE_RTOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureOptions {
    /// Minimum number of time nodes on the first attempt.
    pub nodes: usize,
    /// Largest decay rate the grid must resolve besides the controlled modes' own.
    pub rate_hint: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { nodes: DEFAULT_QUAD_NODES, rate_hint: 0.0 }
    }
}

/// Observability Gramian of the modes `gamma_k <= cutoff` over a horizon `tau`.
#[derive(Clone, Debug)]
pub struct Gramian {
    cutoff: f64,
    tau: f64,
    n: usize,
    m: usize,
    modes: Vec<usize>,
    matrix: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    min_eigenvalue: f64,
    // Jacobi equilibration S = diag(G)^(-1/2) and the eigenpairs of S G S
    scale: DVector<f64>,
    scaled_eigenvalues: DVector<f64>,
    scaled_eigenvectors: DMatrix<f64>,
    rule: CompositeRule,
    // per time node: m x (K n), row i maps an adjoint datum to (R^T phi(t))_i across modes
    observation: Vec<DMatrix<f64>>,
    masses: Vec<DMatrix<f64>>,
    doublings: usize,
}

impl Gramian {
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.max()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Time grid on `[0, tau]`.
    pub fn rule(&self) -> &CompositeRule {
        &self.rule
    }

    pub fn doublings(&self) -> usize {
        self.doublings
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Pseudo-inverse solution of `G z = rhs` with one refinement step, computed on the
    /// equilibrated matrix `S G S`. Returns `z` and the relative residual `|G z - rhs| / |rhs|`.
    pub fn solve(&self, rhs: &DVector<f64>) -> (DVector<f64>, f64) {
        let norm = rhs.norm();
        if norm == 0.0 {
            return (DVector::zeros(rhs.len()), 0.0);
        }
        let floor = SPECTRAL_CUTOFF * self.scaled_eigenvalues.max().max(0.0);
        let pinv = |v: &DVector<f64>| {
            let mut c = self.scaled_eigenvectors.tr_mul(&v.component_mul(&self.scale));
            for (ci, &l) in c.iter_mut().zip(self.scaled_eigenvalues.iter()) {
                *ci = if l > floor && l > 0.0 { *ci / l } else { 0.0 };
            }
            (&self.scaled_eigenvectors * c).component_mul(&self.scale)
        };
        let mut z = pinv(rhs);
        let r = rhs - &self.matrix * &z;
        z += pinv(&r);
        let res = (rhs - &self.matrix * &z).norm() / norm;
        (z, res)
    }

    /// The observation `B* R* phi` of the adjoint solution with terminal datum `z`,
    /// as a control on `[t0, t0 + tau]`.
    pub fn observe(&self, t0: f64, z: &DVector<f64>) -> Result<ControlTrajectory> {
        if z.len() != self.dim() {
            return Err(Error::Dimension("adjoint datum length".into()));
        }
        let k = self.modes.len();
        let betas = self
            .observation
            .iter()
            .map(|o| {
                DMatrix::from_fn(self.m, k, |i, kk| {
                    (0..self.n).map(|a| o[(i, kk * self.n + a)] * z[kk * self.n + a]).sum()
                })
            })
            .collect();
        self.control_from(t0, betas)
    }

    /// Wraps per-node coefficient matrices (`m x K` each) as a control on this grid.
    pub fn control_from(&self, t0: f64, betas: Vec<DMatrix<f64>>) -> Result<ControlTrajectory> {
        if betas.len() != self.rule.len()
            || betas.iter().any(|b| b.nrows() != self.m || b.ncols() != self.modes.len())
        {
            return Err(Error::Dimension("control coefficients do not match the grid".into()));
        }
        let rule = shifted(&self.rule, t0);
        Ok(ControlTrajectory::new(t0, self.tau, rule, self.modes.clone(), betas, self.masses.clone()))
    }

    pub fn zero_control(&self, t0: f64) -> ControlTrajectory {
        let betas = alloc::vec![DMatrix::zeros(self.m, self.modes.len()); self.rule.len()];
        ControlTrajectory::new(t0, self.tau, shifted(&self.rule, t0), self.modes.clone(), betas, self.masses.clone())
    }
}

fn shifted(rule: &CompositeRule, t0: f64) -> CompositeRule {
    CompositeRule {
        breaks: rule.breaks.iter().map(|b| b + t0).collect(),
        nodes: rule.nodes.iter().map(|t| t + t0).collect(),
        weights: rule.weights.clone(),
        order: rule.order,
    }
}

fn check_masks(sys: &CoupledSystem, masks: &[SubdomainMask]) -> Result<()> {
    if masks.len() != sys.m() {
        return Err(Error::Dimension(alloc::format!(
            "{} subdomains for {} control channels",
            masks.len(),
            sys.m()
        )));
    }
    Ok(())
}

fn low_modes_checked(model: &SpectralModel, cutoff: f64) -> Result<Vec<usize>> {
    let modes = model.low_modes(cutoff);
    if modes.is_empty() {
        return Err(Error::InvalidArgument(alloc::format!(
            "cutoff {cutoff} is below the first eigenvalue {}",
            model.gamma(0)
        )));
    }
    Ok(modes)
}

fn assemble_on(
    sys: &CoupledSystem,
    gammas: &[f64],
    masses: &[DMatrix<f64>],
    rule: &CompositeRule,
    tau: f64,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let (n, m, k) = (sys.n(), sys.m(), gammas.len());
    let dim = n * k;
    let mut g = DMatrix::<f64>::zeros(dim, dim);
    let mut observation = Vec::with_capacity(rule.len());
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        let mut o = DMatrix::<f64>::zeros(m, dim);
        for (kk, &gamma) in gammas.iter().enumerate() {
            let b = (propagator(sys, gamma, tau - t, Direction::Forward)? * sys.r()).transpose();
            o.view_mut((0, kk * n), (m, n)).copy_from(&b);
        }
        for (i, mass) in masses.iter().enumerate() {
            for kk in 0..k {
                for l in 0..k {
                    let mkl = w * mass[(kk, l)];
                    if mkl == 0.0 {
                        continue;
                    }
                    for a in 0..n {
                        let left = mkl * o[(i, kk * n + a)];
                        for b in 0..n {
                            g[(kk * n + a, l * n + b)] += left * o[(i, l * n + b)];
                        }
                    }
                }
            }
        }
        observation.push(o);
    }
    let gt = g.transpose();
    g = (g + gt) * 0.5;
    Ok((g, observation))
}

/// Assembles the Gramian with the default time quadrature.
pub fn assemble_gramian(
    sys: &CoupledSystem,
    model: &SpectralModel,
    masks: &[SubdomainMask],
    cutoff: f64,
    tau: f64,
    quad_nodes: usize,
) -> Result<Gramian> {
    assemble_gramian_with(sys, model, masks, cutoff, tau, QuadratureOptions { nodes: quad_nodes, rate_hint: 0.0 })
}

pub fn assemble_gramian_with(
    sys: &CoupledSystem,
    model: &SpectralModel,
    masks: &[SubdomainMask],
    cutoff: f64,
    tau: f64,
    opts: QuadratureOptions,
) -> Result<Gramian> {
    check_masks(sys, masks)?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("horizon must be positive, got {tau}")));
    }
    let modes = low_modes_checked(model, cutoff)?;
    let gammas: Vec<f64> = modes.iter().map(|&k| model.gamma(k)).collect();
    let masses = masks
        .iter()
        .map(|mask| mass_matrix(model, mask, &modes))
        .collect::<Result<Vec<_>>>()?;

    let mut rate = opts.rate_hint.max(0.0);
    for &gamma in &gammas {
        rate = rate.max(norm1(&(sys.d() * gamma + sys.q())));
    }
    let by_nodes = opts.nodes.max(1).div_ceil(PANEL_ORDER);
    let by_rate = libm::ceil(rate * tau / 2.0) as usize;
    let mut panels = by_nodes.max(by_rate).max(1);

    let mut rule = CompositeRule::uniform(0.0, tau, panels, PANEL_ORDER, &[]);
    let (mut g, mut obs) = assemble_on(sys, &gammas, &masses, &rule, tau)?;
    let mut change = f64::INFINITY;
    let mut doublings = 0;
    while doublings < MAX_DOUBLINGS {
        panels *= 2;
        doublings += 1;
        let finer = CompositeRule::uniform(0.0, tau, panels, PANEL_ORDER, &[]);
        let (g2, obs2) = assemble_on(sys, &gammas, &masses, &finer, tau)?;
        let scale = g2.amax();
        change = if scale > 0.0 { (&g2 - &g).amax() / scale } else { 0.0 };
        rule = finer;
        g = g2;
        obs = obs2;
        if change <= GRAMIAN_RTOL {
            break;
        }
    }
    if change > GRAMIAN_RTOL {
        return Err(Error::QuadratureNotConverged { doublings, change });
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("Gramian"));
    }
    let eig = SymmetricEigen::try_new(g.clone(), f64::EPSILON, 0).ok_or(Error::Eigensolver)?;
    let min_eigenvalue = eig.eigenvalues.min();
    let scale = g.diagonal().map(|d| if d > 0.0 { 1.0 / libm::sqrt(d) } else { 0.0 });
    let scaled = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] * scale[i] * scale[j]);
    let seig = SymmetricEigen::try_new(scaled, f64::EPSILON, 0).ok_or(Error::Eigensolver)?;
    Ok(Gramian {
        cutoff,
        tau,
        n: sys.n(),
        m: sys.m(),
        modes,
        matrix: g,
        eigenvalues: eig.eigenvalues,
        min_eigenvalue,
        scale,
        scaled_eigenvalues: seig.eigenvalues,
        scaled_eigenvectors: seig.eigenvectors,
        rule,
        observation: obs,
        masses,
        doublings,
    })
}

/// Smallest eigenvalue of the Gramian, the inverse squared observability constant.
pub fn observability_constant(
    sys: &CoupledSystem,
    model: &SpectralModel,
    masks: &[SubdomainMask],
    cutoff: f64,
    tau: f64,
) -> Result<f64> {
    Ok(assemble_gramian(sys, model, masks, cutoff, tau, DEFAULT_QUAD_NODES)?.min_eigenvalue)
}

/// A control `v_j(t, x) = 1_{omega_j}(x) sum_k beta_{j,k}(t) phi_k(x)` sampled on a Gauss grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlTrajectory {
    t0: f64,
    tau: f64,
    rule: CompositeRule,
    modes: Vec<usize>,
    betas: Vec<DMatrix<f64>>,
    masses: Vec<DMatrix<f64>>,
    norm_sq: f64,
}

impl ControlTrajectory {
    fn new(
        t0: f64,
        tau: f64,
        rule: CompositeRule,
        modes: Vec<usize>,
        betas: Vec<DMatrix<f64>>,
        masses: Vec<DMatrix<f64>>,
    ) -> Self {
        let mut c = ControlTrajectory { t0, tau, rule, modes, betas, masses, norm_sq: 0.0 };
        c.norm_sq = c.recompute_norm_sq();
        c
    }

    pub fn start(&self) -> f64 {
        self.t0
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.tau
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn rule(&self) -> &CompositeRule {
        &self.rule
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn channels(&self) -> usize {
        self.masses.len()
    }

    /// Coefficients at time node `q`: row `j` is channel `j`, column `k` is mode `modes[k]`.
    pub fn beta(&self, q: usize) -> &DMatrix<f64> {
        &self.betas[q]
    }

    pub fn betas(&self) -> &[DMatrix<f64>] {
        &self.betas
    }

    /// Cached `|v|^2` in `L^2(0, tau; U)`.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.norm_sq)
    }

    pub fn recompute_norm_sq(&self) -> f64 {
        self.inner_unchecked(self)
    }

    fn inner_unchecked(&self, other: &ControlTrajectory) -> f64 {
        let mut acc = 0.0;
        for (q, &w) in self.rule.weights.iter().enumerate() {
            let (x, y) = (&self.betas[q], &other.betas[q]);
            for (j, mass) in self.masses.iter().enumerate() {
                let xr = x.row(j).transpose();
                let yr = y.row(j).transpose();
                acc += w * xr.dot(&(mass * yr));
            }
        }
        acc
    }

    /// `L^2(0, tau; U)` inner product with a control on the same grid.
    pub fn inner(&self, other: &ControlTrajectory) -> Result<f64> {
        if self.rule != other.rule || self.modes != other.modes {
            return Err(Error::InvalidArgument("controls live on different grids".into()));
        }
        Ok(self.inner_unchecked(other))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let betas = self.betas.iter().map(|b| b * factor).collect();
        ControlTrajectory::new(self.t0, self.tau, self.rule.clone(), self.modes.clone(), betas, self.masses.clone())
    }

    /// `self + factor * other`.
    pub fn axpy(&self, factor: f64, other: &ControlTrajectory) -> Result<Self> {
        if self.rule != other.rule || self.modes != other.modes {
            return Err(Error::InvalidArgument("controls live on different grids".into()));
        }
        let betas = self.betas.iter().zip(&other.betas).map(|(a, b)| a + b * factor).collect();
        Ok(ControlTrajectory::new(self.t0, self.tau, self.rule.clone(), self.modes.clone(), betas, self.masses.clone()))
    }
}

/// A synthesized control with its diagnostics.
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub control: ControlTrajectory,
    pub gramian: Gramian,
    /// Optimal adjoint datum.
    pub zhat: DVector<f64>,
    /// `|G zhat + b| / |b|`.
    pub solve_residual: f64,
    pub rhs_norm: f64,
}

/// Minimal-norm control on `[y0.time, y0.time + tau]` steering the modes `gamma <= cutoff`
/// of `y0` to zero.
pub fn synthesize_control(
    sys: &CoupledSystem,
    model: &SpectralModel,
    masks: &[SubdomainMask],
    y0_low: &ModeState,
    cutoff: f64,
    tau: f64,
) -> Result<ControlTrajectory> {
    Ok(synthesize_with(sys, model, masks, y0_low, cutoff, tau, QuadratureOptions::default())?.control)
}

pub fn synthesize_with(
    sys: &CoupledSystem,
    model: &SpectralModel,
    masks: &[SubdomainMask],
    y0_low: &ModeState,
    cutoff: f64,
    tau: f64,
    opts: QuadratureOptions,
) -> Result<Synthesis> {
    if y0_low.n() != sys.n() {
        return Err(Error::Dimension("state and system disagree on n".into()));
    }
    let modes = low_modes_checked(model, cutoff)?;
    for &k in &modes {
        let gamma = model.gamma(k);
        if rank_at(sys, gamma)? < sys.n() {
            return Err(Error::NotControllable { mode: k, gamma });
        }
    }
    let a0 = y0_low.embed(&modes)?;
    let gramian = assemble_gramian_with(sys, model, masks, cutoff, tau, opts)?;
    let n = sys.n();
    let mut b = DVector::<f64>::zeros(n * modes.len());
    for (kk, &k) in modes.iter().enumerate() {
        let e = propagator(sys, model.gamma(k), tau, Direction::Forward)?;
        b.rows_mut(kk * n, n).copy_from(&(e * a0.coeffs().column(kk)));
    }
    let rhs_norm = b.norm();
    let (zhat, solve_residual) = gramian.solve(&(-&b));
    if solve_residual > SOLVE_RTOL {
        return Err(Error::WeakObservability { residual: solve_residual * rhs_norm, rhs: rhs_norm });
    }
    let control = gramian.observe(y0_low.time, &zhat)?;
    Ok(Synthesis { control, gramian, zhat, solve_residual, rhs_norm })
}

/// Forced evolution under `control`, carrying every model mode with `gamma <= gamma_sim`.
/// Returns the state at each panel boundary of the control grid, starting with `y0`.
pub fn simulate_forward(
    sys: &CoupledSystem,
    model: &SpectralModel,
    masks: &[SubdomainMask],
    y0: &ModeState,
    control: &ControlTrajectory,
    gamma_sim: f64,
) -> Result<Vec<ModeState>> {
    check_masks(sys, masks)?;
    if control.channels() != sys.m() {
        return Err(Error::Dimension("control channel count".into()));
    }
    let sim = model.low_modes(gamma_sim);
    if control.modes.iter().any(|k| !sim.contains(k)) {
        return Err(Error::InvalidArgument(alloc::format!(
            "simulation cutoff {gamma_sim} is below the control's modes"
        )));
    }
    let n = sys.n();
    let mut state = y0.embed(&sim)?;
    state.time = control.t0;
    let rect = masks
        .iter()
        .map(|mask| mass_matrix_rect(model, mask, &sim, &control.modes))
        .collect::<Result<Vec<_>>>()?;
    let gammas: Vec<f64> = sim.iter().map(|&l| model.gamma(l)).collect();

    let order = control.rule.order;
    let mut out = Vec::with_capacity(control.rule.breaks.len());
    out.push(state.clone());
    // cache: panel length, E_l(h), E_l(end - t_q) per in-panel node
    let mut cached: Option<(f64, Vec<DMatrix<f64>>, Vec<Vec<DMatrix<f64>>>)> = None;
    for (p, w) in control.rule.breaks.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let h = b - a;
        let fresh = match &cached {
            Some((h0, _, _)) => libm::fabs(h - h0) > 1e-12 * h,
            None => true,
        };
        if fresh {
            let mut full = Vec::with_capacity(gammas.len());
            let mut partial = Vec::with_capacity(gammas.len());
            for &gamma in &gammas {
                full.push(propagator(sys, gamma, h, Direction::Forward)?);
                let mut per_node = Vec::with_capacity(order);
                for q in p * order..(p + 1) * order {
                    per_node.push(propagator(sys, gamma, b - control.rule.nodes[q], Direction::Forward)?);
                }
                partial.push(per_node);
            }
            cached = Some((h, full, partial));
        }
        let (_, full, partial) = cached.as_ref().unwrap();
        let mut next = DMatrix::<f64>::zeros(n, sim.len());
        for l in 0..sim.len() {
            next.set_column(l, &(&full[l] * state.coeffs().column(l)));
        }
        for (local, q) in (p * order..(p + 1) * order).enumerate() {
            let beta = &control.betas[q];
            // u[(l, i)]: channel i forcing on mode l
            let mut u = DMatrix::<f64>::zeros(sim.len(), sys.m());
            for (i, mass) in rect.iter().enumerate() {
                u.set_column(i, &(mass * beta.row(i).transpose()));
            }
            let f = sys.r() * u.transpose();
            let wq = control.rule.weights[q];
            for l in 0..sim.len() {
                let inc = &partial[l][local] * f.column(l) * wq;
                let mut col = next.column_mut(l);
                col += inc;
            }
        }
        *state.coeffs_mut() = next;
        state.time = b;
        out.push(state.clone());
    }
    Ok(out)
}
