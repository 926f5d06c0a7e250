//! Dyadic active/passive null control on `[0, T]`.
//!
//! Window `k` starts at `a_k`, is active on `(a_k, a_k + T_k)` where the modes below
//! `mu_k` are steered to zero, and passive on `(a_k + T_k, a_{k+1})` where the state
//! evolves freely. `T_k = T / (4 * 2^k)` and `mu_k = M * 4^k`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::dynamics::{project_low, propagate, Direction, ModeState};
use crate::error::{Error, Result};
use crate::fit::{linear_fit, LinearFit};
use crate::hum::{simulate_forward, synthesize_with, ControlTrajectory, QuadratureOptions};
use crate::spectral::{SpectralModel, SubdomainMask};
use crate::system::CoupledSystem;

pub const KAPPA: f64 = 0.25;
/// Required contraction per window when `M` is adapted.
pub const RHO: f64 = 0.9;
pub const MAX_ADAPTATIONS: usize = 8;
/// States smaller than this fraction of `|y0|` are treated as already controlled
/// by the contraction test.
pub const CONTRACTION_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrWindow {
    pub k: usize,
    /// `a_k`.
    pub start: f64,
    /// `T_k`, the length of the active and of the passive half.
    pub half_width: f64,
    /// `mu_k`.
    pub cutoff: f64,
}

impl LrWindow {
    pub fn switch_time(&self) -> f64 {
        self.start + self.half_width
    }

    pub fn end(&self) -> f64 {
        self.start + 2.0 * self.half_width
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LrSchedule {
    pub horizon: f64,
    pub m: f64,
    pub kappa: f64,
    pub windows: Vec<LrWindow>,
    /// Start of the final passive stretch up to `horizon`.
    pub terminal_start: f64,
}

impl LrSchedule {
    pub fn terminal_length(&self) -> f64 {
        self.horizon - self.terminal_start
    }

    /// Sum of all active, passive and terminal lengths.
    pub fn total_length(&self) -> f64 {
        self.windows.iter().map(|w| 2.0 * w.half_width).sum::<f64>() + self.terminal_length()
    }
}

/// Windows until `mu_k` reaches `top_gamma`, then a terminal passive stretch.
pub fn build_schedule(horizon: f64, m: f64, top_gamma: f64) -> Result<LrSchedule> {
    if !(horizon > 0.0 && horizon <= 1.0) {
        return Err(Error::InvalidArgument(alloc::format!("T must lie in (0, 1], got {horizon}")));
    }
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("M must be positive, got {m}")));
    }
    if !(top_gamma.is_finite() && top_gamma > 0.0) {
        return Err(Error::InvalidArgument("largest eigenvalue must be positive".into()));
    }
    if m > top_gamma {
        return Err(Error::InvalidArgument(alloc::format!(
            "M = {m} exceeds the largest simulated eigenvalue {top_gamma}: no dyadic window fits"
        )));
    }
    let mut windows = Vec::new();
    let mut start = 0.0;
    let mut k = 0;
    loop {
        let half_width = KAPPA * horizon / libm::pow(2.0, k as f64);
        let cutoff = m * libm::pow(4.0, k as f64);
        windows.push(LrWindow { k, start, half_width, cutoff });
        start += 2.0 * half_width;
        if cutoff >= top_gamma {
            break;
        }
        k += 1;
    }
    Ok(LrSchedule { horizon, m, kappa: KAPPA, windows, terminal_start: start })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrConfig {
    pub m: f64,
    pub adapt: bool,
    pub gamma_sim: f64,
    pub quadrature: QuadratureOptions,
}

impl LrConfig {
    pub fn new(m: f64, adapt: bool, gamma_sim: f64) -> Self {
        LrConfig { m, adapt, gamma_sim, quadrature: QuadratureOptions::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowLog {
    pub k: usize,
    pub start: f64,
    pub half_width: f64,
    pub cutoff: f64,
    /// `|y(a_k)|`.
    pub norm_start: f64,
    /// `|y(a_k + T_k)|`.
    pub norm_switch: f64,
    /// `|Pi_{mu_k} y(a_k + T_k)|`, what the active phase failed to remove.
    pub low_residual: f64,
    /// `|y(a_{k+1})|`.
    pub residual: f64,
    pub window_cost: f64,
}

#[derive(Clone, Debug)]
pub struct LrRun {
    pub schedule: LrSchedule,
    /// One control per window; zero-mode windows carry none.
    pub controls: Vec<Option<ControlTrajectory>>,
    /// States at `0, a_k + T_k, a_{k+1}, ..., T`.
    pub states: Vec<ModeState>,
    pub windows: Vec<WindowLog>,
    pub total_cost: f64,
    pub initial_norm: f64,
    pub terminal_norm: f64,
    /// How many times `M` was doubled.
    pub adaptations: usize,
}

impl LrRun {
    pub fn relative_residual(&self) -> f64 {
        if self.initial_norm == 0.0 {
            0.0
        } else {
            self.terminal_norm / self.initial_norm
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn attempt(
    sys: &CoupledSystem,
    model: &SpectralModel,
    masks: &[SubdomainMask],
    y0: &ModeState,
    schedule: LrSchedule,
    cfg: &LrConfig,
    rate: f64,
    top: f64,
) -> Result<core::result::Result<LrRun, usize>> {
    let initial_norm = y0.norm();
    let opts = QuadratureOptions { rate_hint: cfg.quadrature.rate_hint.max(rate), ..cfg.quadrature };
    let mut state = y0.clone();
    state.time = 0.0;
    let mut states = alloc::vec![state.clone()];
    let mut controls = Vec::new();
    let mut logs = Vec::new();
    let mut cost_sq = 0.0;
    for w in &schedule.windows {
        let norm_start = state.norm();
        let low = project_low(&state, model, w.cutoff);
        let control = if low.modes().is_empty() || low.norm() == 0.0 {
            None
        } else {
            // modes above the simulation cutoff are not carried, so they are not controlled either
            let s = synthesize_with(sys, model, masks, &low, w.cutoff.min(top), w.half_width, opts)
                .map_err(|e| Error::Window { window: w.k, source: alloc::boxed::Box::new(e) })?;
            Some(s.control)
        };
        state = match &control {
            Some(c) => simulate_forward(sys, model, masks, &state, c, cfg.gamma_sim)
                .map_err(|e| Error::Window { window: w.k, source: alloc::boxed::Box::new(e) })?
                .pop()
                .unwrap(),
            None => propagate(sys, model, &state, w.half_width, Direction::Forward)?,
        };
        state.time = w.switch_time();
        let norm_switch = state.norm();
        let low_residual = project_low(&state, model, w.cutoff).norm();
        states.push(state.clone());
        state = propagate(sys, model, &state, w.half_width, Direction::Forward)?;
        state.time = w.end();
        states.push(state.clone());
        let window_cost = control.as_ref().map_or(0.0, |c| c.norm());
        cost_sq += window_cost * window_cost;
        let residual = state.norm();
        logs.push(WindowLog {
            k: w.k,
            start: w.start,
            half_width: w.half_width,
            cutoff: w.cutoff,
            norm_start,
            norm_switch,
            low_residual,
            residual,
            window_cost,
        });
        controls.push(control);
        if cfg.adapt && residual > RHO * norm_start && norm_start > CONTRACTION_FLOOR * initial_norm {
            return Ok(Err(w.k));
        }
    }
    let rest = schedule.terminal_length();
    if rest > 0.0 {
        state = propagate(sys, model, &state, rest, Direction::Forward)?;
    }
    state.time = schedule.horizon;
    let terminal_norm = state.norm();
    states.push(state);
    Ok(Ok(LrRun {
        schedule,
        controls,
        states,
        windows: logs,
        total_cost: libm::sqrt(cost_sq),
        initial_norm,
        terminal_norm,
        adaptations: 0,
    }))
}

/// Runs the dyadic controller from `y0` over `[0, horizon]`, carrying all modes with
/// `gamma <= cfg.gamma_sim`.
pub fn run_lr(
    sys: &CoupledSystem,
    model: &SpectralModel,
    masks: &[SubdomainMask],
    y0: &ModeState,
    horizon: f64,
    cfg: &LrConfig,
) -> Result<LrRun> {
    let sim = model.low_modes(cfg.gamma_sim);
    if sim.is_empty() {
        return Err(Error::InvalidArgument(alloc::format!(
            "simulation cutoff {} keeps no modes",
            cfg.gamma_sim
        )));
    }
    let top = model.gamma(*sim.last().unwrap());
    let y0 = y0.embed(&sim)?;
    let rate = sim
        .iter()
        .map(|&l| crate::expm::norm1(&(sys.d() * model.gamma(l) + sys.q())))
        .fold(0.0, f64::max);
    let mut m = cfg.m;
    let mut adaptations = 0;
    loop {
        let schedule = build_schedule(horizon, m, top)?;
        match attempt(sys, model, masks, &y0, schedule, cfg, rate, top)? {
            Ok(mut run) => {
                run.adaptations = adaptations;
                return Ok(run);
            }
            // capped at the top eigenvalue, where the schedule is a single window
            Err(_) if adaptations < MAX_ADAPTATIONS && m < top => {
                m = (2.0 * m).min(top);
                adaptations += 1;
            }
            Err(_) => return Err(Error::AdaptationExhausted(adaptations)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostRow {
    pub horizon: f64,
    pub cost: Option<f64>,
    pub residual: Option<f64>,
    pub m_final: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostSweep {
    pub rows: Vec<CostRow>,
    /// `log(cost) = intercept + slope / T` over the successful rows.
    pub fit: Option<LinearFit>,
}

/// One [`run_lr`] per horizon and a fit of `log(cost)` against `1 / T`.
pub fn cost_sweep(
    sys: &CoupledSystem,
    model: &SpectralModel,
    masks: &[SubdomainMask],
    y0: &ModeState,
    horizons: &[f64],
    cfg: &LrConfig,
) -> Result<CostSweep> {
    if horizons.len() < 4 {
        return Err(Error::InvalidArgument("a cost sweep needs at least four horizons".into()));
    }
    let mut rows = Vec::with_capacity(horizons.len());
    for &t in horizons {
        rows.push(match run_lr(sys, model, masks, y0, t, cfg) {
            Ok(run) => CostRow {
                horizon: t,
                cost: Some(run.total_cost),
                residual: Some(run.relative_residual()),
                m_final: Some(run.schedule.m),
                error: None,
            },
            Err(e) => CostRow { horizon: t, cost: None, residual: None, m_final: None, error: Some(e.to_string()) },
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.cost.filter(|&c| c > 0.0).map(|c| (1.0 / r.horizon, libm::log(c))))
        .unzip();
    let fit = if xs.len() >= 2 { linear_fit(&xs, &ys).ok() } else { None };
    Ok(CostSweep { rows, fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_unit_horizon() {
        let s = build_schedule(1.0, 4.0, 1000.0).unwrap();
        assert_eq!(s.windows[0].half_width, 0.25);
        assert_eq!(s.windows[1].half_width, 0.125);
        assert_eq!(s.windows[1].start, 0.5);
        assert_eq!(s.windows[2].start, 0.75);
        let mus: Vec<f64> = s.windows.iter().map(|w| w.cutoff).collect();
        assert_eq!(mus, [4.0, 16.0, 64.0, 256.0, 1024.0]);
        assert!((s.total_length() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schedule_errors() {
        assert!(build_schedule(0.0, 1.0, 10.0).is_err());
        assert!(build_schedule(1.5, 1.0, 10.0).is_err());
        assert!(build_schedule(1.0, -1.0, 10.0).is_err());
        assert!(build_schedule(1.0, 20.0, 10.0).is_err());
        let single = build_schedule(0.5, 10.0, 10.0).unwrap();
        assert_eq!(single.windows.len(), 1);
        assert!((single.total_length() - 0.5).abs() < 1e-12);
    }
}
