//! One runner per subcommand. Each writes its artifacts under `out` and returns a summary.

use std::path::{Path, PathBuf};

use nullctl_core::dynamics::{dissipation_check, project_low};
use nullctl_core::fit::{linear_fit, LinearFit};
use nullctl_core::hum::{assemble_gramian, simulate_forward, synthesize_with, ControlTrajectory, QuadratureOptions, DEFAULT_QUAD_NODES};
use nullctl_core::kalman::{bad_set, kalman_certificate, rank_at, KalmanVerdict};
use nullctl_core::lr::{cost_sweep, run_lr, LrConfig};
use nullctl_core::Error;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, Y0Spec};
use crate::output::{num, write_json, Table};
use crate::CliError;

/// Files written and a human-readable summary; `exit` is the process exit code.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub message: String,
    pub exit: i32,
}

impl Outcome {
    fn ok(files: Vec<PathBuf>, message: String) -> Self {
        Outcome { files, message, exit: 0 }
    }
}

/// Twenty log-spaced times in `[1e-4, 1]`.
pub fn default_times() -> Vec<f64> {
    (0..20).map(|i| 10f64.powf(-4.0 + 4.0 * i as f64 / 19.0)).collect()
}

fn check_cutoff(cfg: &ExperimentConfig, flag: &str, gamma: f64) -> Result<(), CliError> {
    let top = cfg.model.max_gamma();
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(CliError::Usage(format!("{flag} must be positive, got {gamma}")));
    }
    if gamma > top * (1.0 + 1e-12) {
        return Err(CliError::Usage(format!(
            "{flag} = {gamma} exceeds the largest model eigenvalue {top}; raise model.num_modes"
        )));
    }
    Ok(())
}

/// First retained mode that fails the rank test, as a core error.
fn require_rank(cfg: &ExperimentConfig, cutoff: f64) -> Result<(), CliError> {
    for k in cfg.model.low_modes(cutoff) {
        let gamma = cfg.model.gamma(k);
        if rank_at(&cfg.system, gamma)? < cfg.system.n() {
            return Err(Error::NotControllable { mode: k, gamma }.into());
        }
    }
    Ok(())
}

fn control_rows(table: &mut Table, c: &ControlTrajectory) {
    for (q, &t) in c.rule().nodes.iter().enumerate() {
        let beta = c.beta(q);
        for j in 0..c.channels() {
            for (col, &mode) in c.modes().iter().enumerate() {
                table.push(vec![num(t), (j + 1).to_string(), (mode + 1).to_string(), num(beta[(j, col)])]);
            }
        }
    }
}

const CONTROL_COLUMNS: &[&str] = &["t", "channel", "mode", "beta"];

#[derive(Serialize)]
struct RootJson {
    gamma: f64,
    rank: usize,
}

#[derive(Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
enum VerdictJson {
    Controllable { num_modes: usize, bad_roots: Vec<RootJson>, tolerance: f64 },
    Fails { p0: usize, gamma: f64, z0: Vec<f64>, residual: f64 },
}

pub fn kalman_check(cfg: &ExperimentConfig, emit_bad_set: Option<&Path>, out: &Path) -> Result<Outcome, CliError> {
    let verdict = kalman_certificate(&cfg.system, &cfg.model)?;
    let mut files = Vec::new();
    if let Some(path) = emit_bad_set {
        let bad = bad_set(&cfg.system, cfg.model.gamma(0))?;
        let mut t = Table::new("bad-set", &["gamma", "rank"]);
        for r in &bad.roots {
            t.push(vec![num(r.gamma), r.rank.to_string()]);
        }
        t.write(path)?;
        files.push(path.to_path_buf());
    }
    let (json, message, exit) = match verdict {
        KalmanVerdict::Controllable { bad_roots, tolerance } => {
            let msg = format!(
                "Controllable: no eigenvalue among the {} modes meets the bad set ({} rank drops in between)",
                cfg.model.len(),
                bad_roots.len()
            );
            let roots = bad_roots.iter().map(|r| RootJson { gamma: r.gamma, rank: r.rank }).collect();
            (VerdictJson::Controllable { num_modes: cfg.model.len(), bad_roots: roots, tolerance }, msg, 0)
        }
        KalmanVerdict::Fails { mode, gamma, z0, residual } => {
            let msg = format!(
                "Fails at p0 = {} (gamma = {gamma}): z0 = {:?}, |K^T z0| = {residual:e}",
                mode + 1,
                z0.as_slice()
            );
            (VerdictJson::Fails { p0: mode + 1, gamma, z0: z0.as_slice().to_vec(), residual }, msg, 2)
        }
    };
    let path = out.join("kalman.json");
    write_json(&path, &json)?;
    files.push(path);
    Ok(Outcome { files, message, exit })
}

pub fn dissipation(
    cfg: &ExperimentConfig,
    gamma: f64,
    trials: usize,
    times: &[f64],
    seed: u64,
    out: &Path,
) -> Result<Outcome, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let report = dissipation_check(&cfg.system, &cfg.model, gamma, times, trials, &mut rng)?;
    let mut t = Table::new("dissipation", &["t", "max_ratio", "bound"]);
    for r in &report.rows {
        t.push(vec![num(r.t), num(r.max_ratio), num(r.bound)]);
    }
    let path = out.join("dissipation.csv");
    t.write(&path)?;
    let holds = report.holds(1e-9, 0.0);
    let message = format!(
        "{} trials at {} times above gamma = {gamma}: bound {}",
        trials,
        times.len(),
        if holds { "holds" } else { "VIOLATED" }
    );
    Ok(Outcome { files: vec![path], message, exit: if holds { 0 } else { 3 } })
}

#[derive(Serialize)]
struct SynthesisJson {
    gamma: f64,
    tau: f64,
    gamma_sim: f64,
    controlled_modes: usize,
    initial_norm: f64,
    dropped_norm: f64,
    control_norm: f64,
    lambda_min: f64,
    lambda_max: f64,
    solve_residual: f64,
    terminal_residual: f64,
    terminal_norm: f64,
    time_nodes: usize,
    doublings: usize,
}

pub fn synthesize(
    cfg: &ExperimentConfig,
    gamma: f64,
    tau: f64,
    gamma_sim: f64,
    y0: Option<&Y0Spec>,
    out: &Path,
) -> Result<Outcome, CliError> {
    check_cutoff(cfg, "--gamma", gamma)?;
    check_cutoff(cfg, "--gamma-sim", gamma_sim)?;
    if gamma_sim < gamma {
        return Err(CliError::Usage("--gamma-sim must be at least --gamma".into()));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(CliError::Usage(format!("--tau must be positive, got {tau}")));
    }
    let y0 = cfg.initial_state(y0)?;
    let sim = project_low(&y0, &cfg.model, gamma_sim);
    let low = project_low(&y0, &cfg.model, gamma);
    let s = match synthesize_with(&cfg.system, &cfg.model, &cfg.masks, &low, gamma, tau, QuadratureOptions::default()) {
        Ok(s) => s,
        Err(e) if e.is_controllability_failure() => {
            let note = match assemble_gramian(&cfg.system, &cfg.model, &cfg.masks, gamma, tau, DEFAULT_QUAD_NODES) {
                Ok(g) => format!("lambda_min(G) = {:e}", g.min_eigenvalue()),
                Err(g) => format!("Gramian unavailable: {g}"),
            };
            return Err(CliError::Numerical { source: e, note });
        }
        Err(e) => return Err(e.into()),
    };
    let end = simulate_forward(&cfg.system, &cfg.model, &cfg.masks, &sim, &s.control, gamma_sim)?
        .pop()
        .expect("simulation returns the terminal state");
    let low_norm = low.norm();
    let end_low = project_low(&end, &cfg.model, gamma).norm();
    let summary = SynthesisJson {
        gamma,
        tau,
        gamma_sim,
        controlled_modes: s.gramian.modes().len(),
        initial_norm: y0.norm(),
        dropped_norm: (y0.norm_sq() - low.norm_sq()).max(0.0).sqrt(),
        control_norm: s.control.norm(),
        lambda_min: s.gramian.min_eigenvalue(),
        lambda_max: s.gramian.max_eigenvalue(),
        solve_residual: s.solve_residual,
        terminal_residual: if low_norm > 0.0 { end_low / low_norm } else { end_low },
        terminal_norm: end.norm(),
        time_nodes: s.control.rule().len(),
        doublings: s.gramian.doublings(),
    };
    let mut t = Table::new("control", CONTROL_COLUMNS);
    control_rows(&mut t, &s.control);
    let (csv_path, json_path) = (out.join("control.csv"), out.join("synthesis.json"));
    t.write(&csv_path)?;
    write_json(&json_path, &summary)?;
    let message = format!(
        "|v| = {}, lambda_min = {:e}, terminal residual = {:e}",
        summary.control_norm, summary.lambda_min, summary.terminal_residual
    );
    Ok(Outcome::ok(vec![csv_path, json_path], message))
}

#[derive(Serialize)]
struct FitJson {
    intercept: f64,
    slope: f64,
    r_squared: f64,
}

impl From<LinearFit> for FitJson {
    fn from(f: LinearFit) -> Self {
        FitJson { intercept: f.intercept, slope: f.slope, r_squared: f.r_squared }
    }
}

#[derive(Serialize)]
struct ObservabilityJson {
    tau: f64,
    /// `log(1/lambda_min)` against `sqrt(gamma)`.
    vs_sqrt_gamma: Option<FitJson>,
    vs_gamma: Option<FitJson>,
    /// Slopes of `log(1/lambda_min)` against `gamma` between consecutive rows.
    slopes_vs_gamma: Vec<f64>,
    concave: bool,
}

/// `true` when consecutive slopes do not grow by more than 5%.
pub fn is_concave(slopes: &[f64]) -> bool {
    slopes.windows(2).all(|w| w[1] - w[0] <= 0.05 * w[0].abs())
}

pub fn observability_sweep(cfg: &ExperimentConfig, gammas: &[f64], tau: f64, out: &Path) -> Result<Outcome, CliError> {
    if gammas.is_empty() {
        return Err(CliError::Usage("--gammas needs at least one value".into()));
    }
    if gammas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Usage("--gammas must be strictly increasing".into()));
    }
    for &g in gammas {
        check_cutoff(cfg, "--gammas", g)?;
    }
    let mut t = Table::new("observability", &["gamma", "lambda_min", "log_inv_lambda_min", "sqrt_gamma"]);
    let (mut xs, mut roots, mut ys) = (Vec::new(), Vec::new(), Vec::new());
    for &g in gammas {
        let lam = assemble_gramian(&cfg.system, &cfg.model, &cfg.masks, g, tau, DEFAULT_QUAD_NODES)?.min_eigenvalue();
        let y = (1.0 / lam).ln();
        t.push(vec![num(g), num(lam), num(y), num(g.sqrt())]);
        if lam > 0.0 {
            xs.push(g);
            roots.push(g.sqrt());
            ys.push(y);
        }
    }
    let slopes: Vec<f64> = xs.windows(2).zip(ys.windows(2)).map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0])).collect();
    let json = ObservabilityJson {
        tau,
        vs_sqrt_gamma: linear_fit(&roots, &ys).ok().map(Into::into),
        vs_gamma: linear_fit(&xs, &ys).ok().map(Into::into),
        concave: is_concave(&slopes),
        slopes_vs_gamma: slopes,
    };
    let (csv_path, json_path) = (out.join("observability.csv"), out.join("observability_fit.json"));
    t.write(&csv_path)?;
    write_json(&json_path, &json)?;
    let message = match &json.vs_sqrt_gamma {
        Some(f) => format!("log(1/lambda_min) vs sqrt(gamma): slope {}, R^2 {}", f.slope, f.r_squared),
        None => "too few positive eigenvalues for a fit".into(),
    };
    Ok(Outcome::ok(vec![csv_path, json_path], message))
}

#[derive(Serialize)]
struct LrJson {
    horizon: f64,
    m_initial: f64,
    m_final: f64,
    adapt: bool,
    adaptations: usize,
    gamma_sim: f64,
    windows: usize,
    total_cost: f64,
    initial_norm: f64,
    dropped_norm: f64,
    terminal_norm: f64,
    relative_residual: f64,
}

fn lr_setup(
    cfg: &ExperimentConfig,
    m: Option<f64>,
    adapt: bool,
    gamma_sim: f64,
    y0: Option<&Y0Spec>,
) -> Result<(LrConfig, nullctl_core::dynamics::ModeState, f64), CliError> {
    check_cutoff(cfg, "--gamma-sim", gamma_sim)?;
    let m = m.unwrap_or_else(|| cfg.model.gamma(0));
    if !(m.is_finite() && m > 0.0) {
        return Err(CliError::Usage(format!("--M must be positive, got {m}")));
    }
    require_rank(cfg, gamma_sim)?;
    let y0 = cfg.initial_state(y0)?;
    let sim = project_low(&y0, &cfg.model, gamma_sim);
    let dropped = (y0.norm_sq() - sim.norm_sq()).max(0.0).sqrt();
    Ok((LrConfig::new(m, adapt, gamma_sim), sim, dropped))
}

pub fn lr_run(
    cfg: &ExperimentConfig,
    horizon: f64,
    m: Option<f64>,
    adapt: bool,
    gamma_sim: f64,
    y0: Option<&Y0Spec>,
    out: &Path,
) -> Result<Outcome, CliError> {
    let (lr, y0, dropped) = lr_setup(cfg, m, adapt, gamma_sim, y0)?;
    let run = run_lr(&cfg.system, &cfg.model, &cfg.masks, &y0, horizon, &lr)?;
    let mut controls = Table::new("control", CONTROL_COLUMNS);
    for c in run.controls.iter().flatten() {
        control_rows(&mut controls, c);
    }
    let mut windows = Table::new("lr-windows", &["k", "a_k", "T_k", "mu_k", "residual", "window_cost"]);
    for w in &run.windows {
        windows.push(vec![
            w.k.to_string(),
            num(w.start),
            num(w.half_width),
            num(w.cutoff),
            num(w.residual),
            num(w.window_cost),
        ]);
    }
    let summary = LrJson {
        horizon,
        m_initial: lr.m,
        m_final: run.schedule.m,
        adapt,
        adaptations: run.adaptations,
        gamma_sim,
        windows: run.windows.len(),
        total_cost: run.total_cost,
        initial_norm: run.initial_norm,
        dropped_norm: dropped,
        terminal_norm: run.terminal_norm,
        relative_residual: run.relative_residual(),
    };
    let paths = [out.join("lr_control.csv"), out.join("lr_windows.csv"), out.join("lr_summary.json")];
    controls.write(&paths[0])?;
    windows.write(&paths[1])?;
    write_json(&paths[2], &summary)?;
    let message = format!(
        "cost = {}, relative residual = {:e}, M = {} after {} adaptations",
        run.total_cost,
        summary.relative_residual,
        run.schedule.m,
        run.adaptations
    );
    Ok(Outcome::ok(paths.to_vec(), message))
}

#[derive(Serialize)]
struct CostFitJson {
    /// `log(cost) = alpha + beta / T`.
    alpha: Option<f64>,
    beta: Option<f64>,
    r_squared: Option<f64>,
    rows_used: usize,
    m_initial: f64,
    adapt: bool,
    gamma_sim: f64,
}

pub fn cost_sweep_cmd(
    cfg: &ExperimentConfig,
    horizons: &[f64],
    m: Option<f64>,
    adapt: bool,
    gamma_sim: f64,
    y0: Option<&Y0Spec>,
    out: &Path,
) -> Result<Outcome, CliError> {
    if horizons.len() < 4 {
        return Err(CliError::Usage("--T-list needs at least 4 horizons".into()));
    }
    let (lr, y0, _) = lr_setup(cfg, m, adapt, gamma_sim, y0)?;
    let sweep = cost_sweep(&cfg.system, &cfg.model, &cfg.masks, &y0, horizons, &lr)?;
    let mut t = Table::new("cost-sweep", &["T", "cost", "residual", "M_final", "status"]);
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    for r in &sweep.rows {
        t.push(vec![
            num(r.horizon),
            opt(r.cost),
            opt(r.residual),
            opt(r.m_final),
            r.error.clone().unwrap_or_else(|| "ok".into()),
        ]);
    }
    let json = CostFitJson {
        alpha: sweep.fit.map(|f| f.intercept),
        beta: sweep.fit.map(|f| f.slope),
        r_squared: sweep.fit.map(|f| f.r_squared),
        rows_used: sweep.rows.iter().filter(|r| r.cost.is_some()).count(),
        m_initial: lr.m,
        adapt,
        gamma_sim,
    };
    let (csv_path, json_path) = (out.join("cost_sweep.csv"), out.join("cost_fit.json"));
    t.write(&csv_path)?;
    write_json(&json_path, &json)?;
    let failed = sweep.rows.iter().filter(|r| r.error.is_some()).count();
    let message = match sweep.fit {
        Some(f) => format!("log(cost) = {} + {} / T, R^2 = {} ({failed} failed rows)", f.intercept, f.slope, f.r_squared),
        None => format!("no fit ({failed} failed rows)"),
    };
    Ok(Outcome { files: vec![csv_path, json_path], message, exit: if failed > 0 { 3 } else { 0 } })
}
