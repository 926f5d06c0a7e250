use core::f64::consts::PI;

use nalgebra::DMatrix;
use nullctl_core::dynamics::ModeState;
use nullctl_core::hum::{simulate_forward, synthesize_control};
use nullctl_core::lr::{build_schedule, cost_sweep, run_lr, LrConfig, RHO};
use nullctl_core::spectral::{Region, SpectralModel, SubdomainMask};
use nullctl_core::system::CoupledSystem;
use proptest::prelude::*;

fn scalar() -> CoupledSystem {
    CoupledSystem::from_row_slices(1, 1, &[1.0], &[0.0], &[1.0]).unwrap()
}

fn case3() -> CoupledSystem {
    CoupledSystem::from_row_slices(2, 1, &[1., 0., 0., 1.], &[0., 0., 1., 0.], &[1., 0.]).unwrap()
}

fn interval(num_modes: usize) -> (SpectralModel, Vec<SubdomainMask>) {
    let model = SpectralModel::dirichlet_interval_with_breaks(num_modes, PI, &[0.2 * PI, 0.5 * PI]).unwrap();
    let mask = SubdomainMask::from_regions(&model, 0, &[Region::interval(0.2 * PI, 0.5 * PI)]).unwrap();
    (model, vec![mask])
}

fn first_mode(n: usize) -> ModeState {
    ModeState::new(vec![0], DMatrix::from_element(n, 1, 1.0), 0.0).unwrap()
}

#[test]
fn zero_data_costs_nothing() {
    let (model, masks) = interval(5);
    let y0 = ModeState::zeros(2, vec![0], 0.0);
    let run = run_lr(&case3(), &model, &masks, &y0, 1.0, &LrConfig::new(1.0, true, 25.0)).unwrap();
    assert_eq!(run.total_cost, 0.0);
    assert_eq!(run.terminal_norm, 0.0);
    assert!(run.controls.iter().all(Option::is_none));
}

#[test]
fn scalar_pipeline_reaches_zero_and_costs_at_least_single_shot() {
    let (model, masks) = interval(6);
    let y0 = first_mode(1);
    let top = model.max_gamma();
    let run = run_lr(&scalar(), &model, &masks, &y0, 1.0, &LrConfig::new(1.0, true, top)).unwrap();
    assert!(run.relative_residual() <= 1e-6, "residual {}", run.relative_residual());
    // minimal-norm control for all retained modes on the whole horizon
    let hum = synthesize_control(&scalar(), &model, &masks, &y0, top, 1.0).unwrap();
    let end = simulate_forward(&scalar(), &model, &masks, &y0, &hum, top).unwrap().pop().unwrap();
    assert!(end.norm() <= 1e-8);
    assert!(run.total_cost >= hum.norm() * (1.0 - 1e-6), "{} < {}", run.total_cost, hum.norm());
}

#[test]
fn window_logs_obey_dissipation_cost_and_contraction() {
    let sys = case3();
    let (model, masks) = interval(5);
    let y0 = first_mode(2);
    for horizon in [1.0, 0.5, 0.25] {
        let run = run_lr(&sys, &model, &masks, &y0, horizon, &LrConfig::new(1.0, true, 25.0)).unwrap();
        assert!(run.relative_residual() <= 1e-6);
        let mut sum = 0.0;
        for (w, c) in run.windows.iter().zip(&run.controls) {
            // the dissipation bound covers the modes above mu_k; what the active phase left
            // on retained modes decays more slowly (here q_norm = c gamma_1, so it cannot grow)
            let bound = ((sys.q_norm() - sys.coercivity() * w.cutoff) * w.half_width).exp();
            assert!(
                w.residual <= bound * w.norm_switch * (1.0 + 1e-9) + w.low_residual,
                "window {}: {} > {}",
                w.k,
                w.residual,
                bound * w.norm_switch
            );
            assert!(w.residual <= RHO * w.norm_start || w.norm_start <= 1e-12 * run.initial_norm);
            if let Some(c) = c {
                sum += c.recompute_norm_sq();
            }
        }
        assert!((sum.sqrt() - run.total_cost).abs() <= 1e-10 * run.total_cost);
        assert!((run.schedule.total_length() - horizon).abs() <= 1e-12);
    }
}

#[test]
fn controls_stay_within_simulated_modes() {
    // the model carries modes up to 100, the run only those up to 16
    let (model, masks) = interval(10);
    let run = run_lr(&case3(), &model, &masks, &first_mode(2), 1.0, &LrConfig::new(2.0, false, 16.0)).unwrap();
    assert!(run.relative_residual() <= 1e-6);
    assert!(run.schedule.windows.last().unwrap().cutoff > 16.0);
    for c in run.controls.iter().flatten() {
        assert!(c.modes().iter().all(|&k| model.gamma(k) <= 16.0));
    }
}

#[test]
fn cost_is_linear_in_data() {
    let (model, masks) = interval(4);
    let cfg = LrConfig::new(4.0, false, 16.0);
    let y0 = first_mode(2);
    let t_list = [1.0, 0.5, 0.25, 0.125];
    let one = cost_sweep(&case3(), &model, &masks, &y0, &t_list, &cfg).unwrap();
    let two = cost_sweep(&case3(), &model, &masks, &y0.scaled(2.0), &t_list, &cfg).unwrap();
    for (a, b) in one.rows.iter().zip(&two.rows) {
        let (a, b) = (a.cost.unwrap(), b.cost.unwrap());
        assert!((b - 2.0 * a).abs() <= 1e-9 * b);
    }
}

#[test]
fn uncontrollable_rows_all_fail() {
    let sys = CoupledSystem::from_row_slices(2, 1, &[1., 0., 0., 1.], &[0.; 4], &[1., 1.]).unwrap();
    let (model, masks) = interval(4);
    let y0 = first_mode(2);
    let sweep = cost_sweep(&sys, &model, &masks, &y0, &[1.0, 0.5, 0.25, 0.125], &LrConfig::new(1.0, true, 16.0)).unwrap();
    assert!(sweep.rows.iter().all(|r| r.cost.is_none() && r.error.is_some()));
    assert!(sweep.fit.is_none());
    let err = run_lr(&sys, &model, &masks, &y0, 1.0, &LrConfig::new(1.0, true, 16.0)).unwrap_err();
    assert!(err.is_controllability_failure());
}

#[test]
fn sweep_needs_four_horizons() {
    let (model, masks) = interval(3);
    let y0 = first_mode(2);
    assert!(cost_sweep(&case3(), &model, &masks, &y0, &[1.0, 0.5, 0.25], &LrConfig::new(1.0, true, 9.0)).is_err());
}

proptest! {
    #[test]
    fn schedule_is_exact(horizon in 0.01f64..=1.0, m in 0.1f64..50.0, top_factor in 1.0f64..1e4) {
        let top = m * top_factor;
        let s = build_schedule(horizon, m, top).unwrap();
        prop_assert!((s.total_length() - horizon).abs() <= 1e-12);
        prop_assert_eq!(s.windows[0].start, 0.0);
        prop_assert!(s.windows.last().unwrap().cutoff >= top);
        for pair in s.windows.windows(2) {
            prop_assert!(pair[1].cutoff > pair[0].cutoff);
            prop_assert!((pair[1].start - pair[0].end()).abs() <= 1e-15);
            prop_assert!((pair[1].half_width * 2.0 - pair[0].half_width).abs() <= 1e-15);
        }
        prop_assert_eq!(s.kappa, 0.25);
    }
}
