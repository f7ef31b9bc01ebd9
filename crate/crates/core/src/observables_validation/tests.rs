use super::analytic::*;
use super::*;
use crate::renormalized_pt::KernelOrder;
use crate::superfermion_algebra::{fock_state, propagator_infinity, renormalized_generators};
use crate::timegrid_calculus::TimeGrid;
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn local_observables_of_simple_states() {
    let o = local_observables(&fock_state(3));
    assert_eq!((o.n_up, o.n_down, o.n_corr, o.fluct), (1.0, 1.0, 1.0, 0.0));
    let mixed = Op4::identity() * C64::new(0.25, 0.0);
    let o = local_observables(&mixed);
    // n takes 0, 1, 1, 2 with equal weight
    let (m1, m2) = (1.0, (0.0 + 1.0 + 1.0 + 4.0) / 4.0);
    assert!(close(o.n_up, 0.5, 1e-15) && close(o.n_corr, 0.25, 1e-15));
    assert!(close(o.fluct, m2 - m1 * m1, 1e-15));
}

proptest! {
    #[test]
    fn half_filled_fluctuations_are_twice_the_correlation(a in 0.0..1.0f64, b in 0.0..1.0f64) {
        // diagonal weights with <n> = 1: p1 + p2 + 2 p3 = 1
        let p3 = 0.5 * a;
        let p1 = (1.0 - 2.0 * p3) * b;
        let p2 = 1.0 - 2.0 * p3 - p1;
        let p0 = 1.0 - p1 - p2 - p3;
        let mut rho = Op4::zeros();
        for (k, p) in [p0, p1, p2, p3].into_iter().enumerate() {
            rho[(k, k)] = C64::new(p, 0.0);
        }
        let o = local_observables(&rho);
        prop_assert!(close(o.fluct, 2.0 * o.n_corr, 1e-14));
    }

    #[test]
    fn semigroup_propagators_are_physical(t in 0.0..20.0f64, eps in -5.0..5.0f64, u in 0.0..10.0f64, v in -3.0..3.0f64) {
        let p = ModelParams::symmetric(eps, u, 1.0, v, 1.0);
        let g = renormalized_generators(&p, &Superfermions::new());
        let ph = cp_trace_hermiticity(&propagator_infinity(&g.l_inf, t));
        prop_assert!(ph.choi_min >= -1e-10, "{}", ph.choi_min);
        prop_assert!(ph.trace_err <= 1e-12 && ph.herm_err <= 1e-12);
    }
}

#[test]
fn identity_channel_diagnostics() {
    let ph = cp_trace_hermiticity(&SuperOp::identity());
    assert!(ph.choi_min.abs() < 1e-14 && ph.trace_err == 0.0 && ph.herm_err == 0.0);
    let c = choi_matrix(&SuperOp::identity());
    let top = c.symmetric_eigenvalues().iter().cloned().fold(f64::MIN, f64::max);
    assert!(close(top, 4.0, 1e-12));
}

#[test]
fn transpose_map_is_flagged_as_not_completely_positive() {
    let mut t = SuperOp::zero();
    for i in 0..4 {
        for j in 0..4 {
            t.0[j + 4 * i][i + 4 * j] = C64::new(1.0, 0.0);
        }
    }
    let ph = cp_trace_hermiticity(&t);
    assert!(close(ph.choi_min, -1.0, 1e-12));
    assert!(ph.trace_err < 1e-15);
    let ph = cp_trace_hermiticity(&SuperOp::identity().scale_re(0.9));
    assert!(close(ph.trace_err, 0.1, 1e-12));
    let ph = cp_trace_hermiticity(&SuperOp::identity().scale(C64::new(0.0, 1.0)));
    assert!(ph.herm_err > 1.0);
}

#[test]
fn stationary_extraction() {
    let t: Vec<f64> = (0..=256).map(|k| k as f64 * 10.0 / 256.0).collect();
    let c = stationary_extract(&t, &vec![0.3; t.len()], 1.0);
    assert!(c.reached && close(c.value, 0.3, 1e-15));
    let y: Vec<f64> = t.iter().map(|t| 0.7 + 0.3 * (-t).exp()).collect();
    let s = stationary_extract(&t, &y, 1.0);
    assert!(s.reached && close(s.value, 0.7, 1e-3));
    let ramp: Vec<f64> = t.iter().map(|t| 0.1 * t).collect();
    let r = stationary_extract(&t, &ramp, 1.0);
    let tail = &ramp[ramp.len() - 51..];
    assert!(!r.reached && close(r.value, tail.iter().sum::<f64>() / tail.len() as f64, 1e-12));
}

#[test]
fn semigroup_fixed_point_is_the_stationary_state() {
    let p = ModelParams::symmetric(0.7, 3.0, 1.0, 1.5, 1.0);
    let g = renormalized_generators(&p, &Superfermions::new());
    let rep = fixed_point_state(&propagator_infinity(&g.l_inf, 0.8), 0.8).unwrap();
    let late = apply_superop(&propagator_infinity(&g.l_inf, 60.0), &fock_state(0));
    assert!((rep.rho1 - late).iter().all(|z| z.norm() < 1e-10));
    assert!(rep.psd_min >= -1e-12 && rep.return_error < 1e-12);
    assert!(close(rep.rho1.trace().re, 1.0, 1e-14));
}

#[test]
fn contracting_map_has_no_unit_eigenvalue() {
    let r = fixed_point_state(&SuperOp::identity().scale_re(0.5), 1.0);
    assert!(matches!(r, Err(ObsError::NoUnitEigenvalue { .. })));
}

fn pt_currents(p: &ModelParams, temp: f64, grid: TimeGrid, rho0: &Op4) -> (Vec<f64>, Vec<f64>, PtSetup) {
    let pt = PtSetup::new(p, grid);
    let temps = pt.uniform_temps(temp);
    let sigma = pt.sigma(&temps, KernelOrder::NextToLeading).unwrap();
    let pi = pt.propagator(&sigma).unwrap();
    let il = current(&pt, &pt.current_sigma(&temps, 0, KernelOrder::NextToLeading).unwrap(), 0, &pi, rho0).unwrap();
    let ir = current(&pt, &pt.current_sigma(&temps, 1, KernelOrder::NextToLeading).unwrap(), 1, &pi, rho0).unwrap();
    (il, ir, pt)
}

#[test]
fn current_jumps_to_the_local_value() {
    let p = ModelParams::symmetric(-1.0, 2.0, 1.0, 1.0, 5.0);
    let grid = TimeGrid::new(1.0, 21).unwrap();
    for (k, want) in [(0usize, 1.0), (1, 0.0), (3, -1.0)] {
        let (il, ir, _) = pt_currents(&p, 5.0, grid, &fock_state(k));
        assert!(close(il[0], want, 1e-13) && close(ir[0], want, 1e-13), "{k}: {} {}", il[0], ir[0]);
    }
    let mixed = (fock_state(1) + fock_state(0)) * C64::new(0.5, 0.0);
    let (il, _, _) = pt_currents(&p, 5.0, grid, &mixed);
    // sum_s Gamma (1/2 - <n_s>) with <n_up> = 1/2, <n_down> = 0
    assert!(close(il[0], 0.5, 1e-13));
}

#[test]
fn equilibrium_current_vanishes() {
    let p = ModelParams::symmetric(-1.0, 2.0, 1.0, 0.0, 3.0);
    let grid = TimeGrid::new(10.0, 161).unwrap();
    let (il, ir, _) = pt_currents(&p, 3.0, grid, &fock_state(0));
    let ts = grid.times();
    let sl = stationary_extract(&ts, &il, 1.0);
    let sr = stationary_extract(&ts, &ir, 1.0);
    assert!(sl.reached && sl.value.abs() < 1e-6, "{:?}", sl);
    assert!(close(sl.value, sr.value, 1e-12));
}

#[test]
fn high_temperature_current_follows_the_closed_form() {
    let p = ModelParams::symmetric(-2.0, 4.0, 1.0, 1.0, 100.0);
    let grid = TimeGrid::new(10.0, 161).unwrap();
    let (il, ir, _) = pt_currents(&p, 100.0, grid, &fock_state(0));
    let ts = grid.times();
    let want = high_t_current(&p, 100.0);
    let s = stationary_extract(&ts, &il, 1.0);
    assert!(s.reached && ((s.value - want) / want).abs() < 0.02, "{} vs {want}", s.value);
    let sr = stationary_extract(&ts, &ir, 1.0);
    assert!((s.value + sr.value).abs() < 1e-4);
}

#[test]
fn zero_frequency_state_matches_the_long_time_limit() {
    let p = ModelParams::symmetric(-1.0, 2.0, 1.0, 1.0, 2.0);
    let grid = TimeGrid::new(10.0, 161).unwrap();
    let (il, ir, pt) = pt_currents(&p, 2.0, grid, &fock_state(0));
    let temps = pt.uniform_temps(2.0);
    let sigma = pt.sigma(&temps, KernelOrder::NextToLeading).unwrap();
    let sigma_i: Vec<KernelFn> =
        (0..2).map(|r| pt.current_sigma(&temps, r, KernelOrder::NextToLeading).unwrap()).collect();
    let z = zero_frequency_state(&pt, &sigma, &sigma_i);
    let late = local_observables(&apply_superop(pt.propagator(&sigma).unwrap().values.last().unwrap(), &fock_state(0)));
    assert!(z.obs.max_diff(&late) < 1e-4, "{:?} vs {:?}", z.obs, late);
    assert!(close(z.currents[0], *il.last().unwrap(), 1e-4));
    assert!(close(z.currents[1], *ir.last().unwrap(), 1e-4));
    assert!(close(z.rho.trace().re, 1.0, 1e-12));
}

#[test]
fn analytic_reference_values() {
    assert!(close(high_t_fluct(-4.0, 8.0, 100.0), 0.49, 1e-15));
    let p = ModelParams::symmetric(-2.0, 4.0, 1.0, 1.0, 1.0);
    let dt: f64 = 0.01;
    let want = 0.5 - (-2.0 * dt).exp() / 2.0 + 4.0 / (2.0 * PI) * dt * dt;
    assert!(close(short_time_occupation(&p, &fock_state(0), Spin::Up, dt), want, 1e-15));
    let (i0, slope) = short_time_current_coeffs(&p, &fock_state(1));
    assert!(i0 == 0.0 && close(slope, 1.0 / PI, 1e-15));
    let fit = low_t_fluct_fit(&[0.05, 0.1, 0.2, 0.3], &[0.3 * (1.0 - 2.0 * 0.0025), 0.3 * (1.0 - 0.02), 0.3 * (1.0 - 0.08), 0.3 * 0.82]);
    assert!(close(fit.d0, 0.3, 1e-12) && close(fit.c, 2.0, 1e-10) && close(fit.r2, 1.0, 1e-12));
}

#[test]
fn short_time_occupation_of_the_propagator() {
    let p = ModelParams::symmetric(-2.0, 4.0, 1.0, 1.0, 1.0);
    let grid = TimeGrid::new(0.1, 101).unwrap();
    let pt = PtSetup::new(&p, grid);
    let sigma = pt.sigma(&pt.uniform_temps(1.0), KernelOrder::NextToLeading).unwrap();
    let pi = pt.propagator(&sigma).unwrap();
    let rho0 = fock_state(0);
    for k in [5, 10, 20] {
        let dt = grid.t(k);
        let n = local_observables(&apply_superop(&pi.values[k], &rho0)).n_up;
        let free = local_observables(&apply_superop(&pt.free()[k], &rho0)).n_up;
        // the quadratic excess over the infinite-temperature decay
        let q = (n - free) / (dt * dt);
        let want = short_time_occupation_quadratic(&p, &rho0, Spin::Up);
        assert!(((q - want) / want).abs() < 0.05, "{dt}: {q} vs {want}");
    }
}

#[test]
fn quartic_short_time_temperature_derivative() {
    let p = ModelParams::symmetric(-1.0, 2.0, 1.0, 1.0, 1.0);
    let grid = TimeGrid::new(0.05, 51).unwrap();
    let pt = PtSetup::new(&p, grid);
    let t0 = 0.5;
    let d = 1e-3;
    let pi_at = |t: f64| pt.propagator(&pt.sigma(&pt.uniform_temps(t), KernelOrder::NextToLeading).unwrap()).unwrap();
    let (up, dn) = (pi_at(t0 + d), pi_at(t0 - d));
    let c = quartic_dpi(&p, &pt.sf, &pt.gen.l_inf, t0);
    for k in [20, 30, 50] {
        let dt = grid.t(k);
        let fd = (up.values[k] - dn.values[k]).scale_re(0.5 / d / dt.powi(4));
        let mut e = fd;
        e.axpy(C64::new(-1.0, 0.0), &c);
        assert!(e.max_abs() < 0.1 * c.max_abs(), "{dt}: {:e} vs {:e}", e.max_abs(), c.max_abs());
    }
}
