use super::*;
use crate::superfermion_algebra::{apply_superop, basis_op, devectorize, fock_state, trace_annihilation_error, Reservoir};
use std::f64::consts::PI;

fn setup(p: &ModelParams, t_max: f64, n: usize) -> PtSetup {
    PtSetup::new(p, TimeGrid::new(t_max, n).unwrap())
}

fn occupation(pi: &SuperOp, rho0: &crate::superfermion_algebra::Op4) -> f64 {
    let r = apply_superop(pi, rho0);
    (r[(1, 1)] + r[(3, 3)]).re
}

fn double_occupation(pi: &SuperOp, rho0: &crate::superfermion_algebra::Op4) -> f64 {
    apply_superop(pi, rho0)[(3, 3)].re
}

/// Worst deviation from the free-level oracle over a few times; at U = 0 the
/// spin channels are independent, so `<n_up n_down> = n^2`.
fn oracle_deviation(s: &PtSetup, p: &ModelParams, temp: f64, k: &KernelFn) -> f64 {
    let pi = s.propagator(k).unwrap();
    let n = s.grid().n;
    let rho0 = fock_state(0);
    (n / 16..n).step_by(n / 5).fold(0.0_f64, |m, i| {
        let nf = free_level_occupation(p, temp, s.grid().t(i));
        let a = (occupation(&pi.values[i], &rho0) - nf).abs();
        let b = (double_occupation(&pi.values[i], &rho0) - nf * nf).abs();
        m.max(a).max(b)
    })
}

/// Noninteracting level from an empty start, by direct frequency integration.
fn free_level_occupation(p: &ModelParams, temp: f64, t: f64) -> f64 {
    let gt: f64 = p.gamma_total(Spin::Up);
    let half = 0.5 * gt;
    let mut acc = 0.0;
    // E = eps + half tan(phi) maps the Lorentzian onto a bounded interval
    let m = 200_000;
    let (a, b) = (-0.5 * PI + 1e-9, 0.5 * PI - 1e-9);
    let dphi = (b - a) / m as f64;
    for k in 0..m {
        let phi = a + (k as f64 + 0.5) * dphi;
        let x = half * phi.tan();
        let e = p.epsilon + x;
        let jac = half / phi.cos().powi(2);
        let z = C64::new(-half * t, x * t).exp();
        let amp = (C64::new(1.0, 0.0) - z).norm_sqr() / (x * x + half * half);
        for r in &p.reservoirs {
            let f = 1.0 / (((e - r.mu) / temp).exp() + 1.0);
            acc += r.gamma_up / (2.0 * PI) * f * amp * jac * dphi;
        }
    }
    acc
}

#[test]
fn kernels_annihilated_by_trace() {
    let p = ModelParams::symmetric(-0.7, 2.0, 0.5, 1.0, 1.0);
    let s = setup(&p, 4.0, 48);
    let temps = s.uniform_temps(1.5);
    let k1 = s.sigma_order1(&temps);
    let k2 = s.sigma_order2(&temps).unwrap();
    let scale = k1.max_abs();
    assert!(k1.is_finite() && k2.is_finite());
    assert!(k1.trace_error() < 1e-12 * scale, "{}", k1.trace_error());
    assert!(k2.trace_error() < 1e-12 * scale, "{}", k2.trace_error());
    for v in &k1.values {
        assert!(trace_annihilation_error(v) < 1e-12 * scale);
    }
}

#[test]
fn kernels_preserve_hermiticity() {
    let p = ModelParams::symmetric(0.4, 1.0, 0.5, 0.6, 0.8);
    let s = setup(&p, 3.0, 32);
    let temps = s.uniform_temps(0.8);
    let k = s.sigma(&temps, KernelOrder::NextToLeading).unwrap();
    for v in k.values.iter().chain(&k.left) {
        // -i Sigma maps X^dagger to (-i Sigma X)^dagger
        let m = v.scale(C64::new(0.0, -1.0));
        for i in 0..4 {
            for j in 0..4 {
                let x = basis_op(i, j);
                let a = apply_superop(&m, &x.adjoint());
                let b = apply_superop(&m, &x).adjoint();
                assert!((a - b).norm() < 1e-12 * (1.0 + m.max_abs()));
            }
        }
    }
}

#[test]
fn u0_kernel_reproduces_free_level_occupation() {
    let p = ModelParams::symmetric(0.5, 0.0, 1.0, 1.0, 1.0);
    let s = setup(&p, 4.0, 128);
    let k = s.u0_exact_kernel(&s.uniform_temps(1.0)).unwrap();
    let worst = oracle_deviation(&s, &p, 1.0, &k);
    assert!(worst < 2e-3, "max deviation {worst}");
}

#[test]
fn u0_kernel_rejects_interaction() {
    let p = ModelParams::symmetric(0.5, 1.0, 1.0, 1.0, 1.0);
    let s = setup(&p, 1.0, 8);
    assert!(matches!(s.u0_exact_kernel(&s.uniform_temps(1.0)), Err(PtError::NotApplicable(_))));
}

#[test]
fn u0_particle_hole_symmetric_relaxes_to_half() {
    let p = ModelParams::symmetric(0.0, 0.0, 1.0, 0.0, 1.0);
    let s = setup(&p, 8.0, 128);
    let k = s.u0_exact_kernel(&s.uniform_temps(1.0)).unwrap();
    let pi = s.propagator(&k).unwrap();
    let n_up = apply_superop(&pi.values[127], &fock_state(0))[(1, 1)].re + apply_superop(&pi.values[127], &fock_state(0))[(3, 3)].re;
    assert!((n_up - 0.5).abs() < 1e-4, "{n_up}");
}

#[test]
fn order2_scales_as_gamma_squared() {
    let norm = |g: f64| {
        let p = ModelParams::symmetric(1.0, 2.0, g, 0.5, 1.0);
        let s = setup(&p, 2.0, 48);
        s.sigma_order2(&s.uniform_temps(1.0)).unwrap().values.iter().fold(0.0_f64, |m, v| m.max(v.max_abs()))
    };
    let e = (norm(0.01) / norm(0.005)).log2();
    assert!((e - 2.0).abs() < 0.05, "exponent {e}");
}

#[test]
fn zero_time_kernel_properties() {
    let p = ModelParams::symmetric(0.5, 2.0, 1.0, 1.5, 1.0);
    let k = zero_time_kernel(&p).unwrap();
    assert!(trace_annihilation_error(&k) < 1e-14);
    // symmetric bias: the chemical potential term drops out
    let mut q = p.clone();
    q.reservoirs[0].mu = 0.0;
    q.reservoirs[1].mu = 0.0;
    assert!((zero_time_kernel(&q).unwrap() - k).max_abs() < 1e-15);
    let mut a = p.clone();
    a.reservoirs[1].mu = 0.75;
    assert!((zero_time_kernel(&a).unwrap() - k).max_abs() > 0.1);
    let mut bad = p.clone();
    bad.reservoirs[0].gamma_up = 0.5;
    assert_eq!(zero_time_kernel(&bad), Err(PtError::UnsupportedCouplings));
}

#[test]
fn zero_time_kernel_matches_continuation_and_extrapolation() {
    let p = ModelParams::symmetric(0.5, 2.0, 1.0, 1.5, 1.0);
    let k0 = zero_time_kernel(&p).unwrap();
    for temp in [1.0, 10.0] {
        let s = setup(&p, 0.4 / temp, 64);
        let k = s.sigma(&s.uniform_temps(temp), KernelOrder::NextToLeading).unwrap();
        assert!((k.values[0] - k0).max_abs() < 1e-12);
        let ex = extrapolate_zero(&k.nodal());
        let rel = (ex - k0).max_abs() / k0.max_abs();
        assert!(rel < 0.02, "T = {temp}: {rel}");
    }
}

#[test]
fn high_temperature_current_and_fluctuations() {
    let (gamma, v, temp) = (1.0, 1.0, 100.0);
    for (eps, u) in [(-2.0, 4.0), (-1.0, 4.0)] {
        let p = ModelParams::symmetric(eps, u, gamma, v, temp);
        let s = setup(&p, 3.0, 64);
        let temps = s.uniform_temps(temp);
        let k = s.sigma_order1(&temps);
        let rho = stationary(&(s.gen.l_inf + k.integral()));
        let ki = s.current_sigma(&temps, 0, KernelOrder::First).unwrap();
        let gen_i = s.gen.sigma_i_inf[0] + ki.integral();
        let cur = (C64::new(0.0, -1.0) * apply_superop(&gen_i, &rho).trace()).re;
        let expect = gamma * v / (4.0 * temp);
        assert!((cur / expect - 1.0).abs() < 0.02, "current {cur} vs {expect}");
        let n = (rho[(1, 1)] + rho[(2, 2)] + 2.0 * rho[(3, 3)]).re;
        let n2 = (rho[(1, 1)] + rho[(2, 2)] + 4.0 * rho[(3, 3)]).re;
        let fl = n2 - n * n;
        let expect = 0.5 * (1.0 - (4.0 * eps + 3.0 * u) / (4.0 * temp));
        assert!((fl / expect - 1.0).abs() < 0.02, "fluct {fl} vs {expect}");
    }
}

#[test]
fn initial_current_jump() {
    let p = ModelParams::symmetric(0.3, 1.0, 0.7, 1.0, 1.0);
    let s = setup(&p, 1.0, 8);
    let rho = fock_state(1);
    let i0 = (C64::new(0.0, -1.0) * apply_superop(&s.gen.sigma_i_inf[0], &rho).trace()).re;
    // sum_sigma Gamma (1/2 - n_sigma) with n_up = 1, n_down = 0
    assert!((i0 - 0.0).abs() < 1e-14, "{i0}");
    let i0 = (C64::new(0.0, -1.0) * apply_superop(&s.gen.sigma_i_inf[0], &fock_state(0)).trace()).re;
    assert!((i0 - 0.7).abs() < 1e-14, "{i0}");
}

#[test]
fn reservoir_resolved_current_kernels_add_up() {
    // single-reservoir model equals the r = 0 kernel of a model with Gamma_R = 0
    let res = |g: f64, mu| Reservoir { gamma_up: g, gamma_down: g, mu, temperature: 1.0 };
    let two = ModelParams { epsilon: 0.2, u: 1.0, reservoirs: vec![res(0.6, 0.4), res(0.0, -0.4)] };
    let one = ModelParams { epsilon: 0.2, u: 1.0, reservoirs: vec![res(0.6, 0.4)] };
    let a = setup(&two, 2.0, 32);
    let b = setup(&one, 2.0, 32);
    let ka = a.current_sigma(&a.uniform_temps(1.0), 0, KernelOrder::NextToLeading).unwrap();
    let kb = b.current_sigma(&b.uniform_temps(1.0), 0, KernelOrder::NextToLeading).unwrap();
    for (x, y) in ka.values.iter().zip(&kb.values) {
        assert!((*x - *y).max_abs() < 1e-12);
    }
}

#[test]
fn temperature_ratio_thresholds() {
    let p = ModelParams::symmetric(0.0, 2.0, 1.0, 1.0, 1.0);
    assert!(matches!(check_t_inf(&p, 5.0), Err(PtError::BadTemperature { .. })));
    assert!(check_t_inf(&p, 20.0).unwrap().is_some());
    assert!(check_t_inf(&p, default_t_inf(&p)).unwrap().is_none());
}

/// Null vector of a generator, normalized to unit trace.
fn stationary(g: &SuperOp) -> crate::superfermion_algebra::Op4 {
    let na = g.to_na();
    let svd = na.svd(false, true);
    let vt = svd.v_t.unwrap();
    let (imin, _) = svd.singular_values.iter().enumerate().fold((0, f64::INFINITY), |(i, m), (j, &x)| if x < m { (j, x) } else { (i, m) });
    let mut v = [C64::new(0.0, 0.0); 16];
    for k in 0..16 {
        v[k] = vt[(imin, k)].conj();
    }
    let r = devectorize(&v);
    r / r.trace()
}

#[test]
fn sign_mutation_is_detected_by_u0_oracle() {
    let p = ModelParams::symmetric(0.5, 0.0, 1.0, 1.0, 1.0);
    let s = setup(&p, 4.0, 128);
    let temps = s.uniform_temps(1.0);
    let lines = s.lines(&temps, None);
    let outers = s.outers(&lines, false);
    let k1 = s.sigma_order1(&temps);
    let cross = crossing(&s.stepper, &s.sf, &lines, &outers);
    let good = s.u0_exact_kernel(&temps).unwrap();
    let mut bad = good.clone();
    bad.axpy(C64::new(-2.0, 0.0), &cross);
    let dev = |k: &KernelFn| oracle_deviation(&s, &p, 1.0, k);
    let (dg, db) = (dev(&good), dev(&bad));
    eprintln!("oracle deviation: correct {dg:.2e}, mutated {db:.2e}, first order {:.2e}", dev(&k1));
    assert!(db > 10.0 * dg);
}
