use super::*;
use crate::superfermion_algebra::ModelParams;

pub(crate) fn small(params: &ModelParams, t_inf: f64, t_end: f64) -> FlowSetup {
    let grid = TimeGrid::new(3.0, 48).unwrap();
    let path = TemperaturePath::common(params.reservoirs.len(), t_inf, t_end);
    FlowSetup::new(params, grid, VertexGrids { t_max: 3.0, points: 12, points_two: 8 }, path).unwrap()
}

fn rel(a: &KernelFn, b: &KernelFn) -> f64 {
    let mut d = a.clone();
    d.axpy(C64::new(-1.0, 0.0), b);
    d.max_abs() / b.max_abs()
}

/// A state away from the initial one: a few crude Euler steps.
fn evolved(s: &FlowSetup, alpha: f64) -> FlowVars {
    let mut y = s.initial().unwrap();
    let n = 4;
    for k in 0..n {
        let a = alpha * k as f64 / n as f64;
        let f = s.rhs(a, &y, &s.zeros()).unwrap().deriv;
        y.axpy(alpha / n as f64, &f);
    }
    y
}

#[test]
fn rhs_outputs_are_annihilated_by_trace() {
    let p = ModelParams::symmetric(-1.0, 2.0, 1.0, 1.0, 1.0);
    let s = small(&p, 40.0, 0.5);
    let y = evolved(&s, 0.6);
    let guess = s.rhs(0.6, &y, &s.zeros()).unwrap().deriv;
    let f = s.rhs(0.6, &y, &guess).unwrap().deriv;
    let scale = f.norm();
    assert!(f.sigma.trace_error() <= 1e-9 * scale, "{}", f.sigma.trace_error());
    for k in &f.sigma_i {
        // current kernels are traced with G- on the left, no annihilation
        assert!(k.is_finite());
    }
    for g in &f.g1 {
        for v in &g.data {
            assert!(v.trace_row().iter().all(|z| z.norm() <= 1e-9 * scale));
        }
    }
    for g in &f.g12 {
        for v in &g.data {
            assert!(v.trace_row().iter().all(|z| z.norm() <= 1e-9 * scale));
        }
    }
    assert!(y.sigma.trace_error() <= 1e-9 * y.sigma.max_abs());
}

#[test]
fn slashed_contraction_term_is_derivative_of_first_order() {
    let p = ModelParams::symmetric(-1.0, 2.0, 1.0, 0.5, 1.0);
    let s = small(&p, 40.0, 2.0);
    let alpha = 0.3;
    let (temps, vel) = s.path.eval(alpha);
    let gam = SpinOrbital::ALL.map(|o| gamma_line(&p, &temps, o, None));
    let dgam = SpinOrbital::ALL.map(|o| dgamma_line(&p, &temps, &vel, o, None));
    let free = GridFn1 { grid: s.pt.grid(), values: s.pt.free().to_vec() };
    let k = s.fine_terms(&free, &GridFn1::zeros(s.pt.grid()), &gam, &dgam, false);
    // central difference of the first-order kernel, Richardson-improved
    let fd = |d: f64| {
        let mut a = s.pt.sigma_order1(&s.temps(alpha + d));
        a.axpy(C64::new(-1.0, 0.0), &s.pt.sigma_order1(&s.temps(alpha - d)));
        a.scaled(C64::new(0.5 / d, 0.0))
    };
    let (a, b) = (fd(2e-3), fd(1e-3));
    let mut r = b.scaled(C64::new(4.0 / 3.0, 0.0));
    r.axpy(C64::new(-1.0 / 3.0, 0.0), &a);
    assert!(rel(&k, &r) < 1e-6, "{:e}", rel(&k, &r));
}

#[test]
fn three_argument_rate_completes_the_leading_derivative() {
    let p = ModelParams::symmetric(-1.0, 2.0, 1.0, 0.5, 1.0);
    let s = small(&p, 40.0, 2.0);
    let alpha = 0.5;
    let (temps, vel) = s.path.eval(alpha);
    let y = evolved(&s, alpha);
    let (f, _) = s.rhs_consistent(alpha, &y, &IterOpts::default()).unwrap();
    let ev = s.rhs(alpha, &y, &f).unwrap();
    let sf = &s.pt.sf;
    let pi_q = resample_pi(&ev.pi, s.pt.free(), &s.qfree, s.qgrid);
    let dpi_q = resample(&ev.dpi, s.qgrid);
    let gam = SpinOrbital::ALL.map(|o| gamma_line(&p, &temps, o, None));
    let gq = LineSet::new(&gam, s.qgrid);
    let rest = d_rest_two(sf, s.qgrid, &pi_q, &dpi_q, &gq);
    let shifted = |e: f64| -> Vec<SuperOp> { pi_q.iter().zip(&dpi_q).map(|(a, b)| *a + b.scale_re(e)).collect() };
    let eps = 1e-4;
    let up = vertex_rhs::leading_two(sf, s.qgrid, &shifted(eps), &gq);
    let dn = vertex_rhs::leading_two(sf, s.qgrid, &shifted(-eps), &gq);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for c in 0..16 {
        for k in 0..rest[c].data.len() {
            let fd = (up[c].data[k] - dn[c].data[k]).scale_re(0.5 / eps);
            worst = worst.max((fd + rest[c].data[k]).max_abs());
            scale = scale.max(fd.max_abs());
        }
    }
    assert!(scale > 0.0 && worst < 1e-6 * scale, "{worst:e} vs {scale:e}");
    // the temperature direction carries the contraction derivative alone
    let dgam = SpinOrbital::ALL.map(|o| dgamma_line(&p, &temps, &vel, o, None));
    let dq = LineSet::new(&dgam, s.qgrid);
    let direct = vertex_rhs::leading_two(sf, s.qgrid, &pi_q, &dq);
    let d = 1e-4;
    let lines = |a: f64| LineSet::new(&SpinOrbital::ALL.map(|o| gamma_line(&p, &s.temps(a), o, None)), s.qgrid);
    let up = vertex_rhs::leading_two(sf, s.qgrid, &pi_q, &lines(alpha + d));
    let dn = vertex_rhs::leading_two(sf, s.qgrid, &pi_q, &lines(alpha - d));
    let mut worst: f64 = 0.0;
    for c in 0..16 {
        for k in 0..direct[c].data.len() {
            let fd = (up[c].data[k] - dn[c].data[k]).scale_re(0.5 / d);
            worst = worst.max((fd - direct[c].data[k]).max_abs());
        }
    }
    let scale = direct.iter().fold(0.0_f64, |m, g| m.max(g.max_abs()));
    assert!(worst < 1e-5 * scale, "{worst:e} vs {scale:e}");
}

#[test]
fn rates_vanish_towards_zero_temperature() {
    let p = ModelParams::symmetric(-1.0, 2.0, 1.0, 0.5, 1.0);
    let s = small(&p, 40.0, 0.0);
    let y = evolved(&s, 0.9);
    let at = |t: f64| {
        let a = s.alpha_of_temperature(t).unwrap();
        s.rhs_consistent(a, &y, &IterOpts::default()).unwrap().0.norm()
    };
    let (hi, lo) = (at(1.0), at(1e-3));
    assert!(lo < 1e-2 * hi, "{lo:e} vs {hi:e}");
}

#[test]
fn u0_vertex_remainder_rates_vanish_algebraically() {
    let p = ModelParams::symmetric(0.5, 0.0, 1.0, 1.0, 1.0);
    let s = small(&p, 40.0, 0.5);
    let y = evolved(&s, 0.5);
    let f = s.rhs_consistent(0.5, &y, &IterOpts::default()).unwrap().0;
    let g1 = f.g1.iter().fold(0.0_f64, |m, g| m.max(g.max_abs()));
    let g12 = f.g12.iter().fold(0.0_f64, |m, g| m.max(g.max_abs()));
    let scale = f.sigma.max_abs();
    assert!(g1 < 1e-10 * scale && g12 < 1e-10 * scale, "{g1:e} {g12:e} vs {scale:e}");
}

#[test]
fn bare_vertex_is_fixed_and_remainders_start_at_zero() {
    let p = ModelParams::symmetric(-1.0, 2.0, 1.0, 0.5, 1.0);
    let s = small(&p, 40.0, 0.5);
    let y = s.initial().unwrap();
    let v = y.vertex_one(&s);
    for o in SpinOrbital::ALL {
        assert_eq!(v.bare[o.index()], *s.pt.sf.gp(o));
    }
    assert_eq!(y.vertex_two().rest.len(), 16);
    assert_eq!(y.g1.iter().fold(0.0_f64, |m, g| m.max(g.max_abs())), 0.0);
}

#[test]
fn consistent_rhs_is_a_fixed_point_of_the_guess_map() {
    let p = ModelParams::symmetric(-1.0, 2.0, 1.0, 0.5, 1.0);
    let s = small(&p, 40.0, 0.5);
    let y = evolved(&s, 0.7);
    let opts = IterOpts::default();
    let (f, it) = s.rhs_consistent(0.7, &y, &opts).unwrap();
    assert!(it < opts.max_iter, "{it}");
    let again = s.rhs(0.7, &y, &f).unwrap().deriv;
    let mut d = again.clone();
    d.axpy(-1.0, &f);
    assert!(d.norm() <= 1e-7 * f.norm(), "{:e}", d.norm() / f.norm());
}

#[test]
fn flow_parameter_conversions() {
    let p = ModelParams::symmetric(-1.0, 2.0, 1.0, 0.5, 1.0);
    let s = small(&p, 40.0, 0.5);
    assert!((s.speed - 39.5).abs() < 1e-12);
    let a = s.alpha_of_temperature(10.0).unwrap();
    assert!((s.temps(a)[0] - 10.0).abs() < 1e-9);
    assert!(s.alpha_of_temperature(100.0).is_none());
    let bad = StepperConfig { dt_min: 2.0, dt_init: 1.0, ..Default::default() };
    assert!(bad.validate().is_err());
    assert!(StepperConfig::default().validate().is_ok());
}

#[test]
fn start_temperature_is_checked() {
    let p = ModelParams::symmetric(-1.0, 2.0, 1.0, 0.5, 1.0);
    let s = small(&p, 5.0, 0.5);
    assert!(matches!(s.initial(), Err(FlowError::Pt(PtError::BadTemperature { .. }))));
}

#[test]
#[ignore]
fn timing_probe() {
    use std::time::Instant;
    let env = |k: &str, d: f64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let p = ModelParams::symmetric(0.5, env("U", 0.0), 1.0, 1.0, 1.0);
    let grid = TimeGrid::new(env("TMAX", 2.0), env("NPTS", 24.0) as usize).unwrap();
    let path = TemperaturePath::common(2, 100.0, 0.5);
    let s = FlowSetup::new(&p, grid, VertexGrids::for_grid(grid), path).unwrap();
    let t = Instant::now();
    let y = s.initial().unwrap();
    eprintln!("initial {:?}", t.elapsed());
    for a in [0.0, 0.5, 0.99] {
        let t = Instant::now();
        let z = s.zeros();
        let _ = s.rhs(a, &y, &z).unwrap();
        eprintln!("rhs {a} {:?}", t.elapsed());
        let (temps, vel) = s.path.eval(a);
        let t = Instant::now();
        let gam = SpinOrbital::ALL.map(|o| gamma_line(&p, &temps, o, None));
        let dgam = SpinOrbital::ALL.map(|o| dgamma_line(&p, &temps, &vel, o, None));
        let pi = s.propagator(&y).unwrap();
        eprintln!("  lines+dyson {:?}", t.elapsed());
        let t = Instant::now();
        let _ = s.fine_terms(&pi, &pi, &gam, &dgam, false);
        eprintln!("  fine_terms {:?}", t.elapsed());
        let t = Instant::now();
        let _ = LineSet::new(&gam, s.vgrid);
        eprintln!("  lineset {:?}", t.elapsed());
    }
}
