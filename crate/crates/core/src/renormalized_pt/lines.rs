//! Contraction lines with their small-time data.

use std::f64::consts::PI;

use crate::reservoir_contractions::{gamma_minus_dt_res, gamma_minus_unchecked};
use crate::superfermion_algebra::{ModelParams, SpinOrbital, C64};
use crate::timegrid_calculus::Contraction;

/// Lines are treated as zero beyond `exp(-LINE_CUTOFF)` of their decay.
const LINE_CUTOFF: f64 = 45.0;

type LineFn = Box<dyn Fn(f64) -> C64 + Sync + Send>;

/// A scalar contraction `g(u)` with `g = s / u + c + O(u)` at the origin.
pub struct Line {
    pub g: LineFn,
    pub singular: C64,
    pub finite0: C64,
    pub decay: f64,
    pub cutoff: f64,
}

impl Line {
    pub fn contraction(&self) -> Contraction<'_> {
        Contraction { g: &*self.g, singular: self.singular, decay: self.decay, cutoff: self.cutoff }
    }

    pub fn eval(&self, u: f64) -> C64 {
        if u >= self.cutoff {
            C64::new(0.0, 0.0)
        } else {
            (self.g)(u)
        }
    }
}

fn scales(params: &ModelParams, temps: &[f64], res: Option<usize>) -> (f64, f64) {
    let mut decay = f64::INFINITY;
    let mut cutoff = 0.0_f64;
    for (r, &t) in temps.iter().enumerate() {
        if res.is_some_and(|q| q != r) {
            continue;
        }
        let g = &params.reservoirs[r];
        if g.gamma_up == 0.0 && g.gamma_down == 0.0 {
            continue;
        }
        decay = decay.min(PI * t);
        cutoff = cutoff.max(if t > 0.0 { LINE_CUTOFF / (PI * t) } else { f64::INFINITY });
    }
    if !decay.is_finite() {
        decay = 0.0;
    }
    (decay, cutoff)
}

/// `gamma^-_1(u)` summed over reservoirs, or for reservoir `res` only.
pub fn gamma_line(params: &ModelParams, temps: &[f64], idx: SpinOrbital, res: Option<usize>) -> Line {
    let sel: Vec<(crate::superfermion_algebra::Reservoir, f64)> = params
        .reservoirs
        .iter()
        .zip(temps)
        .enumerate()
        .filter(|(r, _)| res.map_or(true, |q| q == *r))
        .map(|(_, (g, &t))| (*g, t))
        .collect();
    let mut singular = C64::new(0.0, 0.0);
    let mut finite0 = C64::new(0.0, 0.0);
    for (g, _) in &sel {
        let gam = g.gamma(idx.sigma) / PI;
        singular += C64::new(0.0, -gam);
        finite0 += C64::new(-gam * idx.eta.value() * g.mu, 0.0);
    }
    let (decay, cutoff) = scales(params, temps, res);
    let g: LineFn = Box::new(move |u| sel.iter().map(|(g, t)| gamma_minus_unchecked(g, idx, u, *t)).sum());
    Line { g, singular, finite0, decay, cutoff }
}

/// `sum_r v_r d gamma^-_{1 r} / dT_r`, optionally for one reservoir.
pub fn dgamma_line(params: &ModelParams, temps: &[f64], vel: &[f64], idx: SpinOrbital, res: Option<usize>) -> Line {
    let sel: Vec<(crate::superfermion_algebra::Reservoir, f64, f64)> = params
        .reservoirs
        .iter()
        .zip(temps.iter().zip(vel))
        .enumerate()
        .filter(|(r, (_, (_, v)))| res.map_or(true, |q| q == *r) && **v != 0.0)
        .map(|(_, (g, (&t, &v)))| (*g, t, v))
        .collect();
    let (decay, cutoff) = scales(params, temps, res);
    let g: LineFn = Box::new(move |u| sel.iter().map(|(g, t, v)| gamma_minus_dt_res(g, idx, u, *t) * *v).sum());
    let z = C64::new(0.0, 0.0);
    Line { g, singular: z, finite0: z, decay, cutoff }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_time_data_matches_expansion() {
        let p = ModelParams::symmetric(0.3, 1.0, 0.7, 1.3, 2.0);
        let temps = [2.0, 2.0];
        let idx = SpinOrbital::ALL[1];
        let l = gamma_line(&p, &temps, idx, None);
        let u = 1e-5;
        let approx = l.singular / u + l.finite0;
        assert!(((l.g)(u) - approx).norm() < 1e-3);
        let r = gamma_line(&p, &temps, idx, Some(0));
        assert!((r.singular.im + 0.7 / PI).abs() < 1e-15);
    }
}
