//! Observables of the dot and physicality diagnostics of propagators.

use nalgebra::{SMatrix, Schur};
use rayon::prelude::*;
use std::f64::consts::PI;
use thiserror::Error;

use crate::renormalized_pt::{PtError, PtSetup};
use crate::superfermion_algebra::{
    apply_superop, devectorize, trace_covector, vectorize, ModelParams, Op4, Spin, SpinOrbital, SuperOp,
    Superfermions, C64, DIM,
};
use crate::tflow_core::Snapshot;
use crate::timegrid_calculus::{convolve_kernel, GridFn1, KernelFn};

type M16 = SMatrix<C64, DIM, DIM>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObsError {
    #[error("no eigenvalue near 1: nearest is {nearest}")]
    NoUnitEigenvalue { nearest: C64 },
    #[error("grid mismatch")]
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalObservables {
    pub n_up: f64,
    pub n_down: f64,
    pub n_corr: f64,
    pub fluct: f64,
}

impl LocalObservables {
    pub fn n(&self) -> f64 {
        self.n_up + self.n_down
    }

    pub fn max_diff(&self, o: &LocalObservables) -> f64 {
        [self.n_up - o.n_up, self.n_down - o.n_down, self.n_corr - o.n_corr, self.fluct - o.fluct]
            .iter()
            .fold(0.0_f64, |m, d| m.max(d.abs()))
    }
}

/// Occupations, `<n_up n_down>` and `<n^2> - <n>^2` in the Fock basis.
pub fn local_observables(rho: &Op4) -> LocalObservables {
    let p = |k: usize| rho[(k, k)].re;
    let n_up = p(1) + p(3);
    let n_down = p(2) + p(3);
    let n = n_up + n_down;
    let n2 = p(1) + p(2) + 4.0 * p(3);
    LocalObservables { n_up, n_down, n_corr: p(3), fluct: n2 - n * n }
}

fn trace_vec(v: &[C64; DIM]) -> C64 {
    trace_covector().iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Current into reservoir `r` at every grid time for the initial state `rho0`:
/// `I(t) = -i Tr[Sigma_I,inf rho(t)] - i Tr int_0^t Sigma_I(t - s) rho(s) ds`.
pub fn current(pt: &PtSetup, sigma_i: &KernelFn, r: usize, pi: &GridFn1, rho0: &Op4) -> Result<Vec<f64>, ObsError> {
    let conv = convolve_kernel(sigma_i, pi).map_err(|_| ObsError::Grid)?;
    let v0 = vectorize(rho0);
    let local = &pt.gen.sigma_i_inf[r];
    let mi = C64::new(0.0, -1.0);
    Ok((0..pi.grid.n)
        .map(|k| {
            let mut m = local.matmul(&pi.values[k]);
            m += conv.values[k];
            (mi * trace_vec(&m.apply(&v0))).re
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Physicality {
    pub choi_min: f64,
    pub trace_err: f64,
    pub herm_err: f64,
}

/// Choi matrix `C = sum_kl Pi(|k><l|) (x) |k><l|`.
///
/// With column stacking `vec(rho)[i + 4 j] = rho_ij`, the entry
/// `C[(i, k), (j, l)] = Pi[i + 4 j, k + 4 l]` with row index `i + 4 k`.
/// For a qubit the identity channel gives `C = |w><w|`, `w = |00> + |11>`,
/// with eigenvalues `{2, 0, 0, 0}`.
pub fn choi_matrix(pi: &SuperOp) -> M16 {
    let mut c = M16::zeros();
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    c[(i + 4 * k, j + 4 * l)] = pi.0[i + 4 * j][k + 4 * l];
                }
            }
        }
    }
    c
}

/// Smallest Choi eigenvalue, trace-preservation error and Hermiticity error.
pub fn cp_trace_hermiticity(pi: &SuperOp) -> Physicality {
    let c = choi_matrix(pi);
    let h = (c + c.adjoint()) * C64::new(0.5, 0.0);
    let choi_min = h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    let tc = trace_covector();
    let row = pi.apply_left(&tc);
    let trace_err = row.iter().zip(&tc).fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()));
    let mut herm_err = 0.0_f64;
    for k in 0..4 {
        for l in 0..4 {
            let mut e = Op4::zeros();
            e[(k, l)] = C64::new(1.0, 0.0);
            let a = apply_superop(pi, &e);
            let b = apply_superop(pi, &e.adjoint());
            herm_err = herm_err.max((a - b.adjoint()).iter().fold(0.0_f64, |m, z| m.max(z.norm())));
        }
    }
    Physicality { choi_min, trace_err, herm_err }
}

/// One row of the observables table.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableRecord {
    pub temperature: f64,
    pub t: f64,
    pub n_up: f64,
    pub n_down: f64,
    pub n_corr: f64,
    pub fluct: f64,
    /// One per reservoir.
    pub currents: Vec<f64>,
    pub choi_min: f64,
    pub trace_err: f64,
}

/// Observables at all grid times of a recorded flow point.
pub fn observable_records(pt: &PtSetup, snap: &Snapshot, rho0: &Op4) -> Result<Vec<ObservableRecord>, ObsError> {
    let currents: Vec<Vec<f64>> =
        (0..snap.sigma_i.len()).map(|r| current(pt, &snap.sigma_i[r], r, &snap.pi, rho0)).collect::<Result<_, _>>()?;
    let temperature = snap.temps.iter().cloned().fold(f64::INFINITY, f64::min);
    let grid = snap.pi.grid;
    Ok((0..grid.n)
        .into_par_iter()
        .map(|k| {
            let pi = &snap.pi.values[k];
            let o = local_observables(&apply_superop(pi, rho0));
            let ph = cp_trace_hermiticity(pi);
            ObservableRecord {
                temperature,
                t: grid.t(k),
                n_up: o.n_up,
                n_down: o.n_down,
                n_corr: o.n_corr,
                fluct: o.fluct,
                currents: currents.iter().map(|c| c[k]).collect(),
                choi_min: ph.choi_min,
                trace_err: ph.trace_err,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stationary {
    pub value: f64,
    pub reached: bool,
    pub max_slope: f64,
}

/// Plateau value from the last 20% of a series sampled at times `t`.
pub fn stationary_extract(t: &[f64], y: &[f64], scale: f64) -> Stationary {
    assert_eq!(t.len(), y.len());
    let n = t.len();
    let start = (n - (n / 5).max(2)).min(n - 2);
    let tail = &y[start..];
    let value = tail.iter().sum::<f64>() / tail.len() as f64;
    let max_slope =
        (start..n - 1).map(|k| ((y[k + 1] - y[k]) / (t[k + 1] - t[k])).abs()).fold(0.0_f64, f64::max);
    Stationary { value, reached: max_slope < 1e-3 * scale, max_slope }
}

#[derive(Clone, Debug)]
pub struct ReentranceReport {
    pub t_r: f64,
    pub rho1: Op4,
    pub eigenvalue: C64,
    /// Smallest eigenvalue of `rho1`.
    pub psd_min: f64,
    pub return_error: f64,
}

/// Fixed-point state of `Pi(t_r)`.
/// Trace-normalized Hermitian density matrix spanning the (numerical) null
/// space of `m`.
fn null_state(m: M16) -> Op4 {
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let k = svd.singular_values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k).unwrap();
    let mut v = [C64::new(0.0, 0.0); DIM];
    for (j, x) in v.iter_mut().enumerate() {
        *x = v_t[(k, j)].conj();
    }
    let mut rho = devectorize(&v);
    rho /= rho.trace();
    rho = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    rho / rho.trace()
}

/// Stationary state from the zero-frequency generator.
#[derive(Clone, Debug)]
pub struct ZeroFrequency {
    pub rho: Op4,
    pub obs: LocalObservables,
    pub currents: Vec<f64>,
}

/// `rho_stat` as null vector of `L_inf + int Sigma`, and the currents
/// `-i Tr[(Sigma_I,inf + int Sigma_I) rho_stat]`. Kernels are cut at the
/// end of their grid.
pub fn zero_frequency_state(pt: &PtSetup, sigma: &KernelFn, sigma_i: &[KernelFn]) -> ZeroFrequency {
    let rho = null_state((pt.gen.l_inf + sigma.integral()).to_na());
    let mi = C64::new(0.0, -1.0);
    let currents = sigma_i
        .iter()
        .enumerate()
        .map(|(r, k)| (mi * apply_superop(&(pt.gen.sigma_i_inf[r] + k.integral()), &rho).trace()).re)
        .collect();
    ZeroFrequency { obs: local_observables(&rho), rho, currents }
}

pub fn fixed_point_state(pi_tr: &SuperOp, t_r: f64) -> Result<ReentranceReport, ObsError> {
    let m = pi_tr.to_na();
    let eig = Schur::new(m).eigenvalues().ok_or(ObsError::NoUnitEigenvalue { nearest: C64::new(f64::NAN, 0.0) })?;
    let lam = eig
        .iter()
        .filter(|z| z.norm() <= 1.0 + 1e-8)
        .cloned()
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .unwrap_or(C64::new(f64::NAN, 0.0));
    if !((lam - 1.0).norm() <= 1e-6) {
        return Err(ObsError::NoUnitEigenvalue { nearest: lam });
    }
    let rho = null_state(m - M16::identity() * lam);
    let psd_min = rho.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    let back = apply_superop(pi_tr, &rho);
    let return_error = local_observables(&back).max_diff(&local_observables(&rho));
    Ok(ReentranceReport { t_r, rho1: rho, eigenvalue: lam, psd_min, return_error })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct U0Comparison {
    /// `max |Sigma - Sigma_exact|` over entries and nodes with `t <= t_lim`,
    /// relative to the largest exact entry there.
    pub kernel_rel: f64,
    /// Largest occupation difference between the two propagators.
    pub occupation_diff: f64,
}

/// Compare a kernel with the exact noninteracting one at temperatures `temps`.
pub fn u0_oracle(pt: &PtSetup, sigma: &KernelFn, temps: &[f64], t_lim: f64, rho0: &Op4) -> Result<U0Comparison, PtError> {
    let exact = pt.u0_exact_kernel(temps)?;
    let grid = pt.grid();
    let (mut diff, mut scale) = (0.0_f64, 0.0_f64);
    for k in (0..grid.n).filter(|&k| grid.t(k) <= t_lim * (1.0 + 1e-12)) {
        diff = diff.max((sigma.values[k] - exact.values[k]).max_abs());
        scale = scale.max(exact.values[k].max_abs());
    }
    let (a, b) = (pt.propagator(sigma)?, pt.propagator(&exact)?);
    let mut occupation_diff = 0.0_f64;
    for (x, y) in a.values.iter().zip(&b.values) {
        let (ox, oy) = (local_observables(&apply_superop(x, rho0)), local_observables(&apply_superop(y, rho0)));
        occupation_diff = occupation_diff.max((ox.n_up - oy.n_up).abs()).max((ox.n_down - oy.n_down).abs());
    }
    Ok(U0Comparison { kernel_rel: diff / scale, occupation_diff })
}

/// Closed-form limits used as references.
pub mod analytic {
    use super::*;

    fn gamma(p: &ModelParams) -> f64 {
        p.uniform_gamma().expect("uniform couplings")
    }

    fn bias(p: &ModelParams) -> f64 {
        p.reservoirs[0].mu - p.reservoirs.last().map_or(0.0, |r| r.mu)
    }

    /// Stationary current `Gamma V / (4 T)` for `T` far above all scales.
    pub fn high_t_current(p: &ModelParams, temperature: f64) -> f64 {
        gamma(p) * bias(p) / (4.0 * temperature)
    }

    /// Stationary fluctuations `(1 - (4 eps + 3 U) / (4 T)) / 2` for large `T`.
    pub fn high_t_fluct(epsilon: f64, u: f64, temperature: f64) -> f64 {
        0.5 * (1.0 - (4.0 * epsilon + 3.0 * u) / (4.0 * temperature))
    }

    /// `<n_s>(dt)` for two reservoirs with coupling `Gamma` each.
    pub fn short_time_occupation(p: &ModelParams, rho0: &Op4, s: Spin, dt: f64) -> f64 {
        let g = gamma(p);
        let o = local_observables(rho0);
        let (ns, nb) = match s {
            Spin::Up => (o.n_up, o.n_down),
            Spin::Down => (o.n_down, o.n_up),
        };
        0.5 - (-2.0 * g * dt).exp() * (0.5 - ns) + (p.u * (0.5 - nb) - 0.5 * (p.u + 2.0 * p.epsilon)) * g / PI * dt * dt
    }

    /// Coefficient of `dt^2` in [`short_time_occupation`].
    pub fn short_time_occupation_quadratic(p: &ModelParams, rho0: &Op4, s: Spin) -> f64 {
        let o = local_observables(rho0);
        let nb = if s == Spin::Up { o.n_down } else { o.n_up };
        (p.u * (0.5 - nb) - 0.5 * (p.u + 2.0 * p.epsilon)) * gamma(p) / PI
    }

    /// Left current at short times, linear in `dt`.
    pub fn short_time_current(p: &ModelParams, rho0: &Op4, dt: f64) -> f64 {
        let (i0, slope) = short_time_current_coeffs(p, rho0);
        i0 + slope * dt
    }

    /// `(I_L(0+), dI_L/dt(0+))`.
    pub fn short_time_current_coeffs(p: &ModelParams, rho0: &Op4) -> (f64, f64) {
        let g = gamma(p);
        let n = local_observables(rho0).n();
        let i0 = (1.0 - n) * g;
        let slope = (bias(p) - p.u - 2.0 * p.epsilon) * g / PI + (1.0 - n) * g * (p.u - 2.0 * PI * g) / PI;
        (i0, slope)
    }

    /// `C` in `dPi/dT (dt) = C dt^4` along a common temperature.
    pub fn quartic_dpi(p: &ModelParams, sf: &Superfermions, l_inf: &SuperOp, temperature: f64) -> SuperOp {
        let mut c = SuperOp::zero();
        for r in &p.reservoirs {
            for o in SpinOrbital::ALL {
                let g = r.gamma(o.sigma);
                let mut x = sf.gp(o).matmul(l_inf).matmul(sf.gp(o.bar()));
                x.axpy(C64::new(o.eta.value() * r.mu, 0.0), &sf.gp(o).matmul(sf.gp(o.bar())));
                c.axpy(C64::new(-PI / 36.0 * temperature * g, 0.0), &x);
            }
        }
        c
    }

    #[derive(Clone, Copy, Debug, PartialEq)]
    pub struct LowTFit {
        pub d0: f64,
        pub c: f64,
        pub r2: f64,
    }

    /// Least-squares fit `y = d0 (1 - c T^2)`.
    pub fn low_t_fluct_fit(temps: &[f64], ys: &[f64]) -> LowTFit {
        let n = temps.len() as f64;
        let xs: Vec<f64> = temps.iter().map(|t| t * t).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let a = my - b * mx;
        let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
        let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        LowTFit { d0: a, c: -b / a, r2 }
    }
}

#[cfg(test)]
mod tests;
