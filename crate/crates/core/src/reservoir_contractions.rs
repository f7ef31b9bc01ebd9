//! Reservoir contraction functions and their temperature derivatives.

use std::f64::consts::PI;

use crate::superfermion_algebra::{ModelParams, Reservoir, Sign, SpinOrbital, C64};

/// Above this value of `pi t T` both functions are returned as exact zero.
pub const SINH_CUTOFF: f64 = 700.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ContractionError {
    #[error("contraction evaluated at t = 0")]
    SingularTime,
    #[error("reservoir index {0} out of range")]
    BadReservoir(usize),
    #[error("invalid temperature path: {0}")]
    BadPath(String),
}

fn phase(eta: Sign, mu: f64, t: f64) -> C64 {
    C64::from_polar(1.0, -eta.value() * mu * t)
}

/// `T / sinh(pi t T)` with the `T = 0` limit `1 / (pi t)`.
pub fn thermal_factor(t: f64, temp: f64) -> f64 {
    let x = PI * t * temp;
    if temp == 0.0 {
        1.0 / (PI * t)
    } else if x > SINH_CUTOFF {
        0.0
    } else if x < 1e-8 {
        1.0 / (PI * t) * (1.0 - x * x / 6.0)
    } else {
        temp / x.sinh()
    }
}

/// `[x coth x - 1] / sinh x` with `x = pi t T`, divided by nothing; finite at 0.
fn dt_factor(x: f64) -> f64 {
    if x > SINH_CUTOFF {
        0.0
    } else if x < 1e-3 {
        // x/3 - 7 x^3 / 90 + 31 x^5 / 2520
        let x2 = x * x;
        x * (1.0 / 3.0 - x2 * (7.0 / 90.0 - x2 * 31.0 / 2520.0))
    } else {
        (x / x.tanh() - 1.0) / x.sinh()
    }
}

/// `gamma^-_{eta sigma r}(t)` for one reservoir at temperature `temp`.
pub fn gamma_minus_res(res: &Reservoir, idx: SpinOrbital, t: f64, temp: f64) -> Result<C64, ContractionError> {
    if t <= 0.0 {
        return Err(ContractionError::SingularTime);
    }
    Ok(gamma_minus_unchecked(res, idx, t, temp))
}

/// Same as [`gamma_minus_res`] for `t > 0` callers that already checked.
#[inline]
pub fn gamma_minus_unchecked(res: &Reservoir, idx: SpinOrbital, t: f64, temp: f64) -> C64 {
    let g = res.gamma(idx.sigma) * thermal_factor(t, temp);
    C64::new(0.0, -g) * phase(idx.eta, res.mu, t)
}

/// `d gamma^-_{eta sigma r} / dT`.
#[inline]
pub fn gamma_minus_dt_res(res: &Reservoir, idx: SpinOrbital, t: f64, temp: f64) -> C64 {
    if temp == 0.0 || t == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let g = res.gamma(idx.sigma) * dt_factor(PI * t * temp);
    C64::new(0.0, g) * phase(idx.eta, res.mu, t)
}

/// Query for a single reservoir contraction.
#[derive(Clone, Copy, Debug)]
pub struct ContractionQuery {
    pub reservoir: usize,
    pub idx: SpinOrbital,
    pub t: f64,
    pub temperature: f64,
}

pub fn gamma_minus(params: &ModelParams, q: ContractionQuery) -> Result<C64, ContractionError> {
    let res = params.reservoirs.get(q.reservoir).ok_or(ContractionError::BadReservoir(q.reservoir))?;
    gamma_minus_res(res, q.idx, q.t, q.temperature)
}

pub fn gamma_minus_dt(params: &ModelParams, q: ContractionQuery) -> Result<C64, ContractionError> {
    let res = params.reservoirs.get(q.reservoir).ok_or(ContractionError::BadReservoir(q.reservoir))?;
    Ok(gamma_minus_dt_res(res, q.idx, q.t, q.temperature))
}

/// Reservoir temperatures along the flow parameter `alpha in [0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum TemperaturePath {
    /// `T(alpha) = T_inf + alpha (T_0 - T_inf)` for every reservoir.
    Linear { t_inf: Vec<f64>, t_final: Vec<f64> },
    /// Reservoirs are cooled one after another, each over an equal share of alpha.
    Sequential { t_inf: Vec<f64>, t_final: Vec<f64> },
    /// Piecewise-linear table: strictly increasing `alphas`, one temperature row per node.
    Table { alphas: Vec<f64>, temps: Vec<Vec<f64>> },
}

impl TemperaturePath {
    /// Common-temperature cooling of `n` reservoirs.
    pub fn common(n: usize, t_inf: f64, t_final: f64) -> Self {
        TemperaturePath::Linear { t_inf: vec![t_inf; n], t_final: vec![t_final; n] }
    }

    pub fn n_reservoirs(&self) -> usize {
        match self {
            TemperaturePath::Linear { t_inf, .. } | TemperaturePath::Sequential { t_inf, .. } => t_inf.len(),
            TemperaturePath::Table { temps, .. } => temps.first().map_or(0, |r| r.len()),
        }
    }

    pub fn validate(&self) -> Result<(), ContractionError> {
        let bad = |s: &str| Err(ContractionError::BadPath(s.to_string()));
        match self {
            TemperaturePath::Linear { t_inf, t_final } | TemperaturePath::Sequential { t_inf, t_final } => {
                if t_inf.len() != t_final.len() || t_inf.is_empty() {
                    return bad("endpoint lengths differ");
                }
                for (a, b) in t_inf.iter().zip(t_final) {
                    if !(*b >= 0.0 && a >= b) {
                        return bad("temperatures must be non-negative and non-increasing");
                    }
                }
            }
            TemperaturePath::Table { alphas, temps } => {
                if alphas.len() < 2 || alphas.len() != temps.len() {
                    return bad("table needs at least two rows");
                }
                if alphas[0] != 0.0 || *alphas.last().unwrap() != 1.0 {
                    return bad("alpha must run from 0 to 1");
                }
                let n = temps[0].len();
                for w in 0..alphas.len() - 1 {
                    if alphas[w + 1] <= alphas[w] || temps[w + 1].len() != n {
                        return bad("alphas must increase and rows must have equal length");
                    }
                    for r in 0..n {
                        if temps[w + 1][r] > temps[w][r] || temps[w + 1][r] < 0.0 {
                            return bad("temperatures must be non-negative and non-increasing");
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// `(T_r(alpha), dT_r/dalpha)` for every reservoir.
    pub fn eval(&self, alpha: f64) -> (Vec<f64>, Vec<f64>) {
        let alpha = alpha.clamp(0.0, 1.0);
        match self {
            TemperaturePath::Linear { t_inf, t_final } => {
                let t = t_inf.iter().zip(t_final).map(|(a, b)| a + alpha * (b - a)).collect();
                let d = t_inf.iter().zip(t_final).map(|(a, b)| b - a).collect();
                (t, d)
            }
            TemperaturePath::Sequential { t_inf, t_final } => {
                let n = t_inf.len() as f64;
                let mut t = Vec::new();
                let mut d = Vec::new();
                for (r, (a, b)) in t_inf.iter().zip(t_final).enumerate() {
                    let lo = r as f64 / n;
                    let hi = (r + 1) as f64 / n;
                    let s = ((alpha - lo) / (hi - lo)).clamp(0.0, 1.0);
                    t.push(a + s * (b - a));
                    let active = alpha >= lo && (alpha < hi || (r + 1) as f64 == n && alpha <= hi);
                    d.push(if active { (b - a) * n } else { 0.0 });
                }
                (t, d)
            }
            TemperaturePath::Table { alphas, temps } => {
                let w = match alphas.iter().position(|&a| a > alpha) {
                    Some(0) => 0,
                    Some(k) => k - 1,
                    None => alphas.len() - 2,
                };
                let (a0, a1) = (alphas[w], alphas[w + 1]);
                let s = (alpha - a0) / (a1 - a0);
                let t = temps[w].iter().zip(&temps[w + 1]).map(|(x, y)| x + s * (y - x)).collect();
                let d = temps[w].iter().zip(&temps[w + 1]).map(|(x, y)| (y - x) / (a1 - a0)).collect();
                (t, d)
            }
        }
    }
}

/// `d gamma^-_1 / d alpha = sum_r (dT_r/dalpha) d gamma^-_{1 r}/dT_r`.
pub fn gamma_path_derivative(params: &ModelParams, path: &TemperaturePath, alpha: f64, idx: SpinOrbital, t: f64) -> C64 {
    let (temps, vel) = path.eval(alpha);
    params
        .reservoirs
        .iter()
        .enumerate()
        .filter(|(r, _)| vel[*r] != 0.0)
        .map(|(r, res)| gamma_minus_dt_res(res, idx, t, temps[r]) * vel[r])
        .sum()
}

/// Sum over reservoirs of `gamma^-` at individual temperatures.
pub fn gamma_total(params: &ModelParams, temps: &[f64], idx: SpinOrbital, t: f64) -> C64 {
    params
        .reservoirs
        .iter()
        .zip(temps)
        .map(|(res, &tr)| gamma_minus_unchecked(res, idx, t, tr))
        .sum()
}

/// Sum over reservoirs of `d gamma^-/d alpha` given temperatures and velocities.
pub fn dgamma_total(params: &ModelParams, temps: &[f64], vel: &[f64], idx: SpinOrbital, t: f64) -> C64 {
    params
        .reservoirs
        .iter()
        .enumerate()
        .filter(|(r, _)| vel[*r] != 0.0)
        .map(|(r, res)| gamma_minus_dt_res(res, idx, t, temps[r]) * vel[r])
        .sum()
}
