//! Renormalized perturbation theory around infinite temperature.
//!
//! Kernels are returned as [`KernelFn`] (nodal samples plus cell moments);
//! `.nodal()` gives the plain grid function. All kernels are `Sigma`, not
//! `-i Sigma`, so they plug directly into the Dyson solver.

mod lines;
mod sandwich;
mod second;

pub use lines::{dgamma_line, gamma_line, Line};
pub use sandwich::{sandwich_kernel, Inner, Term};
pub use second::{crossing, nested, Outer};

use crate::superfermion_algebra::{
    renormalized_generators, ModelParams, RenormalizedGenerators, Sign, Spin, SpinOrbital, SuperOp, Superfermions, C64,
};
use crate::timegrid_calculus::{solve_dyson, DysonStepper, GridError, GridFn1, KernelFn, TimeGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelOrder {
    First,
    NextToLeading,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PtError {
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("zero-time kernel needs uniform couplings")]
    UnsupportedCouplings,
    #[error("T_inf / scale = {ratio:.2} is below the required 5")]
    BadTemperature { ratio: f64 },
    #[error("reservoir index {0} out of range")]
    BadReservoir(usize),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Model, grid and the `T = infinity` objects shared by all kernels.
pub struct PtSetup {
    pub params: ModelParams,
    pub sf: Superfermions,
    pub gen: RenormalizedGenerators,
    pub stepper: DysonStepper,
}

impl PtSetup {
    pub fn new(params: &ModelParams, grid: TimeGrid) -> Self {
        let sf = Superfermions::new();
        let gen = renormalized_generators(params, &sf);
        let stepper = DysonStepper::new(&gen.l_inf, grid);
        PtSetup { params: params.clone(), sf, gen, stepper }
    }

    pub fn grid(&self) -> TimeGrid {
        self.stepper.grid
    }

    /// `Pi_inf` at the grid nodes.
    pub fn free(&self) -> &[SuperOp] {
        &self.stepper.free
    }

    pub fn uniform_temps(&self, t: f64) -> Vec<f64> {
        vec![t; self.params.reservoirs.len()]
    }

    fn lines(&self, temps: &[f64], res: Option<usize>) -> [Line; 4] {
        SpinOrbital::ALL.map(|o| gamma_line(&self.params, temps, o, res))
    }

    fn outers<'a>(&'a self, lines: &'a [Line; 4], current: bool) -> [Outer<'a>; 4] {
        SpinOrbital::ALL.map(|o| {
            let (left, coef) = if current {
                (self.sf.sm(o), C64::new(0.0, -0.5 * o.eta.value()))
            } else {
                (self.sf.sp(o), C64::new(0.0, -1.0))
            };
            Outer { line: &lines[o.index()], left, coef }
        })
    }

    fn first(&self, outers: &[Outer<'_>; 4]) -> KernelFn {
        let terms: Vec<Term<'_>> = SpinOrbital::ALL
            .iter()
            .map(|&o| {
                let out = &outers[o.index()];
                Term { line: out.line, left: out.left, right: self.sf.sp(o.bar()), coef: out.coef }
            })
            .collect();
        let inner = Inner::Propagator { l: &self.gen.l_inf, free: self.free(), diff: None };
        sandwich_kernel(self.grid(), &inner, &terms)
    }

    fn second(&self, temps: &[f64], outers: &[Outer<'_>; 4]) -> Result<KernelFn, PtError> {
        let lines = self.lines(temps, None);
        let s1 = self.first(&self.outers(&lines, false));
        let k1 = s1.scaled(C64::new(0.0, -1.0));
        let mut k = nested(&self.stepper, &self.sf, &k1, outers)?;
        k.axpy(C64::new(1.0, 0.0), &crossing(&self.stepper, &self.sf, &lines, outers));
        Ok(k)
    }

    /// First-order kernel `-i Sigma = -gamma_1 G+_1 Pi_inf G+_1bar`.
    pub fn sigma_order1(&self, temps: &[f64]) -> KernelFn {
        let lines = self.lines(temps, None);
        self.first(&self.outers(&lines, false))
    }

    /// The nested plus crossing four-vertex diagrams.
    pub fn sigma_order2(&self, temps: &[f64]) -> Result<KernelFn, PtError> {
        let lines = self.lines(temps, None);
        self.second(temps, &self.outers(&lines, false))
    }

    pub fn sigma(&self, temps: &[f64], order: KernelOrder) -> Result<KernelFn, PtError> {
        let mut k = self.sigma_order1(temps);
        if order == KernelOrder::NextToLeading {
            k.axpy(C64::new(1.0, 0.0), &self.sigma_order2(temps)?);
        }
        Ok(k)
    }

    /// Current kernel of reservoir `r`: leftmost `G+_1 -> (eta_1/2) G-_1`
    /// and `gamma_1 -> gamma_{1 r}` in every diagram.
    pub fn current_sigma(&self, temps: &[f64], r: usize, order: KernelOrder) -> Result<KernelFn, PtError> {
        if r >= self.params.reservoirs.len() {
            return Err(PtError::BadReservoir(r));
        }
        let lines = self.lines(temps, Some(r));
        let outers = self.outers(&lines, true);
        let mut k = self.first(&outers);
        if order == KernelOrder::NextToLeading {
            k.axpy(C64::new(1.0, 0.0), &self.second(temps, &outers)?);
        }
        Ok(k)
    }

    /// Exact kernel of the noninteracting dot.
    pub fn u0_exact_kernel(&self, temps: &[f64]) -> Result<KernelFn, PtError> {
        if self.params.u != 0.0 {
            return Err(PtError::NotApplicable(format!("U = {} is not zero", self.params.u)));
        }
        self.sigma(temps, KernelOrder::NextToLeading)
    }

    pub fn propagator(&self, sigma: &KernelFn) -> Result<GridFn1, PtError> {
        Ok(solve_dyson(&self.stepper, sigma)?)
    }
}

/// `Sigma(t = 0)` for uniform couplings; independent of temperature.
pub fn zero_time_kernel(params: &ModelParams) -> Result<SuperOp, PtError> {
    let gamma = params.uniform_gamma().ok_or(PtError::UnsupportedCouplings)?;
    let sf = Superfermions::new();
    let l_inf = renormalized_generators(params, &sf).l_inf;
    let nres = params.reservoirs.len() as f64;
    let pref = C64::new(nres * gamma / std::f64::consts::PI, 0.0);
    let mut k = SuperOp::zero();
    for o in SpinOrbital::ALL {
        let gl = sf.gp(o).matmul(&l_inf);
        k.add_mul(pref, &gl, sf.gp(o.bar()));
    }
    let mu_sum: f64 = params.reservoirs.iter().map(|r| r.mu).sum();
    if mu_sum != 0.0 {
        for s in [Spin::Up, Spin::Down] {
            let p = SpinOrbital::new(Sign::Plus, s);
            let m = SpinOrbital::new(Sign::Minus, s);
            k.add_mul(C64::new(2.0 * gamma * mu_sum / std::f64::consts::PI, 0.0), sf.gp(p), sf.gp(m));
        }
    }
    // k is -i Sigma(0)
    Ok(k.scale(C64::new(0.0, 1.0)))
}

/// Quadratic extrapolation to `t = 0` from the first three nonzero times.
pub fn extrapolate_zero(f: &GridFn1) -> SuperOp {
    let mut v = f.values[1].scale_re(3.0);
    v.axpy(C64::new(-3.0, 0.0), &f.values[2]);
    v += f.values[3];
    v
}

/// Default flow start `50 max(Gamma_tot, |eps|, U, |mu_r|)`.
pub fn default_t_inf(params: &ModelParams) -> f64 {
    let mut m = params.gamma_total(Spin::Up).max(params.gamma_total(Spin::Down));
    m = m.max(params.epsilon.abs()).max(params.u.abs());
    for r in &params.reservoirs {
        m = m.max(r.mu.abs());
    }
    50.0 * m
}

/// Ratio check for the flow start: error below 5, warning below 20.
pub fn check_t_inf(params: &ModelParams, t_inf: f64) -> Result<Option<String>, PtError> {
    let ratio = t_inf / params.max_scale().max(f64::MIN_POSITIVE);
    if ratio < 5.0 {
        Err(PtError::BadTemperature { ratio })
    } else if ratio < 20.0 {
        Ok(Some(format!("T_inf is only {ratio:.1} times the largest model scale")))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests;
