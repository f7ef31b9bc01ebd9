//! Temperature flow of the memory kernels and the effective vertices.
//!
//! The flow runs along a path parameter `alpha in [0, 1]` of a
//! [`TemperaturePath`]; all derivatives are `d/dalpha`. The state is
//! `Phi = (Sigma, Sigma_I[r], G1 rest, G12 rest)`; `Pi` is always re-solved
//! from `Sigma` by the Dyson equation.
//!
//! The regular part of `G1` is split into a leading piece carried in closed
//! form with the current `Pi` and temperature,
//! `R_bb,1(x, y) = sum_2 gamma_2(x + y) G+_2 Pi(x) G+_1 Pi(y) G+_2bar`,
//! plus a stored remainder on a coarse grid. Likewise
//! `G12 = -sum_3 gamma_3(a + b + c) G+_3 Pi(a) G+_1 Pi(b) G+_2 Pi(c) G+_3bar`
//! plus a remainder on a coarser three-argument grid.

mod coarse;
pub mod stepper;
mod vertex_rhs;

use std::time::Instant;

use crate::renormalized_pt::{dgamma_line, gamma_line, sandwich_kernel, Inner, KernelOrder, Line, PtError, PtSetup, Term};
use crate::reservoir_contractions::TemperaturePath;
use crate::superfermion_algebra::{propagator_infinity, ModelParams, SparseOp, SpinOrbital, SuperOp, Superfermions, C64};
use crate::timegrid_calculus::{dpi_dt_dyson, solve_dyson, GridError, GridFn1, GridFn2, GridFn3, KernelFn, TimeGrid};
use coarse::{resample, resample_pi, sparse_all, Coarse, LineSet};
use stepper::{bdf2_ab2_step, controller_factor, trapezoid_step, FlowVector, History, IterOpts, StepError};
use vertex_rhs::{d_rest_one, d_rest_two, kernel_vertex_part, pq_rest, rest_terms, OneInput, Strings3};

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("step size fell below dT_min = {dt_min:e} at T = {temperature:.6}")]
    FlowStalled { temperature: f64, dt_min: f64 },
    #[error("invalid stepper configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Pt(#[from] PtError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
}

/// Two-time-argument effective vertex. `bare` multiplies the two delta
/// functions and stays at `G+_1`; `rest` is the stored remainder.
#[derive(Clone, Debug)]
pub struct VertexOne {
    pub bare: [SuperOp; 4],
    pub rest: Vec<GridFn2>,
}

/// Three-time-argument vertex remainder, component `4 a + b` for `(a, b)`.
#[derive(Clone, Debug)]
pub struct VertexTwo {
    pub rest: Vec<GridFn3>,
}

/// The flowing quantities `Phi`.
#[derive(Clone, Debug)]
pub struct FlowVars {
    pub sigma: KernelFn,
    pub sigma_i: Vec<KernelFn>,
    pub g1: Vec<GridFn2>,
    pub g12: Vec<GridFn3>,
}

fn kernel_axpy(a: &mut KernelFn, z: f64, b: &KernelFn) {
    a.axpy(C64::new(z, 0.0), b);
}

impl FlowVector for FlowVars {
    fn axpy(&mut self, a: f64, x: &Self) {
        kernel_axpy(&mut self.sigma, a, &x.sigma);
        for (u, v) in self.sigma_i.iter_mut().zip(&x.sigma_i) {
            kernel_axpy(u, a, v);
        }
        for (u, v) in self.g1.iter_mut().zip(&x.g1) {
            u.axpy(C64::new(a, 0.0), v);
        }
        for (u, v) in self.g12.iter_mut().zip(&x.g12) {
            u.axpy(C64::new(a, 0.0), v);
        }
    }

    fn scale_mut(&mut self, a: f64) {
        let z = C64::new(a, 0.0);
        self.sigma = self.sigma.scaled(z);
        for u in &mut self.sigma_i {
            *u = u.scaled(z);
        }
        for u in &mut self.g1 {
            u.data.iter_mut().for_each(|v| v.scale_mut(z));
        }
        for u in &mut self.g12 {
            u.data.iter_mut().for_each(|v| v.scale_mut(z));
        }
    }

    fn norm(&self) -> f64 {
        let mut m = self.sigma.max_abs();
        for u in &self.sigma_i {
            m = m.max(u.max_abs());
        }
        for u in &self.g1 {
            m = m.max(u.max_abs());
        }
        for u in &self.g12 {
            m = m.max(u.max_abs());
        }
        m
    }
}

impl FlowVars {
    pub fn is_finite(&self) -> bool {
        self.sigma.is_finite()
            && self.sigma_i.iter().all(|k| k.is_finite())
            && self.g1.iter().all(|g| g.data.iter().all(|v| v.is_finite()))
            && self.g12.iter().all(|g| g.data.iter().all(|v| v.is_finite()))
    }

    pub fn vertex_one(&self, setup: &FlowSetup) -> VertexOne {
        VertexOne { bare: SpinOrbital::ALL.map(|o| *setup.pt.sf.gp(o)), rest: self.g1.clone() }
    }

    pub fn vertex_two(&self) -> VertexTwo {
        VertexTwo { rest: self.g12.clone() }
    }
}

/// Temperature steps and tolerances. Steps are in temperature units and
/// converted to the path parameter by the largest path velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct StepperConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub error_tol: f64,
    pub t_floor: f64,
    pub max_iter: usize,
    pub iter_tol: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig { dt_init: 1.0, dt_min: 1e-6, dt_max: 100.0, error_tol: 2e-4, t_floor: 0.01, max_iter: 20, iter_tol: 1e-8 }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let ok = self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max;
        if !ok {
            return Err(FlowError::BadConfig("need 0 < dT_min <= dT_init <= dT_max".into()));
        }
        if !(self.error_tol > 0.0) || !(self.t_floor >= 0.0) || self.max_iter == 0 || !(self.iter_tol > 0.0) {
            return Err(FlowError::BadConfig("error_tol and iter_tol must be positive, T_floor >= 0".into()));
        }
        Ok(())
    }
}

/// Resolution of the vertex remainders.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexGrids {
    pub t_max: f64,
    pub points: usize,
    pub points_two: usize,
}

impl VertexGrids {
    pub fn for_grid(grid: TimeGrid) -> Self {
        VertexGrids { t_max: grid.t_max().min(5.0), points: 32, points_two: 16 }
    }
}

/// Everything that is fixed along one flow.
pub struct FlowSetup {
    pub pt: PtSetup,
    pub path: TemperaturePath,
    pub vgrid: TimeGrid,
    pub qgrid: TimeGrid,
    vfree: Vec<SuperOp>,
    qfree: Vec<SuperOp>,
    /// Largest `|dT_r/dalpha|` along the path.
    pub speed: f64,
    /// Flips the sign of the `dPi` kernel diagram. Only for testing the
    /// detection power of the validation checks.
    #[doc(hidden)]
    pub mutate_sign: bool,
}

/// Derivative together with the propagator it was evaluated with.
pub struct RhsEval {
    pub deriv: FlowVars,
    pub pi: GridFn1,
    pub dpi: GridFn1,
}

fn path_speed(path: &TemperaturePath) -> f64 {
    let mut m = 0.0_f64;
    for k in 0..=200 {
        let (_, v) = path.eval(k as f64 / 200.0);
        m = v.iter().fold(m, |a, x| a.max(x.abs()));
    }
    m
}

impl FlowSetup {
    pub fn new(params: &ModelParams, grid: TimeGrid, vertex: VertexGrids, path: TemperaturePath) -> Result<Self, FlowError> {
        if path.n_reservoirs() != params.reservoirs.len() {
            return Err(FlowError::BadConfig("path and model disagree on the number of reservoirs".into()));
        }
        path.validate().map_err(|e| FlowError::BadConfig(e.to_string()))?;
        let pt = PtSetup::new(params, grid);
        let vgrid = TimeGrid::new(vertex.t_max.min(grid.t_max()), vertex.points)?;
        let qgrid = TimeGrid::new(vgrid.t_max(), vertex.points_two)?;
        let vfree = vgrid.times().iter().map(|&t| propagator_infinity(&pt.gen.l_inf, t)).collect();
        let qfree = qgrid.times().iter().map(|&t| propagator_infinity(&pt.gen.l_inf, t)).collect();
        let speed = path_speed(&path);
        Ok(FlowSetup { pt, path, vgrid, qgrid, vfree, qfree, speed, mutate_sign: false })
    }

    pub fn n_reservoirs(&self) -> usize {
        self.pt.params.reservoirs.len()
    }

    pub fn temps(&self, alpha: f64) -> Vec<f64> {
        self.path.eval(alpha).0
    }

    /// Initial state at `alpha = 0`: kernels at next-to-leading order and
    /// vanishing vertex remainders.
    pub fn initial(&self) -> Result<FlowVars, FlowError> {
        let temps = self.temps(0.0);
        check_start(&self.pt.params, &temps)?;
        let sigma = self.pt.sigma(&temps, KernelOrder::NextToLeading)?;
        let sigma_i = (0..self.n_reservoirs())
            .map(|r| self.pt.current_sigma(&temps, r, KernelOrder::NextToLeading))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FlowVars { sigma, sigma_i, g1: self.zero_g1(), g12: self.zero_g12() })
    }

    fn zero_g1(&self) -> Vec<GridFn2> {
        vec![GridFn2::zeros(self.vgrid); 4]
    }

    fn zero_g12(&self) -> Vec<GridFn3> {
        vec![GridFn3::zeros(self.qgrid); 16]
    }

    pub fn zeros(&self) -> FlowVars {
        let k = KernelFn::zeros(self.pt.grid());
        FlowVars { sigma: k.clone(), sigma_i: vec![k; self.n_reservoirs()], g1: self.zero_g1(), g12: self.zero_g12() }
    }

    pub fn propagator(&self, vars: &FlowVars) -> Result<GridFn1, FlowError> {
        Ok(solve_dyson(&self.pt.stepper, &vars.sigma)?)
    }

    fn fine_terms(&self, pi: &GridFn1, dpi: &GridFn1, gam: &[Line; 4], dgam: &[Line; 4], current: bool) -> KernelFn {
        let sf = &self.pt.sf;
        let terms = |lines| make_terms(sf, lines, current);
        let grid = self.pt.grid();
        let free = GridFn1 { grid, values: self.pt.free().to_vec() };
        let diff = pi.sub(&free);
        let slashed_line = Inner::Propagator { l: &self.pt.gen.l_inf, free: self.pt.free(), diff: Some(&diff) };
        let mut k = sandwich_kernel(grid, &slashed_line, &terms(dgam));
        let slashed_prop = Inner::Plain { x: dpi, x0: SuperOp::zero(), dx0: SuperOp::zero() };
        let sign = if self.mutate_sign { -1.0 } else { 1.0 };
        k.axpy(C64::new(sign, 0.0), &sandwich_kernel(grid, &slashed_prop, &terms(gam)));
        k
    }

    /// Coarse-node values extended to the fine grid, zero beyond the vertex grid.
    fn to_fine(&self, coarse: Vec<SuperOp>) -> KernelFn {
        let g = self.pt.grid();
        let c = GridFn1 { grid: self.vgrid, values: coarse };
        let tv = self.vgrid.t_max() * (1.0 + 1e-12);
        let nodal = GridFn1::from_fn(g, |t| if t <= tv { c.cubic_at(t) } else { SuperOp::zero() });
        KernelFn::from_nodal(&nodal)
    }

    /// Flow derivative at `alpha` for state `vars`, using `guess` for the
    /// derivatives that enter the right-hand side (`dSigma`, `dG1`).
    pub fn rhs(&self, alpha: f64, vars: &FlowVars, guess: &FlowVars) -> Result<RhsEval, FlowError> {
        let (temps, vel) = self.path.eval(alpha);
        let params = &self.pt.params;
        let sf = &self.pt.sf;
        let pi = self.propagator(vars)?;
        let dpi = dpi_dt_dyson(&self.pt.stepper, &vars.sigma, &pi, &guess.sigma)?;
        let gam = SpinOrbital::ALL.map(|o| gamma_line(params, &temps, o, None));
        let dgam = SpinOrbital::ALL.map(|o| dgamma_line(params, &temps, &vel, o, None));

        let pi_v = resample_pi(&pi, self.pt.free(), &self.vfree, self.vgrid);
        let dpi_v = resample(&dpi, self.vgrid);
        let c = Coarse::new(sf, self.vgrid, pi_v, dpi_v, &gam, &dgam);
        let [y0, y1, y2] = c.composites(&vars.g1, &guess.g1);
        let y12: Vec<GridFn2> = y1
            .into_iter()
            .zip(y2)
            .map(|(mut a, b)| {
                a.axpy(C64::new(1.0, 0.0), &b);
                a
            })
            .collect();

        let pi_q = resample_pi(&pi, self.pt.free(), &self.qfree, self.qgrid);
        let dpi_q = resample(&dpi, self.qgrid);
        let gam_q = LineSet::new(&gam, self.qgrid);
        let dgam_q = LineSet::new(&dgam, self.qgrid);
        let d_g12 = d_rest_two(sf, self.qgrid, &pi_q, &dpi_q, &gam_q);
        let pq = pq_rest(&sparse_all(&pi_q), &vars.g12);
        let rq = rest_terms(sf, self.qgrid, &pq, &dgam_q);
        let s3 = Strings3::new(&c);
        let d_g1 = d_rest_one(&c, &OneInput { y0: &y0, y12: &y12, s3: &s3, rest_terms: &rq });

        let kernel = |g: &[Line; 4], dg: &[Line; 4], og: &LineSet, od: &LineSet, current: bool| -> KernelFn {
            let left: [&SparseOp; 4] = SpinOrbital::ALL.map(|o| outer_vertex(sf, o, current).0);
            let coef: [C64; 4] = SpinOrbital::ALL.map(|o| outer_vertex(sf, o, current).1);
            let mut k = self.fine_terms(&pi, &dpi, g, dg, current);
            let v = kernel_vertex_part(&c, &y0, &y12, og, od, &left, &coef);
            k.axpy(C64::new(1.0, 0.0), &self.to_fine(v));
            k
        };
        let d_sigma = kernel(&gam, &dgam, &c.gam, &c.dgam, false);
        let mut d_sigma_i = Vec::with_capacity(self.n_reservoirs());
        for r in 0..self.n_reservoirs() {
            let g = SpinOrbital::ALL.map(|o| gamma_line(params, &temps, o, Some(r)));
            let dg = SpinOrbital::ALL.map(|o| dgamma_line(params, &temps, &vel, o, Some(r)));
            let og = LineSet::new(&g, self.vgrid);
            let od = LineSet::new(&dg, self.vgrid);
            d_sigma_i.push(kernel(&g, &dg, &og, &od, true));
        }
        let deriv = FlowVars { sigma: d_sigma, sigma_i: d_sigma_i, g1: d_g1, g12: d_g12 };
        if !deriv.is_finite() {
            return Err(FlowError::NonFinite("flow right-hand side"));
        }
        Ok(RhsEval { deriv, pi, dpi })
    }

    /// Derivative with the guess iterated to self-consistency.
    pub fn rhs_consistent(&self, alpha: f64, vars: &FlowVars, opts: &IterOpts) -> Result<(FlowVars, usize), FlowError> {
        let mut guess = self.zeros();
        for it in 1..=opts.max_iter.max(1) {
            let f = self.rhs(alpha, vars, &guess)?.deriv;
            let mut diff = f.clone();
            diff.axpy(-1.0, &guess);
            let done = diff.norm() <= opts.tol * f.norm().max(opts.abs_floor);
            guess = f;
            if done {
                return Ok((guess, it));
            }
        }
        Ok((guess, opts.max_iter))
    }

    /// `alpha` at which a common-temperature path reaches `t`.
    pub fn alpha_of_temperature(&self, t: f64) -> Option<f64> {
        let (lo, hi) = (self.temps(0.0), self.temps(1.0));
        let r = (0..lo.len()).max_by(|&a, &b| (lo[a] - hi[a]).abs().total_cmp(&(lo[b] - hi[b]).abs()))?;
        let (a, b) = (lo[r], hi[r]);
        if a == b || t > a.max(b) || t < a.min(b) {
            return None;
        }
        // bisection handles non-linear paths
        let (mut x0, mut x1) = (0.0, 1.0);
        for _ in 0..80 {
            let m = 0.5 * (x0 + x1);
            if (self.temps(m)[r] - t) * (a - b).signum() > 0.0 {
                x0 = m;
            } else {
                x1 = m;
            }
        }
        Some(0.5 * (x0 + x1))
    }
}

fn make_terms<'a>(sf: &'a Superfermions, lines: &'a [Line; 4], current: bool) -> Vec<Term<'a>> {
    SpinOrbital::ALL
        .iter()
        .map(|&o| {
            let (left, coef) = outer_vertex(sf, o, current);
            Term { line: &lines[o.index()], left, right: sf.sp(o.bar()), coef }
        })
        .collect()
}

fn outer_vertex(sf: &Superfermions, o: SpinOrbital, current: bool) -> (&SparseOp, C64) {
    if current {
        (sf.sm(o), C64::new(0.0, -0.5 * o.eta.value()))
    } else {
        (sf.sp(o), C64::new(0.0, -1.0))
    }
}

fn check_start(params: &ModelParams, temps: &[f64]) -> Result<(), FlowError> {
    let t = temps.iter().cloned().fold(f64::INFINITY, f64::min);
    crate::renormalized_pt::check_t_inf(params, t)?;
    Ok(())
}

/// Kernels and propagator at one recorded point of the flow.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub alpha: f64,
    pub temps: Vec<f64>,
    pub sigma: KernelFn,
    pub sigma_i: Vec<KernelFn>,
    pub pi: GridFn1,
    /// `max |d Sigma / dT|` at this point.
    pub dsigma_norm: f64,
}

#[derive(Clone, Debug, Default)]
pub struct FlowStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub unconverged: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub snapshots: Vec<Snapshot>,
    /// `(alpha, T_min, step in T)` of every accepted step.
    pub steps: Vec<(f64, f64, f64)>,
    pub stats: FlowStats,
    pub warnings: Vec<String>,
}

impl FlowTrajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory always holds the final point")
    }
}

/// Run the flow from `alpha = 0` to `1`, recording at the requested
/// `alpha` values (the endpoint is always recorded).
pub fn flow_run(setup: &FlowSetup, cfg: &StepperConfig, record: &[f64]) -> Result<FlowTrajectory, FlowError> {
    cfg.validate()?;
    let start = Instant::now();
    let speed = setup.speed.max(f64::MIN_POSITIVE);
    let (h_min, h_max) = (cfg.dt_min / speed, (cfg.dt_max / speed).min(1.0));
    let mut h = (cfg.dt_init / speed).min(h_max);
    let opts = IterOpts { max_iter: cfg.max_iter, tol: cfg.iter_tol, abs_floor: 1e-12 };
    let mut marks: Vec<f64> = record.iter().cloned().filter(|a| (0.0..=1.0).contains(a)).collect();
    marks.push(1.0);
    marks.sort_by(f64::total_cmp);
    marks.dedup();
    let mut stats = FlowStats::default();
    let mut traj = FlowTrajectory { snapshots: Vec::new(), steps: Vec::new(), stats: FlowStats::default(), warnings: Vec::new() };

    let norm_scale = |d: &FlowVars| d.sigma.max_abs() / speed;
    let snap = |alpha: f64, y: &FlowVars, f: &FlowVars| -> Result<Snapshot, FlowError> {
        Ok(Snapshot {
            alpha,
            temps: setup.temps(alpha),
            sigma: y.sigma.clone(),
            sigma_i: y.sigma_i.clone(),
            pi: setup.propagator(y)?,
            dsigma_norm: norm_scale(f),
        })
    };

    let y0 = setup.initial()?;
    let (f0, it) = setup.rhs_consistent(0.0, &y0, &opts)?;
    stats.rhs_evals += it;
    if marks.first() == Some(&0.0) {
        traj.snapshots.push(snap(0.0, &y0, &f0)?);
        marks.remove(0);
    }

    let mut rhs = |s: f64, y: &FlowVars, d: &FlowVars| -> Result<FlowVars, String> {
        stats.rhs_evals += 1;
        setup.rhs(s, y, d).map(|e| e.deriv).map_err(|e| e.to_string())
    };
    let stalled = |alpha: f64| FlowError::FlowStalled { temperature: min_temp(setup, alpha), dt_min: cfg.dt_min };

    // bootstrap: two trapezoidal substeps of h/4 (shrunk if they fail)
    let mut hb = (0.25 * h).min(marks[0]);
    let (a, b) = loop {
        let res = trapezoid_step(0.0, &y0, &f0, hb, &mut rhs, &opts).and_then(|a| {
            let b = trapezoid_step(a.s, &a.y, &a.f, hb.min(marks[0] - a.s).max(1e-3 * hb), &mut rhs, &opts)?;
            Ok((a, b))
        });
        match res {
            Ok((a, b)) if a.err.max(b.err) <= cfg.error_tol => break (a, b),
            Ok(_) | Err(StepError::StepRejected { .. }) => {
                hb *= 0.5;
                if hb < h_min {
                    return Err(stalled(0.0));
                }
            }
            Err(StepError::Rhs(m)) => return Err(FlowError::BadConfig(m)),
        }
    };
    drop(rhs);
    let mut rhs = |s: f64, y: &FlowVars, d: &FlowVars| -> Result<FlowVars, String> {
        stats.rhs_evals += 1;
        setup.rhs(s, y, d).map(|e| e.deriv).map_err(|e| e.to_string())
    };
    let mut steps = vec![(a.s, min_temp(setup, a.s), a.s * speed), (b.s, min_temp(setup, b.s), (b.s - a.s) * speed)];
    let mut hist = History { s: [b.s, a.s], y: [b.y, a.y], f: [b.f, a.f] };
    let mut snapshots = std::mem::take(&mut traj.snapshots);
    while (marks.first().copied()).is_some_and(|m| m <= hist.s[0] + 1e-12) {
        let m = marks.remove(0);
        snapshots.push(snap(m, &hist.y[0], &hist.f[0])?);
    }
    // the first multistep ratio is capped at 2
    h = h.min(2.0 * (hist.s[0] - hist.s[1]));
    let (mut rejected, mut accepted, mut unconverged) = (0, 2, 0);
    while let Some(&target) = marks.first() {
        let s = hist.s[0];
        let step = h.min(target - s);
        let out = match bdf2_ab2_step(&hist, step, &mut rhs, &opts) {
            Ok(o) => o,
            Err(StepError::Rhs(m)) => return Err(FlowError::BadConfig(m)),
            Err(StepError::StepRejected { .. }) => unreachable!("the stepper reports errors through the outcome"),
        };
        if out.err > cfg.error_tol || !out.y.is_finite() {
            rejected += 1;
            h = step * if out.err.is_finite() { controller_factor(out.err, cfg.error_tol).min(0.9) } else { 0.5 };
            if h < h_min {
                return Err(stalled(s));
            }
            continue;
        }
        accepted += 1;
        if !out.converged {
            unconverged += 1;
        }
        let fac = controller_factor(out.err, cfg.error_tol);
        steps.push((out.s, min_temp(setup, out.s), step * speed));
        let hit = (out.s - target).abs() <= 1e-12;
        hist = History { s: [out.s, s], y: [out.y, hist.y[0].clone()], f: [out.f, hist.f[0].clone()] };
        if hit {
            marks.remove(0);
            snapshots.push(snap(target, &hist.y[0], &hist.f[0])?);
        }
        // keep the step ratio bounded after a clipped step
        h = (step * fac).min(h_max).max(step.min(h));
        h = h.min(2.0 * step).max(h_min);
    }
    drop(rhs);
    stats.accepted = accepted;
    stats.rejected = rejected;
    stats.unconverged = unconverged;
    stats.seconds = start.elapsed().as_secs_f64();
    traj.snapshots = snapshots;
    traj.steps = steps;
    traj.stats = stats;
    Ok(traj)
}

fn min_temp(setup: &FlowSetup, alpha: f64) -> f64 {
    setup.temps(alpha).into_iter().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests;
