//! Variable-step BDF2 with an Adams-Bashforth predictor, solved by
//! fixed-point iteration, plus the trapezoidal bootstrap.
//!
//! The independent variable `s` increases along the flow. For equal steps
//! the corrector is `y_n = 4/3 y_{n-1} - 1/3 y_{n-2} + 2/3 h f_n` and the
//! predictor `y_n = y_{n-1} + h (3/2 f_{n-1} - 1/2 f_{n-2})`.

/// Minimal vector-space interface of a flow state.
pub trait FlowVector: Clone + Send + Sync {
    /// `self += a x`.
    fn axpy(&mut self, a: f64, x: &Self);
    fn scale_mut(&mut self, a: f64);
    /// Max-norm.
    fn norm(&self) -> f64;

    fn lin2(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        let mut out = x.clone();
        out.scale_mut(a);
        out.axpy(b, y);
        out
    }
}

impl FlowVector for f64 {
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += a * x;
    }
    fn scale_mut(&mut self, a: f64) {
        *self *= a;
    }
    fn norm(&self) -> f64 {
        self.abs()
    }
}

impl FlowVector for Vec<f64> {
    fn axpy(&mut self, a: f64, x: &Self) {
        for (u, v) in self.iter_mut().zip(x) {
            *u += a * v;
        }
    }
    fn scale_mut(&mut self, a: f64) {
        self.iter_mut().for_each(|u| *u *= a);
    }
    fn norm(&self) -> f64 {
        self.iter().fold(0.0, |m, u| m.max(u.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterOpts {
    pub max_iter: usize,
    pub tol: f64,
    /// Floor of the norm used for relative comparisons.
    pub abs_floor: f64,
}

impl Default for IterOpts {
    fn default() -> Self {
        IterOpts { max_iter: 20, tol: 1e-8, abs_floor: 1e-12 }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StepError {
    #[error("local error {err:.3e} exceeds tolerance {tol:.3e}")]
    StepRejected { err: f64, tol: f64 },
    #[error("right-hand side failed: {0}")]
    Rhs(String),
}

/// Two most recent accepted points, newest first.
#[derive(Clone, Debug)]
pub struct History<V> {
    pub s: [f64; 2],
    pub y: [V; 2],
    pub f: [V; 2],
}

#[derive(Clone, Debug)]
pub struct StepOutcome<V> {
    pub s: f64,
    pub y: V,
    pub f: V,
    pub predictor: V,
    /// Relative local-error estimate.
    pub err: f64,
    pub iters: usize,
    pub converged: bool,
}

/// BDF2 corrector coefficients `(c0, c1, beta)` for `y_n = c0 y_{n-1} + c1 y_{n-2} + beta h f_n`.
pub fn bdf2_coefficients(omega: f64) -> (f64, f64, f64) {
    let d = 1.0 + 2.0 * omega;
    ((1.0 + omega).powi(2) / d, -omega * omega / d, (1.0 + omega) / d)
}

/// AB2 coefficients `(a0, a1)` for `y_n = y_{n-1} + h (a0 f_{n-1} + a1 f_{n-2})`.
pub fn ab2_coefficients(omega: f64) -> (f64, f64) {
    (1.0 + 0.5 * omega, -0.5 * omega)
}

const BDF2_ERR: f64 = 8.0 / 23.0;

/// One BDF2 step of size `h` from the history.
pub fn bdf2_ab2_step<V, F>(hist: &History<V>, h: f64, mut rhs: F, opts: &IterOpts) -> Result<StepOutcome<V>, StepError>
where
    V: FlowVector,
    F: FnMut(f64, &V, &V) -> Result<V, String>,
{
    let h_prev = hist.s[0] - hist.s[1];
    let omega = h / h_prev;
    let s = hist.s[0] + h;
    let (a0, a1) = ab2_coefficients(omega);
    let mut pred = hist.y[0].clone();
    pred.axpy(h * a0, &hist.f[0]);
    pred.axpy(h * a1, &hist.f[1]);
    // derivative of the quadratic through (s_n, pred), (s_{n-1}, y0), (s_{n-2}, y1)
    let mut d = pred.clone();
    d.scale_mut((1.0 + 2.0 * omega) / ((1.0 + omega) * h));
    d.axpy(-(1.0 + omega) / h, &hist.y[0]);
    d.axpy(omega * omega / ((1.0 + omega) * h), &hist.y[1]);

    let (c0, c1, beta) = bdf2_coefficients(omega);
    let base = V::lin2(c0, &hist.y[0], c1, &hist.y[1]);
    let mut y = pred.clone();
    let mut converged = false;
    let mut iters = 0;
    while iters < opts.max_iter.max(1) {
        let f = rhs(s, &y, &d).map_err(StepError::Rhs)?;
        let mut next = base.clone();
        next.axpy(beta * h, &f);
        let mut diff = next.clone();
        diff.axpy(-1.0, &y);
        let delta = diff.norm() / next.norm().max(opts.abs_floor);
        y = next;
        d = f;
        iters += 1;
        if delta <= opts.tol {
            converged = true;
            break;
        }
    }
    let mut diff = y.clone();
    diff.axpy(-1.0, &pred);
    let err = BDF2_ERR * diff.norm() / y.norm().max(opts.abs_floor);
    Ok(StepOutcome { s, y, f: d, predictor: pred, err, iters, converged })
}

/// Trapezoidal predictor-corrector step used to build the first history.
pub fn trapezoid_step<V, F>(s0: f64, y0: &V, f0: &V, h: f64, mut rhs: F, opts: &IterOpts) -> Result<StepOutcome<V>, StepError>
where
    V: FlowVector,
    F: FnMut(f64, &V, &V) -> Result<V, String>,
{
    let s = s0 + h;
    let mut pred = y0.clone();
    pred.axpy(h, f0);
    let mut y = pred.clone();
    let mut d = f0.clone();
    let mut converged = false;
    let mut iters = 0;
    while iters < opts.max_iter.max(1) {
        let f = rhs(s, &y, &d).map_err(StepError::Rhs)?;
        let mut next = y0.clone();
        next.axpy(0.5 * h, f0);
        next.axpy(0.5 * h, &f);
        let mut diff = next.clone();
        diff.axpy(-1.0, &y);
        let delta = diff.norm() / next.norm().max(opts.abs_floor);
        y = next;
        d = f;
        iters += 1;
        if delta <= opts.tol {
            converged = true;
            break;
        }
    }
    let mut diff = y.clone();
    diff.axpy(-1.0, &pred);
    let err = 0.5 * diff.norm() / y.norm().max(opts.abs_floor);
    Ok(StepOutcome { s, y, f: d, predictor: pred, err, iters, converged })
}

/// Step-size factor of the order-2 controller.
pub fn controller_factor(err: f64, tol: f64) -> f64 {
    if err <= 0.0 {
        return 2.0;
    }
    (0.9 * (tol / err).powf(1.0 / 3.0)).clamp(0.3, 2.0)
}

/// Fixed-step integration on `[s0, s1]`: two trapezoidal substeps of `h/4`,
/// one step of `h/2`, then BDF2 with `h`. Returns the final value.
pub fn integrate_fixed<V, F>(y0: V, s0: f64, s1: f64, n: usize, mut rhs: F, opts: &IterOpts) -> Result<V, StepError>
where
    V: FlowVector,
    F: FnMut(f64, &V, &V) -> Result<V, String>,
{
    let h = (s1 - s0) / n as f64;
    let f0 = rhs(s0, &y0, &y0).map_err(StepError::Rhs)?;
    let a = trapezoid_step(s0, &y0, &f0, 0.25 * h, &mut rhs, opts)?;
    let b = trapezoid_step(a.s, &a.y, &a.f, 0.25 * h, &mut rhs, opts)?;
    let mut hist = History { s: [b.s, a.s], y: [b.y, a.y], f: [b.f, a.f] };
    let mut s = hist.s[0];
    let mut hn = 0.5 * h;
    while s < s1 - 1e-12 * h.abs() {
        let step = hn.min(s1 - s);
        let out = bdf2_ab2_step(&hist, step, &mut rhs, opts)?;
        s = out.s;
        hist = History { s: [out.s, hist.s[0]], y: [out.y, hist.y[0].clone()], f: [out.f, hist.f[0].clone()] };
        hn = h;
    }
    Ok(hist.y[0].clone())
}
