//! Convolutions and the Volterra (Dyson) solver for the propagator.

use nalgebra::SMatrix;

use super::{gauss_legendre, GridError, GridFn1, KernelFn, TimeGrid};
use crate::superfermion_algebra::{SuperOp, C64};

/// Nodal trapezoid convolution `C(t_k) = int_0^{t_k} A(t_k - s) B(s) ds`.
pub fn convolve(a: &GridFn1, b: &GridFn1) -> Result<GridFn1, GridError> {
    a.grid.check(&b.grid)?;
    let h = a.grid.dt;
    let n = a.grid.n;
    let mut out = GridFn1::zeros(a.grid);
    for k in 1..n {
        let acc = &mut out.values[k];
        for j in 0..=k {
            let w = if j == 0 || j == k { 0.5 * h } else { h };
            acc.add_mul(C64::new(w, 0.0), &a.values[k - j], &b.values[j]);
        }
    }
    Ok(out)
}

/// `Y(t_n) = int_0^{t_n} K(u) X(t_n - u) du` with the kernel's cell moments.
pub fn convolve_kernel(k: &KernelFn, x: &GridFn1) -> Result<GridFn1, GridError> {
    k.grid.check(&x.grid)?;
    let n = k.grid.n;
    let one = C64::new(1.0, 0.0);
    let mut out = GridFn1::zeros(k.grid);
    for m in 1..n {
        let acc = &mut out.values[m];
        for c in 0..m {
            acc.add_mul(one, &k.left[c], &x.values[m - c]);
            acc.add_mul(one, &k.right[c], &x.values[m - c - 1]);
        }
    }
    Ok(out)
}

/// Reusable per-grid data of the exponential integrator for a fixed `L`.
#[derive(Clone, Debug)]
pub struct DysonStepper {
    pub grid: TimeGrid,
    pub l: SuperOp,
    /// `exp(-i L t_k)` at every grid point.
    pub free: Vec<SuperOp>,
    w0: SuperOp,
    w1: SuperOp,
}

impl DysonStepper {
    pub fn new(l: &SuperOp, grid: TimeGrid) -> Self {
        let h = grid.dt;
        let e = |x: f64| l.scale(C64::new(0.0, -x)).exp();
        let step = e(h);
        let mut free = Vec::with_capacity(grid.n);
        free.push(SuperOp::identity());
        for k in 1..grid.n {
            // direct exponentials every 16 steps limit error growth
            let v = if k % 16 == 0 { e(grid.t(k)) } else { step.matmul(&free[k - 1]) };
            free.push(v);
        }
        let mut w0 = SuperOp::zero();
        let mut w1 = SuperOp::zero();
        for p in 0..2 {
            let (a, b) = (p as f64 * 0.5 * h, (p + 1) as f64 * 0.5 * h);
            for (s, w) in gauss_legendre(a, b) {
                let ex = e(h - s);
                w0.axpy(C64::new(w * (1.0 - s / h), 0.0), &ex);
                w1.axpy(C64::new(w * s / h, 0.0), &ex);
            }
        }
        DysonStepper { grid, l: *l, free, w0, w1 }
    }

    /// Solve `X' = -i L X - i int_0^t K(u) X(t-u) du + S(t)`, `X(0) = x0`.
    pub fn solve(&self, k: &KernelFn, source: Option<&GridFn1>, x0: &SuperOp) -> Result<GridFn1, GridError> {
        self.grid.check(&k.grid)?;
        if let Some(s) = source {
            self.grid.check(&s.grid)?;
        }
        let n = self.grid.n;
        let mi = C64::new(0.0, -1.0);
        let one = C64::new(1.0, 0.0);
        // (I + i W1 left_0)^-1
        let mut sys = SuperOp::identity();
        sys.add_mul(C64::new(0.0, 1.0), &self.w1, &k.left[0]);
        let inv = invert(&sys).ok_or(GridError::SingularSolve { step: 1 })?;
        let mut x = GridFn1::zeros(self.grid);
        x.values[0] = *x0;
        // g[m] = -i C_m + S_m
        let mut g_prev = source.map_or(SuperOp::zero(), |s| s.values[0]);
        let step = self.free[1];
        for m in 1..n {
            let mut rest = SuperOp::zero();
            rest.add_mul(one, &k.right[0], &x.values[m - 1]);
            for c in 1..m {
                rest.add_mul(one, &k.left[c], &x.values[m - c]);
                rest.add_mul(one, &k.right[c], &x.values[m - c - 1]);
            }
            let s_m = source.map_or(SuperOp::zero(), |s| s.values[m]);
            let mut g_rest = rest.scale(mi);
            g_rest += s_m;
            let mut rhs = step.matmul(&x.values[m - 1]);
            rhs.add_mul(one, &self.w0, &g_prev);
            rhs.add_mul(one, &self.w1, &g_rest);
            let xm = inv.matmul(&rhs);
            if !xm.is_finite() {
                return Err(GridError::SingularSolve { step: m });
            }
            let mut g_m = g_rest;
            g_m.add_mul(mi, &k.left[0], &xm);
            x.values[m] = xm;
            g_prev = g_m;
        }
        Ok(x)
    }
}

fn invert(m: &SuperOp) -> Option<SuperOp> {
    let na: SMatrix<C64, 16, 16> = m.to_na();
    let lu = na.lu();
    let inv = lu.try_inverse()?;
    let out = SuperOp::from_na(&inv);
    if out.is_finite() && out.max_abs() < 1e12 {
        Some(out)
    } else {
        None
    }
}

/// Propagator from the Dyson equation `Pi = Pi_inf - i Pi_inf * Sigma * Pi`,
/// stepped in its differential form with the free part integrated exactly.
pub fn solve_dyson(stepper: &DysonStepper, sigma: &KernelFn) -> Result<GridFn1, GridError> {
    stepper.solve(sigma, None, &SuperOp::identity())
}

/// `dPi/dT = -i Pi * dSigma * Pi` by two nested trapezoid convolutions.
pub fn dpi_dt(pi: &GridFn1, dsigma: &GridFn1) -> Result<GridFn1, GridError> {
    let inner = convolve(dsigma, pi)?;
    Ok(convolve(pi, &inner)?.scaled(C64::new(0.0, -1.0)))
}

/// Same quantity as the exact variation of the discrete Dyson solution:
/// the outer `Pi *` is realized by re-solving with source `-i dSigma * Pi`.
pub fn dpi_dt_dyson(stepper: &DysonStepper, sigma: &KernelFn, pi: &GridFn1, dsigma: &KernelFn) -> Result<GridFn1, GridError> {
    let y = convolve_kernel(dsigma, pi)?.scaled(C64::new(0.0, -1.0));
    stepper.solve(sigma, Some(&y), &SuperOp::zero())
}
