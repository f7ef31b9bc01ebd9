//! Time grids, SuperOp-valued grid functions, contraction-weighted quadrature,
//! convolutions and the Dyson solver.

mod dyson;
mod quadrature;

pub use dyson::*;
pub use quadrature::*;

use crate::superfermion_algebra::{SuperOp, C64};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GridError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("singular linear system at step {step}; reduce dt")]
    SingularSolve { step: usize },
}

/// Uniform grid `t_k = k dt`, `k = 0..n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub n: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(t_max: f64, n_points: usize) -> Result<Self, GridError> {
        if n_points < 3 {
            return Err(GridError::InvalidGrid(format!("n_points = {n_points} < 3")));
        }
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(GridError::InvalidGrid(format!("t_max = {t_max}")));
        }
        Ok(TimeGrid { n: n_points, dt: t_max / (n_points - 1) as f64 })
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        (self.n - 1) as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.t(k)).collect()
    }

    fn same(&self, other: &TimeGrid) -> bool {
        self.n == other.n && (self.dt - other.dt).abs() <= 1e-14 * self.dt
    }

    pub fn check(&self, other: &TimeGrid) -> Result<(), GridError> {
        if self.same(other) {
            Ok(())
        } else {
            Err(GridError::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// SuperOp samples of a single-time function.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFn1 {
    pub grid: TimeGrid,
    pub values: Vec<SuperOp>,
}

impl GridFn1 {
    pub fn zeros(grid: TimeGrid) -> Self {
        GridFn1 { grid, values: vec![SuperOp::zero(); grid.n] }
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> SuperOp) -> Self {
        GridFn1 { grid, values: (0..grid.n).map(|k| f(grid.t(k))).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.max_abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn axpy(&mut self, z: C64, other: &GridFn1) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            a.axpy(z, b);
        }
    }

    pub fn scaled(&self, z: C64) -> GridFn1 {
        GridFn1 { grid: self.grid, values: self.values.iter().map(|v| v.scale(z)).collect() }
    }

    pub fn sub(&self, other: &GridFn1) -> GridFn1 {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), other);
        out
    }

    /// Four-point Lagrange interpolation at arbitrary `t` in `[0, t_max]`.
    pub fn cubic_at(&self, t: f64) -> SuperOp {
        let (i0, w) = cubic_stencil(self.grid, t);
        let mut out = SuperOp::zero();
        for j in 0..4 {
            out.axpy(C64::new(w[j], 0.0), &self.values[i0 + j]);
        }
        out
    }

    /// Linear interpolation.
    pub fn linear_at(&self, t: f64) -> SuperOp {
        let x = (t / self.grid.dt).clamp(0.0, (self.grid.n - 1) as f64);
        let k = (x.floor() as usize).min(self.grid.n - 2);
        let th = x - k as f64;
        let mut out = self.values[k].scale_re(1.0 - th);
        out.axpy(C64::new(th, 0.0), &self.values[k + 1]);
        out
    }
}

/// Start index and weights of the four-point stencil around `t`.
pub fn cubic_stencil(grid: TimeGrid, t: f64) -> (usize, [f64; 4]) {
    let n = grid.n;
    let x = (t / grid.dt).clamp(0.0, (n - 1) as f64);
    let k = (x.floor() as usize).min(n - 2);
    let i0 = if n < 4 { 0 } else { k.saturating_sub(1).min(n - 4) };
    let m = n.min(4);
    let mut w = [0.0; 4];
    for j in 0..m {
        let xj = (i0 + j) as f64;
        let mut l = 1.0;
        for q in 0..m {
            if q != j {
                let xq = (i0 + q) as f64;
                l *= (x - xq) / (xj - xq);
            }
        }
        w[j] = l;
    }
    (i0, w)
}

/// Memory kernel with nodal values and hat-function cell moments.
///
/// For cell `k = [t_k, t_{k+1}]`, `left[k] = int K (1 - theta)` and
/// `right[k] = int K theta`, so that `int_0^{t_n} K(u) X(t_n - u) du` with X
/// linear on cells is `sum_k left[k] X_{n-k} + right[k] X_{n-k-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelFn {
    pub grid: TimeGrid,
    pub values: Vec<SuperOp>,
    pub left: Vec<SuperOp>,
    pub right: Vec<SuperOp>,
}

impl KernelFn {
    pub fn zeros(grid: TimeGrid) -> Self {
        KernelFn {
            grid,
            values: vec![SuperOp::zero(); grid.n],
            left: vec![SuperOp::zero(); grid.n - 1],
            right: vec![SuperOp::zero(); grid.n - 1],
        }
    }

    /// Moments of the piecewise-linear interpolant.
    pub fn from_nodal(f: &GridFn1) -> Self {
        let h = f.grid.dt;
        let mut k = KernelFn::zeros(f.grid);
        k.values = f.values.clone();
        for c in 0..f.grid.n - 1 {
            let (a, b) = (&f.values[c], &f.values[c + 1]);
            let mut l = a.scale_re(h / 3.0);
            l.axpy(C64::new(h / 6.0, 0.0), b);
            let mut r = a.scale_re(h / 6.0);
            r.axpy(C64::new(h / 3.0, 0.0), b);
            k.left[c] = l;
            k.right[c] = r;
        }
        k
    }

    pub fn nodal(&self) -> GridFn1 {
        GridFn1 { grid: self.grid, values: self.values.clone() }
    }

    pub fn axpy(&mut self, z: C64, other: &KernelFn) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            a.axpy(z, b);
        }
        for (a, b) in self.left.iter_mut().zip(&other.left) {
            a.axpy(z, b);
        }
        for (a, b) in self.right.iter_mut().zip(&other.right) {
            a.axpy(z, b);
        }
    }

    pub fn scaled(&self, z: C64) -> KernelFn {
        let mut out = KernelFn::zeros(self.grid);
        out.axpy(z, self);
        out
    }

    /// Apply `f` to every stored SuperOp (linear maps only).
    pub fn map_linear(&self, f: impl Fn(&SuperOp) -> SuperOp) -> KernelFn {
        KernelFn {
            grid: self.grid,
            values: self.values.iter().map(&f).collect(),
            left: self.left.iter().map(&f).collect(),
            right: self.right.iter().map(&f).collect(),
        }
    }

    /// `int_0^{t_max} K(u) du`.
    pub fn integral(&self) -> SuperOp {
        let mut s = SuperOp::zero();
        for (l, r) in self.left.iter().zip(&self.right) {
            s += *l;
            s += *r;
        }
        s
    }

    /// Largest entry over nodes and moments divided by dt.
    pub fn max_abs(&self) -> f64 {
        let h = self.grid.dt;
        let m = self.values.iter().fold(0.0_f64, |m, v| m.max(v.max_abs()));
        let c = self.left.iter().chain(&self.right).fold(0.0_f64, |m, v| m.max(v.max_abs()));
        m.max(2.0 * c / h)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().chain(&self.left).chain(&self.right).all(|v| v.is_finite())
    }

    /// Row of the trace functional, worst case over nodes and moments.
    pub fn trace_error(&self) -> f64 {
        let h = self.grid.dt;
        let mut e = 0.0_f64;
        for v in &self.values {
            e = e.max(v.trace_row().iter().fold(0.0_f64, |m, z| m.max(z.norm())));
        }
        for v in self.left.iter().chain(&self.right) {
            e = e.max(v.trace_row().iter().fold(0.0_f64, |m, z| m.max(z.norm())) * 2.0 / h);
        }
        e
    }
}

/// SuperOp samples on a two-axis triangle `x + y <= t_max` of a coarse grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFn2 {
    pub grid: TimeGrid,
    /// Row `i` (first axis) holds `n - i` samples.
    pub data: Vec<SuperOp>,
    offsets: Vec<usize>,
}

impl GridFn2 {
    pub fn zeros(grid: TimeGrid) -> Self {
        let mut offsets = Vec::with_capacity(grid.n + 1);
        let mut o = 0;
        for i in 0..grid.n {
            offsets.push(o);
            o += grid.n - i;
        }
        offsets.push(o);
        GridFn2 { grid, data: vec![SuperOp::zero(); o], offsets }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + j < self.grid.n);
        self.offsets[i] + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &SuperOp {
        &self.data[self.idx(i, j)]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut SuperOp {
        let k = self.idx(i, j);
        &mut self.data[k]
    }

    pub fn axpy(&mut self, z: C64, other: &GridFn2) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            a.axpy(z, b);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.max_abs()))
    }

    /// Bilinear interpolation; points outside the triangle return zero.
    pub fn interp(&self, x: f64, y: f64) -> SuperOp {
        let h = self.grid.dt;
        let n = self.grid.n;
        if x < 0.0 || y < 0.0 || x + y > self.grid.t_max() * (1.0 + 1e-12) {
            return SuperOp::zero();
        }
        let (fx, fy) = (x / h, y / h);
        let i = (fx.floor() as usize).min(n - 1);
        let j = (fy.floor() as usize).min(n - 1 - i);
        let (a, b) = (fx - i as f64, fy - j as f64);
        let mut out = SuperOp::zero();
        let mut tot = 0.0;
        for (di, dj, w) in [(0, 0, (1.0 - a) * (1.0 - b)), (1, 0, a * (1.0 - b)), (0, 1, (1.0 - a) * b), (1, 1, a * b)] {
            if w != 0.0 && i + di + j + dj < n {
                out.axpy(C64::new(w, 0.0), self.get(i + di, j + dj));
                tot += w;
            }
        }
        // corners cut off by the hypotenuse: renormalize the remaining weights
        if tot > 0.0 && tot < 1.0 {
            out.scale_mut(C64::new(1.0 / tot, 0.0));
        }
        out
    }
}

/// SuperOp samples on the simplex `a + b + c <= t_max` of a coarse grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFn3 {
    pub grid: TimeGrid,
    pub data: Vec<SuperOp>,
    offsets: Vec<Vec<usize>>,
}

impl GridFn3 {
    pub fn zeros(grid: TimeGrid) -> Self {
        let n = grid.n;
        let mut offsets = Vec::with_capacity(n);
        let mut o = 0;
        for i in 0..n {
            let mut row = Vec::with_capacity(n - i);
            for j in 0..n - i {
                row.push(o);
                o += n - i - j;
            }
            offsets.push(row);
        }
        GridFn3 { grid, data: vec![SuperOp::zero(); o], offsets }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i + j + k < self.grid.n);
        self.offsets[i][j] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> &SuperOp {
        &self.data[self.idx(i, j, k)]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize, j: usize, k: usize) -> &mut SuperOp {
        let q = self.idx(i, j, k);
        &mut self.data[q]
    }

    pub fn axpy(&mut self, z: C64, other: &GridFn3) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            a.axpy(z, b);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.max_abs()))
    }

    /// Trilinear interpolation; zero outside the simplex.
    pub fn interp(&self, a: f64, b: f64, c: f64) -> SuperOp {
        let h = self.grid.dt;
        let n = self.grid.n;
        if a < 0.0 || b < 0.0 || c < 0.0 || a + b + c > self.grid.t_max() * (1.0 + 1e-12) {
            return SuperOp::zero();
        }
        let f = [a / h, b / h, c / h];
        let i = [f[0].floor() as usize, f[1].floor() as usize, f[2].floor() as usize];
        let w = [f[0] - i[0] as f64, f[1] - i[1] as f64, f[2] - i[2] as f64];
        let mut out = SuperOp::zero();
        let mut tot = 0.0;
        for d in 0..8usize {
            let s = [d & 1, (d >> 1) & 1, (d >> 2) & 1];
            let mut wt = 1.0;
            for q in 0..3 {
                wt *= if s[q] == 1 { w[q] } else { 1.0 - w[q] };
            }
            let (p, q, r) = (i[0] + s[0], i[1] + s[1], i[2] + s[2]);
            if wt != 0.0 && p + q + r < n {
                out.axpy(C64::new(wt, 0.0), self.get(p, q, r));
                tot += wt;
            }
        }
        if tot > 0.0 && tot < 1.0 {
            out.scale_mut(C64::new(1.0 / tot, 0.0));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_defaults_and_errors() {
        let g = TimeGrid::new(10.0, 256).unwrap();
        assert!((g.t_max() - 10.0).abs() < 1e-12);
        assert!(TimeGrid::new(1.0, 2).is_err());
        assert!(g.check(&TimeGrid::new(10.0, 128).unwrap()).is_err());
    }

    #[test]
    fn cubic_interpolation_exact_on_cubics() {
        let g = TimeGrid::new(2.0, 11).unwrap();
        let f = GridFn1::from_fn(g, |t| SuperOp::identity().scale_re(1.0 + t - 2.0 * t * t + 0.5 * t * t * t));
        for &t in &[0.0, 0.03, 0.77, 1.5, 1.99, 2.0] {
            let expect = 1.0 + t - 2.0 * t * t + 0.5 * t * t * t;
            assert!((f.cubic_at(t).0[0][0].re - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_moments_integrate_exactly() {
        let g = TimeGrid::new(1.0, 5).unwrap();
        let f = GridFn1::from_fn(g, |t| SuperOp::identity().scale_re(2.0 + 3.0 * t));
        let k = KernelFn::from_nodal(&f);
        assert!((k.integral().0[3][3].re - 3.5).abs() < 1e-14);
    }

    #[test]
    fn vertex_grids_index_and_interpolate() {
        let g = TimeGrid::new(1.0, 5).unwrap();
        let mut f2 = GridFn2::zeros(g);
        assert_eq!(f2.data.len(), 15);
        for i in 0..5 {
            for j in 0..5 - i {
                *f2.get_mut(i, j) = SuperOp::identity().scale_re(g.t(i) + 2.0 * g.t(j));
            }
        }
        assert!((f2.interp(0.1, 0.3).0[0][0].re - 0.7).abs() < 1e-14);
        assert_eq!(f2.interp(0.8, 0.5).max_abs(), 0.0);
        let f3 = GridFn3::zeros(g);
        assert_eq!(f3.data.len(), 35);
    }
}
