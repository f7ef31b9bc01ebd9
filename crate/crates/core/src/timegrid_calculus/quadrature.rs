//! Product integration against contraction functions.

use super::{GridFn1, KernelFn, TimeGrid};
use crate::superfermion_algebra::{SuperOp, C64};

/// Nodes per Gauss-Legendre panel.
pub const GL_POINTS: usize = 8;

/// 8-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Gauss-Legendre nodes `(u, w)` on `[a, b]`.
pub fn gauss_legendre(a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    GL_X.iter().zip(GL_W.iter()).map(move |(x, w)| (c + r * x, r * w))
}

/// A scalar contraction-type function on `u > 0`.
///
/// `singular` is the coefficient `s` of the `s / u` behaviour at the origin
/// (zero for regular functions). `decay` is the exponential decay rate used
/// to size quadrature panels; beyond `cutoff` the function is exactly zero.
pub struct Contraction<'a> {
    pub g: &'a (dyn Fn(f64) -> C64 + Sync),
    pub singular: C64,
    pub decay: f64,
    pub cutoff: f64,
}

impl<'a> Contraction<'a> {
    pub fn regular(g: &'a (dyn Fn(f64) -> C64 + Sync)) -> Self {
        Contraction { g, singular: C64::new(0.0, 0.0), decay: 0.0, cutoff: f64::INFINITY }
    }
}

/// Quadrature nodes covering cell `[j h, (j+1) h]`, refined for `decay` and,
/// in the first cell, geometrically towards the origin.
pub fn cell_nodes(h: f64, j: usize, decay: f64) -> Vec<(f64, f64)> {
    let a = j as f64 * h;
    cell_offsets(h, j == 0, decay).into_iter().map(|(d, w)| (a + d, w)).collect()
}

/// Node offsets from the left end of a cell. Identical for all interior
/// cells with the same `decay`, which allows caching per offset.
pub fn cell_offsets(h: f64, first: bool, decay: f64) -> Vec<(f64, f64)> {
    let m = ((h * decay).ceil() as usize).clamp(1, 400);
    let p = h / m as f64;
    let mut out = Vec::with_capacity(8 * (m + 40));
    for q in 0..m {
        let lo = q as f64 * p;
        let hi = lo + p;
        if first && q == 0 {
            let mut top = hi;
            while top > h * 1e-13 {
                out.extend(gauss_legendre(top * 0.5, top));
                top *= 0.5;
            }
        } else {
            out.extend(gauss_legendre(lo, hi));
        }
    }
    out
}

/// Per-cell weights of a contraction against hat functions.
///
/// For cell `j` and `F` linear on it with end values `F0`, `F1`:
/// `int g F (1 - theta) = a0 F0 + a1 F1` and `int g F theta = b0 F0 + b1 F1`.
/// In cell 0 the `s / u` part multiplying `F0` is dropped; it cancels
/// between the two particle-hole components that always accompany it.
#[derive(Clone, Debug)]
pub struct ContractionWeights {
    pub h: f64,
    pub a0: Vec<C64>,
    pub a1: Vec<C64>,
    pub b0: Vec<C64>,
    pub b1: Vec<C64>,
}

impl ContractionWeights {
    pub fn new(h: f64, n_cells: usize, c: &Contraction<'_>) -> Self {
        let z = C64::new(0.0, 0.0);
        let mut w = ContractionWeights { h, a0: vec![z; n_cells], a1: vec![z; n_cells], b0: vec![z; n_cells], b1: vec![z; n_cells] };
        for j in 0..n_cells {
            let a = j as f64 * h;
            if a >= c.cutoff {
                break;
            }
            let (mut q0, mut q1, mut q2) = (z, z, z);
            for (u, wt) in cell_nodes(h, j, c.decay) {
                let mut g = (c.g)(u);
                if j == 0 {
                    g -= c.singular / u;
                }
                let th = (u - a) / h;
                q0 += g * (wt * (1.0 - th) * (1.0 - th));
                q1 += g * (wt * th * (1.0 - th));
                q2 += g * (wt * th * th);
            }
            if j == 0 {
                let s2 = c.singular * 0.5;
                w.a0[0] = q0 - s2;
                w.a1[0] = q1 + s2;
                w.b0[0] = q1 - s2;
                w.b1[0] = q2 + s2;
            } else {
                w.a0[j] = q0;
                w.a1[j] = q1;
                w.b0[j] = q1;
                w.b1[j] = q2;
            }
        }
        w
    }

    pub fn n_cells(&self) -> usize {
        self.a0.len()
    }

    /// Product-integration weight of the left node of cell `j`.
    #[inline]
    pub fn l(&self, j: usize) -> C64 {
        self.a0[j] + self.b0[j]
    }

    /// Product-integration weight of the right node of cell `j`.
    #[inline]
    pub fn r(&self, j: usize) -> C64 {
        self.a1[j] + self.b1[j]
    }

    /// `int_0^{n h} g(shift h + u) F(u) du` for nodal values `f[0..=n]`.
    pub fn integrate<'b>(&self, shift: usize, f: impl Fn(usize) -> &'b SuperOp, n: usize) -> SuperOp {
        let mut out = SuperOp::zero();
        for k in 0..n {
            let j = shift + k;
            if j >= self.n_cells() {
                break;
            }
            out.axpy(self.l(j), f(k));
            out.axpy(self.r(j), f(k + 1));
        }
        out
    }
}

/// Kernel `K(u) = sum_c g_c(u) F_c(u)` with cell moments from product weights
/// and `F_c` linear on cells. Nodal values at `u > 0` are exact products;
/// the value at `u = 0` is left to the caller.
pub fn kernel_from_products(grid: TimeGrid, terms: &[(&ContractionWeights, &Contraction<'_>, &GridFn1)]) -> KernelFn {
    let mut k = KernelFn::zeros(grid);
    for (w, c, f) in terms {
        for cell in 0..grid.n - 1 {
            let (f0, f1) = (&f.values[cell], &f.values[cell + 1]);
            k.left[cell].axpy(w.a0[cell], f0);
            k.left[cell].axpy(w.a1[cell], f1);
            k.right[cell].axpy(w.b0[cell], f0);
            k.right[cell].axpy(w.b1[cell], f1);
        }
        for n in 1..grid.n {
            let u = grid.t(n);
            if u < c.cutoff {
                k.values[n].axpy((c.g)(u), &f.values[n]);
            }
        }
    }
    k
}

/// `int_s^t dt1 int_s^{t1} dt2 g(t - t2) body(t1, t2)` on `n` sub-intervals.
///
/// Without a contraction the triangle is done by nested trapezoid rules.
/// With one, the `t1` integral is done first; it vanishes linearly at
/// `t2 = t` and the outer integral uses product weights of `g`.
pub fn ordered_double_integral(
    outer: Option<&Contraction<'_>>,
    body: impl Fn(f64, f64) -> SuperOp,
    s: f64,
    t: f64,
    n: usize,
) -> SuperOp {
    assert!(t >= s && n >= 1);
    let h = (t - s) / n as f64;
    if h == 0.0 {
        return SuperOp::zero();
    }
    // inner[i] = int_{t2_i}^{t} body(t1, t2_i) dt1, with t2_i = t - i h
    let inner: Vec<SuperOp> = (0..=n)
        .map(|i| {
            let t2 = t - i as f64 * h;
            let mut acc = SuperOp::zero();
            for q in 0..i {
                let a = t2 + q as f64 * h;
                let w = C64::new(0.5 * h, 0.0);
                acc.axpy(w, &body(a, t2));
                acc.axpy(w, &body(a + h, t2));
            }
            acc
        })
        .collect();
    match outer {
        None => {
            let mut acc = SuperOp::zero();
            for i in 0..n {
                acc.axpy(C64::new(0.5 * h, 0.0), &inner[i]);
                acc.axpy(C64::new(0.5 * h, 0.0), &inner[i + 1]);
            }
            acc
        }
        Some(c) => {
            let w = ContractionWeights::new(h, n, c);
            w.integrate(0, |i| &inner[i], n)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn id(x: f64) -> SuperOp {
        SuperOp::identity().scale_re(x)
    }

    #[test]
    fn gauss_legendre_exact_on_polynomials() {
        let s: f64 = gauss_legendre(0.0, 2.0).map(|(u, w)| w * u.powi(15)).sum();
        assert!((s - 2f64.powi(16) / 16.0).abs() < 1e-9);
    }

    #[test]
    fn product_weights_for_smooth_function() {
        let g = |u: f64| C64::new((-u).exp(), 0.0);
        let c = Contraction::regular(&g);
        let w = ContractionWeights::new(0.1, 10, &c);
        // F = 1 exactly linear: sum of all weights = int_0^1 e^-u
        let tot: C64 = (0..10).map(|j| w.l(j) + w.r(j)).sum();
        assert!((tot.re - (1.0 - (-1.0f64).exp())).abs() < 1e-13);
    }

    #[test]
    fn narrow_function_weight_is_resolved() {
        let temp = 400.0;
        let g = move |u: f64| C64::new(u * temp * temp * (-PI * u * temp).exp(), 0.0);
        let c = Contraction { g: &g, singular: C64::new(0.0, 0.0), decay: PI * temp, cutoff: 700.0 / (PI * temp) };
        let w = ContractionWeights::new(0.04, 4, &c);
        let exact = 1.0 / (PI * PI);
        let tot: C64 = (0..4).map(|j| w.l(j) + w.r(j)).sum();
        assert!((tot.re - exact).abs() < 1e-12);
    }

    #[test]
    fn regularized_singular_cell() {
        // g = 1/u against F(u) = u: exact integral over [0, h] is h
        let g = |u: f64| C64::new(1.0 / u, 0.0);
        let c = Contraction { g: &g, singular: C64::new(1.0, 0.0), decay: 0.0, cutoff: f64::INFINITY };
        let h = 0.2;
        let w = ContractionWeights::new(h, 3, &c);
        let f = [0.0, h, 2.0 * h, 3.0 * h];
        let approx: C64 = (0..3).map(|j| w.l(j) * f[j] + w.r(j) * f[j + 1]).sum();
        assert!((approx.re - 3.0 * h).abs() < 1e-12);
    }

    #[test]
    fn double_integral_without_contraction() {
        let r = ordered_double_integral(None, |_, _| SuperOp::identity(), 0.5, 2.0, 20);
        assert!((r.0[0][0].re - 1.5 * 1.5 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn double_integral_with_power_law_contraction() {
        // int_0^t dt2 (1/(t - t2)) int_{t2}^t cos(t1) dt1
        let t = 1.3;
        let reference: f64 = {
            let mut acc = 0.0;
            let n = 400;
            let h = t / n as f64;
            for q in 0..n {
                for (u, w) in gauss_legendre(q as f64 * h, (q + 1) as f64 * h) {
                    acc += w * (t.sin() - (t - u).sin()) / u;
                }
            }
            acc
        };
        let g = |u: f64| C64::new(1.0 / u, 0.0);
        let c = Contraction { g: &g, singular: C64::new(1.0, 0.0), decay: 0.0, cutoff: f64::INFINITY };
        let r = ordered_double_integral(Some(&c), |t1, _| id(t1.cos()), 0.0, t, 200);
        assert!(r.is_finite());
        assert!(((r.0[0][0].re - reference) / reference).abs() < 1e-4);
    }
}
