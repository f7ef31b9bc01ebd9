//! Per-evaluation tables on the coarse vertex grid.
//!
//! Notation: `i, j` are coarse node indices, `Pi_i = Pi(i h)`. The leading
//! part of the vertex regular term is carried analytically,
//! `R_bb,1(x, y) = sum_2 g_2(x + y) G+_2 Pi(x) G+_1 Pi(y) G+_2bar`,
//! and `PR(d, y) = int_0^d Pi(d - x) R(x, y) dx` is the composite that
//! appears whenever a vertex sits below a propagator.

use rayon::prelude::*;

use crate::renormalized_pt::Line;
use crate::superfermion_algebra::{SparseOp, SpinOrbital, SuperOp, Superfermions, C64};
use crate::timegrid_calculus::{cubic_stencil, ContractionWeights, GridFn1, GridFn2, TimeGrid};

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Weight of node `k` in `int_0^{n h} g(shift h + u) F(u) du`.
#[inline]
pub(crate) fn pw(w: &ContractionWeights, shift: usize, n: usize, k: usize) -> C64 {
    let mut z = ZERO;
    if k < n {
        z += w.l(shift + k);
    }
    if k >= 1 {
        z += w.r(shift + k - 1);
    }
    z
}

/// Trapezoid weight of node `k` on `[0, n h]`.
#[inline]
pub(crate) fn tw(h: f64, n: usize, k: usize) -> f64 {
    if n == 0 {
        0.0
    } else if k == 0 || k == n {
        0.5 * h
    } else {
        h
    }
}

/// `Pi` at coarse nodes: exact free part plus the cubic interpolant of
/// `Pi - Pi_inf` from the fine grid.
pub(crate) fn resample_pi(fine: &GridFn1, fine_free: &[SuperOp], coarse_free: &[SuperOp], g: TimeGrid) -> Vec<SuperOp> {
    (0..g.n)
        .map(|i| {
            let (i0, w) = cubic_stencil(fine.grid, g.t(i).min(fine.grid.t_max()));
            let mut v = coarse_free[i];
            for q in 0..4 {
                let k = i0 + q;
                if k < fine.grid.n {
                    v.axpy(C64::new(w[q], 0.0), &fine.values[k]);
                    v.axpy(C64::new(-w[q], 0.0), &fine_free[k]);
                }
            }
            v
        })
        .collect()
}

pub(crate) fn resample(fine: &GridFn1, g: TimeGrid) -> Vec<SuperOp> {
    (0..g.n).map(|i| fine.cubic_at(g.t(i).min(fine.grid.t_max()))).collect()
}

pub(crate) fn sparse_all(v: &[SuperOp]) -> Vec<SparseOp> {
    v.iter().map(SparseOp::from_dense).collect()
}

/// Contraction data of the four multi-indices on one coarse grid.
pub struct LineSet {
    pub w: Vec<ContractionWeights>,
    /// Pointwise values at nodes, zero at the origin.
    pub node: Vec<Vec<C64>>,
}

impl LineSet {
    pub fn new(lines: &[Line; 4], g: TimeGrid) -> Self {
        let w = lines.iter().map(|l| ContractionWeights::new(g.dt, g.n - 1, &l.contraction())).collect();
        let node = lines
            .iter()
            .map(|l| (0..g.n).map(|k| if k == 0 { ZERO } else { l.eval(g.t(k)) }).collect())
            .collect();
        LineSet { w, node }
    }
}

/// Tables shared by the kernel and vertex right-hand sides.
pub struct Coarse<'a> {
    pub sf: &'a Superfermions,
    pub g: TimeGrid,
    pub pi: Vec<SuperOp>,
    pub pi_sp: Vec<SparseOp>,
    pub dpi_sp: Vec<SparseOp>,
    pub gam: LineSet,
    pub dgam: LineSet,
    /// `lam[c][2](i, s) = int_0^{i h} dx g_2(x + s h) T_c,2(i h - x, x)` for
    /// `c = 0: (gamma, Pi G Pi)`, `1: (gamma, dPi G Pi)`, `2: (gamma, Pi G dPi)`,
    /// `3: (dgamma, Pi G Pi)`.
    pub lam: Vec<Vec<GridFn2>>,
    /// `s[1][2bar](j) = G+_1 Pi_j G+_2bar` and the same with `dPi_j`.
    pub s: Vec<Vec<Vec<SparseOp>>>,
    pub ds: Vec<Vec<Vec<SparseOp>>>,
}

/// Three-index tables `T(a, b) = X_a G+_2 Y_b` on the triangle.
fn sandwich_table(g: TimeGrid, sf: &Superfermions, o: SpinOrbital, x: &[SuperOp], y: &[SuperOp]) -> GridFn2 {
    let mut t = GridFn2::zeros(g);
    let gy: Vec<SuperOp> = y.iter().map(|v| sf.sp(o).mul_left(v)).collect();
    let rows: Vec<Vec<SuperOp>> = (0..g.n).into_par_iter().map(|a| (0..g.n - a).map(|b| x[a].matmul(&gy[b])).collect()).collect();
    for (a, row) in rows.into_iter().enumerate() {
        for (b, v) in row.into_iter().enumerate() {
            *t.get_mut(a, b) = v;
        }
    }
    t
}

/// `out(i, s) = sum_k pw(w, s, i, k) T(i - k, k)`.
fn lambda_table(g: TimeGrid, w: &ContractionWeights, t: &GridFn2) -> GridFn2 {
    let mut out = GridFn2::zeros(g);
    let rows: Vec<Vec<SuperOp>> = (0..g.n)
        .into_par_iter()
        .map(|i| {
            (0..g.n - i)
                .map(|s| {
                    let mut acc = SuperOp::zero();
                    for k in 0..=i {
                        acc.axpy(pw(w, s, i, k), t.get(i - k, k));
                    }
                    acc
                })
                .collect()
        })
        .collect();
    for (i, row) in rows.into_iter().enumerate() {
        for (s, v) in row.into_iter().enumerate() {
            *out.get_mut(i, s) = v;
        }
    }
    out
}

impl<'a> Coarse<'a> {
    pub fn new(sf: &'a Superfermions, g: TimeGrid, pi: Vec<SuperOp>, dpi: Vec<SuperOp>, gam: &[Line; 4], dgam: &[Line; 4]) -> Self {
        let gam = LineSet::new(gam, g);
        let dgam = LineSet::new(dgam, g);
        let all = SpinOrbital::ALL;
        let t0: Vec<GridFn2> = all.iter().map(|&o| sandwich_table(g, sf, o, &pi, &pi)).collect();
        let t1: Vec<GridFn2> = all.iter().map(|&o| sandwich_table(g, sf, o, &dpi, &pi)).collect();
        let t2: Vec<GridFn2> = all.iter().map(|&o| sandwich_table(g, sf, o, &pi, &dpi)).collect();
        let lam = vec![
            (0..4).map(|k| lambda_table(g, &gam.w[k], &t0[k])).collect(),
            (0..4).map(|k| lambda_table(g, &gam.w[k], &t1[k])).collect(),
            (0..4).map(|k| lambda_table(g, &gam.w[k], &t2[k])).collect(),
            (0..4).map(|k| lambda_table(g, &dgam.w[k], &t0[k])).collect(),
        ];
        let string = |x: &[SuperOp]| -> Vec<Vec<Vec<SparseOp>>> {
            all.iter()
                .map(|&a| {
                    all.iter()
                        .map(|&b| x.iter().map(|v| SparseOp::from_dense(&sf.sp(b).mul_right(&sf.sp(a).mul_left(v)))).collect())
                        .collect()
                })
                .collect()
        };
        let s = string(&pi);
        let ds = string(&dpi);
        let pi_sp = sparse_all(&pi);
        let dpi_sp = sparse_all(&dpi);
        Coarse { sf, g, pi, pi_sp, dpi_sp, gam, dgam, lam, s, ds }
    }

    pub fn n(&self) -> usize {
        self.g.n
    }

    pub fn h(&self) -> f64 {
        self.g.dt
    }

    /// `PR`, `P'R` and `P dR` for every multi-index, given the stored
    /// remainders `rest` of `R` and `drest` of `dR`.
    pub fn composites(&self, rest: &[GridFn2], drest: &[GridFn2]) -> [Vec<GridFn2>; 3] {
        let n = self.n();
        let h = self.h();
        let one = |o1: SpinOrbital| -> [GridFn2; 3] {
            let k1 = o1.index();
            let rows: Vec<Vec<[SuperOp; 3]>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    (0..n - i)
                        .map(|j| {
                            let mut y = [SuperOp::zero(), SuperOp::zero(), SuperOp::zero()];
                            for o2 in SpinOrbital::ALL {
                                let (k2, kb) = (o2.index(), o2.bar().index());
                                let sj = &self.s[k1][kb][j];
                                let dsj = &self.ds[k1][kb][j];
                                sj.add_mul_right(&mut y[0], ONE, self.lam[0][k2].get(i, j));
                                sj.add_mul_right(&mut y[1], ONE, self.lam[1][k2].get(i, j));
                                let mut a = *self.lam[3][k2].get(i, j);
                                a += *self.lam[2][k2].get(i, j);
                                sj.add_mul_right(&mut y[2], ONE, &a);
                                dsj.add_mul_right(&mut y[2], ONE, self.lam[0][k2].get(i, j));
                            }
                            for k in 0..=i {
                                let w = C64::new(tw(h, i, k), 0.0);
                                if w.re == 0.0 {
                                    continue;
                                }
                                let r = rest[k1].get(k, j);
                                self.pi_sp[i - k].add_mul_left(&mut y[0], w, r);
                                self.dpi_sp[i - k].add_mul_left(&mut y[1], w, r);
                                self.pi_sp[i - k].add_mul_left(&mut y[2], w, drest[k1].get(k, j));
                            }
                            y
                        })
                        .collect()
                })
                .collect();
            let mut out = [GridFn2::zeros(self.g), GridFn2::zeros(self.g), GridFn2::zeros(self.g)];
            for (i, row) in rows.into_iter().enumerate() {
                for (j, y) in row.into_iter().enumerate() {
                    for c in 0..3 {
                        *out[c].get_mut(i, j) = y[c];
                    }
                }
            }
            out
        };
        let mut y0 = Vec::new();
        let mut y1 = Vec::new();
        let mut y2 = Vec::new();
        for o in SpinOrbital::ALL {
            let [a, b, c] = one(o);
            y0.push(a);
            y1.push(b);
            y2.push(c);
        }
        [y0, y1, y2]
    }
}
