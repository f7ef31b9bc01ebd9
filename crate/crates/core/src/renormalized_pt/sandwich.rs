//! Kernels of the form `sum_c coef_c g_c(u) A_c X(u) B_c`.

use rayon::prelude::*;

use super::lines::Line;
use crate::superfermion_algebra::{SparseOp, SuperOp, C64};
use crate::timegrid_calculus::{cell_offsets, cubic_stencil, GridFn1, KernelFn, TimeGrid, GL_POINTS};

/// The operator-valued factor `X(u)` between the two vertices.
pub enum Inner<'a> {
    /// `exp(-i L u)` (nodes in `free`) plus cubic interpolation of `diff`.
    Propagator { l: &'a SuperOp, free: &'a [SuperOp], diff: Option<&'a GridFn1> },
    /// Cubic interpolation of nodal data with given `X(0)` and `X'(0)`.
    Plain { x: &'a GridFn1, x0: SuperOp, dx0: SuperOp },
}

impl Inner<'_> {
    fn node(&self, k: usize) -> SuperOp {
        match self {
            Inner::Propagator { free, diff, .. } => {
                let mut v = free[k];
                if let Some(d) = diff {
                    v += d.values[k];
                }
                v
            }
            Inner::Plain { x, .. } => x.values[k],
        }
    }

    fn origin(&self) -> (SuperOp, SuperOp) {
        match self {
            Inner::Propagator { l, .. } => (SuperOp::identity(), l.scale(C64::new(0.0, -1.0))),
            Inner::Plain { x0, dx0, .. } => (*x0, *dx0),
        }
    }
}

pub struct Term<'a> {
    pub line: &'a Line,
    pub left: &'a SparseOp,
    pub right: &'a SparseOp,
    pub coef: C64,
}

fn sandwich(t: &Term<'_>, x: &SuperOp) -> SuperOp {
    t.right.mul_right(&t.left.mul_left(x))
}

/// Kernel with exact nodal values and cell moments from sub-cell quadrature.
///
/// In the first cell `coef g X - coef (s/u) X(0)` is integrated, which drops a
/// log-divergent piece proportional to `A X(0) B`; callers sum over terms for
/// which that piece cancels (or has a vanishing trace row).
pub fn sandwich_kernel(grid: TimeGrid, inner: &Inner<'_>, terms: &[Term<'_>]) -> KernelFn {
    let h = grid.dt;
    let n = grid.n;
    let decay = terms.iter().fold(0.0_f64, |m, t| m.max(t.line.decay));
    let cutoff = terms.iter().fold(0.0_f64, |m, t| m.max(t.line.cutoff));
    let (x0, dx0) = inner.origin();
    // The first cell needs no refinement at the origin: both
    // (g - s/u) X and s (X - X(0)) / u are smooth.
    let offs = cell_offsets(h, false, decay);

    // Pi_inf(delta) for the shared offsets, panel by panel
    let exps: Option<Vec<SuperOp>> = match inner {
        Inner::Propagator { l, .. } => {
            let e = |d: f64| l.scale(C64::new(0.0, -d)).exp();
            let per = GL_POINTS;
            let first: Vec<SuperOp> = offs[..per].iter().map(|&(d, _)| e(d)).collect();
            let mut all = first.clone();
            if offs.len() > per {
                let step = e(offs[per].0 - offs[0].0);
                let mut prev = first;
                for _ in 1..offs.len() / per {
                    prev = prev.iter().map(|x| step.matmul(x)).collect();
                    all.extend_from_slice(&prev);
                }
            }
            Some(all)
        }
        Inner::Plain { .. } => None,
    };

    // nodal data interpolated inside the cells
    let interp: Option<&GridFn1> = match inner {
        Inner::Propagator { diff, .. } => *diff,
        Inner::Plain { x, .. } => Some(x),
    };

    // X enters linearly, so per term only scalar weights are accumulated:
    // on Pi_inf(delta) for the free part, on stencil nodes for the
    // interpolated part and on X(0) for the subtraction.
    let moments: Vec<(SuperOp, SuperOp)> = (0..n - 1)
        .into_par_iter()
        .map(|cell| {
            let a = cell as f64 * h;
            let mut lm = SuperOp::zero();
            let mut rm = SuperOp::zero();
            if a >= cutoff {
                return (lm, rm);
            }
            let nodes = &offs;
            let z = C64::new(0.0, 0.0);
            let nt = terms.len();
            let mut free_acc = vec![(SuperOp::zero(), SuperOp::zero()); if exps.is_some() { nt } else { 0 }];
            let mut sten: Vec<Vec<(usize, C64, C64)>> = vec![Vec::with_capacity(6); nt];
            let mut sing = vec![(z, z); nt];
            for (q, &(d, w)) in nodes.iter().enumerate() {
                let u = a + d;
                let th = d / h;
                let (wl, wr) = (w * (1.0 - th), w * th);
                let st = interp.map(|x| cubic_stencil(x.grid, u));
                for (ti, t) in terms.iter().enumerate() {
                    let g = t.line.eval(u);
                    if let Some(e) = &exps {
                        let eq = &e[q];
                        free_acc[ti].0.axpy(g * wl, eq);
                        free_acc[ti].1.axpy(g * wr, eq);
                    }
                    if let Some((i0, ws)) = st {
                        for (j, wj) in ws.iter().enumerate() {
                            let idx = i0 + j;
                            let slot = match sten[ti].iter().position(|e| e.0 == idx) {
                                Some(p) => p,
                                None => {
                                    sten[ti].push((idx, z, z));
                                    sten[ti].len() - 1
                                }
                            };
                            sten[ti][slot].1 += g * (wl * wj);
                            sten[ti][slot].2 += g * (wr * wj);
                        }
                    }
                    if cell == 0 {
                        let sg = t.line.singular / u;
                        sing[ti].0 -= sg * wl;
                        sing[ti].1 -= sg * wr;
                    }
                }
            }
            for (ti, t) in terms.iter().enumerate() {
                let (mut l, mut r) = match (inner, free_acc.get(ti)) {
                    (Inner::Propagator { free, .. }, Some((fl, fr))) => (fl.matmul(&free[cell]), fr.matmul(&free[cell])),
                    _ => (SuperOp::zero(), SuperOp::zero()),
                };
                if let Some(x) = interp {
                    for &(idx, cl, cr) in &sten[ti] {
                        l.axpy(cl, &x.values[idx]);
                        r.axpy(cr, &x.values[idx]);
                    }
                }
                if cell == 0 {
                    l.axpy(sing[ti].0, &x0);
                    r.axpy(sing[ti].1, &x0);
                }
                lm.axpy(t.coef, &sandwich(t, &l));
                rm.axpy(t.coef, &sandwich(t, &r));
            }
            (lm, rm)
        })
        .collect();

    let mut k = KernelFn::zeros(grid);
    for (c, (l, r)) in moments.into_iter().enumerate() {
        k.left[c] = l;
        k.right[c] = r;
    }
    k.values = (0..n)
        .into_par_iter()
        .map(|m| {
            let mut v = SuperOp::zero();
            if m == 0 {
                for t in terms {
                    v.axpy(t.coef * t.line.finite0, &sandwich(t, &x0));
                    v.axpy(t.coef * t.line.singular, &sandwich(t, &dx0));
                }
                return v;
            }
            let u = grid.t(m);
            let x = inner.node(m);
            for t in terms {
                let g = t.line.eval(u);
                if g != C64::new(0.0, 0.0) {
                    v.axpy(t.coef * g, &sandwich(t, &x));
                }
            }
            v
        })
        .collect();
    k
}
