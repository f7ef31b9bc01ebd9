//! The two four-vertex diagrams with `Pi_inf` lines.

use rayon::prelude::*;

use super::lines::Line;
use super::sandwich::{sandwich_kernel, Inner, Term};
use crate::superfermion_algebra::{SparseOp, SpinOrbital, SuperOp, Superfermions, C64};
use crate::timegrid_calculus::{convolve_kernel, ContractionWeights, DysonStepper, GridError, GridFn1, KernelFn};

/// Leftmost vertex data per multi-index 1: contraction, operator, prefactor.
pub struct Outer<'a> {
    pub line: &'a Line,
    pub left: &'a SparseOp,
    pub coef: C64,
}

/// `-i sum_1 coef g_1(t) A_1 [Pi_inf * K * Pi_inf](t) G+_1bar` with `K` given
/// as the `-i Sigma` kernel of first order.
pub fn nested(stepper: &DysonStepper, sf: &Superfermions, k1: &KernelFn, outers: &[Outer<'_>; 4]) -> Result<KernelFn, GridError> {
    let free = GridFn1 { grid: stepper.grid, values: stepper.free.clone() };
    let z = convolve_kernel(k1, &free)?;
    let y = stepper.solve(&KernelFn::zeros(stepper.grid), Some(&z), &SuperOp::zero())?;
    let terms: Vec<Term<'_>> = SpinOrbital::ALL
        .iter()
        .map(|&o| {
            let out = &outers[o.index()];
            Term { line: out.line, left: out.left, right: sf.sp(o.bar()), coef: out.coef }
        })
        .collect();
    let inner = Inner::Plain { x: &y, x0: SuperOp::zero(), dx0: SuperOp::zero() };
    Ok(sandwich_kernel(stepper.grid, &inner, &terms))
}

/// Crossing diagram
/// `sum_{12} coef_1 int g_1(a+b) g_2(b+c) A_1 Pi(a) G+_2 Pi(b) G+_1bar Pi(c) G+_2bar`
/// over `a + b + c = t`, with `g_2` from `lines2` (all reservoirs).
///
/// The inner `b` integral is done first for every `(a + b, c)` pair using
/// product weights of `g_2` shifted by `c`; the outer one with weights of `g_1`.
pub fn crossing(stepper: &DysonStepper, sf: &Superfermions, lines2: &[Line; 4], outers: &[Outer<'_>; 4]) -> KernelFn {
    let grid = stepper.grid;
    let n = grid.n;
    let h = grid.dt;
    let free = &stepper.free;
    let w2: Vec<ContractionWeights> = lines2.iter().map(|l| ContractionWeights::new(h, n - 1, &l.contraction())).collect();
    let w1: Vec<ContractionWeights> = outers.iter().map(|o| ContractionWeights::new(h, n - 1, &o.line.contraction())).collect();
    // p[2][k] = G+_2 Pi(k h)
    let p: Vec<Vec<SuperOp>> = SpinOrbital::ALL.iter().map(|&o| free.iter().map(|x| sf.sp(o).mul_left(x)).collect()).collect();
    // q[1bar][2bar][c] = G+_1bar Pi(c h) G+_2bar, sparse
    let q: Vec<Vec<Vec<SparseOp>>> = SpinOrbital::ALL
        .iter()
        .map(|&a| {
            SpinOrbital::ALL
                .iter()
                .map(|&b| {
                    free.iter()
                        .map(|x| SparseOp::from_dense(&sf.sp(b).mul_right(&sf.sp(a).mul_left(x))))
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut out = vec![SuperOp::zero(); n];
    for i in 1..n {
        // f[2][k] = Pi((i - k) h) G+_2 Pi(k h)
        let f: Vec<Vec<SuperOp>> = (0..4).map(|o2| (0..=i).map(|k| free[i - k].matmul(&p[o2][k])).collect()).collect();
        let contrib: Vec<(usize, SuperOp)> = (0..n - i)
            .into_par_iter()
            .map(|c| {
                let mut acc = SuperOp::zero();
                for o2 in SpinOrbital::ALL {
                    let w = &w2[o2.index()];
                    // lam = int_0^{i h} g_2(b + c h) Pi(i h - b) G+_2 Pi(b) db
                    let mut lam = SuperOp::zero();
                    for k in 0..=i {
                        let mut wt = C64::new(0.0, 0.0);
                        if k < i {
                            wt += w.l(c + k);
                        }
                        if k >= 1 {
                            wt += w.r(c + k - 1);
                        }
                        lam.axpy(wt, &f[o2.index()][k]);
                    }
                    for o1 in SpinOrbital::ALL {
                        let out1 = &outers[o1.index()];
                        let w = &w1[o1.index()];
                        // node i of int_0^{(i+c) h} g_1(a+b) F da
                        let mut wt = w.r(i - 1);
                        if c > 0 {
                            wt += w.l(i);
                        }
                        if wt == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let tail = q[o1.bar().index()][o2.bar().index()][c].mul_right(&lam);
                        out1.left.add_mul_left(&mut acc, out1.coef * wt, &tail);
                    }
                }
                (i + c, acc)
            })
            .collect();
        for (m, v) in contrib {
            out[m] += v;
        }
    }
    KernelFn::from_nodal(&GridFn1 { grid, values: out })
}
