//! Right-hand sides of the vertex remainders and the vertex contributions to
//! the kernel derivatives, evaluated on the coarse grids.
//!
//! Composite names: `y0 = P R`, `y12 = P' R + P dR` (see [`Coarse::composites`]),
//! `za = Z^{dgamma}[y0] + Z^{gamma}[y12]`, `zb = Z^{gamma}[y0]` with
//! `Z^g[Y]_2bar(s, y) = int_0^y dz g_2(s + z) Y_2bar(z, y - z)`.

use rayon::prelude::*;

use super::coarse::{pw, tw, Coarse, LineSet, ONE, ZERO};
use crate::superfermion_algebra::{SparseOp, SpinOrbital, SuperOp, Superfermions, C64};
use crate::timegrid_calculus::{GridFn2, GridFn3, TimeGrid};

/// Triangle-indexed storage `(p, q)` with `p + q < n`.
pub struct Tri<T> {
    n: usize,
    offsets: Vec<usize>,
    pub data: Vec<T>,
}

impl<T> Tri<T> {
    pub fn build(n: usize, f: impl Fn(usize, usize) -> T + Sync) -> Self
    where
        T: Send,
    {
        let mut offsets = Vec::with_capacity(n);
        let mut o = 0;
        for p in 0..n {
            offsets.push(o);
            o += n - p;
        }
        let data = (0..o)
            .into_par_iter()
            .map(|k| {
                let p = offsets.partition_point(|&x| x <= k) - 1;
                f(p, k - offsets[p])
            })
            .collect();
        Tri { n, offsets, data }
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize) -> &T {
        debug_assert!(p + q < self.n);
        &self.data[self.offsets[p] + q]
    }
}

fn collect2(g: TimeGrid, f: impl Fn(usize, usize) -> SuperOp + Sync) -> GridFn2 {
    let t = Tri::build(g.n, f);
    let mut out = GridFn2::zeros(g);
    out.data = t.data;
    out
}

/// `G+_a Pi_p G+_b Pi_q G+_e` for all index triples, flattened as `16 a + 4 b + e`.
pub struct Strings3(pub Vec<Tri<SparseOp>>);

impl Strings3 {
    pub fn new(c: &Coarse<'_>) -> Self {
        let n = c.n();
        let mut v = Vec::with_capacity(64);
        for a in SpinOrbital::ALL {
            for b in SpinOrbital::ALL {
                let (ka, kb) = (a.index(), b.index());
                // G+_a Pi_p G+_b is c.s[a][b][p]
                for e in SpinOrbital::ALL {
                    let ge = c.sf.sp(e);
                    v.push(Tri::build(n, |p, q| {
                        let right = ge.mul_right(&c.pi[q]);
                        SparseOp::from_dense(&c.s[ka][kb][p].mul_left(&right))
                    }));
                }
            }
        }
        Strings3(v)
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, e: usize) -> &Tri<SparseOp> {
        &self.0[16 * a + 4 * b + e]
    }
}

/// `Z` tables for every multi-index 2 (stored under the index of `g_2`).
pub fn zeta(c: &Coarse<'_>, y0: &[GridFn2], y12: &[GridFn2]) -> (Vec<GridFn2>, Vec<GridFn2>) {
    let g = c.g;
    let mut za = Vec::with_capacity(4);
    let mut zb = Vec::with_capacity(4);
    for o in SpinOrbital::ALL {
        let (k, kb) = (o.index(), o.bar().index());
        za.push(collect2(g, |s, y| {
            let mut acc = SuperOp::zero();
            for z in 1..=y {
                acc.axpy(pw(&c.dgam.w[k], s, y, z), y0[kb].get(z, y - z));
                acc.axpy(pw(&c.gam.w[k], s, y, z), y12[kb].get(z, y - z));
            }
            acc
        }));
        zb.push(collect2(g, |s, y| {
            let mut acc = SuperOp::zero();
            for z in 1..=y {
                acc.axpy(pw(&c.gam.w[k], s, y, z), y0[kb].get(z, y - z));
            }
            acc
        }));
    }
    (za, zb)
}

/// Remainder of the two-time-argument vertex on the coarse grid.
pub struct OneInput<'a> {
    pub y0: &'a [GridFn2],
    pub y12: &'a [GridFn2],
    pub s3: &'a Strings3,
    /// Contributions of the three-argument remainder, on its own grid.
    pub rest_terms: &'a [GridFn2],
}

pub fn d_rest_one(c: &Coarse<'_>, inp: &OneInput<'_>) -> Vec<GridFn2> {
    let g = c.g;
    let n = c.n();
    let h = c.h();
    let (za, zb) = zeta(c, inp.y0, inp.y12);
    let sparse = |f: &GridFn2| Tri::build(n, |a, b| SparseOp::from_dense(f.get(a, b)));
    let lam_sp: Vec<Vec<Tri<SparseOp>>> = [0, 3].iter().map(|&q| c.lam[q].iter().map(sparse).collect()).collect();
    let za_sp: Vec<Tri<SparseOp>> = za.iter().map(sparse).collect();
    let zb_sp: Vec<Tri<SparseOp>> = zb.iter().map(sparse).collect();
    let all = SpinOrbital::ALL;
    let mut out = Vec::with_capacity(4);
    for o1 in all {
        let k1 = o1.index();
        let y0 = sparse(&inp.y0[k1]);
        let y12 = sparse(&inp.y12[k1]);
        // int_0^y dp Y(x, p) Pi(y - p) with Pi or dPi on the right
        let j0 = collect2(g, |i, j| {
            let mut acc = SuperOp::zero();
            for p in 0..=j {
                y0.get(i, p).add_mul_sparse(&mut acc, C64::new(tw(h, j, p), 0.0), &c.pi_sp[j - p]);
            }
            acc
        });
        let j1 = collect2(g, |i, j| {
            let mut acc = SuperOp::zero();
            for p in 0..=j {
                let w = C64::new(tw(h, j, p), 0.0);
                y12.get(i, p).add_mul_sparse(&mut acc, w, &c.pi_sp[j - p]);
                y0.get(i, p).add_mul_sparse(&mut acc, w, &c.dpi_sp[j - p]);
            }
            acc
        });
        out.push(collect2(g, |i, j| {
            let mut acc = SuperOp::zero();
            for o2 in all {
                let k2 = o2.index();
                let g2 = c.sf.sp(o2);
                // vertex then line ending on the left of the second vertex
                c.s[k2][k1][i].add_mul_sparse(&mut acc, ONE, za_sp[k2].get(i, j));
                c.ds[k2][k1][i].add_mul_sparse(&mut acc, ONE, zb_sp[k2].get(i, j));
                // line over both, closing on the right
                let mut mid = j0.get(i, j).scale(c.dgam.node[k2][i + j]);
                mid.axpy(c.gam.node[k2][i + j], j1.get(i, j));
                acc += c.sf.sp(o2.bar()).mul_right(&g2.mul_left(&mid));
                // both vertex parts
                let mut rr = SuperOp::zero();
                for p in 0..=j {
                    let w = C64::new(tw(h, j, p), 0.0);
                    if w == ZERO {
                        continue;
                    }
                    y0.get(i, p).add_mul_sparse(&mut rr, w, za_sp[k2].get(i + p, j - p));
                    y12.get(i, p).add_mul_sparse(&mut rr, w, zb_sp[k2].get(i + p, j - p));
                }
                g2.add_mul_left(&mut acc, ONE, &rr);
                // lines to the two-vertex remainder
                acc += d_two_terms(c, inp.s3, &lam_sp, o1, o2, i, j);
            }
            acc += inp.rest_terms[k1].interp(i as f64 * h, j as f64 * h);
            acc
        }));
    }
    out
}

/// Terms where line 2 ends on one of the two uncontracted vertices of the
/// leading three-argument part.
pub(crate) fn d_two_terms(
    c: &Coarse<'_>,
    s3: &Strings3,
    lam_sp: &[Vec<Tri<SparseOp>>],
    o1: SpinOrbital,
    o2: SpinOrbital,
    i: usize,
    j: usize,
) -> SuperOp {
    let (k1, k2, kb) = (o1.index(), o2.index(), o2.bar().index());
    let mut inner = SuperOp::zero();
    // ends on the first uncontracted vertex (2bar, 1)
    for w in 1..=i {
        let wd = pw(&c.dgam.w[k2], 0, i, w);
        let wg = pw(&c.gam.w[k2], 0, i, w);
        if wd == ZERO && wg == ZERO {
            continue;
        }
        let s = i - w + j;
        for o3 in SpinOrbital::ALL {
            let (k3, k3b) = (o3.index(), o3.bar().index());
            let st = s3.get(kb, k1, k3b).get(i - w, j);
            lam_sp[0][k3].get(w, s).add_mul_sparse(&mut inner, -wd, st);
            lam_sp[1][k3].get(w, s).add_mul_sparse(&mut inner, -wg, st);
        }
    }
    // ends on the second uncontracted vertex (1, 2bar)
    if i > 0 {
        for o3 in SpinOrbital::ALL {
            let (k3, k3b) = (o3.index(), o3.bar().index());
            let tri = s3.get(k1, kb, k3b);
            let mut om_d = SuperOp::zero();
            let mut om_g = SuperOp::zero();
            for v in 0..=j {
                let (wd, wg) = (pw(&c.dgam.w[k2], i, j, v), pw(&c.gam.w[k2], i, j, v));
                for &(r, q, z) in &tri.get(v, j - v).entries {
                    om_d.0[r][q] += wd * z;
                    om_g.0[r][q] += wg * z;
                }
            }
            lam_sp[0][k3].get(i, j).add_mul_left(&mut inner, -ONE, &om_d);
            lam_sp[1][k3].get(i, j).add_mul_left(&mut inner, -ONE, &om_g);
        }
    }
    c.sf.sp(o2).mul_left(&inner)
}

/// Lines from the left end into the three-argument remainder, evaluated on
/// its grid: `-sum_2 G+_2 int_0^x dw dg_2(w) PQ_{2bar 1}(w, x - w, y)` plus
/// `sum_2 G+_2 int_0^y dv dg_2(x + v) PQ_{1 2bar}(x, v, y - v)`.
pub fn rest_terms(sf: &Superfermions, g: TimeGrid, pq: &[GridFn3], dgam: &LineSet) -> Vec<GridFn2> {
    SpinOrbital::ALL
        .iter()
        .map(|&o1| {
            let k1 = o1.index();
            collect2(g, |i, j| {
                let mut acc = SuperOp::zero();
                for o2 in SpinOrbital::ALL {
                    let (k2, kb) = (o2.index(), o2.bar().index());
                    let mut inner = SuperOp::zero();
                    for w in 1..=i {
                        inner.axpy(-pw(&dgam.w[k2], 0, i, w), pq[4 * kb + k1].get(w, i - w, j));
                    }
                    if i > 0 {
                        for v in 0..=j {
                            inner.axpy(pw(&dgam.w[k2], i, j, v), pq[4 * k1 + kb].get(i, v, j - v));
                        }
                    }
                    sf.sp(o2).add_mul_left(&mut acc, ONE, &inner);
                }
                acc
            })
        })
        .collect()
}

/// `int_0^w Pi(w - w') Q_rest(w', b, c) dw'` on the three-argument grid.
pub fn pq_rest(pi_sp: &[SparseOp], q: &[GridFn3]) -> Vec<GridFn3> {
    q.par_iter()
        .map(|qf| {
            let g = qf.grid;
            let n = g.n;
            let h = g.dt;
            let mut out = GridFn3::zeros(g);
            for a in 1..n {
                for b in 0..n - a {
                    for cc in 0..n - a - b {
                        let mut acc = SuperOp::zero();
                        for k in 0..=a {
                            pi_sp[a - k].add_mul_left(&mut acc, C64::new(tw(h, a, k), 0.0), qf.get(k, b, cc));
                        }
                        *out.get_mut(a, b, cc) = acc;
                    }
                }
            }
            out
        })
        .collect()
}

/// Derivative of the three-argument remainder:
/// `sum_3 gamma_3(a + b + c) G+_3 d[Pi(a) G+_1 Pi(b) G+_2 Pi(c)] G+_3bar`.
pub fn d_rest_two(sf: &Superfermions, g: TimeGrid, pi: &[SuperOp], dpi: &[SuperOp], gam: &LineSet) -> Vec<GridFn3> {
    let n = g.n;
    let all = SpinOrbital::ALL;
    let mut out = Vec::with_capacity(16);
    for o1 in all {
        let a1 = Tri::build(n, |a, b| sf.sp(o1).mul_right(&pi[a]).matmul(&pi[b]));
        let da1 = Tri::build(n, |a, b| {
            let mut v = sf.sp(o1).mul_right(&dpi[a]).matmul(&pi[b]);
            v += sf.sp(o1).mul_right(&pi[a]).matmul(&dpi[b]);
            v
        });
        for o2 in all {
            let b2: Vec<SparseOp> = pi.iter().map(|p| SparseOp::from_dense(&sf.sp(o2).mul_left(p))).collect();
            let db2: Vec<SparseOp> = dpi.iter().map(|p| SparseOp::from_dense(&sf.sp(o2).mul_left(p))).collect();
            let pts: Vec<(usize, usize, usize)> =
                (0..n).flat_map(|a| (0..n - a).flat_map(move |b| (0..n - a - b).map(move |c| (a, b, c)))).collect();
            let vals: Vec<SuperOp> = pts
                .par_iter()
                .map(|&(a, b, c)| {
                    let s = a + b + c;
                    if s == 0 {
                        return SuperOp::zero();
                    }
                    let mut m = b2[c].mul_right(da1.get(a, b));
                    db2[c].add_mul_right(&mut m, ONE, a1.get(a, b));
                    let mut acc = SuperOp::zero();
                    for o3 in all {
                        let gv = gam.node[o3.index()][s];
                        if gv == ZERO {
                            continue;
                        }
                        let t = sf.sp(o3.bar()).mul_right(&sf.sp(o3).mul_left(&m));
                        acc.axpy(gv, &t);
                    }
                    acc
                })
                .collect();
            let mut f = GridFn3::zeros(g);
            for (&(a, b, c), v) in pts.iter().zip(vals) {
                *f.get_mut(a, b, c) = v;
            }
            out.push(f);
        }
    }
    out
}

/// Vertex contributions to a kernel derivative at the coarse nodes:
/// `sum_1 coef_1 A_1 int_0^t dd [dg_1(d) PR_1bar + g_1(d) (P'R + P dR)_1bar](d, t - d)`.
pub fn kernel_vertex_part(c: &Coarse<'_>, y0: &[GridFn2], y12: &[GridFn2], og: &LineSet, od: &LineSet, left: &[&SparseOp; 4], coef: &[C64; 4]) -> Vec<SuperOp> {
    (0..c.n())
        .into_par_iter()
        .map(|m| {
            let mut acc = SuperOp::zero();
            for o in SpinOrbital::ALL {
                let (k, kb) = (o.index(), o.bar().index());
                let mut inner = SuperOp::zero();
                for i in 1..=m {
                    inner.axpy(pw(&od.w[k], 0, m, i), y0[kb].get(i, m - i));
                    inner.axpy(pw(&og.w[k], 0, m, i), y12[kb].get(i, m - i));
                }
                left[k].add_mul_left(&mut acc, coef[k], &inner);
            }
            acc
        })
        .collect()
}

#[cfg(test)]
/// Leading three-argument vertex
/// `-sum_3 gamma_3(a + b + c) G+_3 Pi(a) G+_1 Pi(b) G+_2 Pi(c) G+_3bar`.
pub fn leading_two(sf: &Superfermions, g: TimeGrid, pi: &[SuperOp], gam: &LineSet) -> Vec<GridFn3> {
    let n = g.n;
    let mut out = Vec::with_capacity(16);
    for o1 in SpinOrbital::ALL {
        for o2 in SpinOrbital::ALL {
            let mut f = GridFn3::zeros(g);
            for a in 0..n {
                for b in 0..n - a {
                    let ab = sf.sp(o1).mul_right(&pi[a]).matmul(&pi[b]);
                    for c in 0..n - a - b {
                        let m = ab.matmul(&sf.sp(o2).mul_left(&pi[c]));
                        let mut acc = SuperOp::zero();
                        for o3 in SpinOrbital::ALL {
                            let gv = gam.node[o3.index()][a + b + c];
                            let t = sf.sp(o3.bar()).mul_right(&sf.sp(o3).mul_left(&m));
                            acc.axpy(-gv, &t);
                        }
                        *f.get_mut(a, b, c) = acc;
                    }
                }
            }
            out.push(f);
        }
    }
    out
}
