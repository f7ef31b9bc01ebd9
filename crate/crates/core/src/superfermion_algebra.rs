//! Fock-Liouville space of the Anderson dot.
//!
//! Dot states are ordered `[|0>, |up>, |down>, |up,down>]` with
//! `|up,down> = d+_up d+_down |0>`. Operators are vectorized by column
//! stacking, `vec(A)[i + 4 j] = A[i][j]`, so a superoperator is a 16x16
//! matrix acting on that vector.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{Matrix4, SMatrix};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type Op4 = Matrix4<C64>;
pub type NaSuper = SMatrix<C64, 16, 16>;

pub const DIM: usize = 16;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn flip(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }
}

/// Multi-index `1 = (eta, sigma)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpinOrbital {
    pub eta: Sign,
    pub sigma: Spin,
}

impl SpinOrbital {
    pub const ALL: [SpinOrbital; 4] = [
        SpinOrbital { eta: Sign::Plus, sigma: Spin::Up },
        SpinOrbital { eta: Sign::Plus, sigma: Spin::Down },
        SpinOrbital { eta: Sign::Minus, sigma: Spin::Up },
        SpinOrbital { eta: Sign::Minus, sigma: Spin::Down },
    ];

    pub fn new(eta: Sign, sigma: Spin) -> Self {
        SpinOrbital { eta, sigma }
    }

    /// `1bar = (-eta, sigma)`.
    pub fn bar(self) -> Self {
        SpinOrbital { eta: self.eta.flip(), sigma: self.sigma }
    }

    /// Position in [`SpinOrbital::ALL`].
    pub fn index(self) -> usize {
        let e = match self.eta {
            Sign::Plus => 0,
            Sign::Minus => 2,
        };
        e + self.sigma.index()
    }
}

/// 16x16 complex superoperator, row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct SuperOp(pub [[C64; DIM]; DIM]);

impl std::fmt::Debug for SuperOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "SuperOp [")?;
        for row in &self.0 {
            write!(f, " ")?;
            for z in row {
                write!(f, " {:+.3e}{:+.3e}i", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Default for SuperOp {
    fn default() -> Self {
        SuperOp::zero()
    }
}

impl SuperOp {
    pub fn zero() -> Self {
        SuperOp([[ZERO; DIM]; DIM])
    }

    pub fn identity() -> Self {
        let mut m = SuperOp::zero();
        for i in 0..DIM {
            m.0[i][i] = ONE;
        }
        m
    }

    pub fn from_na(m: &NaSuper) -> Self {
        let mut out = SuperOp::zero();
        for i in 0..DIM {
            for j in 0..DIM {
                out.0[i][j] = m[(i, j)];
            }
        }
        out
    }

    pub fn to_na(&self) -> NaSuper {
        NaSuper::from_fn(|i, j| self.0[i][j])
    }

    /// Superoperator `X -> A X`.
    pub fn left(a: &Op4) -> Self {
        let mut m = SuperOp::zero();
        for j in 0..4 {
            for i in 0..4 {
                for k in 0..4 {
                    m.0[i + 4 * j][k + 4 * j] = a[(i, k)];
                }
            }
        }
        m
    }

    /// Superoperator `X -> X B`.
    pub fn right(b: &Op4) -> Self {
        let mut m = SuperOp::zero();
        for j in 0..4 {
            for l in 0..4 {
                for i in 0..4 {
                    m.0[i + 4 * j][i + 4 * l] = b[(l, j)];
                }
            }
        }
        m
    }

    pub fn scale(&self, z: C64) -> Self {
        let mut out = *self;
        out.scale_mut(z);
        out
    }

    pub fn scale_mut(&mut self, z: C64) {
        for row in self.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= z;
            }
        }
    }

    pub fn scale_re(&self, x: f64) -> Self {
        self.scale(C64::new(x, 0.0))
    }

    /// `self += z * other`.
    pub fn axpy(&mut self, z: C64, other: &SuperOp) {
        if z == ZERO {
            return;
        }
        for (ra, rb) in self.0.iter_mut().zip(other.0.iter()) {
            for (a, b) in ra.iter_mut().zip(rb.iter()) {
                *a += z * *b;
            }
        }
    }

    /// `self += z * (a * b)` without a temporary.
    pub fn add_mul(&mut self, z: C64, a: &SuperOp, b: &SuperOp) {
        for i in 0..DIM {
            let row = &mut self.0[i];
            for k in 0..DIM {
                let aik = a.0[i][k];
                if aik.re == 0.0 && aik.im == 0.0 {
                    continue;
                }
                let f = z * aik;
                let brow = &b.0[k];
                for j in 0..DIM {
                    row[j] += f * brow[j];
                }
            }
        }
    }

    /// Matrix product; zero entries of `self` are skipped, which makes
    /// block-diagonal and superfermion factors cheap.
    pub fn matmul(&self, b: &SuperOp) -> SuperOp {
        let mut c = SuperOp::zero();
        c.add_mul(ONE, self, b);
        c
    }

    pub fn apply(&self, v: &[C64; DIM]) -> [C64; DIM] {
        let mut out = [ZERO; DIM];
        for i in 0..DIM {
            let mut acc = ZERO;
            for k in 0..DIM {
                acc += self.0[i][k] * v[k];
            }
            out[i] = acc;
        }
        out
    }

    /// Row vector `c * self`.
    pub fn apply_left(&self, c: &[C64; DIM]) -> [C64; DIM] {
        let mut out = [ZERO; DIM];
        for k in 0..DIM {
            if c[k] == ZERO {
                continue;
            }
            for j in 0..DIM {
                out[j] += c[k] * self.0[k][j];
            }
        }
        out
    }

    pub fn commutator(&self, other: &SuperOp) -> SuperOp {
        self.matmul(other) - other.matmul(self)
    }

    pub fn anticommutator(&self, other: &SuperOp) -> SuperOp {
        self.matmul(other) + other.matmul(self)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0_f64, |m, z| m.max(z.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Trace covector applied from the left: the row `Tr(S(.))`.
    pub fn trace_row(&self) -> [C64; DIM] {
        let mut acc = [ZERO; DIM];
        for i in 0..4 {
            let r = i + 4 * i;
            for j in 0..DIM {
                acc[j] += self.0[r][j];
            }
        }
        acc
    }

    /// Matrix exponential by Pade scaling and squaring.
    pub fn exp(&self) -> SuperOp {
        SuperOp::from_na(&self.to_na().exp())
    }

    pub fn transpose(&self) -> SuperOp {
        let mut out = SuperOp::zero();
        for i in 0..DIM {
            for j in 0..DIM {
                out.0[j][i] = self.0[i][j];
            }
        }
        out
    }
}

impl Add for SuperOp {
    type Output = SuperOp;
    fn add(mut self, rhs: SuperOp) -> SuperOp {
        self += rhs;
        self
    }
}

impl Sub for SuperOp {
    type Output = SuperOp;
    fn sub(mut self, rhs: SuperOp) -> SuperOp {
        self -= rhs;
        self
    }
}

impl AddAssign for SuperOp {
    fn add_assign(&mut self, rhs: SuperOp) {
        self.axpy(ONE, &rhs);
    }
}

impl SubAssign for SuperOp {
    fn sub_assign(&mut self, rhs: SuperOp) {
        self.axpy(-ONE, &rhs);
    }
}

impl Neg for SuperOp {
    type Output = SuperOp;
    fn neg(self) -> SuperOp {
        self.scale_re(-1.0)
    }
}

impl Mul for SuperOp {
    type Output = SuperOp;
    fn mul(self, rhs: SuperOp) -> SuperOp {
        self.matmul(&rhs)
    }
}

impl<'a> Mul<&'a SuperOp> for &'a SuperOp {
    type Output = SuperOp;
    fn mul(self, rhs: &SuperOp) -> SuperOp {
        self.matmul(rhs)
    }
}

/// Sparse SuperOp for fast products with mostly-zero factors.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOp {
    /// Nonzero entries in row-major order.
    pub entries: Vec<(usize, usize, C64)>,
    rows: [u32; DIM + 1],
}

impl SparseOp {
    pub fn from_dense(m: &SuperOp) -> Self {
        let mut entries = Vec::new();
        let mut rows = [0u32; DIM + 1];
        for i in 0..DIM {
            rows[i] = entries.len() as u32;
            for j in 0..DIM {
                if m.0[i][j] != ZERO {
                    entries.push((i, j, m.0[i][j]));
                }
            }
        }
        rows[DIM] = entries.len() as u32;
        SparseOp { entries, rows }
    }

    /// Entries of row `k`.
    #[inline]
    pub fn row(&self, k: usize) -> &[(usize, usize, C64)] {
        &self.entries[self.rows[k] as usize..self.rows[k + 1] as usize]
    }

    /// `acc += c * self * b` with both factors sparse.
    pub fn add_mul_sparse(&self, acc: &mut SuperOp, c: C64, b: &SparseOp) {
        for &(i, k, z) in &self.entries {
            let f = c * z;
            for &(_, j, w) in b.row(k) {
                acc.0[i][j] += f * w;
            }
        }
    }

    pub fn to_dense(&self) -> SuperOp {
        let mut m = SuperOp::zero();
        for &(i, j, z) in &self.entries {
            m.0[i][j] += z;
        }
        m
    }

    /// `self * x`.
    pub fn mul_left(&self, x: &SuperOp) -> SuperOp {
        let mut out = SuperOp::zero();
        for &(i, k, z) in &self.entries {
            let (row, src) = (&mut out.0[i], &x.0[k]);
            for j in 0..DIM {
                row[j] += z * src[j];
            }
        }
        out
    }

    /// `x * self`.
    pub fn mul_right(&self, x: &SuperOp) -> SuperOp {
        let mut out = SuperOp::zero();
        for &(k, j, z) in &self.entries {
            for i in 0..DIM {
                out.0[i][j] += x.0[i][k] * z;
            }
        }
        out
    }

    /// `acc += c * self * x`.
    pub fn add_mul_left(&self, acc: &mut SuperOp, c: C64, x: &SuperOp) {
        for &(i, k, z) in &self.entries {
            let f = c * z;
            for j in 0..DIM {
                acc.0[i][j] += f * x.0[k][j];
            }
        }
    }

    /// `acc += c * x * self`.
    pub fn add_mul_right(&self, acc: &mut SuperOp, c: C64, x: &SuperOp) {
        for &(k, j, z) in &self.entries {
            let f = c * z;
            for i in 0..DIM {
                acc.0[i][j] += x.0[i][k] * f;
            }
        }
    }
}

/// Column-stacking vectorization.
pub fn vectorize(a: &Op4) -> [C64; DIM] {
    let mut v = [ZERO; DIM];
    for j in 0..4 {
        for i in 0..4 {
            v[i + 4 * j] = a[(i, j)];
        }
    }
    v
}

pub fn devectorize(v: &[C64; DIM]) -> Op4 {
    Op4::from_fn(|i, j| v[i + 4 * j])
}

/// Row vector of the trace functional, `Tr(X) = <trace_covector, vec(X)>`.
pub fn trace_covector() -> [C64; DIM] {
    let mut c = [ZERO; DIM];
    for i in 0..4 {
        c[i + 4 * i] = ONE;
    }
    c
}

/// Basis operator `|i><j|`.
pub fn basis_op(i: usize, j: usize) -> Op4 {
    let mut m = Op4::zeros();
    m[(i, j)] = ONE;
    m
}

#[derive(Clone, Debug)]
pub struct DotOperators {
    /// `d[SpinOrbital::index()]`: creation for eta = +, annihilation for eta = -.
    pub d: [Op4; 4],
    pub parity: Op4,
    pub n: [Op4; 2],
}

/// Fermion operators, occupation numbers and parity in the Fock basis.
pub fn dot_operators() -> DotOperators {
    let mut cu = Op4::zeros();
    cu[(1, 0)] = ONE;
    cu[(3, 2)] = ONE;
    let mut cd = Op4::zeros();
    cd[(2, 0)] = ONE;
    cd[(3, 1)] = -ONE;
    let au = cu.adjoint();
    let ad = cd.adjoint();
    let nu = cu * au;
    let nd = cd * ad;
    let id = Op4::identity();
    let two = C64::new(2.0, 0.0);
    let parity = (id - nu * two) * (id - nd * two);
    DotOperators { d: [cu, cd, au, ad], parity, n: [nu, nd] }
}

impl DotOperators {
    pub fn op(&self, idx: SpinOrbital) -> &Op4 {
        &self.d[idx.index()]
    }
}

/// Superfermion `G^p_{eta sigma}`.
pub fn superfermion(p: Sign, idx: SpinOrbital) -> SuperOp {
    let ops = dot_operators();
    let d = ops.op(idx);
    let pd = ops.parity;
    let a = SuperOp::left(d);
    let b = SuperOp::left(&pd)
        .matmul(&SuperOp::right(&(pd * d)));
    let mut g = a;
    g.axpy(C64::new(p.value(), 0.0), &b);
    g.scale_re(std::f64::consts::FRAC_1_SQRT_2)
}

/// All eight superfermions, `[p][idx]` with p = 0 for `+`.
#[derive(Clone, Debug)]
pub struct Superfermions {
    pub plus: [SuperOp; 4],
    pub minus: [SuperOp; 4],
    pub plus_sp: [SparseOp; 4],
    pub minus_sp: [SparseOp; 4],
}

impl Superfermions {
    pub fn new() -> Self {
        let plus = SpinOrbital::ALL.map(|o| superfermion(Sign::Plus, o));
        let minus = SpinOrbital::ALL.map(|o| superfermion(Sign::Minus, o));
        let plus_sp = plus.clone().map(|m| SparseOp::from_dense(&m));
        let minus_sp = minus.clone().map(|m| SparseOp::from_dense(&m));
        Superfermions { plus, minus, plus_sp, minus_sp }
    }

    pub fn get(&self, p: Sign, idx: SpinOrbital) -> &SuperOp {
        match p {
            Sign::Plus => &self.plus[idx.index()],
            Sign::Minus => &self.minus[idx.index()],
        }
    }

    pub fn gp(&self, idx: SpinOrbital) -> &SuperOp {
        &self.plus[idx.index()]
    }

    pub fn gm(&self, idx: SpinOrbital) -> &SuperOp {
        &self.minus[idx.index()]
    }

    pub fn sp(&self, idx: SpinOrbital) -> &SparseOp {
        &self.plus_sp[idx.index()]
    }

    pub fn sm(&self, idx: SpinOrbital) -> &SparseOp {
        &self.minus_sp[idx.index()]
    }
}

impl Default for Superfermions {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reservoir {
    pub gamma_up: f64,
    pub gamma_down: f64,
    pub mu: f64,
    pub temperature: f64,
}

impl Reservoir {
    pub fn gamma(&self, s: Spin) -> f64 {
        match s {
            Spin::Up => self.gamma_up,
            Spin::Down => self.gamma_down,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub epsilon: f64,
    pub u: f64,
    pub reservoirs: Vec<Reservoir>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ModelParams {
    /// Two reservoirs with uniform coupling `gamma` and symmetric bias `mu_L = -mu_R = v/2`.
    pub fn symmetric(epsilon: f64, u: f64, gamma: f64, v: f64, temperature: f64) -> Self {
        let res = |mu| Reservoir { gamma_up: gamma, gamma_down: gamma, mu, temperature };
        ModelParams { epsilon, u, reservoirs: vec![res(0.5 * v), res(-0.5 * v)] }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.reservoirs.is_empty() {
            return Err(ModelError::Invalid {
                field: "reservoirs",
                reason: "at least one reservoir is required".into(),
            });
        }
        for r in &self.reservoirs {
            for g in [r.gamma_up, r.gamma_down] {
                if !(g >= 0.0 && g.is_finite()) {
                    return Err(ModelError::Invalid { field: "gamma", reason: format!("{g} < 0") });
                }
            }
            if !(r.temperature >= 0.0) {
                return Err(ModelError::Invalid {
                    field: "temperature",
                    reason: format!("{} < 0", r.temperature),
                });
            }
            if !r.mu.is_finite() {
                return Err(ModelError::Invalid { field: "mu", reason: "not finite".into() });
            }
        }
        if !self.epsilon.is_finite() {
            return Err(ModelError::Invalid { field: "epsilon", reason: "not finite".into() });
        }
        if !self.u.is_finite() {
            return Err(ModelError::Invalid { field: "U", reason: "not finite".into() });
        }
        Ok(())
    }

    /// `sum_r Gamma_{r sigma}`.
    pub fn gamma_total(&self, s: Spin) -> f64 {
        self.reservoirs.iter().map(|r| r.gamma(s)).sum()
    }

    /// Largest energy scale, `max(Gamma_tot, |eps|, U, |mu_r|, V)`.
    pub fn max_scale(&self) -> f64 {
        let mut m = self.gamma_total(Spin::Up).max(self.gamma_total(Spin::Down));
        m = m.max(self.epsilon.abs()).max(self.u.abs());
        for r in &self.reservoirs {
            m = m.max(r.mu.abs());
        }
        let mus: Vec<f64> = self.reservoirs.iter().map(|r| r.mu).collect();
        if let (Some(a), Some(b)) = (
            mus.iter().cloned().reduce(f64::max),
            mus.iter().cloned().reduce(f64::min),
        ) {
            m = m.max(a - b);
        }
        m
    }

    /// Uniform coupling `Gamma` if all `Gamma_{r sigma}` coincide.
    pub fn uniform_gamma(&self) -> Option<f64> {
        let g = self.reservoirs.first()?.gamma_up;
        let ok = self
            .reservoirs
            .iter()
            .all(|r| (r.gamma_up - g).abs() <= 1e-14 * g.abs().max(1.0) && (r.gamma_down - g).abs() <= 1e-14 * g.abs().max(1.0));
        ok.then_some(g)
    }

    pub fn hamiltonian(&self) -> Op4 {
        let ops = dot_operators();
        let e = C64::new(self.epsilon, 0.0);
        let u = C64::new(self.u, 0.0);
        (ops.n[0] + ops.n[1]) * e + ops.n[0] * ops.n[1] * u
    }
}

/// `L X = [H, X]` from the commutator directly.
pub fn liouvillian(params: &ModelParams) -> SuperOp {
    let h = params.hamiltonian();
    SuperOp::left(&h) - SuperOp::right(&h)
}

/// The Liouvillian assembled from superfermion strings.
pub fn liouvillian_superfermion(params: &ModelParams, g: &Superfermions) -> SuperOp {
    let mut l = SuperOp::zero();
    let a = params.epsilon + 0.5 * params.u;
    let hu = C64::new(0.5 * params.u, 0.0);
    for eta in [Sign::Plus, Sign::Minus] {
        for s in [Spin::Up, Spin::Down] {
            let e = SpinOrbital::new(eta, s);
            let eb = SpinOrbital::new(eta.flip(), s);
            let es = SpinOrbital::new(eta, s.flip());
            let ebs = SpinOrbital::new(eta.flip(), s.flip());
            let quad = g.gp(eb).matmul(g.gm(e));
            l.axpy(C64::new(-eta.value() * a, 0.0), &quad);
            let t1 = quad.matmul(g.gm(ebs)).matmul(g.gm(es));
            let t2 = g.gp(ebs).matmul(g.gp(es)).matmul(g.gp(eb)).matmul(g.gm(e));
            l.axpy(hu, &t1);
            l.axpy(hu, &t2);
        }
    }
    l
}

#[derive(Clone, Debug)]
pub struct RenormalizedGenerators {
    pub sigma_inf: SuperOp,
    pub l_inf: SuperOp,
    /// One per reservoir.
    pub sigma_i_inf: Vec<SuperOp>,
}

/// `Sigma_inf`, `L_inf = L + Sigma_inf` and the time-local current kernels.
pub fn renormalized_generators(params: &ModelParams, g: &Superfermions) -> RenormalizedGenerators {
    let mut x = SuperOp::zero();
    let mut sigma_i_inf = Vec::with_capacity(params.reservoirs.len());
    for r in &params.reservoirs {
        let mut si = SuperOp::zero();
        for o in SpinOrbital::ALL {
            let gam = r.gamma(o.sigma);
            x.add_mul(C64::new(gam, 0.0), g.gp(o), g.gm(o.bar()));
            si.add_mul(C64::new(0.0, -0.25 * o.eta.value() * gam), g.gm(o), g.gm(o.bar()));
        }
        sigma_i_inf.push(si);
    }
    // -i Sigma_inf = -x / 2
    let sigma_inf = x.scale(C64::new(0.0, -0.5));
    let l_inf = liouvillian(params) + sigma_inf;
    RenormalizedGenerators { sigma_inf, l_inf, sigma_i_inf }
}

/// `Pi_inf(t) = exp(-i L_inf t)`.
pub fn propagator_infinity(l_inf: &SuperOp, t: f64) -> SuperOp {
    l_inf.scale(C64::new(0.0, -t)).exp()
}

pub fn apply_superop(s: &SuperOp, rho: &Op4) -> Op4 {
    devectorize(&s.apply(&vectorize(rho)))
}

pub fn trace_functional(x: &Op4) -> C64 {
    x.trace()
}

/// `Tr(S X)` for every basis operator X, as a covector.
pub fn trace_annihilation_error(s: &SuperOp) -> f64 {
    let c = trace_covector();
    s.apply_left(&c).iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

/// Largest violations of the superfermion relations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlgebraResiduals {
    /// Over all 64 anticommutators.
    pub anticommutator: f64,
    /// `G^p_1 G^p_1 = 0` for all 8 superfermions.
    pub pauli: f64,
    /// `Tr G+_1 X = 0` for all basis operators X.
    pub trace: f64,
}

pub fn algebra_residuals(g: &Superfermions) -> AlgebraResiduals {
    let id = SuperOp::identity();
    let mut r = AlgebraResiduals { anticommutator: 0.0, pauli: 0.0, trace: 0.0 };
    for p1 in [Sign::Plus, Sign::Minus] {
        for a in SpinOrbital::ALL {
            let s = g.get(p1, a);
            r.pauli = r.pauli.max(s.matmul(s).max_abs());
            for p2 in [Sign::Plus, Sign::Minus] {
                for b in SpinOrbital::ALL {
                    let expect = if p1 != p2 && b == a.bar() { id } else { SuperOp::zero() };
                    r.anticommutator = r.anticommutator.max((s.anticommutator(g.get(p2, b)) - expect).max_abs());
                }
            }
        }
    }
    for a in SpinOrbital::ALL {
        r.trace = r.trace.max(trace_annihilation_error(g.gp(a)));
    }
    r
}

/// Fock-basis projector `|k><k|`.
pub fn fock_state(k: usize) -> Op4 {
    basis_op(k, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_abs4(a: &Op4) -> f64 {
        a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }

    #[test]
    fn canonical_anticommutation() {
        let ops = dot_operators();
        for a in SpinOrbital::ALL {
            for b in SpinOrbital::ALL {
                let ac = ops.op(a) * ops.op(b) + ops.op(b) * ops.op(a);
                let expect = if a.sigma == b.sigma && a.eta != b.eta {
                    Op4::identity()
                } else {
                    Op4::zeros()
                };
                assert!(max_abs4(&(ac - expect)) < 1e-15, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn parity_eigenvalues_and_pauli() {
        let ops = dot_operators();
        let p = ops.parity;
        assert_eq!(p[(1, 1)], -ONE);
        assert_eq!(p[(3, 3)], ONE);
        let up = SpinOrbital::new(Sign::Plus, Spin::Up);
        assert!(max_abs4(&(ops.op(up) * ops.op(up))) == 0.0);
    }

    #[test]
    fn superfermion_anticommutation_all_pairs() {
        let g = Superfermions::new();
        let id = SuperOp::identity();
        for p1 in [Sign::Plus, Sign::Minus] {
            for p2 in [Sign::Plus, Sign::Minus] {
                for a in SpinOrbital::ALL {
                    for b in SpinOrbital::ALL {
                        let ac = g.get(p1, a).anticommutator(g.get(p2, b));
                        let expect = if p1 != p2 && b == a.bar() { id } else { SuperOp::zero() };
                        assert!((ac - expect).max_abs() <= 1e-14, "{p1:?}{a:?} {p2:?}{b:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn super_pauli_and_left_vacuum() {
        let g = Superfermions::new();
        for p in [Sign::Plus, Sign::Minus] {
            for a in SpinOrbital::ALL {
                let s = g.get(p, a);
                assert!(s.matmul(s).max_abs() <= 1e-14);
            }
        }
        for a in SpinOrbital::ALL {
            // brute force over the 16 basis operators
            for i in 0..4 {
                for j in 0..4 {
                    let x = basis_op(i, j);
                    let y = apply_superop(g.gp(a), &x);
                    assert!(y.trace().norm() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn residual_summary_is_exact() {
        let r = algebra_residuals(&Superfermions::new());
        assert!(r.anticommutator <= 1e-14 && r.pauli <= 1e-14 && r.trace <= 1e-14, "{r:?}");
    }

    #[test]
    fn liouvillian_forms_agree() {
        let g = Superfermions::new();
        for (e, u) in [(0.0, 0.0), (0.3, 0.0), (-2.0, 4.0), (2.75, 8.0), (1.1, -0.7)] {
            let p = ModelParams::symmetric(e, u, 1.0, 0.0, 1.0);
            let direct = liouvillian(&p);
            let sf = liouvillian_superfermion(&p, &g);
            assert!((direct - sf).max_abs() < 1e-13, "eps={e} U={u}");
        }
        let p = ModelParams::symmetric(0.0, 0.0, 1.0, 0.0, 1.0);
        assert_eq!(liouvillian(&p).max_abs(), 0.0);
    }

    #[test]
    fn liouvillian_spectrum_is_energy_differences() {
        let (e, u) = (0.7, 3.1);
        let p = ModelParams::symmetric(e, u, 1.0, 0.0, 1.0);
        let l = liouvillian(&p);
        let eig = nalgebra::Schur::new(l.to_na()).eigenvalues().unwrap();
        let h = [0.0, e, e, 2.0 * e + u];
        let mut expect: Vec<f64> = Vec::new();
        for hi in h {
            for hj in h {
                expect.push(hi - hj);
            }
        }
        let mut got: Vec<f64> = eig.iter().map(|z| {
            assert!(z.im.abs() < 1e-12);
            z.re
        }).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_and_trace_plumbing() {
        let p = ModelParams::symmetric(0.4, 2.0, 1.0, 0.0, 1.0);
        let mut rho = Op4::zeros();
        rho[(0, 0)] = C64::new(0.25, 0.0);
        rho[(1, 1)] = C64::new(0.5, 0.0);
        rho[(3, 3)] = C64::new(0.25, 0.0);
        assert_eq!(apply_superop(&SuperOp::identity(), &rho), rho);
        assert!((trace_functional(&rho) - ONE).norm() < 1e-15);
        assert!(max_abs4(&apply_superop(&liouvillian(&p), &rho)) < 1e-15);
    }

    #[test]
    fn infinite_temperature_current() {
        let g = Superfermions::new();
        let p = ModelParams::symmetric(0.3, 2.0, 1.0, 1.0, 1.0);
        let gen = renormalized_generators(&p, &g);
        // I_{L,inf}(|0><0|) = Gamma per spin -> 2 Gamma ... per spin 1/2 each
        let i0 = -C64::i() * apply_superop(&gen.sigma_i_inf[0], &fock_state(0)).trace();
        assert!((i0.re - 1.0).abs() < 1e-14 && i0.im.abs() < 1e-14);
        let mixed = Op4::identity().scale(0.25);
        let ih = -C64::i() * apply_superop(&gen.sigma_i_inf[0], &mixed).trace();
        assert!(ih.norm() < 1e-14);
        let iup = -C64::i() * apply_superop(&gen.sigma_i_inf[1], &fock_state(1)).trace();
        assert!((iup.re - 0.0).abs() < 1e-14);
        assert!(trace_annihilation_error(&gen.sigma_inf) < 1e-14);
    }

    #[test]
    fn infinite_temperature_relaxation() {
        let g = Superfermions::new();
        let gam = 0.8;
        let p = ModelParams::symmetric(0.3, 2.0, gam, 1.0, 1.0);
        let gen = renormalized_generators(&p, &g);
        let ops = dot_operators();
        for t in [0.0, 0.1, 0.7, 2.5] {
            let pi = propagator_infinity(&gen.l_inf, t);
            let rho = apply_superop(&pi, &fock_state(0));
            let n_up = (ops.n[0] * rho).trace().re;
            let expect = 0.5 - 0.5 * (-2.0 * gam * t).exp();
            assert!((n_up - expect).abs() < 1e-12, "t={t}: {n_up} vs {expect}");
        }
        assert!((propagator_infinity(&gen.l_inf, 0.0) - SuperOp::identity()).max_abs() < 1e-15);
    }

    #[test]
    fn l_inf_has_single_zero_mode() {
        let g = Superfermions::new();
        let p = ModelParams::symmetric(0.3, 2.0, 1.0, 1.0, 1.0);
        let gen = renormalized_generators(&p, &g);
        let sv = gen.l_inf.to_na().singular_values();
        let zeros = sv.iter().filter(|s| **s < 1e-10).count();
        assert_eq!(zeros, 1);
    }

    #[test]
    fn sparse_products_agree_with_dense() {
        let g = Superfermions::new();
        let p = ModelParams::symmetric(0.3, 2.0, 1.0, 1.0, 1.0);
        let x = propagator_infinity(&renormalized_generators(&p, &g).l_inf, 0.7);
        let a = SpinOrbital::ALL[2];
        assert!((g.sp(a).mul_left(&x) - g.gp(a).matmul(&x)).max_abs() < 1e-15);
        assert!((g.sp(a).mul_right(&x) - x.matmul(g.gp(a))).max_abs() < 1e-15);
        assert!(g.sp(a).entries.len() <= 16);
        let xs = SparseOp::from_dense(&x);
        let mut acc = SuperOp::zero();
        g.sp(a).add_mul_sparse(&mut acc, C64::new(0.0, 2.0), &xs);
        assert!((acc - g.gp(a).matmul(&x).scale(C64::new(0.0, 2.0))).max_abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn semigroup_and_trace_preservation(
            e in -4.0..4.0f64, u in 0.0..8.0f64, g in 0.1..2.0f64, v in -2.0..2.0f64,
            t1 in 0.0..3.0f64, t2 in 0.0..3.0f64,
        ) {
            let sf = Superfermions::new();
            let p = ModelParams::symmetric(e, u, g, v, 1.0);
            let gen = renormalized_generators(&p, &sf);
            let a = propagator_infinity(&gen.l_inf, t1);
            let b = propagator_infinity(&gen.l_inf, t2);
            let ab = propagator_infinity(&gen.l_inf, t1 + t2);
            prop_assert!((a.matmul(&b) - ab).max_abs() < 1e-12);
            let row = a.apply_left(&trace_covector());
            let c = trace_covector();
            for k in 0..DIM {
                prop_assert!((row[k] - c[k]).norm() < 1e-12);
            }
        }

        #[test]
        fn liouvillian_is_traceless(e in -4.0..4.0f64, u in -8.0..8.0f64) {
            let p = ModelParams::symmetric(e, u, 1.0, 0.0, 1.0);
            prop_assert!(trace_annihilation_error(&liouvillian(&p)) < 1e-14);
        }
    }
}
