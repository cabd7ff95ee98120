//! The linearized mapping operator `L(f, g) = Im(g - 2i<z̄, f>_l)` restricted
//! to the quadric, its per-degree linear systems, and the uniqueness checks
//! built on them.
//!
//! Systems are assembled one weighted degree `sigma` at a time: the unknowns
//! are the real and imaginary parts of the coefficients of
//! `(f^(sigma-1), g^(sigma))`, the equations are the coefficients of the
//! trace-domain monomials `z^a z̄^b u^c` of weight `sigma`. The matrix only
//! depends on `(n, l, sigma)` and the normalization mode, so it is built once
//! and cached.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{format_rational, GaussianRational, Rational};
use crate::hermitian::in_class_s;
use crate::linalg::{split_blocks, QMatrix, SolveOutcome};
use crate::quadric::SignatureForm;
use crate::series::{
    hermitian_form_series, ComplexSeries, Domain, HoloKey, MultiIndex, RealKey, TruncatedHoloSeries,
    TruncatedRealSeries,
};

/// A pair `(f, g)` with vanishing constant terms and 1-jet and with
/// `Re g_ww(0) = 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NormalizedPair {
    f: Vec<TruncatedHoloSeries>,
    g: TruncatedHoloSeries,
}

impl NormalizedPair {
    pub fn new(f: Vec<TruncatedHoloSeries>, g: TruncatedHoloSeries) -> Result<Self> {
        check_shapes(&f, &g)?;
        check_normalization(&f, &g)?;
        Ok(NormalizedPair { f, g })
    }

    pub fn zero(n: usize, cap: u32) -> Self {
        NormalizedPair { f: vec![TruncatedHoloSeries::zero(n, cap); n], g: TruncatedHoloSeries::zero(n, cap) }
    }

    pub fn f(&self) -> &[TruncatedHoloSeries] {
        &self.f
    }

    pub fn g(&self) -> &TruncatedHoloSeries {
        &self.g
    }

    pub fn n(&self) -> usize {
        self.g.n()
    }

    pub fn cap(&self) -> u32 {
        self.g.cap()
    }

    pub fn is_zero(&self) -> bool {
        self.g.is_zero() && self.f.iter().all(|x| x.is_zero())
    }

    pub fn add(&self, other: &NormalizedPair) -> Result<NormalizedPair> {
        let f = self.f.iter().zip(&other.f).map(|(a, b)| a.add(b)).collect::<Result<Vec<_>>>()?;
        Ok(NormalizedPair { f, g: self.g.add(&other.g)? })
    }
}

fn check_shapes(f: &[TruncatedHoloSeries], g: &TruncatedHoloSeries) -> Result<()> {
    if f.len() != g.n() {
        return Err(Error::Mismatch(format!("{} f-components for n = {}", f.len(), g.n())));
    }
    if f.iter().any(|x| x.n() != g.n() || x.cap() != g.cap()) {
        return Err(Error::Mismatch("f and g must share (n, D)".into()));
    }
    Ok(())
}

/// Checks `f(0) = g(0) = 0`, `d(f, g)(0) = 0` and `Re g_ww(0) = 0`.
pub fn check_normalization(f: &[TruncatedHoloSeries], g: &TruncatedHoloSeries) -> Result<()> {
    for (j, s) in f.iter().chain(std::iter::once(g)).enumerate() {
        let name = if j < f.len() { format!("f_{}", j + 1) } else { "g".to_string() };
        if !s.constant_term().is_zero() {
            return Err(Error::Normalization(format!("{name} has a constant term")));
        }
        if s.linear_coeffs().iter().any(|c| !c.is_zero()) {
            return Err(Error::Normalization(format!("{name} has a nonzero differential at 0")));
        }
    }
    let n = g.n();
    if !g.coeff(&HoloKey::new(MultiIndex::zeros(n), 2)).re.is_zero() {
        return Err(Error::Normalization("Re g_ww(0) != 0".into()));
    }
    Ok(())
}

/// `L(f, g)` for a normalized pair.
pub fn apply_l(p: &NormalizedPair, form: SignatureForm) -> Result<TruncatedRealSeries> {
    linearized_operator(&p.f, &p.g, form)
}

/// `L(f, g)` without the normalization check; used for kernel fragments and
/// the stability-group directions.
pub fn linearized_operator(
    f: &[TruncatedHoloSeries],
    g: &TruncatedHoloSeries,
    form: SignatureForm,
) -> Result<TruncatedRealSeries> {
    check_shapes(f, g)?;
    let (n, cap) = (g.n(), g.cap());
    if form.n != n {
        return Err(Error::Mismatch(format!("form for n = {}, pair for n = {n}", form.n)));
    }
    // g - 2i sum_j eps_j z̄_j f_j
    let mut c = g.to_complex();
    for (j, fj) in f.iter().enumerate() {
        let factor = GaussianRational::from_ints(0, -2 * form.sign(j));
        let zbar = MultiIndex::unit(n, j);
        for (k, v) in fj.terms() {
            c.add_term(RealKey::new(k.alpha.clone(), zbar.clone(), k.gamma, 0), v * &factor);
        }
    }
    let mut w = hermitian_form_series(n, cap, form.ell, Domain::ZU).scale(&GaussianRational::i());
    w.add_term(RealKey::new(MultiIndex::zeros(n), MultiIndex::zeros(n), 1, 0), GaussianRational::one());
    Ok(c.substitute_w(&w)?.imag_part())
}

// ---------------------------------------------------------------------------
// per-degree systems

/// Which normalization rows are added to the homogeneous operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// vanishing constant terms and 1-jet, and `Re g_ww(0) = 0`
    Full,
    /// as `Full` without `Re g_ww(0) = 0`
    FreeReGww,
    /// no rows: the full stability algebra stays in the kernel
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Part {
    Re,
    Im,
}

/// A real unknown: one part of one coefficient of `f_j` or `g`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Unknown {
    F { j: usize, key: HoloKey, part: Part },
    G { key: HoloKey, part: Part },
}

/// A real equation: one part of one trace-domain coefficient, or a
/// normalization row forcing one unknown to vanish.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Equation {
    Trace { key: RealKey, part: Part },
    Normalization { unknown: usize },
}

impl std::fmt::Display for Unknown {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Unknown::F { j, key, part } => write!(f, "{part:?} f_{}[z^{} w^{}]", j + 1, key.alpha, key.gamma),
            Unknown::G { key, part } => write!(f, "{part:?} g[z^{} w^{}]", key.alpha, key.gamma),
        }
    }
}

impl std::fmt::Display for Equation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Equation::Trace { key, part } => write!(f, "{part:?} [z^{} zb^{} u^{}]", key.alpha, key.beta, key.gamma),
            Equation::Normalization { unknown } => write!(f, "normalization of unknown {unknown}"),
        }
    }
}

/// Sparse operator matrix for one `(n, l, sigma, mode)`.
#[derive(Debug)]
pub struct Operator {
    pub n: usize,
    pub ell: usize,
    pub sigma: u32,
    pub mode: Normalization,
    pub unknowns: Vec<Unknown>,
    pub equations: Vec<Equation>,
    /// nonzero entries `(row, col, value)`, sorted
    pub entries: Vec<(usize, usize, Rational)>,
    blocks: Vec<(Vec<usize>, Vec<usize>)>,
    row_of: HashMap<(RealKey, Part), usize>,
}

impl Operator {
    fn build(form: SignatureForm, sigma: u32, mode: Normalization) -> Operator {
        let n = form.n;
        let cap = sigma.max(1);
        let mut unknowns = Vec::new();
        if sigma >= 1 {
            for j in 0..n {
                for key in HoloKey::of_weight(n, sigma - 1) {
                    for part in [Part::Re, Part::Im] {
                        unknowns.push(Unknown::F { j, key: key.clone(), part });
                    }
                }
            }
        }
        for key in HoloKey::of_weight(n, sigma) {
            for part in [Part::Re, Part::Im] {
                unknowns.push(Unknown::G { key: key.clone(), part });
            }
        }

        // one row per independent real coefficient of weight sigma
        let mut equations = Vec::new();
        let mut row_of = HashMap::new();
        for key in trace_keys(n, sigma) {
            let conj = key.conj(Domain::ZU);
            if conj < key {
                continue;
            }
            row_of.insert((key.clone(), Part::Re), equations.len());
            equations.push(Equation::Trace { key: key.clone(), part: Part::Re });
            if conj != key {
                row_of.insert((key.clone(), Part::Im), equations.len());
                equations.push(Equation::Trace { key, part: Part::Im });
            }
        }

        // powers of w = u + i<z,z̄>_l
        let mut w = hermitian_form_series(n, cap, form.ell, Domain::ZU).scale(&GaussianRational::i());
        w.add_term(RealKey::new(MultiIndex::zeros(n), MultiIndex::zeros(n), 1, 0), GaussianRational::one());
        let mut w_pows = vec![ComplexSeries::constant(n, cap, Domain::ZU, GaussianRational::one())];
        for _ in 0..sigma / 2 {
            let next = w_pows.last().unwrap().mul(&w).expect("same shape");
            w_pows.push(next);
        }

        let mut entries = Vec::new();
        for (col, u) in unknowns.iter().enumerate() {
            let (key, part, zbar, factor) = match u {
                Unknown::F { j, key, part } => {
                    (key, *part, MultiIndex::unit(n, *j), GaussianRational::from_ints(0, -2 * form.sign(*j)))
                }
                Unknown::G { key, part } => (key, *part, MultiIndex::zeros(n), GaussianRational::one()),
            };
            let unit = match part {
                Part::Re => GaussianRational::one(),
                Part::Im => GaussianRational::i(),
            };
            let c = &factor * &unit;
            let mut image = ComplexSeries::zero(n, cap, Domain::ZU);
            for (k, v) in w_pows[key.gamma as usize].terms() {
                let shifted = RealKey::new(k.alpha.add(&key.alpha), k.beta.add(&zbar), k.gamma, 0);
                image.add_term(shifted, v * &c);
            }
            for (k, v) in image.imag_part().terms() {
                for (p, val) in [(Part::Re, &v.re), (Part::Im, &v.im)] {
                    if val.is_zero() {
                        continue;
                    }
                    if let Some(&row) = row_of.get(&(k.clone(), p)) {
                        entries.push((row, col, val.clone()));
                    }
                }
            }
        }

        if mode != Normalization::Off {
            for (col, u) in unknowns.iter().enumerate() {
                let constrained = match u {
                    Unknown::F { key, .. } => key.order() <= 1,
                    Unknown::G { key, part } => {
                        key.order() <= 1
                            || (mode == Normalization::Full
                                && *part == Part::Re
                                && key.alpha.is_zero()
                                && key.gamma == 2)
                    }
                };
                if constrained {
                    entries.push((equations.len(), col, Rational::one()));
                    equations.push(Equation::Normalization { unknown: col });
                }
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let positions: Vec<(usize, usize)> = entries.iter().map(|e| (e.0, e.1)).collect();
        let blocks = split_blocks(equations.len(), unknowns.len(), &positions);
        Operator { n, ell: form.ell, sigma, mode, unknowns, equations, entries, blocks, row_of }
    }

    /// The dense matrix (for verification and export).
    pub fn dense(&self) -> QMatrix {
        let mut m = QMatrix::zeros(self.equations.len(), self.unknowns.len());
        for (r, c, v) in &self.entries {
            m.set(*r, *c, v.clone());
        }
        m
    }

    fn block_matrix(&self, rows: &[usize], cols: &[usize]) -> QMatrix {
        let rpos: HashMap<usize, usize> = rows.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        let cpos: HashMap<usize, usize> = cols.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let mut m = QMatrix::zeros(rows.len(), cols.len());
        for (r, c, v) in &self.entries {
            if let (Some(&i), Some(&j)) = (rpos.get(r), cpos.get(c)) {
                m.set(i, j, v.clone());
            }
        }
        m
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// `M x`
    pub fn apply(&self, x: &[Rational]) -> Vec<Rational> {
        let mut out = vec![Rational::zero(); self.equations.len()];
        for (r, c, v) in &self.entries {
            if !x[*c].is_zero() {
                out[*r] += v * &x[*c];
            }
        }
        out
    }

    /// `y^T M`
    pub fn apply_transpose(&self, y: &[Rational]) -> Vec<Rational> {
        let mut out = vec![Rational::zero(); self.unknowns.len()];
        for (r, c, v) in &self.entries {
            if !y[*r].is_zero() {
                out[*c] += v * &y[*r];
            }
        }
        out
    }

    /// Dimension of the solution space of the homogeneous system.
    pub fn kernel_dimension(&self) -> usize {
        self.blocks
            .iter()
            .map(|(rows, cols)| {
                if cols.is_empty() {
                    0
                } else if rows.is_empty() {
                    cols.len()
                } else {
                    cols.len() - self.block_matrix(rows, cols).rank()
                }
            })
            .sum()
    }

    /// Exact basis of the homogeneous solution space.
    pub fn kernel(&self) -> Vec<Vec<Rational>> {
        let mut out = Vec::new();
        for (rows, cols) in &self.blocks {
            if cols.is_empty() {
                continue;
            }
            let basis = if rows.is_empty() {
                (0..cols.len())
                    .map(|i| (0..cols.len()).map(|j| if i == j { Rational::one() } else { Rational::zero() }).collect())
                    .collect()
            } else {
                self.block_matrix(rows, cols).nullspace()
            };
            for v in basis {
                let mut x = vec![Rational::zero(); self.unknowns.len()];
                for (i, &c) in cols.iter().enumerate() {
                    x[c] = v[i].clone();
                }
                out.push(x);
            }
        }
        out
    }
}

/// Trace-domain monomial keys `z^a z̄^b u^c` of weight `sigma`.
fn trace_keys(n: usize, sigma: u32) -> Vec<RealKey> {
    let mut out = Vec::new();
    for gamma in 0..=sigma / 2 {
        let rest = sigma - 2 * gamma;
        for da in 0..=rest {
            for a in MultiIndex::of_degree(n, da) {
                for b in MultiIndex::of_degree(n, rest - da) {
                    out.push(RealKey::new(a.clone(), b, gamma, 0));
                }
            }
        }
    }
    out.sort();
    out
}

type CacheKey = (usize, usize, u32, Normalization);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<Operator>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<Operator>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// The cached operator matrix for `(n, l, sigma, mode)`.
pub fn operator(form: SignatureForm, sigma: u32, mode: Normalization) -> Arc<Operator> {
    let key = (form.n, form.ell, sigma, mode);
    if let Some(op) = cache().lock().unwrap().get(&key) {
        return op.clone();
    }
    let op = Arc::new(Operator::build(form, sigma, mode));
    cache().lock().unwrap().entry(key).or_insert(op).clone()
}

/// The linear system for one weighted degree.
#[derive(Clone, Debug)]
pub struct JetSystem {
    pub sigma: u32,
    pub form: SignatureForm,
    pub op: Arc<Operator>,
    pub rhs: Vec<Rational>,
}

impl JetSystem {
    pub fn unknowns(&self) -> &[Unknown] {
        &self.op.unknowns
    }

    pub fn equations(&self) -> &[Equation] {
        &self.op.equations
    }

    pub fn matrix(&self) -> QMatrix {
        self.op.dense()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.rhs.iter().all(|v| v.is_zero())
    }

    /// `y^T M = 0` and `y^T rhs != 0`
    pub fn verify_certificate(&self, y: &[Rational]) -> bool {
        if y.len() != self.rhs.len() {
            return false;
        }
        let dot = y.iter().zip(&self.rhs).fold(Rational::zero(), |acc, (a, b)| acc + a * b);
        !dot.is_zero() && self.op.apply_transpose(y).iter().all(|v| v.is_zero())
    }

    /// `M x = rhs`
    pub fn verify_solution(&self, x: &[Rational]) -> bool {
        x.len() == self.op.unknowns.len() && self.op.apply(x) == self.rhs
    }

    /// Builds `(f^(sigma-1), g^(sigma))` from a solution vector.
    pub fn to_pair(&self, x: &[Rational], cap: u32) -> (Vec<TruncatedHoloSeries>, TruncatedHoloSeries) {
        unknowns_to_pair(&self.op, x, cap)
    }
}

fn unknowns_to_pair(op: &Operator, x: &[Rational], cap: u32) -> (Vec<TruncatedHoloSeries>, TruncatedHoloSeries) {
    let n = op.n;
    let mut f = vec![TruncatedHoloSeries::zero(n, cap); n];
    let mut g = TruncatedHoloSeries::zero(n, cap);
    for (u, v) in op.unknowns.iter().zip(x) {
        if v.is_zero() {
            continue;
        }
        let c = |part: &Part| match part {
            Part::Re => GaussianRational::from_real(v.clone()),
            Part::Im => GaussianRational::new(Rational::zero(), v.clone()),
        };
        match u {
            Unknown::F { j, key, part } => f[*j].add_term(key.clone(), c(part)),
            Unknown::G { key, part } => g.add_term(key.clone(), c(part)),
        }
    }
    (f, g)
}

/// Assembles `L(f^(sigma-1), g^(sigma)) = rhs^(sigma)` with all
/// normalization rows. `rhs` is a trace-domain series.
pub fn assemble_system(sigma: u32, form: SignatureForm, rhs: &TruncatedRealSeries) -> Result<JetSystem> {
    assemble_system_with(sigma, form, rhs, Normalization::Full)
}

pub fn assemble_system_with(
    sigma: u32,
    form: SignatureForm,
    rhs: &TruncatedRealSeries,
    mode: Normalization,
) -> Result<JetSystem> {
    if rhs.domain() != Domain::ZU {
        return Err(Error::Mismatch("right-hand side must be restricted to the quadric".into()));
    }
    if rhs.n() != form.n {
        return Err(Error::Mismatch(format!("rhs in n = {}, form for n = {}", rhs.n(), form.n)));
    }
    let op = operator(form, sigma, mode);
    let mut b = vec![Rational::zero(); op.equations.len()];
    for (k, c) in rhs.weighted_component(sigma).terms() {
        for (part, val) in [(Part::Re, &c.re), (Part::Im, &c.im)] {
            if let Some(&row) = op.row_of.get(&(k.clone(), part)) {
                b[row] = val.clone();
            }
        }
    }
    Ok(JetSystem { sigma, form, op, rhs: b })
}

/// Exact solve block by block. Blocks with zero right-hand side get the zero
/// solution; an inconsistent block yields a certificate over all rows.
pub fn solve_or_refute(sys: &JetSystem) -> SolveOutcome {
    let op = &sys.op;
    let mut x = vec![Rational::zero(); op.unknowns.len()];
    for (rows, cols) in &op.blocks {
        if rows.iter().all(|&r| sys.rhs[r].is_zero()) {
            continue;
        }
        let b: Vec<Rational> = rows.iter().map(|&r| sys.rhs[r].clone()).collect();
        match op.block_matrix(rows, cols).solve(&b) {
            SolveOutcome::Solution(xb) => {
                for (i, &c) in cols.iter().enumerate() {
                    x[c] = xb[i].clone();
                }
            }
            SolveOutcome::Inconsistent(yb) => {
                let mut y = vec![Rational::zero(); op.equations.len()];
                for (i, &r) in rows.iter().enumerate() {
                    y[r] = yb[i].clone();
                }
                return SolveOutcome::Inconsistent(y);
            }
        }
    }
    SolveOutcome::Solution(x)
}

/// A kernel element `(f, g)`, homogeneous of weights `(sigma - 1, sigma)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JetPair {
    pub f: Vec<TruncatedHoloSeries>,
    pub g: TruncatedHoloSeries,
}

/// Basis of the solutions of `L(f^(sigma-1), g^(sigma)) = 0` under the given
/// normalization rows. Fragments use the cap `max(sigma, 1)`.
pub fn kernel_basis(sigma: u32, form: SignatureForm, mode: Normalization) -> Vec<JetPair> {
    let op = operator(form, sigma, mode);
    op.kernel()
        .iter()
        .map(|x| {
            let (f, g) = unknowns_to_pair(&op, x, sigma.max(1));
            JetPair { f, g }
        })
        .collect()
}

pub fn kernel_dimension(sigma: u32, form: SignatureForm, mode: Normalization) -> usize {
    operator(form, sigma, mode).kernel_dimension()
}

// ---------------------------------------------------------------------------
// solving L(f, g) = A^0 over all degrees

/// Certificate that no normalized `(f, g)` solves the equation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Certificate {
    pub sigma: u32,
    /// nonzero entries `(equation, multiplier)`
    pub entries: Vec<(String, String)>,
    pub verified: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EquationOutcome {
    /// `L(f, g) = rhs` for this pair
    Solved { f: Vec<TruncatedHoloSeries>, g: TruncatedHoloSeries },
    Refuted(Certificate, Vec<Rational>),
}

/// Solves `L(f, g) = rhs` degree by degree for normalized `(f, g)`, stopping
/// at the first inconsistent degree.
pub fn solve_equation(rhs: &TruncatedRealSeries, form: SignatureForm) -> Result<EquationOutcome> {
    let (n, cap) = (rhs.n(), rhs.cap());
    let mut f = vec![TruncatedHoloSeries::zero(n, cap); n];
    let mut g = TruncatedHoloSeries::zero(n, cap);
    for sigma in 0..=cap {
        let sys = assemble_system(sigma, form, rhs)?;
        if sys.is_homogeneous() {
            continue;
        }
        match solve_or_refute(&sys) {
            SolveOutcome::Solution(x) => {
                if !sys.verify_solution(&x) {
                    return Err(Error::Internal(format!("solution fails verification at degree {sigma}")));
                }
                let (fs, gs) = sys.to_pair(&x, cap);
                for (a, b) in f.iter_mut().zip(&fs) {
                    *a = a.add(b)?;
                }
                g = g.add(&gs)?;
            }
            SolveOutcome::Inconsistent(y) => {
                let verified = sys.verify_certificate(&y);
                let entries = y
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| !v.is_zero())
                    .map(|(i, v)| (sys.equations()[i].to_string(), format_rational(v)))
                    .collect();
                return Ok(EquationOutcome::Refuted(Certificate { sigma, entries, verified }, y));
            }
        }
    }
    Ok(EquationOutcome::Solved { f, g })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemStatus {
    /// some degree admits a verified inconsistency certificate
    Inconsistent,
    /// the right-hand side vanishes and every homogeneous system is injective
    OnlyZeroSolution,
    /// a nonzero normalized solution exists
    Violation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UniquenessReport {
    pub restriction_zero: bool,
    pub system_status: SystemStatus,
    pub certificate: Option<Certificate>,
    /// lowest weighted degree where a nonzero solution appears
    pub violation_degree: Option<u32>,
}

/// Runs the uniqueness check for `A` in the class with slice ranks `<= n-1`.
pub fn verify_uniqueness_instance(a: &TruncatedRealSeries, form: SignatureForm) -> Result<UniquenessReport> {
    let k = form.n.saturating_sub(1);
    if !in_class_s(a, k) {
        return Err(Error::Precondition(format!("A is not in the slice-rank class with k = {k}")));
    }
    uniqueness_report(a, form)
}

/// As [`verify_uniqueness_instance`] without the class precondition; outside
/// the class a genuine solution may exist.
pub fn uniqueness_report(a: &TruncatedRealSeries, form: SignatureForm) -> Result<UniquenessReport> {
    if a.n() != form.n {
        return Err(Error::Mismatch(format!("A in n = {}, form for n = {}", a.n(), form.n)));
    }
    let trace = a.restrict_to_quadric(form.ell)?;
    let restriction_zero = trace.is_zero();
    if restriction_zero {
        let bad = (0..=a.cap()).find(|&s| kernel_dimension(s, form, Normalization::Full) > 0);
        return Ok(UniquenessReport {
            restriction_zero,
            system_status: if bad.is_some() { SystemStatus::Violation } else { SystemStatus::OnlyZeroSolution },
            certificate: None,
            violation_degree: bad,
        });
    }
    match solve_equation(&trace, form)? {
        EquationOutcome::Refuted(cert, _) => {
            if !cert.verified {
                return Err(Error::Internal(format!("certificate at degree {} fails verification", cert.sigma)));
            }
            Ok(UniquenessReport {
                restriction_zero,
                system_status: SystemStatus::Inconsistent,
                certificate: Some(cert),
                violation_degree: None,
            })
        }
        EquationOutcome::Solved { f, g } => {
            let degree = (0..=a.cap()).find(|&s| {
                !g.weighted_component(s).is_zero()
                    || (s >= 1 && f.iter().any(|x| !x.weighted_component(s - 1).is_zero()))
            });
            Ok(UniquenessReport {
                restriction_zero,
                system_status: SystemStatus::Violation,
                certificate: None,
                violation_degree: degree,
            })
        }
    }
}

/// Polarized form of `L(f, g) = A` on the Segre variety
/// `w - eta = 2i<z, xi>_l`: returns
/// `(g(z,w) - conj g(xi,eta))/2i - <xi, f(z,w)>_l - <z, conj f(xi,eta)>_l - A(z, xi, w, eta)`,
/// which vanishes for every point when the identity holds without
/// truncation.
pub fn segre_residual(
    f: &[TruncatedHoloSeries],
    g: &TruncatedHoloSeries,
    a: &ComplexSeries,
    form: SignatureForm,
    z: &[GaussianRational],
    xi: &[GaussianRational],
    eta: &GaussianRational,
) -> Result<GaussianRational> {
    check_shapes(f, g)?;
    let n = g.n();
    let two_i = GaussianRational::from_ints(0, 2);
    let mut zxi = GaussianRational::zero();
    for j in 0..n {
        zxi += &(&z[j] * &xi[j]).scale(&Rational::from_integer(form.sign(j).into()));
    }
    let w = eta + &(&two_i * &zxi);
    // conj g(xi, eta) = conj(g~)(xi, eta) where g~ has conjugated coefficients
    let g_z = g.eval(z, &w)?;
    let g_xi = g.conj_coeffs().eval(xi, eta)?;
    let mut acc = &(&g_z - &g_xi) * &two_i.inv().expect("nonzero");
    for j in 0..n {
        let eps = Rational::from_integer(form.sign(j).into());
        acc -= &(&xi[j] * &f[j].eval(z, &w)?).scale(&eps);
        acc -= &(&z[j] * &f[j].conj_coeffs().eval(xi, eta)?).scale(&eps);
    }
    let a_val = match a.domain() {
        Domain::ZW => a.eval(z, xi, &w, eta)?,
        Domain::ZU => return Err(Error::Mismatch("polarized check needs a (z, w) series".into())),
    };
    Ok(&acc - &a_val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::rat;

    fn half_i() -> GaussianRational {
        GaussianRational::new(Rational::zero(), rat(1, 2))
    }

    #[test]
    fn l_of_i_w_squared() {
        let form = SignatureForm::new(2, 1).unwrap();
        let g = TruncatedHoloSeries::monomial(2, 6, HoloKey::new(MultiIndex::zeros(2), 2), GaussianRational::i());
        let f = vec![TruncatedHoloSeries::zero(2, 6); 2];
        let lhs = linearized_operator(&f, &g, form).unwrap();
        // u^2 - <z,z̄>^2
        let q = TruncatedRealSeries::from_complex(hermitian_form_series(2, 6, 1, Domain::ZU)).unwrap();
        let u = TruncatedRealSeries::from_terms(
            2,
            6,
            Domain::ZU,
            [(RealKey::new(MultiIndex::zeros(2), MultiIndex::zeros(2), 1, 0), GaussianRational::one())],
        )
        .unwrap();
        let expect = u.multiply(&u).unwrap().sub(&q.multiply(&q).unwrap()).unwrap();
        assert_eq!(lhs, expect);
        // not normalized: Re g_ww = 0 holds but this is fine; i w^2 has zero real part
        assert!(NormalizedPair::new(f, g).is_ok());
    }

    #[test]
    fn normalization_rejects_linear_and_real_ww() {
        let n = 2;
        let f = vec![TruncatedHoloSeries::zero(n, 6); n];
        let g = TruncatedHoloSeries::w(n, 6);
        assert!(matches!(NormalizedPair::new(f.clone(), g), Err(Error::Normalization(_))));
        let g = TruncatedHoloSeries::monomial(n, 6, HoloKey::new(MultiIndex::zeros(n), 2), GaussianRational::one());
        assert!(matches!(NormalizedPair::new(f, g), Err(Error::Normalization(_))));
    }

    #[test]
    fn system_matrix_is_cached_and_pure() {
        let form = SignatureForm::new(2, 0).unwrap();
        let a = operator(form, 4, Normalization::Full);
        let b = operator(form, 4, Normalization::Full);
        assert!(Arc::ptr_eq(&a, &b));
        let fresh = Operator::build(form, 4, Normalization::Full);
        assert_eq!(fresh.entries, a.entries);
    }

    #[test]
    fn example_pair_is_recovered_up_to_kernel() {
        for (n, ell) in [(2, 0), (2, 1), (3, 1)] {
            let form = SignatureForm::new(n, ell).unwrap();
            let mut f = vec![TruncatedHoloSeries::zero(n, 8); n];
            f[n - 1] = TruncatedHoloSeries::monomial(
                n,
                8,
                HoloKey::new(MultiIndex::unit(n, n - 1), 1),
                half_i(),
            );
            let g = TruncatedHoloSeries::zero(n, 8);
            let pair = NormalizedPair::new(f.clone(), g.clone()).unwrap();
            let rhs = apply_l(&pair, form).unwrap();
            let sys = assemble_system(4, form, &rhs).unwrap();
            let SolveOutcome::Solution(x) = solve_or_refute(&sys) else { panic!("solvable") };
            assert!(sys.verify_solution(&x));
            let (fs, gs) = sys.to_pair(&x, 8);
            // kernel is trivial under normalization, so the solution is unique
            assert_eq!(fs, f);
            assert_eq!(gs, g);
        }
    }

    #[test]
    fn homogeneous_gives_zero() {
        let form = SignatureForm::new(2, 0).unwrap();
        let rhs = TruncatedRealSeries::zero_in(2, 8, Domain::ZU);
        let sys = assemble_system(5, form, &rhs).unwrap();
        let SolveOutcome::Solution(x) = solve_or_refute(&sys) else { panic!() };
        assert!(x.iter().all(|v| v.is_zero()));
    }

    #[test]
    fn stray_trace_monomial_is_refuted() {
        // |z_1|^4 on the trace cannot be produced at weight 4 for n = 1
        let form = SignatureForm::new(1, 0).unwrap();
        let e = MultiIndex::unit(1, 0);
        let k = RealKey::new(e.add(&e), e.add(&e), 0, 0);
        let rhs = TruncatedRealSeries::from_terms(1, 6, Domain::ZU, [(k, GaussianRational::one())]).unwrap();
        let sys = assemble_system(4, form, &rhs).unwrap();
        match solve_or_refute(&sys) {
            SolveOutcome::Inconsistent(y) => assert!(sys.verify_certificate(&y)),
            SolveOutcome::Solution(x) => {
                // if solvable the solution must verify
                assert!(sys.verify_solution(&x));
            }
        }
    }

    #[test]
    fn segre_residual_vanishes_for_example_pair() {
        let (n, ell) = (2, 1);
        let form = SignatureForm::new(n, ell).unwrap();
        let mut f = vec![TruncatedHoloSeries::zero(n, 8); n];
        f[1] = TruncatedHoloSeries::monomial(n, 8, HoloKey::new(MultiIndex::unit(n, 1), 1), half_i());
        let g = TruncatedHoloSeries::zero(n, 8);
        // A = |z_2|^2 <z, z̄>_l as a (z, w) series
        let e = MultiIndex::unit(n, 1);
        let a = crate::series::hermitian_product(
            &TruncatedHoloSeries::z(n, 8, 1),
            &TruncatedHoloSeries::z(n, 8, 1),
        )
        .unwrap()
        .mul(&hermitian_form_series(n, 8, ell, Domain::ZW))
        .unwrap();
        assert_eq!(a.coeff(&RealKey::new(e.add(&e), e.add(&e), 0, 0)), GaussianRational::one());
        let z = [GaussianRational::from_ints(1, 2), GaussianRational::from_ints(-3, 1)];
        let xi = [GaussianRational::from_ints(2, 0), GaussianRational::from_ints(0, 5)];
        let eta = GaussianRational::from_ints(7, -1);
        assert!(segre_residual(&f, &g, &a, form, &z, &xi, &eta).unwrap().is_zero());
        let wrong = a.scale_real(&rat(2, 1));
        assert!(!segre_residual(&f, &g, &wrong, form, &z, &xi, &eta).unwrap().is_zero());
    }
}
