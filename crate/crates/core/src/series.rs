//! Truncated formal power series in `(z, z̄, w, w̄)` and `(z, w)`.
//!
//! Weighted grading: every `z_j`, `z̄_j` has weight 1 and `w`, `w̄`, `u` have
//! weight 2. A series carries a cap `D` and stores only terms of weighted
//! degree `<= D`; binary operations require equal caps and never re-truncate
//! silently.
//!
//! Two real domains share one key type:
//! * [`Domain::ZW`]: keys `(alpha, beta, gamma, delta)` mean
//!   `z^alpha z̄^beta w^gamma w̄^delta`;
//! * [`Domain::ZU`]: traces on the quadric, `delta = 0` and `gamma` is the
//!   exponent of `u = Re w`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianRational, Rational};
use crate::linalg::CMatrix;

pub const DEFAULT_CAP: u32 = 8;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zeros(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, j: usize) -> Self {
        let mut v = vec![0; n];
        v[j] = 1;
        MultiIndex(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// All multi-indices of length `n` and total degree `d`, in lexicographic
    /// order.
    pub fn of_degree(n: usize, d: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; n];
        fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            let n = cur.len();
            if n == 0 {
                if left == 0 {
                    out.push(MultiIndex(Vec::new()));
                }
                return;
            }
            if i == n - 1 {
                cur[i] = left;
                out.push(MultiIndex(cur.clone()));
                return;
            }
            for e in (0..=left).rev() {
                cur[i] = e;
                rec(i + 1, left - e, cur, out);
            }
            cur[i] = 0;
        }
        rec(0, d, &mut cur, &mut out);
        out
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Key of a holomorphic monomial `z^alpha w^gamma`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HoloKey {
    pub alpha: MultiIndex,
    pub gamma: u32,
}

impl HoloKey {
    pub fn new(alpha: MultiIndex, gamma: u32) -> Self {
        HoloKey { alpha, gamma }
    }

    pub fn one(n: usize) -> Self {
        HoloKey::new(MultiIndex::zeros(n), 0)
    }

    pub fn z(n: usize, j: usize) -> Self {
        HoloKey::new(MultiIndex::unit(n, j), 0)
    }

    pub fn w(n: usize) -> Self {
        HoloKey::new(MultiIndex::zeros(n), 1)
    }

    pub fn weight(&self) -> u32 {
        self.alpha.degree() + 2 * self.gamma
    }

    /// Ordinary total degree in `(z, w)`.
    pub fn order(&self) -> u32 {
        self.alpha.degree() + self.gamma
    }

    pub fn mul(&self, other: &HoloKey) -> HoloKey {
        HoloKey::new(self.alpha.add(&other.alpha), self.gamma + other.gamma)
    }

    /// All holomorphic monomials in `n` z-variables of exact weighted degree
    /// `weight`.
    pub fn of_weight(n: usize, weight: u32) -> Vec<HoloKey> {
        let mut out = Vec::new();
        for gamma in 0..=weight / 2 {
            for alpha in MultiIndex::of_degree(n, weight - 2 * gamma) {
                out.push(HoloKey::new(alpha, gamma));
            }
        }
        out.sort();
        out
    }
}

/// Key of `z^alpha z̄^beta w^gamma w̄^delta` (or `z^alpha z̄^beta u^gamma` in
/// the trace domain).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RealKey {
    pub alpha: MultiIndex,
    pub beta: MultiIndex,
    pub gamma: u32,
    pub delta: u32,
}

impl RealKey {
    pub fn new(alpha: MultiIndex, beta: MultiIndex, gamma: u32, delta: u32) -> Self {
        RealKey { alpha, beta, gamma, delta }
    }

    pub fn constant(n: usize) -> Self {
        RealKey::new(MultiIndex::zeros(n), MultiIndex::zeros(n), 0, 0)
    }

    pub fn from_parts(holo: &HoloKey, anti: &HoloKey) -> Self {
        RealKey::new(holo.alpha.clone(), anti.alpha.clone(), holo.gamma, anti.gamma)
    }

    pub fn weight(&self) -> u32 {
        self.alpha.degree() + self.beta.degree() + 2 * (self.gamma + self.delta)
    }

    pub fn conj(&self, domain: Domain) -> RealKey {
        match domain {
            Domain::ZW => RealKey::new(self.beta.clone(), self.alpha.clone(), self.delta, self.gamma),
            Domain::ZU => RealKey::new(self.beta.clone(), self.alpha.clone(), self.gamma, 0),
        }
    }

    pub fn holo_part(&self) -> HoloKey {
        HoloKey::new(self.alpha.clone(), self.gamma)
    }

    pub fn anti_part(&self) -> HoloKey {
        HoloKey::new(self.beta.clone(), self.delta)
    }

    pub fn mul(&self, other: &RealKey) -> RealKey {
        RealKey::new(
            self.alpha.add(&other.alpha),
            self.beta.add(&other.beta),
            self.gamma + other.gamma,
            self.delta + other.delta,
        )
    }

    /// Slice index `(mu, nu, gamma, delta)` of the bihomogeneous expansion.
    pub fn slice(&self) -> (u32, u32, u32, u32) {
        (self.alpha.degree(), self.beta.degree(), self.gamma, self.delta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    /// `(z, z̄, w, w̄)`
    ZW,
    /// `(z, z̄, u)` with `u` stored in the `gamma` slot
    ZU,
}

fn check_same(what: &str, a: (usize, u32), b: (usize, u32)) -> Result<()> {
    if a != b {
        return Err(Error::Mismatch(format!(
            "{what}: (n, D) = {:?} vs {:?}",
            a, b
        )));
    }
    Ok(())
}

fn accumulate<K: Ord>(map: &mut BTreeMap<K, GaussianRational>, key: K, c: GaussianRational) {
    if c.is_zero() {
        return;
    }
    use std::collections::btree_map::Entry;
    match map.entry(key) {
        Entry::Vacant(v) => {
            v.insert(c);
        }
        Entry::Occupied(mut o) => {
            *o.get_mut() += &c;
            if o.get().is_zero() {
                o.remove();
            }
        }
    }
}

fn hash_accumulate<K: std::hash::Hash + Eq>(map: &mut HashMap<K, GaussianRational>, key: K, c: GaussianRational) {
    if c.is_zero() {
        return;
    }
    *map.entry(key).or_default() += &c;
}

fn collect_nonzero<K: Ord>(map: HashMap<K, GaussianRational>) -> BTreeMap<K, GaussianRational> {
    map.into_iter().filter(|(_, c)| !c.is_zero()).collect()
}

/// Coefficients of a sparse series cleared to a common denominator:
/// `c = (re + i im) / den` with integer `re`, `im`.
struct Cleared<'a, K> {
    den: BigInt,
    terms: Vec<(&'a K, BigInt, BigInt, u32)>,
}

fn clear_denominators<'a, K: 'a>(
    it: impl Iterator<Item = (&'a K, &'a GaussianRational, u32)>,
    conj: bool,
) -> Cleared<'a, K> {
    let items: Vec<_> = it.collect();
    let den = items
        .iter()
        .fold(BigInt::one(), |acc, (_, c, _)| acc.lcm(c.re.denom()).lcm(c.im.denom()));
    let mut terms: Vec<_> = items
        .into_iter()
        .map(|(k, c, w)| {
            let re = c.re.numer() * (&den / c.re.denom());
            let im = c.im.numer() * (&den / c.im.denom());
            (k, re, if conj { -im } else { im }, w)
        })
        .collect();
    terms.sort_by_key(|t| t.3);
    Cleared { den, terms }
}

/// Truncated convolution on the integer path: one normalization per output
/// coefficient instead of one per product.
fn convolve<KA, KB, KO, F>(a: &Cleared<'_, KA>, b: &Cleared<'_, KB>, cap: u32, key: F) -> BTreeMap<KO, GaussianRational>
where
    KO: std::hash::Hash + Eq + Ord,
    F: Fn(&KA, &KB) -> KO,
{
    let mut acc: HashMap<KO, (BigInt, BigInt)> = HashMap::new();
    for (ka, ar, ai, wa) in &a.terms {
        for (kb, br, bi, wb) in &b.terms {
            if wa + wb > cap {
                break;
            }
            let e = acc.entry(key(ka, kb)).or_insert_with(|| (BigInt::zero(), BigInt::zero()));
            if ai.is_zero() && bi.is_zero() {
                e.0 += ar * br;
            } else {
                e.0 += ar * br - ai * bi;
                e.1 += ar * bi + ai * br;
            }
        }
    }
    let den = &a.den * &b.den;
    acc.into_iter()
        .filter(|(_, (re, im))| !(re.is_zero() && im.is_zero()))
        .map(|(k, (re, im))| (k, GaussianRational::new(Rational::new(re, den.clone()), Rational::new(im, den.clone()))))
        .collect()
}

// ---------------------------------------------------------------------------
// general (not necessarily real) series in (z, z̄, w, w̄) or (z, z̄, u)

/// A complex-valued truncated series. Used for polarized identities,
/// intermediate products and as the storage behind [`TruncatedRealSeries`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplexSeries {
    n: usize,
    cap: u32,
    domain: Domain,
    terms: BTreeMap<RealKey, GaussianRational>,
}

impl ComplexSeries {
    pub fn zero(n: usize, cap: u32, domain: Domain) -> Self {
        ComplexSeries { n, cap, domain, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, cap: u32, domain: Domain, c: GaussianRational) -> Self {
        let mut s = ComplexSeries::zero(n, cap, domain);
        accumulate(&mut s.terms, RealKey::constant(n), c);
        s
    }

    /// Builds a series from explicit terms; rejects keys of the wrong length,
    /// keys beyond the cap and (in the trace domain) nonzero `delta`.
    pub fn from_terms<I>(n: usize, cap: u32, domain: Domain, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (RealKey, GaussianRational)>,
    {
        let mut s = ComplexSeries::zero(n, cap, domain);
        for (k, c) in terms {
            s.check_key(&k)?;
            accumulate(&mut s.terms, k, c);
        }
        Ok(s)
    }

    fn check_key(&self, k: &RealKey) -> Result<()> {
        if k.alpha.len() != self.n || k.beta.len() != self.n {
            return Err(Error::Mismatch(format!(
                "multi-index length {} / {} vs n = {}",
                k.alpha.len(),
                k.beta.len(),
                self.n
            )));
        }
        if self.domain == Domain::ZU && k.delta != 0 {
            return Err(Error::Mismatch("trace-domain key with nonzero delta".into()));
        }
        if k.weight() > self.cap {
            return Err(Error::CapExceeded(format!(
                "key of weight {} with D = {}",
                k.weight(),
                self.cap
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn terms(&self) -> &BTreeMap<RealKey, GaussianRational> {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, k: &RealKey) -> GaussianRational {
        self.terms.get(k).cloned().unwrap_or_else(GaussianRational::zero)
    }

    /// Adds `c` to the coefficient of `k`, dropping it if `k` is beyond the
    /// cap.
    pub fn add_term(&mut self, k: RealKey, c: GaussianRational) {
        if k.weight() <= self.cap {
            accumulate(&mut self.terms, k, c);
        }
    }

    fn shape(&self) -> (usize, u32) {
        (self.n, self.cap)
    }

    fn check_compatible(&self, other: &ComplexSeries, what: &str) -> Result<()> {
        check_same(what, self.shape(), other.shape())?;
        if self.domain != other.domain {
            return Err(Error::Mismatch(format!("{what}: domain {:?} vs {:?}", self.domain, other.domain)));
        }
        Ok(())
    }

    pub fn add(&self, other: &ComplexSeries) -> Result<ComplexSeries> {
        self.check_compatible(other, "add")?;
        let mut out = self.clone();
        for (k, c) in &other.terms {
            accumulate(&mut out.terms, k.clone(), c.clone());
        }
        Ok(out)
    }

    pub(crate) fn add_in_place(&mut self, other: &ComplexSeries) {
        debug_assert!(self.check_compatible(other, "add").is_ok());
        for (k, c) in &other.terms {
            accumulate(&mut self.terms, k.clone(), c.clone());
        }
    }

    pub fn sub(&self, other: &ComplexSeries) -> Result<ComplexSeries> {
        self.check_compatible(other, "sub")?;
        let mut out = self.clone();
        for (k, c) in &other.terms {
            accumulate(&mut out.terms, k.clone(), -c);
        }
        Ok(out)
    }

    pub fn neg(&self) -> ComplexSeries {
        self.scale(&GaussianRational::from(-1))
    }

    pub fn scale(&self, c: &GaussianRational) -> ComplexSeries {
        let mut out = ComplexSeries::zero(self.n, self.cap, self.domain);
        if c.is_zero() {
            return out;
        }
        for (k, v) in &self.terms {
            out.terms.insert(k.clone(), v * c);
        }
        out
    }

    pub fn scale_real(&self, r: &Rational) -> ComplexSeries {
        self.scale(&GaussianRational::from_real(r.clone()))
    }

    /// Truncated product.
    pub fn mul(&self, other: &ComplexSeries) -> Result<ComplexSeries> {
        self.check_compatible(other, "multiply")?;
        let a = clear_denominators(self.terms.iter().map(|(k, c)| (k, c, k.weight())), false);
        let b = clear_denominators(other.terms.iter().map(|(k, c)| (k, c, k.weight())), false);
        let terms = convolve(&a, &b, self.cap, |x: &RealKey, y: &RealKey| x.mul(y));
        Ok(ComplexSeries { n: self.n, cap: self.cap, domain: self.domain, terms })
    }

    pub fn conj(&self) -> ComplexSeries {
        let mut out = ComplexSeries::zero(self.n, self.cap, self.domain);
        for (k, c) in &self.terms {
            out.terms.insert(k.conj(self.domain), c.conj());
        }
        out
    }

    /// `(S + conj S) / 2`
    pub fn real_part(&self) -> TruncatedRealSeries {
        let s = self.add(&self.conj()).expect("same shape");
        TruncatedRealSeries::from_complex_unchecked(s.scale_real(&Rational::new(1.into(), 2.into())))
    }

    /// `(S - conj S) / 2i`
    pub fn imag_part(&self) -> TruncatedRealSeries {
        let s = self.sub(&self.conj()).expect("same shape");
        let half_over_i = GaussianRational::new(Rational::zero(), Rational::new((-1).into(), 2.into()));
        TruncatedRealSeries::from_complex_unchecked(s.scale(&half_over_i))
    }

    pub fn is_real(&self) -> bool {
        self.terms
            .iter()
            .all(|(k, c)| self.terms.get(&k.conj(self.domain)).map_or(false, |d| *d == c.conj()))
    }

    pub fn weighted_component(&self, sigma: u32) -> ComplexSeries {
        ComplexSeries {
            n: self.n,
            cap: self.cap,
            domain: self.domain,
            terms: self
                .terms
                .iter()
                .filter(|(k, _)| k.weight() == sigma)
                .map(|(k, c)| (k.clone(), c.clone()))
                .collect(),
        }
    }

    /// Lowest weighted degree carrying a nonzero term.
    pub fn min_weight(&self) -> Option<u32> {
        self.terms.keys().map(RealKey::weight).min()
    }

    pub fn max_weight(&self) -> Option<u32> {
        self.terms.keys().map(RealKey::weight).max()
    }

    /// Lowest weighted degree at which `self` and `other` differ.
    pub fn first_difference(&self, other: &ComplexSeries) -> Option<u32> {
        let d = self.sub(other).ok()?;
        d.min_weight()
    }

    /// Multiplication by the monomial `z^alpha z̄^beta` (trace domain or
    /// `w`-free shift in the full domain).
    fn shifted(&self, alpha: &MultiIndex, beta: &MultiIndex, c: &GaussianRational, out: &mut HashMap<RealKey, GaussianRational>) {
        let extra = alpha.degree() + beta.degree();
        for (k, v) in &self.terms {
            if k.weight() + extra > self.cap {
                continue;
            }
            let key = RealKey::new(k.alpha.add(alpha), k.beta.add(beta), k.gamma, k.delta);
            hash_accumulate(out, key, v * c);
        }
    }

    /// Substitutes `w -> W`, `w̄ -> conj(W)` where `W` is a trace-domain
    /// series; the result is a trace-domain series. `W` must have no terms of
    /// weighted degree below 2, which makes the truncation exact.
    pub fn substitute_w(&self, big_w: &ComplexSeries) -> Result<ComplexSeries> {
        if self.domain != Domain::ZW || big_w.domain != Domain::ZU {
            return Err(Error::Mismatch("substitute_w expects a (z,w) series and a (z,u) substitute".into()));
        }
        check_same("substitute_w", self.shape(), big_w.shape())?;
        if big_w.min_weight().map_or(false, |m| m < 2) {
            return Err(Error::LowOrder("substituted w has terms of weight < 2".into()));
        }
        let big_w_bar = big_w.conj();
        let mut pw: Vec<ComplexSeries> = vec![ComplexSeries::constant(self.n, self.cap, Domain::ZU, GaussianRational::one())];
        let mut pwb: Vec<ComplexSeries> = pw.clone();
        let mut products: HashMap<(u32, u32), ComplexSeries> = HashMap::new();
        let mut acc: HashMap<RealKey, GaussianRational> = HashMap::new();
        for (k, c) in &self.terms {
            let (g, d) = (k.gamma, k.delta);
            while pw.len() <= g as usize {
                let next = pw.last().unwrap().mul(big_w)?;
                pw.push(next);
            }
            while pwb.len() <= d as usize {
                let next = pwb.last().unwrap().mul(&big_w_bar)?;
                pwb.push(next);
            }
            if !products.contains_key(&(g, d)) {
                let p = pw[g as usize].mul(&pwb[d as usize])?;
                products.insert((g, d), p);
            }
            products[&(g, d)].shifted(&k.alpha, &k.beta, c, &mut acc);
        }
        Ok(ComplexSeries { n: self.n, cap: self.cap, domain: Domain::ZU, terms: collect_nonzero(acc) })
    }

    /// Exact value at a point, with the barred variables given independently
    /// (a polarized evaluation). In the trace domain `w` is the value of `u`
    /// and `w_bar` is ignored.
    pub fn eval(
        &self,
        z: &[GaussianRational],
        z_bar: &[GaussianRational],
        w: &GaussianRational,
        w_bar: &GaussianRational,
    ) -> Result<GaussianRational> {
        if z.len() != self.n || z_bar.len() != self.n {
            return Err(Error::Mismatch(format!("point has {} coordinates, series {}", z.len(), self.n)));
        }
        let mut acc = GaussianRational::zero();
        for (k, c) in &self.terms {
            let mut t = c.clone();
            for j in 0..self.n {
                t *= &z[j].pow(k.alpha.0[j]);
                t *= &z_bar[j].pow(k.beta.0[j]);
            }
            t *= &w.pow(k.gamma);
            if k.delta > 0 {
                t *= &w_bar.pow(k.delta);
            }
            acc += &t;
        }
        Ok(acc)
    }

    /// Reinterprets a trace-domain series as a `(z, z̄, w, w̄)` series via
    /// `u = (w + w̄)/2`.
    pub fn u_to_w(&self) -> Result<ComplexSeries> {
        if self.domain != Domain::ZU {
            return Err(Error::Mismatch("u_to_w expects a trace-domain series".into()));
        }
        let half = GaussianRational::from_real(Rational::new(1.into(), 2.into()));
        let mut u = ComplexSeries::zero(self.n, self.cap, Domain::ZW);
        u.add_term(RealKey::new(MultiIndex::zeros(self.n), MultiIndex::zeros(self.n), 1, 0), half.clone());
        u.add_term(RealKey::new(MultiIndex::zeros(self.n), MultiIndex::zeros(self.n), 0, 1), half);
        let mut pows = vec![ComplexSeries::constant(self.n, self.cap, Domain::ZW, GaussianRational::one())];
        let mut acc = HashMap::new();
        for (k, c) in &self.terms {
            while pows.len() <= k.gamma as usize {
                let next = pows.last().unwrap().mul(&u)?;
                pows.push(next);
            }
            pows[k.gamma as usize].shifted(&k.alpha, &k.beta, c, &mut acc);
        }
        Ok(ComplexSeries { n: self.n, cap: self.cap, domain: Domain::ZW, terms: collect_nonzero(acc) })
    }
}

// ---------------------------------------------------------------------------
// real series

/// A real-valued truncated series: `coeff(conj key) = conj(coeff(key))` for
/// every stored key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncatedRealSeries(ComplexSeries);

impl TruncatedRealSeries {
    pub fn zero(n: usize, cap: u32) -> Self {
        TruncatedRealSeries(ComplexSeries::zero(n, cap, Domain::ZW))
    }

    pub fn zero_in(n: usize, cap: u32, domain: Domain) -> Self {
        TruncatedRealSeries(ComplexSeries::zero(n, cap, domain))
    }

    pub fn one(n: usize, cap: u32) -> Self {
        TruncatedRealSeries(ComplexSeries::constant(n, cap, Domain::ZW, GaussianRational::one()))
    }

    /// Validating constructor. Inconsistent conjugate pairs are rejected, not
    /// symmetrized.
    pub fn from_terms<I>(n: usize, cap: u32, domain: Domain, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (RealKey, GaussianRational)>,
    {
        let s = ComplexSeries::from_terms(n, cap, domain, terms)?;
        TruncatedRealSeries::from_complex(s)
    }

    pub fn from_complex(s: ComplexSeries) -> Result<Self> {
        for (k, c) in &s.terms {
            let ck = k.conj(s.domain);
            match s.terms.get(&ck) {
                Some(d) if *d == c.conj() => {}
                Some(d) => {
                    return Err(Error::Reality(format!(
                        "coefficient {c} at {k:?} but {d} at its conjugate key"
                    )))
                }
                None => return Err(Error::Reality(format!("conjugate key of {k:?} is missing"))),
            }
        }
        Ok(TruncatedRealSeries(s))
    }

    pub(crate) fn from_complex_unchecked(s: ComplexSeries) -> Self {
        debug_assert!(s.is_real(), "internal operation produced a non-real series");
        TruncatedRealSeries(s)
    }

    /// `sum_j c_j |phi_j|^2` with real weights.
    pub fn sum_of_squares(n: usize, cap: u32, parts: &[(Rational, &TruncatedHoloSeries)]) -> Result<Self> {
        let mut acc = ComplexSeries::zero(n, cap, Domain::ZW);
        for (c, phi) in parts {
            let p = hermitian_product(phi, phi)?;
            acc = acc.add(&p.scale_real(c))?;
        }
        Ok(TruncatedRealSeries::from_complex_unchecked(acc))
    }

    pub fn as_complex(&self) -> &ComplexSeries {
        &self.0
    }

    pub fn into_complex(self) -> ComplexSeries {
        self.0
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn cap(&self) -> u32 {
        self.0.cap
    }

    pub fn domain(&self) -> Domain {
        self.0.domain
    }

    pub fn terms(&self) -> &BTreeMap<RealKey, GaussianRational> {
        &self.0.terms
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn coeff(&self, k: &RealKey) -> GaussianRational {
        self.0.coeff(k)
    }

    pub fn add(&self, other: &TruncatedRealSeries) -> Result<TruncatedRealSeries> {
        Ok(TruncatedRealSeries::from_complex_unchecked(self.0.add(&other.0)?))
    }

    pub fn sub(&self, other: &TruncatedRealSeries) -> Result<TruncatedRealSeries> {
        Ok(TruncatedRealSeries::from_complex_unchecked(self.0.sub(&other.0)?))
    }

    pub fn neg(&self) -> TruncatedRealSeries {
        TruncatedRealSeries(self.0.neg())
    }

    pub fn scale(&self, r: &Rational) -> TruncatedRealSeries {
        TruncatedRealSeries(self.0.scale_real(r))
    }

    pub fn multiply(&self, other: &TruncatedRealSeries) -> Result<TruncatedRealSeries> {
        Ok(TruncatedRealSeries::from_complex_unchecked(self.0.mul(&other.0)?))
    }

    pub fn weighted_component(&self, sigma: u32) -> TruncatedRealSeries {
        TruncatedRealSeries(self.0.weighted_component(sigma))
    }

    pub fn min_weight(&self) -> Option<u32> {
        self.0.min_weight()
    }

    /// The trace `A^0(z, z̄, u) = A(z, z̄, u + i<z,z̄>_l, u - i<z,z̄>_l)`.
    pub fn restrict_to_quadric(&self, ell: usize) -> Result<TruncatedRealSeries> {
        if self.domain() != Domain::ZW {
            return Err(Error::Mismatch("restrict_to_quadric expects a (z, w) series".into()));
        }
        if 2 * ell > self.n() {
            return Err(Error::Precondition(format!("ell = {ell} exceeds n/2 for n = {}", self.n())));
        }
        let w = quadric_w(self.n(), self.cap(), ell, None)?;
        let out = self.0.substitute_w(&w)?;
        Ok(TruncatedRealSeries::from_complex_unchecked(out))
    }

    /// Restriction to the graph `v = <z,z̄>_l + Ã(z, z̄, u)`, i.e. the
    /// substitution `w = u + i(<z,z̄>_l + Ã)`.
    pub fn restrict_to_graph(&self, ell: usize, graph: &TruncatedRealSeries) -> Result<TruncatedRealSeries> {
        if self.domain() != Domain::ZW || graph.domain() != Domain::ZU {
            return Err(Error::Mismatch("restrict_to_graph expects a (z, w) series and a (z, u) graph".into()));
        }
        if 2 * ell > self.n() {
            return Err(Error::Precondition(format!("ell = {ell} exceeds n/2 for n = {}", self.n())));
        }
        let w = quadric_w(self.n(), self.cap(), ell, Some(graph.as_complex()))?;
        Ok(TruncatedRealSeries::from_complex_unchecked(self.0.substitute_w(&w)?))
    }

    /// Solves `v = <z,z̄>_l + A(z, z̄, u + iv, u - iv)` for
    /// `v = <z,z̄>_l + Ã(z, z̄, u)` by fixed-point iteration on the weighted
    /// degree and returns `Ã`.
    pub fn to_graph_form(&self, ell: usize) -> Result<TruncatedRealSeries> {
        if self.domain() != Domain::ZW {
            return Err(Error::Mismatch("to_graph_form expects a (z, w) series".into()));
        }
        if let Some(m) = self.min_weight() {
            if m < 3 {
                return Err(Error::LowOrder(format!(
                    "A has a term of weighted degree {m}; need >= 3 for the implicit solve"
                )));
            }
        }
        let mut tilde = ComplexSeries::zero(self.n(), self.cap(), Domain::ZU);
        for _ in 0..=self.cap() + 1 {
            let w = quadric_w(self.n(), self.cap(), ell, Some(&tilde))?;
            let next = self.0.substitute_w(&w)?;
            if next == tilde {
                return Ok(TruncatedRealSeries::from_complex_unchecked(next));
            }
            tilde = next;
        }
        Err(Error::Internal("graph-form iteration did not stabilize".into()))
    }

    /// `A(H(z,w), conj H)` for a map `H` into the variables of `self`.
    pub fn compose_with_map(&self, map: &HoloMapJet) -> Result<TruncatedRealSeries> {
        Ok(TruncatedRealSeries::from_complex_unchecked(compose_real_with_map(self, map, None)?))
    }

    /// Reinterprets a trace-domain series via `u = (w + w̄)/2`.
    pub fn u_to_w(&self) -> Result<TruncatedRealSeries> {
        Ok(TruncatedRealSeries::from_complex_unchecked(self.0.u_to_w()?))
    }
}

/// `u + i(<z,z̄>_l + extra)` as a trace-domain series.
fn quadric_w(n: usize, cap: u32, ell: usize, extra: Option<&ComplexSeries>) -> Result<ComplexSeries> {
    let mut v = hermitian_form_series(n, cap, ell, Domain::ZU);
    if let Some(e) = extra {
        v = v.add(e)?;
    }
    let mut w = v.scale(&GaussianRational::i());
    w.add_term(RealKey::new(MultiIndex::zeros(n), MultiIndex::zeros(n), 1, 0), GaussianRational::one());
    Ok(w)
}

/// `<z, z̄>_l = -sum_{j<=l} |z_j|^2 + sum_{j>l} |z_j|^2`.
pub fn hermitian_form_series(n: usize, cap: u32, ell: usize, domain: Domain) -> ComplexSeries {
    let mut s = ComplexSeries::zero(n, cap, domain);
    for j in 0..n {
        let e = MultiIndex::unit(n, j);
        let c = if j < ell { -1 } else { 1 };
        s.add_term(RealKey::new(e.clone(), e, 0, 0), GaussianRational::from(c));
    }
    s
}

/// `phi(z, w) * conj(psi)(z̄, w̄)` truncated at the common cap.
pub fn hermitian_product(phi: &TruncatedHoloSeries, psi: &TruncatedHoloSeries) -> Result<ComplexSeries> {
    check_same("hermitian product", (phi.n, phi.cap), (psi.n, psi.cap))?;
    let a = clear_denominators(phi.terms.iter().map(|(k, c)| (k, c, k.weight())), false);
    let b = clear_denominators(psi.terms.iter().map(|(k, c)| (k, c, k.weight())), true);
    let terms = convolve(&a, &b, phi.cap, RealKey::from_parts);
    Ok(ComplexSeries { n: phi.n, cap: phi.cap, domain: Domain::ZW, terms })
}

/// Substitution of a holomorphic jet into a real series, grouping the terms
/// of `A` by their antiholomorphic monomial so that only holomorphic
/// compositions are formed. `factor` (if given) multiplies every composed
/// monomial, i.e. the result is `|factor|^2 * A(H, conj H)`.
pub(crate) fn compose_real_with_map(
    a: &TruncatedRealSeries,
    map: &HoloMapJet,
    factor: Option<&TruncatedHoloSeries>,
) -> Result<ComplexSeries> {
    if a.domain() != Domain::ZW {
        return Err(Error::Mismatch("composition expects a (z, w) series".into()));
    }
    if map.target_dim() != a.n() + 1 {
        return Err(Error::Mismatch(format!(
            "map has {} components, series has {} + 1 variables",
            map.components.len(),
            a.n()
        )));
    }
    if map.cap != a.cap() {
        return Err(Error::Mismatch(format!("map cap {} vs series cap {}", map.cap, a.cap())));
    }
    map.check_weight_compatible()?;
    let mut comp = MonomialComposer::new(map);
    let mut by_anti: BTreeMap<HoloKey, Vec<(HoloKey, GaussianRational)>> = BTreeMap::new();
    for (k, c) in a.terms() {
        by_anti.entry(k.anti_part()).or_default().push((k.holo_part(), c.clone()));
    }
    let lift = |h: TruncatedHoloSeries| -> Result<TruncatedHoloSeries> {
        match factor {
            Some(f) => h.mul(f),
            None => Ok(h),
        }
    };
    let mut acc = ComplexSeries::zero(map.source_n, map.cap, Domain::ZW);
    for (anti, holos) in &by_anti {
        let mut s = TruncatedHoloSeries::zero(map.source_n, map.cap);
        for (holo, c) in holos {
            s.add_scaled(comp.monomial(holo)?, c);
        }
        let s = lift(s)?;
        let h_anti = lift(comp.monomial(anti)?.clone())?;
        acc.add_in_place(&hermitian_product(&s, &h_anti)?);
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// holomorphic series

/// Truncated holomorphic series in `(z, w)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncatedHoloSeries {
    n: usize,
    cap: u32,
    terms: BTreeMap<HoloKey, GaussianRational>,
}

impl TruncatedHoloSeries {
    pub fn zero(n: usize, cap: u32) -> Self {
        TruncatedHoloSeries { n, cap, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, cap: u32, c: GaussianRational) -> Self {
        let mut s = TruncatedHoloSeries::zero(n, cap);
        s.add_term(HoloKey::one(n), c);
        s
    }

    pub fn one(n: usize, cap: u32) -> Self {
        TruncatedHoloSeries::constant(n, cap, GaussianRational::one())
    }

    pub fn z(n: usize, cap: u32, j: usize) -> Self {
        TruncatedHoloSeries::monomial(n, cap, HoloKey::z(n, j), GaussianRational::one())
    }

    pub fn w(n: usize, cap: u32) -> Self {
        TruncatedHoloSeries::monomial(n, cap, HoloKey::w(n), GaussianRational::one())
    }

    pub fn monomial(n: usize, cap: u32, k: HoloKey, c: GaussianRational) -> Self {
        let mut s = TruncatedHoloSeries::zero(n, cap);
        s.add_term(k, c);
        s
    }

    pub fn from_terms<I>(n: usize, cap: u32, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (HoloKey, GaussianRational)>,
    {
        let mut s = TruncatedHoloSeries::zero(n, cap);
        for (k, c) in terms {
            if k.alpha.len() != n {
                return Err(Error::Mismatch(format!("multi-index length {} vs n = {n}", k.alpha.len())));
            }
            if k.weight() > cap {
                return Err(Error::CapExceeded(format!("key of weight {} with D = {cap}", k.weight())));
            }
            accumulate(&mut s.terms, k, c);
        }
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn terms(&self) -> &BTreeMap<HoloKey, GaussianRational> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, k: &HoloKey) -> GaussianRational {
        self.terms.get(k).cloned().unwrap_or_else(GaussianRational::zero)
    }

    pub fn add_term(&mut self, k: HoloKey, c: GaussianRational) {
        if k.weight() <= self.cap {
            accumulate(&mut self.terms, k, c);
        }
    }

    pub fn constant_term(&self) -> GaussianRational {
        self.coeff(&HoloKey::one(self.n))
    }

    /// Coefficients of `z_1..z_n, w` (the differential at 0).
    pub fn linear_coeffs(&self) -> Vec<GaussianRational> {
        let mut v: Vec<GaussianRational> = (0..self.n).map(|j| self.coeff(&HoloKey::z(self.n, j))).collect();
        v.push(self.coeff(&HoloKey::w(self.n)));
        v
    }

    /// Lowest ordinary degree in `(z, w)` with a nonzero term.
    pub fn order(&self) -> Option<u32> {
        self.terms.keys().map(HoloKey::order).min()
    }

    pub fn min_weight(&self) -> Option<u32> {
        self.terms.keys().map(HoloKey::weight).min()
    }

    pub fn with_cap(&self, cap: u32) -> TruncatedHoloSeries {
        TruncatedHoloSeries {
            n: self.n,
            cap,
            terms: self.terms.iter().filter(|(k, _)| k.weight() <= cap).map(|(k, c)| (k.clone(), c.clone())).collect(),
        }
    }

    pub fn add(&self, other: &TruncatedHoloSeries) -> Result<TruncatedHoloSeries> {
        check_same("holomorphic add", (self.n, self.cap), (other.n, other.cap))?;
        let mut out = self.clone();
        for (k, c) in &other.terms {
            accumulate(&mut out.terms, k.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &TruncatedHoloSeries) -> Result<TruncatedHoloSeries> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> TruncatedHoloSeries {
        self.scale(&GaussianRational::from(-1))
    }

    pub fn scale(&self, c: &GaussianRational) -> TruncatedHoloSeries {
        let mut out = TruncatedHoloSeries::zero(self.n, self.cap);
        if c.is_zero() {
            return out;
        }
        for (k, v) in &self.terms {
            out.terms.insert(k.clone(), v * c);
        }
        out
    }

    pub fn mul(&self, other: &TruncatedHoloSeries) -> Result<TruncatedHoloSeries> {
        check_same("holomorphic multiply", (self.n, self.cap), (other.n, other.cap))?;
        let a = clear_denominators(self.terms.iter().map(|(k, c)| (k, c, k.weight())), false);
        let b = clear_denominators(other.terms.iter().map(|(k, c)| (k, c, k.weight())), false);
        let terms = convolve(&a, &b, self.cap, |x: &HoloKey, y: &HoloKey| x.mul(y));
        Ok(TruncatedHoloSeries { n: self.n, cap: self.cap, terms })
    }

    pub fn pow(&self, e: u32) -> Result<TruncatedHoloSeries> {
        let mut acc = TruncatedHoloSeries::one(self.n, self.cap);
        for _ in 0..e {
            acc = acc.mul(self)?;
        }
        Ok(acc)
    }

    pub fn weighted_component(&self, sigma: u32) -> TruncatedHoloSeries {
        TruncatedHoloSeries {
            n: self.n,
            cap: self.cap,
            terms: self.terms.iter().filter(|(k, _)| k.weight() == sigma).map(|(k, c)| (k.clone(), c.clone())).collect(),
        }
    }

    /// `1/q` as a truncated series: `q = c(1 - x)` with `x` of positive
    /// weight, so `1/q = c^{-1} sum_k x^k` terminates after `D` steps.
    pub fn invert_unit(&self) -> Result<TruncatedHoloSeries> {
        let c = self.constant_term();
        let c_inv = c.inv().ok_or_else(|| Error::ConstantTerm("cannot invert a series with zero constant term".into()))?;
        let mut x = self.scale(&c_inv);
        x.add_term(HoloKey::one(self.n), -GaussianRational::one());
        let x = x.neg();
        let one = TruncatedHoloSeries::one(self.n, self.cap);
        let mut acc = one.clone();
        let mut p = one;
        for _ in 0..self.cap {
            p = p.mul(&x)?;
            if p.is_zero() {
                break;
            }
            acc = acc.add(&p)?;
        }
        Ok(acc.scale(&c_inv))
    }

    /// Conjugate coefficients (the series `conj(f)(z, w)`).
    pub fn conj_coeffs(&self) -> TruncatedHoloSeries {
        TruncatedHoloSeries {
            n: self.n,
            cap: self.cap,
            terms: self.terms.iter().map(|(k, c)| (k.clone(), c.conj())).collect(),
        }
    }

    /// Exact value at `(z, w)`.
    pub fn eval(&self, z: &[GaussianRational], w: &GaussianRational) -> Result<GaussianRational> {
        if z.len() != self.n {
            return Err(Error::Mismatch(format!("point has {} coordinates, series {}", z.len(), self.n)));
        }
        let mut acc = GaussianRational::zero();
        for (k, c) in &self.terms {
            let mut t = c.clone();
            for j in 0..self.n {
                t *= &z[j].pow(k.alpha.0[j]);
            }
            t *= &w.pow(k.gamma);
            acc += &t;
        }
        Ok(acc)
    }

    /// `f(z, w)` as a `(z, z̄, w, w̄)` series with no antiholomorphic part.
    pub fn to_complex(&self) -> ComplexSeries {
        let zero = MultiIndex::zeros(self.n);
        let mut s = ComplexSeries::zero(self.n, self.cap, Domain::ZW);
        for (k, c) in &self.terms {
            s.terms.insert(RealKey::new(k.alpha.clone(), zero.clone(), k.gamma, 0), c.clone());
        }
        s
    }

    /// Substitution `f(H(z, w))` where `f` lives in the target variables of
    /// `H`.
    pub fn substitute(&self, map: &HoloMapJet) -> Result<TruncatedHoloSeries> {
        if map.target_dim() != self.n + 1 {
            return Err(Error::Mismatch(format!(
                "series in {} + 1 variables, map with {} components",
                self.n,
                map.components.len()
            )));
        }
        if map.cap != self.cap {
            return Err(Error::Mismatch(format!("map cap {} vs series cap {}", map.cap, self.cap)));
        }
        map.check_weight_compatible()?;
        MonomialComposer::new(map).apply(self)
    }

    /// `self += c * other` (shapes must agree).
    pub(crate) fn add_scaled(&mut self, other: &TruncatedHoloSeries, c: &GaussianRational) {
        debug_assert_eq!((self.n, self.cap), (other.n, other.cap));
        for (k, v) in &other.terms {
            accumulate(&mut self.terms, k.clone(), v * c);
        }
    }
}

/// Evaluates monomials `H^P` of a jet, each from a cached lower monomial
/// times one component.
pub(crate) struct MonomialComposer<'a> {
    map: &'a HoloMapJet,
    cache: HashMap<HoloKey, TruncatedHoloSeries>,
}

impl<'a> MonomialComposer<'a> {
    pub(crate) fn new(map: &'a HoloMapJet) -> Self {
        MonomialComposer { map, cache: HashMap::new() }
    }

    fn ensure(&mut self, k: &HoloKey) -> Result<()> {
        if self.cache.contains_key(k) {
            return Ok(());
        }
        let n = k.alpha.len();
        let (lower, var) = if k.gamma > 0 {
            (HoloKey::new(k.alpha.clone(), k.gamma - 1), n)
        } else if let Some(j) = k.alpha.0.iter().rposition(|&e| e > 0) {
            let mut a = k.alpha.clone();
            a.0[j] -= 1;
            (HoloKey::new(a, 0), j)
        } else {
            self.cache.insert(k.clone(), TruncatedHoloSeries::one(self.map.source_n, self.map.cap));
            return Ok(());
        };
        self.ensure(&lower)?;
        let out = self.cache[&lower].mul(&self.map.components[var])?;
        self.cache.insert(k.clone(), out);
        Ok(())
    }

    pub(crate) fn monomial(&mut self, k: &HoloKey) -> Result<&TruncatedHoloSeries> {
        self.ensure(k)?;
        Ok(&self.cache[k])
    }

    /// `f(H)` for a series `f` in the target variables.
    pub(crate) fn apply(&mut self, f: &TruncatedHoloSeries) -> Result<TruncatedHoloSeries> {
        let mut acc = TruncatedHoloSeries::zero(self.map.source_n, self.map.cap);
        for (k, c) in &f.terms {
            let m = self.monomial(k)?;
            acc.add_scaled(m, c);
        }
        Ok(acc)
    }
}

// ---------------------------------------------------------------------------
// holomorphic maps

/// A jet of a holomorphic map `(z, w) -> (z', w')`; the last component is the
/// `w'` component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HoloMapJet {
    pub source_n: usize,
    pub cap: u32,
    pub components: Vec<TruncatedHoloSeries>,
}

impl HoloMapJet {
    pub fn new(source_n: usize, cap: u32, components: Vec<TruncatedHoloSeries>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Mismatch("a map needs at least one component".into()));
        }
        for c in &components {
            check_same("map component", (c.n, c.cap), (source_n, cap))?;
        }
        Ok(HoloMapJet { source_n, cap, components })
    }

    pub fn identity(n: usize, cap: u32) -> Self {
        let mut comps: Vec<TruncatedHoloSeries> = (0..n).map(|j| TruncatedHoloSeries::z(n, cap, j)).collect();
        comps.push(TruncatedHoloSeries::w(n, cap));
        HoloMapJet { source_n: n, cap, components: comps }
    }

    /// The linear map with matrix `m` acting on `(z, w)` as a row vector:
    /// component `k` is `sum_j x_j m[j][k]`.
    pub fn linear(n: usize, cap: u32, m: &CMatrix) -> Result<Self> {
        if m.rows() != n + 1 {
            return Err(Error::Mismatch(format!("linear map needs {} rows, got {}", n + 1, m.rows())));
        }
        let vars: Vec<HoloKey> = (0..n).map(|j| HoloKey::z(n, j)).chain(std::iter::once(HoloKey::w(n))).collect();
        let comps = (0..m.cols())
            .map(|k| {
                let mut s = TruncatedHoloSeries::zero(n, cap);
                for (j, v) in vars.iter().enumerate() {
                    s.add_term(v.clone(), m.get(j, k).clone());
                }
                s
            })
            .collect();
        HoloMapJet::new(n, cap, comps)
    }

    /// Number of components (`N + 1`).
    pub fn target_dim(&self) -> usize {
        self.components.len()
    }

    pub fn last(&self) -> &TruncatedHoloSeries {
        self.components.last().expect("nonempty")
    }

    pub fn has_zero_constant(&self) -> bool {
        self.components.iter().all(|c| c.constant_term().is_zero())
    }

    /// Truncation of a composition is exact when the `z'`-components have no
    /// constant term and the `w'`-component also has no `z`-linear terms.
    pub fn check_weight_compatible(&self) -> Result<()> {
        if !self.has_zero_constant() {
            return Err(Error::ConstantTerm("map jet has a nonzero constant term".into()));
        }
        if self.last().min_weight().map_or(false, |m| m < 2) {
            return Err(Error::LowOrder("last component has z-linear terms; weighted truncation would be inexact".into()));
        }
        Ok(())
    }

    /// Jacobian at 0 as an `(n+1) x (N+1)` matrix: entry `[j][k]` is
    /// `d H_k / d x_j (0)`, `x = (z, w)`.
    pub fn jacobian(&self) -> CMatrix {
        let rows = self.source_n + 1;
        let mut m = CMatrix::zeros(rows, self.components.len());
        for (k, c) in self.components.iter().enumerate() {
            for (j, v) in c.linear_coeffs().into_iter().enumerate() {
                m.set(j, k, v);
            }
        }
        m
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &HoloMapJet) -> Result<HoloMapJet> {
        if inner.target_dim() != self.source_n + 1 {
            return Err(Error::Mismatch(format!(
                "cannot compose: inner has {} components, outer expects {}",
                inner.target_dim(),
                self.source_n + 1
            )));
        }
        if inner.cap != self.cap {
            return Err(Error::Mismatch(format!("jet caps {} and {}", self.cap, inner.cap)));
        }
        inner.check_weight_compatible()?;
        let mut comp = MonomialComposer::new(inner);
        let comps = self.components.iter().map(|c| comp.apply(c)).collect::<Result<Vec<_>>>()?;
        HoloMapJet::new(inner.source_n, inner.cap, comps)
    }

    /// Degree-by-degree reversion of a square jet with invertible linear part.
    pub fn invert(&self) -> Result<HoloMapJet> {
        let n = self.source_n;
        if self.target_dim() != n + 1 {
            return Err(Error::Mismatch("only square jets can be inverted".into()));
        }
        self.check_weight_compatible()?;
        let jac = self.jacobian();
        let jac_inv = jac.inverse().ok_or_else(|| Error::Singular("linear part of the jet is not invertible".into()))?;
        let linear = HoloMapJet::linear(n, self.cap, &jac)?;
        let linear_inv = HoloMapJet::linear(n, self.cap, &jac_inv)?;
        // nonlinear part N = H - L
        let nonlinear = HoloMapJet::new(
            n,
            self.cap,
            self.components.iter().zip(&linear.components).map(|(h, l)| h.sub(l)).collect::<Result<Vec<_>>>()?,
        )?;
        let step = |g: &HoloMapJet, cap: u32| -> Result<HoloMapJet> {
            let ng = nonlinear.with_cap(cap).compose(g)?;
            let id = HoloMapJet::identity(n, cap);
            let rhs = HoloMapJet::new(
                n,
                cap,
                id.components.iter().zip(&ng.components).map(|(a, b)| a.sub(b)).collect::<Result<Vec<_>>>()?,
            )?;
            linear_inv.with_cap(cap).compose(&rhs)
        };
        // each pass fixes at least one more weighted degree, so the early
        // passes run at reduced caps
        let mut g = linear_inv.with_cap(1);
        for cap in 1..=self.cap {
            g = step(&g.with_cap(cap), cap)?;
        }
        for _ in 0..=self.cap + 1 {
            let next = step(&g, self.cap)?;
            if next == g {
                return Ok(g);
            }
            g = next;
        }
        Err(Error::Internal("jet reversion did not stabilize".into()))
    }

    pub fn with_cap(&self, cap: u32) -> HoloMapJet {
        HoloMapJet {
            source_n: self.source_n,
            cap,
            components: self.components.iter().map(|c| c.with_cap(cap)).collect(),
        }
    }

    /// Lowest weighted degree at which two jets of the same shape differ.
    pub fn first_difference(&self, other: &HoloMapJet) -> Option<u32> {
        if self.components.len() != other.components.len() {
            return Some(0);
        }
        self.components
            .iter()
            .zip(&other.components)
            .filter_map(|(a, b)| a.sub(b).ok().and_then(|d| d.min_weight()))
            .min()
    }
}

impl fmt::Display for TruncatedHoloSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(k, c)| format!("{c}*z^{}*w^{}", k.alpha, k.gamma))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl fmt::Display for ComplexSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(k, c)| format!("{c}*[{} {} {} {}]", k.alpha, k.beta, k.gamma, k.delta))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::rat;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    fn key(a: &[u32], b: &[u32], g: u32, d: u32) -> RealKey {
        RealKey::new(mi(a), mi(b), g, d)
    }

    fn abs_z1_sq(n: usize, cap: u32) -> TruncatedRealSeries {
        let mut a = vec![0; n];
        a[0] = 1;
        TruncatedRealSeries::from_terms(n, cap, Domain::ZW, [(key(&a, &a, 0, 0), GaussianRational::one())]).unwrap()
    }

    fn abs_w_pow(n: usize, cap: u32, e: u32) -> TruncatedRealSeries {
        let z = vec![0; n];
        TruncatedRealSeries::from_terms(n, cap, Domain::ZW, [(key(&z, &z, e, e), GaussianRational::one())]).unwrap()
    }

    #[test]
    fn add_identities() {
        let a = abs_z1_sq(2, 6);
        let zero = TruncatedRealSeries::zero(2, 6);
        assert_eq!(a.add(&zero).unwrap(), a);
        assert!(a.add(&a.neg()).unwrap().is_zero());
        let twice = a.add(&a).unwrap();
        assert_eq!(twice.coeff(&key(&[1, 0], &[1, 0], 0, 0)), GaussianRational::from(2));
        assert_eq!(twice.terms().len(), 1);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = abs_z1_sq(2, 6);
        let b = abs_z1_sq(2, 8);
        assert!(matches!(a.add(&b), Err(Error::Mismatch(_))));
        let c = abs_z1_sq(3, 6);
        assert!(matches!(a.multiply(&c), Err(Error::Mismatch(_))));
    }

    #[test]
    fn constructor_rejects_inconsistent_pairs() {
        let k = key(&[2, 0], &[0, 0], 0, 1);
        let bad = TruncatedRealSeries::from_terms(2, 6, Domain::ZW, [(k.clone(), GaussianRational::one())]);
        assert!(matches!(bad, Err(Error::Reality(_))));
        let bad = TruncatedRealSeries::from_terms(
            2,
            6,
            Domain::ZW,
            [(k.clone(), GaussianRational::i()), (k.conj(Domain::ZW), GaussianRational::i())],
        );
        assert!(matches!(bad, Err(Error::Reality(_))));
        let good = TruncatedRealSeries::from_terms(
            2,
            6,
            Domain::ZW,
            [(k.clone(), GaussianRational::i()), (k.conj(Domain::ZW), -GaussianRational::i())],
        );
        assert!(good.is_ok());
        let over = TruncatedRealSeries::from_terms(2, 4, Domain::ZW, [(key(&[1, 0], &[1, 0], 1, 1), GaussianRational::one())]);
        assert!(matches!(over, Err(Error::CapExceeded(_))));
    }

    #[test]
    fn monomial_products() {
        let a = abs_z1_sq(2, 8);
        let one = TruncatedRealSeries::one(2, 8);
        assert_eq!(a.multiply(&one).unwrap(), a);
        let a2 = a.multiply(&a).unwrap();
        assert_eq!(a2.coeff(&key(&[2, 0], &[2, 0], 0, 0)), GaussianRational::one());
        assert_eq!(a2.terms().len(), 1);
        let w2 = abs_w_pow(2, 8, 1);
        assert_eq!(w2.multiply(&w2).unwrap(), abs_w_pow(2, 8, 2));
        // truncation
        let w4 = abs_w_pow(2, 6, 1).multiply(&abs_w_pow(2, 6, 1)).unwrap();
        assert!(w4.is_zero());
    }

    #[test]
    fn weighted_components_partition() {
        let s = abs_z1_sq(2, 8).multiply(&abs_z1_sq(2, 8)).unwrap().add(&abs_w_pow(2, 8, 1)).unwrap();
        assert_eq!(s.weighted_component(4), s);
        assert!(s.weighted_component(0).is_zero());
        let mut total = TruncatedRealSeries::zero(2, 8);
        for sigma in 0..=8 {
            total = total.add(&s.weighted_component(sigma)).unwrap();
        }
        assert_eq!(total, s);
    }

    #[test]
    fn restrict_abs_w4_on_heisenberg() {
        // |w|^4 = (u^2 + v^2)^2 with v = |z1|^2 + |z2|^2
        let a = abs_w_pow(2, 8, 2);
        let r = a.restrict_to_quadric(0).unwrap();
        let v = hermitian_form_series(2, 8, 0, Domain::ZU);
        let mut u2 = ComplexSeries::zero(2, 8, Domain::ZU);
        u2.add_term(key(&[0, 0], &[0, 0], 2, 0), GaussianRational::one());
        let base = u2.add(&v.mul(&v).unwrap()).unwrap();
        let expected = base.mul(&base).unwrap();
        assert_eq!(r.as_complex(), &expected);
    }

    #[test]
    fn quadric_defining_function_restricts_to_zero() {
        for (n, ell) in [(2, 0), (2, 1), (3, 1), (4, 2)] {
            let w = TruncatedHoloSeries::w(n, 6).to_complex();
            let im_w = w.imag_part();
            let form = TruncatedRealSeries::from_complex(hermitian_form_series(n, 6, ell, Domain::ZW)).unwrap();
            let rho = im_w.sub(&form).unwrap();
            assert!(rho.restrict_to_quadric(ell).unwrap().is_zero());
        }
    }

    #[test]
    fn invert_unit_examples() {
        let one = TruncatedHoloSeries::one(1, 8);
        assert_eq!(one.invert_unit().unwrap(), one);
        let q = one.sub(&TruncatedHoloSeries::w(1, 8)).unwrap();
        let r = q.invert_unit().unwrap();
        for g in 0..=4 {
            assert_eq!(r.coeff(&HoloKey::new(mi(&[0]), g)), GaussianRational::one());
        }
        assert_eq!(r.terms().len(), 5);
        assert_eq!(q.mul(&r).unwrap(), one);
        let z = TruncatedHoloSeries::z(1, 8, 0);
        assert!(matches!(z.invert_unit(), Err(Error::ConstantTerm(_))));
    }

    #[test]
    fn compose_scaling() {
        // |z1|^4 under (2z, 4w)
        let a = abs_z1_sq(2, 8).multiply(&abs_z1_sq(2, 8)).unwrap();
        let mut h = HoloMapJet::identity(2, 8);
        h.components[0] = h.components[0].scale(&GaussianRational::from(2));
        h.components[1] = h.components[1].scale(&GaussianRational::from(2));
        h.components[2] = h.components[2].scale(&GaussianRational::from(4));
        let out = a.compose_with_map(&h).unwrap();
        assert_eq!(out, a.scale(&rat(16, 1)));
        assert_eq!(a.compose_with_map(&HoloMapJet::identity(2, 8)).unwrap(), a);
    }

    #[test]
    fn compose_rejects_constant_terms() {
        let a = abs_z1_sq(1, 6);
        let mut h = HoloMapJet::identity(1, 6);
        h.components[0].add_term(HoloKey::one(1), GaussianRational::one());
        assert!(matches!(a.compose_with_map(&h), Err(Error::ConstantTerm(_))));
        let mut h = HoloMapJet::identity(1, 6);
        h.components[1].add_term(HoloKey::z(1, 0), GaussianRational::one());
        assert!(matches!(a.compose_with_map(&h), Err(Error::LowOrder(_))));
    }

    #[test]
    fn graph_form_of_zero_and_low_order_error() {
        let zero = TruncatedRealSeries::zero(2, 8);
        assert!(zero.to_graph_form(0).unwrap().is_zero());
        let low = abs_z1_sq(2, 8);
        assert!(matches!(low.to_graph_form(0), Err(Error::LowOrder(_))));
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(MultiIndex::of_degree(3, 2).len(), 6);
        assert_eq!(MultiIndex::of_degree(0, 0).len(), 1);
        assert_eq!(MultiIndex::of_degree(0, 1).len(), 0);
        // weight 4 in 2 variables: z^4 (5) + z^2 w (3) + w^2 (1)
        assert_eq!(HoloKey::of_weight(2, 4).len(), 9);
    }
}
