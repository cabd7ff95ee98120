//! Hermitian coefficient analysis of real series: rank, signature, diagonal
//! decomposition into signed squares, and the rank classes built on them.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::gaussian::{find_norm_root, GaussianRational, Rational};
use crate::linalg::CMatrix;
use crate::series::{hermitian_form_series, hermitian_product, ComplexSeries, Domain, HoloKey, RealKey, TruncatedHoloSeries, TruncatedRealSeries};

/// `A = sum_{P,Q} matrix[P][Q] Z^P conj(Z^Q)` over the holomorphic support.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HermitianProfile {
    pub basis: Vec<HoloKey>,
    pub matrix: CMatrix,
    pub rank: usize,
    pub neg_count: usize,
    pub pos_count: usize,
}

impl HermitianProfile {
    /// The unordered pair `{S, R - S}` as `(min, max)`.
    pub fn signature_pair(&self) -> (usize, usize) {
        (self.neg_count.min(self.pos_count), self.neg_count.max(self.pos_count))
    }
}

/// `A = sum_j sign_j * weights[j] * |phis[j]|^2` with `sign_j = -1` for
/// `j < s`.
///
/// The weights are the positive rationals left over from the congruence
/// diagonal after absorbing every factor that is a norm in Q(i); they are 1
/// whenever that is possible, so the usual form `-sum_{j<=s}|phi_j|^2 +
/// sum_{j>s}|phi_j|^2` is recovered exactly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decomposition {
    pub n: usize,
    pub cap: u32,
    pub s: usize,
    pub phis: Vec<TruncatedHoloSeries>,
    pub weights: Vec<Rational>,
}

impl Decomposition {
    pub fn rank(&self) -> usize {
        self.phis.len()
    }

    pub fn has_unit_weights(&self) -> bool {
        self.weights.iter().all(|w| *w == Rational::from_integer(1.into()))
    }

    /// Builds a decomposition with unit weights.
    pub fn unit(n: usize, cap: u32, s: usize, phis: Vec<TruncatedHoloSeries>) -> Self {
        let weights = vec![Rational::from_integer(1.into()); phis.len()];
        Decomposition { n, cap, s, phis, weights }
    }
}

/// Gaussian integer used by the fraction-free elimination below.
#[derive(Clone, Debug, Default)]
struct Zi {
    re: BigInt,
    im: BigInt,
}

impl Zi {
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    fn conj(&self) -> Zi {
        Zi { re: self.re.clone(), im: -&self.im }
    }

    fn mul(&self, o: &Zi) -> Zi {
        Zi { re: &self.re * &o.re - &self.im * &o.im, im: &self.re * &o.im + &self.im * &o.re }
    }

    fn add(&self, o: &Zi) -> Zi {
        Zi { re: &self.re + &o.re, im: &self.im + &o.im }
    }

    fn scale_sub_div(&self, k: &BigInt, o: &Zi, d: &BigInt) -> Zi {
        // (k * self - o) / d, exact
        let re = (k * &self.re - &o.re) / d;
        let im = (k * &self.im - &o.im) / d;
        Zi { re, im }
    }

    fn to_gaussian(&self, den: &BigInt) -> GaussianRational {
        GaussianRational::new(Rational::new(self.re.clone(), den.clone()), Rational::new(self.im.clone(), den.clone()))
    }
}

/// Lagrange reduction of a Hermitian matrix. Each returned pair `(d, v)`
/// contributes `d * |sum_P v[P] x_P|^2`; the forms are linearly independent.
///
/// The matrix is scaled to Gaussian integers and reduced fraction-free
/// (Bareiss): after a pivot `p_k` the stored block is `p_k` times the Schur
/// complement, so every update divides exactly by the previous pivot.
pub fn diagonalize(c: &CMatrix) -> Vec<(Rational, Vec<GaussianRational>)> {
    assert!(c.is_hermitian(), "diagonalize expects a Hermitian matrix");
    let m = c.rows();
    let scale = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .fold(BigInt::one(), |acc, (i, j)| acc.lcm(c.get(i, j).re.denom()).lcm(c.get(i, j).im.denom()));
    let to_int = |r: &Rational| r.numer() * (&scale / r.denom());
    let mut b: Vec<Vec<Zi>> =
        (0..m).map(|i| (0..m).map(|j| Zi { re: to_int(&c.get(i, j).re), im: to_int(&c.get(i, j).im) }).collect()).collect();
    // forms[i] expresses the current i-th variable in the original basis
    let mut forms: Vec<Vec<Zi>> = (0..m)
        .map(|i| (0..m).map(|j| if i == j { Zi { re: BigInt::one(), im: BigInt::zero() } } else { Zi::default() }).collect())
        .collect();
    let mut active: Vec<usize> = (0..m).collect();
    let mut prev = BigInt::one();
    let mut out = Vec::new();
    loop {
        active.retain(|&i| b[i].iter().any(|z| !z.is_zero()));
        if active.is_empty() {
            break;
        }
        let p = match active.iter().copied().find(|&p| !b[p][p].re.is_zero()) {
            Some(p) => p,
            None => {
                // every diagonal entry vanishes: q <- q - t p with t = b[p][q]
                // makes the (p, p) entry 2|t|^2; row p += t row q, column p += t̄ column q
                let p = active[0];
                let q = *active.iter().find(|&&q| !b[p][q].is_zero()).expect("active row is nonzero");
                let t = b[p][q].clone();
                for k in 0..m {
                    let add = t.mul(&b[q][k]);
                    b[p][k] = b[p][k].add(&add);
                }
                let tc = t.conj();
                for k in 0..m {
                    let add = b[k][q].mul(&tc);
                    b[k][p] = b[k][p].add(&add);
                }
                for k in 0..m {
                    let sub = t.mul(&forms[p][k]);
                    forms[q][k] = Zi { re: &forms[q][k].re - &sub.re, im: &forms[q][k].im - &sub.im };
                }
                p
            }
        };
        let piv = b[p][p].re.clone();
        // true pivot piv / prev, true column b[.][p] / prev: v = sum_q b[q][p] forms[q] / piv
        let mut v = vec![Zi::default(); m];
        for &q in &active {
            if b[q][p].is_zero() {
                continue;
            }
            for k in 0..m {
                if !forms[q][k].is_zero() {
                    v[k] = v[k].add(&b[q][p].mul(&forms[q][k]));
                }
            }
        }
        let d = Rational::new(piv.clone(), &prev * &scale);
        out.push((d, v.iter().map(|z| z.to_gaussian(&piv)).collect()));
        // Bareiss step on the remaining block, upper triangle mirrored
        let rest: Vec<usize> = active.iter().copied().filter(|&i| i != p).collect();
        for (x, &i) in rest.iter().enumerate() {
            for &j in &rest[x..] {
                let cross = b[i][p].mul(&b[p][j]);
                if b[i][j].is_zero() && cross.is_zero() {
                    continue;
                }
                let val = b[i][j].scale_sub_div(&piv, &cross, &prev);
                if i != j {
                    b[j][i] = val.conj();
                }
                b[i][j] = val;
            }
        }
        for j in 0..m {
            b[p][j] = Zi::default();
            b[j][p] = Zi::default();
        }
        active.retain(|&i| i != p);
        prev = piv;
    }
    out
}

fn holo_basis(a: &ComplexSeries) -> Vec<HoloKey> {
    let mut set = BTreeSet::new();
    for k in a.terms().keys() {
        set.insert(k.holo_part());
        set.insert(k.anti_part());
    }
    set.into_iter().collect()
}

fn coefficient_matrix(a: &ComplexSeries, basis: &[HoloKey]) -> CMatrix {
    let index: BTreeMap<&HoloKey, usize> = basis.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let mut m = CMatrix::zeros(basis.len(), basis.len());
    for (k, c) in a.terms() {
        m.set(index[&k.holo_part()], index[&k.anti_part()], c.clone());
    }
    m
}

pub fn profile(a: &TruncatedRealSeries) -> HermitianProfile {
    let basis = holo_basis(a.as_complex());
    let matrix = coefficient_matrix(a.as_complex(), &basis);
    let diag = diagonalize(&matrix);
    let neg_count = diag.iter().filter(|(d, _)| d.is_negative()).count();
    let pos_count = diag.len() - neg_count;
    HermitianProfile { basis, matrix, rank: diag.len(), neg_count, pos_count }
}

pub fn decompose(a: &TruncatedRealSeries) -> Decomposition {
    let (n, cap) = (a.n(), a.cap());
    let basis = holo_basis(a.as_complex());
    let matrix = coefficient_matrix(a.as_complex(), &basis);
    let mut neg = Vec::new();
    let mut pos = Vec::new();
    for (d, v) in diagonalize(&matrix) {
        let magnitude = d.abs();
        let (scale, weight) = match find_norm_root(&magnitude) {
            Some(c) => (c, Rational::from_integer(1.into())),
            None => (GaussianRational::one(), magnitude),
        };
        let mut phi = TruncatedHoloSeries::zero(n, cap);
        for (k, c) in basis.iter().zip(&v) {
            phi.add_term(k.clone(), c * &scale);
        }
        if d.is_negative() {
            neg.push((phi, weight));
        } else {
            pos.push((phi, weight));
        }
    }
    let s = neg.len();
    let (phis, weights) = neg.into_iter().chain(pos).unzip();
    Decomposition { n, cap, s, phis, weights }
}

pub fn recompose(d: &Decomposition) -> TruncatedRealSeries {
    let mut parts = Vec::new();
    for (j, (phi, w)) in d.phis.iter().zip(&d.weights).enumerate() {
        let c = if j < d.s { -w.clone() } else { w.clone() };
        parts.push((c, phi));
    }
    TruncatedRealSeries::sum_of_squares(d.n, d.cap, &parts).expect("decomposition components share (n, D)")
}

/// Ordinary degree in `(z, w)` of a holomorphic monomial is at most 1.
fn is_low_order(k: &HoloKey) -> bool {
    k.order() <= 1
}

/// Membership in the global rank class: rank at most `k` and no element of
/// the span of the `Z̄`-derivatives has a constant or linear term in `(z, w)`.
pub fn in_class_h(a: &TruncatedRealSeries, k: usize) -> bool {
    if a.terms().keys().any(|key| is_low_order(&key.holo_part()) || is_low_order(&key.anti_part())) {
        return false;
    }
    profile(a).rank <= k
}

/// Groups the terms of `a` by `(mu, nu, gamma, delta)`.
pub fn slices(a: &ComplexSeries) -> BTreeMap<(u32, u32, u32, u32), Vec<(RealKey, GaussianRational)>> {
    let mut out: BTreeMap<_, Vec<_>> = BTreeMap::new();
    for (k, c) in a.terms() {
        out.entry(k.slice()).or_default().push((k.clone(), c.clone()));
    }
    out
}

/// Rank of the coefficient matrix of the bihomogeneous polynomial
/// `A_{mu nu gamma delta}(z, z̄)`.
pub fn slice_rank(terms: &[(RealKey, GaussianRational)]) -> usize {
    let rows: BTreeSet<_> = terms.iter().map(|(k, _)| k.alpha.clone()).collect();
    let cols: BTreeSet<_> = terms.iter().map(|(k, _)| k.beta.clone()).collect();
    let ri: BTreeMap<_, _> = rows.iter().enumerate().map(|(i, a)| (a, i)).collect();
    let ci: BTreeMap<_, _> = cols.iter().enumerate().map(|(i, b)| (b, i)).collect();
    let mut m = CMatrix::zeros(rows.len(), cols.len());
    for (k, c) in terms {
        m.set(ri[&k.alpha], ci[&k.beta], c.clone());
    }
    m.rank()
}

fn slice_class(a: &TruncatedRealSeries, k: usize, all_slices: bool) -> bool {
    for ((_, nu, gamma, delta), terms) in slices(a.as_complex()) {
        if nu + delta <= 1 {
            return false;
        }
        // reality mirrors the exclusion onto mu + gamma <= 1
        let mu = terms[0].0.alpha.degree();
        if mu + gamma <= 1 {
            return false;
        }
        if (all_slices || delta <= 1) && slice_rank(&terms) > k {
            return false;
        }
    }
    true
}

/// Per-slice rank class with the rank bound on slices with `delta <= 1`.
pub fn in_class_s(a: &TruncatedRealSeries, k: usize) -> bool {
    slice_class(a, k, false)
}

/// Per-slice rank class with the rank bound on every slice.
pub fn in_class_s_tilde(a: &TruncatedRealSeries, k: usize) -> bool {
    slice_class(a, k, true)
}

/// Largest slice rank over the slices that the class bound applies to.
pub fn max_slice_rank(a: &TruncatedRealSeries, all_slices: bool) -> usize {
    slices(a.as_complex())
        .into_iter()
        .filter(|((_, _, _, delta), _)| all_slices || *delta <= 1)
        .map(|(_, t)| slice_rank(&t))
        .max()
        .unwrap_or(0)
}

/// Finite-degree check of the divisibility lemma for
/// `H(z, z̄) <z, z̄>^{q+1} = sum_p (sum_j phi_jp conj(psi_jp)) <z, z̄>^p`.
///
/// `h` is a `w`-free series in `(z, z̄)` (read as the polarization
/// `H(z, ξ̄)`), `phis[p][j]`, `psis[p][j]` are `w`-free holomorphic series.
/// Returns `Err(Hypothesis)` with the first failing weighted degree when the
/// identity does not hold to degree `D`; otherwise `Ok(true)` iff `H` and
/// every `sum_j phi_jp conj(psi_jp)` vanish to the degree the identity
/// determines them (`D - 2(q+1)` and `D - 2p`).
pub fn lemma_divisibility_check(
    h: &ComplexSeries,
    phis: &[Vec<TruncatedHoloSeries>],
    psis: &[Vec<TruncatedHoloSeries>],
    ell: usize,
    q: usize,
) -> Result<bool> {
    let (n, cap) = (h.n(), h.cap());
    if h.domain() != Domain::ZW || h.terms().keys().any(|k| k.gamma + k.delta > 0) {
        return Err(Error::Precondition("H must be a w-free series in (z, z̄)".into()));
    }
    if phis.len() != q + 1 || psis.len() != q + 1 {
        return Err(Error::Precondition(format!("need q + 1 = {} groups of phi and psi", q + 1)));
    }
    let free_of_w = |s: &TruncatedHoloSeries| s.terms().keys().all(|k| k.gamma == 0);
    let form = hermitian_form_series(n, cap, ell, Domain::ZW);
    let mut form_pows = vec![ComplexSeries::constant(n, cap, Domain::ZW, GaussianRational::one())];
    for _ in 0..=q {
        let next = form_pows.last().unwrap().mul(&form)?;
        form_pows.push(next);
    }
    let lhs = h.mul(&form_pows[q + 1])?;
    let mut sums = Vec::with_capacity(q + 1);
    let mut rhs = ComplexSeries::zero(n, cap, Domain::ZW);
    for p in 0..=q {
        if phis[p].len() != psis[p].len() {
            return Err(Error::Precondition(format!("phi/psi length mismatch at p = {p}")));
        }
        let mut s = ComplexSeries::zero(n, cap, Domain::ZW);
        for (phi, psi) in phis[p].iter().zip(&psis[p]) {
            if !free_of_w(phi) || !free_of_w(psi) {
                return Err(Error::Precondition("phi and psi must be w-free".into()));
            }
            s = s.add(&hermitian_product(phi, psi)?)?;
        }
        rhs = rhs.add(&s.mul(&form_pows[p])?)?;
        sums.push(s);
    }
    if let Some(degree) = lhs.first_difference(&rhs) {
        return Err(Error::Hypothesis { degree });
    }
    let vanishes_below = |s: &ComplexSeries, bound: i64| s.min_weight().map_or(true, |m| (m as i64) > bound);
    let mut ok = vanishes_below(h, cap as i64 - 2 * (q as i64 + 1));
    for (p, s) in sums.iter().enumerate() {
        ok &= vanishes_below(s, cap as i64 - 2 * p as i64);
    }
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::MultiIndex;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    fn real(n: usize, cap: u32, terms: Vec<(RealKey, GaussianRational)>) -> TruncatedRealSeries {
        TruncatedRealSeries::from_terms(n, cap, Domain::ZW, terms).unwrap()
    }

    /// `Re(w^2 conj(z_1^2))` in two variables.
    fn re_w2_z1bar2(cap: u32) -> TruncatedRealSeries {
        let half = GaussianRational::from_real(Rational::new(1.into(), 2.into()));
        real(
            2,
            cap,
            vec![
                (RealKey::new(mi(&[0, 0]), mi(&[2, 0]), 2, 0), half.clone()),
                (RealKey::new(mi(&[2, 0]), mi(&[0, 0]), 0, 2), half),
            ],
        )
    }

    #[test]
    fn abs_w4_profile() {
        let a = real(2, 8, vec![(RealKey::new(mi(&[0, 0]), mi(&[0, 0]), 2, 2), GaussianRational::one())]);
        let p = profile(&a);
        assert_eq!((p.rank, p.neg_count, p.pos_count), (1, 0, 1));
        assert_eq!(p.basis, vec![HoloKey::new(mi(&[0, 0]), 2)]);
        let d = decompose(&a);
        assert_eq!(d.s, 0);
        assert_eq!(d.phis, vec![TruncatedHoloSeries::monomial(2, 8, HoloKey::new(mi(&[0, 0]), 2), GaussianRational::one())]);
        assert_eq!(recompose(&d), a);
    }

    #[test]
    fn mixed_sign_example() {
        let a = re_w2_z1bar2(8);
        let p = profile(&a);
        assert_eq!((p.rank, p.neg_count), (2, 1));
        let d = decompose(&a);
        assert_eq!(d.s, 1);
        assert!(d.has_unit_weights());
        assert_eq!(recompose(&d), a);
        assert!(in_class_h(&a, 2));
        assert!(!in_class_h(&a, 1));
    }

    #[test]
    fn zero_series() {
        let a = TruncatedRealSeries::zero(2, 8);
        let p = profile(&a);
        assert_eq!((p.rank, p.neg_count), (0, 0));
        let d = decompose(&a);
        assert_eq!((d.s, d.phis.len()), (0, 0));
        assert!(recompose(&d).is_zero());
        assert!(in_class_s(&a, 0));
    }

    #[test]
    fn linear_factors_excluded() {
        let a = real(2, 8, vec![(RealKey::new(mi(&[1, 0]), mi(&[1, 0]), 0, 0), GaussianRational::one())]);
        for k in 0..4 {
            assert!(!in_class_h(&a, k));
        }
    }

    #[test]
    fn non_norm_weights_survive() {
        // 3|z1^2|^2 cannot be written as |phi|^2 over Q(i)
        let a = real(1, 8, vec![(RealKey::new(mi(&[2]), mi(&[2]), 0, 0), GaussianRational::from(3))]);
        let d = decompose(&a);
        assert_eq!(d.weights, vec![Rational::from_integer(3.into())]);
        assert_eq!(recompose(&d), a);
        // 2|z1^2|^2 = |(1+i) z1^2|^2
        let a = real(1, 8, vec![(RealKey::new(mi(&[2]), mi(&[2]), 0, 0), GaussianRational::from(2))]);
        assert!(decompose(&a).has_unit_weights());
    }

    #[test]
    fn slice_class_example() {
        // |z_2|^2 <z, z̄>_0 with n = 2
        let a = real(
            2,
            8,
            vec![
                (RealKey::new(mi(&[1, 1]), mi(&[1, 1]), 0, 0), GaussianRational::one()),
                (RealKey::new(mi(&[0, 2]), mi(&[0, 2]), 0, 0), GaussianRational::one()),
            ],
        );
        assert!(!in_class_s(&a, 1));
        assert!(in_class_s(&a, 2));
        let w4 = real(2, 8, vec![(RealKey::new(mi(&[0, 0]), mi(&[0, 0]), 2, 2), GaussianRational::one())]);
        assert!(in_class_s(&w4, 1));
        assert!(in_class_s_tilde(&w4, 1));
    }

    #[test]
    fn divisibility_oracle_trivial_and_sharp() {
        let h = ComplexSeries::zero(2, 8, Domain::ZW);
        let z = TruncatedHoloSeries::zero(2, 8);
        assert_eq!(lemma_divisibility_check(&h, &[vec![z.clone()]], &[vec![z]], 0, 0), Ok(true));

        // n = 1: H = 1 with phi psi-bar = <z, ξ̄>
        let h = ComplexSeries::constant(1, 8, Domain::ZW, GaussianRational::one());
        let z1 = TruncatedHoloSeries::z(1, 8, 0);
        assert_eq!(lemma_divisibility_check(&h, &[vec![z1.clone()]], &[vec![z1.clone()]], 0, 0), Ok(false));

        // hypothesis failure is reported separately
        let bad = lemma_divisibility_check(&h, &[vec![z1.clone()]], &[vec![z1.scale(&GaussianRational::from(2))]], 0, 0);
        assert_eq!(bad, Err(Error::Hypothesis { degree: 2 }));
    }
}
