//! Hyperquadric models `Im w = <z, z̄>_l`, their stability group at 0 and its
//! action on defining series.
//!
//! An automorphism is
//! `T(z, w) = (lam (z + a w) U, sigma lam^2 w) / q`,
//! `q = 1 - 2i <z, ā>_l - (r + i <a, ā>_l) w`, with `z` a row vector and
//! `U J U^* = sigma J`. It satisfies
//! `|q|^2 (Im G - <F, F̄>_l) = sigma lam^2 (Im w - <z, z̄>_l)`.

use num_traits::{One, Signed, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian::{rational_sqrt, GaussianRational, Rational};
use crate::hermitian::profile;
use crate::linalg::CMatrix;
use crate::series::{
    compose_real_with_map, hermitian_form_series, hermitian_product, Domain, HoloKey, HoloMapJet,
    TruncatedHoloSeries, TruncatedRealSeries,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SignatureForm {
    pub n: usize,
    pub ell: usize,
}

impl SignatureForm {
    pub fn new(n: usize, ell: usize) -> Result<Self> {
        if 2 * ell > n {
            return Err(Error::Precondition(format!("ell = {ell} exceeds n/2 for n = {n}")));
        }
        Ok(SignatureForm { n, ell })
    }

    /// Form with `ell` negative squares without the `ell <= n/2` convention;
    /// targets of embeddings may carry more negative than positive squares
    /// before renumbering.
    pub fn unchecked(n: usize, ell: usize) -> Self {
        SignatureForm { n, ell }
    }

    pub fn sign(&self, j: usize) -> i64 {
        if j < self.ell {
            -1
        } else {
            1
        }
    }

    pub fn matrix(&self) -> CMatrix {
        CMatrix::signature(self.n, self.ell)
    }

    /// Whether `sigma = -1` automorphisms exist.
    pub fn allows_reversal(&self) -> bool {
        2 * self.ell == self.n
    }
}

/// `-sum_{j<=l} a_j b_j + sum_{j>l} a_j b_j` (bilinear, no conjugation).
pub fn scalar_product(a: &[GaussianRational], b: &[GaussianRational], form: SignatureForm) -> Result<GaussianRational> {
    if a.len() != form.n || b.len() != form.n {
        return Err(Error::Mismatch(format!("vectors of length {} and {} for n = {}", a.len(), b.len(), form.n)));
    }
    let mut acc = GaussianRational::zero();
    for j in 0..form.n {
        let p = &a[j] * &b[j];
        if j < form.ell {
            acc -= &p;
        } else {
            acc += &p;
        }
    }
    Ok(acc)
}

fn check_isometry(u: &CMatrix, form: SignatureForm, sigma: i32) -> Result<()> {
    if u.rows() != form.n || u.cols() != form.n {
        return Err(Error::Mismatch(format!("U is {}x{}, expected {}x{}", u.rows(), u.cols(), form.n, form.n)));
    }
    let j = form.matrix();
    if u.mul(&j).mul(&u.adjoint()) != j.scale(&GaussianRational::from(sigma as i64)) {
        return Err(Error::Isometry(format!("U J U* != {sigma} J")));
    }
    Ok(())
}

fn check_sigma(sigma: i32, form: SignatureForm) -> Result<()> {
    match sigma {
        1 => Ok(()),
        -1 if form.allows_reversal() => Ok(()),
        -1 => Err(Error::SigmaSignature { n: form.n, ell: form.ell }),
        _ => Err(Error::Precondition(format!("sigma must be +1 or -1, got {sigma}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadricAutomorphism {
    pub lam: Rational,
    pub r: Rational,
    pub a: Vec<GaussianRational>,
    pub u: CMatrix,
    pub sigma: i32,
    pub form: SignatureForm,
    pub jet: HoloMapJet,
}

impl QuadricAutomorphism {
    pub fn new(
        lam: Rational,
        r: Rational,
        a: Vec<GaussianRational>,
        u: CMatrix,
        sigma: i32,
        form: SignatureForm,
        cap: u32,
    ) -> Result<Self> {
        if !lam.is_positive() {
            return Err(Error::Precondition("lambda must be positive".into()));
        }
        if a.len() != form.n {
            return Err(Error::Mismatch(format!("a has length {}, n = {}", a.len(), form.n)));
        }
        check_sigma(sigma, form)?;
        check_isometry(&u, form, sigma)?;
        let jet = automorphism_jet(&lam, &r, &a, &u, sigma, form, cap)?;
        Ok(QuadricAutomorphism { lam, r, a, u, sigma, form, jet })
    }

    pub fn identity(form: SignatureForm, cap: u32) -> Self {
        QuadricAutomorphism {
            lam: Rational::one(),
            r: Rational::zero(),
            a: vec![GaussianRational::zero(); form.n],
            u: CMatrix::identity(form.n),
            sigma: 1,
            form,
            jet: HoloMapJet::identity(form.n, cap),
        }
    }

    pub fn cap(&self) -> u32 {
        self.jet.cap
    }

    pub fn is_identity(&self) -> bool {
        self.jet == HoloMapJet::identity(self.form.n, self.cap())
    }

    /// The denominator `q(z, w)`.
    pub fn denominator(&self) -> TruncatedHoloSeries {
        denominator(&self.r, &self.a, self.form, self.cap())
    }

    /// `Im G - <F, F̄>_l` restricted to the quadric must vanish to degree D.
    /// Brute-force check on the jet; construction already verifies the
    /// identity on the numerators.
    pub fn check_preserves_quadric(&self) -> Result<()> {
        let defect = quadric_defect(&self.jet, self.form)?;
        let restricted = defect.restrict_to_quadric(self.form.ell)?;
        match restricted.min_weight() {
            None => Ok(()),
            Some(d) => Err(Error::IdentityFailed { degree: d, what: "automorphism does not preserve the quadric".into() }),
        }
    }

    /// Recovers the parameters from the 2-jet of `jet` and checks that they
    /// reproduce the whole jet.
    pub fn from_jet(jet: &HoloMapJet, form: SignatureForm) -> Result<Self> {
        let rebuilt = recover(jet, form)?;
        if let Some(d) = rebuilt.jet.first_difference(jet) {
            return Err(Error::Recovery(format!("rebuilt jet differs at weighted degree {d}")));
        }
        Ok(rebuilt)
    }

    /// `self ∘ other`, computed on the projective matrices.
    pub fn compose(&self, other: &QuadricAutomorphism) -> Result<QuadricAutomorphism> {
        if self.form != other.form || self.cap() != other.cap() {
            return Err(Error::Mismatch("automorphisms of different quadrics or caps".into()));
        }
        let m = other.projective_matrix().mul(&self.projective_matrix());
        QuadricAutomorphism::from_projective(&m, self.form, self.cap())
    }

    pub fn inverse(&self) -> Result<QuadricAutomorphism> {
        let m = self.projective_matrix();
        let inv = m.inverse().ok_or_else(|| Error::Singular("projective matrix".into()))?;
        let t = QuadricAutomorphism::from_projective(&inv, self.form, self.cap())?;
        if !m.mul(&t.projective_matrix()).eq(&CMatrix::identity(self.form.n + 2)) {
            return Err(Error::Recovery("T composed with its recovered inverse is not the identity".into()));
        }
        Ok(t)
    }

    /// `self ∘ h`, evaluated through the fractional-linear form of `T`.
    pub fn apply(&self, h: &HoloMapJet) -> Result<HoloMapJet> {
        let nn = self.form.n;
        if h.target_dim() != nn + 1 || h.cap != self.cap() {
            return Err(Error::Mismatch("map does not land in the automorphism's domain".into()));
        }
        if !h.has_zero_constant() {
            return Err(Error::ConstantTerm("map must fix the origin".into()));
        }
        let m = self.projective_matrix();
        let (n, cap) = (h.source_n, h.cap);
        let column = |k: usize| -> Result<TruncatedHoloSeries> {
            let mut acc = TruncatedHoloSeries::constant(n, cap, m.get(nn + 1, k).clone());
            for (j, c) in h.components.iter().enumerate() {
                let mjk = m.get(j, k);
                if !mjk.is_zero() {
                    acc = acc.add(&c.scale(mjk))?;
                }
            }
            Ok(acc)
        };
        let q_inv = column(nn + 1)?.invert_unit()?;
        let comps = (0..=nn).map(|k| column(k)?.mul(&q_inv)).collect::<Result<Vec<_>>>()?;
        HoloMapJet::new(n, cap, comps)
    }

    /// The matrix `M` of `T` acting on homogeneous rows `(z, w, 1)`: the
    /// numerators of `(F, G)` and the denominator `q` are the columns of `(z, w, 1) M`.
    pub fn projective_matrix(&self) -> CMatrix {
        let n = self.form.n;
        let lam = GaussianRational::from_real(self.lam.clone());
        let mut m = CMatrix::zeros(n + 2, n + 2);
        let au = CMatrix::from_rows(vec![self.a.clone()]).mul(&self.u).row(0);
        for k in 0..n {
            for j in 0..n {
                m.set(j, k, &lam * self.u.get(j, k));
            }
            m.set(n, k, &lam * &au[k]);
        }
        m.set(n, n, GaussianRational::from_real(&self.lam * &self.lam * Rational::from_integer(self.sigma.into())));
        let q = self.denominator();
        for j in 0..n {
            m.set(j, n + 1, q.coeff(&HoloKey::z(n, j)));
        }
        m.set(n, n + 1, q.coeff(&HoloKey::w(n)));
        m.set(n + 1, n + 1, GaussianRational::one());
        m
    }

    /// Reads the parameters off a projective matrix (up to scale) and checks
    /// that they reproduce it.
    pub fn from_projective(m: &CMatrix, form: SignatureForm, cap: u32) -> Result<Self> {
        let n = form.n;
        if m.rows() != n + 2 || m.cols() != n + 2 {
            return Err(Error::Mismatch("projective matrix has the wrong size".into()));
        }
        let scale = m.get(n + 1, n + 1).inv().ok_or_else(|| Error::Recovery("map does not fix the origin".into()))?;
        let m = m.scale(&scale);
        let gw = m.get(n, n).clone();
        if !gw.is_real() || gw.is_zero() {
            return Err(Error::Recovery(format!("w-coefficient of the last component is {gw}")));
        }
        let sigma = if gw.re.is_negative() { -1 } else { 1 };
        let lam = rational_sqrt(&gw.re.abs())
            .ok_or_else(|| Error::Irrational(format!("lambda^2 = {} has no rational square root", gw.re.abs())))?;
        let lam_inv = GaussianRational::from_real(lam.recip());
        let mut u = CMatrix::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                u.set(j, k, m.get(j, k) * &lam_inv);
            }
        }
        let u_inv = u.inverse().ok_or_else(|| Error::Recovery("z-linear block is singular".into()))?;
        let fw: Vec<GaussianRational> = (0..n).map(|k| m.get(n, k) * &lam_inv).collect();
        let a = CMatrix::from_rows(vec![fw]).mul(&u_inv).row(0);
        let r = -m.get(n, n + 1).re.clone();
        let t = QuadricAutomorphism::new(lam, r, a, u, sigma, form, cap)?;
        if t.projective_matrix() != m {
            return Err(Error::Recovery("matrix is not that of a quadric automorphism".into()));
        }
        Ok(t)
    }
}

/// Parameters read from the weight <= 4 part of a jet, rebuilt at the jet's
/// cap.
fn recover(jet: &HoloMapJet, form: SignatureForm) -> Result<QuadricAutomorphism> {
    let n = form.n;
    if jet.source_n != n || jet.target_dim() != n + 1 {
        return Err(Error::Mismatch("jet shape does not match the signature form".into()));
    }
    let gw = jet.last().coeff(&HoloKey::w(n));
    if !gw.is_real() || gw.is_zero() {
        return Err(Error::Recovery(format!("w-coefficient of the last component is {gw}")));
    }
    let sigma = if gw.re.is_negative() { -1 } else { 1 };
    let lam = rational_sqrt(&gw.re.abs())
        .ok_or_else(|| Error::Irrational(format!("lambda^2 = {} has no rational square root", gw.re.abs())))?;
    let lam_g = GaussianRational::from_real(lam.clone());
    let mut u = CMatrix::zeros(n, n);
    let mut fw = Vec::with_capacity(n);
    for k in 0..n {
        for j in 0..n {
            u.set(j, k, &jet.components[k].coeff(&HoloKey::z(n, j)) / &lam_g);
        }
        fw.push(&jet.components[k].coeff(&HoloKey::w(n)) / &lam_g);
    }
    let u_inv = u.inverse().ok_or_else(|| Error::Recovery("z-linear block is singular".into()))?;
    let a = CMatrix::from_rows(vec![fw]).mul(&u_inv).row(0);
    let w2 = jet.last().coeff(&HoloKey::new(crate::series::MultiIndex::zeros(n), 2));
    let r = &w2.re / &gw.re;
    QuadricAutomorphism::new(lam, r, a, u, sigma, form, jet.cap)
}

fn denominator(r: &Rational, a: &[GaussianRational], form: SignatureForm, cap: u32) -> TruncatedHoloSeries {
    let n = form.n;
    let mut q = TruncatedHoloSeries::one(n, cap);
    let two_i = GaussianRational::from_ints(0, 2);
    let mut aa = Rational::zero();
    for j in 0..n {
        let e = GaussianRational::from(form.sign(j));
        // -2i <z, ā>
        q.add_term(HoloKey::z(n, j), -(&(&two_i * &e) * &a[j].conj()));
        aa += a[j].norm_sqr() * Rational::from_integer(form.sign(j).into());
    }
    q.add_term(HoloKey::w(n), -GaussianRational::new(r.clone(), aa));
    q
}

/// Numerators `(P, R) = (lam (z + a w) U, sigma lam^2 w)` of `T = (P, R) / q`.
fn automorphism_numerators(lam: &Rational, a: &[GaussianRational], u: &CMatrix, sigma: i32, form: SignatureForm, cap: u32) -> HoloMapJet {
    let n = form.n;
    let lam_g = GaussianRational::from_real(lam.clone());
    let mut comps = Vec::with_capacity(n + 1);
    for k in 0..n {
        let mut num = TruncatedHoloSeries::zero(n, cap);
        for j in 0..n {
            let ujk = u.get(j, k);
            if ujk.is_zero() {
                continue;
            }
            num.add_term(HoloKey::z(n, j), &lam_g * ujk);
            num.add_term(HoloKey::w(n), &(&lam_g * &a[j]) * ujk);
        }
        comps.push(num);
    }
    comps.push(TruncatedHoloSeries::monomial(n, cap, HoloKey::w(n), GaussianRational::from_real(lam * lam * Rational::from_integer(sigma.into()))));
    HoloMapJet { source_n: n, cap, components: comps }
}

/// Builds the jet of `(P, R) / q` and verifies it exactly: `q * jet = (P, R)`
/// to degree D, and `Im(R q̄) - <P, P̄>_l = sigma lam^2 (Im w - <z, z̄>_l)`.
/// Dividing the second identity by `|q|^2` gives quadric preservation.
fn automorphism_jet(
    lam: &Rational,
    r: &Rational,
    a: &[GaussianRational],
    u: &CMatrix,
    sigma: i32,
    form: SignatureForm,
    cap: u32,
) -> Result<HoloMapJet> {
    let n = form.n;
    let q = denominator(r, a, form, cap);
    let q_inv = q.invert_unit()?;
    let nums = automorphism_numerators(lam, a, u, sigma, form, cap);
    let comps = nums.components.iter().map(|p| p.mul(&q_inv)).collect::<Result<Vec<_>>>()?;
    for (c, p) in comps.iter().zip(&nums.components) {
        if let Some(d) = c.mul(&q)?.sub(p)?.min_weight() {
            return Err(Error::IdentityFailed { degree: d, what: "q times the jet differs from the numerator".into() });
        }
    }
    let mut lhs = hermitian_product(nums.last(), &q)?.imag_part().into_complex();
    for j in 0..n {
        let p = hermitian_product(&nums.components[j], &nums.components[j])?;
        lhs = if j < form.ell { lhs.add(&p)? } else { lhs.sub(&p)? };
    }
    let lam2 = lam * lam * Rational::from_integer(sigma.into());
    let rhs = quadric_defect(&HoloMapJet::identity(n, cap), form)?.scale(&lam2);
    if let Some(d) = TruncatedRealSeries::from_complex(lhs)?.sub(&rhs)?.min_weight() {
        return Err(Error::IdentityFailed { degree: d, what: "automorphism does not preserve the quadric".into() });
    }
    HoloMapJet::new(n, cap, comps)
}

/// `Im G - <F, F̄>_l'` for a map `H = (F, G)` into `C^{N+1}` with target
/// form `target`, as a real series in the source variables.
pub fn quadric_defect(h: &HoloMapJet, target: SignatureForm) -> Result<TruncatedRealSeries> {
    let nn = h.target_dim() - 1;
    if nn != target.n {
        return Err(Error::Mismatch(format!("map has {nn} + 1 components, target form has n = {}", target.n)));
    }
    let (n, cap) = (h.source_n, h.cap);
    let mut acc = h.last().to_complex().imag_part().into_complex();
    for j in 0..nn {
        let p = hermitian_product(&h.components[j], &h.components[j])?;
        acc = if j < target.ell { acc.add(&p)? } else { acc.sub(&p)? };
    }
    debug_assert_eq!((acc.n(), acc.cap()), (n, cap));
    TruncatedRealSeries::from_complex(acc)
}

/// `sigma lam^{-2} |q|^2 A2(T, T̄)`: the series `A1` of the hypersurface
/// `T^{-1}(M2)` when `M2 = {Im w = <z,z̄>_l + A2}`.
pub fn transform_defining(a2: &TruncatedRealSeries, t: &QuadricAutomorphism) -> Result<TruncatedRealSeries> {
    if a2.n() != t.form.n || a2.cap() != t.cap() {
        return Err(Error::Mismatch("series and automorphism have different (n, D)".into()));
    }
    if let Some(m) = a2.min_weight() {
        if m < 4 {
            return Err(Error::LowOrder(format!("defining series has a term of weighted degree {m} < 4")));
        }
    }
    let q = t.denominator();
    let composed = compose_real_with_map(a2, &t.jet, Some(&q))?;
    let factor = Rational::from_integer(t.sigma.into()) / (&t.lam * &t.lam);
    let out = TruncatedRealSeries::from_complex(composed)?.scale(&factor);
    debug_assert!(out.min_weight().map_or(true, |m| m >= 4));
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelForm {
    /// `v = <z, z̄>_l + A0(z, z̄, u)`
    Graph,
    /// `Im w = <z, z̄>_l + A(z, z̄, w, w̄)`
    Full,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HypersurfaceModel {
    pub form: SignatureForm,
    pub a: TruncatedRealSeries,
    pub kind: ModelForm,
}

impl HypersurfaceModel {
    pub fn new(form: SignatureForm, a: TruncatedRealSeries, kind: ModelForm) -> Result<Self> {
        if a.n() != form.n {
            return Err(Error::Mismatch(format!("series has n = {}, model n = {}", a.n(), form.n)));
        }
        match kind {
            ModelForm::Full if a.domain() != Domain::ZW => {
                return Err(Error::Mismatch("full-form model needs a (z, w) series".into()))
            }
            ModelForm::Graph if a.domain() != Domain::ZU => {
                return Err(Error::Mismatch("graph-form model needs a (z, u) series".into()))
            }
            _ => {}
        }
        if let Some(m) = a.min_weight() {
            if m < 4 {
                return Err(Error::LowOrder(format!("model series has a term of weighted degree {m} <= 3")));
            }
        }
        Ok(HypersurfaceModel { form, a, kind })
    }

    pub fn quadric(form: SignatureForm, cap: u32) -> Self {
        HypersurfaceModel { form, a: TruncatedRealSeries::zero(form.n, cap), kind: ModelForm::Full }
    }

    pub fn cap(&self) -> u32 {
        self.a.cap()
    }

    /// The defining series in `(z, w)` coordinates. A graph-form `A0` is read
    /// as the `v`-independent full form via `u = (w + w̄)/2`.
    pub fn full_series(&self) -> Result<TruncatedRealSeries> {
        match self.kind {
            ModelForm::Full => Ok(self.a.clone()),
            ModelForm::Graph => self.a.u_to_w(),
        }
    }

    /// The graph-form series `Ã` with `v = <z, z̄>_l + Ã(z, z̄, u)`.
    pub fn graph_series(&self) -> Result<TruncatedRealSeries> {
        match self.kind {
            ModelForm::Graph => Ok(self.a.clone()),
            ModelForm::Full => self.a.to_graph_form(self.form.ell),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivalenceReport {
    pub equivalent: bool,
    pub invariants_match: bool,
    pub rank: (usize, usize),
    pub signature_pairs: ((usize, usize), (usize, usize)),
    /// Lowest weighted degree where `A1` and the transformed `A2` differ.
    pub first_difference: Option<u32>,
    pub warnings: Vec<String>,
}

/// Checks `A1 = transform_defining(A2, T)` exactly to degree D. Rank and the
/// unordered signature pair are compared too, but only reported.
pub fn verify_equivalence(
    m1: &HypersurfaceModel,
    m2: &HypersurfaceModel,
    t: &QuadricAutomorphism,
) -> Result<EquivalenceReport> {
    if m1.form != m2.form || m1.cap() != m2.cap() {
        return Err(Error::Mismatch("models have different (n, ell, D)".into()));
    }
    if t.form != m1.form || t.cap() != m1.cap() {
        return Err(Error::Mismatch("automorphism does not match the models".into()));
    }
    let a1 = m1.full_series()?;
    let a2 = m2.full_series()?;
    let p1 = profile(&a1);
    let p2 = profile(&a2);
    let mut warnings = Vec::new();
    let n = m1.form.n;
    let k1 = p1.rank;
    let k2 = p2.rank;
    if !crate::hermitian::in_class_h(&a1, k1) || !crate::hermitian::in_class_h(&a2, k2) {
        warnings.push("a defining series is outside the global rank class (linear terms in its span)".into());
    }
    if k1 + k2 >= n {
        warnings.push(format!("rank sum {} + {} >= n = {n}: equivalence theorem hypothesis not met", k1, k2));
    }
    let invariants_match = p1.rank == p2.rank && p1.signature_pair() == p2.signature_pair();
    let mut report = EquivalenceReport {
        equivalent: false,
        invariants_match,
        rank: (p1.rank, p2.rank),
        signature_pairs: (p1.signature_pair(), p2.signature_pair()),
        first_difference: None,
        warnings,
    };
    if !invariants_match {
        // A truncation of a finite-rank series can have larger rank than the
        // series itself, so a mismatch at degree D does not refute equivalence.
        report.warnings.push(format!(
            "rank/signature at degree {} differ: {:?} vs {:?}",
            m1.cap(),
            (p1.rank, p1.signature_pair()),
            (p2.rank, p2.signature_pair())
        ));
    }
    let transformed = transform_defining(&a2, t)?;
    report.first_difference = a1.as_complex().first_difference(transformed.as_complex());
    report.equivalent = report.first_difference.is_none();
    Ok(report)
}

/// `J`-skew-Hermitian `S` with small rational entries: `S = J K`, `K^* = -K`.
fn random_skew(form: SignatureForm, rng: &mut impl Rng) -> CMatrix {
    let n = form.n;
    let small = |rng: &mut dyn rand::RngCore| -> Rational {
        let num: i64 = rng.gen_range(-2..=2);
        let den: i64 = rng.gen_range(1..=3);
        Rational::new(num.into(), den.into())
    };
    let mut k = CMatrix::zeros(n, n);
    for i in 0..n {
        // purely imaginary diagonal
        k.set(i, i, GaussianRational::new(Rational::zero(), small(rng)));
        for j in i + 1..n {
            // sparse off-diagonal keeps Cayley denominators small
            if !rng.gen_bool(0.4) {
                continue;
            }
            let v = GaussianRational::new(small(rng), small(rng));
            k.set(j, i, -v.conj());
            k.set(i, j, v);
        }
    }
    form.matrix().mul(&k)
}

/// Exact `U` with `U J U^* = sigma J`: a Cayley transform
/// `(I - S)(I + S)^{-1}` of a random `J`-skew-Hermitian `S`, followed by the
/// block swap of the two halves when `sigma = -1`.
pub fn random_isometry(form: SignatureForm, sigma: i32, rng: &mut impl Rng) -> Result<CMatrix> {
    check_sigma(sigma, form)?;
    let n = form.n;
    let id = CMatrix::identity(n);
    for _ in 0..64 {
        let s = random_skew(form, rng);
        let Some(inv) = id.add(&s).inverse() else { continue };
        let mut u = id.sub(&s).mul(&inv);
        if sigma == -1 {
            u = u.mul(&block_swap(n));
        }
        check_isometry(&u, form, sigma)?;
        return Ok(u);
    }
    Err(Error::Singular("I + S singular in every Cayley attempt".into()))
}

/// Cayley transform of a given `J`-skew-Hermitian `S`.
pub fn cayley(s: &CMatrix) -> Result<CMatrix> {
    let id = CMatrix::identity(s.rows());
    let inv = id.add(s).inverse().ok_or_else(|| Error::Singular("I + S is singular".into()))?;
    Ok(id.sub(s).mul(&inv))
}

/// Permutation `(z_1..z_l, z_{l+1}..z_n) -> (z_{l+1}..z_n, z_1..z_l)` for
/// `n = 2l`, which reverses the sign of `<z, z̄>_l`.
pub fn block_swap(n: usize) -> CMatrix {
    let h = n / 2;
    let mut p = CMatrix::zeros(n, n);
    for j in 0..n {
        p.set(j, (j + h) % n, GaussianRational::one());
    }
    p
}

/// `Im w - <z, z̄>_l` as a real series.
pub fn quadric_defining_function(form: SignatureForm, cap: u32) -> Result<TruncatedRealSeries> {
    let im_w = TruncatedHoloSeries::w(form.n, cap).to_complex().imag_part();
    let h = TruncatedRealSeries::from_complex(hermitian_form_series(form.n, cap, form.ell, Domain::ZW))?;
    im_w.sub(&h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{rat, rat_int};
    use crate::series::{MultiIndex, RealKey};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(a: i64, b: i64) -> GaussianRational {
        GaussianRational::from_ints(a, b)
    }

    #[test]
    fn scalar_product_examples() {
        let a = [g(1, 0), g(2, 0)];
        let b = [g(3, 0), g(4, 0)];
        assert_eq!(scalar_product(&a, &b, SignatureForm::new(2, 0).unwrap()).unwrap(), g(11, 0));
        assert_eq!(scalar_product(&a, &b, SignatureForm::new(2, 1).unwrap()).unwrap(), g(5, 0));
        let z = [g(0, 0), g(0, 0)];
        assert!(scalar_product(&z, &b, SignatureForm::new(2, 1).unwrap()).unwrap().is_zero());
        assert!(scalar_product(&a[..1], &b, SignatureForm::new(2, 1).unwrap()).is_err());
    }

    #[test]
    fn identity_and_dilation() {
        let form = SignatureForm::new(2, 0).unwrap();
        let t = QuadricAutomorphism::new(rat_int(1), rat_int(0), vec![g(0, 0); 2], CMatrix::identity(2), 1, form, 6).unwrap();
        assert!(t.is_identity());
        let d = QuadricAutomorphism::new(rat_int(2), rat_int(0), vec![g(0, 0); 2], CMatrix::identity(2), 1, form, 6).unwrap();
        assert_eq!(d.denominator(), TruncatedHoloSeries::one(2, 6));
        assert_eq!(d.jet.components[0], TruncatedHoloSeries::z(2, 6, 0).scale(&g(2, 0)));
        assert_eq!(d.jet.components[2], TruncatedHoloSeries::w(2, 6).scale(&g(4, 0)));
    }

    #[test]
    fn rejects_bad_parameters() {
        let form = SignatureForm::new(2, 0).unwrap();
        let bad_u = CMatrix::diag(&[g(2, 0), g(1, 0)]);
        assert!(matches!(
            QuadricAutomorphism::new(rat_int(1), rat_int(0), vec![g(0, 0); 2], bad_u, 1, form, 6),
            Err(Error::Isometry(_))
        ));
        assert!(matches!(
            QuadricAutomorphism::new(rat_int(1), rat_int(0), vec![g(0, 0); 2], block_swap(2), -1, form, 6),
            Err(Error::SigmaSignature { .. })
        ));
    }

    #[test]
    fn swap_reverses_form() {
        let form = SignatureForm::new(2, 1).unwrap();
        let p = block_swap(2);
        let j = form.matrix();
        assert_eq!(p.mul(&j).mul(&p.adjoint()), j.scale(&g(-1, 0)));
    }

    #[test]
    fn random_automorphisms_preserve_quadric_and_recover() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, ell, sigma) in [(2, 0, 1), (2, 1, -1), (3, 1, 1)] {
            let form = SignatureForm::new(n, ell).unwrap();
            let u = random_isometry(form, sigma, &mut rng).unwrap();
            let a: Vec<_> = (0..n).map(|j| g(j as i64 - 1, 1)).collect();
            let t = QuadricAutomorphism::new(rat(3, 2), rat(-1, 3), a, u, sigma, form, 6).unwrap();
            let back = QuadricAutomorphism::from_jet(&t.jet, form).unwrap();
            assert_eq!(back, t);
            let inv = t.inverse().unwrap();
            assert!(t.compose(&inv).unwrap().is_identity());
            assert_eq!(inv.jet.compose(&t.jet).unwrap(), HoloMapJet::identity(n, 6));
            let two = t.compose(&t).unwrap();
            assert_eq!(two.jet, t.jet.compose(&t.jet).unwrap());
            assert_eq!(t.apply(&t.jet).unwrap(), two.jet);
        }
    }

    #[test]
    fn transform_dilation() {
        let form = SignatureForm::new(2, 0).unwrap();
        let d = QuadricAutomorphism::new(rat_int(2), rat_int(0), vec![g(0, 0); 2], CMatrix::identity(2), 1, form, 6).unwrap();
        let e = MultiIndex(vec![2, 0]);
        let a = TruncatedRealSeries::from_terms(2, 6, Domain::ZW, [(RealKey::new(e.clone(), e, 0, 0), g(1, 0))]).unwrap();
        assert_eq!(transform_defining(&a, &d).unwrap(), a.scale(&rat_int(4)));
        let id = QuadricAutomorphism::identity(form, 6);
        assert_eq!(transform_defining(&a, &id).unwrap(), a);
    }
}
