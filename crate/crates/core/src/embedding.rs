//! Embeddings of hypersurface germs into hyperquadrics: construction from a
//! Hermitian decomposition, normalization of the first jets, rigidity
//! factorization and the mixed-signature identity.

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::chern_moser::check_normalization;
use crate::error::{Error, Result};
use crate::gaussian::{rational_sqrt, GaussianRational, Rational};
use crate::hermitian::{decompose, Decomposition};
use crate::linalg::{extend_isometry, CMatrix};
use crate::quadric::{quadric_defect, HypersurfaceModel, QuadricAutomorphism, SignatureForm};
use crate::series::{ComplexSeries, Domain, HoloKey, HoloMapJet, MultiIndex, TruncatedHoloSeries, TruncatedRealSeries};

type GR = GaussianRational;

/// A map `H = (F, G)` into `C^{N+1}` together with its target quadric.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadricEmbedding {
    pub map: HoloMapJet,
    pub target: SignatureForm,
    pub sigma: i32,
}

impl QuadricEmbedding {
    pub fn new(map: HoloMapJet, target: SignatureForm) -> Result<Self> {
        if map.target_dim() != target.n + 1 {
            return Err(Error::Mismatch(format!(
                "map has {} components, target quadric needs {}",
                map.target_dim(),
                target.n + 1
            )));
        }
        let sigma = detect_sigma(&map)?;
        Ok(QuadricEmbedding { map, target, sigma })
    }

    pub fn source_n(&self) -> usize {
        self.map.source_n
    }

    pub fn cap(&self) -> u32 {
        self.map.cap
    }

    /// Number of extra target dimensions `k = N - n`.
    pub fn codim(&self) -> usize {
        self.target.n.saturating_sub(self.map.source_n)
    }

    /// `Im G - <F, F̄>_l'` on `M`, written in the graph coordinates `(z, u)`.
    pub fn defect_on(&self, model: &HypersurfaceModel) -> Result<TruncatedRealSeries> {
        if model.form.n != self.map.source_n || model.cap() != self.map.cap {
            return Err(Error::Mismatch("embedding and model have different (n, D)".into()));
        }
        let graph = model.graph_series()?;
        quadric_defect(&self.map, self.target)?.restrict_to_graph(model.form.ell, &graph)
    }

    pub fn check_identity(&self, model: &HypersurfaceModel) -> Result<()> {
        match self.defect_on(model)?.min_weight() {
            None => Ok(()),
            Some(d) => Err(Error::IdentityFailed { degree: d, what: "map does not send M into the quadric".into() }),
        }
    }
}

/// True iff the last component has a nonzero differential at 0.
pub fn check_transversality(h: &HoloMapJet) -> bool {
    h.last().linear_coeffs().iter().any(|c| !c.is_zero())
}

/// Sign of `dG/dw(0)`.
pub fn detect_sigma(h: &HoloMapJet) -> Result<i32> {
    let gw = h.last().coeff(&HoloKey::w(h.source_n));
    if gw.is_zero() {
        return Err(Error::Transversality("dG/dw(0) = 0".into()));
    }
    if !gw.is_real() {
        return Err(Error::Precondition(format!("dG/dw(0) = {gw} is not real")));
    }
    Ok(if gw.re.is_negative() { -1 } else { 1 })
}

/// Arranges components with diagonal signs `signs` (one per `F`-component)
/// into the standard order, negatives first. When negatives are the majority
/// the last component is negated, which flips every sign.
pub fn standardize(
    source_n: usize,
    cap: u32,
    f: Vec<TruncatedHoloSeries>,
    signs: &[i64],
    g: TruncatedHoloSeries,
) -> Result<QuadricEmbedding> {
    if f.len() != signs.len() {
        return Err(Error::Mismatch("one sign per component is needed".into()));
    }
    let big_n = f.len();
    let mut neg = signs.iter().filter(|&&s| s < 0).count();
    let (g, flip) = if 2 * neg > big_n { (g.neg(), -1) } else { (g, 1) };
    if flip < 0 {
        neg = big_n - neg;
    }
    let (mut first, mut rest) = (Vec::new(), Vec::new());
    for (c, s) in f.into_iter().zip(signs) {
        if s * flip < 0 {
            first.push(c);
        } else {
            rest.push(c);
        }
    }
    first.extend(rest);
    first.push(g);
    let map = HoloMapJet::new(source_n, cap, first)?;
    QuadricEmbedding::new(map, SignatureForm::new(big_n, neg)?)
}

/// `H = (z, phi, w)` for a unit-weight decomposition of `A`.
pub fn embedding_from_decomposition(form: SignatureForm, d: &Decomposition) -> Result<QuadricEmbedding> {
    if d.n != form.n {
        return Err(Error::Mismatch("decomposition and form have different n".into()));
    }
    if !d.has_unit_weights() {
        return Err(Error::Irrational("decomposition weights are not all norms in Q(i)".into()));
    }
    for (j, phi) in d.phis.iter().enumerate() {
        if phi.order().map_or(false, |o| o <= 1) {
            return Err(Error::LowOrder(format!("component {} has constant or linear terms", j + 1)));
        }
    }
    let (n, cap) = (d.n, d.cap);
    let mut comps: Vec<TruncatedHoloSeries> = (0..n).map(|j| TruncatedHoloSeries::z(n, cap, j)).collect();
    let mut signs: Vec<i64> = (0..n).map(|j| form.sign(j)).collect();
    for (j, phi) in d.phis.iter().enumerate() {
        comps.push(phi.clone());
        signs.push(if j < d.s { -1 } else { 1 });
    }
    standardize(n, cap, comps, &signs, TruncatedHoloSeries::w(n, cap))
}

/// The embedding `(z, phi, w)` built from the Hermitian decomposition of `A`,
/// checked against the defining identity.
pub fn build_embedding(model: &HypersurfaceModel) -> Result<QuadricEmbedding> {
    let a = model.full_series()?;
    let h = embedding_from_decomposition(model.form, &decompose(&a))?;
    h.check_identity(model)?;
    Ok(h)
}

/// Coordinate renumbering used by the normalization. Renumbered coordinates
/// carry the signs `(-sigma I_l, sigma I_{n-l}, -I_s, I_{N-n-s})`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Renumbering {
    pub n: usize,
    pub ell: usize,
    pub sigma: i32,
    pub s: usize,
    /// renumbered index -> standard index
    pub perm: Vec<usize>,
    pub signs: Vec<i64>,
}

impl Renumbering {
    pub fn new(n: usize, ell: usize, target: SignatureForm, sigma: i32) -> Result<Self> {
        let big_n = target.n;
        let base = if sigma > 0 { ell } else { n - ell };
        let s = target.ell.checked_sub(base).filter(|s| n + s <= big_n).ok_or_else(|| {
            Error::Precondition(format!(
                "target signature {} is incompatible with n = {n}, l = {ell}, sigma = {sigma}, N = {big_n}",
                target.ell
            ))
        })?;
        let sg = sigma as i64;
        let signs: Vec<i64> = (0..big_n)
            .map(|j| match j {
                j if j < ell => -sg,
                j if j < n => sg,
                j if j < n + s => -1,
                _ => 1,
            })
            .collect();
        let mut perm = vec![0; big_n];
        let (mut next_neg, mut next_pos) = (0, target.ell);
        for (j, &e) in signs.iter().enumerate() {
            if e < 0 {
                perm[j] = next_neg;
                next_neg += 1;
            } else {
                perm[j] = next_pos;
                next_pos += 1;
            }
        }
        debug_assert_eq!(next_neg, target.ell);
        Ok(Renumbering { n, ell, sigma, s, perm, signs })
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(j, &p)| j == p)
    }

    /// `P` with `z_std = z_ren P`.
    pub fn matrix(&self) -> CMatrix {
        let mut p = CMatrix::zeros(self.perm.len(), self.perm.len());
        for (j, &k) in self.perm.iter().enumerate() {
            p.set(j, k, GR::one());
        }
        p
    }

    /// `P` extended by the fixed last coordinate.
    fn full_matrix(&self) -> CMatrix {
        let nn = self.perm.len();
        let mut p = CMatrix::zeros(nn + 1, nn + 1);
        for (j, &k) in self.perm.iter().enumerate() {
            p.set(j, k, GR::one());
        }
        p.set(nn, nn, GR::one());
        p
    }

    fn to_renumbered(&self, h: &HoloMapJet) -> Result<HoloMapJet> {
        let mut comps: Vec<TruncatedHoloSeries> = self.perm.iter().map(|&k| h.components[k].clone()).collect();
        comps.push(h.last().clone());
        HoloMapJet::new(h.source_n, h.cap, comps)
    }

    fn to_standard(&self, h: &HoloMapJet) -> Result<HoloMapJet> {
        let mut comps = vec![TruncatedHoloSeries::zero(h.source_n, h.cap); self.perm.len()];
        for (j, &k) in self.perm.iter().enumerate() {
            comps[k] = h.components[j].clone();
        }
        comps.push(h.last().clone());
        HoloMapJet::new(h.source_n, h.cap, comps)
    }
}

/// Output of the normalization: `H = T ∘ P ∘ htilde` with
/// `htilde = (z + f, phi, sigma w + g)` in renumbered coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NormalizedEmbedding {
    pub t: QuadricAutomorphism,
    pub t_inv: QuadricAutomorphism,
    pub htilde: HoloMapJet,
    pub sigma: i32,
    pub renumbering: Renumbering,
}

impl NormalizedEmbedding {
    pub fn n(&self) -> usize {
        self.htilde.source_n
    }

    pub fn f(&self) -> Vec<TruncatedHoloSeries> {
        let (n, cap) = (self.n(), self.htilde.cap);
        (0..n).map(|j| self.htilde.components[j].sub(&TruncatedHoloSeries::z(n, cap, j)).expect("same shape")).collect()
    }

    pub fn phi(&self) -> Vec<TruncatedHoloSeries> {
        let nn = self.htilde.target_dim() - 1;
        self.htilde.components[self.n()..nn].to_vec()
    }

    pub fn g(&self) -> TruncatedHoloSeries {
        let (n, cap) = (self.n(), self.htilde.cap);
        let sw = TruncatedHoloSeries::w(n, cap).scale(&GR::from(self.sigma as i64));
        self.htilde.last().sub(&sw).expect("same shape")
    }

    /// `E = (z + f, w + sigma g)`, the coordinate change in which `M` reads
    /// `Im w = <z, z̄>_l + A`.
    pub fn base_map(&self) -> HoloMapJet {
        base_map(&self.htilde, self.sigma)
    }

    /// `htilde` written back in standard target coordinates.
    pub fn htilde_standard(&self) -> Result<HoloMapJet> {
        self.renumbering.to_standard(&self.htilde)
    }
}

fn base_map(htilde: &HoloMapJet, sigma: i32) -> HoloMapJet {
    let n = htilde.source_n;
    let mut comps = htilde.components[..n].to_vec();
    comps.push(htilde.last().scale(&GR::from(sigma as i64)));
    HoloMapJet { source_n: n, cap: htilde.cap, components: comps }
}

/// Finds `T` in the isotropy group of the target quadric such that
/// `T^{-1} ∘ H`, after renumbering, is `(z + f, phi, sigma w + g)` with
/// `dphi(0) = 0` and `(f, g)` normalized.
pub fn normalize_embedding(h: &QuadricEmbedding, model: &HypersurfaceModel) -> Result<NormalizedEmbedding> {
    let (n, ell) = (model.form.n, model.form.ell);
    let cap = h.cap();
    if h.source_n() != n || model.cap() != cap {
        return Err(Error::Mismatch("embedding and model have different (n, D)".into()));
    }
    if !check_transversality(&h.map) {
        return Err(Error::Transversality("last component has vanishing differential".into()));
    }
    let sigma = detect_sigma(&h.map)?;
    let big_n = h.target.n;
    let jac = h.map.jacobian();
    if (0..n).any(|j| !jac.get(j, big_n).is_zero()) {
        return Err(Error::Precondition("last component has z-linear terms".into()));
    }
    let lam2 = jac.get(n, big_n).re.abs();
    let lam = rational_sqrt(&lam2)
        .ok_or_else(|| Error::Irrational(format!("|dG/dw(0)| = {lam2} is not a rational square")))?;
    let ren = Renumbering::new(n, ell, h.target, sigma)?;
    let inv_lam = GR::from_real(lam.recip());

    let v_rows: Vec<Vec<GR>> =
        (0..n).map(|j| ren.perm.iter().map(|&k| jac.get(j, k) * &inv_lam).collect()).collect();
    let a: Vec<GR> = ren.perm.iter().map(|&k| jac.get(n, k) * &inv_lam).collect();
    let signs: Vec<Rational> = ren.signs.iter().map(|&e| Rational::from_integer(e.into())).collect();
    for (i, vi) in v_rows.iter().enumerate() {
        for (k, vk) in v_rows.iter().enumerate() {
            let mut acc = GR::zero();
            for ((x, y), e) in vi.iter().zip(vk).zip(&signs) {
                acc += &(x * &y.conj()).scale(e);
            }
            let want = if i == k { GR::from(ren.signs[i]) } else { GR::zero() };
            if acc != want {
                return Err(Error::Isometry("first-order isometry identity fails on the z-block".into()));
            }
        }
    }
    let basis: Vec<Vec<GR>> = (0..n)
        .map(|j| (0..big_n).map(|k| if j == k { GR::one() } else { GR::zero() }).collect())
        .collect();
    let u = extend_isometry(&basis, &v_rows, &signs)
        .map_err(|e| Error::Internal(format!("extension of the z-block failed: {e}")))?;
    let u_inv = u.inverse().ok_or_else(|| Error::Internal("extended isometry is singular".into()))?;
    let b: Vec<GR> = u_inv.left_mul(&a).iter().map(|x| x * &GR::from(sigma as i64)).collect();
    let r = h.map.last().coeff(&HoloKey::new(MultiIndex::zeros(n), 2)).re / &lam2;

    let p = ren.matrix();
    let a_std = p.left_mul(&b);
    let u_std = p.transpose().mul(&u).mul(&p);
    let t = QuadricAutomorphism::new(lam, r, a_std, u_std, 1, h.target, cap)?;
    let t_inv = t.inverse()?;
    let htilde = ren.to_renumbered(&t_inv.apply(&h.map)?)?;
    let out = NormalizedEmbedding { t, t_inv, htilde, sigma, renumbering: ren };

    let lin = out.htilde.jacobian();
    for j in 0..=n {
        for k in 0..=big_n {
            let want = match (j, k) {
                (j, k) if j < n && k == j => GR::one(),
                (j, k) if j == n && k == big_n => GR::from(sigma as i64),
                _ => GR::zero(),
            };
            if lin.get(j, k) != &want {
                return Err(Error::Internal("normalized map has the wrong linear part".into()));
            }
        }
    }
    if out.phi().iter().any(|p| !p.constant_term().is_zero()) {
        return Err(Error::Internal("normalized phi has a constant term".into()));
    }
    check_normalization(&out.f(), &out.g())?;
    Ok(out)
}

/// `phi ∘ E^{-1}` for a normalized map with base map `E`.
fn induced_phis(htilde: &HoloMapJet, sigma: i32) -> Result<Vec<TruncatedHoloSeries>> {
    let e_inv = base_map(htilde, sigma).invert()?;
    let n = htilde.source_n;
    let nn = htilde.target_dim() - 1;
    htilde.components[n..nn].iter().map(|p| p.substitute(&e_inv)).collect()
}

/// Signed sum of squares `-sum_{j<s}|p_j|^2 + sum_{j>=s}|p_j|^2` scaled by `c`.
fn signed_squares(n: usize, cap: u32, phis: &[TruncatedHoloSeries], s: usize, c: i64) -> Result<TruncatedRealSeries> {
    let parts: Vec<(Rational, &TruncatedHoloSeries)> = phis
        .iter()
        .enumerate()
        .map(|(j, p)| (Rational::from_integer((if j < s { -c } else { c }).into()), p))
        .collect();
    TruncatedRealSeries::sum_of_squares(n, cap, &parts)
}

/// The series `A` of `M` in the coordinates `E(z, w)` fixed by a normalized map.
pub fn induced_defining_series(htilde: &HoloMapJet, ell: usize, ell_prime: usize, sigma: i32) -> Result<TruncatedRealSeries> {
    let n = htilde.source_n;
    let big_n = htilde.target_dim() - 1;
    let base = if sigma > 0 { ell } else { n - ell };
    let s = ell_prime
        .checked_sub(base)
        .filter(|s| n + s <= big_n)
        .ok_or_else(|| Error::Precondition("target signature does not fit the renumbering".into()))?;
    let phis = induced_phis(htilde, sigma)?;
    signed_squares(n, htilde.cap, &phis, s, sigma as i64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Exact,
    Float,
}

/// `H2 = T ∘ L ∘ H1` where `L` is the linear embedding padding with zeros.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RigidityFactorization {
    pub t: QuadricAutomorphism,
    pub residual_exact: bool,
    pub regime: Regime,
    /// `W` with `phi_hat_1 = phi_tilde_2 W` (row convention).
    pub unitary_match: CMatrix,
    pub perm1: Vec<usize>,
    pub perm2: Vec<usize>,
    pub sigma: i32,
    pub warnings: Vec<String>,
}

/// Linear embedding of `C^{N1+1}` into `C^{N2+1}` filling zeros before the last slot.
pub fn linear_embedding(cap: u32, n1: usize, n2: usize) -> Result<HoloMapJet> {
    HoloMapJet::linear(n1, cap, &linear_matrix(n1, n2))
}

fn linear_matrix(n1: usize, n2: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n1 + 1, n2 + 1);
    for j in 0..n1 {
        m.set(j, j, GR::one());
    }
    m.set(n1, n2, GR::one());
    m
}

/// Coefficient rows of a tuple of series, one row per monomial in the union
/// of supports, padded with zero columns to `width`.
fn coefficient_rows(parts: &[&[TruncatedHoloSeries]], width: usize) -> Vec<(HoloKey, Vec<GR>)> {
    let mut keys = std::collections::BTreeSet::new();
    for group in parts {
        for p in group.iter() {
            keys.extend(p.terms().keys().cloned());
        }
    }
    keys.into_iter()
        .map(|k| {
            let mut row: Vec<GR> = parts.iter().flat_map(|g| g.iter().map(|p| p.coeff(&k))).collect();
            row.resize(width, GR::zero());
            (k, row)
        })
        .collect()
}

fn isometry_from_series(
    src: &[&[TruncatedHoloSeries]],
    dst: &[&[TruncatedHoloSeries]],
    width: usize,
) -> Result<CMatrix> {
    let s_rows = coefficient_rows(src, width);
    let d_rows = coefficient_rows(dst, width);
    let mut keys: Vec<HoloKey> = s_rows.iter().chain(&d_rows).map(|(k, _)| k.clone()).collect();
    keys.sort();
    keys.dedup();
    let lookup = |rows: &[(HoloKey, Vec<GR>)], k: &HoloKey| {
        rows.iter().find(|(kk, _)| kk == k).map(|(_, r)| r.clone()).unwrap_or_else(|| vec![GR::zero(); width])
    };
    let src_rows: Vec<Vec<GR>> = keys.iter().map(|k| lookup(&s_rows, k)).collect();
    let dst_rows: Vec<Vec<GR>> = keys.iter().map(|k| lookup(&d_rows, k)).collect();
    extend_isometry(&src_rows, &dst_rows, &vec![Rational::one(); width])
}

/// Factorization `H2 = T ∘ L ∘ H1` for two embeddings of the same `M` into
/// quadrics of equal signature.
pub fn factor_rigidity(h1: &QuadricEmbedding, h2: &QuadricEmbedding, model: &HypersurfaceModel) -> Result<RigidityFactorization> {
    let n = model.form.n;
    let (k1, k2) = (h1.codim(), h2.codim());
    let mut warnings = Vec::new();
    if k1 > k2 {
        return Err(Error::Precondition(format!("k1 = {k1} exceeds k2 = {k2}; swap the embeddings")));
    }
    if h1.target.ell != model.form.ell || h2.target.ell != model.form.ell {
        return Err(Error::Precondition("both targets must have the signature of M".into()));
    }
    if k1 + k2 >= n {
        warnings.push(format!("k1 + k2 = {} is not below n = {n}; rigidity is not guaranteed", k1 + k2));
    }
    let nz1 = normalize_embedding(h1, model)?;
    let nz2 = normalize_embedding(h2, model)?;
    let phi1 = nz1.phi();
    let phi2 = nz2.phi();
    let phis_vanish = phi1.iter().chain(&phi2).all(TruncatedHoloSeries::is_zero);
    if nz1.sigma != nz2.sigma {
        return Err(Error::Precondition(if phis_vanish {
            "embeddings have opposite sigma and M is the quadric; use the linear-branch factorization".into()
        } else {
            "embeddings have opposite sigma: rigidity hypotheses are violated".into()
        }));
    }
    let e1 = nz1.base_map();
    if let Some(d) = e1.first_difference(&nz2.base_map()) {
        return Err(Error::IdentityFailed { degree: d, what: "(F, G)-parts of the normalized maps differ".into() });
    }
    let pt1 = induced_phis(&nz1.htilde, nz1.sigma)?;
    let pt2 = induced_phis(&nz2.htilde, nz2.sigma)?;
    let cap = h1.cap();
    let gram1 = signed_squares(n, cap, &pt1, 0, 1)?;
    let gram2 = signed_squares(n, cap, &pt2, 0, 1)?;
    if let Some(d) = gram1.sub(&gram2)?.min_weight() {
        return Err(Error::IdentityFailed { degree: d, what: "sums of squares of the induced components differ".into() });
    }
    // phi_hat_1 = phi_tilde_2 W with phi_hat_1 padded to k2 components
    let w = isometry_from_series(&[&pt2], &[&pt1], k2)?;

    let (n1, n2) = (h1.target.n, h2.target.n);
    let mut md = CMatrix::identity(n2 + 1);
    for i in 0..k2 {
        for j in 0..k2 {
            md.set(n + i, n + j, w.get(i, j).clone());
        }
    }
    let md_inv = md.inverse().ok_or_else(|| Error::Internal("matching matrix is singular".into()))?;
    let p1 = nz1.renumbering.full_matrix();
    let p2 = nz2.renumbering.full_matrix();
    let lambda = p1.transpose().mul(&linear_matrix(n1, n2)).mul(&md_inv).mul(&p2);
    let k = p2.transpose().mul(&md_inv).mul(&p2);
    if linear_matrix(n1, n2).mul(&k) != lambda {
        return Err(Error::Internal("renumberings of the two targets are not compatible".into()));
    }
    let t1_inv = &nz1.t_inv;
    if t1_inv.sigma != 1 {
        return Err(Error::Internal("normalizing automorphism reverses orientation".into()));
    }
    let mut a_hat = t1_inv.a.clone();
    a_hat.resize(n2, GR::zero());
    let mut u_hat = CMatrix::identity(n2);
    for i in 0..n1 {
        for j in 0..n1 {
            u_hat.set(i, j, t1_inv.u.get(i, j).clone());
        }
    }
    let t_hat = QuadricAutomorphism::new(t1_inv.lam.clone(), t1_inv.r.clone(), a_hat, u_hat, 1, h2.target, cap)?;
    let mut k_block = CMatrix::zeros(n2, n2);
    for i in 0..n2 {
        for j in 0..n2 {
            k_block.set(i, j, k.get(i, j).clone());
        }
    }
    let k_aut = QuadricAutomorphism::new(Rational::one(), Rational::zero(), vec![GR::zero(); n2], k_block, 1, h2.target, cap)?;
    let t = nz2.t.compose(&k_aut.compose(&t_hat)?)?;

    let l_h1 = linear_embedding(cap, n1, n2)?.compose(&h1.map)?;
    let residual_exact = t.apply(&l_h1)?.first_difference(&h2.map).is_none();
    Ok(RigidityFactorization {
        t,
        residual_exact,
        regime: Regime::Exact,
        unitary_match: w,
        perm1: nz1.renumbering.perm.clone(),
        perm2: nz2.renumbering.perm.clone(),
        sigma: nz1.sigma,
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearBranch {
    /// `L(z, w) = (z, 0, w)`
    L,
    /// `L_-(z, w) = (z_{l+1..n}, z_{1..l}, 0, -w)`
    LMinus,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadricFactorization {
    pub branch: LinearBranch,
    pub t: QuadricAutomorphism,
    pub residual_exact: bool,
    pub perm: Vec<usize>,
}

/// `L` or `L_-` into `C^{N+1}`.
pub fn linear_branch_map(form: SignatureForm, big_n: usize, cap: u32, branch: LinearBranch) -> Result<HoloMapJet> {
    let (n, ell) = (form.n, form.ell);
    let mut comps = vec![TruncatedHoloSeries::zero(n, cap); big_n + 1];
    match branch {
        LinearBranch::L => {
            for (j, c) in comps.iter_mut().enumerate().take(n) {
                *c = TruncatedHoloSeries::z(n, cap, j);
            }
            comps[big_n] = TruncatedHoloSeries::w(n, cap);
        }
        LinearBranch::LMinus => {
            for j in 0..n {
                let src = if j < n - ell { ell + j } else { j - (n - ell) };
                comps[j] = TruncatedHoloSeries::z(n, cap, src);
            }
            comps[big_n] = TruncatedHoloSeries::w(n, cap).neg();
        }
    }
    HoloMapJet::new(n, cap, comps)
}

/// For `M` the quadric itself: `T^{-1} ∘ H` is one of the linear embeddings
/// `L` (sigma = 1) or `L_-` (sigma = -1).
pub fn factor_quadric_embedding(h: &QuadricEmbedding, model: &HypersurfaceModel) -> Result<QuadricFactorization> {
    if !model.a.is_zero() {
        return Err(Error::Precondition("model is not the quadric".into()));
    }
    if h.target.ell != model.form.ell {
        return Err(Error::Precondition("target must have the signature of the quadric".into()));
    }
    let nz = normalize_embedding(h, model)?;
    let trivial = nz.f().iter().chain(&nz.phi()).chain(std::iter::once(&nz.g())).all(TruncatedHoloSeries::is_zero);
    if !trivial {
        let d = nz.htilde.first_difference(&{
            let mut id = nz.htilde.clone();
            for (j, c) in id.components.iter_mut().enumerate() {
                *c = if j < model.form.n {
                    TruncatedHoloSeries::z(model.form.n, h.cap(), j)
                } else if j + 1 == nz.htilde.target_dim() {
                    TruncatedHoloSeries::w(model.form.n, h.cap()).scale(&GR::from(nz.sigma as i64))
                } else {
                    TruncatedHoloSeries::zero(model.form.n, h.cap())
                };
            }
            id
        });
        return Err(Error::IdentityFailed { degree: d.unwrap_or(0), what: "normalized map is not linear".into() });
    }
    let branch = if nz.sigma > 0 { LinearBranch::L } else { LinearBranch::LMinus };
    let expected = linear_branch_map(model.form, h.target.n, h.cap(), branch)?;
    let residual_exact = nz.t_inv.apply(&h.map)?.first_difference(&expected).is_none();
    Ok(QuadricFactorization { branch, t: nz.t.clone(), residual_exact, perm: nz.renumbering.perm.clone() })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixedSignatureReport {
    pub holds: bool,
    pub first_difference: Option<u32>,
    pub base_maps_agree: bool,
    pub s: (usize, usize),
    /// `W` with `(phi_1^1, phi_2^2) W = (phi_2^1, phi_1^2)` after zero padding.
    pub partial_isometry: Option<CMatrix>,
    /// The scalar `u` when both sides of the matching have one component.
    pub unimodular: Option<GR>,
    pub warnings: Vec<String>,
}

/// Compares `<phi_1, phi_1>_{s_1}` with `<phi_2, phi_2>_{s_2}` for two
/// embeddings with targets of signatures `l <= l_q < n - l`. Coordinates are
/// fixed by the normalization of the first embedding.
pub fn mixed_signature_check(h1: &QuadricEmbedding, h2: &QuadricEmbedding, model: &HypersurfaceModel) -> Result<MixedSignatureReport> {
    let (n, ell) = (model.form.n, model.form.ell);
    let mut warnings = Vec::new();
    for h in [h1, h2] {
        let lq = h.target.ell;
        if lq < ell || lq >= n - ell {
            return Err(Error::Precondition(format!("target signature {lq} is outside [{ell}, {})", n - ell)));
        }
    }
    if h1.codim() + h2.codim() >= n {
        warnings.push(format!("k1 + k2 = {} is not below n = {n}", h1.codim() + h2.codim()));
    }
    let nz1 = normalize_embedding(h1, model)?;
    let nz2 = normalize_embedding(h2, model)?;
    if nz1.sigma != 1 || nz2.sigma != 1 {
        return Err(Error::Precondition("both embeddings must preserve orientation".into()));
    }
    let base_maps_agree = nz1.base_map().first_difference(&nz2.base_map()).is_none();
    let e_inv = nz1.base_map().invert()?;
    let pull = |nz: &NormalizedEmbedding| -> Result<Vec<TruncatedHoloSeries>> {
        nz.phi().iter().map(|p| p.substitute(&e_inv)).collect()
    };
    let (pt1, pt2) = (pull(&nz1)?, pull(&nz2)?);
    let (s1, s2) = (nz1.renumbering.s, nz2.renumbering.s);
    let cap = h1.cap();
    let lhs = signed_squares(n, cap, &pt1, s1, 1)?;
    let rhs = signed_squares(n, cap, &pt2, s2, 1)?;
    let mut first_difference = lhs.sub(&rhs)?.min_weight();
    if !base_maps_agree {
        let d = nz1.base_map().first_difference(&nz2.base_map());
        first_difference = match (first_difference, d) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
    let holds = first_difference.is_none();
    let (mut partial_isometry, mut unimodular) = (None, None);
    if holds {
        let src_dim = s1 + (pt2.len() - s2);
        let dst_dim = s2 + (pt1.len() - s1);
        let width = src_dim.max(dst_dim);
        if width > 0 {
            let w = isometry_from_series(&[&pt1[..s1], &pt2[s2..]], &[&pt2[..s2], &pt1[s1..]], width)?;
            if src_dim == 1 && dst_dim == 1 {
                let u = w.get(0, 0).clone();
                if u.norm_sqr() != Rational::one() {
                    return Err(Error::Internal("scalar matching is not unimodular".into()));
                }
                unimodular = Some(u);
            }
            partial_isometry = Some(w);
        }
    }
    Ok(MixedSignatureReport { holds, first_difference, base_maps_agree, s: (s1, s2), partial_isometry, unimodular, warnings })
}

/// `G(Z) = (Z, i(1 - 2 sum A_j Z_j^2))` with `Z_{n+1}` in the `w` slot.
pub fn ellipsoid_map(coeffs: &[Rational]) -> Result<HoloMapJet> {
    check_ellipsoid(coeffs)?;
    let m = coeffs.len();
    let n = m - 1;
    let cap = 4;
    let vars: Vec<TruncatedHoloSeries> =
        (0..m).map(|j| if j < n { TruncatedHoloSeries::z(n, cap, j) } else { TruncatedHoloSeries::w(n, cap) }).collect();
    let mut last = TruncatedHoloSeries::constant(n, cap, GR::i());
    for (a, z) in coeffs.iter().zip(&vars) {
        let c = GR::new(Rational::zero(), Rational::from_integer((-2).into()) * a);
        last = last.add(&z.mul(z)?.scale(&c))?;
    }
    let mut comps = vars;
    comps.push(last);
    HoloMapJet::new(n, cap, comps)
}

fn check_ellipsoid(coeffs: &[Rational]) -> Result<()> {
    if coeffs.is_empty() {
        return Err(Error::Precondition("at least one coefficient is needed".into()));
    }
    let ordered = coeffs.windows(2).all(|w| w[0] <= w[1]);
    if coeffs[0].is_negative() || !ordered || coeffs[coeffs.len() - 1] >= Rational::one() {
        return Err(Error::Precondition("coefficients must satisfy 0 <= A_1 <= ... <= A_{n+1} < 1".into()));
    }
    Ok(())
}

/// `Im G_{n+2} - sum |Z_j|^2 + rho` with
/// `rho = sum (A_j Z_j^2 + A_j Z̄_j^2 + |Z_j|^2) - 1`; zero for the ellipsoid map.
pub fn ellipsoid_residual(map: &HoloMapJet, coeffs: &[Rational]) -> Result<ComplexSeries> {
    let m = coeffs.len();
    if map.source_n + 1 != m || map.target_dim() != m + 1 {
        return Err(Error::Mismatch("map does not match the number of coefficients".into()));
    }
    let (n, cap) = (map.source_n, map.cap);
    let mut acc = map.last().to_complex().imag_part().into_complex();
    acc = acc.sub(&ComplexSeries::constant(n, cap, Domain::ZW, GR::one()))?;
    for (j, a) in coeffs.iter().enumerate() {
        let z = if j < n { TruncatedHoloSeries::z(n, cap, j) } else { TruncatedHoloSeries::w(n, cap) };
        let sq = z.mul(&z)?.to_complex();
        let ag = GR::from_real(a.clone());
        acc = acc.add(&sq.scale(&ag))?.add(&sq.conj().scale(&ag))?;
    }
    Ok(acc)
}
