//! Seeded instance generators. Every campaign draws instance `i` from its own
//! ChaCha stream of the run seed, so results do not depend on scheduling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::{standardize, QuadricEmbedding};
use crate::error::Result;
use crate::gaussian::{rat, GaussianRational, Rational};
use crate::hermitian::in_class_s_tilde;
use crate::quadric::{random_isometry, HypersurfaceModel, ModelForm, QuadricAutomorphism, SignatureForm};
use crate::series::{hermitian_product, HoloKey, TruncatedHoloSeries, TruncatedRealSeries};

/// Generator for instance `index` of a run seeded with `seed`.
pub fn instance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Shape of random holomorphic polynomials: a few monomials of ordinary
/// degree at least two and weight at most `max_weight`, with Gaussian
/// integer coefficients bounded by `bound` in each part.
#[derive(Clone, Copy, Debug)]
pub struct PolyShape {
    pub max_weight: u32,
    pub terms: usize,
    pub bound: i64,
}

impl PolyShape {
    pub fn new(max_weight: u32, terms: usize) -> Self {
        PolyShape { max_weight, terms, bound: 3 }
    }
}

fn random_gaussian(rng: &mut impl Rng, bound: i64) -> GaussianRational {
    loop {
        let c = GaussianRational::from_ints(rng.gen_range(-bound..=bound), rng.gen_range(-bound..=bound));
        if !c.is_zero() {
            return c;
        }
    }
}

/// A nonzero holomorphic polynomial without constant or linear terms.
pub fn random_holo(n: usize, cap: u32, shape: PolyShape, rng: &mut impl Rng) -> TruncatedHoloSeries {
    let keys: Vec<HoloKey> = (2..=shape.max_weight.min(cap))
        .flat_map(|wt| HoloKey::of_weight(n, wt))
        .filter(|k| k.order() >= 2)
        .collect();
    assert!(!keys.is_empty(), "no admissible monomials below the weight bound");
    loop {
        let mut p = TruncatedHoloSeries::zero(n, cap);
        for _ in 0..shape.terms {
            let k = keys.choose(rng).expect("nonempty").clone();
            p.add_term(k, random_gaussian(rng, shape.bound));
        }
        if !p.is_zero() {
            return p;
        }
    }
}

/// `sum_j c_j |phi_j|^2`.
pub fn signed_sum_of_squares(n: usize, cap: u32, phis: &[TruncatedHoloSeries], signs: &[i64]) -> TruncatedRealSeries {
    let parts: Vec<(Rational, &TruncatedHoloSeries)> =
        phis.iter().zip(signs).map(|(p, &e)| (Rational::from_integer(e.into()), p)).collect();
    TruncatedRealSeries::sum_of_squares(n, cap, &parts).expect("shared (n, D)")
}

/// `phi psī + psi phī`.
pub fn real_product(phi: &TruncatedHoloSeries, psi: &TruncatedHoloSeries) -> TruncatedRealSeries {
    let s = hermitian_product(phi, psi).and_then(|a| a.add(&hermitian_product(psi, phi)?)).expect("shared (n, D)");
    TruncatedRealSeries::from_complex(s).expect("symmetrized product is real")
}

/// A nonzero member of the all-slices rank class with bound `k >= 1`: either
/// signed squares of `k` random polynomials or `floor(k/2)` symmetrized
/// products plus one square when `k` is odd. Membership is checked.
pub fn random_s_tilde(n: usize, cap: u32, k: usize, rng: &mut impl Rng) -> TruncatedRealSeries {
    assert!(k >= 1, "class bound must be positive");
    let shape = PolyShape::new(cap.saturating_sub(2).max(2), 3);
    loop {
        let a = if rng.gen_bool(0.5) {
            let phis: Vec<_> = (0..k).map(|_| random_holo(n, cap, shape, rng)).collect();
            let signs: Vec<i64> = (0..k).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
            signed_sum_of_squares(n, cap, &phis, &signs)
        } else {
            let mut a = TruncatedRealSeries::zero(n, cap);
            for _ in 0..k / 2 {
                let (p, q) = (random_holo(n, cap, shape, rng), random_holo(n, cap, shape, rng));
                a = a.add(&real_product(&p, &q)).expect("shared (n, D)");
            }
            if k % 2 == 1 {
                let p = random_holo(n, cap, shape, rng);
                a = a.add(&signed_sum_of_squares(n, cap, &[p], &[1])).expect("shared (n, D)");
            }
            a
        };
        if !a.is_zero() && in_class_s_tilde(&a, k) {
            return a;
        }
    }
}

/// `sum_{j<k} e_j |phi_j|^2` with random signs: a member of the global rank
/// class. The `phi_j` have weight at most `D/2`, so no square is truncated.
pub fn random_h_class(n: usize, cap: u32, k: usize, rng: &mut impl Rng) -> (TruncatedRealSeries, Vec<TruncatedHoloSeries>, Vec<i64>) {
    let shape = PolyShape::new((cap / 2).max(2), 3);
    let phis: Vec<_> = (0..k).map(|_| random_holo(n, cap, shape, rng)).collect();
    let signs: Vec<i64> = (0..k).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
    (signed_sum_of_squares(n, cap, &phis, &signs), phis, signs)
}

/// Random isotropy automorphism: small positive `lam`, small rational `r`,
/// Gaussian integer `a`, Cayley-generated `U`. `sigma = -1` is drawn with
/// probability 1/2 when the form allows it and `allow_reversal` is set.
pub fn random_automorphism(form: SignatureForm, cap: u32, allow_reversal: bool, rng: &mut impl Rng) -> Result<QuadricAutomorphism> {
    const LAMBDAS: [(i64, i64); 4] = [(1, 1), (2, 1), (1, 2), (3, 2)];
    let (p, q) = LAMBDAS[rng.gen_range(0..LAMBDAS.len())];
    let lam = rat(p, q);
    let r = rat(rng.gen_range(-3..=3), rng.gen_range(1..=3));
    let a = (0..form.n).map(|_| GaussianRational::from_ints(rng.gen_range(-1..=1), rng.gen_range(-1..=1))).collect();
    let sigma = if allow_reversal && form.allows_reversal() && rng.gen_bool(0.5) { -1 } else { 1 };
    let u = random_isometry(form, sigma, rng)?;
    QuadricAutomorphism::new(lam, r, a, u, sigma, form, cap)
}

/// A model `Im w = <z, z̄>_l + A` with `A = -sum_{j<s}|phi_j|^2 + sum_{j>=s}|phi_j|^2`
/// and the embedding `(z, phi, ±w)` into the matching quadric.
#[derive(Clone, Debug)]
pub struct EmbeddingInstance {
    pub model: HypersurfaceModel,
    pub phis: Vec<TruncatedHoloSeries>,
    pub s: usize,
    pub base: QuadricEmbedding,
}

/// With `reverse` the last component is `-w`, which swaps the signs of all
/// other components; the result is standardized either way.
pub fn embedding_instance(form: SignatureForm, cap: u32, k: usize, s: usize, reverse: bool, rng: &mut impl Rng) -> Result<EmbeddingInstance> {
    let n = form.n;
    let shape = PolyShape::new(cap.saturating_sub(2).max(2), 3);
    let phis: Vec<_> = (0..k).map(|_| random_holo(n, cap, shape, rng)).collect();
    let signs: Vec<i64> = (0..k).map(|j| if j < s { -1 } else { 1 }).collect();
    let a = signed_sum_of_squares(n, cap, &phis, &signs);
    let model = HypersurfaceModel::new(form, a, ModelForm::Full)?;
    let mut comps: Vec<TruncatedHoloSeries> = (0..n).map(|j| TruncatedHoloSeries::z(n, cap, j)).collect();
    comps.extend(phis.iter().cloned());
    let mut all_signs: Vec<i64> = (0..n).map(|j| form.sign(j)).chain(signs).collect();
    let mut g = TruncatedHoloSeries::w(n, cap);
    if reverse {
        all_signs.iter_mut().for_each(|e| *e = -*e);
        g = g.neg();
    }
    let base = standardize(n, cap, comps, &all_signs, g)?;
    Ok(EmbeddingInstance { model, phis, s, base })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_independent_of_order() {
        let a: u64 = instance_rng(7, 3).gen();
        let _: u64 = instance_rng(7, 2).gen();
        assert_eq!(a, instance_rng(7, 3).gen::<u64>());
        assert_ne!(a, instance_rng(7, 4).gen::<u64>());
    }

    #[test]
    fn generated_members_are_in_their_classes() {
        let mut rng = instance_rng(1, 0);
        for _ in 0..5 {
            let a = random_s_tilde(3, 8, 2, &mut rng);
            assert!(in_class_s_tilde(&a, 2));
            assert!(a.min_weight().unwrap() >= 4);
        }
        let (a, _, _) = random_h_class(3, 6, 2, &mut rng);
        assert!(crate::hermitian::in_class_h(&a, 2));
    }

    #[test]
    fn embedding_instances_satisfy_the_identity() {
        let mut rng = instance_rng(2, 0);
        for (ell, s, rev) in [(0, 0, false), (1, 1, false), (1, 1, true), (1, 0, true)] {
            let form = SignatureForm::new(2, ell).unwrap();
            let inst = embedding_instance(form, 6, 2, s, rev, &mut rng).unwrap();
            inst.base.check_identity(&inst.model).unwrap();
        }
    }
}
