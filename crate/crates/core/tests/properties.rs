//! Algebraic invariants under random inputs. Structured objects are built from
//! a proptest-drawn seed through the crate's own generators.

use proptest::prelude::*;

use crnf::embedding::{ellipsoid_map, ellipsoid_residual};
use crnf::gaussian::rat;
use crnf::hermitian::{decompose, in_class_h, profile, recompose};
use crnf::json::{real_from_json, real_to_json};
use crnf::quadric::{transform_defining, SignatureForm};
use crnf::random::{instance_rng, random_automorphism, random_h_class, random_s_tilde};

fn form_for(n: usize, ell: usize) -> SignatureForm {
    SignatureForm::new(n, ell.min(n / 2)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn decomposition_recomposes_exactly(seed in any::<u64>(), n in 1usize..=3, k in 1usize..=3) {
        let (a, _, _) = random_h_class(n, 6, k, &mut instance_rng(seed, 0));
        let p = profile(&a);
        prop_assert_eq!(p.rank, p.neg_count + p.pos_count);
        prop_assert!(p.rank <= k);
        prop_assert!(in_class_h(&a, k));
        let d = decompose(&a);
        prop_assert_eq!(d.rank(), p.rank);
        prop_assert_eq!(d.s, p.neg_count);
        prop_assert_eq!(recompose(&d), a);
    }

    #[test]
    fn signature_flips_under_negation(seed in any::<u64>(), k in 1usize..=3) {
        let (a, _, _) = random_h_class(2, 6, k, &mut instance_rng(seed, 1));
        let (p, q) = (profile(&a), profile(&a.neg()));
        prop_assert_eq!(p.rank, q.rank);
        prop_assert_eq!(p.neg_count, q.pos_count);
    }

    #[test]
    fn automorphism_inverse_and_composition(seed in any::<u64>(), n in 1usize..=3, ell in 0usize..=1) {
        let form = form_for(n, ell);
        let mut rng = instance_rng(seed, 2);
        let t = random_automorphism(form, 5, true, &mut rng).unwrap();
        let s = random_automorphism(form, 5, true, &mut rng).unwrap();
        t.check_preserves_quadric().unwrap();
        prop_assert!(t.inverse().unwrap().compose(&t).unwrap().is_identity());
        prop_assert!(t.compose(&t.inverse().unwrap()).unwrap().is_identity());
        // projective composition agrees with composing jets
        prop_assert_eq!(t.compose(&s).unwrap().jet, t.jet.compose(&s.jet).unwrap());
    }

    #[test]
    fn transform_is_undone_by_the_inverse(seed in any::<u64>(), ell in 0usize..=1) {
        let form = form_for(2, ell);
        let mut rng = instance_rng(seed, 3);
        let (a, _, _) = random_h_class(2, 6, 1, &mut rng);
        let t = random_automorphism(form, 6, true, &mut rng).unwrap();
        let moved = transform_defining(&a, &t).unwrap();
        prop_assert_eq!(transform_defining(&moved, &t.inverse().unwrap()).unwrap(), a);
    }

    #[test]
    fn restriction_is_linear(seed in any::<u64>(), ell in 0usize..=1, c in -4i64..=4) {
        let mut rng = instance_rng(seed, 4);
        let a = random_s_tilde(2, 6, 1, &mut rng);
        let b = random_s_tilde(2, 6, 1, &mut rng);
        let lhs = a.add(&b.scale(&rat(c, 1))).unwrap().restrict_to_quadric(ell).unwrap();
        let rhs = a.restrict_to_quadric(ell).unwrap().add(&b.restrict_to_quadric(ell).unwrap().scale(&rat(c, 1))).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn json_round_trip(seed in any::<u64>(), n in 1usize..=3) {
        let a = random_s_tilde(n, 6, 2, &mut instance_rng(seed, 5));
        prop_assert_eq!(real_from_json(&real_to_json(&a)).unwrap(), a);
    }

    #[test]
    fn ellipsoid_residual_vanishes(mut nums in prop::collection::vec(0i64..40, 1..=3), den in 41i64..60) {
        nums.sort();
        let coeffs: Vec<_> = nums.iter().map(|&p| rat(p, den)).collect();
        let g = ellipsoid_map(&coeffs).unwrap();
        prop_assert!(ellipsoid_residual(&g, &coeffs).unwrap().is_zero());
    }
}
