use proptest::prelude::*;
use qsym::lattice::{dual, enumerate_self_dual, hnf, FormLabel, HermForm};
use qsym::matalg::{char_poly, EMatrix};
use qsym::orbital::{orbit_integral_auto, orbit_integral_unit_with, OrbitalConfig};
use qsym::symspace::{
    car_from_chi, invariant, is_member, is_member_with, is_rss, lift_from_herm, poly_agree, poly_depth, random_integral_unitary, symmetrize, total_gram, SymPoint,
};
use qsym::{Error, PrecisionContext};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::HashSet;

fn ctx() -> PrecisionContext {
    PrecisionContext::new(3, 12).unwrap()
}

fn random_lattice_basis(c: &PrecisionContext, n: usize, rng: &mut ChaCha20Rng) -> EMatrix {
    let mut b = EMatrix::zeros(c, n, n);
    for j in 0..n {
        b[(j, j)] = c.random_unit_e(rng).shift(rng.gen_range(-2..3));
        for i in 0..j {
            let v = rng.gen_range(-2..2);
            b[(i, j)] = c.random_e(rng, v);
        }
    }
    b
}

fn random_unimodular(c: &PrecisionContext, n: usize, rng: &mut ChaCha20Rng) -> EMatrix {
    loop {
        let rows = (0..n).map(|_| (0..n).map(|_| c.random_e(rng, 0)).collect()).collect();
        let u = EMatrix::from_rows(c, rows);
        if u.det().val() == Some(0) {
            return u;
        }
    }
}

fn forms(c: &PrecisionContext, n: usize, l1: FormLabel, l2: FormLabel) -> (HermForm, HermForm) {
    (HermForm::canonical(c, n, l1), HermForm::canonical(c, n, l2))
}

/// Integral contraction root with `val(1 − a²) = k`.
fn root_with_defect(c: &PrecisionContext, k: i32, rng: &mut ChaCha20Rng) -> qsym::FScalar {
    if k == 0 {
        // at p = 3 every unit is ±1 mod p
        return c.random_unit_f(rng).shift(1);
    }
    c.one().sub(&c.random_unit_f(rng).shift(k))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hnf_is_canonical(seed: u64, n in 1usize..=3) {
        let c = ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let b = random_lattice_basis(&c, n, &mut rng);
        let l = hnf(&b).unwrap();
        let u = random_unimodular(&c, n, &mut rng);
        prop_assert_eq!(&hnf(&b.mul(&u)).unwrap(), &l);
        // a redundant generator changes nothing
        let extra = b.mul(&EMatrix::from_fn(&c, n, 1, |_, _| c.random_e(&mut ChaCha20Rng::seed_from_u64(seed ^ 1), 0)));
        let mut wide = EMatrix::zeros(&c, n, n + 1);
        wide.set_block(0, 0, &b.mul(&u));
        wide.set_block(0, n, &extra);
        prop_assert_eq!(&hnf(&wide).unwrap(), &l);
    }

    #[test]
    fn dual_is_an_involution(seed: u64, n in 1usize..=3, nonsplit: bool) {
        let c = ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let form = HermForm::canonical(&c, n, if nonsplit { FormLabel::NonSplit } else { FormLabel::Split });
        let l = hnf(&random_lattice_basis(&c, n, &mut rng)).unwrap();
        prop_assert_eq!(&dual(&dual(&l, &form).unwrap(), &form).unwrap(), &l);
    }

    #[test]
    fn symmetrized_integral_unitaries_are_integral_members(seed: u64, n in 1usize..=3) {
        let c = ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let fx = SymPoint::split_forms(&c, n);
        let g = random_integral_unitary(&c, &total_gram(&fx), &mut rng);
        let s = symmetrize(&g).unwrap();
        prop_assert!(is_member(&s));
        prop_assert!(s.is_integral());
        // det(t² − 2tA + 1) recovers the full characteristic polynomial
        let x = SymPoint::from_matrix(s, fx);
        let full = char_poly(&x.mat);
        prop_assert!(poly_agree(&car_from_chi(&invariant(&x)), &full, poly_depth(&full)));
    }

    #[test]
    fn invariant_is_constant_on_orbits(seed: u64, n in 1usize..=2) {
        let c = ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let fx = SymPoint::split_forms(&c, n);
        let g = random_integral_unitary(&c, &total_gram(&fx), &mut rng);
        let x = SymPoint::from_matrix(symmetrize(&g).unwrap(), fx.clone());
        let h1 = random_integral_unitary(&c, &fx.0.gram, &mut rng);
        let h2 = random_integral_unitary(&c, &fx.1.gram, &mut rng);
        let y = x.conjugate(&h1, &h2).unwrap();
        let (cx, cy) = (invariant(&x).chi, invariant(&y).chi);
        prop_assert!(poly_agree(&cx, &cy, poly_depth(&cx)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn orbit_counts_are_conjugation_invariant_and_saturated(seed: u64, n in 1usize..=2) {
        let c = ctx();
        let cfg = OrbitalConfig::default();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let fx = SymPoint::split_forms(&c, n);
        let roots: Vec<_> = (0..n).map(|_| c.e_from_f(root_with_defect(&c, 2 * rng.gen_range(0..2), &mut rng))).collect();
        let x = match lift_from_herm(&EMatrix::diag(&c, &roots), &fx) {
            Ok(x) => x,
            Err(Error::Degenerate | Error::NoLift) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        // roots agreeing to working precision leave the discriminant unknown
        prop_assume!(matches!(is_rss(&x), Ok(true)));
        let r = orbit_integral_auto(&x, &cfg).unwrap();
        prop_assert!(r.saturated);
        prop_assert_eq!(orbit_integral_unit_with(&x, r.window + 1, &cfg).unwrap().count, r.count);
        let h1 = random_integral_unitary(&c, &fx.0.gram, &mut rng);
        let h2 = random_integral_unitary(&c, &fx.1.gram, &mut rng);
        let y = x.conjugate(&h1, &h2).unwrap();
        prop_assert_eq!(orbit_integral_auto(&y, &cfg).unwrap().count, r.count);
    }
}

#[test]
fn lift_exists_iff_parity_matches() {
    let c = ctx();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let labels = [FormLabel::Split, FormLabel::NonSplit];
    for k in 0..=2 {
        for _ in 0..10 {
            let a = root_with_defect(&c, k, &mut rng);
            let am = EMatrix::diag(&c, &[c.e_from_f(a)]);
            for l1 in labels {
                for l2 in labels {
                    let d = (!l1.is_split()) as i32 + (!l2.is_split()) as i32;
                    let fs = forms(&c, 1, l1, l2);
                    let res = lift_from_herm(&am, &fs);
                    assert_eq!(res.is_ok(), (k - d) % 2 == 0, "k={k} forms={l1:?},{l2:?}");
                    if let Ok(x) = res {
                        assert!(is_member_with(&x.mat, &fs));
                        assert!(x.a.eq_mod(&am, c.tol()));
                    } else {
                        assert_eq!(res.unwrap_err(), Error::NoLift);
                    }
                }
            }
        }
    }
}

#[test]
fn self_dual_sets_are_bidual_and_grow_with_the_window() {
    let c = ctx();
    for (label, n, w) in [(FormLabel::Split, 1, 2), (FormLabel::NonSplit, 1, 2), (FormLabel::Split, 2, 1), (FormLabel::NonSplit, 2, 1)] {
        let form = HermForm::canonical(&c, n, label);
        let small = enumerate_self_dual(&form, w).unwrap();
        let big = enumerate_self_dual(&form, w + 1).unwrap();
        let keys: HashSet<_> = big.iter().collect();
        for l in small.iter() {
            assert_eq!(&dual(&dual(l, &form).unwrap(), &form).unwrap(), l);
            assert!(keys.contains(l), "{label:?} n={n}: window {w} lattice missing at {}", w + 1);
        }
    }
}
