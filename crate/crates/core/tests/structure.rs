use proptest::prelude::*;
use qsym::dynamics::{cayley, cayley_inv, conjugate_tjd, lie_lift_from_herm, tjd};
use qsym::endoscopy::{factor_data, kappa, nice_point, orbit_invariant, stable_orbit_reps, transfer_factor, EndoDatum};
use qsym::lattice::FormLabel;
use qsym::matalg::{char_poly, EMatrix};
use qsym::symspace::{is_member_with, is_rss, lift_from_herm, random_integral_unitary, residual_vanishes, symmetrize, total_gram, SymPoint};
use qsym::{Error, PrecisionContext};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn ctx(p: u32) -> PrecisionContext {
    PrecisionContext::new(p, 12).unwrap()
}

fn close(a: &EMatrix, b: &EMatrix, k: i32) -> bool {
    residual_vanishes(&a.sub(b), k)
}

fn h_pair(c: &PrecisionContext, fx: &(qsym::lattice::HermForm, qsym::lattice::HermForm), rng: &mut ChaCha20Rng) -> (EMatrix, EMatrix) {
    (random_integral_unitary(c, &fx.0.gram, rng), random_integral_unitary(c, &fx.1.gram, rng))
}

fn skip_degenerate(e: Error) -> Result<(), TestCaseError> {
    match e {
        Error::Degenerate | Error::NoLift | Error::Singular | Error::NotSquarefree | Error::PrecisionExhausted(_) => Err(TestCaseError::reject("degenerate sample")),
        e => Err(TestCaseError::fail(e.to_string())),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tjd_parts_and_uniqueness(seed: u64, n in 1usize..=2) {
        let c = ctx(3);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let fx = SymPoint::split_forms(&c, n);
        let g = random_integral_unitary(&c, &total_gram(&fx), &mut rng);
        let x = SymPoint::from_matrix(symmetrize(&g).unwrap(), fx.clone());
        let t = tjd(&x).unwrap();
        let k = c.tol() - 4;
        prop_assert!(close(&t.x_as.mat.mul(&t.x_tu.mat), &t.x_tu.mat.mul(&t.x_as.mat), k));
        prop_assert!(t.reassembles(&x));
        prop_assert!(t.as_is_fixed());
        prop_assert!(t.tu_is_unipotent());
        prop_assert!(is_member_with(&t.x_as.mat, &fx) && is_member_with(&t.x_tu.mat, &fx));
        let (h1, h2) = h_pair(&c, &fx, &mut rng);
        let moved = tjd(&x.conjugate(&h1, &h2).unwrap()).unwrap();
        let expect = conjugate_tjd(&t, &h1, &h2).unwrap();
        prop_assert!(close(&moved.x_as.mat, &expect.x_as.mat, k));
    }

    #[test]
    fn cayley_roundtrip_and_equivariance(seed: u64, n in 1usize..=3, plus: bool) {
        let c = ctx(3);
        let nu = if plus { 1 } else { -1 };
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let fx = SymPoint::split_forms(&c, n);
        let roots: Vec<_> = (0..n).map(|_| {
            let v = 2 * rng.gen_range(0..2);
            c.e_from_f(c.random_unit_f(&mut rng).shift(v))
        }).collect();
        // det(1 − Y) = ∏(1 − r_i); each digit of it is lost twice at N = 12
        let sing: i32 = roots.iter().map(|r| c.e_one().sub(r).val_or_abs()).sum();
        prop_assume!(sing <= 1);
        let delta = match lie_lift_from_herm(&EMatrix::diag(&c, &roots), &fx) {
            Ok(d) => d,
            Err(e) => return skip_degenerate(e),
        };
        let x = match cayley(&delta, nu, &fx) {
            Ok(x) => x,
            Err(e) => return skip_degenerate(e),
        };
        prop_assert!(is_member_with(&x.mat, &fx));
        let k = c.tol() - 2 + 2 * delta.min_val().unwrap_or(0).min(0);
        prop_assert!(close(&cayley_inv(&x, nu).unwrap(), &delta, k));
        let (h1, h2) = h_pair(&c, &fx, &mut rng);
        let moved = cayley(&h1.mul(&delta).mul(&h2.inverse().unwrap()), nu, &fx).unwrap();
        prop_assert!(close(&moved.mat, &x.conjugate(&h1, &h2).unwrap().mat, c.tol() - 2));
    }

    #[test]
    fn transfer_factor_twists_by_kappa(seed: u64, p in prop_oneof![Just(3u32), Just(5)]) {
        let c = ctx(p);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let datum = EndoDatum::new(1, 1, FormLabel::Split, FormLabel::Split);
        let f1 = SymPoint::split_forms(&c, 1);
        let ra = c.random_unit_f(&mut rng).shift(1);
        let rb = ra.add(&c.random_unit_f(&mut rng).shift(rng.gen_range(1..3)));
        let xa = lift_from_herm(&EMatrix::diag(&c, &[c.e_from_f(ra)]), &f1).unwrap();
        let xb = lift_from_herm(&EMatrix::diag(&c, &[c.e_from_f(rb)]), &f1).unwrap();
        let nice = nice_point(&xa, &xb).unwrap();
        prop_assume!(is_rss(&nice).unwrap());
        let base = transfer_factor(&xa, &xb, &nice, &datum).unwrap();
        let mut fd = factor_data(&nice.a).unwrap();
        fd.partition(&char_poly(&xa.a), &char_poly(&xb.a)).unwrap();
        let reps = stable_orbit_reps(&nice).unwrap();
        prop_assert_eq!(reps.len(), 2);
        for (inv, x) in &reps {
            let k = kappa(&datum, &fd, inv).unwrap();
            let t = transfer_factor(&xa, &xb, x, &datum).unwrap();
            prop_assert_eq!((t.sign, t.qexp), (base.sign * k, base.qexp));
            // κ ∘ inv is constant along the rational orbit
            let (h1, h2) = h_pair(&c, &x.forms, &mut rng);
            let y = x.conjugate(&h1, &h2).unwrap();
            prop_assert_eq!(orbit_invariant(x, &y).unwrap().weight(), 0);
            prop_assert_eq!(transfer_factor(&xa, &xb, &y, &datum).unwrap(), t);
        }
    }
}
