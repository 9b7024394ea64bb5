use proptest::prelude::*;
use qsym::matalg::{char_poly, herm_factor, resultant, EMatrix, EPoly};
use qsym::PrecisionContext;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn ctx(p: u32) -> PrecisionContext {
    PrecisionContext::new(p, 12).unwrap()
}

fn random_matrix(c: &PrecisionContext, n: usize, rng: &mut ChaCha20Rng) -> EMatrix {
    let rows = (0..n).map(|_| (0..n).map(|_| c.random_e(rng, 0)).collect()).collect();
    EMatrix::from_rows(c, rows)
}

fn primes() -> impl Strategy<Value = u32> {
    prop_oneof![Just(3u32), Just(5), Just(7)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn field_axioms(p in primes(), seed: u64) {
        let c = ctx(p);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut draw = || {
            let v = rng.gen_range(-2..3);
            c.random_e(&mut rng, v)
        };
        let (x, y, z) = (draw(), draw(), draw());
        let k = c.tol() - 6;
        prop_assert!(x.mul(&y).mul(&z).eq_mod(&x.mul(&y.mul(&z)), k));
        prop_assert!(x.add(&y).add(&z).eq_mod(&x.add(&y.add(&z)), k));
        prop_assert!(x.mul(&y.add(&z)).eq_mod(&x.mul(&y).add(&x.mul(&z)), k));
        prop_assert!(x.mul(&y).eq_mod(&y.mul(&x), k));
        let u = c.random_unit_e(&mut rng);
        prop_assert!(u.mul(&u.inv().unwrap()).eq_mod(&c.e_one(), c.tol()));
    }

    #[test]
    fn eta_is_a_character_trivial_on_norms(p in primes(), seed: u64) {
        let c = ctx(p);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = c.random_unit_f(&mut rng).shift(rng.gen_range(-3..4));
        let y = c.random_unit_f(&mut rng).shift(rng.gen_range(-3..4));
        prop_assert_eq!(x.mul(&y).eta().unwrap(), x.eta().unwrap() * y.eta().unwrap());
        let z = c.random_unit_e(&mut rng).shift(rng.gen_range(-3..4));
        prop_assert_eq!(z.norm().eta().unwrap(), 1);
    }

    #[test]
    fn valuation_is_ultrametric(p in primes(), seed: u64) {
        let c = ctx(p);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = c.random_unit_f(&mut rng).shift(rng.gen_range(-3..4));
        let y = c.random_unit_f(&mut rng).shift(rng.gen_range(-3..4));
        let s = x.add(&y);
        let (vx, vy) = (x.val().unwrap(), y.val().unwrap());
        if let Some(vs) = s.val() {
            prop_assert!(vs >= vx.min(vy));
        }
        if vx != vy {
            prop_assert_eq!(s.val(), Some(vx.min(vy)));
        }
    }

    #[test]
    fn sqrt_matches_residue_squares(p in primes(), seed: u64) {
        let c = ctx(p);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = c.random_unit_f(&mut rng).shift(rng.gen_range(-3..4));
        let squares: Vec<u64> = (1..p as u64).map(|r| r * r % p as u64).collect();
        let expect = x.val().unwrap() % 2 == 0 && squares.contains(&(x.unit_residue() % p as u64));
        match x.sqrt().unwrap() {
            Some(r) => {
                prop_assert!(expect);
                prop_assert!(r.mul(&r).eq_mod(&x, c.tol() + x.val().unwrap()));
            }
            None => prop_assert!(!expect),
        }
    }

    #[test]
    fn cayley_hamilton(p in primes(), n in 1usize..=3, seed: u64) {
        let c = ctx(p);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let m = random_matrix(&c, n, &mut rng);
        prop_assert!(char_poly(&m).eval_matrix(&m).vanishes_mod(c.tol() - 2));
    }

    #[test]
    fn dagger_reverses_products(seed: u64, n in 1usize..=3) {
        let c = ctx(3);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (a, b) = (random_matrix(&c, n, &mut rng), random_matrix(&c, n, &mut rng));
        prop_assert!(a.mul(&b).dagger().eq_mod(&b.dagger().mul(&a.dagger()), c.tol()));
    }

    #[test]
    fn resultant_laws(p in primes(), seed: u64, df in 1usize..=3, dg in 1usize..=3, dh in 1usize..=2) {
        let c = ctx(p);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut monic = |d: usize| {
            let mut cs: Vec<_> = (0..d).map(|_| c.random_e(&mut rng, 0)).collect();
            cs.push(c.e_one());
            EPoly::new(&c, cs)
        };
        let (f, g, h) = (monic(df), monic(dg), monic(dh));
        let sign = if (df * dg) % 2 == 0 { 1 } else { -1 };
        let k = c.tol() - 4;
        prop_assert!(resultant(&f, &g).eq_mod(&resultant(&g, &f).scale(&c.int(sign)), k));
        prop_assert!(resultant(&f, &g.mul(&h)).eq_mod(&resultant(&f, &g).mul(&resultant(&f, &h)), k));
    }

    #[test]
    fn herm_factor_iff_even_determinant(seed: u64, n in 1usize..=2) {
        let c = ctx(3);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut h = EMatrix::zeros(&c, n, n);
        for i in 0..n {
            h[(i, i)] = c.e_from_f(c.random_unit_f(&mut rng).shift(rng.gen_range(0..3)));
            for j in i + 1..n {
                let v = rng.gen_range(0..3);
                let z = c.random_e(&mut rng, v);
                h[(i, j)] = z;
                h[(j, i)] = z.conj();
            }
        }
        let Some(v) = h.det().val() else { return Ok(()) };
        prop_assume!(v < c.tol() - 2);
        let res = herm_factor(&h);
        prop_assert_eq!(res.is_ok(), v % 2 == 0);
        if let Ok(b) = res {
            prop_assert!(b.mul(&b.dagger()).eq_mod(&h, c.tol() - 4));
        }
    }
}
