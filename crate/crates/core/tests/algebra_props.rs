mod common;

use std::sync::Arc;

use common::*;
use nctorus::algebra::{FourierElement, MatrixElement, ThetaMatrix};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-12;

fn sample(seed: u64, n: usize) -> (Arc<ThetaMatrix>, FourierElement, FourierElement, FourierElement) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = random_theta(&mut rng, n);
    let a = random_element(&mut rng, &theta, 6, 3);
    let b = random_element(&mut rng, &theta, 6, 3);
    let c = random_element(&mut rng, &theta, 6, 3);
    (theta, a, b, c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn star_reverses_products(seed in any::<u64>(), n in 1usize..=2) {
        let (_, a, b, _) = sample(seed, n);
        let lhs = a.multiply(&b).unwrap().star();
        let rhs = b.star().multiply(&a.star()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < EPS);
        prop_assert!(a.star().star().max_abs_diff(&a) < EPS);
    }

    #[test]
    fn trace_is_positive(seed in any::<u64>(), n in 1usize..=2) {
        let (_, a, _, _) = sample(seed, n);
        let t = a.star().multiply(&a).unwrap().trace();
        let l2: f64 = a.iter().map(|(_, c)| c.norm_sqr()).sum();
        prop_assert!(t.im.abs() < EPS && (t.re - l2).abs() < EPS * (1.0 + l2));
    }

    #[test]
    fn derivations_are_leibniz(seed in any::<u64>(), n in 1usize..=2) {
        let (theta, a, b, _) = sample(seed, n);
        for j in 0..theta.rank() {
            let lhs = a.multiply(&b).unwrap().derivation(j).unwrap();
            let rhs = a.derivation(j).unwrap().multiply(&b).unwrap().try_add(&a.multiply(&b.derivation(j).unwrap()).unwrap()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
        }
    }

    #[test]
    fn gauge_action_is_multiplicative(seed in any::<u64>(), angles in proptest::collection::vec(0.0..6.3f64, 4)) {
        let (_, a, b, _) = sample(seed, 2);
        let t: Vec<Complex64> = angles.iter().map(|&x| Complex64::cis(x)).collect();
        let lhs = a.multiply(&b).unwrap().gauge_act(&t).unwrap();
        let rhs = a.gauge_act(&t).unwrap().multiply(&b.gauge_act(&t).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-11);
    }

    #[test]
    fn matrix_products_associate(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = random_theta(&mut rng, 1);
        let mut m = || {
            let entries = (0..4).map(|_| random_element(&mut rng, &theta, 3, 2)).collect();
            MatrixElement::from_entries(2, entries).unwrap()
        };
        let (a, b, c) = (m(), m(), m());
        let lhs = a.multiply(&b).unwrap().multiply(&c).unwrap();
        let rhs = a.multiply(&b.multiply(&c).unwrap()).unwrap();
        prop_assert!(lhs.try_sub(&rhs).unwrap().max_abs() < 1e-11);
    }
}

#[test]
fn generators_satisfy_commutation_relation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let theta = random_theta(&mut rng, 2);
    for j in 0..4 {
        for k in 0..4 {
            let uj = FourierElement::generator(&theta, j).unwrap();
            let uk = FourierElement::generator(&theta, k).unwrap();
            let lhs = uj.multiply(&uk).unwrap();
            let rhs = uk.multiply(&uj).unwrap().scale(Complex64::cis(std::f64::consts::TAU * theta.get(j, k)));
            assert!(lhs.max_abs_diff(&rhs) < EPS, "({j}, {k})");
            let unit = uj.multiply(&uj.star()).unwrap();
            assert!(unit.max_abs_diff(&FourierElement::one(&theta)) < EPS);
        }
    }
}

#[test]
fn zero_theta_is_commutative() {
    let theta = Arc::new(ThetaMatrix::zero(2));
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let a = random_element(&mut rng, &theta, 6, 3);
        let b = random_element(&mut rng, &theta, 6, 3);
        assert!(a.commutator(&b).unwrap().max_abs() < EPS);
    }
}

#[test]
fn embedding_preserves_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let big = random_theta(&mut rng, 2);
    let small = Arc::new(ThetaMatrix::two_torus(big.get(0, 1)));
    for _ in 0..50 {
        let a = random_element(&mut rng, &small, 6, 3);
        let b = random_element(&mut rng, &small, 6, 3);
        let lhs = a.multiply(&b).unwrap().embed(&big).unwrap();
        let rhs = a.embed(&big).unwrap().multiply(&b.embed(&big).unwrap()).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < EPS);
    }
}
