mod common;

use common::*;
use nctorus::algebra::{FourierElement, MatrixElement};
use nctorus::complexstruct::{antihol_frame, ComplexStructure};
use nctorus::dolbeault::{
    cohomology_dims, flatness_curvature, frequency, index, kunneth_dims, line_flat_connection, operator_coo,
    FreeConnection, TruncationBox,
};
use nctorus::Error;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Product of Poincaré polynomials, coefficient by coefficient.
fn poincare_product(a: &[usize], b: &[usize]) -> Vec<usize> {
    (0..a.len() + b.len() - 1)
        .map(|q| (0..=q).filter(|&k| k < a.len() && q - k < b.len()).map(|k| a[k] * b[q - k]).sum())
        .collect()
}

#[test]
fn kunneth_matches_polynomial_product() {
    assert_eq!(kunneth_dims(&[2, 0], &[1, 1]), vec![2, 2, 0]);
    assert_eq!(kunneth_dims(&[1, 1], &[1, 1]), vec![1, 2, 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let a: Vec<usize> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(0..5)).collect();
        let b: Vec<usize> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(0..5)).collect();
        assert_eq!(kunneth_dims(&a, &b), poincare_product(&a, &b));
    }
}

#[test]
fn dbar_squares_to_zero_on_flat_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cs = ComplexStructure::random(2, &mut rng);
    let theta = random_theta(&mut rng, 2);
    let frame = antihol_frame(&cs).unwrap();
    let x = vec![(1, vec![c(0.3, -0.2)]), (2, vec![c(0.1, 0.4)])];
    let conn = line_flat_connection(&theta, &frame, &[1, 0, -1, 1], &x, &[c(0.2, 0.1), c(-0.3, 0.05)]).unwrap();
    assert!(flatness_curvature(&conn, &frame).unwrap().is_flat);
    let bx = TruncationBox::new(2).unwrap();
    let d0 = operator_coo(&cs, &frame, &conn, bx, 0).unwrap().to_dense();
    let d1 = operator_coo(&cs, &frame, &conn, bx, 1).unwrap().to_dense();
    let prod = &d1 * &d0;
    let worst = (0..prod.nrows()).flat_map(|i| (0..prod.ncols()).map(move |j| (i, j))).map(|(i, j)| prod[(i, j)].norm()).fold(0.0, f64::max);
    assert!(worst < 1e-10, "d1 d0 = {worst:e}");
}

#[test]
fn coo_adjoint_is_conjugate_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cs = ComplexStructure::random(1, &mut rng);
    let theta = random_theta(&mut rng, 1);
    let frame = antihol_frame(&cs).unwrap();
    let a = random_element(&mut rng, &theta, 4, 1);
    let conn = FreeConnection::new(1, vec![MatrixElement::from_element(a)]).unwrap();
    let coo = operator_coo(&cs, &frame, &conn, TruncationBox::new(3).unwrap(), 0).unwrap();
    let (m, adj) = (coo.to_dense(), coo.adjoint().to_dense());
    assert_eq!((adj.nrows(), adj.ncols()), (m.ncols(), m.nrows()));
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            assert_eq!(adj[(j, i)], m[(i, j)].conj());
        }
    }
}

#[test]
fn noncommuting_terms_are_not_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cs = ComplexStructure::random(2, &mut rng);
    let theta = random_theta(&mut rng, 2);
    let frame = antihol_frame(&cs).unwrap();
    let terms = (0..2).map(|j| MatrixElement::from_element(FourierElement::generator(&theta, j).unwrap())).collect();
    let conn = FreeConnection::new(1, terms).unwrap();
    let curv = flatness_curvature(&conn, &frame).unwrap();
    assert!(!curv.is_flat);
    let err = cohomology_dims(&cs, &frame, &conn, TruncationBox::new(2).unwrap(), 1e-8).unwrap_err();
    assert!(matches!(err, Error::NonFlat { .. }));
}

#[test]
fn scalar_on_lattice_shifts_the_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 1..=2 {
        let cs = ComplexStructure::random(n, &mut rng);
        let theta = random_theta(&mut rng, n);
        let frame = antihol_frame(&cs).unwrap();
        let mut m1 = vec![0i64; 2 * n];
        m1[0] = 1;
        m1[2 * n - 1] = -1;
        let shift: Vec<Complex64> = (0..n).map(|j| -frequency(&frame.row(j), &m1)).collect();
        let conn = FreeConnection::scalar(&theta, 1, &shift).unwrap();
        let rep = cohomology_dims(&cs, &frame, &conn, TruncationBox::new(4).unwrap(), 1e-8).unwrap();
        let want: Vec<usize> = (0..=n).map(|q| nctorus::dolbeault::binomial(n, q)).collect();
        assert_eq!(rep.dims, want);
        assert!(rep.stable);
        let off = FreeConnection::scalar(&theta, 1, &vec![c(0.37, -0.11); n]).unwrap();
        let rep = cohomology_dims(&cs, &frame, &off, TruncationBox::new(4).unwrap(), 1e-8).unwrap();
        assert_eq!(rep.dims, vec![0; n + 1]);
    }
}

#[test]
fn nonflat_perturbation_keeps_index_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..3 {
        let cs = ComplexStructure::random(1, &mut rng);
        let theta = random_theta(&mut rng, 1);
        let frame = antihol_frame(&cs).unwrap();
        let a = random_element(&mut rng, &theta, 5, 2);
        let conn = FreeConnection::new(1, vec![MatrixElement::from_element(a)]).unwrap();
        let rep = index(&cs, &frame, &conn, TruncationBox::new(8).unwrap(), 1e-8).unwrap();
        assert_eq!(rep.index, 0);
        assert!(rep.stable, "kept {:e} cut {:e}", rep.sigma_kept, rep.sigma_cut);
    }
}

#[test]
fn rank_two_line_family_is_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cs = ComplexStructure::random(2, &mut rng);
    let theta = random_theta(&mut rng, 2);
    let frame = antihol_frame(&cs).unwrap();
    let x = vec![(1, vec![c(0.3, 0.0), c(0.1, 0.2), c(-0.4, 0.1), c(0.0, 0.5)])];
    let conn = line_flat_connection(&theta, &frame, &[0, 1, 1, 0], &x, &[c(0.1, 0.0), c(0.0, 0.2)]).unwrap();
    assert_eq!(conn.rank(), 2);
    assert!(flatness_curvature(&conn, &frame).unwrap().is_flat);
}
