//! Exact integer lattice routines: integer kernels, row Hermite normal form and LLL.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type IntVector = Vec<BigInt>;

pub fn to_big(v: &[i64]) -> IntVector {
    v.iter().map(|&x| BigInt::from(x)).collect()
}

pub fn to_i64(v: &[BigInt]) -> Option<Vec<i64>> {
    v.iter().map(ToPrimitive::to_i64).collect()
}

fn axpy(y: &mut [BigInt], q: &BigInt, x: &[BigInt]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a -= q * b;
    }
}

/// Basis of the saturated lattice `{x ∈ Zⁿ : A x = 0}`.
///
/// Unimodular column operations bring `A` to `[H | 0]` with `H` of full column
/// rank; the matching columns of the accumulated transform span the kernel.
pub fn integer_kernel(a: &[IntVector], n: usize) -> Vec<IntVector> {
    let m = a.len();
    let mut cols: Vec<IntVector> = (0..n).map(|j| (0..m).map(|i| a[i][j].clone()).collect()).collect();
    let mut u: Vec<IntVector> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { BigInt::one() } else { BigInt::zero() }).collect())
        .collect();
    let mut pivot = 0;
    for i in 0..m {
        if pivot == n {
            break;
        }
        loop {
            let Some(best) = (pivot..n).filter(|&c| !cols[c][i].is_zero()).min_by_key(|&c| cols[c][i].abs()) else {
                break;
            };
            cols.swap(pivot, best);
            u.swap(pivot, best);
            let mut done = true;
            for c in pivot + 1..n {
                if cols[c][i].is_zero() {
                    continue;
                }
                let q = cols[c][i].div_floor(&cols[pivot][i]);
                let (pc, pu) = (cols[pivot].clone(), u[pivot].clone());
                axpy(&mut cols[c], &q, &pc);
                axpy(&mut u[c], &q, &pu);
                done &= cols[c][i].is_zero();
            }
            if done {
                break;
            }
        }
        if !cols[pivot][i].is_zero() {
            pivot += 1;
        }
    }
    u.split_off(pivot)
}

/// Row Hermite normal form of the lattice spanned by `rows`; zero rows dropped.
pub fn hnf_rows(rows: &[IntVector]) -> Vec<IntVector> {
    let mut b: Vec<IntVector> = rows.to_vec();
    let n = b.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..n {
        if r == b.len() {
            break;
        }
        loop {
            let Some(best) = (r..b.len()).filter(|&i| !b[i][c].is_zero()).min_by_key(|&i| b[i][c].abs()) else {
                break;
            };
            b.swap(r, best);
            let mut done = true;
            for i in r + 1..b.len() {
                if b[i][c].is_zero() {
                    continue;
                }
                let q = b[i][c].div_floor(&b[r][c]);
                let pr = b[r].clone();
                axpy(&mut b[i], &q, &pr);
                done &= b[i][c].is_zero();
            }
            if done {
                break;
            }
        }
        if r < b.len() && !b[r][c].is_zero() {
            if b[r][c].is_negative() {
                for x in b[r].iter_mut() {
                    *x = -x.clone();
                }
            }
            for i in 0..r {
                let q = b[i][c].div_floor(&b[r][c]);
                let pr = b[r].clone();
                axpy(&mut b[i], &q, &pr);
            }
            r += 1;
        }
    }
    b.truncate(r);
    b
}

fn dot(a: &[BigRational], b: &[BigRational]) -> BigRational {
    a.iter().zip(b).fold(BigRational::zero(), |acc, (x, y)| acc + x * y)
}

fn round_rat(x: &BigRational) -> BigInt {
    (x + BigRational::new(BigInt::one(), BigInt::from(2))).floor().to_integer()
}

/// Gram–Schmidt data `(b*, μ, |b*|²)`.
fn gso(b: &[IntVector]) -> (Vec<Vec<BigRational>>, Vec<Vec<BigRational>>, Vec<BigRational>) {
    let k = b.len();
    let mut bs: Vec<Vec<BigRational>> = Vec::with_capacity(k);
    let mut mu = vec![vec![BigRational::zero(); k]; k];
    let mut norms = Vec::with_capacity(k);
    for i in 0..k {
        let bi: Vec<BigRational> = b[i].iter().map(|x| BigRational::from_integer(x.clone())).collect();
        let mut v = bi.clone();
        for j in 0..i {
            if norms[j] == BigRational::zero() {
                continue;
            }
            let m = dot(&bi, &bs[j]) / &norms[j];
            for (a, s) in v.iter_mut().zip(&bs[j]) {
                *a -= &m * s;
            }
            mu[i][j] = m;
        }
        norms.push(dot(&v, &v));
        bs.push(v);
    }
    (bs, mu, norms)
}

/// LLL reduction with `δ = 3/4` in exact rational arithmetic. The rows must be
/// linearly independent.
pub fn lll(rows: &[IntVector]) -> Vec<IntVector> {
    let mut b: Vec<IntVector> = rows.to_vec();
    let k_max = b.len();
    if k_max < 2 {
        return b;
    }
    let delta = BigRational::new(BigInt::from(3), BigInt::from(4));
    let (_, mut mu, mut norms) = gso(&b);
    let mut k = 1;
    while k < k_max {
        for j in (0..k).rev() {
            let q = round_rat(&mu[k][j]);
            if !q.is_zero() {
                let bj = b[j].clone();
                axpy(&mut b[k], &q, &bj);
                let qr = BigRational::from_integer(q);
                for i in 0..j {
                    let t = &qr * &mu[j][i];
                    mu[k][i] -= t;
                }
                mu[k][j] -= &qr;
            }
        }
        let lhs = norms[k].clone();
        let rhs = (&delta - &mu[k][k - 1] * &mu[k][k - 1]) * &norms[k - 1];
        if lhs >= rhs {
            k += 1;
        } else {
            b.swap(k, k - 1);
            let g = gso(&b);
            mu = g.1;
            norms = g.2;
            k = (k - 1).max(1);
        }
    }
    b
}

/// Primitive representative with first nonzero entry positive.
pub fn primitive_canonical(v: &[BigInt]) -> IntVector {
    let g = v.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if g.is_zero() {
        return v.to_vec();
    }
    let mut out: IntVector = v.iter().map(|x| x / &g).collect();
    if out.iter().find(|x| !x.is_zero()).is_some_and(Signed::is_negative) {
        for x in out.iter_mut() {
            *x = -x.clone();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(rows: &[&[i64]]) -> Vec<IntVector> {
        rows.iter().map(|r| to_big(r)).collect()
    }

    #[test]
    fn kernel_is_saturated() {
        // 2x + 4y = 0 has kernel spanned by (2, −1), not (4, −2)
        let k = integer_kernel(&big(&[&[2, 4]]), 2);
        assert_eq!(k.len(), 1);
        assert_eq!(primitive_canonical(&k[0]), to_big(&[2, -1]));
        let k = integer_kernel(&big(&[&[1, 2, 3], &[4, 5, 6]]), 3);
        assert_eq!(k.len(), 1);
        assert_eq!(primitive_canonical(&k[0]), to_big(&[1, -2, 1]));
    }

    #[test]
    fn hnf_is_canonical() {
        let a = hnf_rows(&big(&[&[2, 4, 0], &[1, 1, 1]]));
        let b = hnf_rows(&big(&[&[3, 5, 1], &[1, 1, 1]]));
        assert_eq!(a, b);
        assert_eq!(a, big(&[&[1, 1, 1], &[0, 2, -2]]));
    }

    #[test]
    fn lll_shortens() {
        let red = lll(&big(&[&[1, 1, 1], &[-1, 0, 2], &[3, 5, 6]]));
        // μ = −1/2 rounds toward zero, so the last vector differs from the
        // textbook answer (−1, 0, 2) by the second one
        assert_eq!(red, big(&[&[0, 1, 0], &[1, 0, 1], &[-2, 0, 1]]));
    }
}
