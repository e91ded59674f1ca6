//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use std::sync::Arc;

use nctorus::algebra::{FourierElement, ThetaMatrix};
use num_complex::Complex64;
use rand::Rng;

pub type Dense = Vec<Vec<Complex64>>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn zeros(n: usize) -> Dense {
    vec![vec![Complex64::default(); n]; n]
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let mut out = zeros(n);
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == Complex64::default() {
                continue;
            }
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn dagger(a: &Dense) -> Dense {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| a[j][i].conj()).collect()).collect()
}

pub fn max_diff(a: &Dense, b: &Dense) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn mat_pow(base: &Dense, inv: &Dense, e: i64) -> Dense {
    let n = base.len();
    let mut out: Dense = (0..n).map(|i| (0..n).map(|j| c(f64::from(u8::from(i == j)), 0.0)).collect()).collect();
    let step = if e >= 0 { base } else { inv };
    for _ in 0..e.unsigned_abs() {
        out = matmul(&out, step);
    }
    out
}

/// Clock `C = diag(ω^k)` and shift `S e_k = e_{k+1}` with `ω = e^{2πi p/q}`,
/// so that `CS = ω SC`.
pub struct ClockShift {
    pub q: usize,
    clock: Dense,
    clock_inv: Dense,
    shift: Dense,
    shift_inv: Dense,
}

impl ClockShift {
    pub fn new(p: i64, q: usize) -> Self {
        let w = |k: usize| Complex64::from_polar(1.0, std::f64::consts::TAU * (p as f64) * (k as f64) / q as f64);
        let mut clock = zeros(q);
        let mut shift = zeros(q);
        for k in 0..q {
            clock[k][k] = w(k);
            shift[(k + 1) % q][k] = c(1.0, 0.0);
        }
        let (clock_inv, shift_inv) = (dagger(&clock), dagger(&shift));
        Self { q, clock, clock_inv, shift, shift_inv }
    }

    /// `Σ c_m C^{m₁} S^{m₂}`.
    pub fn represent(&self, a: &FourierElement) -> Dense {
        let mut out = zeros(self.q);
        for (m, coef) in a.iter() {
            let u = matmul(&mat_pow(&self.clock, &self.clock_inv, m[0]), &mat_pow(&self.shift, &self.shift_inv, m[1]));
            for i in 0..self.q {
                for j in 0..self.q {
                    out[i][j] += coef * u[i][j];
                }
            }
        }
        out
    }

    pub fn normalized_trace(&self, a: &Dense) -> Complex64 {
        (0..self.q).map(|i| a[i][i]).sum::<Complex64>() / self.q as f64
    }
}

/// Element with at most `support` distinct modes in `[−range, range]^d`.
pub fn random_element<R: Rng>(rng: &mut R, theta: &Arc<ThetaMatrix>, support: usize, range: i64) -> FourierElement {
    let d = theta.rank();
    let mut modes: Vec<Vec<i64>> = Vec::new();
    let want = rng.gen_range(1..=support);
    while modes.len() < want {
        let m: Vec<i64> = (0..d).map(|_| rng.gen_range(-range..=range)).collect();
        if !modes.contains(&m) {
            modes.push(m);
        }
    }
    let pairs = modes.into_iter().map(|m| (m, c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
    FourierElement::from_pairs(theta, pairs).unwrap()
}

pub fn random_theta<R: Rng>(rng: &mut R, n: usize) -> Arc<ThetaMatrix> {
    let d = 2 * n;
    let mut e = vec![0.0; d * d];
    for j in 0..d {
        for k in 0..j {
            let v: f64 = rng.gen_range(-1.0..1.0);
            e[j * d + k] = v;
            e[k * d + j] = -v;
        }
    }
    Arc::new(ThetaMatrix::new(n, e).unwrap())
}

/// Fraction-free determinant.
pub fn det_i128(a: &[Vec<i64>]) -> i128 {
    let n = a.len();
    let mut m: Vec<Vec<i128>> = a.iter().map(|r| r.iter().map(|&x| i128::from(x)).collect()).collect();
    let mut sign = 1;
    let mut prev = 1i128;
    for k in 0..n {
        if m[k][k] == 0 {
            let Some(p) = (k + 1..n).find(|&i| m[i][k] != 0) else {
                return 0;
            };
            m.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
            }
        }
        prev = m[k][k];
    }
    sign * m[n - 1][n - 1]
}

/// `Uᵀ E U = [[0, D], [−D, 0]]`, `D = diag(d)`, `d₁ | d₂ | ⋯`, `det U = ±1`.
pub fn is_frobenius_basis(e: &[Vec<i64>], u: &[Vec<i64>], d: &[i64]) -> bool {
    let m = e.len();
    let n = m / 2;
    if d.len() != n || u.len() != m || d.iter().any(|&x| x <= 0) || d.windows(2).any(|w| w[1] % w[0] != 0) {
        return false;
    }
    if det_i128(u).abs() != 1 {
        return false;
    }
    for a in 0..m {
        for b in 0..m {
            let mut s = 0i128;
            for i in 0..m {
                for j in 0..m {
                    s += i128::from(u[i][a]) * i128::from(e[i][j]) * i128::from(u[j][b]);
                }
            }
            let want = if a < n && b == a + n {
                d[a]
            } else if a >= n && b + n == a {
                -d[b]
            } else {
                0
            };
            if s != i128::from(want) {
                return false;
            }
        }
    }
    true
}

pub fn random_skew_form<R: Rng>(rng: &mut R, dim: usize, range: i64) -> Vec<Vec<i64>> {
    loop {
        let mut e = vec![vec![0i64; dim]; dim];
        for i in 0..dim {
            for j in i + 1..dim {
                let v = rng.gen_range(-range..=range);
                e[i][j] = v;
                e[j][i] = -v;
            }
        }
        if det_i128(&e) != 0 {
            return e;
        }
    }
}
