//! K₀ classes as even exterior-algebra vectors, curvature functionals and
//! bounded non-algebraicity certificates for complex dimension 2.

use std::collections::BTreeMap;
use std::ops::Add;

use faer::Mat;
use num_bigint::BigInt;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::ThetaMatrix;
use crate::complexstruct::{antihol_frame, AntiholFrame, ComplexStructure};
use crate::error::{Error, Result};
use crate::lattice::{hnf_rows, integer_kernel, primitive_canonical, to_big, to_i64};
use crate::linalg;

pub const DEFAULT_BOUND: i64 = 5;

/// Element of `Λ^even Z^{2n}`; subsets are sorted 0-based coordinate sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct K0Class {
    n: usize,
    comps: BTreeMap<Vec<usize>, i64>,
}

impl K0Class {
    pub fn new(n: usize, comps: BTreeMap<Vec<usize>, i64>) -> Result<Self> {
        for s in comps.keys() {
            if s.len() % 2 != 0 {
                return Err(Error::InvalidInput(format!("subset {s:?} has odd size")));
            }
            if s.windows(2).any(|w| w[0] >= w[1]) || s.iter().any(|&i| i >= 2 * n) {
                return Err(Error::InvalidInput(format!("subset {s:?} is not a sorted subset of 0..{}", 2 * n)));
            }
        }
        let comps = comps.into_iter().filter(|(_, v)| *v != 0).collect();
        Ok(Self { n, comps })
    }

    /// Class of the free module of rank `r`.
    pub fn free(n: usize, r: i64) -> Self {
        Self::new(n, BTreeMap::from([(Vec::new(), r)])).expect("empty subset is even")
    }

    /// `{∅ ↦ p, {1,2} ↦ q}` over a noncommutative elliptic curve.
    pub fn standard_1d(p: i64, q: i64) -> Self {
        Self::new(1, BTreeMap::from([(Vec::new(), p), (vec![0, 1], q)])).expect("valid subsets")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn component(&self, subset: &[usize]) -> i64 {
        self.comps.get(subset).copied().unwrap_or(0)
    }

    pub fn components(&self) -> &BTreeMap<Vec<usize>, i64> {
        &self.comps
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::Dimension("K₀ classes over different dimensions".into()));
        }
        let mut comps = self.comps.clone();
        for (k, v) in &other.comps {
            *comps.entry(k.clone()).or_default() += v;
        }
        Self::new(self.n, comps)
    }
}

impl Add for &K0Class {
    type Output = Result<K0Class>;
    fn add(self, other: &K0Class) -> Result<K0Class> {
        self.try_add(other)
    }
}

/// Component in `Λ^{2n} Z^{2n} ≅ Z`.
pub fn chern_top(k: &K0Class) -> i64 {
    k.component(&(0..2 * k.n).collect::<Vec<_>>())
}

/// `α ∧ β` for integer covectors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Decomposable2Form {
    alpha: Vec<i64>,
    beta: Vec<i64>,
}

impl Decomposable2Form {
    pub fn new(alpha: Vec<i64>, beta: Vec<i64>) -> Result<Self> {
        if alpha.len() != beta.len() {
            return Err(Error::Dimension("covectors of different length".into()));
        }
        let d = alpha.len();
        let independent = (0..d).any(|i| (i + 1..d).any(|j| alpha[i] * beta[j] != alpha[j] * beta[i]));
        if !independent {
            return Err(Error::InvalidInput("α and β are linearly dependent".into()));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> &[i64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[i64] {
        &self.beta
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Functional {
    /// Determinant pairing of `∂̄₁ ∧ ∂̄₂ ∧ Θ`.
    Top,
    Decomposable(Decomposable2Form),
}

fn det4(m: [[Complex64; 4]; 4]) -> Complex64 {
    let mut total = Complex64::default();
    for (c, sign) in [(0usize, 1.0), (1, -1.0), (2, 1.0), (3, -1.0)] {
        let minor: Vec<Vec<Complex64>> = (1..4).map(|r| (0..4).filter(|&k| k != c).map(|k| m[r][k]).collect()).collect();
        let d3 = minor[0][0] * (minor[1][1] * minor[2][2] - minor[1][2] * minor[2][1])
            - minor[0][1] * (minor[1][0] * minor[2][2] - minor[1][2] * minor[2][0])
            + minor[0][2] * (minor[1][0] * minor[2][1] - minor[1][1] * minor[2][0]);
        total += m[0][c] * d3 * sign;
    }
    total
}

pub fn curvature_functional(frame: &AntiholFrame, theta: &ThetaMatrix, mu: &Functional) -> Result<Complex64> {
    if frame.n() != 2 || theta.n_half() != 2 {
        return Err(Error::Dimension("curvature functionals are defined for complex dimension 2".into()));
    }
    let w1 = frame.row(0);
    let w2 = frame.row(1);
    match mu {
        Functional::Top => {
            let mut total = Complex64::default();
            for j in 0..4 {
                for k in j + 1..4 {
                    let t = theta.get(j, k);
                    if t == 0.0 {
                        continue;
                    }
                    let mut m = [[Complex64::default(); 4]; 4];
                    for r in 0..4 {
                        m[r][0] = w1[r];
                        m[r][1] = w2[r];
                    }
                    m[j][2] = Complex64::new(1.0, 0.0);
                    m[k][3] = Complex64::new(1.0, 0.0);
                    total += det4(m) * t;
                }
            }
            Ok(total)
        }
        Functional::Decomposable(f) => {
            if f.alpha.len() != 4 {
                return Err(Error::Dimension("covectors must have length 4".into()));
            }
            let ev = |v: &[i64], w: &[Complex64]| -> Complex64 { v.iter().zip(w).map(|(a, x)| x * *a as f64).sum() };
            Ok(ev(&f.alpha, &w1) * ev(&f.beta, &w2) - ev(&f.alpha, &w2) * ev(&f.beta, &w1))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonalgCertificate {
    pub bound: i64,
    /// Canonical bases of the distinct vanishing planes `span(α, β)`.
    pub vanishing_pairs: Vec<(Vec<i64>, Vec<i64>)>,
    pub top_value: Complex64,
    pub top_vanishes: bool,
    pub certified: bool,
    pub tol: f64,
    pub seed: Option<u64>,
}

fn primitive_sign_canonical(v: &[i64]) -> bool {
    let g = v.iter().fold(0i64, |acc, &x| num_integer::gcd(acc, x));
    g == 1 && v.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0)
}

/// All integer `β` in `[−B, B]⁴` with `|u·β| < tol`, by enumerating free
/// coordinates and rounding the pivot coordinates of the real 2×4 system.
fn solutions(u: &[Complex64; 4], bound: i64, tol: f64) -> Vec<[i64; 4]> {
    let rows = [u.map(|z| z.re), u.map(|z| z.im)];
    let scale = u.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut best_pair = None;
    let mut best_det = 0.0;
    for a in 0..4 {
        for b in a + 1..4 {
            let det = rows[0][a] * rows[1][b] - rows[0][b] * rows[1][a];
            if det.abs() > best_det {
                best_det = det.abs();
                best_pair = Some((a, b));
            }
        }
    }
    let pivots: Vec<usize> = if best_det > 1e-8 * scale * scale {
        let (a, b) = best_pair.expect("a pair exists");
        vec![a, b]
    } else if scale > tol {
        let (_, c) = (0..2)
            .flat_map(|r| (0..4).map(move |c| (r, c)))
            .max_by(|x, y| rows[x.0][x.1].abs().total_cmp(&rows[y.0][y.1].abs()))
            .expect("nonempty");
        vec![c]
    } else {
        Vec::new()
    };
    let free: Vec<usize> = (0..4).filter(|c| !pivots.contains(c)).collect();
    let mut out = Vec::new();
    let side = (2 * bound + 1) as usize;
    let total = side.pow(free.len() as u32);
    for idx in 0..total {
        let mut beta = [0i64; 4];
        let mut t = idx;
        for &f in &free {
            beta[f] = (t % side) as i64 - bound;
            t /= side;
        }
        match pivots.len() {
            2 => {
                let (a, b) = (pivots[0], pivots[1]);
                let r0: f64 = -free.iter().map(|&f| rows[0][f] * beta[f] as f64).sum::<f64>();
                let r1: f64 = -free.iter().map(|&f| rows[1][f] * beta[f] as f64).sum::<f64>();
                let det = rows[0][a] * rows[1][b] - rows[0][b] * rows[1][a];
                let xa = (r0 * rows[1][b] - r1 * rows[0][b]) / det;
                let xb = (rows[0][a] * r1 - rows[1][a] * r0) / det;
                beta[a] = xa.round() as i64;
                beta[b] = xb.round() as i64;
            }
            1 => {
                let p = pivots[0];
                let row = if rows[0][p].abs() >= rows[1][p].abs() { 0 } else { 1 };
                let r: f64 = -free.iter().map(|&f| rows[row][f] * beta[f] as f64).sum::<f64>();
                beta[p] = (r / rows[row][p]).round() as i64;
            }
            _ => {}
        }
        if beta.iter().any(|x| x.abs() > bound) {
            continue;
        }
        let val: Complex64 = u.iter().zip(&beta).map(|(z, &b)| z * b as f64).sum();
        if val.norm() < tol {
            out.push(beta);
        }
    }
    out
}

/// Canonical basis of the saturation of `span(α, β) ∩ Z⁴`.
fn canonical_plane(alpha: &[i64], beta: &[i64]) -> (Vec<i64>, Vec<i64>) {
    let perp = integer_kernel(&[to_big(alpha), to_big(beta)], 4);
    let sat = integer_kernel(&perp, 4);
    let h = hnf_rows(&sat);
    (to_i64(&h[0]).expect("small entries"), to_i64(&h[1]).expect("small entries"))
}

/// Bounded search for integer decomposable forms vanishing on `∂̄₁ ∧ ∂̄₂`,
/// plus the top functional.
pub fn nonalg_certificate(cs: &ComplexStructure, theta: &ThetaMatrix, bound: i64, tol: Option<f64>) -> Result<NonalgCertificate> {
    if cs.n() != 2 || theta.n_half() != 2 {
        return Err(Error::Dimension("certificates are defined for complex dimension 2".into()));
    }
    if bound < 1 {
        return Err(Error::InvalidInput("bound must be at least 1".into()));
    }
    let frame = antihol_frame(cs)?;
    let wmax = linalg::max_abs_c(frame.matrix());
    let tol = tol.unwrap_or(1e-9 * (1.0 + wmax) * (1.0 + wmax));
    let w1 = frame.row(0);
    let w2 = frame.row(1);
    let m = Mat::from_fn(4, 4, |i, j| w1[i] * w2[j] - w1[j] * w2[i]);
    let side = 2 * bound + 1;
    let alphas: Vec<[i64; 4]> = (0..side.pow(4))
        .map(|idx| {
            let mut a = [0i64; 4];
            let mut t = idx;
            for x in a.iter_mut() {
                *x = t % side - bound;
                t /= side;
            }
            a
        })
        .filter(|a| primitive_sign_canonical(a))
        .collect();
    let found: Vec<Vec<(Vec<BigInt>, [i64; 4], [i64; 4])>> = alphas
        .par_iter()
        .map(|alpha| {
            let u: [Complex64; 4] = std::array::from_fn(|j| (0..4).map(|i| m[(i, j)] * alpha[i] as f64).sum());
            solutions(&u, bound, tol)
                .into_iter()
                .filter_map(|beta| {
                    let pl: Vec<i64> = (0..4)
                        .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
                        .map(|(i, j)| alpha[i] * beta[j] - alpha[j] * beta[i])
                        .collect();
                    pl.iter().any(|&x| x != 0).then(|| (primitive_canonical(&to_big(&pl)), *alpha, beta))
                })
                .collect()
        })
        .collect();
    let mut planes: BTreeMap<Vec<BigInt>, (Vec<i64>, Vec<i64>)> = BTreeMap::new();
    for (pl, alpha, beta) in found.into_iter().flatten() {
        planes.entry(pl).or_insert_with(|| canonical_plane(&alpha, &beta));
    }
    let mut vanishing_pairs: Vec<(Vec<i64>, Vec<i64>)> = planes.into_values().collect();
    vanishing_pairs.sort();
    let top_value = curvature_functional(&frame, theta, &Functional::Top)?;
    let top_vanishes = top_value.norm() < tol;
    Ok(NonalgCertificate {
        bound,
        certified: vanishing_pairs.is_empty() && !top_vanishes,
        vanishing_pairs,
        top_value,
        top_vanishes,
        tol,
        seed: None,
    })
}

/// Uniform skew-symmetric `Θ` with entries in `(−1, 1)`.
pub fn random_theta<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ThetaMatrix {
    let d = 2 * n;
    let mut e = vec![0.0; d * d];
    for j in 0..d {
        for k in j + 1..d {
            let v: f64 = rng.gen_range(-1.0..1.0);
            e[j * d + k] = v;
            e[k * d + j] = -v;
        }
    }
    ThetaMatrix::new(n, e).expect("skew by construction")
}

/// Generator for task `i` of a run seeded with `seed`.
pub fn task_rng(seed: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonalgScan {
    pub seed: u64,
    pub samples: usize,
    pub bound: i64,
    pub certified: usize,
    pub certified_fraction: f64,
    pub certificates: Vec<NonalgCertificate>,
}

/// Certificates for `samples` random `(J, Θ)`; sample `i` uses its own stream.
pub fn nonalg_scan(seed: u64, samples: usize, bound: i64) -> Result<NonalgScan> {
    let certificates = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, i);
            let cs = ComplexStructure::random(2, &mut rng);
            let theta = random_theta(2, &mut rng);
            let mut c = nonalg_certificate(&cs, &theta, bound, None)?;
            c.seed = Some(seed);
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let certified = certificates.iter().filter(|c| c.certified).count();
    Ok(NonalgScan {
        seed,
        samples,
        bound,
        certified,
        certified_fraction: if samples == 0 { 0.0 } else { certified as f64 / samples as f64 },
        certificates,
    })
}
