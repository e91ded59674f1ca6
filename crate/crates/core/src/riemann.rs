//! Riemann forms of complex tori: compatible integer alternating forms,
//! their hermitian forms, canonical (Frobenius) bases, decomposition into
//! decomposable pieces, Siegel normalization and the split-torus example.
//!
//! Lattice coordinates are the `δ`-basis: `E(v, w) = vᵀ E w` for real
//! `2n`-vectors, and multiplication by `i` is `J`. The hermitian form is
//! `H(v, w) = E(Jv, w) + iE(v, w)`, linear in the first argument, written in
//! the basis `x_k` of real vectors with `Q x_k = e_k`.

use faer::Mat;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::algebra::ThetaMatrix;
use crate::complexstruct::{elliptic_tau, period_from_j, ComplexStructure, PeriodMatrix};
use crate::error::{Error, Result};
use crate::exact::{mat_inverse, mat_mul, rat_int, ExactMatrix, GaussRat, Rational};
use crate::heisenberg1d::{standard_module_cohomology, StandardCohomology, StandardModule1D};
use crate::lattice::{hnf_rows, integer_kernel, lll, to_big};
use crate::linalg::{self, CMat, RMat};

pub const DEFAULT_SEARCH_BOUND: i64 = 6;
pub const COMPAT_TOL: f64 = 1e-8;
pub const BLOCK_TOL: f64 = 1e-10;
const RELATION_SCALE: f64 = 1e8;
const ENUMERATION_LIMIT: usize = 5_000_000;

/// Integer alternating form on the lattice `Z^{2n}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IntegerSkewForm {
    e: Vec<Vec<i64>>,
}

impl IntegerSkewForm {
    pub fn new(e: Vec<Vec<i64>>) -> Result<Self> {
        let d = e.len();
        if d == 0 || d % 2 != 0 || e.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension(format!("form must be 2n×2n, got {d} rows")));
        }
        for i in 0..d {
            for j in 0..=i {
                if e[i][j] != -e[j][i] {
                    return Err(Error::InvalidInput(format!("form is not alternating at ({i},{j})")));
                }
            }
        }
        Ok(Self { e })
    }

    /// `E(e_j, e_{n+j}) = 1`.
    pub fn standard(n: usize) -> Self {
        let d = 2 * n;
        let e = (0..d)
            .map(|r| {
                (0..d)
                    .map(|c| {
                        if r < n && c == r + n {
                            1
                        } else if r >= n && r == c + n {
                            -1
                        } else {
                            0
                        }
                    })
                    .collect()
            })
            .collect();
        Self { e }
    }

    fn from_upper(d: usize, upper: &[i64]) -> Self {
        let mut e = vec![vec![0; d]; d];
        let mut t = 0;
        for i in 0..d {
            for j in i + 1..d {
                e[i][j] = upper[t];
                e[j][i] = -upper[t];
                t += 1;
            }
        }
        Self { e }
    }

    pub fn n(&self) -> usize {
        self.e.len() / 2
    }

    pub fn dim(&self) -> usize {
        self.e.len()
    }

    pub fn rows(&self) -> &[Vec<i64>] {
        &self.e
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.e[i][j]
    }

    pub fn scaled(&self, k: i64) -> Result<Self> {
        let e = self
            .e
            .iter()
            .map(|r| r.iter().map(|&x| x.checked_mul(k).ok_or(Error::Overflow("form scaling"))).collect())
            .collect::<Result<_>>()?;
        Ok(Self { e })
    }

    pub fn to_rmat(&self) -> RMat {
        Mat::from_fn(self.dim(), self.dim(), |i, j| self.e[i][j] as f64)
    }

    fn to_exact(&self) -> ExactMatrix<Rational> {
        self.e.iter().map(|r| r.iter().map(|&x| rat_int(x)).collect()).collect()
    }

    pub fn determinant(&self) -> BigInt {
        bareiss_det(&self.e.iter().map(|r| to_big(r)).collect::<Vec<_>>())
    }

    pub fn is_nondegenerate(&self) -> bool {
        !self.determinant().is_zero()
    }

    /// `‖Jᵀ E J − E‖_max`.
    pub fn compatibility_defect(&self, cs: &ComplexStructure) -> f64 {
        let j = cs.matrix();
        let e = self.to_rmat();
        linalg::max_abs_r(&(linalg::transpose(j) * &e * j - &e))
    }

    /// Whether the 4×4 Pfaffians all vanish, i.e. `E ∧ E = 0`.
    pub fn is_decomposable(&self) -> bool {
        let d = self.dim();
        let e = &self.e;
        for a in 0..d {
            for b in a + 1..d {
                for c in b + 1..d {
                    for f in c + 1..d {
                        let pf = i128::from(e[a][b]) * i128::from(e[c][f]) - i128::from(e[a][c]) * i128::from(e[b][f])
                            + i128::from(e[a][f]) * i128::from(e[b][c]);
                        if pf != 0 {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Rank over the rationals.
    pub fn rank(&self) -> usize {
        self.dim() - integer_kernel(&self.e.iter().map(|r| to_big(r)).collect::<Vec<_>>(), self.dim()).len()
    }
}

fn bareiss_det(a: &[Vec<BigInt>]) -> BigInt {
    let n = a.len();
    let mut m = a.to_vec();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n {
        if m[k][k].is_zero() {
            let Some(p) = (k + 1..n).find(|&r| !m[r][k].is_zero()) else { return BigInt::zero() };
            m.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i][j] = (&m[i][j] * &m[k][k] - &m[i][k] * &m[k][j]) / &prev;
            }
        }
        prev = m[k][k].clone();
    }
    sign * &m[n - 1][n - 1]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HermitianFormReport {
    pub h: Vec<Vec<Complex64>>,
    pub eigenvalues: Vec<f64>,
    pub compatibility_defect: f64,
}

impl HermitianFormReport {
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.h.len();
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (self.h[i][j] - self.h[j][i].conj()).norm()).fold(0.0, f64::max)
    }

    fn margin(&self) -> f64 {
        1e-9 * self.eigenvalues.iter().map(|x| x.abs()).sum::<f64>()
    }

    pub fn positive_definite(&self) -> bool {
        let m = self.margin();
        !self.eigenvalues.is_empty() && self.eigenvalues.iter().all(|&x| x > m)
    }

    /// Some eigenvalue within the margin of zero while none is clearly negative.
    pub fn borderline(&self) -> bool {
        let m = self.margin();
        self.eigenvalues.iter().all(|&x| x > -m) && self.eigenvalues.iter().any(|&x| x.abs() <= m)
    }
}

/// `H_{jk} = E(J x_j, x_k) + iE(x_j, x_k)` with `Q x_k = e_k`.
pub fn hermitian_from_form(e: &IntegerSkewForm, cs: &ComplexStructure) -> Result<HermitianFormReport> {
    let n = cs.n();
    if e.n() != n {
        return Err(Error::Dimension(format!("form has size {}, J has {}", e.dim(), 2 * n)));
    }
    let defect = e.compatibility_defect(cs);
    let scale = 1.0 + e.to_rmat().norm_max();
    if defect > COMPAT_TOL * scale {
        return Err(Error::Hypothesis(format!("form is not J-compatible: ‖JᵀEJ − E‖ = {defect:.3e}")));
    }
    hermitian_unchecked(&e.to_rmat(), cs, defect)
}

fn hermitian_unchecked(em: &RMat, cs: &ComplexStructure, defect: f64) -> Result<HermitianFormReport> {
    let n = cs.n();
    let pm = period_from_j(cs)?;
    let s = pm.stacked();
    let rhs = Mat::from_fn(2 * n, n, |r, c| Complex64::new(f64::from(u8::from(r % n == c)), 0.0));
    let xs = linalg::solve(&s, &rhs);
    let x = Mat::from_fn(2 * n, n, |r, c| xs[(r, c)].re);
    let jx = cs.matrix() * &x;
    let a = linalg::transpose(&jx) * em * &x;
    let b = linalg::transpose(&x) * em * &x;
    let h: Vec<Vec<Complex64>> = (0..n).map(|j| (0..n).map(|k| Complex64::new(a[(j, k)], b[(j, k)])).collect()).collect();
    let hm = Mat::from_fn(n, n, |j, k| 0.5 * (h[j][k] + h[k][j].conj()));
    let eigenvalues = linalg::hermitian_eigenvalues(&hm)?;
    Ok(HermitianFormReport { h, eigenvalues, compatibility_defect: defect })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Found,
    NoneWithinBound,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiemannSearch {
    pub verdict: Verdict,
    pub bound: i64,
    /// Dimension of the real solution space of the compatibility system.
    pub kernel_dim: usize,
    /// Rank of the integer solutions used for the enumeration.
    pub integer_rank: usize,
    pub exact: bool,
    pub form: Option<IntegerSkewForm>,
    pub eigenvalues: Option<Vec<f64>>,
    pub candidates: usize,
    pub borderline: usize,
    pub note: Option<String>,
}

/// Upper-triangle unknowns `(i, j)`, `i < j`.
fn unknowns(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect()
}

/// Columns: images `JᵀBJ − B` of the basis forms, upper triangles flattened.
fn compatibility_float(j: &RMat) -> RMat {
    let d = j.nrows();
    let idx = unknowns(d);
    let mut c = Mat::zeros(idx.len(), idx.len());
    for (col, &(a, b)) in idx.iter().enumerate() {
        let mut bm: RMat = Mat::zeros(d, d);
        bm[(a, b)] = 1.0;
        bm[(b, a)] = -1.0;
        let img = linalg::transpose(j) * &bm * j - &bm;
        for (row, &(p, q)) in idx.iter().enumerate() {
            c[(row, col)] = img[(p, q)];
        }
    }
    c
}

fn compatibility_exact(j: &ExactMatrix<Rational>) -> ExactMatrix<Rational> {
    let d = j.len();
    let idx = unknowns(d);
    let jt: ExactMatrix<Rational> = (0..d).map(|r| (0..d).map(|c| j[c][r].clone()).collect()).collect();
    let mut c = vec![vec![Rational::zero(); idx.len()]; idx.len()];
    for (col, &(a, b)) in idx.iter().enumerate() {
        let mut bm = vec![vec![Rational::zero(); d]; d];
        bm[a][b] = Rational::one();
        bm[b][a] = -Rational::one();
        let img = mat_mul(&mat_mul(&jt, &bm), j);
        for (row, &(p, q)) in idx.iter().enumerate() {
            c[row][col] = &img[p][q] - &bm[p][q];
        }
    }
    c
}

fn integerize_rows(a: &ExactMatrix<Rational>) -> Vec<Vec<BigInt>> {
    use num_integer::Integer;
    a.iter()
        .map(|row| {
            let l = row.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
            row.iter().map(|x| (x * BigRational::from_integer(l.clone())).to_integer()).collect()
        })
        .collect()
}

/// Integer vectors `x` with small `‖C x‖`, from LLL on `[I | round(S·Cᵀ)]`.
fn integer_relations(c: &RMat, tol: f64) -> Vec<Vec<BigInt>> {
    let m = c.ncols();
    let rows: Vec<Vec<BigInt>> = (0..m)
        .map(|i| {
            let mut v: Vec<BigInt> = (0..m).map(|k| BigInt::from(i64::from(k == i))).collect();
            v.extend((0..c.nrows()).map(|r| BigInt::from((RELATION_SCALE * c[(r, i)]).round() as i64)));
            v
        })
        .collect();
    let cmax = linalg::max_abs_r(c).max(1.0);
    lll(&rows)
        .into_iter()
        .map(|v| v[..m].to_vec())
        .filter(|x| {
            let xf: Vec<f64> = x.iter().map(|v| v.to_f64().unwrap_or(f64::INFINITY)).collect();
            let norm = xf.iter().map(|v| v.abs()).fold(0.0, f64::max);
            norm > 0.0 && (0..c.nrows()).all(|r| (0..m).map(|k| c[(r, k)] * xf[k]).sum::<f64>().abs() <= tol * cmax * norm)
        })
        .collect()
}

/// Lattice points of the row span of `basis` (row HNF) with sup-norm exactly
/// `s`, in lexicographic order.
fn level_points(basis: &[Vec<i128>], pivots: &[usize], s: i128, limit: usize) -> Option<Vec<Vec<i128>>> {
    fn rec(
        basis: &[Vec<i128>],
        pivots: &[usize],
        s: i128,
        i: usize,
        x: &mut Vec<i128>,
        out: &mut Vec<Vec<i128>>,
        limit: usize,
    ) -> bool {
        let width = x.len();
        let settled = if i < pivots.len() { pivots[i] } else { width };
        if x[..settled].iter().any(|v| v.abs() > s) {
            return true;
        }
        if i == basis.len() {
            if x.iter().any(|v| v.abs() == s) {
                out.push(x.clone());
                if out.len() > limit {
                    return false;
                }
            }
            return true;
        }
        let p = pivots[i];
        let h = basis[i][p];
        let lo = (-s - x[p]).div_euclid(h) + i128::from((-s - x[p]).rem_euclid(h) != 0);
        let hi = (s - x[p]).div_euclid(h);
        for cnum in lo..=hi {
            for (xv, b) in x.iter_mut().zip(&basis[i]) {
                *xv += cnum * b;
            }
            let ok = rec(basis, pivots, s, i + 1, x, out, limit);
            for (xv, b) in x.iter_mut().zip(&basis[i]) {
                *xv -= cnum * b;
            }
            if !ok {
                return false;
            }
        }
        true
    }
    let width = basis.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    let mut x = vec![0i128; width];
    if !rec(basis, pivots, s, 0, &mut x, &mut out, limit) {
        return None;
    }
    out.sort();
    Some(out)
}

/// Exact positivity of `H` through the real symmetric form `(JᵀE − EJ)/2`
/// (leading principal pivots of an unpivoted elimination).
fn exactly_positive(e: &IntegerSkewForm, j: &ExactMatrix<Rational>) -> bool {
    let d = j.len();
    let em = e.to_exact();
    let jt: ExactMatrix<Rational> = (0..d).map(|r| (0..d).map(|c| j[c][r].clone()).collect()).collect();
    let a = mat_mul(&jt, &em);
    let two = rat_int(2);
    let mut p: Vec<Vec<Rational>> = (0..d).map(|r| (0..d).map(|c| (&a[r][c] + &a[c][r]) / &two).collect()).collect();
    for k in 0..d {
        if !p[k][k].is_positive() {
            return false;
        }
        for r in k + 1..d {
            let f = &p[r][k] / &p[k][k];
            for c in k..d {
                let t = &f * &p[k][c];
                p[r][c] -= t;
            }
        }
    }
    true
}

/// Bounded search for a Riemann form. Candidates are the integer compatible
/// forms whose entries have sup-norm at most `bound`, visited by increasing
/// sup-norm and lexicographically within a level; the first one with
/// positive-definite `H` is returned.
pub fn riemann_form_search(cs: &ComplexStructure, bound: i64, exact: bool) -> Result<RiemannSearch> {
    if bound < 1 {
        return Err(Error::InvalidInput("bound must be at least 1".into()));
    }
    let d = 2 * cs.n();
    let exact_j = if exact { cs.exact() } else { None };
    let cf = compatibility_float(cs.matrix());
    let sv = linalg::singular_values_r(&cf)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    let kernel_dim = sv.iter().filter(|&&s| s <= 1e-10 * smax.max(1.0)).count() + cf.ncols().saturating_sub(sv.len());
    let mut note = None;
    let kernel: Vec<Vec<BigInt>> = match exact_j {
        Some(j) => integer_kernel(&integerize_rows(&compatibility_exact(j)), cf.ncols()),
        None => {
            if exact {
                note = Some("J has no exact rational form; the floating path was used".to_string());
            }
            let rel = integer_relations(&cf, COMPAT_TOL);
            let perp = integer_kernel(&rel, cf.ncols());
            integer_kernel(&perp, cf.ncols())
        }
    };
    let integer_rank = kernel.len();
    let mut report = RiemannSearch {
        verdict: Verdict::NoneWithinBound,
        bound,
        kernel_dim,
        integer_rank,
        exact: exact_j.is_some(),
        form: None,
        eigenvalues: None,
        candidates: 0,
        borderline: 0,
        note,
    };
    if integer_rank == 0 {
        return Ok(report);
    }
    let hnf = hnf_rows(&kernel);
    let basis: Vec<Vec<i128>> = hnf
        .iter()
        .map(|r| r.iter().map(|v| v.to_i128().ok_or(Error::Overflow("lattice basis"))).collect())
        .collect::<Result<_>>()?;
    let pivots: Vec<usize> = basis.iter().map(|r| r.iter().position(|&v| v != 0).expect("nonzero row")).collect();
    for s in 1..=i128::from(bound) {
        let Some(points) = level_points(&basis, &pivots, s, ENUMERATION_LIMIT) else {
            report.verdict = Verdict::Inconclusive;
            report.note = Some(format!("more than {ENUMERATION_LIMIT} candidates at sup-norm {s}"));
            return Ok(report);
        };
        for p in points {
            report.candidates += 1;
            let upper: Vec<i64> = p.iter().map(|&v| v as i64).collect();
            let form = IntegerSkewForm::from_upper(d, &upper);
            if exact_j.is_none() && form.compatibility_defect(cs) > COMPAT_TOL * (1.0 + s as f64) {
                continue;
            }
            let h = hermitian_unchecked(&form.to_rmat(), cs, form.compatibility_defect(cs))?;
            let positive = match exact_j {
                Some(j) => exactly_positive(&form, j),
                None => {
                    if h.borderline() {
                        report.borderline += 1;
                    }
                    h.positive_definite()
                }
            };
            if positive {
                report.verdict = Verdict::Found;
                report.eigenvalues = Some(h.eigenvalues);
                report.form = Some(form);
                return Ok(report);
            }
        }
    }
    if report.borderline > 0 {
        report.verdict = Verdict::Inconclusive;
        report.note = Some(format!("{} candidates had eigenvalues within the positivity margin", report.borderline));
    }
    Ok(report)
}

/// Unimodular `U` (columns `ν_1..ν_{2n}`) with `Uᵀ E U = [[0, D], [−D, 0]]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FrobeniusBasis {
    u: Vec<Vec<i64>>,
    divisors: Vec<i64>,
}

impl FrobeniusBasis {
    pub fn u(&self) -> &[Vec<i64>] {
        &self.u
    }

    pub fn divisors(&self) -> &[i64] {
        &self.divisors
    }

    pub fn column(&self, k: usize) -> Vec<i64> {
        self.u.iter().map(|r| r[k]).collect()
    }

    fn big(&self) -> Vec<Vec<BigInt>> {
        self.u.iter().map(|r| to_big(r)).collect()
    }

    pub fn determinant(&self) -> BigInt {
        bareiss_det(&self.big())
    }

    /// Exact check of the defining identities.
    pub fn verify(&self, e: &IntegerSkewForm) -> bool {
        let n = self.divisors.len();
        let u = self.big();
        let em: Vec<Vec<BigInt>> = e.rows().iter().map(|r| to_big(r)).collect();
        let d = 2 * n;
        for a in 0..d {
            for b in 0..d {
                let mut v = BigInt::zero();
                for i in 0..d {
                    for j in 0..d {
                        v += &u[i][a] * &em[i][j] * &u[j][b];
                    }
                }
                let expected = if a < n && b == a + n {
                    BigInt::from(self.divisors[a])
                } else if a >= n && a == b + n {
                    -BigInt::from(self.divisors[b])
                } else {
                    BigInt::zero()
                };
                if v != expected {
                    return false;
                }
            }
        }
        self.determinant().abs().is_one()
            && self.divisors.iter().all(|&x| x > 0)
            && self.divisors.windows(2).all(|w| w[1] % w[0] == 0)
    }

    /// Exact integer inverse.
    pub fn inverse(&self) -> Result<Vec<Vec<i64>>> {
        let ex: ExactMatrix<Rational> = self.u.iter().map(|r| r.iter().map(|&x| rat_int(x)).collect()).collect();
        let inv = mat_inverse(&ex).ok_or_else(|| Error::Numerical("basis matrix is singular".into()))?;
        inv.iter()
            .map(|r| r.iter().map(|x| x.to_integer().to_i64().ok_or(Error::Overflow("basis inverse"))).collect())
            .collect()
    }
}

fn ck(v: Option<i128>) -> Result<i128> {
    v.ok_or(Error::Overflow("frobenius reduction"))
}

fn congruence(e: &[Vec<i128>], u: &[Vec<i128>]) -> Result<Vec<Vec<i128>>> {
    let d = e.len();
    let mut eu = vec![vec![0i128; d]; d];
    for i in 0..d {
        for b in 0..d {
            let mut acc = 0i128;
            for j in 0..d {
                acc = ck(acc.checked_add(ck(e[i][j].checked_mul(u[j][b]))?))?;
            }
            eu[i][b] = acc;
        }
    }
    let mut out = vec![vec![0i128; d]; d];
    for a in 0..d {
        for b in 0..d {
            let mut acc = 0i128;
            for i in 0..d {
                acc = ck(acc.checked_add(ck(u[i][a].checked_mul(eu[i][b]))?))?;
            }
            out[a][b] = acc;
        }
    }
    Ok(out)
}

/// `column[k] += q·column[src]`.
fn column_add(u: &mut [Vec<i128>], k: usize, src: usize, q: i128) -> Result<()> {
    for row in u.iter_mut() {
        row[k] = ck(row[k].checked_add(ck(q.checked_mul(row[src]))?))?;
    }
    Ok(())
}

/// Elementary-divisor reduction of an alternating form by unimodular basis
/// changes, pivoting on the smallest nonzero entry (first in lexicographic
/// position on ties).
pub fn frobenius_basis(e: &IntegerSkewForm) -> Result<FrobeniusBasis> {
    let d = e.dim();
    let n = d / 2;
    let em: Vec<Vec<i128>> = e.rows().iter().map(|r| r.iter().map(|&x| i128::from(x)).collect()).collect();
    let mut u: Vec<Vec<i128>> = (0..d).map(|i| (0..d).map(|j| i128::from(i == j)).collect()).collect();
    let mut remaining: Vec<usize> = (0..d).collect();
    let mut pairs: Vec<(usize, usize, i128)> = Vec::with_capacity(n);
    'outer: while !remaining.is_empty() {
        let a = congruence(&em, &u)?;
        let mut best: Option<(i128, usize, usize)> = None;
        for (x, &i) in remaining.iter().enumerate() {
            for &j in &remaining[x + 1..] {
                let v = a[i][j].abs();
                if v != 0 && best.map_or(true, |(b, _, _)| v < b) {
                    best = Some((v, i, j));
                }
            }
        }
        let Some((_, i0, j0)) = best else {
            return Err(Error::DegenerateForm("form is degenerate".into()));
        };
        let (i, j) = if a[i0][j0] > 0 { (i0, j0) } else { (j0, i0) };
        let p = a[i][j];
        let others: Vec<usize> = remaining.iter().copied().filter(|&k| k != i && k != j).collect();
        let mut changed = false;
        for &k in &others {
            let q = a[i][k].div_euclid(p);
            if q != 0 {
                column_add(&mut u, k, j, -q)?;
                changed = true;
            }
            let q2 = a[j][k].div_euclid(p);
            if q2 != 0 {
                column_add(&mut u, k, i, q2)?;
                changed = true;
            }
        }
        if changed {
            continue;
        }
        if others.iter().any(|&k| a[i][k] != 0 || a[j][k] != 0) {
            continue;
        }
        for (x, &k) in others.iter().enumerate() {
            for &l in &others[x + 1..] {
                if a[k][l] % p != 0 {
                    column_add(&mut u, i, k, 1)?;
                    continue 'outer;
                }
            }
        }
        pairs.push((i, j, p));
        remaining.retain(|&k| k != i && k != j);
    }
    let order: Vec<usize> = pairs.iter().map(|x| x.0).chain(pairs.iter().map(|x| x.1)).collect();
    let to64 = |v: i128| i64::try_from(v).map_err(|_| Error::Overflow("frobenius basis"));
    let u_out = (0..d).map(|r| order.iter().map(|&c| to64(u[r][c])).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
    let divisors = pairs.iter().map(|x| to64(x.2)).collect::<Result<Vec<_>>>()?;
    Ok(FrobeniusBasis { u: u_out, divisors })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FormPiece {
    pub form: IntegerSkewForm,
    pub hermitian: HermitianFormReport,
    pub positive_eigenvalues: usize,
    pub null_eigenvalues: usize,
}

/// `S_j = U⁻ᵀ (d_j ν_j* ∧ ν_{j+n}*) U⁻¹`: `E` on the span of `ν_j, ν_{j+n}`
/// and zero on the other basis vectors.
pub fn decompose_riemann_form(e: &IntegerSkewForm, basis: &FrobeniusBasis, cs: &ComplexStructure) -> Result<Vec<FormPiece>> {
    let n = e.n();
    if cs.n() != n || basis.divisors().len() != n {
        return Err(Error::Dimension("form, basis and J sizes differ".into()));
    }
    if !basis.verify(e) {
        return Err(Error::InvalidInput("basis is not a Frobenius basis of the form".into()));
    }
    let whole = hermitian_from_form(e, cs)?;
    if !whole.positive_definite() {
        return Err(Error::Hypothesis("hermitian form of E is not positive definite".into()));
    }
    let w = basis.inverse()?;
    let d = 2 * n;
    let mut pieces = Vec::with_capacity(n);
    for j in 0..n {
        let dj = basis.divisors()[j];
        let s: Vec<Vec<i64>> = (0..d)
            .map(|a| (0..d).map(|b| dj * (w[j][a] * w[j + n][b] - w[j + n][a] * w[j][b])).collect())
            .collect();
        let form = IntegerSkewForm::new(s)?;
        let hermitian = hermitian_from_form(&form, cs).map_err(|err| match err {
            Error::Hypothesis(msg) => Error::Hypothesis(format!("piece {} is not J-compatible ({msg})", j + 1)),
            other => other,
        })?;
        let tol = 1e-9 * hermitian.eigenvalues.iter().map(|x| x.abs()).sum::<f64>();
        let positive_eigenvalues = hermitian.eigenvalues.iter().filter(|&&x| x > tol).count();
        let null_eigenvalues = hermitian.eigenvalues.iter().filter(|&&x| x.abs() <= tol).count();
        pieces.push(FormPiece { form, hermitian, positive_eigenvalues, null_eigenvalues });
    }
    Ok(pieces)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiegelResult {
    pub omega: Vec<Vec<Complex64>>,
    pub symmetric: bool,
    pub positive: bool,
    pub asymmetry: f64,
    pub min_imag_eigenvalue: f64,
}

fn siegel_flags(omega: &CMat) -> Result<SiegelResult> {
    let n = omega.nrows();
    let asymmetry = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (omega[(i, j)] - omega[(j, i)]).norm()).fold(0.0, f64::max);
    let im = Mat::from_fn(n, n, |i, j| Complex64::new(0.5 * (omega[(i, j)].im + omega[(j, i)].im), 0.0));
    let ev = linalg::hermitian_eigenvalues(&im)?;
    let min_imag_eigenvalue = ev.first().copied().unwrap_or(0.0);
    Ok(SiegelResult {
        omega: linalg::cmat_to_rows(omega),
        symmetric: asymmetry <= 1e-8,
        positive: min_imag_eigenvalue > 0.0,
        asymmetry,
        min_imag_eigenvalue,
    })
}

/// `Ω = block₂⁻¹ block₁`, where `block₂` holds the columns listed in `split`
/// and `block₁` the remaining columns in order.
pub fn siegel_normalize(pm: &PeriodMatrix, split: &[usize]) -> Result<SiegelResult> {
    let n = pm.n();
    let mut seen = vec![false; 2 * n];
    if split.len() != n || split.iter().any(|&c| c >= 2 * n || std::mem::replace(&mut seen[c], true)) {
        return Err(Error::InvalidInput(format!("split must list {n} distinct columns below {}", 2 * n)));
    }
    let rest: Vec<usize> = (0..2 * n).filter(|c| !split.contains(c)).collect();
    let q = pm.matrix();
    let b2 = Mat::from_fn(n, n, |r, c| q[(r, split[c])]);
    let b1 = Mat::from_fn(n, n, |r, c| q[(r, rest[c])]);
    if linalg::rcond(&b2)? < 1e-12 {
        return Err(Error::DegenerateLattice("selected column block is singular".into()));
    }
    siegel_flags(&linalg::solve(&b2, &b1))
}

/// Classical normalization in a Frobenius basis: `Ω = D Q_μ⁻¹ Q_λ` where
/// `Q_λ`, `Q_μ` are the images of `ν_1..ν_n` and `ν_{n+1}..ν_{2n}`.
pub fn siegel_frobenius(pm: &PeriodMatrix, basis: &FrobeniusBasis) -> Result<SiegelResult> {
    let n = pm.n();
    if basis.divisors().len() != n {
        return Err(Error::Dimension("basis size differs from the period matrix".into()));
    }
    let u = Mat::from_fn(2 * n, 2 * n, |r, c| Complex64::new(basis.u()[r][c] as f64, 0.0));
    let qu = pm.matrix() * u;
    let ql = Mat::from_fn(n, n, |r, c| qu[(r, c)]);
    let qm = Mat::from_fn(n, n, |r, c| qu[(r, c + n)]);
    if linalg::rcond(&qm)? < 1e-12 {
        return Err(Error::DegenerateLattice("Q_μ is singular".into()));
    }
    let z = linalg::solve(&qm, &ql);
    let omega = Mat::from_fn(n, n, |r, c| z[(r, c)] * basis.divisors()[r] as f64);
    siegel_flags(&omega)
}

/// Columns `(1,0), (τ′,0), (0,1), (w,τ)`.
pub fn split_torus_example(tau: Complex64, tau_prime: Complex64, w: Complex64) -> Result<PeriodMatrix> {
    if !(tau.im > 0.0 && tau_prime.im > 0.0) {
        return Err(Error::InvalidInput("τ and τ′ must lie in the upper half-plane".into()));
    }
    let z = Complex64::default();
    let one = Complex64::new(1.0, 0.0);
    PeriodMatrix::new(&[vec![one, tau_prime, z, w], vec![z, z, one, tau]])
}

/// Gaussian-rational variant; the resulting `J` is exact.
pub fn split_torus_exact(tau: GaussRat, tau_prime: GaussRat, w: GaussRat) -> Result<PeriodMatrix> {
    if !(tau.im.is_positive() && tau_prime.im.is_positive()) {
        return Err(Error::InvalidInput("τ and τ′ must lie in the upper half-plane".into()));
    }
    let z = GaussRat::zero();
    let one = GaussRat::one();
    PeriodMatrix::from_exact(vec![vec![one.clone(), tau_prime, z.clone(), w], vec![z.clone(), z, one, tau]])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockStructure {
    pub product_type: bool,
    pub splitting: bool,
    pub theta12: Option<f64>,
    pub j_coupling: f64,
    pub j_leading_coupling: f64,
    pub theta_coupling: f64,
}

pub fn detect_block_structure(theta: &ThetaMatrix, cs: &ComplexStructure) -> Result<BlockStructure> {
    if theta.n_half() != cs.n() {
        return Err(Error::Dimension("theta and J sizes differ".into()));
    }
    let d = theta.rank();
    let tm = Mat::from_fn(d, d, |r, c| theta.get(r, c));
    let j_coupling = cs.off_block_max(false);
    let j_leading_coupling = cs.off_block_max(true);
    let theta_coupling = crate::complexstruct::off_block_max(&tm, false);
    let splitting = j_leading_coupling <= BLOCK_TOL;
    Ok(BlockStructure {
        product_type: j_coupling <= BLOCK_TOL && theta_coupling <= BLOCK_TOL,
        splitting,
        theta12: splitting.then(|| theta.get(0, 1)),
        j_coupling,
        j_leading_coupling,
        theta_coupling,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NcRiemannBound {
    pub bound: usize,
    pub multiplier: i64,
    pub divisors: Vec<i64>,
    pub degree: i64,
    pub tau: Complex64,
    pub cohomology: StandardCohomology,
}

pub const NCRIEMANN_TRUNCATION: usize = 200;

/// Lower bound on `dim H⁰` of a bundle obtained by pushing forward a standard
/// module of degree `k·d₁` from the elliptic curve spanned by `ν_1, ν_{n+1}`.
/// The plane and its complement must both be `J`-invariant.
pub fn ncriemann_h0_bound(theta: &ThetaMatrix, cs: &ComplexStructure, e: &IntegerSkewForm, k: i64) -> Result<NcRiemannBound> {
    let n = cs.n();
    if theta.n_half() != n || e.n() != n {
        return Err(Error::Dimension("theta, J and E sizes differ".into()));
    }
    if k < 1 {
        return Err(Error::InvalidInput("multiplier k must be at least 1".into()));
    }
    let h = hermitian_from_form(e, cs)?;
    if !h.positive_definite() {
        return Err(Error::Hypothesis("E is not a Riemann form for J: hermitian form is not positive definite".into()));
    }
    let ke = e.scaled(k)?;
    let basis = frobenius_basis(&ke)?;
    let d = 2 * n;
    let u = Mat::from_fn(d, d, |r, c| basis.u()[r][c] as f64);
    let jp = linalg::inverse_r(&u) * cs.matrix() * &u;
    let plane = [0, n];
    let mut coupling: f64 = 0.0;
    for r in 0..d {
        for c in 0..d {
            if plane.contains(&r) != plane.contains(&c) {
                coupling = coupling.max(jp[(r, c)].abs());
            }
        }
    }
    if coupling > BLOCK_TOL * (1.0 + linalg::max_abs_r(&jp)) {
        return Err(Error::Hypothesis(format!(
            "span(ν_1, ν_{}) is not split-compatible with J in the Frobenius basis (coupling {coupling:.3e})",
            n + 1
        )));
    }
    let j1 = ComplexStructure::new(&[vec![jp[(0, 0)], jp[(0, n)]], vec![jp[(n, 0)], jp[(n, n)]]])?;
    let tau = elliptic_tau(&j1)?;
    let degree = basis.divisors()[0];
    let sm = StandardModule1D::new(1, degree, tau, NCRIEMANN_TRUNCATION)?;
    let cohomology = standard_module_cohomology(&sm, crate::dolbeault::DEFAULT_TOL_REL)?;
    Ok(NcRiemannBound {
        bound: cohomology.h0,
        multiplier: k,
        divisors: basis.divisors().to_vec(),
        degree,
        tau,
        cohomology,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexstruct::j_from_period;
    use crate::exact::rat;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn frobenius_of_standard_and_scaled() {
        let e = IntegerSkewForm::standard(2);
        let b = frobenius_basis(&e).unwrap();
        assert_eq!(b.divisors(), &[1, 1]);
        assert!(b.verify(&e));
        let b2 = frobenius_basis(&e.scaled(2).unwrap()).unwrap();
        assert_eq!(b2.divisors(), &[2, 2]);
    }

    #[test]
    fn frobenius_divisor_chain() {
        let e = IntegerSkewForm::new(vec![vec![0, 2, 0, 0], vec![-2, 0, 0, 0], vec![0, 0, 0, 3], vec![0, 0, -3, 0]]).unwrap();
        let b = frobenius_basis(&e).unwrap();
        assert_eq!(b.divisors(), &[1, 6]);
        assert!(b.verify(&e));
        assert!(frobenius_basis(&IntegerSkewForm::new(vec![vec![0, 1, 0, 0], vec![-1, 0, 0, 0], vec![0; 4], vec![0; 4]]).unwrap()).is_err());
    }

    #[test]
    fn elliptic_curve_always_has_a_form() {
        for tau in [c(0.0, 1.0), c(0.37, 0.81), c(-2.0, 0.2)] {
            let cs = ComplexStructure::from_tau(tau).unwrap();
            let r = riemann_form_search(&cs, 2, false).unwrap();
            assert_eq!(r.verdict, Verdict::Found, "{tau}");
        }
    }

    #[test]
    fn square_curve_hermitian_is_positive() {
        let pm = PeriodMatrix::new(&[vec![c(0.0, 1.0), c(1.0, 0.0)]]).unwrap();
        let cs = j_from_period(&pm).unwrap();
        let e = IntegerSkewForm::new(vec![vec![0, 1], vec![-1, 0]]).unwrap();
        let h = hermitian_from_form(&e, &cs).unwrap();
        assert!(h.hermitian_defect() < 1e-12);
        assert!(h.eigenvalues[0] > 0.0);
        let s = siegel_frobenius(&pm, &frobenius_basis(&e).unwrap()).unwrap();
        assert!((s.omega[0][0] - c(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn siegel_examples() {
        let z = c(0.0, 0.0);
        let one = c(1.0, 0.0);
        let i = c(0.0, 1.0);
        let pm = PeriodMatrix::new(&[vec![i, z, one, z], vec![z, i, z, one]]).unwrap();
        let s = siegel_normalize(&pm, &[2, 3]).unwrap();
        assert!(s.symmetric && s.positive);
        let pm = PeriodMatrix::new(&[vec![i, one, one, z], vec![z, i, z, one]]).unwrap();
        assert!(!siegel_normalize(&pm, &[2, 3]).unwrap().symmetric);
        let st = split_torus_example(c(0.2, 1.1), c(-0.3, 0.9), z).unwrap();
        let s = siegel_normalize(&st, &[0, 2]).unwrap();
        assert!((s.omega[0][0] - c(-0.3, 0.9)).norm() < 1e-12 && (s.omega[1][1] - c(0.2, 1.1)).norm() < 1e-12);
        assert!(s.symmetric && s.positive);
    }

    #[test]
    fn exact_split_torus_structure() {
        let i = GaussRat::i();
        let pm = split_torus_exact(i.clone(), i, GaussRat::new(rat(1, 2), rat(1, 3))).unwrap();
        let cs = j_from_period(&pm).unwrap();
        assert!(cs.exact().is_some());
    }
}
