//! Smooth noncommutative torus as finitely supported twisted Fourier series.
//!
//! An element is `Σ c_m U^m` where `U^m = U_1^{m_1} ⋯ U_d^{m_d}` is an ordered
//! monomial and the generators obey `U_j U_k = e^{2πiΘ_{jk}} U_k U_j`.
//!
//! # Product of ordered monomials
//!
//! In `U^m U^n` every factor `U_k^{n_k}` of the right monomial has to travel
//! left past the factors `U_j^{m_j}` with `j > k`. Iterating the commutation
//! relation gives `U_j^a U_k^b = e^{2πiΘ_{jk}ab} U_k^b U_j^a`, so
//!
//! ```text
//! U^m U^n = e^{2πiσ(m,n)} U^{m+n},   σ(m,n) = Σ_{j>k} Θ_{jk} m_j n_k.
//! ```
//!
//! `σ` is bilinear, hence a 2-cocycle, which makes the product associative.
//! The adjoint of a monomial is `(U^m)* = e^{2πiσ(m,m)} U^{-m}`, the unique
//! multiple of `U^{-m}` with `(U^m)* U^m = 1`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients with modulus below this are dropped after arithmetic.
pub const PRUNE_THRESHOLD: f64 = 1e-15;

/// Integer lattice point indexing a monomial.
pub type Mode = Vec<i64>;

/// Real skew-symmetric `d × d` matrix of commutation phases, `d = 2·n_half`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ThetaRepr", into = "ThetaRepr")]
pub struct ThetaMatrix {
    n_half: usize,
    entries: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ThetaRepr {
    n_half: usize,
    entries: Vec<f64>,
}

impl TryFrom<ThetaRepr> for ThetaMatrix {
    type Error = Error;
    fn try_from(r: ThetaRepr) -> Result<Self> {
        ThetaMatrix::new(r.n_half, r.entries)
    }
}

impl From<ThetaMatrix> for ThetaRepr {
    fn from(t: ThetaMatrix) -> Self {
        ThetaRepr { n_half: t.n_half, entries: t.entries }
    }
}

impl ThetaMatrix {
    /// Builds a matrix from row-major entries. Skew-symmetry is checked exactly.
    pub fn new(n_half: usize, entries: Vec<f64>) -> Result<Self> {
        if n_half == 0 {
            return Err(Error::InvalidInput("complex dimension must be positive".into()));
        }
        let d = 2 * n_half;
        if entries.len() != d * d {
            return Err(Error::Dimension(format!(
                "theta needs {} entries for d = {d}, got {}",
                d * d,
                entries.len()
            )));
        }
        for j in 0..d {
            for k in j..d {
                let a = entries[j * d + k];
                let b = entries[k * d + j];
                if !a.is_finite() || a != -b {
                    return Err(Error::InvalidInput(format!(
                        "theta is not skew-symmetric at entries ({j},{k}) = {a} and ({k},{j}) = {b}"
                    )));
                }
            }
        }
        Ok(Self { n_half, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 || d % 2 != 0 {
            return Err(Error::Dimension(format!("theta must have even positive size, got {d}")));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Dimension(format!("theta row {i} has length {}, expected {d}", rows[i].len())));
        }
        Self::new(d / 2, rows.concat())
    }

    pub fn zero(n_half: usize) -> Self {
        let d = 2 * n_half;
        Self { n_half, entries: vec![0.0; d * d] }
    }

    /// Block-diagonal matrix with blocks `[[0, θ_j], [-θ_j, 0]]`.
    pub fn product_blocks(thetas: &[f64]) -> Result<Self> {
        let n = thetas.len();
        let mut t = Self::zero(n.max(1));
        if n == 0 {
            return Err(Error::InvalidInput("product form needs at least one block".into()));
        }
        let d = 2 * n;
        for (b, &th) in thetas.iter().enumerate() {
            t.entries[(2 * b) * d + 2 * b + 1] = th;
            t.entries[(2 * b + 1) * d + 2 * b] = -th;
        }
        Ok(t)
    }

    /// `2×2` matrix with `Θ_12 = θ`.
    pub fn two_torus(theta: f64) -> Self {
        Self { n_half: 1, entries: vec![0.0, theta, -theta, 0.0] }
    }

    pub fn n_half(&self) -> usize {
        self.n_half
    }

    /// Lattice rank `d = 2n`.
    pub fn rank(&self) -> usize {
        2 * self.n_half
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.entries[j * self.rank() + k]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.rank()).map(|r| r.to_vec()).collect()
    }

    /// `t·Θ`, used for the deformation to the commutative torus.
    pub fn scaled(&self, t: f64) -> Self {
        Self { n_half: self.n_half, entries: self.entries.iter().map(|x| x * t).collect() }
    }

    /// `σ(m, n) = Σ_{j>k} Θ_{jk} m_j n_k`.
    pub fn cocycle(&self, m: &[i64], n: &[i64]) -> f64 {
        let d = self.rank();
        let mut s = 0.0;
        for j in 1..d {
            if m[j] == 0 {
                continue;
            }
            let row = &self.entries[j * d..j * d + j];
            let mut acc = 0.0;
            for (k, th) in row.iter().enumerate() {
                acc += th * n[k] as f64;
            }
            s += acc * m[j] as f64;
        }
        s
    }

    /// `e^{2πiσ(m,n)}` with `σ` reduced mod 1 first.
    pub fn phase(&self, m: &[i64], n: &[i64]) -> Complex64 {
        let s = self.cocycle(m, n);
        Complex64::cis(TAU * (s - s.round()))
    }
}

/// Textual record for one Fourier coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub m: Vec<i64>,
    pub re: f64,
    pub im: f64,
}

/// Finitely supported element `Σ c_m U^m` of the smooth algebra.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierElement {
    theta: Arc<ThetaMatrix>,
    coeffs: BTreeMap<Mode, Complex64>,
}

fn keep(c: Complex64) -> bool {
    c.norm() >= PRUNE_THRESHOLD
}

impl FourierElement {
    pub fn zero(theta: &Arc<ThetaMatrix>) -> Self {
        Self { theta: Arc::clone(theta), coeffs: BTreeMap::new() }
    }

    pub fn scalar(theta: &Arc<ThetaMatrix>, c: Complex64) -> Self {
        Self::monomial(theta, vec![0; theta.rank()], c).expect("zero mode has the right length")
    }

    pub fn one(theta: &Arc<ThetaMatrix>) -> Self {
        Self::scalar(theta, Complex64::new(1.0, 0.0))
    }

    /// `c·U^m`.
    pub fn monomial(theta: &Arc<ThetaMatrix>, m: Mode, c: Complex64) -> Result<Self> {
        Self::from_pairs(theta, [(m, c)])
    }

    /// Generator `U_j` (0-based).
    pub fn generator(theta: &Arc<ThetaMatrix>, j: usize) -> Result<Self> {
        let d = theta.rank();
        if j >= d {
            return Err(Error::IndexOutOfRange { index: j, rank: d });
        }
        let mut m = vec![0; d];
        m[j] = 1;
        Self::monomial(theta, m, Complex64::new(1.0, 0.0))
    }

    /// Sums repeated modes and drops negligible coefficients.
    pub fn from_pairs<I>(theta: &Arc<ThetaMatrix>, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Mode, Complex64)>,
    {
        let d = theta.rank();
        let mut coeffs: BTreeMap<Mode, Complex64> = BTreeMap::new();
        for (m, c) in pairs {
            if m.len() != d {
                return Err(Error::Dimension(format!("mode {m:?} has length {}, expected {d}", m.len())));
            }
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite coefficient at mode {m:?}")));
            }
            *coeffs.entry(m).or_default() += c;
        }
        coeffs.retain(|_, c| keep(*c));
        Ok(Self { theta: Arc::clone(theta), coeffs })
    }

    pub fn from_terms(theta: &Arc<ThetaMatrix>, terms: &[FourierTerm]) -> Result<Self> {
        Self::from_pairs(theta, terms.iter().map(|t| (t.m.clone(), Complex64::new(t.re, t.im))))
    }

    pub fn to_terms(&self) -> Vec<FourierTerm> {
        self.coeffs.iter().map(|(m, c)| FourierTerm { m: m.clone(), re: c.re, im: c.im }).collect()
    }

    pub fn theta(&self) -> &Arc<ThetaMatrix> {
        &self.theta
    }

    pub fn coeff(&self, m: &[i64]) -> Complex64 {
        self.coeffs.get(m).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Mode, &Complex64)> {
        self.coeffs.iter()
    }

    pub fn support_len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// True when the only monomial present is `U^0`.
    pub fn is_constant(&self) -> bool {
        self.coeffs.keys().all(|m| m.iter().all(|&x| x == 0))
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Largest coefficient difference over the union of supports.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, c) in &self.coeffs {
            worst = worst.max((c - other.coeff(m)).norm());
        }
        for (m, c) in &other.coeffs {
            if !self.coeffs.contains_key(m) {
                worst = worst.max(c.norm());
            }
        }
        worst
    }

    fn same_context(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.theta, &other.theta) || self.theta == other.theta {
            Ok(())
        } else {
            Err(Error::ContextMismatch)
        }
    }

    fn map_coeffs(&self, f: impl Fn(&Mode, Complex64) -> Complex64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(m, c)| (m.clone(), f(m, *c)))
            .filter(|(_, c)| keep(*c))
            .collect();
        Self { theta: Arc::clone(&self.theta), coeffs }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.same_context(other)?;
        let mut coeffs = self.coeffs.clone();
        for (m, c) in &other.coeffs {
            *coeffs.entry(m.clone()).or_default() += c;
        }
        coeffs.retain(|_, c| keep(*c));
        Ok(Self { theta: Arc::clone(&self.theta), coeffs })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        self.map_coeffs(|_, c| c * s)
    }

    /// Twisted convolution: `U^m U^n = e^{2πiσ(m,n)} U^{m+n}`.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.same_context(other)?;
        let mut coeffs: BTreeMap<Mode, Complex64> = BTreeMap::new();
        for (m, a) in &self.coeffs {
            for (n, b) in &other.coeffs {
                let sum: Mode = m.iter().zip(n).map(|(x, y)| x + y).collect();
                *coeffs.entry(sum).or_default() += a * b * self.theta.phase(m, n);
            }
        }
        coeffs.retain(|_, c| keep(*c));
        Ok(Self { theta: Arc::clone(&self.theta), coeffs })
    }

    /// `a b − b a`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.multiply(other)?.try_sub(&other.multiply(self)?)
    }

    /// Involution: `(Σ c_m U^m)* = Σ conj(c_m) e^{2πiσ(m,m)} U^{-m}`.
    pub fn star(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(m, c)| {
                let neg: Mode = m.iter().map(|x| -x).collect();
                (neg, c.conj() * self.theta.phase(m, m))
            })
            .collect();
        Self { theta: Arc::clone(&self.theta), coeffs }
    }

    /// Canonical trace: the coefficient of `U^0`.
    pub fn trace(&self) -> Complex64 {
        self.coeff(&vec![0; self.theta.rank()])
    }

    /// `δ_j`: multiplies `c_m` by `2πi·m_j`. `j` is 0-based.
    pub fn derivation(&self, j: usize) -> Result<Self> {
        let d = self.theta.rank();
        if j >= d {
            return Err(Error::IndexOutOfRange { index: j, rank: d });
        }
        Ok(self.map_coeffs(|m, c| c * Complex64::new(0.0, TAU * m[j] as f64)))
    }

    /// Complexified derivation `Σ_k v_k δ_k`: `c_m ↦ 2πi (v·m) c_m`.
    pub fn derive_along(&self, v: &[Complex64]) -> Result<Self> {
        let d = self.theta.rank();
        if v.len() != d {
            return Err(Error::Dimension(format!("direction has length {}, expected {d}", v.len())));
        }
        Ok(self.map_coeffs(|m, c| {
            let vm: Complex64 = v.iter().zip(m).map(|(vk, &mk)| vk * mk as f64).sum();
            c * Complex64::new(0.0, TAU) * vm
        }))
    }

    /// Gauge action of `t ∈ 𝕋^d`: `c_m ↦ (∏ t_j^{m_j}) c_m`.
    pub fn gauge_act(&self, t: &[Complex64]) -> Result<Self> {
        let d = self.theta.rank();
        if t.len() != d {
            return Err(Error::Dimension(format!("gauge parameter has length {}, expected {d}", t.len())));
        }
        if let Some((index, tj)) = t.iter().enumerate().find(|(_, tj)| (tj.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::NotUnimodular { index, modulus: tj.norm() });
        }
        Ok(self.map_coeffs(|m, c| {
            let f: Complex64 = t.iter().zip(m).map(|(tj, &mj)| tj.powi(mj as i32)).product();
            c * f
        }))
    }

    /// Image under the lattice embedding `Z^{d} → Z^{D}`, `m ↦ (m, 0, …, 0)`.
    ///
    /// This is a *-homomorphism exactly when the leading `d × d` block of the
    /// target matrix equals the source matrix.
    pub fn embed(&self, target: &Arc<ThetaMatrix>) -> Result<Self> {
        let d = self.theta.rank();
        let big = target.rank();
        if big < d {
            return Err(Error::Dimension(format!("cannot embed rank {d} into rank {big}")));
        }
        for j in 0..d {
            for k in 0..d {
                if target.get(j, k) != self.theta.get(j, k) {
                    return Err(Error::Hypothesis(format!(
                        "target theta differs from source on the embedded block at ({j},{k})"
                    )));
                }
            }
        }
        let coeffs = self
            .coeffs
            .iter()
            .map(|(m, c)| {
                let mut mm = m.clone();
                mm.resize(big, 0);
                (mm, *c)
            })
            .collect();
        Ok(Self { theta: Arc::clone(target), coeffs })
    }
}

impl fmt::Display for FourierElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .coeffs
            .iter()
            .map(|(m, c)| format!("({:.6}{:+.6}i)U^{:?}", c.re, c.im, m))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// `r × r` matrix over the algebra, acting on column vectors from the left.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixElement {
    rank: usize,
    entries: Vec<FourierElement>,
}

impl MatrixElement {
    pub fn zero(theta: &Arc<ThetaMatrix>, rank: usize) -> Self {
        Self { rank, entries: vec![FourierElement::zero(theta); rank * rank] }
    }

    pub fn scalar_identity(theta: &Arc<ThetaMatrix>, rank: usize, c: Complex64) -> Self {
        let mut m = Self::zero(theta, rank);
        for i in 0..rank {
            m.entries[i * rank + i] = FourierElement::scalar(theta, c);
        }
        m
    }

    pub fn identity(theta: &Arc<ThetaMatrix>, rank: usize) -> Self {
        Self::scalar_identity(theta, rank, Complex64::new(1.0, 0.0))
    }

    /// Row-major entries; all must share one theta.
    pub fn from_entries(rank: usize, entries: Vec<FourierElement>) -> Result<Self> {
        if rank == 0 || entries.len() != rank * rank {
            return Err(Error::Dimension(format!(
                "matrix of rank {rank} needs {} entries, got {}",
                rank * rank,
                entries.len()
            )));
        }
        let first = Arc::clone(entries[0].theta());
        for e in &entries[1..] {
            if e.theta() != &first {
                return Err(Error::ContextMismatch);
            }
        }
        Ok(Self { rank, entries })
    }

    /// `1×1` matrix.
    pub fn from_element(a: FourierElement) -> Self {
        Self { rank: 1, entries: vec![a] }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn theta(&self) -> &Arc<ThetaMatrix> {
        self.entries[0].theta()
    }

    pub fn get(&self, i: usize, j: usize) -> &FourierElement {
        &self.entries[i * self.rank + j]
    }

    pub fn entries(&self) -> &[FourierElement] {
        &self.entries
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.rank != other.rank {
            return Err(Error::Dimension(format!("rank {} vs {}", self.rank, other.rank)));
        }
        if self.theta() != other.theta() {
            return Err(Error::ContextMismatch);
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.try_add(b))
            .collect::<Result<_>>()?;
        Ok(Self { rank: self.rank, entries })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { rank: self.rank, entries: self.entries.iter().map(|a| a.scale(s)).collect() }
    }

    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let r = self.rank;
        let mut entries = Vec::with_capacity(r * r);
        for i in 0..r {
            for j in 0..r {
                let mut acc = FourierElement::zero(self.theta());
                for k in 0..r {
                    acc = acc.try_add(&self.get(i, k).multiply(other.get(k, j))?)?;
                }
                entries.push(acc);
            }
        }
        Ok(Self { rank: r, entries })
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.multiply(other)?.try_sub(&other.multiply(self)?)
    }

    pub fn derive_along(&self, v: &[Complex64]) -> Result<Self> {
        let entries = self.entries.iter().map(|a| a.derive_along(v)).collect::<Result<_>>()?;
        Ok(Self { rank: self.rank, entries })
    }

    pub fn embed(&self, target: &Arc<ThetaMatrix>) -> Result<Self> {
        let entries = self.entries.iter().map(|a| a.embed(target)).collect::<Result<_>>()?;
        Ok(Self { rank: self.rank, entries })
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(FourierElement::max_abs).fold(0.0, f64::max)
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(FourierElement::is_constant)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(FourierElement::is_zero)
    }

    /// Whether this is `c·1` for some scalar `c`, returning `c`.
    pub fn as_scalar_identity(&self) -> Option<Complex64> {
        if !self.is_constant() {
            return None;
        }
        let c = self.get(0, 0).trace();
        for i in 0..self.rank {
            for j in 0..self.rank {
                let e = self.get(i, j).trace();
                let expected = if i == j { c } else { Complex64::default() };
                if e != expected {
                    return None;
                }
            }
        }
        Some(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_element(theta: &Arc<ThetaMatrix>, rng: &mut ChaCha8Rng, support: usize, span: i64) -> FourierElement {
        let d = theta.rank();
        let pairs: Vec<(Mode, Complex64)> = (0..support)
            .map(|_| {
                let m = (0..d).map(|_| rng.gen_range(-span..=span)).collect();
                (m, c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            })
            .collect();
        FourierElement::from_pairs(theta, pairs).unwrap()
    }

    #[test]
    fn generator_order_differs_by_commutation_phase() {
        let th = 0.2371;
        let theta = Arc::new(ThetaMatrix::two_torus(th));
        let u1 = FourierElement::generator(&theta, 0).unwrap();
        let u2 = FourierElement::generator(&theta, 1).unwrap();
        let a = u1.multiply(&u2).unwrap();
        let b = u2.multiply(&u1).unwrap();
        let ratio = a.coeff(&[1, 1]) / b.coeff(&[1, 1]);
        assert!((ratio - Complex64::cis(TAU * th)).norm() < 1e-14);
    }

    #[test]
    fn identity_and_unitarity() {
        let theta = Arc::new(ThetaMatrix::two_torus(0.31));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_element(&theta, &mut rng, 5, 3);
        let one = FourierElement::one(&theta);
        assert_eq!(one.multiply(&a).unwrap().max_abs_diff(&a), 0.0);
        let u = FourierElement::monomial(&theta, vec![2, -1], c(1.0, 0.0)).unwrap();
        let p = u.star().multiply(&u).unwrap();
        assert!(p.max_abs_diff(&one) < 1e-14);
        let p = u.multiply(&u.star()).unwrap();
        assert!(p.max_abs_diff(&one) < 1e-14);
        let lam = FourierElement::scalar(&theta, c(0.5, -2.0));
        assert_eq!(lam.star(), FourierElement::scalar(&theta, c(0.5, 2.0)));
    }

    #[test]
    fn trace_values() {
        let theta = Arc::new(ThetaMatrix::two_torus(0.4));
        assert_eq!(FourierElement::one(&theta).trace(), c(1.0, 0.0));
        assert_eq!(FourierElement::generator(&theta, 0).unwrap().trace(), c(0.0, 0.0));
    }

    #[test]
    fn derivation_on_generators() {
        let theta = Arc::new(ThetaMatrix::two_torus(0.4));
        let u1 = FourierElement::generator(&theta, 0).unwrap();
        let u2 = FourierElement::generator(&theta, 1).unwrap();
        assert_eq!(u1.derivation(0).unwrap(), u1.scale(c(0.0, TAU)));
        assert!(u2.derivation(0).unwrap().is_zero());
        assert_eq!(u1.derivation(2), Err(Error::IndexOutOfRange { index: 2, rank: 2 }));
    }

    #[test]
    fn gauge_action_examples() {
        let theta = Arc::new(ThetaMatrix::two_torus(0.4));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_element(&theta, &mut rng, 6, 2);
        let ones = [c(1.0, 0.0); 2];
        assert_eq!(a.gauge_act(&ones).unwrap(), a);
        let t = [Complex64::cis(0.3), Complex64::cis(-1.1)];
        let u11 = FourierElement::monomial(&theta, vec![1, 1], c(1.0, 0.0)).unwrap();
        let g = u11.gauge_act(&t).unwrap();
        assert!((g.coeff(&[1, 1]) - t[0] * t[1]).norm() < 1e-15);
        assert!((a.gauge_act(&t).unwrap().trace() - a.trace()).norm() < 1e-15);
        assert!(matches!(a.gauge_act(&[c(1.1, 0.0), c(1.0, 0.0)]), Err(Error::NotUnimodular { index: 0, .. })));
    }

    #[test]
    fn context_mismatch_is_rejected() {
        let t1 = Arc::new(ThetaMatrix::two_torus(0.1));
        let t2 = Arc::new(ThetaMatrix::two_torus(0.2));
        let a = FourierElement::one(&t1);
        let b = FourierElement::one(&t2);
        assert_eq!(a.multiply(&b), Err(Error::ContextMismatch));
        // equal values in distinct allocations are the same context
        let t3 = Arc::new(ThetaMatrix::two_torus(0.1));
        assert!(a.multiply(&FourierElement::one(&t3)).is_ok());
    }

    #[test]
    fn theta_validation_names_entry_pair() {
        let err = ThetaMatrix::new(1, vec![0.0, 0.3, -0.2, 0.0]).unwrap_err();
        assert!(err.to_string().contains("(0,1)"), "{err}");
        assert!(ThetaMatrix::new(1, vec![0.1, 0.3, -0.3, 0.0]).is_err());
        assert!(ThetaMatrix::product_blocks(&[0.1, 0.2]).is_ok());
    }

    #[test]
    fn embedding_requires_matching_block() {
        let small = Arc::new(ThetaMatrix::two_torus(0.3));
        let good = Arc::new(ThetaMatrix::product_blocks(&[0.3, 0.7]).unwrap());
        let bad = Arc::new(ThetaMatrix::product_blocks(&[0.2, 0.7]).unwrap());
        let u = FourierElement::generator(&small, 1).unwrap();
        let e = u.embed(&good).unwrap();
        assert_eq!(e.coeff(&[0, 1, 0, 0]), c(1.0, 0.0));
        assert!(u.embed(&bad).is_err());
    }

    #[test]
    fn scalar_identity_detection() {
        let theta = Arc::new(ThetaMatrix::two_torus(0.3));
        let m = MatrixElement::scalar_identity(&theta, 2, c(0.2, 1.0));
        assert_eq!(m.as_scalar_identity(), Some(c(0.2, 1.0)));
        let mut entries = m.entries().to_vec();
        entries[1] = FourierElement::scalar(&theta, c(1.0, 0.0));
        let m2 = MatrixElement::from_entries(2, entries).unwrap();
        assert_eq!(m2.as_scalar_identity(), None);
    }
}
