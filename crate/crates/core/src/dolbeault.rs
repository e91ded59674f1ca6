//! Truncated Dolbeault complexes of free modules.
//!
//! A free module `A^r` carries `∇̄_j = ∂̄_j + a_j` where `∂̄_j = Σ_k W_{jk} δ_k`
//! and `a_j` acts by left multiplication. Forms `Σ_I s_I dz̄_I` are expanded in
//! the orthonormal basis `U^m e_α dz̄'_I`: monomials are orthonormal for the
//! trace inner product, and `dz̄'` is dual to the frame `W' = L⁻¹W`, where
//! `LLᴴ` is the Gram matrix of `W` for the J-invariant metric. In that frame
//! `∂̄'_j U^m = ξ_j(m) U^m` with `ξ(m) = 2πi W' m`.
//!
//! Modes are cut to the box `|m|_∞ ≤ N` and multiplication operators are
//! compressed to it. The compressed operators are block diagonal over the
//! connected components of the box under the connection offsets, and each
//! block is handled by a dense singular value decomposition.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{FourierElement, MatrixElement, Mode, ThetaMatrix};
use crate::complexstruct::{invariant_metric, AntiholFrame, ComplexStructure};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

pub const DEFAULT_TOL_REL: f64 = 1e-8;
pub const FLAT_TOL: f64 = 1e-10;
/// A result is conclusive when no singular value lies within this factor of
/// the kernel threshold.
pub const GAP_FACTOR: f64 = 10.0;

/// Zero-order parts `a_1..a_n` of `∇̄` on `A^r`, one per frame direction.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeConnection {
    rank: usize,
    terms: Vec<MatrixElement>,
}

impl FreeConnection {
    pub fn new(rank: usize, terms: Vec<MatrixElement>) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidInput("connection rank must be positive".into()));
        }
        let Some(first) = terms.first() else {
            return Err(Error::InvalidInput("connection needs at least one term".into()));
        };
        let theta = Arc::clone(first.theta());
        for (j, t) in terms.iter().enumerate() {
            if t.rank() != rank {
                return Err(Error::Dimension(format!("term {j} has rank {}, expected {rank}", t.rank())));
            }
            if !Arc::ptr_eq(t.theta(), &theta) && **t.theta() != *theta {
                return Err(Error::ContextMismatch);
            }
        }
        if theta.n_half() != terms.len() {
            return Err(Error::Dimension(format!(
                "{} terms given for complex dimension {}",
                terms.len(),
                theta.n_half()
            )));
        }
        Ok(Self { rank, terms })
    }

    pub fn trivial(theta: &Arc<ThetaMatrix>, rank: usize) -> Self {
        Self { rank, terms: vec![MatrixElement::zero(theta, rank); theta.n_half()] }
    }

    /// `a_j = c_j·1`.
    pub fn scalar(theta: &Arc<ThetaMatrix>, rank: usize, c: &[Complex64]) -> Result<Self> {
        Self::new(rank, c.iter().map(|&cj| MatrixElement::scalar_identity(theta, rank, cj)).collect())
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n(&self) -> usize {
        self.terms.len()
    }

    pub fn theta(&self) -> &Arc<ThetaMatrix> {
        self.terms[0].theta()
    }

    pub fn terms(&self) -> &[MatrixElement] {
        &self.terms
    }

    /// Same coefficients over another noncommutativity matrix of equal size.
    pub fn with_theta(&self, theta: &Arc<ThetaMatrix>) -> Result<Self> {
        if theta.rank() != self.theta().rank() {
            return Err(Error::Dimension("theta size differs".into()));
        }
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let entries = t
                    .entries()
                    .iter()
                    .map(|e| FourierElement::from_pairs(theta, e.iter().map(|(m, c)| (m.clone(), *c))))
                    .collect::<Result<Vec<_>>>()?;
                MatrixElement::from_entries(self.rank, entries)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.rank, terms)
    }
}

/// Flat connection `a_j = ξ_j(m₀)·X + c_j·1` with `X = Σ_k X_k U^{k m₀}`,
/// `k ≥ 1`, where `ξ_j(m) = 2πi (W m)_j`. All `a_j` are multiples of one
/// element plus scalars, so the curvature vanishes identically; in the
/// compressed complex the operators `∇̄_j` still commute exactly.
pub fn line_flat_connection(
    theta: &Arc<ThetaMatrix>,
    frame: &AntiholFrame,
    m0: &[i64],
    x: &[(i64, Vec<Complex64>)],
    c: &[Complex64],
) -> Result<FreeConnection> {
    let n = frame.n();
    let d = 2 * n;
    if m0.len() != d || c.len() != n || theta.rank() != d {
        return Err(Error::Dimension("line connection data has the wrong size".into()));
    }
    let rank = x.first().map_or(1, |(_, a)| (a.len() as f64).sqrt().round() as usize).max(1);
    let mut entries = vec![Vec::new(); rank * rank];
    for (k, coeffs) in x {
        if coeffs.len() != rank * rank {
            return Err(Error::Dimension("line coefficients must all be r×r".into()));
        }
        let m: Mode = m0.iter().map(|v| v * k).collect();
        for (slot, &v) in entries.iter_mut().zip(coeffs) {
            slot.push((m.clone(), v));
        }
    }
    let xe = MatrixElement::from_entries(
        rank,
        entries.into_iter().map(|p| FourierElement::from_pairs(theta, p)).collect::<Result<_>>()?,
    )?;
    let terms = (0..n)
        .map(|j| {
            let xi = frequency(&frame.row(j), m0);
            xe.scale(xi).try_add(&MatrixElement::scalar_identity(theta, rank, c[j]))
        })
        .collect::<Result<Vec<_>>>()?;
    FreeConnection::new(rank, terms)
}

/// `2πi Σ_k w_k m_k`.
pub fn frequency(w: &[Complex64], m: &[i64]) -> Complex64 {
    let s: Complex64 = w.iter().zip(m).map(|(wk, &mk)| wk * mk as f64).sum();
    Complex64::new(0.0, TAU) * s
}

/// Sup-norm cutoff on lattice modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TruncationBox {
    n: usize,
}

impl TruncationBox {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("truncation N must be at least 1".into()));
        }
        Ok(Self { n })
    }

    pub fn cutoff(&self) -> usize {
        self.n
    }

    pub fn enlarged(&self) -> Self {
        Self { n: self.n + 2 }
    }
}

#[derive(Clone, Debug)]
pub struct Curvature {
    /// `F_{jk}` for `j, k < n`.
    pub f: Vec<Vec<MatrixElement>>,
    pub max_coeff: f64,
    pub is_flat: bool,
}

/// `F_{jk} = ∂̄_j a_k − ∂̄_k a_j + [a_j, a_k]`.
pub fn flatness_curvature(conn: &FreeConnection, frame: &AntiholFrame) -> Result<Curvature> {
    let n = conn.n();
    if frame.n() != n {
        return Err(Error::Dimension(format!("frame has {} rows, connection {} terms", frame.n(), n)));
    }
    let derived: Vec<Vec<MatrixElement>> = (0..n)
        .map(|j| conn.terms.iter().map(|a| a.derive_along(&frame.row(j))).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut f = Vec::with_capacity(n);
    let mut max_coeff: f64 = 0.0;
    for j in 0..n {
        let mut row = Vec::with_capacity(n);
        for k in 0..n {
            let fjk = derived[j][k].try_sub(&derived[k][j])?.try_add(&conn.terms[j].commutator(&conn.terms[k])?)?;
            max_coeff = max_coeff.max(fjk.max_abs());
            row.push(fjk);
        }
        f.push(row);
    }
    Ok(Curvature { f, max_coeff, is_flat: max_coeff < FLAT_TOL })
}

/// Kernel dimensions, index and gap data for one truncation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncatedSpectrum {
    pub truncation: usize,
    pub dims: Vec<usize>,
    pub index: i64,
    /// Smallest retained singular value relative to the largest one.
    pub sigma_kept: f64,
    /// Largest discarded singular value relative to the largest one.
    pub sigma_cut: f64,
    pub sigma_max: Vec<f64>,
    pub conclusive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralReport {
    pub dims: Vec<usize>,
    pub index: i64,
    pub sigma_kept: f64,
    pub sigma_cut: f64,
    /// Agreement at `N` and `N + 2`, both conclusive.
    pub stable: bool,
    pub conclusive: bool,
    pub tol_rel: f64,
    pub at_n: TruncatedSpectrum,
    pub at_n_plus_2: TruncatedSpectrum,
}

impl SpectralReport {
    pub fn euler_characteristic(&self) -> i64 {
        self.dims.iter().enumerate().map(|(q, &v)| if q % 2 == 0 { v as i64 } else { -(v as i64) }).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexReport {
    pub index: i64,
    pub stable: bool,
    pub conclusive: bool,
    pub sigma_kept: f64,
    pub sigma_cut: f64,
    pub at_n: TruncatedSpectrum,
    pub at_n_plus_2: TruncatedSpectrum,
}

/// Harmonic vector as `(mode, fiber index, form index, coefficient)` records.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicVector {
    pub entries: Vec<(Mode, usize, usize, Complex64)>,
}

/// Sparse operator in coordinate format.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CooMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64, f64)>,
}

impl CooMatrix {
    pub fn adjoint(&self) -> Self {
        let mut entries: Vec<_> = self.entries.iter().map(|&(r, c, re, im)| (c, r, re, -im)).collect();
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        Self { nrows: self.ncols, ncols: self.nrows, entries }
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for &(r, c, re, im) in &self.entries {
            m[(r, c)] += Complex64::new(re, im);
        }
        m
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// `out[q] = Σ_k a[k]·b[q−k]`.
pub fn kunneth_dims(a: &[usize], b: &[usize]) -> Vec<usize> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Form multi-indices of each degree, in lexicographic order, with lookup by bitmask.
struct Forms {
    by_degree: Vec<Vec<usize>>,
    position: Vec<usize>,
}

impl Forms {
    fn new(n: usize) -> Self {
        let mut by_degree = vec![Vec::new(); n + 1];
        let mut all: Vec<usize> = (0..1usize << n).collect();
        all.sort_by_key(|&mask| {
            let bits: Vec<usize> = (0..n).filter(|b| mask >> b & 1 == 1).collect();
            (bits.len(), bits)
        });
        let mut position = vec![0; 1 << n];
        for mask in all {
            let q = mask.count_ones() as usize;
            position[mask] = by_degree[q].len();
            by_degree[q].push(mask);
        }
        Self { by_degree, position }
    }
}

/// `(−1)^{#{i ∈ I : i < j}}`.
fn wedge_sign(mask: usize, j: usize) -> f64 {
    if (mask & ((1 << j) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

struct Setup {
    n: usize,
    d: usize,
    rank: usize,
    theta: Arc<ThetaMatrix>,
    wprime: Vec<Vec<Complex64>>,
    scalar: Option<Vec<Complex64>>,
    /// Offset `p` ↦ per direction `j` the row-major `r × r` coefficient of `a'_j` at `p`.
    terms: Vec<(Mode, Vec<Vec<Complex64>>)>,
    forms: Forms,
}

/// Cholesky factor of a small Hermitian positive-definite matrix.
fn cholesky(g: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>> {
    let n = g.len();
    let mut l = vec![vec![Complex64::default(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = g[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k].conj();
            }
            if i == j {
                if !(s.re > 0.0) {
                    return Err(Error::Conditioning("frame Gram matrix is not positive definite".into()));
                }
                l[i][i] = Complex64::new(s.re.sqrt(), 0.0);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

fn lower_inverse(l: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let n = l.len();
    let mut inv = vec![vec![Complex64::default(); n]; n];
    for c in 0..n {
        inv[c][c] = Complex64::new(1.0, 0.0) / l[c][c];
        for r in c + 1..n {
            let mut s = Complex64::default();
            for k in c..r {
                s += l[r][k] * inv[k][c];
            }
            inv[r][c] = -s / l[r][r];
        }
    }
    inv
}

impl Setup {
    fn new(cs: &ComplexStructure, frame: &AntiholFrame, conn: &FreeConnection) -> Result<Self> {
        let n = cs.n();
        let d = 2 * n;
        if frame.n() != n || conn.n() != n {
            return Err(Error::Dimension(format!(
                "complex dimension {n}, frame rows {}, connection terms {}",
                frame.n(),
                conn.n()
            )));
        }
        if conn.theta().rank() != d {
            return Err(Error::Dimension("theta size does not match J".into()));
        }
        let g = invariant_metric(cs, &Mat::identity(d, d))?;
        let gm = g.matrix();
        let rows = frame.rows();
        let gram: Vec<Vec<Complex64>> = (0..n)
            .map(|j| {
                (0..n)
                    .map(|k| {
                        let mut s = Complex64::default();
                        for a in 0..d {
                            for b in 0..d {
                                s += rows[j][a] * gm[(a, b)] * rows[k][b].conj();
                            }
                        }
                        s
                    })
                    .collect()
            })
            .collect();
        let t = lower_inverse(&cholesky(&gram)?);
        let wprime: Vec<Vec<Complex64>> =
            (0..n).map(|j| (0..d).map(|c| (0..n).map(|k| t[j][k] * rows[k][c]).sum()).collect()).collect();
        let r = conn.rank();
        let scalar = conn
            .terms()
            .iter()
            .map(MatrixElement::as_scalar_identity)
            .collect::<Option<Vec<_>>>()
            .map(|c| (0..n).map(|j| (0..n).map(|k| t[j][k] * c[k]).sum()).collect());
        let mut by_offset: BTreeMap<Mode, Vec<Vec<Complex64>>> = BTreeMap::new();
        for (k, a) in conn.terms().iter().enumerate() {
            for (slot, e) in a.entries().iter().enumerate() {
                for (p, c) in e.iter() {
                    let entry = by_offset.entry(p.clone()).or_insert_with(|| vec![vec![Complex64::default(); r * r]; n]);
                    for j in 0..n {
                        entry[j][slot] += t[j][k] * c;
                    }
                }
            }
        }
        Ok(Self {
            n,
            d,
            rank: r,
            theta: Arc::clone(conn.theta()),
            wprime,
            scalar,
            terms: by_offset.into_iter().collect(),
            forms: Forms::new(n),
        })
    }

    fn xi(&self, m: &[i64]) -> Vec<Complex64> {
        self.wprime.iter().map(|w| frequency(w, m)).collect()
    }
}

/// Odometer over the box `[−N, N]^d`; linear index `Σ (m_k + N)(2N+1)^k`.
struct ModeBox {
    d: usize,
    n: i64,
    side: usize,
}

impl ModeBox {
    fn new(d: usize, n: usize) -> Self {
        Self { d, n: n as i64, side: 2 * n + 1 }
    }

    fn len(&self) -> usize {
        self.side.pow(self.d as u32)
    }

    fn mode(&self, mut idx: usize) -> Mode {
        (0..self.d)
            .map(|_| {
                let v = (idx % self.side) as i64 - self.n;
                idx /= self.side;
                v
            })
            .collect()
    }

    fn index(&self, m: &[i64]) -> Option<usize> {
        let mut idx = 0;
        let mut stride = 1;
        for &v in m {
            if v.abs() > self.n {
                return None;
            }
            idx += (v + self.n) as usize * stride;
            stride *= self.side;
        }
        Some(idx)
    }

    fn for_each(&self, mut f: impl FnMut(&[i64])) {
        let mut m = vec![-self.n; self.d];
        loop {
            f(&m);
            let mut k = 0;
            loop {
                if k == self.d {
                    return;
                }
                if m[k] < self.n {
                    m[k] += 1;
                    break;
                }
                m[k] = -self.n;
                k += 1;
            }
        }
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Singular values of one block together with its shape.
struct BlockSpectrum {
    sv: Vec<f64>,
    rows: usize,
    cols: usize,
}

/// Per-degree blocks `[d_q; d_{q−1}ᴴ]` and the even→odd block for every component.
struct Spectra {
    degrees: Vec<Vec<BlockSpectrum>>,
    index_op: Vec<BlockSpectrum>,
}

impl Setup {
    fn components(&self, bx: &ModeBox) -> Vec<Vec<usize>> {
        let offsets: Vec<&Mode> = self.terms.iter().map(|(p, _)| p).filter(|p| p.iter().any(|&v| v != 0)).collect();
        let total = bx.len();
        if offsets.is_empty() {
            return (0..total).map(|i| vec![i]).collect();
        }
        let mut parent: Vec<usize> = (0..total).collect();
        for i in 0..total {
            let m = bx.mode(i);
            for p in &offsets {
                let t: Mode = m.iter().zip(p.iter()).map(|(a, b)| a + b).collect();
                if let Some(j) = bx.index(&t) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..total {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(i);
        }
        groups.into_values().collect()
    }

    /// `∇̄'_j` on one component, indexed by `loc·r + α`.
    fn nabla(&self, bx: &ModeBox, comp: &[usize]) -> Vec<CMat> {
        let r = self.rank;
        let s = comp.len();
        let local: BTreeMap<usize, usize> = comp.iter().enumerate().map(|(l, &g)| (g, l)).collect();
        let mut out: Vec<CMat> = (0..self.n).map(|_| Mat::zeros(s * r, s * r)).collect();
        for (l, &g) in comp.iter().enumerate() {
            let m = bx.mode(g);
            let xi = self.xi(&m);
            for (j, mat) in out.iter_mut().enumerate() {
                for a in 0..r {
                    mat[(l * r + a, l * r + a)] += xi[j];
                }
            }
            for (p, coeffs) in &self.terms {
                let t: Mode = m.iter().zip(p).map(|(a, b)| a + b).collect();
                let Some(tl) = bx.index(&t).and_then(|ti| local.get(&ti).copied()) else { continue };
                let phase = self.theta.phase(p, &m);
                for (j, mat) in out.iter_mut().enumerate() {
                    for a in 0..r {
                        for b in 0..r {
                            let c = coeffs[j][a * r + b];
                            if c != Complex64::default() {
                                mat[(tl * r + a, l * r + b)] += c * phase;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Block operator from `⊕_{q ∈ cols} Ω^q` to `⊕_{q ∈ rows} Ω^q` built from
    /// `d_q` (degree up) and `d_{q−1}ᴴ` (degree down) on one component.
    fn assemble(&self, nabla: &[CMat], s: usize, rows: &[usize], cols: &[usize]) -> CMat {
        let blk = s * self.rank;
        let offsets = |degs: &[usize]| -> (Vec<usize>, usize) {
            let mut off = Vec::with_capacity(degs.len());
            let mut acc = 0;
            for &q in degs {
                off.push(acc);
                acc += self.forms.by_degree[q].len() * blk;
            }
            (off, acc)
        };
        let (roff, nrows) = offsets(rows);
        let (coff, ncols) = offsets(cols);
        let mut out: CMat = Mat::zeros(nrows, ncols);
        for (ci, &q) in cols.iter().enumerate() {
            for (ri, &qr) in rows.iter().enumerate() {
                if qr == q + 1 {
                    // d_q: (d s)_J += sign ∇_j s_I for J = I ∪ {j}
                    for (ii, &imask) in self.forms.by_degree[q].iter().enumerate() {
                        for j in (0..self.n).filter(|j| imask >> j & 1 == 0) {
                            let jmask = imask | 1 << j;
                            let ji = self.forms.position[jmask];
                            let sign = wedge_sign(imask, j);
                            let r0 = roff[ri] + ji * blk;
                            let c0 = coff[ci] + ii * blk;
                            for a in 0..blk {
                                for b in 0..blk {
                                    let v = nabla[j][(a, b)];
                                    if v != Complex64::default() {
                                        out[(r0 + a, c0 + b)] += v * sign;
                                    }
                                }
                            }
                        }
                    }
                } else if qr + 1 == q {
                    // d_{q−1}ᴴ: adjoint of the block (I ∈ Ω^q) ← (K ∈ Ω^{q−1})
                    for (ki, &kmask) in self.forms.by_degree[qr].iter().enumerate() {
                        for j in (0..self.n).filter(|j| kmask >> j & 1 == 0) {
                            let imask = kmask | 1 << j;
                            let ii = self.forms.position[imask];
                            let sign = wedge_sign(kmask, j);
                            let r0 = roff[ri] + ki * blk;
                            let c0 = coff[ci] + ii * blk;
                            for a in 0..blk {
                                for b in 0..blk {
                                    let v = nabla[j][(b, a)];
                                    if v != Complex64::default() {
                                        out[(r0 + a, c0 + b)] += v.conj() * sign;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn laplacian_rows(&self, q: usize) -> Vec<usize> {
        let mut rows = Vec::new();
        if q < self.n {
            rows.push(q + 1);
        }
        if q > 0 {
            rows.push(q - 1);
        }
        rows
    }

    fn even(&self) -> Vec<usize> {
        (0..=self.n).filter(|q| q % 2 == 0).collect()
    }

    fn odd(&self) -> Vec<usize> {
        (0..=self.n).filter(|q| q % 2 == 1).collect()
    }

    fn spectra(&self, bx: &ModeBox, with_degrees: bool) -> Result<Spectra> {
        let comps = self.components(bx);
        let per_comp: Vec<Result<(Vec<BlockSpectrum>, BlockSpectrum)>> = comps
            .par_iter()
            .map(|comp| {
                let nabla = self.nabla(bx, comp);
                let s = comp.len();
                let block = |a: CMat| -> Result<BlockSpectrum> {
                    Ok(BlockSpectrum { sv: linalg::singular_values(&a)?, rows: a.nrows(), cols: a.ncols() })
                };
                let degs = if with_degrees {
                    (0..=self.n)
                        .map(|q| block(self.assemble(&nabla, s, &self.laplacian_rows(q), &[q])))
                        .collect::<Result<Vec<_>>>()?
                } else {
                    Vec::new()
                };
                let d = block(self.assemble(&nabla, s, &self.odd(), &self.even()))?;
                Ok((degs, d))
            })
            .collect();
        let mut degrees: Vec<Vec<BlockSpectrum>> = (0..=self.n).map(|_| Vec::new()).collect();
        let mut index_op = Vec::with_capacity(per_comp.len());
        for item in per_comp {
            let (degs, d) = item?;
            for (q, b) in degs.into_iter().enumerate() {
                degrees[q].push(b);
            }
            index_op.push(d);
        }
        Ok(Spectra { degrees, index_op })
    }
}

/// Running tally of small and large singular values against a threshold.
#[derive(Default)]
struct Gap {
    kept: f64,
    cut: f64,
}

impl Gap {
    fn new() -> Self {
        Self { kept: f64::INFINITY, cut: 0.0 }
    }

    fn record(&mut self, rel: f64, tol_rel: f64) -> bool {
        if rel <= tol_rel {
            self.cut = self.cut.max(rel);
            true
        } else {
            self.kept = self.kept.min(rel);
            false
        }
    }

    fn conclusive(&self, tol_rel: f64) -> bool {
        self.kept >= GAP_FACTOR * tol_rel && self.cut * GAP_FACTOR < tol_rel
    }
}

fn count_kernel(blocks: &[BlockSpectrum], tol_rel: f64, gap: &mut Gap) -> (usize, usize, f64) {
    let smax = blocks.iter().flat_map(|b| b.sv.first()).copied().fold(0.0, f64::max);
    let mut ker = 0;
    let mut coker = 0;
    for b in blocks {
        let small = b
            .sv
            .iter()
            .filter(|&&s| if smax > 0.0 { gap.record(s / smax, tol_rel) } else { true })
            .count();
        ker += small + b.cols.saturating_sub(b.rows);
        coker += small + b.rows.saturating_sub(b.cols);
    }
    (ker, coker, smax)
}

fn truncated_general(setup: &Setup, cutoff: usize, tol_rel: f64, with_degrees: bool) -> Result<TruncatedSpectrum> {
    let bx = ModeBox::new(setup.d, cutoff);
    let sp = setup.spectra(&bx, with_degrees)?;
    let mut gap = Gap::new();
    let mut dims = Vec::new();
    let mut sigma_max = Vec::new();
    for blocks in &sp.degrees {
        let (ker, _, smax) = count_kernel(blocks, tol_rel, &mut gap);
        dims.push(ker);
        sigma_max.push(smax);
    }
    let (ker, coker, smax) = count_kernel(&sp.index_op, tol_rel, &mut gap);
    sigma_max.push(smax);
    Ok(TruncatedSpectrum {
        truncation: cutoff,
        dims,
        index: ker as i64 - coker as i64,
        sigma_kept: gap.kept,
        sigma_cut: gap.cut,
        sigma_max,
        conclusive: gap.conclusive(tol_rel),
    })
}

/// Scalar constant connections: at mode `m` every degree block has all
/// singular values equal to `|ξ(m) + c|` (the Koszul Laplacian is `|v|²·1`).
fn truncated_scalar(setup: &Setup, c: &[Complex64], cutoff: usize, tol_rel: f64) -> TruncatedSpectrum {
    let bx = ModeBox::new(setup.d, cutoff);
    let norm = |m: &[i64]| -> f64 {
        setup.xi(m).iter().zip(c).map(|(x, cj)| (x + cj).norm_sqr()).sum::<f64>().sqrt()
    };
    let mut smax: f64 = 0.0;
    bx.for_each(|m| smax = smax.max(norm(m)));
    let mut gap = Gap::new();
    let mut zero_modes = 0usize;
    bx.for_each(|m| {
        let v = norm(m);
        let small = if smax > 0.0 { gap.record(v / smax, tol_rel) } else { true };
        if small {
            zero_modes += 1;
        }
    });
    let r = setup.rank;
    let dims = (0..=setup.n).map(|q| r * binomial(setup.n, q) * zero_modes).collect();
    TruncatedSpectrum {
        truncation: cutoff,
        dims,
        index: 0,
        sigma_kept: gap.kept,
        sigma_cut: gap.cut,
        sigma_max: vec![smax; setup.n + 2],
        conclusive: gap.conclusive(tol_rel),
    }
}

fn truncated(setup: &Setup, cutoff: usize, tol_rel: f64, with_degrees: bool) -> Result<TruncatedSpectrum> {
    match &setup.scalar {
        Some(c) => Ok(truncated_scalar(setup, c, cutoff, tol_rel)),
        None => truncated_general(setup, cutoff, tol_rel, with_degrees),
    }
}

fn check_tol(tol_rel: f64) -> Result<()> {
    if !(tol_rel > 0.0 && tol_rel < 1.0) {
        return Err(Error::InvalidInput(format!("tol_rel must lie in (0, 1), got {tol_rel}")));
    }
    Ok(())
}

/// Spectral cohomology of a flat connection at `N`, checked against `N + 2`.
pub fn cohomology_dims(
    cs: &ComplexStructure,
    frame: &AntiholFrame,
    conn: &FreeConnection,
    bx: TruncationBox,
    tol_rel: f64,
) -> Result<SpectralReport> {
    check_tol(tol_rel)?;
    let curv = flatness_curvature(conn, frame)?;
    if !curv.is_flat {
        return Err(Error::NonFlat { max_coeff: curv.max_coeff });
    }
    let setup = Setup::new(cs, frame, conn)?;
    let a = truncated(&setup, bx.cutoff(), tol_rel, true)?;
    let b = truncated(&setup, bx.enlarged().cutoff(), tol_rel, true)?;
    let conclusive = a.conclusive && b.conclusive;
    Ok(SpectralReport {
        dims: a.dims.clone(),
        index: a.index,
        sigma_kept: a.sigma_kept.min(b.sigma_kept),
        sigma_cut: a.sigma_cut.max(b.sigma_cut),
        stable: conclusive && a.dims == b.dims && a.index == b.index,
        conclusive,
        tol_rel,
        at_n: a,
        at_n_plus_2: b,
    })
}

/// Index of the compressed `∇̄ + ∇̄*` from even to odd forms; flatness is not required.
pub fn index(
    cs: &ComplexStructure,
    frame: &AntiholFrame,
    conn: &FreeConnection,
    bx: TruncationBox,
    tol_rel: f64,
) -> Result<IndexReport> {
    check_tol(tol_rel)?;
    let setup = Setup::new(cs, frame, conn)?;
    let a = truncated(&setup, bx.cutoff(), tol_rel, false)?;
    let b = truncated(&setup, bx.enlarged().cutoff(), tol_rel, false)?;
    let conclusive = a.conclusive && b.conclusive;
    Ok(IndexReport {
        index: a.index,
        stable: conclusive && a.index == b.index,
        conclusive,
        sigma_kept: a.sigma_kept.min(b.sigma_kept),
        sigma_cut: a.sigma_cut.max(b.sigma_cut),
        at_n: a,
        at_n_plus_2: b,
    })
}

/// Orthonormal basis of the degree-`q` harmonic space at truncation `N`.
pub fn harmonic_basis(
    cs: &ComplexStructure,
    frame: &AntiholFrame,
    conn: &FreeConnection,
    bx: TruncationBox,
    tol_rel: f64,
    q: usize,
) -> Result<Vec<HarmonicVector>> {
    check_tol(tol_rel)?;
    let setup = Setup::new(cs, frame, conn)?;
    if q > setup.n {
        return Err(Error::InvalidInput(format!("degree {q} exceeds {}", setup.n)));
    }
    let mb = ModeBox::new(setup.d, bx.cutoff());
    let r = setup.rank;
    if let Some(c) = &setup.scalar {
        let spec = truncated_scalar(&setup, c, bx.cutoff(), tol_rel);
        let thr = tol_rel * spec.sigma_max[0];
        let mut out = Vec::new();
        mb.for_each(|m| {
            let v = setup.xi(m).iter().zip(c).map(|(x, cj)| (x + cj).norm_sqr()).sum::<f64>().sqrt();
            if v <= thr {
                for form in 0..setup.forms.by_degree[q].len() {
                    for a in 0..r {
                        out.push(HarmonicVector { entries: vec![(m.to_vec(), a, form, Complex64::new(1.0, 0.0))] });
                    }
                }
            }
        });
        return Ok(out);
    }
    let sp = setup.spectra(&mb, true)?;
    let smax = sp.degrees[q].iter().flat_map(|b| b.sv.first()).copied().fold(0.0, f64::max);
    let thr = tol_rel * smax;
    let mut out = Vec::new();
    for comp in setup.components(&mb) {
        let nabla = setup.nabla(&mb, &comp);
        let a = setup.assemble(&nabla, comp.len(), &setup.laplacian_rows(q), &[q]);
        let blk = comp.len() * r;
        for v in linalg::right_kernel(&a, thr.max(f64::MIN_POSITIVE))? {
            let entries = v
                .iter()
                .enumerate()
                .filter(|(_, c)| c.norm() > 1e-14)
                .map(|(i, &c)| {
                    let form = i / blk;
                    let rem = i % blk;
                    (mb.mode(comp[rem / r]), rem % r, form, c)
                })
                .collect();
            out.push(HarmonicVector { entries });
        }
    }
    Ok(out)
}

/// Global coordinate index of `(form, mode, fiber)` in degree `q`.
fn global_index(setup: &Setup, mb: &ModeBox, form: usize, mode_idx: usize, a: usize) -> usize {
    (form * mb.len() + mode_idx) * setup.rank + a
}

/// `d_q: Ω^q → Ω^{q+1}` on the box in coordinate format. Coordinates are
/// ordered by form multi-index, then mode, then fiber.
pub fn operator_coo(
    cs: &ComplexStructure,
    frame: &AntiholFrame,
    conn: &FreeConnection,
    bx: TruncationBox,
    q: usize,
) -> Result<CooMatrix> {
    let setup = Setup::new(cs, frame, conn)?;
    if q >= setup.n {
        return Err(Error::InvalidInput(format!("d_q needs q < {}", setup.n)));
    }
    let mb = ModeBox::new(setup.d, bx.cutoff());
    let r = setup.rank;
    let mut acc: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
    for g in 0..mb.len() {
        let m = mb.mode(g);
        let xi = setup.xi(&m);
        for (ii, &imask) in setup.forms.by_degree[q].iter().enumerate() {
            for j in (0..setup.n).filter(|j| imask >> j & 1 == 0) {
                let ji = setup.forms.position[imask | 1 << j];
                let sign = wedge_sign(imask, j);
                for a in 0..r {
                    *acc.entry((global_index(&setup, &mb, ji, g, a), global_index(&setup, &mb, ii, g, a))).or_default() +=
                        xi[j] * sign;
                }
                for (p, coeffs) in &setup.terms {
                    let t: Mode = m.iter().zip(p).map(|(x, y)| x + y).collect();
                    let Some(tg) = mb.index(&t) else { continue };
                    let phase = setup.theta.phase(p, &m);
                    for a in 0..r {
                        for b in 0..r {
                            let c = coeffs[j][a * r + b];
                            if c != Complex64::default() {
                                *acc.entry((global_index(&setup, &mb, ji, tg, a), global_index(&setup, &mb, ii, g, b))).or_default() +=
                                    c * phase * sign;
                            }
                        }
                    }
                }
            }
        }
    }
    let nforms = |deg: usize| setup.forms.by_degree[deg].len();
    Ok(CooMatrix {
        nrows: nforms(q + 1) * mb.len() * r,
        ncols: nforms(q) * mb.len() * r,
        entries: acc.into_iter().filter(|(_, v)| v.norm() > 0.0).map(|((r0, c0), v)| (r0, c0, v.re, v.im)).collect(),
    })
}

/// Frame rows reordered so that row `k` is supported on coordinate block `k`
/// (coordinates `2k, 2k+1`), for block-diagonal `J`.
pub fn block_adapted_frame(frame: &AntiholFrame) -> Result<AntiholFrame> {
    let n = frame.n();
    let mut order = vec![usize::MAX; n];
    for (row, &p) in frame.pivots().iter().enumerate() {
        let blk = p / 2;
        if blk >= n || order[blk] != usize::MAX {
            return Err(Error::Hypothesis("frame pivots do not select one column per 2×2 block".into()));
        }
        order[blk] = row;
    }
    let adapted = frame.reordered(&order)?;
    for k in 0..n {
        for c in 0..2 * n {
            if c / 2 != k && adapted.get(k, c).norm() > 1e-12 {
                return Err(Error::Hypothesis(format!("frame row {k} leaks outside its block at coordinate {c}")));
            }
        }
    }
    Ok(adapted)
}

/// Pushforward of a connection over the noncommutative elliptic curve
/// `A_θ` along `u_j ↦ U_j`: term 1 is `λ·φ(a)` where the big frame row 1 is
/// `λ` times the small frame row on the first block; the other terms vanish.
pub fn pushforward_connection(
    small_frame: &AntiholFrame,
    conn_small: &FreeConnection,
    big_theta: &Arc<ThetaMatrix>,
    big_cs: &ComplexStructure,
    big_frame: &AntiholFrame,
) -> Result<FreeConnection> {
    if conn_small.n() != 1 || small_frame.n() != 1 {
        return Err(Error::Dimension("the source must be a noncommutative elliptic curve".into()));
    }
    let n = big_cs.n();
    if big_theta.n_half() != n || big_frame.n() != n {
        return Err(Error::Dimension("target data have inconsistent dimensions".into()));
    }
    let lead = big_cs.off_block_max(true);
    if lead > 1e-10 {
        return Err(Error::Hypothesis(format!("J is not block diagonal with a leading 2×2 block (coupling {lead:.3e})")));
    }
    for j in 1..n {
        for c in 0..2 {
            if big_frame.get(j, c).norm() > 1e-12 {
                return Err(Error::Hypothesis(format!("frame row {j} has a component along δ_{}", c + 1)));
            }
        }
    }
    for c in 2..2 * n {
        if big_frame.get(0, c).norm() > 1e-12 {
            return Err(Error::Hypothesis("frame row 1 leaves the leading block".into()));
        }
    }
    let ws = small_frame.row(0);
    let k = if ws[0].norm() >= ws[1].norm() { 0 } else { 1 };
    let lambda = big_frame.get(0, k) / ws[k];
    if (big_frame.get(0, 1 - k) - lambda * ws[1 - k]).norm() > 1e-10 * (1.0 + lambda.norm()) {
        return Err(Error::Hypothesis("leading frame row is not a multiple of the small frame".into()));
    }
    let r = conn_small.rank();
    let mut terms = vec![conn_small.terms()[0].embed(big_theta)?.scale(lambda)];
    terms.extend((1..n).map(|_| MatrixElement::zero(big_theta, r)));
    FreeConnection::new(r, terms)
}
