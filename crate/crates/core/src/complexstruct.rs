//! Complex structures on the span of the derivations, antiholomorphic frames,
//! period matrices and J-invariant metrics.
//!
//! Convention: the holomorphic tangent directions form the `+i` eigenspace of
//! `J` and the antiholomorphic directions the `−i` eigenspace. A row `w` of an
//! [`AntiholFrame`] is the column eigenvector `J w = −i w` written as a row, so
//! `W Jᵀ = −i W`. A row `q` of a [`PeriodMatrix`] is a left eigenvector,
//! `q J = i q`: it is a holomorphic coordinate, and its entries on the basis
//! `δ_k` are the coordinates of the lattice generators.

use faer::Mat;
use num_complex::Complex64;
use num_traits::{One, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::exact::{mat_inverse, mat_mul, ExactMatrix, GaussRat, Rational};
use crate::linalg::{self, CMat, RMat};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const RCOND_MIN: f64 = 1e-12;
const FRAME_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct ComplexStructure {
    n: usize,
    j: RMat,
    tol: f64,
    exact: Option<ExactMatrix<Rational>>,
}

impl PartialEq for ComplexStructure {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.j == other.j && self.tol == other.tol
    }
}

fn square_defect(j: &RMat) -> f64 {
    let sq = j * j;
    let mut worst: f64 = 0.0;
    for c in 0..sq.ncols() {
        for r in 0..sq.nrows() {
            let target = if r == c { -1.0 } else { 0.0 };
            worst = worst.max((sq[(r, c)] - target).abs());
        }
    }
    worst
}

impl ComplexStructure {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        Self::with_tol(rows, DEFAULT_TOL)
    }

    pub fn with_tol(rows: &[Vec<f64>], tol: f64) -> Result<Self> {
        let d = rows.len();
        if d == 0 || d % 2 != 0 {
            return Err(Error::Dimension(format!("J must be 2n×2n with n ≥ 1, got {d} rows")));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::Dimension(format!("J row {i} has {} entries, expected {d}", r.len())));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("J row {i} has a non-finite entry")));
            }
        }
        Self::from_matrix(linalg::rmat_from_rows(rows), tol)
    }

    pub fn from_matrix(j: RMat, tol: f64) -> Result<Self> {
        let d = j.nrows();
        if d == 0 || d % 2 != 0 || j.ncols() != d {
            return Err(Error::Dimension(format!("J must be 2n×2n, got {}×{}", j.nrows(), j.ncols())));
        }
        if !(tol >= 0.0) {
            return Err(Error::InvalidInput("tolerance must be nonnegative".into()));
        }
        let defect = square_defect(&j);
        if defect > tol {
            return Err(Error::InvalidInput(format!("J² ≠ −I: ‖J² + I‖_max = {defect:.3e} exceeds {tol:.1e}")));
        }
        Ok(Self { n: d / 2, j, tol, exact: None })
    }

    /// Exact rational `J`; `J² = −I` is checked exactly.
    pub fn from_rational(rows: ExactMatrix<Rational>) -> Result<Self> {
        let d = rows.len();
        if d == 0 || d % 2 != 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("rational J must be 2n×2n".into()));
        }
        let sq = mat_mul(&rows, &rows);
        for (r, row) in sq.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let target = if r == c { -Rational::one() } else { Rational::zero() };
                if *v != target {
                    return Err(Error::InvalidInput(format!("rational J² ≠ −I at ({r},{c})")));
                }
            }
        }
        let j = Mat::from_fn(d, d, |r, c| crate::exact::rat_to_f64(&rows[r][c]));
        Ok(Self { n: d / 2, j, tol: DEFAULT_TOL, exact: Some(rows) })
    }

    /// `J₀`: `δ_j ↦ δ_{n+j}`, `δ_{n+j} ↦ −δ_j`.
    pub fn standard(n: usize) -> Self {
        let d = 2 * n;
        let j = Mat::from_fn(d, d, |r, c| {
            if c < n && r == c + n {
                1.0
            } else if c >= n && r + n == c {
                -1.0
            } else {
                0.0
            }
        });
        Self { n, j, tol: DEFAULT_TOL, exact: None }
    }

    /// Block-diagonal `J` from 2×2 blocks on coordinate pairs `(2k, 2k+1)`.
    pub fn from_blocks(blocks: &[[[f64; 2]; 2]]) -> Result<Self> {
        let n = blocks.len();
        if n == 0 {
            return Err(Error::Dimension("at least one block is required".into()));
        }
        let j = Mat::from_fn(2 * n, 2 * n, |r, c| if r / 2 == c / 2 { blocks[r / 2][r % 2][c % 2] } else { 0.0 });
        Self::from_matrix(j, DEFAULT_TOL)
    }

    /// The 2×2 structure of the lattice `Z + τZ`.
    pub fn from_tau(tau: Complex64) -> Result<Self> {
        if !(tau.im > 0.0) {
            return Err(Error::InvalidInput(format!("Im τ must be positive, got {}", tau.im)));
        }
        let pm = PeriodMatrix::new(&[vec![Complex64::new(1.0, 0.0), tau]])?;
        j_from_period(&pm)
    }

    /// `A J₀ A⁻¹` for a random well-conditioned `A = I + perturbation`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let d = 2 * n;
        loop {
            let a = Mat::from_fn(d, d, |r, c| f64::from(u8::from(r == c)) + rng.gen_range(-0.6..0.6));
            if linalg::rcond(&linalg::complexify(&a)).unwrap_or(0.0) < 1e-2 {
                continue;
            }
            if let Ok(cs) = Self::standard(n).conjugated_by(&a) {
                return cs;
            }
        }
    }

    /// `A J A⁻¹`.
    pub fn conjugated_by(&self, a: &RMat) -> Result<Self> {
        if a.nrows() != 2 * self.n || a.ncols() != 2 * self.n {
            return Err(Error::Dimension("conjugating matrix has the wrong size".into()));
        }
        if linalg::rcond(&linalg::complexify(a))? < RCOND_MIN {
            return Err(Error::Conditioning("conjugating matrix is singular".into()));
        }
        let j = a * &self.j * linalg::inverse_r(a);
        Self::from_matrix(j, self.tol.max(DEFAULT_TOL))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &RMat {
        &self.j
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.j[(r, c)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        linalg::rmat_to_rows(&self.j)
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn exact(&self) -> Option<&ExactMatrix<Rational>> {
        self.exact.as_ref()
    }

    /// Largest entry outside the 2×2 diagonal blocks; `leading_only` restricts
    /// the test to the coupling between the first block and the rest.
    pub fn off_block_max(&self, leading_only: bool) -> f64 {
        off_block_max(&self.j, leading_only)
    }
}

pub(crate) fn off_block_max(a: &RMat, leading_only: bool) -> f64 {
    let d = a.nrows();
    let mut worst: f64 = 0.0;
    for r in 0..d {
        for c in 0..d {
            let outside = if leading_only { (r < 2) != (c < 2) } else { r / 2 != c / 2 };
            if outside {
                worst = worst.max(a[(r, c)].abs());
            }
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq)]
pub struct AntiholFrame {
    w: CMat,
    pivots: Vec<usize>,
}

impl AntiholFrame {
    /// Frame from explicit rows, checked against `cs`.
    pub fn from_rows(cs: &ComplexStructure, rows: &[Vec<Complex64>], pivots: Vec<usize>) -> Result<Self> {
        let n = cs.n();
        if rows.len() != n || rows.iter().any(|r| r.len() != 2 * n) {
            return Err(Error::Dimension(format!("frame must be {n}×{}", 2 * n)));
        }
        let w = linalg::cmat_from_rows(rows);
        let frame = Self { w, pivots };
        let res = frame.eigen_residual(cs);
        if res > FRAME_TOL * (1.0 + linalg::max_abs_c(&frame.w)) {
            return Err(Error::InvalidInput(format!("rows are not antiholomorphic (residual {res:.3e})")));
        }
        let s = linalg::singular_values(&frame.w)?;
        if s.last().copied().unwrap_or(0.0) <= RCOND_MIN * s[0] {
            return Err(Error::Conditioning("frame rows are linearly dependent".into()));
        }
        Ok(frame)
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.w
    }

    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.w[(j, k)]
    }

    pub fn row(&self, j: usize) -> Vec<Complex64> {
        (0..self.w.ncols()).map(|k| self.w[(j, k)]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        linalg::cmat_to_rows(&self.w)
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// `‖W Jᵀ + i W‖_max`.
    pub fn eigen_residual(&self, cs: &ComplexStructure) -> f64 {
        let jt = linalg::complexify(&linalg::transpose(cs.matrix()));
        let r = &self.w * jt + Mat::from_fn(self.w.nrows(), self.w.ncols(), |a, b| Complex64::i() * self.w[(a, b)]);
        linalg::max_abs_c(&r)
    }

    /// Same span with the rows permuted.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        let n = self.n();
        let mut seen = vec![false; n];
        for &o in order {
            if o >= n || std::mem::replace(&mut seen[o], true) {
                return Err(Error::InvalidInput("row order must be a permutation".into()));
            }
        }
        if order.len() != n {
            return Err(Error::InvalidInput("row order must be a permutation".into()));
        }
        let w = Mat::from_fn(n, self.w.ncols(), |r, c| self.w[(order[r], c)]);
        Ok(Self { w, pivots: order.iter().map(|&o| self.pivots[o]).collect() })
    }
}

/// Rows spanning the row space of `m` (rank `n`), normalized so the block on
/// greedily chosen pivot columns is the identity.
fn pivot_normalized(m: &CMat, n: usize) -> Result<(CMat, Vec<usize>)> {
    let d = m.ncols();
    let mut res = m.clone();
    let scale = linalg::max_abs_c(m).max(f64::MIN_POSITIVE);
    let mut pivots = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best = None;
        let mut best_norm = 0.0;
        for c in (0..d).filter(|c| !pivots.contains(c)) {
            let nrm = (0..res.nrows()).map(|r| res[(r, c)].norm_sqr()).sum::<f64>().sqrt();
            if nrm > best_norm {
                best_norm = nrm;
                best = Some(c);
            }
        }
        let Some(p) = best.filter(|_| best_norm > 1e-12 * scale) else {
            return Err(Error::Conditioning("eigenspace is numerically rank-deficient".into()));
        };
        let q: Vec<Complex64> = (0..res.nrows()).map(|r| res[(r, p)] / best_norm).collect();
        for c in 0..d {
            let dot: Complex64 = (0..res.nrows()).map(|r| q[r].conj() * res[(r, c)]).sum();
            for r in 0..res.nrows() {
                res[(r, c)] -= q[r] * dot;
            }
        }
        pivots.push(p);
    }
    let a = Mat::from_fn(m.nrows(), n, |r, c| m[(r, pivots[c])]);
    let rc = linalg::rcond(&a)?;
    if rc < RCOND_MIN {
        return Err(Error::Conditioning(format!("pivot block reciprocal condition {rc:.3e}")));
    }
    let ah = linalg::adjoint(&a);
    let mut c = linalg::solve(&(&ah * &a), &(&ah * m));
    for (i, &p) in pivots.iter().enumerate() {
        for r in 0..n {
            c[(r, p)] = if r == i { Complex64::one() } else { Complex64::zero() };
        }
    }
    Ok((c, pivots))
}

pub fn antihol_frame(cs: &ComplexStructure) -> Result<AntiholFrame> {
    let d = 2 * cs.n();
    let j = cs.matrix();
    // rows of Pᵀ for P = (I + iJ)/2, the projector onto the −i eigenspace
    let m = Mat::from_fn(d, d, |r, c| Complex64::new(0.5 * f64::from(u8::from(r == c)), 0.5 * j[(c, r)]));
    let (w, pivots) = pivot_normalized(&m, cs.n())?;
    let frame = AntiholFrame { w, pivots };
    let res = frame.eigen_residual(cs);
    if res > FRAME_TOL * (1.0 + linalg::max_abs_c(frame.matrix())) * (1.0 + linalg::max_abs_r(j)) {
        return Err(Error::Conditioning(format!("eigenframe residual {res:.3e}")));
    }
    Ok(frame)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodMatrix {
    q: CMat,
    exact: Option<ExactMatrix<GaussRat>>,
}

impl PeriodMatrix {
    pub fn new(rows: &[Vec<Complex64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != 2 * n) {
            return Err(Error::Dimension(format!("period matrix must be n×2n, got {n} rows")));
        }
        if rows.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("period matrix has a non-finite entry".into()));
        }
        let pm = Self { q: linalg::cmat_from_rows(rows), exact: None };
        pm.check_lattice()?;
        Ok(pm)
    }

    pub fn from_exact(rows: ExactMatrix<GaussRat>) -> Result<Self> {
        let floats: Vec<Vec<Complex64>> = rows.iter().map(|r| r.iter().map(GaussRat::to_complex).collect()).collect();
        let mut pm = Self::new(&floats)?;
        pm.exact = Some(rows);
        Ok(pm)
    }

    fn check_lattice(&self) -> Result<()> {
        let rc = linalg::rcond(&self.stacked())?;
        if rc < RCOND_MIN {
            return Err(Error::DegenerateLattice(format!("[Q; conj Q] has reciprocal condition {rc:.3e}")));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.q
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        linalg::cmat_to_rows(&self.q)
    }

    pub fn exact(&self) -> Option<&ExactMatrix<GaussRat>> {
        self.exact.as_ref()
    }

    /// `[Q; conj(Q)]`.
    pub fn stacked(&self) -> CMat {
        let n = self.n();
        Mat::from_fn(2 * n, 2 * n, |r, c| if r < n { self.q[(r, c)] } else { self.q[(r - n, c)].conj() })
    }

    /// 2-norm condition number of the stacked matrix.
    pub fn condition(&self) -> f64 {
        linalg::rcond(&self.stacked()).map_or(f64::INFINITY, |r| 1.0 / r)
    }

    /// `‖Q J − i Q‖_max`.
    pub fn residual(&self, cs: &ComplexStructure) -> f64 {
        let r = &self.q * linalg::complexify(cs.matrix()) - Mat::from_fn(self.n(), 2 * self.n(), |a, b| Complex64::i() * self.q[(a, b)]);
        linalg::max_abs_c(&r)
    }
}

pub fn period_from_j(cs: &ComplexStructure) -> Result<PeriodMatrix> {
    let d = 2 * cs.n();
    let j = cs.matrix();
    // rows of (I − iJ)/2 span the left +i eigenvectors
    let m = Mat::from_fn(d, d, |r, c| Complex64::new(0.5 * f64::from(u8::from(r == c)), -0.5 * j[(r, c)]));
    let (q, _) = pivot_normalized(&m, cs.n())?;
    let pm = PeriodMatrix { q, exact: None };
    pm.check_lattice()?;
    Ok(pm)
}

/// Modulus `τ` (`Im τ > 0`) of the lattice of a 2×2 structure, as the ratio
/// of the two period entries.
pub fn elliptic_tau(cs: &ComplexStructure) -> Result<Complex64> {
    if cs.n() != 1 {
        return Err(Error::Dimension(format!("elliptic modulus needs n = 1, got {}", cs.n())));
    }
    let q = period_from_j(cs)?;
    let (a, b) = (q.matrix()[(0, 0)], q.matrix()[(0, 1)]);
    Ok(if (b / a).im > 0.0 { b / a } else { a / b })
}

/// `J = [Q; Q̄]⁻¹ diag(iI, −iI) [Q; Q̄]`, exact when `Q` is Gaussian-rational.
pub fn j_from_period(pm: &PeriodMatrix) -> Result<ComplexStructure> {
    let n = pm.n();
    if let Some(ex) = pm.exact() {
        let mut s: ExactMatrix<GaussRat> = ex.clone();
        s.extend(ex.iter().map(|r| r.iter().map(GaussRat::conj).collect::<Vec<_>>()));
        let sinv = mat_inverse(&s).ok_or_else(|| Error::DegenerateLattice("[Q; conj Q] is singular".into()))?;
        let ds: ExactMatrix<GaussRat> = s
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let f = if r < n { GaussRat::i() } else { -GaussRat::i() };
                row.iter().map(|v| f.clone() * v.clone()).collect()
            })
            .collect();
        let j = mat_mul(&sinv, &ds);
        let mut real = Vec::with_capacity(2 * n);
        for row in j {
            let mut out = Vec::with_capacity(2 * n);
            for v in row {
                if !v.im.is_zero() {
                    return Err(Error::Numerical("exact J has a nonzero imaginary part".into()));
                }
                out.push(v.re);
            }
            real.push(out);
        }
        return ComplexStructure::from_rational(real);
    }
    let s = pm.stacked();
    if linalg::rcond(&s)? < RCOND_MIN {
        return Err(Error::DegenerateLattice("[Q; conj Q] is singular".into()));
    }
    let ds = Mat::from_fn(2 * n, 2 * n, |r, c| if r < n { Complex64::i() * s[(r, c)] } else { -Complex64::i() * s[(r, c)] });
    let jc = linalg::solve(&s, &ds);
    let scale = 1.0 + linalg::max_abs_c(&jc);
    let imag = (0..2 * n).flat_map(|r| (0..2 * n).map(move |c| (r, c))).map(|(r, c)| jc[(r, c)].im.abs()).fold(0.0, f64::max);
    if imag > 1e-10 * scale * pm.condition() {
        return Err(Error::Numerical(format!("J has imaginary residue {imag:.3e}")));
    }
    let j = Mat::from_fn(2 * n, 2 * n, |r, c| jc[(r, c)].re);
    ComplexStructure::from_matrix(j, 1e-9 * scale * scale)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricG {
    g: RMat,
}

impl MetricG {
    pub fn identity(d: usize) -> Self {
        Self { g: Mat::identity(d, d) }
    }

    pub fn matrix(&self) -> &RMat {
        &self.g
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        linalg::rmat_to_rows(&self.g)
    }

    /// `‖Jᵀ G J − G‖_max`.
    pub fn invariance_defect(&self, cs: &ComplexStructure) -> f64 {
        let j = cs.matrix();
        linalg::max_abs_r(&(linalg::transpose(j) * &self.g * j - &self.g))
    }
}

fn check_spd(g: &RMat) -> Result<()> {
    let d = g.nrows();
    let scale = linalg::max_abs_r(g).max(f64::MIN_POSITIVE);
    for r in 0..d {
        for c in 0..r {
            if (g[(r, c)] - g[(c, r)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidInput(format!("metric is not symmetric at ({r},{c})")));
            }
        }
    }
    let ev = linalg::symmetric_eigenvalues(g)?;
    if ev.first().map_or(true, |&e| e <= 1e-14 * scale) {
        return Err(Error::InvalidInput("metric is not positive definite".into()));
    }
    Ok(())
}

/// `G = (G₀ + Jᵀ G₀ J)/2`.
pub fn invariant_metric(cs: &ComplexStructure, g0: &RMat) -> Result<MetricG> {
    let d = 2 * cs.n();
    if g0.nrows() != d || g0.ncols() != d {
        return Err(Error::Dimension(format!("G0 must be {d}×{d}")));
    }
    check_spd(g0)?;
    let j = cs.matrix();
    let avg = (g0 + linalg::transpose(j) * g0 * j) * faer::Scale(0.5);
    let g = Mat::from_fn(d, d, |r, c| 0.5 * (avg[(r, c)] + avg[(c, r)]));
    check_spd(&g)?;
    Ok(MetricG { g })
}
