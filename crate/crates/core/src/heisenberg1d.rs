//! Standard holomorphic modules over noncommutative elliptic curves in the
//! Hermite basis.
//!
//! The module is `|q|` copies of Schwartz functions on the line, with
//! `∇_1 = ∂_x` and `∇_2 = −2πi·sgn(q)·x`. For the lattice `Z + τZ` the
//! antiholomorphic direction is `∂̄ ∝ τδ_1 − δ_2`, so per copy
//!
//! ```text
//! ∇̄ ∝ ∂_x + κx,   κ = 2πi·sgn(q)/τ,   Re κ = sgn(q)·Im τ/|τ|².
//! ```
//!
//! With `ω = |κ|`, `x = (A + A†)/√(2ω)` and `∂_x = √(ω/2)(A − A†)`:
//!
//! ```text
//! ∂_x + κx = ((ω + κ)A + (κ − ω)A†)/√(2ω).
//! ```
//!
//! For `q > 0` the kernel is spanned by `e^{−κx²/2}`; for `q < 0` the adjoint
//! `−∂_x + κ̄x` has the kernel instead.

use faer::Mat;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ktheory::K0Class;
use crate::linalg::{self, CMat};

pub const MIN_TRUNCATION: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StandardModule1D {
    p: u32,
    q: i64,
    tau: Complex64,
    m: usize,
}

impl StandardModule1D {
    pub fn new(p: u32, q: i64, tau: Complex64, m: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidInput("rank p must be positive".into()));
        }
        if q == 0 {
            return Err(Error::InvalidInput("degree q must be nonzero".into()));
        }
        if !(tau.im > 0.0) || !tau.re.is_finite() {
            return Err(Error::InvalidInput(format!("Im τ must be positive, got {}", tau.im)));
        }
        if m < MIN_TRUNCATION {
            return Err(Error::InvalidInput(format!("Hermite truncation M must be at least {MIN_TRUNCATION}, got {m}")));
        }
        Ok(Self { p, q, tau, m })
    }

    pub fn rank(&self) -> u32 {
        self.p
    }

    pub fn degree(&self) -> i64 {
        self.q
    }

    pub fn tau(&self) -> Complex64 {
        self.tau
    }

    pub fn truncation(&self) -> usize {
        self.m
    }

    pub fn with_truncation(&self, m: usize) -> Result<Self> {
        Self::new(self.p, self.q, self.tau, m)
    }

    pub fn kappa(&self) -> Complex64 {
        Complex64::new(0.0, std::f64::consts::TAU * self.q.signum() as f64) / self.tau
    }

    /// `{∅ ↦ p, {1,2} ↦ q}`.
    pub fn k0_class(&self) -> K0Class {
        K0Class::standard_1d(i64::from(self.p), self.q)
    }
}

/// Matrix element `⟨φ_j, (∂_x + κx) φ_k⟩`.
fn ladder(kappa: Complex64, j: usize, k: usize) -> Complex64 {
    let omega = kappa.norm();
    let s = (2.0 * omega).sqrt();
    if j + 1 == k {
        (kappa + omega) / s * (k as f64).sqrt()
    } else if j == k + 1 {
        (kappa - omega) / s * (j as f64).sqrt()
    } else {
        Complex64::default()
    }
}

/// `∇̄` on the first `M` Hermite functions of every copy, as the square
/// `M|q| × M|q|` block-diagonal matrix.
pub fn hermite_dbar_matrix(sm: &StandardModule1D) -> CMat {
    let kappa = sm.kappa();
    let m = sm.m;
    let copies = sm.q.unsigned_abs() as usize;
    Mat::from_fn(m * copies, m * copies, |r, c| if r / m == c / m { ladder(kappa, r % m, c % m) } else { Complex64::default() })
}

/// One copy of `∇̄` (or its adjoint) on the first `M` Hermite functions,
/// mapping into the first `M + 1`. The image of a truncated function is
/// exact, so no spurious kernel appears.
fn rectangular(kappa: Complex64, m: usize, adjoint: bool) -> CMat {
    Mat::from_fn(m + 1, m, |r, c| if adjoint { ladder(kappa, c, r).conj() } else { ladder(kappa, r, c) })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StandardCohomology {
    pub h0: usize,
    pub h1: usize,
    pub index: i64,
    pub sigma_kept: f64,
    pub sigma_cut: f64,
    pub conclusive: bool,
    /// Agreement at `M` and `2M`, both conclusive.
    pub stable: bool,
    pub truncation: usize,
}

fn kernel_count(a: &CMat, tol_rel: f64) -> Result<(usize, f64, f64)> {
    let sv = linalg::singular_values(a)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    let mut kept = f64::INFINITY;
    let mut cut: f64 = 0.0;
    let mut small = 0;
    for s in sv {
        let rel = if smax > 0.0 { s / smax } else { 0.0 };
        if rel <= tol_rel {
            small += 1;
            cut = cut.max(rel);
        } else {
            kept = kept.min(rel);
        }
    }
    Ok((small, kept, cut))
}

fn at_truncation(sm: &StandardModule1D, tol_rel: f64) -> Result<StandardCohomology> {
    let kappa = sm.kappa();
    let copies = sm.q.unsigned_abs() as usize;
    let (k0, kept0, cut0) = kernel_count(&rectangular(kappa, sm.m, false), tol_rel)?;
    let (k1, kept1, cut1) = kernel_count(&rectangular(kappa, sm.m, true), tol_rel)?;
    let sigma_kept = kept0.min(kept1);
    let sigma_cut = cut0.max(cut1);
    let h0 = k0 * copies;
    let h1 = k1 * copies;
    Ok(StandardCohomology {
        h0,
        h1,
        index: h0 as i64 - h1 as i64,
        sigma_kept,
        sigma_cut,
        conclusive: sigma_kept >= 10.0 * tol_rel && sigma_cut * 10.0 < tol_rel,
        stable: false,
        truncation: sm.m,
    })
}

/// `(dim H⁰, dim H¹, index)` from kernels of `∇̄` and `∇̄*`, checked at `M` and `2M`.
/// The copies are uncoupled and identical, so one copy is decomposed and its
/// counts multiplied by `|q|`.
pub fn standard_module_cohomology(sm: &StandardModule1D, tol_rel: f64) -> Result<StandardCohomology> {
    if !(tol_rel > 0.0 && tol_rel < 1.0) {
        return Err(Error::InvalidInput(format!("tol_rel must lie in (0, 1), got {tol_rel}")));
    }
    let mut a = at_truncation(sm, tol_rel)?;
    let b = at_truncation(&sm.with_truncation(2 * sm.m)?, tol_rel)?;
    a.stable = a.conclusive && b.conclusive && (a.h0, a.h1) == (b.h0, b.h1);
    a.conclusive &= b.conclusive;
    a.sigma_kept = a.sigma_kept.min(b.sigma_kept);
    a.sigma_cut = a.sigma_cut.max(b.sigma_cut);
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(StandardModule1D::new(1, 0, Complex64::new(0.0, 1.0), 32).is_err());
        assert!(StandardModule1D::new(1, 1, Complex64::new(0.0, -1.0), 32).is_err());
        assert!(StandardModule1D::new(1, 1, Complex64::new(0.0, 1.0), 8).is_err());
    }

    #[test]
    fn square_tau_is_bidiagonal_lowering() {
        let sm = StandardModule1D::new(1, 1, Complex64::new(0.0, 1.0), 20).unwrap();
        let a = hermite_dbar_matrix(&sm);
        // κ = 2π is real, so only the A part survives
        for r in 0..20 {
            for c in 0..20 {
                if c != r + 1 {
                    assert!(a[(r, c)].norm() < 1e-12, "({r},{c})");
                }
            }
        }
        let om = std::f64::consts::TAU;
        assert!((a[(4, 5)].re - (2.0 * om).sqrt() * 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn degree_three_kernel() {
        let sm = StandardModule1D::new(1, 3, Complex64::new(0.0, 1.0), 64).unwrap();
        let c = standard_module_cohomology(&sm, 1e-8).unwrap();
        assert_eq!((c.h0, c.h1, c.index), (3, 0, 3));
        assert!(c.stable);
    }
}
