//! Noncommutative complex tori at desk scale.
//!
//! The twisted Fourier algebra of the smooth noncommutative torus, complex
//! structures and their antiholomorphic frames, truncated Dolbeault complexes
//! with spectral cohomology and index, standard modules over noncommutative
//! elliptic curves, K-theory bookkeeping and the classical Riemann-form
//! machinery.

pub mod algebra;
pub mod cli;
pub mod complexstruct;
pub mod dolbeault;
pub mod error;
pub mod exact;
pub mod heisenberg1d;
pub mod ktheory;
pub mod lattice;
pub mod linalg;
pub mod riemann;

pub use error::{Error, Result};
