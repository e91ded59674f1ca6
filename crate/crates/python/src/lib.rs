//! Python bindings for `nctorus`.

use std::sync::Arc;

use nctorus::algebra::{self, ThetaMatrix};
use nctorus::cli::{self, Command, Overrides};
use nctorus::complexstruct::{antihol_frame, ComplexStructure};
use nctorus::dolbeault::{self, FreeConnection, TruncationBox};
use nctorus::heisenberg1d::{standard_module_cohomology, StandardModule1D};
use nctorus::riemann::{self, IntegerSkewForm, Verdict};
use nctorus::{ktheory, Error};
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn theta_from_rows(rows: &[Vec<f64>]) -> PyResult<Arc<ThetaMatrix>> {
    ThetaMatrix::from_rows(rows).map(Arc::new).map_err(py_err)
}

/// Element of the noncommutative torus with finitely many Fourier modes.
#[pyclass(name = "FourierElement", module = "pynctorus")]
struct PyFourierElement {
    inner: algebra::FourierElement,
}

#[pymethods]
impl PyFourierElement {
    /// `theta` is the skew matrix, `terms` a list of `(mode, coefficient)`.
    #[new]
    fn new(theta: Vec<Vec<f64>>, terms: Vec<(Vec<i64>, Complex64)>) -> PyResult<Self> {
        let theta = theta_from_rows(&theta)?;
        let inner = algebra::FourierElement::from_pairs(&theta, terms).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn __mul__(&self, other: &Self) -> PyResult<Self> {
        self.inner.multiply(&other.inner).map(|inner| Self { inner }).map_err(py_err)
    }

    fn __add__(&self, other: &Self) -> PyResult<Self> {
        self.inner.try_add(&other.inner).map(|inner| Self { inner }).map_err(py_err)
    }

    fn star(&self) -> Self {
        Self { inner: self.inner.star() }
    }

    fn trace(&self) -> Complex64 {
        self.inner.trace()
    }

    fn derivation(&self, j: usize) -> PyResult<Self> {
        self.inner.derivation(j).map(|inner| Self { inner }).map_err(py_err)
    }

    fn terms(&self) -> Vec<(Vec<i64>, Complex64)> {
        self.inner.iter().map(|(m, c)| (m.clone(), *c)).collect()
    }

    fn __repr__(&self) -> String {
        format!("FourierElement({})", self.inner)
    }
}

/// Canonical JSON report for `command` on a problem file given as text.
#[pyfunction]
#[pyo3(signature = (command, problem, seed=None, truncation=None, tol_rel=None, bound=None, exact=false))]
fn run(
    command: &str,
    problem: &str,
    seed: Option<u64>,
    truncation: Option<usize>,
    tol_rel: Option<f64>,
    bound: Option<i64>,
    exact: bool,
) -> PyResult<String> {
    let cmd: Command = command.parse().map_err(py_err)?;
    let pf = cli::parse_problem_file(problem).map_err(py_err)?;
    let overrides = Overrides { seed, truncation, tol_rel, bound, exact };
    cli::run(cmd, &pf, &overrides).map(|r| r.to_canonical_json()).map_err(py_err)
}

/// `(dims, index, stable)` for a scalar connection `c` (default 0) on a free module.
#[pyfunction]
#[pyo3(signature = (j, theta, rank=1, c=None, truncation=8, tol_rel=1e-8))]
fn cohomology(
    j: Vec<Vec<f64>>,
    theta: Vec<Vec<f64>>,
    rank: usize,
    c: Option<Vec<Complex64>>,
    truncation: usize,
    tol_rel: f64,
) -> PyResult<(Vec<usize>, i64, bool)> {
    let cs = ComplexStructure::new(&j).map_err(py_err)?;
    let theta = theta_from_rows(&theta)?;
    let frame = antihol_frame(&cs).map_err(py_err)?;
    let c = c.unwrap_or_else(|| vec![Complex64::default(); cs.n()]);
    let conn = FreeConnection::scalar(&theta, rank, &c).map_err(py_err)?;
    let bx = TruncationBox::new(truncation).map_err(py_err)?;
    let rep = dolbeault::cohomology_dims(&cs, &frame, &conn, bx, tol_rel).map_err(py_err)?;
    Ok((rep.dims, rep.index, rep.stable))
}

/// Truncated `d_q` for a scalar connection as `(nrows, ncols, [(row, col, re, im)])`.
#[pyfunction]
#[pyo3(signature = (j, theta, degree, rank=1, c=None, truncation=2))]
fn operator_coo(
    j: Vec<Vec<f64>>,
    theta: Vec<Vec<f64>>,
    degree: usize,
    rank: usize,
    c: Option<Vec<Complex64>>,
    truncation: usize,
) -> PyResult<(usize, usize, Vec<(usize, usize, f64, f64)>)> {
    let cs = ComplexStructure::new(&j).map_err(py_err)?;
    let theta = theta_from_rows(&theta)?;
    let frame = antihol_frame(&cs).map_err(py_err)?;
    let c = c.unwrap_or_else(|| vec![Complex64::default(); cs.n()]);
    let conn = FreeConnection::scalar(&theta, rank, &c).map_err(py_err)?;
    let bx = TruncationBox::new(truncation).map_err(py_err)?;
    let coo = dolbeault::operator_coo(&cs, &frame, &conn, bx, degree).map_err(py_err)?;
    Ok((coo.nrows, coo.ncols, coo.entries))
}

/// `(h0, h1, index, stable)` of the degree-`q` standard module.
#[pyfunction]
#[pyo3(signature = (q, tau, p=1, truncation=200, tol_rel=1e-8))]
fn standard_module(q: i64, tau: Complex64, p: u32, truncation: usize, tol_rel: f64) -> PyResult<(usize, usize, i64, bool)> {
    let sm = StandardModule1D::new(p, q, tau, truncation).map_err(py_err)?;
    let r = standard_module_cohomology(&sm, tol_rel).map_err(py_err)?;
    Ok((r.h0, r.h1, r.index, r.stable))
}

/// `(verdict, form)` where `form` is `None` unless a Riemann form was found.
#[pyfunction]
#[pyo3(signature = (j, bound=6))]
fn riemann_search(j: Vec<Vec<f64>>, bound: i64) -> PyResult<(String, Option<Vec<Vec<i64>>>)> {
    let cs = ComplexStructure::new(&j).map_err(py_err)?;
    let s = riemann::riemann_form_search(&cs, bound, false).map_err(py_err)?;
    let verdict = match s.verdict {
        Verdict::Found => "found",
        Verdict::NoneWithinBound => "none_within_bound",
        Verdict::Inconclusive => "inconclusive",
    };
    Ok((verdict.to_string(), s.form.map(|f| f.rows().to_vec())))
}

/// `(U, divisors)` with `Uᵀ E U` block-standard.
#[pyfunction]
fn frobenius(e: Vec<Vec<i64>>) -> PyResult<(Vec<Vec<i64>>, Vec<i64>)> {
    let form = IntegerSkewForm::new(e).map_err(py_err)?;
    let b = riemann::frobenius_basis(&form).map_err(py_err)?;
    Ok((b.u().to_vec(), b.divisors().to_vec()))
}

/// `(certified, samples)` of a seeded certificate scan.
#[pyfunction]
#[pyo3(signature = (seed, samples=100, bound=5))]
fn nonalg_scan(seed: u64, samples: usize, bound: i64) -> PyResult<(usize, usize)> {
    let s = ktheory::nonalg_scan(seed, samples, bound).map_err(py_err)?;
    Ok((s.certified, s.samples))
}

#[pymodule]
fn pynctorus(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFourierElement>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(cohomology, m)?)?;
    m.add_function(wrap_pyfunction!(operator_coo, m)?)?;
    m.add_function(wrap_pyfunction!(standard_module, m)?)?;
    m.add_function(wrap_pyfunction!(riemann_search, m)?)?;
    m.add_function(wrap_pyfunction!(frobenius, m)?)?;
    m.add_function(wrap_pyfunction!(nonalg_scan, m)?)?;
    Ok(())
}
