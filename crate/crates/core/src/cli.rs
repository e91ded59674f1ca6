//! Problem files, command dispatch and canonical JSON reports.
//!
//! A problem file is one JSON object. `n`, `theta` and `J` are required; the
//! other sections are read only by the commands that need them.
//!
//! ```json
//! {
//!   "n": 2,
//!   "theta": {"product_blocks": [0.31, 0.57]},
//!   "J": {"blocks": [[[0, -1], [1, 0]], [[0, -1], [1, 0]]]},
//!   "connection": {"rank": 1},
//!   "truncation": {"N": 8, "tol_rel": 1e-8}
//! }
//! ```
//!
//! Reports are pretty-printed with sorted keys and every float written as
//! `{:.12e}`, so identical inputs give byte-identical output.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::algebra::{FourierElement, FourierTerm, MatrixElement, ThetaMatrix};
use crate::complexstruct::{
    antihol_frame, elliptic_tau, j_from_period, period_from_j, AntiholFrame, ComplexStructure, PeriodMatrix,
};
use crate::dolbeault::{
    self, block_adapted_frame, cohomology_dims, flatness_curvature, kunneth_dims, line_flat_connection,
    operator_coo, pushforward_connection, FreeConnection, SpectralReport, TruncationBox,
};
use crate::error::{Error, Result};
use crate::exact::{ExactMatrix, GaussRat, Rational, RationalText};
use crate::heisenberg1d::{standard_module_cohomology, StandardModule1D};
use crate::ktheory::{chern_top, nonalg_scan, DEFAULT_BOUND};
use crate::riemann::{
    decompose_riemann_form, detect_block_structure, frobenius_basis, hermitian_from_form, ncriemann_h0_bound,
    riemann_form_search, siegel_frobenius, siegel_normalize, split_torus_exact, split_torus_example, IntegerSkewForm,
    Verdict, DEFAULT_SEARCH_BOUND,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SAMPLES: usize = 100;
pub const DEFAULT_HERMITE_TRUNCATION: usize = 200;

/// Plain number or exact `{num, den}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Real {
    Float(f64),
    Rational(RationalText),
}

impl Real {
    fn zero() -> Self {
        Real::Float(0.0)
    }

    pub fn value(&self) -> Result<f64> {
        match self {
            Real::Float(x) if x.is_finite() => Ok(*x),
            Real::Float(x) => Err(Error::InvalidInput(format!("non-finite number {x}"))),
            Real::Rational(r) => r
                .to_rational()
                .map(|q| crate::exact::rat_to_f64(&q))
                .ok_or_else(|| Error::InvalidInput("rational with zero denominator".into())),
        }
    }

    /// Integers written as plain numbers count as exact.
    pub fn exact(&self) -> Option<Rational> {
        match self {
            Real::Float(x) if x.fract() == 0.0 && x.abs() < 9.0e15 => Some(crate::exact::rat_int(*x as i64)),
            Real::Float(_) => None,
            Real::Rational(r) => r.to_rational(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cx {
    pub re: Real,
    #[serde(default = "Real::zero")]
    pub im: Real,
}

impl Cx {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re: Real::Float(re), im: Real::Float(im) }
    }

    pub fn value(&self) -> Result<Complex64> {
        Ok(Complex64::new(self.re.value()?, self.im.value()?))
    }

    pub fn exact(&self) -> Option<GaussRat> {
        Some(GaussRat::new(self.re.exact()?, self.im.exact()?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ThetaSpec {
    Matrix(Vec<Vec<f64>>),
    ProductBlocks { product_blocks: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitTorusSpec {
    pub tau: Cx,
    pub tau_prime: Cx,
    pub w: Cx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum JSpec {
    Matrix(Vec<Vec<Real>>),
    Period { period: Vec<Vec<Cx>> },
    Blocks { blocks: Vec<[[f64; 2]; 2]> },
    Tau { tau: Cx },
    SplitTorus { split_torus: SplitTorusSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineTerm {
    pub k: i64,
    pub coeffs: Vec<Cx>,
}

/// `a_j = ξ_j(m₀)·Σ_k X_k U^{k m₀} + c_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub m0: Vec<i64>,
    pub x: Vec<LineTerm>,
    #[serde(default)]
    pub c: Vec<Cx>,
}

fn one() -> usize {
    1
}

/// At most one of `scalar`, `line`, `terms`; none means the trivial connection.
/// `terms[j][a·r + b]` lists the Fourier terms of entry `(a, b)` of `a_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionSpec {
    #[serde(default = "one")]
    pub rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar: Option<Vec<Cx>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<LineSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<Vec<Vec<FourierTerm>>>>,
}

impl ConnectionSpec {
    pub fn trivial(rank: usize) -> Self {
        Self { rank, scalar: None, line: None, terms: None }
    }
}

fn default_hermite() -> usize {
    DEFAULT_HERMITE_TRUNCATION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Module1DSpec {
    #[serde(default = "default_p")]
    pub p: u32,
    pub q: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Cx>,
    #[serde(rename = "M", default = "default_hermite")]
    pub m: usize,
}

fn default_p() -> u32 {
    1
}

fn default_search_bound() -> i64 {
    DEFAULT_SEARCH_BOUND
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    #[serde(default = "default_search_bound")]
    pub bound: i64,
    #[serde(default)]
    pub exact: bool,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self { bound: DEFAULT_SEARCH_BOUND, exact: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec {
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_rel: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KunnethSpec {
    pub dims1: Vec<usize>,
    pub dims2: Vec<usize>,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn default_scan_bound() -> i64 {
    DEFAULT_BOUND
}

/// Attach the truncated `d_q` at `N` to `index` and `hodge` reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportSpec {
    pub degree: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_scan_bound")]
    pub bound: i64,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self { samples: DEFAULT_SAMPLES, bound: DEFAULT_BOUND }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n: usize,
    pub theta: ThetaSpec,
    #[serde(rename = "J")]
    pub j: JSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connection: Option<ConnectionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub module1d: Option<Module1DSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Integer alternating form on the lattice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<i64>,
    /// Columns normalized to the identity by `siegel`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kunneth: Option<KunnethSpec>,
    /// Connection over the leading noncommutative elliptic curve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pushforward: Option<ConnectionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub export: Option<ExportSpec>,
}

/// Validated problem with its algebraic objects built.
#[derive(Clone, Debug)]
pub struct Problem {
    pub file: ProblemFile,
    pub theta: Arc<ThetaMatrix>,
    pub cs: ComplexStructure,
    pub period: Option<PeriodMatrix>,
    pub connection: FreeConnection,
    pub form: Option<IntegerSkewForm>,
}

fn invalid(msg: String) -> Error {
    Error::InvalidInput(msg)
}

fn theta_from_spec(n: usize, spec: &ThetaSpec) -> Result<ThetaMatrix> {
    let d = 2 * n;
    match spec {
        ThetaSpec::Matrix(rows) => {
            if rows.len() != d {
                return Err(invalid(format!("theta: expected {d} rows, got {}", rows.len())));
            }
            for (i, r) in rows.iter().enumerate() {
                if r.len() != d {
                    return Err(invalid(format!("theta[{i}]: expected {d} entries, got {}", r.len())));
                }
            }
            for i in 0..d {
                for j in 0..=i {
                    if rows[i][j] != -rows[j][i] {
                        return Err(invalid(format!(
                            "theta is not skew: theta[{j}][{i}] = {} but theta[{i}][{j}] = {}",
                            rows[j][i], rows[i][j]
                        )));
                    }
                }
            }
            ThetaMatrix::from_rows(rows)
        }
        ThetaSpec::ProductBlocks { product_blocks } => {
            if product_blocks.len() != n {
                return Err(invalid(format!("theta.product_blocks: expected {n} values, got {}", product_blocks.len())));
            }
            ThetaMatrix::product_blocks(product_blocks)
        }
    }
}

fn exact_rows<T, U>(rows: &[Vec<T>], f: impl Fn(&T) -> Option<U>) -> Option<Vec<Vec<U>>> {
    rows.iter().map(|r| r.iter().map(&f).collect()).collect()
}

fn period_from_spec(n: usize, rows: &[Vec<Cx>]) -> Result<PeriodMatrix> {
    if rows.len() != n || rows.iter().any(|r| r.len() != 2 * n) {
        return Err(invalid(format!("J.period must be {n}×{}", 2 * n)));
    }
    match exact_rows(rows, Cx::exact) {
        Some(ex) => PeriodMatrix::from_exact(ex),
        None => PeriodMatrix::new(&rows.iter().map(|r| r.iter().map(Cx::value).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?),
    }
}

fn j_from_spec(n: usize, spec: &JSpec) -> Result<(ComplexStructure, Option<PeriodMatrix>)> {
    let d = 2 * n;
    let with_period = |pm: PeriodMatrix| -> Result<(ComplexStructure, Option<PeriodMatrix>)> {
        let cs = j_from_period(&pm)?;
        Ok((cs, Some(pm)))
    };
    match spec {
        JSpec::Matrix(rows) => {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(invalid(format!("J must be {d}×{d}")));
            }
            let cs = match exact_rows(rows, Real::exact) {
                Some(ex) => ComplexStructure::from_rational(ex as ExactMatrix<Rational>)?,
                None => ComplexStructure::new(&rows.iter().map(|r| r.iter().map(Real::value).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?)?,
            };
            Ok((cs, None))
        }
        JSpec::Period { period } => with_period(period_from_spec(n, period)?),
        JSpec::Blocks { blocks } => {
            if blocks.len() != n {
                return Err(invalid(format!("J.blocks: expected {n} blocks, got {}", blocks.len())));
            }
            Ok((ComplexStructure::from_blocks(blocks)?, None))
        }
        JSpec::Tau { tau } => {
            if n != 1 {
                return Err(invalid(format!("J.tau needs n = 1, got n = {n}")));
            }
            let row = vec![Cx::new(1.0, 0.0), tau.clone()];
            if tau.value()?.im <= 0.0 {
                return Err(invalid("J.tau: Im τ must be positive".into()));
            }
            with_period(period_from_spec(1, &[row])?)
        }
        JSpec::SplitTorus { split_torus: s } => {
            if n != 2 {
                return Err(invalid(format!("J.split_torus needs n = 2, got n = {n}")));
            }
            let pm = match (s.tau.exact(), s.tau_prime.exact(), s.w.exact()) {
                (Some(a), Some(b), Some(c)) => split_torus_exact(a, b, c)?,
                _ => split_torus_example(s.tau.value()?, s.tau_prime.value()?, s.w.value()?)?,
            };
            with_period(pm)
        }
    }
}

fn values(v: &[Cx]) -> Result<Vec<Complex64>> {
    v.iter().map(Cx::value).collect()
}

fn build_connection(spec: &ConnectionSpec, theta: &Arc<ThetaMatrix>, frame: &AntiholFrame, path: &str) -> Result<FreeConnection> {
    let n = theta.n_half();
    let r = spec.rank;
    if r == 0 {
        return Err(invalid(format!("{path}.rank must be positive")));
    }
    let given = [spec.scalar.is_some(), spec.line.is_some(), spec.terms.is_some()].into_iter().filter(|&x| x).count();
    if given > 1 {
        return Err(invalid(format!("{path}: give at most one of scalar, line, terms")));
    }
    if let Some(c) = &spec.scalar {
        if c.len() != n {
            return Err(invalid(format!("{path}.scalar: expected {n} values, got {}", c.len())));
        }
        return FreeConnection::scalar(theta, r, &values(c)?);
    }
    if let Some(l) = &spec.line {
        let c = if l.c.is_empty() { vec![Complex64::default(); n] } else { values(&l.c)? };
        let x = l.x.iter().map(|t| Ok((t.k, values(&t.coeffs)?))).collect::<Result<Vec<_>>>()?;
        if x.iter().any(|(k, a)| *k < 1 || a.len() != r * r) {
            return Err(invalid(format!("{path}.line.x: each term needs k ≥ 1 and {} coefficients", r * r)));
        }
        return line_flat_connection(theta, frame, &l.m0, &x, &c).map_err(|e| invalid(format!("{path}.line: {e}")));
    }
    if let Some(terms) = &spec.terms {
        if terms.len() != n {
            return Err(invalid(format!("{path}.terms: expected {n} matrices, got {}", terms.len())));
        }
        let mats = terms
            .iter()
            .enumerate()
            .map(|(j, entries)| {
                if entries.len() != r * r {
                    return Err(invalid(format!("{path}.terms[{j}]: expected {} entries, got {}", r * r, entries.len())));
                }
                let els = entries.iter().map(|t| FourierElement::from_terms(theta, t)).collect::<Result<Vec<_>>>()?;
                MatrixElement::from_entries(r, els)
            })
            .collect::<Result<Vec<_>>>()?;
        return FreeConnection::new(r, mats);
    }
    Ok(FreeConnection::trivial(theta, r))
}

impl ProblemFile {
    /// Builds and validates every object the file describes.
    pub fn build(&self) -> Result<Problem> {
        let n = self.n;
        if n == 0 {
            return Err(invalid("n must be positive".into()));
        }
        let theta = Arc::new(theta_from_spec(n, &self.theta)?);
        let (cs, period) = j_from_spec(n, &self.j).map_err(|e| invalid(format!("J: {e}")))?;
        let frame = antihol_frame(&cs)?;
        let connection = build_connection(self.connection.as_ref().unwrap_or(&ConnectionSpec::trivial(1)), &theta, &frame, "connection")?;
        let form = match &self.form {
            Some(rows) => {
                let e = IntegerSkewForm::new(rows.clone()).map_err(|e| invalid(format!("form: {e}")))?;
                if e.n() != n {
                    return Err(invalid(format!("form must be {}×{}", 2 * n, 2 * n)));
                }
                Some(e)
            }
            None => None,
        };
        if let Some(m) = &self.module1d {
            let tau = match &m.tau {
                Some(t) => t.value()?,
                None if n == 1 => elliptic_tau(&cs)?,
                None => Complex64::new(0.0, 1.0),
            };
            StandardModule1D::new(m.p, m.q, tau, m.m).map_err(|e| invalid(format!("module1d: {e}")))?;
        }
        if let Some(t) = &self.truncation {
            if t.n == Some(0) {
                return Err(invalid("truncation.N must be at least 1".into()));
            }
            if let Some(x) = t.tol_rel {
                if !(x > 0.0 && x < 1.0) {
                    return Err(invalid(format!("truncation.tol_rel must lie in (0, 1), got {x}")));
                }
            }
        }
        if let Some(s) = &self.split {
            if s.len() != n || s.iter().any(|&c| c >= 2 * n) {
                return Err(invalid(format!("split must list {n} column indices below {}", 2 * n)));
            }
        }
        Ok(Problem { file: self.clone(), theta, cs, period, connection, form })
    }

    pub fn truncation(&self) -> usize {
        self.truncation.as_ref().and_then(|t| t.n).unwrap_or(if self.n <= 2 { 8 } else { 4 })
    }

    pub fn tol_rel(&self) -> f64 {
        self.truncation.as_ref().and_then(|t| t.tol_rel).unwrap_or(dolbeault::DEFAULT_TOL_REL)
    }

    pub fn apply(&mut self, o: &Overrides, command: Command) {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if o.truncation.is_some() || o.tol_rel.is_some() {
            let t = self.truncation.get_or_insert_with(TruncationSpec::default);
            if o.truncation.is_some() {
                t.n = o.truncation;
            }
            if o.tol_rel.is_some() {
                t.tol_rel = o.tol_rel;
            }
        }
        if command == Command::NonalgScan {
            let s = self.scan.get_or_insert_with(ScanSpec::default);
            if let Some(b) = o.bound {
                s.bound = b;
            }
        } else if o.bound.is_some() || o.exact {
            let s = self.search.get_or_insert_with(SearchSpec::default);
            if let Some(b) = o.bound {
                s.bound = b;
            }
            s.exact |= o.exact;
        }
    }
}

/// Parses and validates a problem file, reporting the failing field with its
/// line and column.
pub fn parse_problem_file(text: &str) -> Result<ProblemFile> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let pf: ProblemFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        invalid(format!("{} (line {}, column {}): {}", e.path(), inner.line(), inner.column(), inner))
    })?;
    pf.build()?;
    Ok(pf)
}

pub fn emit_problem_file(pf: &ProblemFile) -> String {
    serde_json::to_string_pretty(pf).expect("problem files serialize")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Command {
    Index,
    Hodge,
    Flatness,
    Kunneth,
    Pushforward,
    Standard1d,
    NonalgScan,
    RiemannCheck,
    Frobenius,
    Decompose,
    Siegel,
    Splittorus,
    NcriemannBound,
    DetectBlocks,
}

impl Command {
    pub const ALL: [Command; 14] = [
        Command::Index,
        Command::Hodge,
        Command::Flatness,
        Command::Kunneth,
        Command::Pushforward,
        Command::Standard1d,
        Command::NonalgScan,
        Command::RiemannCheck,
        Command::Frobenius,
        Command::Decompose,
        Command::Siegel,
        Command::Splittorus,
        Command::NcriemannBound,
        Command::DetectBlocks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Index => "index",
            Command::Hodge => "hodge",
            Command::Flatness => "flatness",
            Command::Kunneth => "kunneth",
            Command::Pushforward => "pushforward",
            Command::Standard1d => "standard1d",
            Command::NonalgScan => "nonalg-scan",
            Command::RiemannCheck => "riemann-check",
            Command::Frobenius => "frobenius",
            Command::Decompose => "decompose",
            Command::Siegel => "siegel",
            Command::Splittorus => "splittorus",
            Command::NcriemannBound => "ncriemann-bound",
            Command::DetectBlocks => "detect-blocks",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Command::ALL.iter().map(|c| c.name()).collect();
            invalid(format!("unknown command `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub truncation: Option<usize>,
    pub tol_rel: Option<f64>,
    pub bound: Option<i64>,
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub command: Command,
    pub seed: Option<u64>,
    pub inputs: Value,
    pub results: Value,
    pub diagnostics: Value,
    pub conclusive: bool,
}

impl Report {
    pub fn to_value(&self) -> Value {
        json!({
            "command": self.command.name(),
            "conclusive": self.conclusive,
            "diagnostics": self.diagnostics,
            "inputs": self.inputs,
            "results": self.results,
            "schema": SCHEMA_VERSION,
            "seed": self.seed,
            "version": env!("CARGO_PKG_VERSION"),
        })
    }

    pub fn to_canonical_json(&self) -> String {
        canonical_json(&self.to_value())
    }

    /// 0 conclusive, 2 numerically inconclusive.
    pub fn exit_code(&self) -> i32 {
        if self.conclusive {
            0
        } else {
            2
        }
    }
}

fn write_number(n: &serde_json::Number, out: &mut String) {
    if let Some(i) = n.as_i64() {
        out.push_str(&i.to_string());
    } else if let Some(u) = n.as_u64() {
        out.push_str(&u.to_string());
    } else {
        out.push_str(&format!("{:.12e}", n.as_f64().unwrap_or(f64::NAN)));
    }
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |k: usize| "  ".repeat(k);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(n, out),
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) if a.iter().all(is_scalar) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(x, indent, out);
            }
            out.push(']');
        }
        Value::Array(a) => {
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(x, indent + 1, out);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("strings serialize"));
                out.push_str(": ");
                write_value(&m[*k], indent + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Sorted keys, two-space indent, floats as `{:.12e}`, trailing newline.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, 0, &mut out);
    out.push('\n');
    out
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("report values serialize")
}

struct Outcome {
    results: Value,
    diagnostics: Map<String, Value>,
    conclusive: bool,
}

impl Outcome {
    fn done(results: Value) -> Self {
        Self { results, diagnostics: Map::new(), conclusive: true }
    }

    fn note(mut self, key: &str, v: Value) -> Self {
        self.diagnostics.insert(key.to_string(), v);
        self
    }
}

fn gap_reason(kept: f64, cut: f64, tol: f64) -> Value {
    json!(format!(
        "no clear singular-value gap: smallest kept {kept:.3e}, largest cut {cut:.3e} relative to tol_rel {tol:.1e}"
    ))
}

fn spectral_outcome(rep: &SpectralReport, mut results: Value, n: usize) -> Outcome {
    if let Value::Object(m) = &mut results {
        m.insert("report".into(), to_value(rep));
    }
    let mut o = Outcome { results, diagnostics: Map::new(), conclusive: rep.stable };
    o = o
        .note("sigma_kept", json!(rep.sigma_kept))
        .note("sigma_cut", json!(rep.sigma_cut))
        .note("tol_rel", json!(rep.tol_rel))
        .note("truncation", json!([n, n + 2]));
    if !rep.conclusive {
        o = o.note("reason", gap_reason(rep.sigma_kept, rep.sigma_cut, rep.tol_rel));
    } else if !rep.stable {
        o = o.note("reason", json!("dimensions differ between N and N + 2"));
    }
    o
}

fn theta_block(theta: &ThetaMatrix, k: usize) -> f64 {
    theta.get(2 * k, 2 * k + 1)
}

fn j_block(cs: &ComplexStructure, k: usize) -> Result<ComplexStructure> {
    let r = 2 * k;
    ComplexStructure::new(&[vec![cs.get(r, r), cs.get(r, r + 1)], vec![cs.get(r + 1, r), cs.get(r + 1, r + 1)]])
}

/// Row `k` of a block-adapted frame as a frame of block `k`.
fn factor_frame(big: &AntiholFrame, cs_k: &ComplexStructure, k: usize) -> Result<AntiholFrame> {
    let row = vec![big.get(k, 2 * k), big.get(k, 2 * k + 1)];
    AntiholFrame::from_rows(cs_k, &[row], vec![big.pivots()[k] - 2 * k])
}

fn period_of(p: &Problem) -> Result<PeriodMatrix> {
    match &p.period {
        Some(pm) => Ok(pm.clone()),
        None => period_from_j(&p.cs),
    }
}

fn run_index(p: &Problem) -> Result<Outcome> {
    let n = p.file.truncation();
    let tol = p.file.tol_rel();
    let frame = antihol_frame(&p.cs)?;
    let rep = dolbeault::index(&p.cs, &frame, &p.connection, TruncationBox::new(n)?, tol)?;
    let mut results = to_value(&rep);
    attach_operator(p, &frame, &mut results)?;
    let mut o = Outcome { results, diagnostics: Map::new(), conclusive: rep.stable };
    o = o
        .note("sigma_kept", json!(rep.sigma_kept))
        .note("sigma_cut", json!(rep.sigma_cut))
        .note("tol_rel", json!(tol))
        .note("truncation", json!([n, n + 2]))
        .note("frame_residual", json!(frame.eigen_residual(&p.cs)));
    if !rep.conclusive {
        o = o.note("reason", gap_reason(rep.sigma_kept, rep.sigma_cut, tol));
    } else if !rep.stable {
        o = o.note("reason", json!("index differs between N and N + 2"));
    }
    Ok(o)
}

fn run_hodge(p: &Problem) -> Result<Outcome> {
    let n = p.file.truncation();
    let frame = antihol_frame(&p.cs)?;
    let rep = cohomology_dims(&p.cs, &frame, &p.connection, TruncationBox::new(n)?, p.file.tol_rel())?;
    let chi = rep.euler_characteristic();
    let mut results = json!({
        "dims": rep.dims,
        "index": rep.index,
        "euler_characteristic": chi,
        "hodge_consistent": chi == rep.index,
        "stable": rep.stable,
    });
    attach_operator(p, &frame, &mut results)?;
    Ok(spectral_outcome(&rep, results, n))
}

fn attach_operator(p: &Problem, frame: &AntiholFrame, results: &mut Value) -> Result<()> {
    let Some(ex) = &p.file.export else { return Ok(()) };
    let n = p.file.truncation();
    let coo = operator_coo(&p.cs, frame, &p.connection, TruncationBox::new(n)?, ex.degree)?;
    results["operator"] = json!({"degree": ex.degree, "truncation": n, "coo": to_value(&coo)});
    Ok(())
}

fn run_flatness(p: &Problem) -> Result<Outcome> {
    let frame = antihol_frame(&p.cs)?;
    let curv = flatness_curvature(&p.connection, &frame)?;
    let nn = curv.f.len();
    let mut comps = Vec::new();
    for j in 0..nn {
        for k in j + 1..nn {
            let f = &curv.f[j][k];
            let entries: Vec<Value> = f.entries().iter().map(|e| to_value(&e.to_terms())).collect();
            comps.push(json!({"j": j + 1, "k": k + 1, "max_coeff": f.max_abs(), "entries": entries}));
        }
    }
    Ok(Outcome::done(json!({"is_flat": curv.is_flat, "max_coeff": curv.max_coeff, "curvature": comps}))
        .note("flat_tolerance", json!(dolbeault::FLAT_TOL)))
}

fn scalar_data(p: &Problem) -> Result<(usize, Vec<Complex64>)> {
    let spec = p.file.connection.clone().unwrap_or_else(|| ConnectionSpec::trivial(1));
    if spec.line.is_some() || spec.terms.is_some() {
        return Err(invalid("kunneth: the product check needs a trivial or scalar connection".into()));
    }
    let c = match &spec.scalar {
        Some(c) => values(c)?,
        None => vec![Complex64::default(); p.file.n],
    };
    Ok((spec.rank, c))
}

fn run_kunneth(p: &Problem) -> Result<Outcome> {
    if let Some(k) = &p.file.kunneth {
        return Ok(Outcome::done(json!({"dims1": k.dims1, "dims2": k.dims2, "dims": kunneth_dims(&k.dims1, &k.dims2)})));
    }
    if p.file.n != 2 {
        return Err(invalid("kunneth: give a kunneth section or an n = 2 product-type torus".into()));
    }
    let blocks = detect_block_structure(&p.theta, &p.cs)?;
    if !blocks.product_type {
        return Err(Error::Hypothesis(format!(
            "(theta, J) is not of product type (J coupling {:.3e}, theta coupling {:.3e})",
            blocks.j_coupling, blocks.theta_coupling
        )));
    }
    let (rank, c) = scalar_data(p)?;
    let n = p.file.truncation();
    let tol = p.file.tol_rel();
    let bx = TruncationBox::new(n)?;
    let big = block_adapted_frame(&antihol_frame(&p.cs)?)?;
    let direct = cohomology_dims(&p.cs, &big, &FreeConnection::scalar(&p.theta, rank, &c)?, bx, tol)?;
    let mut factors = Vec::with_capacity(2);
    for k in 0..2 {
        let theta_k = Arc::new(ThetaMatrix::two_torus(theta_block(&p.theta, k)));
        let cs_k = j_block(&p.cs, k)?;
        let frame_k = factor_frame(&big, &cs_k, k)?;
        let conn_k = FreeConnection::scalar(&theta_k, if k == 0 { rank } else { 1 }, &[c[k]])?;
        factors.push(cohomology_dims(&cs_k, &frame_k, &conn_k, bx, tol)?);
    }
    let predicted = kunneth_dims(&factors[0].dims, &factors[1].dims);
    let stable = direct.stable && factors.iter().all(|f| f.stable);
    let results = json!({
        "dims1": factors[0].dims,
        "dims2": factors[1].dims,
        "dims": predicted,
        "direct_dims": direct.dims,
        "matches": predicted == direct.dims,
        "stable": stable,
    });
    let mut o = Outcome { results, diagnostics: Map::new(), conclusive: stable };
    let kept = factors.iter().map(|f| f.sigma_kept).fold(direct.sigma_kept, f64::min);
    let cut = factors.iter().map(|f| f.sigma_cut).fold(direct.sigma_cut, f64::max);
    o = o.note("sigma_kept", json!(kept)).note("sigma_cut", json!(cut)).note("truncation", json!([n, n + 2]));
    if !stable {
        o = o.note("reason", gap_reason(kept, cut, tol));
    }
    Ok(o)
}

fn run_pushforward(p: &Problem) -> Result<Outcome> {
    let spec = p.file.pushforward.as_ref().ok_or_else(|| invalid("pushforward: missing `pushforward` section".into()))?;
    if p.file.n < 2 {
        return Err(invalid("pushforward needs n ≥ 2".into()));
    }
    let blocks = detect_block_structure(&p.theta, &p.cs)?;
    if !blocks.splitting {
        return Err(Error::Hypothesis(format!(
            "J is not block diagonal with a leading 2×2 block (coupling {:.3e})",
            blocks.j_leading_coupling
        )));
    }
    let n = p.file.truncation();
    let tol = p.file.tol_rel();
    let bx = TruncationBox::new(n)?;
    let theta_small = Arc::new(ThetaMatrix::two_torus(theta_block(&p.theta, 0)));
    let cs_small = j_block(&p.cs, 0)?;
    let small_frame = antihol_frame(&cs_small)?;
    let conn_small = build_connection(spec, &theta_small, &small_frame, "pushforward")?;
    let big_frame = block_adapted_frame(&antihol_frame(&p.cs)?)?;
    let pushed = pushforward_connection(&small_frame, &conn_small, &p.theta, &p.cs, &big_frame)?;
    let small = cohomology_dims(&cs_small, &small_frame, &conn_small, bx, tol)?;
    let big = cohomology_dims(&p.cs, &big_frame, &pushed, bx, tol)?;
    let stable = small.stable && big.stable;
    let results = json!({
        "theta12": theta_block(&p.theta, 0),
        "h0": small.dims[0],
        "h0_pushforward": big.dims[0],
        "inequality_holds": big.dims[0] >= small.dims[0],
        "source": to_value(&small),
        "pushforward": to_value(&big),
        "stable": stable,
    });
    let kept = small.sigma_kept.min(big.sigma_kept);
    let cut = small.sigma_cut.max(big.sigma_cut);
    let mut o = Outcome { results, diagnostics: Map::new(), conclusive: stable }
        .note("sigma_kept", json!(kept))
        .note("sigma_cut", json!(cut))
        .note("truncation", json!([n, n + 2]));
    if !stable {
        o = o.note("reason", gap_reason(kept, cut, tol));
    }
    Ok(o)
}

fn run_standard1d(p: &Problem) -> Result<Outcome> {
    let m = p.file.module1d.as_ref().ok_or_else(|| invalid("standard1d: missing `module1d` section".into()))?;
    let tau = match &m.tau {
        Some(t) => t.value()?,
        None if p.file.n == 1 => elliptic_tau(&p.cs)?,
        None => return Err(invalid("standard1d: module1d.tau is required when n > 1".into())),
    };
    let sm = StandardModule1D::new(m.p, m.q, tau, m.m)?;
    let tol = p.file.tol_rel();
    let c = standard_module_cohomology(&sm, tol)?;
    let k0 = sm.k0_class();
    let results = json!({
        "h0": c.h0,
        "h1": c.h1,
        "index": c.index,
        "degree": chern_top(&k0),
        "rank": sm.rank(),
        "tau": tau,
        "one_group_nonzero": (c.h0 == 0) != (c.h1 == 0),
        "stable": c.stable,
        "report": to_value(&c),
    });
    let mut o = Outcome { results, diagnostics: Map::new(), conclusive: c.stable }
        .note("sigma_kept", json!(c.sigma_kept))
        .note("sigma_cut", json!(c.sigma_cut))
        .note("truncation", json!([sm.truncation(), 2 * sm.truncation()]))
        .note("tol_rel", json!(tol));
    if !c.stable {
        o = o.note("reason", gap_reason(c.sigma_kept, c.sigma_cut, tol));
    }
    Ok(o)
}

fn run_nonalg_scan(p: &Problem) -> Result<Outcome> {
    let scan = p.file.scan.clone().unwrap_or_default();
    let seed = p.file.seed.unwrap_or(0);
    let rep = nonalg_scan(seed, scan.samples, scan.bound)?;
    let failures: Vec<Value> = rep
        .certificates
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.certified)
        .map(|(i, c)| json!({"sample": i, "vanishing_pairs": c.vanishing_pairs, "top_vanishes": c.top_vanishes, "top_value": c.top_value}))
        .collect();
    Ok(Outcome::done(json!({
        "seed": seed,
        "samples": rep.samples,
        "bound": rep.bound,
        "certified": rep.certified,
        "certified_fraction": rep.certified_fraction,
        "failures": failures,
        "certificates": to_value(&rep.certificates),
    }))
    .note("bound", json!(scan.bound)))
}

fn search_outcome(p: &Problem, search: &crate::riemann::RiemannSearch) -> Result<Outcome> {
    let mut results = to_value(search);
    if let (Some(form), Value::Object(m)) = (&search.form, &mut results) {
        let h = hermitian_from_form(form, &p.cs)?;
        m.insert("hermitian".into(), to_value(&h));
        if form.is_nondegenerate() {
            let basis = frobenius_basis(form)?;
            m.insert("divisors".into(), json!(basis.divisors()));
            m.insert("siegel".into(), to_value(&siegel_frobenius(&period_of(p)?, &basis)?));
        }
    }
    let mut o = Outcome { results, diagnostics: Map::new(), conclusive: search.verdict != Verdict::Inconclusive }
        .note("bound", json!(search.bound))
        .note("kernel_dim", json!(search.kernel_dim))
        .note("integer_rank", json!(search.integer_rank))
        .note("exact", json!(search.exact));
    if let Some(msg) = &search.note {
        o = o.note("reason", json!(msg));
    }
    Ok(o)
}

fn run_riemann_check(p: &Problem) -> Result<Outcome> {
    let s = p.file.search.clone().unwrap_or_default();
    let search = riemann_form_search(&p.cs, s.bound, s.exact)?;
    search_outcome(p, &search)
}

fn required_form(p: &Problem, cmd: &str) -> Result<IntegerSkewForm> {
    p.form.clone().ok_or_else(|| invalid(format!("{cmd}: missing `form` section")))
}

fn run_frobenius(p: &Problem) -> Result<Outcome> {
    let e = required_form(p, "frobenius")?;
    let b = frobenius_basis(&e)?;
    Ok(Outcome::done(json!({
        "u": b.u(),
        "divisors": b.divisors(),
        "determinant": b.determinant().to_string(),
        "verified": b.verify(&e),
    })))
}

fn run_decompose(p: &Problem) -> Result<Outcome> {
    let e = required_form(p, "decompose")?;
    let b = frobenius_basis(&e)?;
    let pieces = decompose_riemann_form(&e, &b, &p.cs)?;
    let d = e.dim();
    let sum_ok = (0..d).all(|i| (0..d).all(|j| pieces.iter().map(|s| s.form.get(i, j)).sum::<i64>() == e.get(i, j)));
    let out: Vec<Value> = pieces
        .iter()
        .map(|s| {
            json!({
                "form": s.form.rows(),
                "rank": s.form.rank(),
                "decomposable": s.form.is_decomposable(),
                "eigenvalues": s.hermitian.eigenvalues,
                "positive_eigenvalues": s.positive_eigenvalues,
                "null_eigenvalues": s.null_eigenvalues,
            })
        })
        .collect();
    Ok(Outcome::done(json!({"divisors": b.divisors(), "pieces": out, "sum_reconstructs": sum_ok})))
}

/// The last `n` columns, or else the first invertible choice in
/// lexicographic order.
fn default_split(pm: &PeriodMatrix) -> Result<Vec<usize>> {
    let n = pm.n();
    let q = pm.matrix();
    let ok = |cols: &[usize]| -> Result<bool> {
        let b = faer::Mat::from_fn(n, n, |r, c| q[(r, cols[c])]);
        Ok(crate::linalg::rcond(&b)? >= 1e-12)
    };
    let last: Vec<usize> = (n..2 * n).collect();
    if ok(&last)? {
        return Ok(last);
    }
    let mut cols: Vec<usize> = (0..n).collect();
    loop {
        if ok(&cols)? {
            return Ok(cols);
        }
        let Some(i) = (0..n).rev().find(|&i| cols[i] < 2 * n - n + i) else {
            return Err(Error::DegenerateLattice("no invertible column block".into()));
        };
        cols[i] += 1;
        for k in i + 1..n {
            cols[k] = cols[k - 1] + 1;
        }
    }
}

fn run_siegel(p: &Problem) -> Result<Outcome> {
    let pm = period_of(p)?;
    let split = match &p.file.split {
        Some(s) => s.clone(),
        None => default_split(&pm)?,
    };
    let mut results = json!({"split": split, "normalized": to_value(&siegel_normalize(&pm, &split)?)});
    if let Some(e) = &p.form {
        results["frobenius"] = to_value(&siegel_frobenius(&pm, &frobenius_basis(e)?)?);
    }
    Ok(Outcome::done(results).note("period_condition", json!(pm.condition())))
}

fn run_splittorus(p: &Problem) -> Result<Outcome> {
    let JSpec::SplitTorus { split_torus } = &p.file.j else {
        return Err(invalid("splittorus: J must be given as {\"split_torus\": {tau, tau_prime, w}}".into()));
    };
    let pm = period_of(p)?;
    let s = p.file.search.clone().unwrap_or_default();
    let search = riemann_form_search(&p.cs, s.bound, s.exact)?;
    let mut o = search_outcome(p, &search)?;
    let quotient = [pm.matrix()[(1, 2)], pm.matrix()[(1, 3)]];
    let tau = split_torus.tau.value()?;
    let extra = json!({
        "period": pm.rows(),
        "exact_lattice": pm.exact().is_some(),
        "J": p.cs.rows(),
        "siegel": to_value(&siegel_normalize(&pm, &[0, 2])?),
        "quotient_lattice": quotient,
        "quotient_matches": (quotient[0] - Complex64::new(1.0, 0.0)).norm() == 0.0 && (quotient[1] - tau).norm() == 0.0,
    });
    if let (Value::Object(m), Value::Object(x)) = (&mut o.results, extra) {
        m.extend(x);
    }
    Ok(o.note("period_condition", json!(pm.condition())))
}

fn run_ncriemann(p: &Problem) -> Result<Outcome> {
    let e = p.form.clone().unwrap_or_else(|| IntegerSkewForm::standard(p.file.n));
    let k = p.file.multiplier.unwrap_or(1);
    let b = ncriemann_h0_bound(&p.theta, &p.cs, &e, k)?;
    let c = &b.cohomology;
    let results = json!({
        "bound": b.bound,
        "exceeds_one": b.bound > 1,
        "multiplier": b.multiplier,
        "divisors": b.divisors,
        "degree": b.degree,
        "tau": b.tau,
        "cohomology": to_value(c),
    });
    let mut o = Outcome { results, diagnostics: Map::new(), conclusive: c.stable }
        .note("sigma_kept", json!(c.sigma_kept))
        .note("sigma_cut", json!(c.sigma_cut))
        .note("truncation", json!([c.truncation, 2 * c.truncation]));
    if !c.stable {
        o = o.note("reason", gap_reason(c.sigma_kept, c.sigma_cut, dolbeault::DEFAULT_TOL_REL));
    }
    Ok(o)
}

fn run_detect_blocks(p: &Problem) -> Result<Outcome> {
    Ok(Outcome::done(to_value(&detect_block_structure(&p.theta, &p.cs)?)).note("tolerance", json!(crate::riemann::BLOCK_TOL)))
}

/// Runs `command` on a validated problem. Overrides are applied first and
/// echoed in the report inputs.
pub fn run(command: Command, pf: &ProblemFile, overrides: &Overrides) -> Result<Report> {
    let mut pf = pf.clone();
    pf.apply(overrides, command);
    let p = pf.build()?;
    let o = match command {
        Command::Index => run_index(&p)?,
        Command::Hodge => run_hodge(&p)?,
        Command::Flatness => run_flatness(&p)?,
        Command::Kunneth => run_kunneth(&p)?,
        Command::Pushforward => run_pushforward(&p)?,
        Command::Standard1d => run_standard1d(&p)?,
        Command::NonalgScan => run_nonalg_scan(&p)?,
        Command::RiemannCheck => run_riemann_check(&p)?,
        Command::Frobenius => run_frobenius(&p)?,
        Command::Decompose => run_decompose(&p)?,
        Command::Siegel => run_siegel(&p)?,
        Command::Splittorus => run_splittorus(&p)?,
        Command::NcriemannBound => run_ncriemann(&p)?,
        Command::DetectBlocks => run_detect_blocks(&p)?,
    };
    Ok(Report {
        command,
        seed: pf.seed,
        inputs: to_value(&pf),
        results: o.results,
        diagnostics: Value::Object(o.diagnostics),
        conclusive: o.conclusive,
    })
}
