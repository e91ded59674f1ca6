//! Exact rational and Gaussian-rational arithmetic for small dense matrices.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(v: i64) -> Rational {
    BigRational::from_integer(BigInt::from(v))
}

pub fn rat_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Textual rational `{num, den}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalText {
    pub num: i64,
    pub den: i64,
}

impl RationalText {
    pub fn to_rational(&self) -> Option<Rational> {
        (self.den != 0).then(|| rat(self.num, self.den))
    }
}

/// `re + i·im` with rational parts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GaussRat {
    pub re: Rational,
    pub im: Rational,
}

impl GaussRat {
    pub fn new(re: Rational, im: Rational) -> Self {
        Self { re, im }
    }

    pub fn real(re: Rational) -> Self {
        Self { re, im: Rational::zero() }
    }

    pub fn i() -> Self {
        Self { re: Rational::zero(), im: Rational::one() }
    }

    pub fn conj(&self) -> Self {
        Self { re: self.re.clone(), im: -self.im.clone() }
    }

    pub fn norm_sqr(&self) -> Rational {
        &self.re * &self.re + &self.im * &self.im
    }

    pub fn to_complex(&self) -> Complex64 {
        Complex64::new(rat_to_f64(&self.re), rat_to_f64(&self.im))
    }
}

impl fmt::Display for GaussRat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {}i", self.re, self.im)
    }
}

impl Zero for GaussRat {
    fn zero() -> Self {
        Self::real(Rational::zero())
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
}

impl One for GaussRat {
    fn one() -> Self {
        Self::real(Rational::one())
    }
}

impl Add for GaussRat {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { re: self.re + o.re, im: self.im + o.im }
    }
}

impl Sub for GaussRat {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { re: self.re - o.re, im: self.im - o.im }
    }
}

impl Mul for GaussRat {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self {
            re: &self.re * &o.re - &self.im * &o.im,
            im: &self.re * &o.im + &self.im * &o.re,
        }
    }
}

impl Div for GaussRat {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let d = o.norm_sqr();
        let num = self * o.conj();
        Self { re: num.re / &d, im: num.im / d }
    }
}

impl Neg for GaussRat {
    type Output = Self;
    fn neg(self) -> Self {
        Self { re: -self.re, im: -self.im }
    }
}

/// Field operations needed by exact Gauss–Jordan elimination.
pub trait ExactField:
    Clone + PartialEq + Zero + One + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
}

impl ExactField for Rational {}
impl ExactField for GaussRat {}

pub type ExactMatrix<T> = Vec<Vec<T>>;

pub fn mat_mul<T: ExactField>(a: &ExactMatrix<T>, b: &ExactMatrix<T>) -> ExactMatrix<T> {
    let n = a.len();
    let k = b.len();
    let m = b.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut acc = T::zero();
                    for l in 0..k {
                        if !a[i][l].is_zero() && !b[l][j].is_zero() {
                            acc = acc + a[i][l].clone() * b[l][j].clone();
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn identity<T: ExactField>(n: usize) -> ExactMatrix<T> {
    (0..n).map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect()).collect()
}

/// Gauss–Jordan inverse; `None` when singular.
pub fn mat_inverse<T: ExactField>(a: &ExactMatrix<T>) -> Option<ExactMatrix<T>> {
    let n = a.len();
    let mut m: Vec<Vec<T>> = a.clone();
    let mut inv = identity::<T>(n);
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        inv.swap(col, piv);
        let p = m[col][col].clone();
        for j in 0..n {
            m[col][j] = m[col][j].clone() / p.clone();
            inv[col][j] = inv[col][j].clone() / p.clone();
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for j in 0..n {
                    m[r][j] = m[r][j].clone() - f.clone() * m[col][j].clone();
                    inv[r][j] = inv[r][j].clone() - f.clone() * inv[col][j].clone();
                }
            }
        }
    }
    Some(inv)
}

/// Basis of the right kernel of a rational matrix (reduced row echelon form).
pub fn rational_kernel(a: &ExactMatrix<Rational>, ncols: usize) -> Vec<Vec<Rational>> {
    let mut m = a.clone();
    let rows = m.len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(r, p);
        let pv = m[r][c].clone();
        for j in 0..ncols {
            m[r][j] = &m[r][j] / &pv;
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in 0..ncols {
                    let t = &f * &m[r][j];
                    m[i][j] = &m[i][j] - t;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![Rational::zero(); ncols];
            v[f] = Rational::one();
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -m[row][f].clone();
            }
            v
        })
        .collect()
}

/// Scales a rational vector to the primitive integer vector on the same ray.
pub fn primitive_integer_vector(v: &[Rational]) -> Vec<BigInt> {
    use num_integer::Integer;
    let mut l = BigInt::one();
    for x in v {
        l = l.lcm(x.denom());
    }
    let ints: Vec<BigInt> = v.iter().map(|x| (x * BigRational::from_integer(l.clone())).to_integer()).collect();
    let mut g = BigInt::zero();
    for x in &ints {
        g = g.gcd(x);
    }
    if g.is_zero() {
        return ints;
    }
    ints.into_iter().map(|x| x / &g).collect()
}

pub fn is_integer_valued(v: &Rational) -> bool {
    v.is_integer()
}

pub fn abs_rat(v: &Rational) -> Rational {
    v.abs()
}
