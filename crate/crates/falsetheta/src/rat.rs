//! Exact rational scalars, vectors and small matrices.
//!
//! All lattice arithmetic in this crate is exact; floats only enter in the
//! analytic modules. Exponents of q are rationals, coefficients are Gaussian
//! rationals (optionally multiplied by tagged transcendental constants, see
//! [`crate::qseries`]).

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

pub type Rational = Ratio<i64>;

/// Shorthand constructor.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(num, den)
}

pub fn rat_i(num: i64) -> Rational {
    Rational::from_integer(num)
}

pub fn rat_to_f64(x: Rational) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// A Gaussian rational re + i*im.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GRat {
    pub re: Rational,
    pub im: Rational,
}

impl GRat {
    pub fn new(re: Rational, im: Rational) -> Self {
        GRat { re, im }
    }

    pub fn from_rational(re: Rational) -> Self {
        GRat { re, im: Rational::zero() }
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_rational(rat_i(n))
    }

    pub fn zero() -> Self {
        Self::from_int(0)
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    pub fn i() -> Self {
        GRat { re: Rational::zero(), im: Rational::one() }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn add(&self, other: &GRat) -> GRat {
        GRat { re: self.re + other.re, im: self.im + other.im }
    }

    pub fn sub(&self, other: &GRat) -> GRat {
        GRat { re: self.re - other.re, im: self.im - other.im }
    }

    pub fn mul(&self, other: &GRat) -> GRat {
        GRat {
            re: self.re * other.re - self.im * other.im,
            im: self.re * other.im + self.im * other.re,
        }
    }

    pub fn neg(&self) -> GRat {
        GRat { re: -self.re, im: -self.im }
    }

    pub fn scale(&self, c: Rational) -> GRat {
        GRat { re: self.re * c, im: self.im * c }
    }

    pub fn to_complex(&self) -> Complex64 {
        Complex64::new(rat_to_f64(self.re), rat_to_f64(self.im))
    }
}

/// e^{pi i x} for rational x whose denominator divides 2; `None` otherwise.
///
/// These are the only phases that stay inside the Gaussian rationals, which is
/// exactly what the characteristic-vector phases e^{pi i B(n, l)} require.
pub fn exact_half_integer_phase(x: Rational) -> Option<GRat> {
    let two_x = x * rat_i(2);
    if !two_x.is_integer() {
        return None;
    }
    let k = two_x.to_integer().rem_euclid(4);
    Some(match k {
        0 => GRat::one(),
        1 => GRat::i(),
        2 => GRat::one().neg(),
        _ => GRat::i().neg(),
    })
}

// ---------------------------------------------------------------------------
// rational vectors
// ---------------------------------------------------------------------------

pub type RatVec = Vec<Rational>;

pub fn rvec(coords: &[i64]) -> RatVec {
    coords.iter().map(|&c| rat_i(c)).collect()
}

pub fn rv_zero(n: usize) -> RatVec {
    vec![Rational::zero(); n]
}

pub fn rv_add(a: &[Rational], b: &[Rational]) -> RatVec {
    a.iter().zip(b).map(|(x, y)| *x + *y).collect()
}

pub fn rv_sub(a: &[Rational], b: &[Rational]) -> RatVec {
    a.iter().zip(b).map(|(x, y)| *x - *y).collect()
}

pub fn rv_scale(a: &[Rational], c: Rational) -> RatVec {
    a.iter().map(|x| *x * c).collect()
}

pub fn rv_neg(a: &[Rational]) -> RatVec {
    a.iter().map(|x| -*x).collect()
}

pub fn rv_is_integral(a: &[Rational]) -> bool {
    a.iter().all(|x| x.is_integer())
}

pub fn rv_to_f64(a: &[Rational]) -> Vec<f64> {
    a.iter().map(|&x| rat_to_f64(x)).collect()
}

pub fn rv_to_complex(a: &[Rational]) -> Vec<Complex64> {
    a.iter().map(|&x| Complex64::new(rat_to_f64(x), 0.0)).collect()
}

// ---------------------------------------------------------------------------
// rational matrices (row major)
// ---------------------------------------------------------------------------

pub type RatMat = Vec<Vec<Rational>>;

pub fn rm_from_int(m: &[Vec<i64>]) -> RatMat {
    m.iter().map(|row| row.iter().map(|&c| rat_i(c)).collect()).collect()
}

pub fn rm_identity(n: usize) -> RatMat {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { Rational::one() } else { Rational::zero() }).collect())
        .collect()
}

pub fn rm_mul_vec(m: &[Vec<Rational>], v: &[Rational]) -> RatVec {
    m.iter()
        .map(|row| row.iter().zip(v).fold(Rational::zero(), |acc, (a, b)| acc + *a * *b))
        .collect()
}

pub fn rm_mul(a: &[Vec<Rational>], b: &[Vec<Rational>]) -> RatMat {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..k).fold(Rational::zero(), |acc, l| acc + a[i][l] * b[l][j]))
                .collect()
        })
        .collect()
}

/// Gauss-Jordan inverse; panics on singular input (all uses are Gram matrices
/// of positive definite forms).
pub fn rm_inverse(m: &[Vec<Rational>]) -> RatMat {
    let n = m.len();
    let mut a: Vec<Vec<Rational>> = m.to_vec();
    let mut inv = rm_identity(n);
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| !a[r][col].is_zero())
            .expect("singular matrix in rm_inverse");
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..n {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col];
                for j in 0..n {
                    let acj = a[col][j];
                    let icj = inv[col][j];
                    a[r][j] -= f * acj;
                    inv[r][j] -= f * icj;
                }
            }
        }
    }
    inv
}

pub fn rm_det(m: &[Vec<Rational>]) -> Rational {
    let n = m.len();
    let mut a: Vec<Vec<Rational>> = m.to_vec();
    let mut det = Rational::one();
    for col in 0..n {
        let pivot = match (col..n).find(|&r| !a[r][col].is_zero()) {
            Some(p) => p,
            None => return Rational::zero(),
        };
        if pivot != col {
            a.swap(col, pivot);
            det = -det;
        }
        det *= a[col][col];
        let p = a[col][col];
        for r in col + 1..n {
            if !a[r][col].is_zero() {
                let f = a[r][col] / p;
                for j in col..n {
                    let acj = a[col][j];
                    a[r][j] -= f * acj;
                }
            }
        }
    }
    det
}

/// Floor of a rational.
pub fn rat_floor(x: Rational) -> i64 {
    x.floor().to_integer()
}

/// Ceiling of a rational.
pub fn rat_ceil(x: Rational) -> i64 {
    x.ceil().to_integer()
}

pub fn rat_sign(x: Rational) -> i64 {
    if x.is_zero() {
        0
    } else if x.is_positive() {
        1
    } else {
        -1
    }
}
