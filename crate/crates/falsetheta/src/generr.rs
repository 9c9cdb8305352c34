//! Generalized error functions E_{Q,M}: boundary values at 0, real-argument
//! evaluation, asymptotic limits, and complexified evaluation through the
//! geodesic recursion.
//!
//! E_{Q,M}(x) = det(A)^{1/2} int_{R^n} sgn(B(M,y)) e^{-2 pi Q(y - x)} dy,
//! which depends on x only through its orthogonal projection to span(M),
//! with E_{Q,empty} = 1.

use num_complex::Complex64;
use num_traits::{One, Zero};
use std::f64::consts::PI;

use crate::lattice::{ConjugacyClass, QuadraticLattice};
use crate::numerics::{
    complex_erf, integrate_gl, principal_sqrt_branch, GeodesicPath, SingularPower,
    TruncationBudget, I,
};
use crate::rat::{rat, rat_i, rat_sign, rat_to_f64, Rational};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// polynomial insertions
// ---------------------------------------------------------------------------

/// A polynomial with rational coefficients in the lattice coordinates,
/// stored as (coefficient, multi-index) terms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    pub terms: Vec<(Rational, Vec<u32>)>,
}

impl Poly {
    pub fn one(nvars: usize) -> Self {
        Poly { terms: vec![(Rational::one(), vec![0; nvars])] }
    }

    pub fn constant(nvars: usize, c: Rational) -> Self {
        Poly { terms: vec![(c, vec![0; nvars])] }
    }

    /// The coordinate monomial x_i.
    pub fn coordinate(nvars: usize, i: usize) -> Self {
        let mut m = vec![0; nvars];
        m[i] = 1;
        Poly { terms: vec![(Rational::one(), m)] }
    }

    /// A linear form c . x.
    pub fn linear(coeffs: &[Rational]) -> Self {
        Poly {
            terms: coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_zero())
                .map(|(i, &c)| {
                    let mut m = vec![0; coeffs.len()];
                    m[i] = 1;
                    (c, m)
                })
                .collect(),
        }
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1
            && self.terms[0].0.is_one()
            && self.terms[0].1.iter().all(|&e| e == 0)
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(_, m)| m.iter().sum::<u32>()).max().unwrap_or(0)
    }

    pub fn nvars(&self) -> usize {
        self.terms.first().map(|(_, m)| m.len()).unwrap_or(0)
    }

    pub fn eval_rat(&self, x: &[Rational]) -> Rational {
        self.terms
            .iter()
            .map(|(c, m)| {
                m.iter().zip(x).fold(*c, |acc, (&e, &xi)| {
                    let mut acc = acc;
                    for _ in 0..e {
                        acc *= xi;
                    }
                    acc
                })
            })
            .fold(Rational::zero(), |a, b| a + b)
    }

    pub fn eval_c(&self, x: &[Complex64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(c, m)| {
                m.iter().zip(x).fold(Complex64::new(rat_to_f64(*c), 0.0), |acc, (&e, &xi)| {
                    acc * xi.powu(e)
                })
            })
            .sum()
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut terms: Vec<(Rational, Vec<u32>)> = Vec::new();
        for (c1, m1) in &self.terms {
            for (c2, m2) in &other.terms {
                let m: Vec<u32> = m1.iter().zip(m2).map(|(a, b)| a + b).collect();
                let c = *c1 * *c2;
                if let Some(t) = terms.iter_mut().find(|(_, mm)| *mm == m) {
                    t.0 += c;
                } else {
                    terms.push((c, m));
                }
            }
        }
        terms.retain(|(c, _)| !c.is_zero());
        Poly { terms }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (c, m) in &other.terms {
            if let Some(t) = out.terms.iter_mut().find(|(_, mm)| mm == m) {
                t.0 += *c;
            } else {
                out.terms.push((*c, m.clone()));
            }
        }
        out.terms.retain(|(c, _)| !c.is_zero());
        out
    }

    pub fn scale(&self, c: Rational) -> Poly {
        Poly { terms: self.terms.iter().map(|(a, m)| (*a * c, m.clone())).collect() }
    }
}

// ---------------------------------------------------------------------------
// vector sets
// ---------------------------------------------------------------------------

/// The column set M = (m_1, ..., m_r) entering sgn(B(M, .)), with the lattice
/// that supplies the (working, scale-included) bilinear form.
#[derive(Clone, Debug)]
pub struct VectorSetM {
    pub lat: QuadraticLattice,
    pub cols: Vec<Vec<Rational>>,
    /// Working norms 2 Q(m_j).
    norms: Vec<Rational>,
}

impl VectorSetM {
    pub fn new(lat: QuadraticLattice, cols: Vec<Vec<Rational>>) -> Result<Self> {
        let r = cols.len();
        if r > 4 {
            return Err(Error::InvalidArgument(format!("vector sets support r <= 4, got {r}")));
        }
        for c in &cols {
            if c.len() != lat.rank {
                return Err(Error::DimensionMismatch { expected: lat.rank, got: c.len() });
            }
        }
        // linear independence via the Gram determinant
        if r > 0 {
            let gram: Vec<Vec<Rational>> = cols
                .iter()
                .map(|a| cols.iter().map(|b| lat.working_bilinear(a, b).unwrap()).collect())
                .collect();
            if crate::rat::rm_det(&gram).is_zero() {
                return Err(Error::InvalidArgument(
                    "columns of M must be linearly independent".into(),
                ));
            }
        }
        let norms = cols.iter().map(|c| lat.working_bilinear(c, c).unwrap()).collect();
        Ok(VectorSetM { lat, cols, norms })
    }

    pub fn empty(lat: QuadraticLattice) -> Self {
        VectorSetM { lat, cols: vec![], norms: vec![] }
    }

    pub fn r(&self) -> usize {
        self.cols.len()
    }

    /// Working norm 2 Q(m_j).
    pub fn norm2q(&self, j: usize) -> Rational {
        self.norms[j]
    }

    /// Working pairing B(m_j, v) as an exact rational.
    pub fn pairing(&self, j: usize, v: &[Rational]) -> Rational {
        self.lat.working_bilinear(&self.cols[j], v).unwrap()
    }

    /// Working pairing with a complex vector.
    pub fn pairing_c(&self, j: usize, v: &[Complex64]) -> Complex64 {
        let n = self.lat.rank;
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                acc += rat_to_f64(self.cols[j][a] * rat_i(self.lat.gram[a][b] * self.lat.scale))
                    * v[b];
            }
        }
        acc
    }

    /// B(m_hat_j, v) for a complex vector, with m_hat_j = m_j / sqrt(2Q(m_j)).
    pub fn pairing_hat_c(&self, j: usize, v: &[Complex64]) -> Complex64 {
        self.pairing_c(j, v) / rat_to_f64(self.norms[j]).sqrt()
    }

    /// B(m_hat_j, x) for a real vector.
    pub fn pairing_hat(&self, j: usize, x: &[f64]) -> f64 {
        let n = self.lat.rank;
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                acc += rat_to_f64(self.cols[j][a]) * (self.lat.gram[a][b] * self.lat.scale) as f64
                    * x[b];
            }
        }
        acc / rat_to_f64(self.norms[j]).sqrt()
    }

    /// Signed square of the normalized pairing B(m_hat_j, m_hat_k):
    /// returns (sign, B(m_j, m_k)^2 / (4 Q(m_j) Q(m_k))) exactly.
    pub fn unit_pairing_squared(&self, j: usize, k: usize) -> (i64, Rational) {
        let b = self.pairing(j, &self.cols[k]);
        (rat_sign(b), b * b / (self.norms[j] * self.norms[k]))
    }

    /// Gram matrix of the normalized columns, as floats.
    pub fn unit_gram_f64(&self) -> Vec<Vec<f64>> {
        let r = self.r();
        (0..r)
            .map(|j| {
                (0..r)
                    .map(|k| {
                        rat_to_f64(self.pairing(j, &self.cols[k]))
                            / (rat_to_f64(self.norms[j]) * rat_to_f64(self.norms[k])).sqrt()
                    })
                    .collect()
            })
            .collect()
    }

    /// Dual vectors w_k in span(M) with B(m_j, w_k) = delta_{jk}.
    pub fn dual_vectors(&self) -> Vec<Vec<Rational>> {
        let r = self.r();
        let gram: Vec<Vec<Rational>> =
            (0..r).map(|j| (0..r).map(|k| self.pairing(j, &self.cols[k])).collect()).collect();
        let inv = crate::rat::rm_inverse(&gram);
        (0..r)
            .map(|k| {
                let mut w = vec![Rational::zero(); self.lat.rank];
                for i in 0..r {
                    w = crate::rat::rv_add(&w, &crate::rat::rv_scale(&self.cols[i], inv[i][k]));
                }
                w
            })
            .collect()
    }

    /// The column subset M_S (no projection), S given by sorted indices.
    pub fn subset(&self, s: &[usize]) -> VectorSetM {
        let cols = s.iter().map(|&j| self.cols[j].clone()).collect();
        VectorSetM::new(self.lat.clone(), cols).expect("subset of independent set")
    }

    /// M_{[r] \ {k} perp {k}}: drop column k, project the rest orthogonal to it.
    pub fn drop_and_project(&self, k: usize) -> VectorSetM {
        let mk = &self.cols[k];
        let nk = self.norms[k];
        let cols: Vec<Vec<Rational>> = (0..self.r())
            .filter(|&j| j != k)
            .map(|j| {
                let c = self.pairing(j, mk) / nk;
                crate::rat::rv_sub(&self.cols[j], &crate::rat::rv_scale(mk, c))
            })
            .collect();
        VectorSetM::new(self.lat.clone(), cols).expect("projection keeps independence")
    }

    /// Columns `keep` projected orthogonal to the span of columns `against`
    /// (exact rationals).
    pub fn subset_projected(&self, keep: &[usize], against: &[usize]) -> VectorSetM {
        if against.is_empty() {
            return self.subset(keep);
        }
        let mut basis: Vec<Vec<Rational>> = Vec::new();
        for &a in against {
            let mut v = self.cols[a].clone();
            for b in &basis {
                let c = self.lat.working_bilinear(&v, b).unwrap()
                    / self.lat.working_bilinear(b, b).unwrap();
                v = crate::rat::rv_sub(&v, &crate::rat::rv_scale(b, c));
            }
            basis.push(v);
        }
        let cols: Vec<Vec<Rational>> = keep
            .iter()
            .map(|&j| {
                let mut v = self.cols[j].clone();
                for b in &basis {
                    let c = self.lat.working_bilinear(&v, b).unwrap()
                        / self.lat.working_bilinear(b, b).unwrap();
                    v = crate::rat::rv_sub(&v, &crate::rat::rv_scale(b, c));
                }
                v
            })
            .collect();
        VectorSetM::new(self.lat.clone(), cols).expect("projected subset independence")
    }
}

// ---------------------------------------------------------------------------
// false theta specification
// ---------------------------------------------------------------------------

/// The data (Q, mu, l, M, P) defining a false theta function, its boundary
/// series and its completion.
#[derive(Clone, Debug)]
pub struct FalseThetaSpec {
    pub lattice: QuadraticLattice,
    pub class: ConjugacyClass,
    pub characteristic: Vec<Rational>,
    pub vectors: VectorSetM,
    pub insertion: Poly,
}

impl FalseThetaSpec {
    pub fn new(
        lattice: QuadraticLattice,
        class: ConjugacyClass,
        characteristic: Vec<Rational>,
        cols: Vec<Vec<Rational>>,
        insertion: Option<Poly>,
    ) -> Result<Self> {
        let n = lattice.rank;
        if class.shift.len() != n || characteristic.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: class.shift.len() });
        }
        // characteristic vector: Q(g) + B(l, g)/2 integral on the generators
        for i in 0..n {
            let mut g = vec![Rational::zero(); n];
            g[i] = Rational::one();
            let val = lattice.working_quad(&g)?
                + lattice.working_bilinear(&characteristic, &g)? / rat_i(2);
            if !val.is_integer() {
                return Err(Error::InvalidArgument(
                    "characteristic vector fails Q(n) + B(l,n)/2 in Z".into(),
                ));
            }
        }
        let vectors = VectorSetM::new(lattice.clone(), cols)?;
        let insertion = insertion.unwrap_or_else(|| Poly::one(n));
        Ok(FalseThetaSpec { lattice, class, characteristic, vectors, insertion })
    }

    /// Total coset shift mu + l/2.
    pub fn total_shift(&self) -> Vec<Rational> {
        crate::rat::rv_add(
            &self.class.shift,
            &crate::rat::rv_scale(&self.characteristic, rat(1, 2)),
        )
    }
}

// ---------------------------------------------------------------------------
// boundary values at zero
// ---------------------------------------------------------------------------

/// E_{Q,M}(0), kept exact where a closed form exists.
#[derive(Clone, Debug, PartialEq)]
pub enum ZeroValue {
    Rat(Rational),
    /// sign * (2/pi) arcsin(sqrt(rho)) with rho in (0, 1) rational.
    AsinSqrt { rho: Rational, sign: i64 },
    Numeric(f64),
}

impl ZeroValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            ZeroValue::Rat(r) => rat_to_f64(*r),
            ZeroValue::AsinSqrt { rho, sign } => {
                *sign as f64 * 2.0 / PI * rat_to_f64(*rho).sqrt().asin()
            }
            ZeroValue::Numeric(v) => *v,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ZeroValue::Rat(r) if r.is_zero())
    }
}

/// E_{Q,M}(0): zero for odd r, the arcsin closed form for r = 2 (with the
/// rational special cases recognized exactly), numeric orthant value for r = 4.
pub fn zero_value(m: &VectorSetM) -> Result<ZeroValue> {
    match m.r() {
        0 => Ok(ZeroValue::Rat(Rational::one())),
        1 | 3 => Ok(ZeroValue::Rat(Rational::zero())),
        2 => {
            let (sign, rho) = m.unit_pairing_squared(0, 1);
            if sign == 0 {
                return Ok(ZeroValue::Rat(Rational::zero()));
            }
            let s = rat_i(sign);
            // (2/pi) arcsin(t) is rational for t in {1/2, sqrt(1/2), sqrt(3)/2, 1}
            if rho == rat(1, 4) {
                Ok(ZeroValue::Rat(s * rat(1, 3)))
            } else if rho == rat(1, 2) {
                Ok(ZeroValue::Rat(s * rat(1, 2)))
            } else if rho == rat(3, 4) {
                Ok(ZeroValue::Rat(s * rat(2, 3)))
            } else if rho == rat_i(1) {
                Ok(ZeroValue::Rat(s))
            } else {
                Ok(ZeroValue::AsinSqrt { rho, sign })
            }
        }
        4 => {
            let c = vec![0.0; 4];
            Ok(ZeroValue::Numeric(signed_gaussian(&c, &m.unit_gram_f64())?))
        }
        r => Err(Error::InvalidArgument(format!("zero_value supports r <= 4, got {r}"))),
    }
}

// ---------------------------------------------------------------------------
// real-argument evaluation
// ---------------------------------------------------------------------------

/// Integral of prod_j sgn(c_j + h_j . u) against the standard e^{-pi |u|^2}
/// Gaussian, where h_j are the Cholesky rows of the given unit Gram matrix.
/// The innermost variable is integrated analytically (an erf); the outer ones
/// by panel Gauss-Legendre split at each sign change.
fn signed_gaussian(c: &[f64], unit_gram: &[Vec<f64>]) -> Result<f64> {
    let r = c.len();
    if r == 0 {
        return Ok(1.0);
    }
    // Cholesky of the unit Gram (positive definite by independence)
    let mut l = vec![vec![0.0f64; r]; r];
    for i in 0..r {
        for j in 0..=i {
            let mut s = unit_gram[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::InvalidArgument("unit Gram not positive definite".into()));
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    fn level(d: usize, r: usize, c: &[f64], l: &[Vec<f64>], prefix: &mut Vec<f64>) -> f64 {
        let shift: f64 = (0..d).map(|i| l[d][i] * prefix[i]).sum();
        if d == r - 1 {
            // int sgn(c_d + shift + l_dd u) e^{-pi u^2} du = erf(sqrt(pi) a / l_dd)
            return real_erf(PI.sqrt() * (c[d] + shift) / l[d][d]);
        }
        let root = -(c[d] + shift) / l[d][d];
        const U: f64 = 5.5;
        let mut cuts = vec![-U, -2.0, -0.8, 0.0, 0.8, 2.0, U];
        if root > -U && root < U {
            cuts.push(root);
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut acc = 0.0;
        for seg in cuts.windows(2) {
            if seg[1] - seg[0] < 1e-300 {
                continue;
            }
            let mid = 0.5 * (seg[0] + seg[1]);
            let sgn = (c[d] + shift + l[d][d] * mid).signum();
            let val = integrate_gl(
                |u| {
                    prefix.push(u);
                    let inner = level(d + 1, r, c, l, prefix);
                    prefix.pop();
                    Complex64::new((-PI * u * u).exp() * inner, 0.0)
                },
                seg[0],
                seg[1],
                40,
            );
            acc += sgn * val.re;
        }
        acc
    }
    let mut prefix = Vec::new();
    Ok(level(0, r, c, &l, &mut prefix))
}

fn real_erf(x: f64) -> f64 {
    errorfunctions::RealErrorFunctions::erf(x)
}

/// E_{Q,M}(x) for a real vector x; r = 1 uses the closed form
/// erf(sqrt(pi) B(m_hat, x)), r = 2, 3 the Gaussian reduction over span(M).
pub fn eval_real(m: &VectorSetM, x: &[f64]) -> Result<f64> {
    match m.r() {
        0 => Ok(1.0),
        1 => Ok(real_erf(PI.sqrt() * m.pairing_hat(0, x))),
        2 | 3 => {
            let c: Vec<f64> = (0..m.r()).map(|j| m.pairing_hat(j, x)).collect();
            signed_gaussian(&c, &m.unit_gram_f64())
        }
        r => Err(Error::InvalidArgument(format!("eval_real supports r <= 3, got {r}"))),
    }
}

/// A finite combination sum_i multiplier_i * value_i of exact zero values.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggedSum {
    pub terms: Vec<(Rational, ZeroValue)>,
}

impl TaggedSum {
    pub fn to_f64(&self) -> f64 {
        self.terms.iter().map(|(c, v)| rat_to_f64(*c) * v.to_f64()).sum()
    }
}

/// lim_{t -> infinity} E_{Q,M}(t x) for rational x, exactly:
/// sum over subsets S with B(M_S, x) = 0 of E_{Q,M_S}(0) sgn(B(M_{[r]\S}, x)).
/// Only S = the full zero set of the pairings contributes (sgn(0) = 0 kills
/// every other subset), so the result is a single tagged term or empty.
pub fn asymptotic_limit(m: &VectorSetM, x: &[Rational]) -> Result<TaggedSum> {
    let r = m.r();
    if r > 3 {
        return Err(Error::InvalidArgument("asymptotic_limit supports r <= 3".into()));
    }
    let pairings: Vec<Rational> = (0..r).map(|j| m.pairing(j, x)).collect();
    let zero_set: Vec<usize> = (0..r).filter(|&j| pairings[j].is_zero()).collect();
    let nonzero_sign: i64 =
        (0..r).filter(|j| !pairings[*j].is_zero()).map(|j| rat_sign(pairings[j])).product();
    let mut terms = Vec::new();
    let zv = zero_value(&m.subset(&zero_set))?;
    if !zv.is_zero() && nonzero_sign != 0 {
        terms.push((rat_i(nonzero_sign), zv));
    }
    Ok(TaggedSum { terms })
}

// ---------------------------------------------------------------------------
// complex-scaled evaluation (geodesic recursion)
// ---------------------------------------------------------------------------

/// E_{Q,M}(-i sqrt(i(w - tau)) x) for complex x via the recursion
///
///   E(0) + sum_k int_tau^w B(m_hat_k, x) e^{pi i B(m_hat_k, x)^2 (w1 - tau)}
///          E_{M \ k perp k}(-i sqrt(i(w1 - tau)) x) (i(w1 - tau))^{-1/2} dw1,
///
/// with the r = 1 base case evaluated by the erf closed form.
pub fn eval_complex_scaled(
    m: &VectorSetM,
    x: &[Complex64],
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
) -> Result<Complex64> {
    if tau == w {
        return Err(Error::InvalidArgument("eval_complex_scaled requires tau != w".into()));
    }
    eval_complex_inner(m, x, tau, w, budget, 0)
}

fn eval_complex_inner(
    m: &VectorSetM,
    x: &[Complex64],
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
    depth: usize,
) -> Result<Complex64> {
    if depth > budget.recursion_depth_cap {
        return Err(Error::DepthExhausted { cap: budget.recursion_depth_cap });
    }
    // inner quadrature nodes can round onto tau itself; there the scaled
    // argument vanishes and E is exactly its boundary value
    if w == tau {
        return Ok(Complex64::new(zero_value(m)?.to_f64(), 0.0));
    }
    match m.r() {
        0 => Ok(Complex64::new(1.0, 0.0)),
        1 => {
            let b = m.pairing_hat_c(0, x);
            let s = principal_sqrt_branch(tau, w);
            complex_erf(-I * s * PI.sqrt() * b)
        }
        r => {
            let mut acc = Complex64::new(zero_value(m)?.to_f64(), 0.0);
            let path = GeodesicPath::chord(tau, w)?;
            for k in 0..r {
                let b = m.pairing_hat_c(k, x);
                if b.norm() == 0.0 {
                    continue;
                }
                let sub = m.drop_and_project(k);
                let val = crate::numerics::quad_geodesic_single(
                    |w1| {
                        let inner = eval_complex_inner(&sub, x, tau, w1, budget, depth + 1)?;
                        Ok(b * (PI * I * b * b * (w1 - tau)).exp() * inner)
                    },
                    &path,
                    SingularPower::Half,
                    budget.quad_points,
                )?;
                acc += val;
            }
            Ok(acc)
        }
    }
}

/// The r = 1 case evaluated through the recursion integral instead of the erf
/// closed form; kept separate so the two routes can be compared.
pub fn eval_complex_r1_via_recursion(
    m: &VectorSetM,
    x: &[Complex64],
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
) -> Result<Complex64> {
    if m.r() != 1 {
        return Err(Error::InvalidArgument("r = 1 recursion route needs one column".into()));
    }
    let b = m.pairing_hat_c(0, x);
    let path = GeodesicPath::chord(tau, w)?;
    let (val, _) = crate::numerics::quad_geodesic_raw(
        |w1| Ok(b * (PI * I * b * b * (w1 - tau)).exp()),
        &path,
        SingularPower::Half,
        budget.quad_points,
    )?;
    Ok(val)
}

// ---------------------------------------------------------------------------
// Gram-Schmidt frames and the iterated integral representation
// ---------------------------------------------------------------------------

/// An orthonormal frame obtained from the columns of M in the order sigma.
#[derive(Clone, Debug)]
pub struct GramSchmidtFrame {
    pub perm: Vec<usize>,
    /// Orthonormal vectors with respect to the working form, as floats.
    pub vectors: Vec<Vec<f64>>,
}

/// All r! orthonormal Gram-Schmidt frames of M.
pub fn gram_schmidt_frames(m: &VectorSetM) -> Result<Vec<GramSchmidtFrame>> {
    let r = m.r();
    if r > 3 {
        return Err(Error::InvalidArgument("frames support r <= 3".into()));
    }
    let mut perms: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..r {
        let mut next = Vec::new();
        for p in perms {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, p.len());
                next.push(q);
            }
        }
        perms = next;
    }
    let n = m.lat.rank;
    let gram_f: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| (m.lat.gram[i][j] * m.lat.scale) as f64).collect())
        .collect();
    let form = |a: &[f64], b: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += a[i] * gram_f[i][j] * b[j];
            }
        }
        acc
    };
    let mut out = Vec::new();
    for perm in perms {
        let mut vecs: Vec<Vec<f64>> = Vec::new();
        for &idx in &perm {
            let mut v: Vec<f64> = m.cols[idx].iter().map(|&c| rat_to_f64(c)).collect();
            for u in &vecs {
                let c = form(&v, u);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= c * ui;
                }
            }
            let norm = form(&v, &v).sqrt();
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            vecs.push(v);
        }
        out.push(GramSchmidtFrame { perm, vectors: vecs });
    }
    Ok(out)
}

/// E_{Q,M}(-i sqrt(i(w - tau)) x) through the frame sum of nested Eichler-type
/// integrals; r <= 2 supported comfortably (r = 3 costs r! nested quadratures).
pub fn iterated_integral_form(
    m: &VectorSetM,
    x: &[Complex64],
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
) -> Result<Complex64> {
    let r = m.r();
    if r > 3 {
        return Err(Error::InvalidArgument("iterated integrals support r <= 3".into()));
    }
    let n = m.lat.rank;
    let gram_f: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| (m.lat.gram[i][j] * m.lat.scale) as f64).collect())
        .collect();
    let pair_c = |v: &[f64], z: &[Complex64]| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += v[i] * gram_f[i][j] * z[j];
            }
        }
        acc
    };
    let frames = gram_schmidt_frames(m)?;
    let mut total = Complex64::new(0.0, 0.0);
    for frame in &frames {
        for l in 0..=r {
            let keep: Vec<usize> = frame.perm[l..].to_vec();
            let against: Vec<usize> = frame.perm[..l].to_vec();
            let zv = zero_value(&m.subset_projected(&keep, &against))?.to_f64();
            if zv == 0.0 {
                continue;
            }
            let coeffs: Vec<Complex64> = (0..l).map(|j| pair_c(&frame.vectors[j], x)).collect();
            let nested = nested_integral(&coeffs, 0, tau, w, budget)?;
            let fact: f64 = (1..=(r - l)).map(|k| k as f64).product();
            total += zv / fact * nested;
        }
    }
    Ok(total)
}

/// Nested integral int_tau^upper k_0(w_0) int_tau^{w_0} k_1 ... with kernels
/// k_j(w1) = b_j e^{pi i b_j^2 (w1 - tau)} (i(w1 - tau))^{-1/2}.
fn nested_integral(
    coeffs: &[Complex64],
    j: usize,
    tau: Complex64,
    upper: Complex64,
    budget: &TruncationBudget,
) -> Result<Complex64> {
    if j == coeffs.len() {
        return Ok(Complex64::new(1.0, 0.0));
    }
    if upper == tau {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let b = coeffs[j];
    let path = GeodesicPath::chord(tau, upper)?;
    let (val, _) = crate::numerics::quad_geodesic_raw(
        |w1| {
            let inner = nested_integral(coeffs, j + 1, tau, w1, budget)?;
            Ok(b * (PI * I * b * b * (w1 - tau)).exp() * inner)
        },
        &path,
        SingularPower::Half,
        budget.quad_points.min(48),
    )?;
    Ok(val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::c64;
    use crate::rat::rvec;

    fn a2_weights(p: i64) -> VectorSetM {
        let lat = QuadraticLattice::a_n(2, p).unwrap();
        let betas = lat.dual_basis();
        VectorSetM::new(lat, betas).unwrap()
    }

    fn a3_weights(p: i64) -> VectorSetM {
        let lat = QuadraticLattice::a_n(3, p).unwrap();
        let betas = lat.dual_basis();
        VectorSetM::new(lat, betas).unwrap()
    }

    #[test]
    fn zero_value_a2_weights_is_one_third() {
        for p in [1, 2, 5] {
            match zero_value(&a2_weights(p)).unwrap() {
                ZeroValue::Rat(v) => assert_eq!(v, rat(1, 3)),
                other => panic!("expected exact 1/3, got {other:?}"),
            }
        }
    }

    #[test]
    fn zero_value_orthogonal_pair_and_odd_r() {
        let lat = QuadraticLattice::a_n(3, 1).unwrap();
        // alpha_1 and alpha_3 are orthogonal in A_3
        let m = VectorSetM::new(lat.clone(), vec![rvec(&[1, 0, 0]), rvec(&[0, 0, 1])]).unwrap();
        assert_eq!(zero_value(&m).unwrap(), ZeroValue::Rat(Rational::zero()));
        // any r = 3 set
        assert_eq!(zero_value(&a3_weights(2)).unwrap(), ZeroValue::Rat(Rational::zero()));
        // r = 1
        let m1 = VectorSetM::new(lat, vec![rvec(&[1, 0, 0])]).unwrap();
        assert_eq!(zero_value(&m1).unwrap(), ZeroValue::Rat(Rational::zero()));
    }

    #[test]
    fn zero_value_a3_adjacent_weights_is_asin_tag() {
        let m = a3_weights(1);
        match zero_value(&m.subset(&[0, 1])).unwrap() {
            ZeroValue::AsinSqrt { rho, sign } => {
                assert_eq!(rho, rat(1, 3));
                assert_eq!(sign, 1);
            }
            other => panic!("expected arcsin(1/sqrt3) tag, got {other:?}"),
        }
        match zero_value(&m.subset(&[0, 2])).unwrap() {
            ZeroValue::AsinSqrt { rho, sign } => {
                assert_eq!(rho, rat(1, 9));
                assert_eq!(sign, 1);
            }
            other => panic!("expected arcsin(1/3) tag, got {other:?}"),
        }
    }

    #[test]
    fn zero_value_r4_orthant_has_product_structure() {
        // two orthogonal copies of the A_2 weight pair: E(0) factorizes into
        // (1/3)(1/3) = 1/9, an independent oracle for the r = 4 orthant code
        let gram = vec![
            vec![2, -1, 0, 0],
            vec![-1, 2, 0, 0],
            vec![0, 0, 2, -1],
            vec![0, 0, -1, 2],
        ];
        let lat = QuadraticLattice::new(gram, 1).unwrap();
        let b = |i: usize| -> Vec<Rational> {
            let mut v = vec![Rational::zero(); 4];
            let base = if i < 2 { 0 } else { 2 };
            v[base] = if i % 2 == 0 { rat(2, 3) } else { rat(1, 3) };
            v[base + 1] = if i % 2 == 0 { rat(1, 3) } else { rat(2, 3) };
            v
        };
        let m = VectorSetM::new(lat, vec![b(0), b(1), b(2), b(3)]).unwrap();
        match zero_value(&m).unwrap() {
            ZeroValue::Numeric(v) => {
                assert!((v - 1.0 / 9.0).abs() < 1e-9, "orthant value {v} vs 1/9");
            }
            other => panic!("expected numeric value, got {other:?}"),
        }
    }

    #[test]
    fn zero_value_numeric_matches_exact_tag_for_a2() {
        let m = a2_weights(2);
        let c = vec![0.0, 0.0];
        let v = signed_gaussian(&c, &m.unit_gram_f64()).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-10, "orthant value {v}");
    }

    #[test]
    fn eval_real_r1_matches_quadrature_oracle() {
        // direct 1-D integral of the defining Gaussian for the A_1 weight;
        // working form here is Q_w(v) = p v^2, so the density after reducing
        // to the span is sqrt(2p) e^{-2 pi p (y - t)^2}
        let lat = QuadraticLattice::a_n(1, 2).unwrap();
        let m = VectorSetM::new(lat.clone(), vec![vec![rat(1, 2)]]).unwrap();
        for &t in &[-0.7, 0.1, 0.9, 2.3] {
            let x = [t];
            let direct = eval_real(&m, &x).unwrap();
            let p = 2.0_f64;
            let density =
                |y: f64| c64((2.0 * p).sqrt() * (-2.0 * PI * p * (y - t) * (y - t)).exp(), 0.0);
            // split at the sign discontinuity
            let oracle = (integrate_gl(density, 0.0, t + 6.0, 200)
                - integrate_gl(density, t - 6.0, 0.0, 200))
            .re;
            assert!((direct - oracle).abs() < 1e-10, "t = {t}: {direct} vs {oracle}");
        }
    }

    #[test]
    fn eval_real_r1_asymptotics() {
        let lat = QuadraticLattice::a_n(1, 1).unwrap();
        let m = VectorSetM::new(lat, vec![vec![rat(1, 2)]]).unwrap();
        let v = eval_real(&m, &[10.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eval_real_r2_limit_along_beta1() {
        // x = 5 beta_1: E -> sgn(B(beta_1,x)) sgn(B(beta_2,x)) = +1
        let m = a2_weights(1);
        let b1 = [5.0 * 2.0 / 3.0, 5.0 / 3.0];
        let v = eval_real(&m, &b1).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn eval_real_is_bounded_and_has_parity() {
        let m2 = a2_weights(1);
        let m3 = a3_weights(1);
        let pts2 = [[0.3, -0.9], [1.7, 0.2], [-0.4, -0.1], [2.0, 2.0]];
        for x in pts2 {
            let v = eval_real(&m2, &x).unwrap();
            let vm = eval_real(&m2, &[-x[0], -x[1]]).unwrap();
            assert!(v.abs() <= 1.0 + 1e-12);
            assert!((v - vm).abs() < 1e-10, "even under x -> -x for r = 2");
        }
        let pts3 = [[0.5, -0.2, 0.8], [1.1, 0.4, -0.3]];
        for x in pts3 {
            let v = eval_real(&m3, &x).unwrap();
            let vm = eval_real(&m3, &[-x[0], -x[1], -x[2]]).unwrap();
            assert!(v.abs() <= 1.0 + 1e-12);
            assert!((v + vm).abs() < 1e-9, "odd under x -> -x for r = 3");
        }
    }

    #[test]
    fn empty_set_is_one() {
        let lat = QuadraticLattice::a_n(2, 1).unwrap();
        let m = VectorSetM::empty(lat);
        assert_eq!(eval_real(&m, &[0.4, 0.5]).unwrap(), 1.0);
        assert_eq!(zero_value(&m).unwrap(), ZeroValue::Rat(Rational::one()));
    }

    #[test]
    fn asymptotic_limit_cases() {
        let m = a2_weights(1);
        // generic x: pure sign product
        let t = asymptotic_limit(&m, &rvec(&[1, 1])).unwrap();
        assert_eq!(t.terms.len(), 1);
        assert!((t.to_f64() - 1.0).abs() < 1e-15);
        // x = 0: the zero value itself
        let t = asymptotic_limit(&m, &rvec(&[0, 0])).unwrap();
        assert!((t.to_f64() - 1.0 / 3.0).abs() < 1e-15);
        // A_3 weights, x orthogonal to beta_1, beta_2 only
        let m3 = a3_weights(1);
        let t = asymptotic_limit(&m3, &rvec(&[0, 0, 1])).unwrap();
        let expect = 2.0 / PI * (1.0f64 / 3.0f64.sqrt()).asin();
        assert!((t.to_f64() - expect).abs() < 1e-15);
    }

    #[test]
    fn derivative_identity_r2_and_r3() {
        // w_k . grad E(x) = 2/sqrt(2Q(m_k)) e^{-pi B(m_k,x)^2/(2Q(m_k))}
        // E_{M \ k perp k}(x); central differences at h = 1e-5 with one
        // Richardson step.
        let mut state = 987654321u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) * 2.0 - 1.0
        };
        for m in [a2_weights(2), a3_weights(2)] {
            let r = m.r();
            let duals = m.dual_vectors();
            for _ in 0..6 {
                let x: Vec<f64> = (0..m.lat.rank).map(|_| 1.5 * next()).collect();
                for k in 0..r {
                    let wk: Vec<f64> = duals[k].iter().map(|&c| rat_to_f64(c)).collect();
                    let diff = |h: f64| {
                        let xp: Vec<f64> = x.iter().zip(&wk).map(|(a, b)| a + h * b).collect();
                        let xm: Vec<f64> = x.iter().zip(&wk).map(|(a, b)| a - h * b).collect();
                        (eval_real(&m, &xp).unwrap() - eval_real(&m, &xm).unwrap()) / (2.0 * h)
                    };
                    let d1 = diff(1e-5);
                    let d2 = diff(2e-5);
                    let lhs = (4.0 * d1 - d2) / 3.0;
                    let norm2q = rat_to_f64(m.norm2q(k));
                    let bk = m.pairing_hat(k, &x) * norm2q.sqrt();
                    let sub = m.drop_and_project(k);
                    let rhs = 2.0 / norm2q.sqrt()
                        * (-PI * bk * bk / norm2q).exp()
                        * eval_real(&sub, &x).unwrap();
                    assert!((lhs - rhs).abs() < 1e-6, "r = {r}, k = {k}: {lhs} vs {rhs}");
                }
            }
        }
    }

    #[test]
    fn complex_r1_closed_form_matches_recursion() {
        // p = 2, n = 3/4, tau = i/2, w = 2i
        let lat = QuadraticLattice::a_n(1, 2).unwrap();
        let m = VectorSetM::new(lat, vec![vec![rat(1, 2)]]).unwrap();
        let x = [c64(0.75, 0.0)];
        let tau = c64(0.0, 0.5);
        let w = c64(0.0, 2.0);
        let budget = TruncationBudget::default();
        let closed = eval_complex_scaled(&m, &x, tau, w, &budget).unwrap();
        let recursion = eval_complex_r1_via_recursion(&m, &x, tau, w, &budget).unwrap();
        assert!((closed - recursion).norm() < 1e-9, "{closed} vs {recursion}");
        // also matches erf(-i sqrt(2 pi i p (w - tau)) n) directly
        let arg = -I * (2.0 * PI * 2.0 * I * (w - tau)).sqrt() * 0.75;
        let direct = complex_erf(arg).unwrap();
        assert!((closed - direct).norm() < 1e-12);
    }

    #[test]
    fn complex_eval_at_zero_argument_is_zero_value() {
        let m = a2_weights(2);
        let budget = TruncationBudget::default();
        let v = eval_complex_scaled(
            &m,
            &[c64(0.0, 0.0), c64(0.0, 0.0)],
            c64(0.0, 1.0),
            c64(1.0, 2.0),
            &budget,
        )
        .unwrap();
        assert!((v - c64(1.0 / 3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn complex_eval_real_limit_consistency() {
        // w = tau + iT with real x approaches the asymptotic sign limit
        let m = a2_weights(2);
        let budget = TruncationBudget::default();
        let tau = c64(0.0, 0.5);
        let x = [c64(1.0, 0.0), c64(1.0, 0.0)];
        let xr = rvec(&[1, 1]);
        let limit = asymptotic_limit(&m, &xr).unwrap().to_f64();
        let v = eval_complex_scaled(&m, &x, tau, tau + c64(0.0, 40.0), &budget).unwrap();
        assert!((v - c64(limit, 0.0)).norm() < 1e-6, "{v} vs {limit}");
    }

    #[test]
    fn sign_limit_monotone_convergence() {
        // error against the sign product strictly decreases along T = 5, 10, 20, 40
        let m = a2_weights(2);
        let budget = TruncationBudget::default();
        let tau = c64(0.0, 0.5);
        let x = [c64(0.7, 0.0), c64(-0.4, 0.0)];
        let xr = vec![rat(7, 10), rat(-2, 5)];
        let target = asymptotic_limit(&m, &xr).unwrap().to_f64();
        let mut last = f64::INFINITY;
        for t in [5.0, 10.0, 20.0, 40.0] {
            let v = eval_complex_scaled(&m, &x, tau, tau + c64(0.0, t), &budget).unwrap();
            let err = (v - c64(target, 0.0)).norm();
            assert!(err < last, "error not decreasing at T = {t}: {err} vs {last}");
            last = err;
        }
    }

    #[test]
    fn frames_are_orthonormal() {
        for m in [a2_weights(2), a3_weights(1)] {
            let frames = gram_schmidt_frames(&m).unwrap();
            assert_eq!(frames.len(), (1..=m.r()).product::<usize>());
            let n = m.lat.rank;
            let form = |a: &[f64], b: &[f64]| -> f64 {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += a[i] * (m.lat.gram[i][j] * m.lat.scale) as f64 * b[j];
                    }
                }
                acc
            };
            for fr in &frames {
                for i in 0..m.r() {
                    for j in 0..m.r() {
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!((form(&fr.vectors[i], &fr.vectors[j]) - expect).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn frame_of_orthogonal_pair_keeps_directions() {
        let lat = QuadraticLattice::a_n(3, 1).unwrap();
        let m = VectorSetM::new(lat, vec![rvec(&[1, 0, 0]), rvec(&[0, 0, 1])]).unwrap();
        for fr in gram_schmidt_frames(&m).unwrap() {
            // second frame vector stays parallel to the second input
            let v = &fr.vectors[1];
            let col = &m.cols[fr.perm[1]];
            let ratio: Vec<f64> = v
                .iter()
                .zip(col)
                .filter(|(_, c)| !c.is_zero())
                .map(|(a, c)| a / rat_to_f64(*c))
                .collect();
            for pair in ratio.windows(2) {
                assert!((pair[0] - pair[1]).abs() < 1e-13);
            }
            for (a, c) in v.iter().zip(col) {
                if c.is_zero() {
                    assert!(a.abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn iterated_integral_matches_recursion_r1_and_r2() {
        let budget = TruncationBudget::default();
        let tau = c64(0.0, 0.5);
        let w = c64(0.4, 1.3);
        // r = 1
        let lat = QuadraticLattice::a_n(1, 2).unwrap();
        let m1 = VectorSetM::new(lat, vec![vec![rat(1, 2)]]).unwrap();
        let x1 = [c64(0.6, 0.1)];
        let a = eval_complex_scaled(&m1, &x1, tau, w, &budget).unwrap();
        let b = iterated_integral_form(&m1, &x1, tau, w, &budget).unwrap();
        assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        // r = 2, A_2 weights
        let m2 = a2_weights(2);
        let x2 = [c64(0.8, 0.0), c64(-0.3, 0.05)];
        let a = eval_complex_scaled(&m2, &x2, tau, w, &budget).unwrap();
        let b = iterated_integral_form(&m2, &x2, tau, w, &budget).unwrap();
        assert!((a - b).norm() < 1e-7, "{a} vs {b}");
    }

    #[test]
    fn iterated_integral_constant_term_is_zero_value() {
        // only the l = 0 terms survive at w = tau + i infinity for x = 0:
        // sum_sigma E(0)/r! = E(0)
        let m = a2_weights(2);
        let frames = gram_schmidt_frames(&m).unwrap();
        let mut acc = 0.0;
        for _fr in &frames {
            acc += zero_value(&m).unwrap().to_f64() / 2.0;
        }
        assert!((acc - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dual_vectors_satisfy_duality() {
        for m in [a2_weights(2), a3_weights(3)] {
            let duals = m.dual_vectors();
            for j in 0..m.r() {
                for k in 0..m.r() {
                    let expect = if j == k { Rational::one() } else { Rational::zero() };
                    assert_eq!(m.pairing(j, &duals[k]), expect);
                }
            }
        }
    }

    #[test]
    fn false_theta_spec_characteristic_check() {
        // the unary intro example: Q(x) = x^2/2, l = 1
        let lat = QuadraticLattice::unary(1).unwrap();
        let spec = FalseThetaSpec::new(
            lat.clone(),
            ConjugacyClass::zero(1),
            vec![rat_i(1)],
            vec![vec![rat_i(1)]],
            None,
        );
        assert!(spec.is_ok());
        // l = 0 fails here: Q(1) = 1/2 is not integral
        let bad = FalseThetaSpec::new(
            lat,
            ConjugacyClass::zero(1),
            vec![rat_i(0)],
            vec![vec![rat_i(1)]],
            None,
        );
        assert!(bad.is_err());
    }
}
