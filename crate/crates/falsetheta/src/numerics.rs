//! Complex special functions and quadrature primitives.
//!
//! Everything here is pure and reentrant. Gauss-Legendre node tables are
//! cached after first construction and never mutated.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use errorfunctions::ComplexErrorFunctions;
use num_complex::Complex64;

use crate::{Error, Result};

/// Ambient scalar for all analytic formulas.
pub type ComplexScalar = Complex64;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Exponent bound above which e^(z^2) leaves the f64 range.
pub const ERF_EXP_LIMIT: f64 = 700.0;

/// Truncation controls shared by lattice sums, series and quadrature.
#[derive(Clone, Debug, serde::Serialize)]
pub struct TruncationBudget {
    /// Maximum value of the (scaled) quadratic form kept in lattice sums.
    pub lattice_cutoff: f64,
    /// Maximum q-exponent kept in formal series.
    pub series_order: crate::rat::Rational,
    /// Base Gauss-Legendre node count per panel.
    pub quad_points: usize,
    /// Absolute tolerance for reported error estimates.
    pub tolerance: f64,
    /// Depth cap for the generalized-error recursion.
    pub recursion_depth_cap: usize,
}

impl TruncationBudget {
    pub fn new(lattice_cutoff: f64, quad_points: usize, tolerance: f64) -> Result<Self> {
        if !(lattice_cutoff > 0.0) || !(tolerance > 0.0) || quad_points < 8 {
            return Err(Error::InvalidArgument(format!(
                "budget requires cutoff > 0, tolerance > 0, quad_points >= 8 \
                 (got {lattice_cutoff}, {tolerance}, {quad_points})"
            )));
        }
        Ok(TruncationBudget { lattice_cutoff, quad_points, tolerance, ..Default::default() })
    }
}

impl Default for TruncationBudget {
    fn default() -> Self {
        TruncationBudget {
            lattice_cutoff: 60.0,
            series_order: crate::rat::rat_i(40),
            quad_points: 64,
            tolerance: 1e-9,
            recursion_depth_cap: 4,
        }
    }
}

// ---------------------------------------------------------------------------
// complex error function
// ---------------------------------------------------------------------------

/// erf of a complex argument, accurate to <= 1e-12 relative error for |z| <= 30.
///
/// Evaluation goes through the Faddeeva function w(z); arguments whose e^(z^2)
/// factor would overflow f64 are rejected instead of returning infinities.
pub fn complex_erf(z: Complex64) -> Result<Complex64> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::NonFinite("complex_erf argument"));
    }
    // |erf(z)| grows like e^{-Re(z^2)} off the real axis.
    let minus_re_z2 = (z.im - z.re) * (z.re + z.im);
    if minus_re_z2 > ERF_EXP_LIMIT {
        return Err(Error::ErfOverflow { imag: z.im.abs(), limit: (ERF_EXP_LIMIT + z.re * z.re).sqrt() });
    }
    let v = z.erf();
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("complex_erf"))
    }
}

// ---------------------------------------------------------------------------
// branch conventions
// ---------------------------------------------------------------------------

/// Principal square root with the branch cut approached from above: for a
/// negative real argument the value is +i*sqrt(|x|).
///
/// The factor sqrt(i(w - tau)) has its cut on the vertical ray above tau; the
/// ray itself (w directly above tau) is the most common evaluation locus, and
/// this convention matches the limit from inside the cut plane used everywhere
/// else in the crate.
pub fn principal_sqrt_upper(z: Complex64) -> Complex64 {
    let mut z = z;
    if z.im == 0.0 {
        z.im = 0.0; // normalize -0.0 to +0.0 so arg(-x) = +pi
    }
    z.sqrt()
}

/// sqrt(i(w - tau)) with the principal branch (upper-edge convention on the
/// ray above tau).
pub fn principal_sqrt_branch(tau: Complex64, w: Complex64) -> Complex64 {
    principal_sqrt_upper(I * (w - tau))
}

/// An element of SL_2(Z) acting by Moebius transformations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModularMatrix {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

impl ModularMatrix {
    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Result<Self> {
        if a * d - b * c != 1 {
            return Err(Error::InvalidArgument(format!(
                "[[{a},{b}],[{c},{d}]] has determinant {} != 1",
                a * d - b * c
            )));
        }
        Ok(ModularMatrix { a, b, c, d })
    }

    pub fn identity() -> Self {
        ModularMatrix { a: 1, b: 0, c: 0, d: 1 }
    }

    /// S = [[0, -1], [1, 0]], the inversion tau -> -1/tau.
    pub fn s() -> Self {
        ModularMatrix { a: 0, b: -1, c: 1, d: 0 }
    }

    /// T = [[1, 1], [0, 1]], the shift tau -> tau + 1.
    pub fn t() -> Self {
        ModularMatrix { a: 1, b: 1, c: 0, d: 1 }
    }

    pub fn act(&self, z: Complex64) -> Complex64 {
        (c64(self.a as f64, 0.0) * z + c64(self.b as f64, 0.0))
            / (c64(self.c as f64, 0.0) * z + c64(self.d as f64, 0.0))
    }

    /// c*z + d.
    pub fn j(&self, z: Complex64) -> Complex64 {
        c64(self.c as f64, 0.0) * z + c64(self.d as f64, 0.0)
    }
}

/// The sign chi_{tau,w}(gamma) tracking the branch of sqrt(i(w-tau)) under a
/// simultaneous Moebius action on (tau, w). For gamma = S this is the
/// chi_{tau,w} of the inversion transformation laws.
pub fn chi_sign(tau: Complex64, w: Complex64, gamma: ModularMatrix) -> Result<i32> {
    if tau == w {
        return Err(Error::InvalidArgument("chi_sign requires tau != w".into()));
    }
    let jt = gamma.j(tau);
    let jw = gamma.j(w);
    let x = I * (w - tau);
    let v = principal_sqrt_upper(x / (jt * jw)) * jt.sqrt() * jw.sqrt() / principal_sqrt_upper(x);
    if (v - 1.0).norm() < 1e-8 {
        Ok(1)
    } else if (v + 1.0).norm() < 1e-8 {
        Ok(-1)
    } else {
        Err(Error::NonFinite("chi_sign did not evaluate to +-1"))
    }
}

// ---------------------------------------------------------------------------
// Gauss-Legendre rules
// ---------------------------------------------------------------------------

fn legendre_rule_uncached(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        let mut converged = 0;
        for _ in 0..100 {
            // evaluate P_n and P_n' by recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                converged += 1;
                if converged > 2 {
                    break;
                }
            }
        }
        nodes[k] = x;
        weights[k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Gauss-Legendre nodes and weights on (-1, 1), cached per order.
pub fn gauss_legendre(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard.entry(n).or_insert_with(|| Arc::new(legendre_rule_uncached(n))).clone()
}

/// Integrate f over [a, b] with an n-point Gauss-Legendre rule.
pub fn integrate_gl<F: FnMut(f64) -> Complex64>(mut f: F, a: f64, b: f64, n: usize) -> Complex64 {
    let rule = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, w) in rule.0.iter().zip(rule.1.iter()) {
        acc += f(mid + half * x) * *w;
    }
    acc * half
}

// ---------------------------------------------------------------------------
// geodesic paths
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PathKind {
    /// Degenerate geodesic: Re(start) = Re(end).
    VerticalLine,
    /// Semicircle centered on the real axis.
    Semicircle { center: f64, radius: f64 },
    /// Straight chord; equivalent to the geodesic for every integrand in this
    /// crate because both stay inside the plane cut along the ray above the
    /// start point (asserted by tests).
    Chord,
}

#[derive(Clone, Copy, Debug)]
pub struct GeodesicPath {
    pub start: Complex64,
    pub end: Complex64,
    pub kind: PathKind,
}

impl GeodesicPath {
    /// The hyperbolic geodesic from `start` to `end`.
    pub fn between(start: Complex64, end: Complex64) -> Result<Self> {
        if start.im <= 0.0 || end.im <= 0.0 {
            return Err(Error::InvalidArgument("geodesic endpoints must lie in H".into()));
        }
        if start == end {
            return Err(Error::InvalidArgument("geodesic requires distinct endpoints".into()));
        }
        let kind = if (start.re - end.re).abs() < 1e-14 * (1.0 + start.re.abs() + end.re.abs()) {
            PathKind::VerticalLine
        } else {
            let center =
                (end.norm_sqr() - start.norm_sqr()) / (2.0 * (end.re - start.re));
            let radius = (start - c64(center, 0.0)).norm();
            PathKind::Semicircle { center, radius }
        };
        Ok(GeodesicPath { start, end, kind })
    }

    /// Straight chord from `start` to `end`.
    pub fn chord(start: Complex64, end: Complex64) -> Result<Self> {
        if start.im <= 0.0 || end.im <= 0.0 || start == end {
            return Err(Error::InvalidArgument("chord endpoints must be distinct points of H".into()));
        }
        Ok(GeodesicPath { start, end, kind: PathKind::Chord })
    }

    /// Point and velocity at parameter t in [0, 1].
    pub fn at(&self, t: f64) -> (Complex64, Complex64) {
        let (offset, velocity) = self.offset_at(t);
        (self.start + offset, velocity)
    }

    /// Displacement from the start point and velocity at parameter t. The
    /// displacement is computed without going through the absolute point, so
    /// it stays exact down to |t| near the floating-point granularity of the
    /// endpoints (required by the endpoint-singular quadratures).
    pub fn offset_at(&self, t: f64) -> (Complex64, Complex64) {
        match self.kind {
            PathKind::VerticalLine | PathKind::Chord => {
                let d = self.end - self.start;
                (d * t, d)
            }
            PathKind::Semicircle { center, radius } => {
                let c = c64(center, 0.0);
                let th0 = (self.start - c).arg();
                let th1 = (self.end - c).arg();
                let dth = t * (th1 - th0);
                // e^{i dth} - 1 = -2 sin^2(dth/2) + i sin(dth), stable at small dth
                let em1 = c64(-2.0 * (0.5 * dth).sin().powi(2), dth.sin());
                let e0 = c64(0.0, th0).exp() * radius;
                (e0 * em1, I * e0 * c64(0.0, dth).exp() * (th1 - th0))
            }
        }
    }
}

/// Endpoint behavior of the integrand at the start of the path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SingularPower {
    /// Plain holomorphic integrand.
    None,
    /// The integral carries a (i(w1 - tau))^{-1/2} kernel at the start point.
    Half,
}

fn quad_panels(power: SingularPower, path: &GeodesicPath) -> Vec<f64> {
    let length = (path.end - path.start).norm();
    match power {
        SingularPower::None => vec![0.0, 0.5, 1.0],
        SingularPower::Half => {
            if length > 6.0 {
                // long vertical reaches (w near tau + i infinity): the
                // endpoint-singular integrands live at |w1 - tau| = O(1),
                // so grade the panels toward the start
                vec![0.0, 0.5 / length, 4.0 / length, 0.25, 1.0]
            } else {
                vec![0.0, 0.2, 0.5, 1.0]
            }
        }
    }
}

fn quad_geodesic_once<F: FnMut(Complex64) -> Result<Complex64>>(
    f: &mut F,
    path: &GeodesicPath,
    power: SingularPower,
    n: usize,
) -> Result<Complex64> {
    let tau = path.start;
    let mut total = Complex64::new(0.0, 0.0);
    let panels = quad_panels(power, path);
    for seg in panels.windows(2) {
        let mut err: Option<Error> = None;
        let val = match power {
            SingularPower::None => integrate_gl(
                |t| {
                    let (w1, dw) = path.at(t);
                    match f(w1) {
                        Ok(v) => v * dw,
                        Err(e) => {
                            err.get_or_insert(e);
                            Complex64::new(0.0, 0.0)
                        }
                    }
                },
                seg[0],
                seg[1],
                n,
            ),
            SingularPower::Half => integrate_gl(
                // substitute t = u^2 so the endpoint kernel becomes smooth;
                // the kernel sqrt comes from the exact path offset so nodes
                // arbitrarily close to tau stay regular
                |u| {
                    let (offset, dw) = path.offset_at(u * u);
                    let s = principal_sqrt_upper(I * offset);
                    match f(tau + offset) {
                        Ok(v) => v / s * dw * (2.0 * u),
                        Err(e) => {
                            err.get_or_insert(e);
                            Complex64::new(0.0, 0.0)
                        }
                    }
                },
                seg[0].sqrt(),
                seg[1].sqrt(),
                n,
            ),
        };
        if let Some(e) = err {
            return Err(e);
        }
        total += val;
    }
    Ok(total)
}

/// Integrate f(w1) * (i(w1 - tau))^{-power} along the path, where tau is the
/// start point. Returns the value and an error estimate from comparing two
/// Gauss orders.
pub fn quad_geodesic_raw<F: FnMut(Complex64) -> Result<Complex64>>(
    mut f: F,
    path: &GeodesicPath,
    power: SingularPower,
    n: usize,
) -> Result<(Complex64, f64)> {
    let coarse = quad_geodesic_once(&mut f, path, power, n)?;
    let fine = quad_geodesic_once(&mut f, path, power, n + n / 2)?;
    Ok((fine, (fine - coarse).norm()))
}

/// Single-pass variant without the error estimate, for recursion interiors
/// whose accuracy is certified by the cross-representation checks.
pub fn quad_geodesic_single<F: FnMut(Complex64) -> Result<Complex64>>(
    mut f: F,
    path: &GeodesicPath,
    power: SingularPower,
    n: usize,
) -> Result<Complex64> {
    quad_geodesic_once(&mut f, path, power, n + n / 2)
}

/// Geodesic quadrature with the budget's tolerance enforced.
pub fn quad_geodesic<F: FnMut(Complex64) -> Result<Complex64>>(
    f: F,
    path: &GeodesicPath,
    power: SingularPower,
    budget: &TruncationBudget,
) -> Result<(Complex64, f64)> {
    let (value, estimate) = quad_geodesic_raw(f, path, power, budget.quad_points)?;
    if estimate > budget.tolerance {
        return Err(Error::QuadratureNonConvergence { estimate, tolerance: budget.tolerance });
    }
    Ok((value, estimate))
}

/// The regularized integral of f(w1) * (i(w1 - tau))^{-3/2} from tau to w.
///
/// The limit definition lim_{w2 -> tau} [ int_{w2}^w f (i(w1-tau))^{-3/2} dw1
/// + 2i f(tau) (i(w2-tau))^{-1/2} ] equals, by the antiderivative
/// 2i (i(w1-tau))^{-1/2} of the kernel applied to the constant f(tau),
///
///   int_tau^w (f(w1) - f(tau)) (i(w1-tau))^{-3/2} dw1 + 2i f(tau) (i(w-tau))^{-1/2},
///
/// which is the numerically stable form evaluated here. The equivalence is
/// re-checked against the two-sided limit definition in tests.
pub fn reg_integral_32<F: FnMut(Complex64) -> Result<Complex64>>(
    mut f: F,
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
) -> Result<(Complex64, f64)> {
    let f_tau = f(tau)?;
    if !f_tau.re.is_finite() || !f_tau.im.is_finite() {
        return Err(Error::NonFinite("reg_integral_32 endpoint value"));
    }
    let path = GeodesicPath::between(tau, w)?;
    let n = budget.quad_points;
    let mut run = |n: usize| -> Result<Complex64> {
        let mut total = Complex64::new(0.0, 0.0);
        for seg in quad_panels(SingularPower::Half, &path).windows(2) {
            let mut err: Option<Error> = None;
            let val = integrate_gl(
                |u| {
                    let (offset, dw) = path.offset_at(u * u);
                    let s = principal_sqrt_upper(I * offset);
                    match f(tau + offset) {
                        Ok(v) => (v - f_tau) / (s * s * s) * dw * (2.0 * u),
                        Err(e) => {
                            err.get_or_insert(e);
                            Complex64::new(0.0, 0.0)
                        }
                    }
                },
                seg[0].sqrt(),
                seg[1].sqrt(),
                n,
            );
            if let Some(e) = err {
                return Err(e);
            }
            total += val;
        }
        Ok(total)
    };
    let coarse = run(n)?;
    let fine = run(n + n / 2)?;
    let boundary = 2.0 * I * f_tau / principal_sqrt_branch(tau, w);
    Ok((fine + boundary, (fine - coarse).norm()))
}

// ---------------------------------------------------------------------------
// Cauchy derivatives
// ---------------------------------------------------------------------------

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Mixed partial derivative of a holomorphic function at 0 via the Cauchy
/// integral formula (trapezoid rule on circles, spectrally accurate).
/// Returns the derivative and an error estimate from halving the node count.
pub fn cauchy_derivative<F>(
    g: F,
    orders: &[usize],
    radius: f64,
    points: usize,
) -> Result<(Complex64, f64)>
where
    F: Fn(&[Complex64]) -> Complex64,
{
    if radius <= 0.0 {
        return Err(Error::InvalidArgument("cauchy_derivative requires radius > 0".into()));
    }
    let k = orders.len();
    let active: Vec<usize> = (0..k).filter(|&j| orders[j] > 0).collect();
    if active.is_empty() {
        let z = vec![Complex64::new(0.0, 0.0); k];
        return Ok((g(&z), 0.0));
    }
    let n = points.max(8).next_multiple_of(2);
    let eval = |n: usize| -> Complex64 {
        let mut idx = vec![0usize; active.len()];
        let mut acc = Complex64::new(0.0, 0.0);
        loop {
            let mut z = vec![Complex64::new(0.0, 0.0); k];
            let mut phase = 0.0;
            for (pos, &var) in active.iter().enumerate() {
                let th = 2.0 * PI * idx[pos] as f64 / n as f64;
                z[var] = c64(0.0, th).exp() * radius;
                phase -= th * orders[var] as f64;
            }
            acc += g(&z) * c64(0.0, phase).exp();
            // advance the multi-index
            let mut pos = 0;
            loop {
                if pos == active.len() {
                    let total: usize = orders.iter().sum();
                    let norm: f64 = orders.iter().map(|&m| factorial(m)).product::<f64>()
                        / (n as f64).powi(active.len() as i32)
                        / radius.powi(total as i32);
                    return acc * norm;
                }
                idx[pos] += 1;
                if idx[pos] < n {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    };
    let fine = eval(n);
    let coarse = eval(n / 2);
    if !fine.re.is_finite() || !fine.im.is_finite() {
        return Err(Error::NonFinite("cauchy_derivative"));
    }
    Ok((fine, (fine - coarse).norm()))
}
