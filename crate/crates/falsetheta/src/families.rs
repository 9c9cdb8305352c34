//! The explicit depth 1/2/3 families psi-hat / phi-hat on sqrt(p) A_n
//! (n = 1, 2, 3): specialized evaluators, boundary q-series, Eichler integral
//! representations, and the A_2 modular data.
//!
//! Throughout, the A_1 building blocks are erf sums
//!   psi-hat_{p,s}(tau, w) = sum_{n in Z + s/2p} erf(-i sqrt(2 pi i p (w-tau)) n) q^{p n^2},
//! and the higher-rank kernels combine unary theta functions with lower-rank
//! completions along the coset decompositions of the lattice module.

use num_complex::Complex64;
use num_traits::Zero;
use std::collections::HashMap;
use std::f64::consts::PI;

use crate::generr::{eval_complex_scaled, FalseThetaSpec, Poly};
use crate::lattice::{all_classes, canonical_label, ConjugacyClass, QuadraticLattice};
use crate::numerics::{
    c64, complex_erf, principal_sqrt_branch, GeodesicPath, SingularPower, TruncationBudget, I,
};
use crate::qseries::{
    lattice_theta, unary_theta, weighted_lattice_theta, Coeff, ExactCoeff, QSeries,
};
use crate::rat::{rat, rat_i, rat_sign, rat_to_f64, Rational};
use crate::{Error, Result};

/// Which of the two bimodular families on sqrt(p) A_n.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    /// Weight n/2, plain sign insertions.
    Psi,
    /// Weight n/2 + 1, with the Weyl-vector linear insertion.
    Phi,
}

/// A family member: rank n, scale p, class label s, psi or phi.
#[derive(Clone, Debug)]
pub struct FamilyLabel {
    pub n: usize,
    pub p: i64,
    pub s: Vec<i64>,
    pub kind: FamilyKind,
}

impl FamilyLabel {
    pub fn new(n: usize, p: i64, s: Vec<i64>, kind: FamilyKind) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::InvalidArgument(format!("family rank must be 1..=3, got {n}")));
        }
        if p < 2 {
            return Err(Error::InvalidArgument("family scale requires p >= 2".into()));
        }
        if s.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: s.len() });
        }
        Ok(FamilyLabel { n, p, s, kind })
    }
}

/// The generic completion spec realizing a family member (M = dual basis,
/// l = 0; phi carries the linear insertion x_1 + ... + x_n).
pub fn family_spec(label: &FamilyLabel) -> Result<FalseThetaSpec> {
    let lat = QuadraticLattice::a_n(label.n, label.p)?;
    let class = ConjugacyClass::a_n_class(&lat, &label.s)?;
    let betas = lat.dual_basis();
    let insertion = match label.kind {
        FamilyKind::Psi => None,
        FamilyKind::Phi => Some(Poly::linear(&vec![rat_i(1); label.n])),
    };
    FalseThetaSpec::new(lat.clone(), class, vec![Rational::zero(); label.n], betas, insertion)
}

// ---------------------------------------------------------------------------
// direct evaluators
// ---------------------------------------------------------------------------

fn a1_points(p: i64, s: i64, cutoff: f64) -> Vec<Rational> {
    let res = rat(s, 2 * p);
    let bound = (cutoff / p as f64).sqrt() + 2.0;
    let lo = (-bound - rat_to_f64(res)).floor() as i64;
    let hi = (bound - rat_to_f64(res)).ceil() as i64;
    (lo..=hi)
        .map(|j| rat_i(j) + res)
        .filter(|n| rat_to_f64(*n * *n) * p as f64 <= cutoff + 1e-9)
        .collect()
}

/// psi-hat on sqrt(p) A_1 via the erf closed form.
pub fn psi_hat_a1(
    p: i64,
    s: i64,
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
) -> Result<Complex64> {
    if tau == w {
        return Ok(c64(0.0, 0.0));
    }
    let scale = (2.0 * PI * p as f64).sqrt() * principal_sqrt_branch(tau, w);
    let mut acc = c64(0.0, 0.0);
    for n in a1_points(p, s, budget.lattice_cutoff) {
        let nf = rat_to_f64(n);
        let e = complex_erf(-I * scale * nf)?;
        acc += e * (2.0 * PI * I * p as f64 * nf * nf * tau).exp();
    }
    Ok(acc)
}

/// phi-hat on sqrt(p) A_1: the erf-weighted linear sum plus the boundary-theta
/// correction (i/pi) (2ip(w - tau))^{-1/2} theta_{p,s}(w).
pub fn phi_hat_a1(
    p: i64,
    s: i64,
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
) -> Result<Complex64> {
    if tau == w {
        return Err(Error::InvalidArgument("phi-hat on A_1 diverges at w = tau".into()));
    }
    let sq = principal_sqrt_branch(tau, w);
    let scale = (2.0 * PI * p as f64).sqrt() * sq;
    let mut acc = c64(0.0, 0.0);
    let mut theta_w = c64(0.0, 0.0);
    for n in a1_points(p, s, budget.lattice_cutoff) {
        let nf = rat_to_f64(n);
        let e = complex_erf(-I * scale * nf)?;
        acc += e * nf * (2.0 * PI * I * p as f64 * nf * nf * tau).exp();
        theta_w += (2.0 * PI * I * p as f64 * nf * nf * w).exp();
    }
    Ok(acc + I / PI / ((2.0 * p as f64).sqrt() * sq) * theta_w)
}

fn mu_shift(lat: &QuadraticLattice, s: &[i64]) -> Result<Vec<Rational>> {
    Ok(ConjugacyClass::a_n_class(lat, s)?.shift)
}

/// psi-hat on sqrt(p) A_n for n = 2, 3 via the geodesic recursion, with the
/// finite w = tau limit E(0) * Theta for even rank.
pub fn psi_hat_an(
    n: usize,
    p: i64,
    s: &[i64],
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
) -> Result<Complex64> {
    let lat = QuadraticLattice::a_n(n, p)?;
    let shift = mu_shift(&lat, s)?;
    if tau == w {
        // E_{Q,M}(0) times the coset theta function
        let zv = crate::generr::zero_value(&crate::generr::VectorSetM::new(
            lat.clone(),
            lat.dual_basis(),
        )?)?;
        if zv.is_zero() {
            return Ok(c64(0.0, 0.0));
        }
        let class = ConjugacyClass::a_n_class(&lat, s)?;
        let theta = lattice_theta(&lat, &class, order_for(budget))?;
        let (tv, _) = theta.eval(tau)?;
        return Ok(tv * zv.to_f64());
    }
    let m = crate::generr::VectorSetM::new(lat.clone(), lat.dual_basis())?;
    let mut acc = c64(0.0, 0.0);
    for v in lat.enumerate_points(&shift, budget.lattice_cutoff)? {
        let q = rat_to_f64(lat.working_quad(&v)?);
        let x: Vec<Complex64> = v.iter().map(|&c| c64(rat_to_f64(c), 0.0)).collect();
        let e = eval_complex_scaled(&m, &x, tau, w, budget)?;
        acc += e * (2.0 * PI * I * q * tau).exp();
    }
    Ok(acc)
}

fn order_for(budget: &TruncationBudget) -> Rational {
    Rational::approximate_float(budget.lattice_cutoff).unwrap_or_else(|| rat_i(40))
}

/// Dispatch psi-hat_{p,s}^{[A_n]}(tau, w).
pub fn psi_hat_family(
    n: usize,
    p: i64,
    s: &[i64],
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
) -> Result<Complex64> {
    match n {
        1 => psi_hat_a1(p, s[0], tau, w, budget),
        2 | 3 => psi_hat_an(n, p, s, tau, w, budget),
        _ => Err(Error::InvalidArgument("family rank must be 1..=3".into())),
    }
}

/// Evaluate a cached unary theta series at a point of H.
struct ThetaCache {
    order: Rational,
    cache: HashMap<(i64, i64, u32), QSeries>,
}

impl ThetaCache {
    fn new(order: Rational) -> Self {
        ThetaCache { order, cache: HashMap::new() }
    }

    fn eval(&mut self, m: i64, r: i64, k: u32, at: Complex64) -> Result<Complex64> {
        let key = (m, r.rem_euclid(2 * m), k);
        if !self.cache.contains_key(&key) {
            self.cache.insert(key, unary_theta(m, key.1, k, self.order)?);
        }
        Ok(self.cache[&key].eval(at)?.0)
    }
}

/// phi-hat_{p,s}^{[A_2]}(tau, w) by the explicit closed form: the linear
/// erf-weighted lattice sum plus the sqrt-singular theta * psi-hat block.
pub fn phi_hat_a2(
    p: i64,
    s: &[i64],
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
) -> Result<Complex64> {
    if tau == w {
        // Remark limit: (1/3 + sqrt3/pi) sum (n1 + n2) q^{pQ}
        let lat = QuadraticLattice::a_n(2, p)?;
        let shift = mu_shift(&lat, s)?;
        let lin = weighted_lattice_theta(
            &lat,
            &shift,
            &Poly::linear(&[rat_i(1), rat_i(1)]),
            order_for(budget),
        )?;
        let (lv, _) = lin.eval(tau)?;
        return Ok(lv * (1.0 / 3.0 + 3.0f64.sqrt() / PI));
    }
    let lat = QuadraticLattice::a_n(2, p)?;
    let shift = mu_shift(&lat, s)?;
    let m = crate::generr::VectorSetM::new(lat.clone(), lat.dual_basis())?;
    let mut main = c64(0.0, 0.0);
    for v in lat.enumerate_points(&shift, budget.lattice_cutoff)? {
        let q = rat_to_f64(lat.working_quad(&v)?);
        let lin = rat_to_f64(v[0] + v[1]);
        if lin == 0.0 && v.iter().all(|c| c.is_zero()) {
            continue;
        }
        let x: Vec<Complex64> = v.iter().map(|&c| c64(rat_to_f64(c), 0.0)).collect();
        let e = eval_complex_scaled(&m, &x, tau, w, budget)?;
        main += e * lin * (2.0 * PI * I * q * tau).exp();
    }
    let mut thetas = ThetaCache::new(order_for(budget));
    let sq = principal_sqrt_branch(tau, w);
    let mut corr = c64(0.0, 0.0);
    for d in 0..2i64 {
        corr += thetas.eval(3 * p, 2 * s[0] + s[1] + 3 * p * d, 0, w)?
            * psi_hat_a1(p, s[1] - p * d, tau, w, budget)?;
        corr += thetas.eval(3 * p, 2 * s[1] + s[0] + 3 * p * d, 0, w)?
            * psi_hat_a1(p, s[0] - p * d, tau, w, budget)?;
    }
    Ok(main + 3.0f64.sqrt() * I / (PI * (2.0 * p as f64).sqrt() * sq) * corr)
}

/// phi-hat_{p,s}^{[A_3]}(tau, w) by the explicit closed form.
pub fn phi_hat_a3(
    p: i64,
    s: &[i64],
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
) -> Result<Complex64> {
    if tau == w {
        return Err(Error::InvalidArgument("phi-hat on A_3 diverges at w = tau".into()));
    }
    let lat = QuadraticLattice::a_n(3, p)?;
    let shift = mu_shift(&lat, s)?;
    let m = crate::generr::VectorSetM::new(lat.clone(), lat.dual_basis())?;
    let mut main = c64(0.0, 0.0);
    for v in lat.enumerate_points(&shift, budget.lattice_cutoff)? {
        let q = rat_to_f64(lat.working_quad(&v)?);
        let lin = rat_to_f64(v[0] + v[1] + v[2]);
        let x: Vec<Complex64> = v.iter().map(|&c| c64(rat_to_f64(c), 0.0)).collect();
        let e = eval_complex_scaled(&m, &x, tau, w, budget)?;
        main += e * lin * (2.0 * PI * I * q * tau).exp();
    }
    let inner = kernel_budget(budget);
    let mut thetas = ThetaCache::new(order_for(budget));
    let sq = principal_sqrt_branch(tau, w);
    let mut corr = c64(0.0, 0.0);
    for g in 0..3i64 {
        corr += 3.0f64.sqrt()
            * thetas.eval(6 * p, 3 * s[0] + 2 * s[1] + s[2] + 4 * p * g, 0, w)?
            * psi_hat_an(2, p, &[s[1] - p * g, s[2]], tau, w, &inner)?;
        corr += 3.0f64.sqrt()
            * thetas.eval(6 * p, s[0] + 2 * s[1] + 3 * s[2] + 4 * p * g, 0, w)?
            * psi_hat_an(2, p, &[s[0], s[1] - p * g], tau, w, &inner)?;
    }
    for d in 0..2i64 {
        corr += 2.0
            * thetas.eval(2 * p, s[0] + 2 * s[1] + s[2] + 2 * p * d, 0, w)?
            * psi_hat_a1(p, s[0] - p * d, tau, w, budget)?
            * psi_hat_a1(p, s[2] - p * d, tau, w, budget)?;
    }
    Ok(main + I / (PI * (p as f64).sqrt() * sq) * corr)
}

/// Dispatch phi-hat_{p,s}^{[A_n]}(tau, w).
pub fn phi_hat_family(
    n: usize,
    p: i64,
    s: &[i64],
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
) -> Result<Complex64> {
    match n {
        1 => phi_hat_a1(p, s[0], tau, w, budget),
        2 => phi_hat_a2(p, s, tau, w, budget),
        3 => phi_hat_a3(p, s, tau, w, budget),
        _ => Err(Error::InvalidArgument("family rank must be 1..=3".into())),
    }
}

/// Evaluate a family member through the generic completion engine.
pub fn eval_family(
    label: &FamilyLabel,
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
) -> Result<Complex64> {
    match label.kind {
        FamilyKind::Psi => psi_hat_family(label.n, label.p, &label.s, tau, w, budget),
        FamilyKind::Phi => phi_hat_family(label.n, label.p, &label.s, tau, w, budget),
    }
}

fn kernel_budget(budget: &TruncationBudget) -> TruncationBudget {
    TruncationBudget {
        lattice_cutoff: budget.lattice_cutoff.min(30.0),
        quad_points: budget.quad_points.min(32),
        ..budget.clone()
    }
}

// ---------------------------------------------------------------------------
// boundary series from the explicit displays
// ---------------------------------------------------------------------------

fn signed_unary_series(p: i64, residue: Rational, weight: bool, order: Rational) -> QSeries {
    // sum over n in Z + residue of sgn(n) [n] q^{p n^2}
    let mut s = QSeries::zero(order);
    let bound = (rat_to_f64(order) / p as f64).sqrt() + 2.0;
    let lo = (-bound - rat_to_f64(residue)).floor() as i64;
    let hi = (bound - rat_to_f64(residue)).ceil() as i64;
    for j in lo..=hi {
        let n = rat_i(j) + residue;
        let e = n * n * rat_i(p);
        if e <= order {
            let sign = rat_sign(n);
            if sign == 0 {
                continue;
            }
            let c = if weight { n * rat_i(sign) } else { rat_i(sign) };
            s.add_term(e, Coeff::from_rational(c));
        }
    }
    s
}

fn signed_lattice_series(
    n: usize,
    p: i64,
    s: &[i64],
    weighted: bool,
    order: Rational,
) -> Result<QSeries> {
    let lat = QuadraticLattice::a_n(n, p)?;
    let shift = mu_shift(&lat, s)?;
    let mut out = QSeries::zero(order);
    for v in lat.enumerate_points_exact(&shift, order)? {
        let mut sign = 1i64;
        for c in &v {
            sign *= rat_sign(*c);
            if sign == 0 {
                break;
            }
        }
        if sign == 0 {
            continue;
        }
        let mut c = rat_i(sign);
        if weighted {
            c *= v.iter().fold(Rational::zero(), |a, b| a + *b);
        }
        out.add_term(lat.working_quad(&v)?, Coeff::from_rational(c));
    }
    Ok(out)
}

/// The exact boundary q-series of a family member, assembled from the
/// explicit displays (tested elsewhere against the generic false_boundary).
pub fn boundary_family(label: &FamilyLabel, order: Rational) -> Result<QSeries> {
    let weighted = label.kind == FamilyKind::Phi;
    let p = label.p;
    match label.n {
        1 => Ok(signed_unary_series(p, rat(label.s[0], 2 * p), weighted, order)),
        2 => {
            let mut out = signed_lattice_series(2, p, &label.s, weighted, order)?;
            if !weighted {
                // + (1/3) delta_{s = 0}
                let canon = canonical_label(2, p, &label.s);
                if canon == vec![0, 0] {
                    out.add_term(Rational::zero(), Coeff::from_rational(rat(1, 3)));
                }
            }
            Ok(out)
        }
        3 => {
            let mut out = signed_lattice_series(3, p, &label.s, weighted, order)?;
            let s = &label.s;
            let tag = |rho_num: i64, rho_den: i64| {
                let mut parts = std::collections::BTreeMap::new();
                parts.insert(
                    crate::qseries::ConstKey::AsinSqrt(rat(rho_num, rho_den)),
                    crate::rat::GRat::one(),
                );
                Coeff::Exact(ExactCoeff { parts })
            };
            let gates: [(Rational, Rational, Rational, Coeff); 3] = [
                (
                    rat(3 * s[0] + 2 * s[1] + s[2], 4 * p),
                    rat(s[0] + 2 * s[1] + s[2], 2 * p),
                    rat(s[0] + 2 * s[1] + 3 * s[2], 4 * p),
                    tag(1, 3),
                ),
                (
                    rat(s[0] + 2 * s[1] + s[2], 2 * p),
                    rat(s[0] + 2 * s[1] + 3 * s[2], 4 * p),
                    rat(3 * s[0] + 2 * s[1] + s[2], 4 * p),
                    tag(1, 3),
                ),
                (
                    rat(3 * s[0] + 2 * s[1] + s[2], 4 * p),
                    rat(s[0] + 2 * s[1] + 3 * s[2], 4 * p),
                    rat(s[0] + 2 * s[1] + s[2], 2 * p),
                    tag(1, 9),
                ),
            ];
            for (g1, g2, residue, coeff) in gates {
                if g1.is_integer() && g2.is_integer() {
                    let corr = signed_unary_series(p, residue, weighted, order);
                    out = out.add(&corr.scale(&coeff)?);
                }
            }
            Ok(out)
        }
        _ => Err(Error::InvalidArgument("family rank must be 1..=3".into())),
    }
}

// ---------------------------------------------------------------------------
// Eichler integral representations
// ---------------------------------------------------------------------------

/// Evaluate the Eichler integral representation of a family member; returns
/// the value and the quadrature error estimate.
pub fn eichler_family(
    label: &FamilyLabel,
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
) -> Result<(Complex64, f64)> {
    let p = label.p;
    let pf = p as f64;
    let path = GeodesicPath::between(tau, w)?;
    let torder = order_for(budget);
    match (label.n, label.kind) {
        (1, FamilyKind::Psi) => {
            // sqrt(2p) int theta^{[1]}_{p,s}(w1) (i(w1-tau))^{-1/2} dw1
            let theta = unary_theta(p, label.s[0], 1, torder)?;
            let (v, err) = crate::numerics::quad_geodesic_raw(
                |w1| Ok(theta.eval(w1)?.0),
                &path,
                SingularPower::Half,
                budget.quad_points,
            )?;
            Ok(((2.0 * pf).sqrt() * v, err))
        }
        (1, FamilyKind::Phi) => {
            // (1/(2 pi sqrt(2p))) R-int theta_{p,s}(w1) (i(w1-tau))^{-3/2} dw1
            let theta = unary_theta(p, label.s[0], 0, torder)?;
            let (v, err) = crate::numerics::reg_integral_32(
                |w1| Ok(theta.eval(w1)?.0),
                tau,
                w,
                budget,
            )?;
            Ok((v / (2.0 * PI * (2.0 * pf).sqrt()), err))
        }
        (2, FamilyKind::Psi) => {
            // sqrt(6p) int h(tau, w1)/sqrt(i(w1-tau)) + (1/3) Theta(tau)
            let s = &label.s;
            let inner = kernel_budget(budget);
            let mut thetas = ThetaCache::new(torder);
            let mut kernel = |w1: Complex64| -> Result<Complex64> {
                let mut acc = c64(0.0, 0.0);
                for d in 0..2i64 {
                    acc += thetas.eval(3 * p, 2 * s[0] + s[1] + 3 * p * d, 1, w1)?
                        * psi_hat_a1(p, s[1] - p * d, tau, w1, &inner)?;
                    acc += thetas.eval(3 * p, 2 * s[1] + s[0] + 3 * p * d, 1, w1)?
                        * psi_hat_a1(p, s[0] - p * d, tau, w1, &inner)?;
                }
                Ok(acc)
            };
            let (v, err) = crate::numerics::quad_geodesic_raw(
                &mut kernel,
                &path,
                SingularPower::Half,
                budget.quad_points,
            )?;
            let lat = QuadraticLattice::a_n(2, p)?;
            let class = ConjugacyClass::a_n_class(&lat, s)?;
            let (theta_val, _) = lattice_theta(&lat, &class, torder)?.eval(tau)?;
            Ok(((6.0 * pf).sqrt() * v + theta_val / 3.0, err))
        }
        (2, FamilyKind::Phi) => {
            // (1/3 + sqrt3/pi) L(tau)
            //   + sqrt(6p) int [f + g/(4 pi p i(w1-tau))] (i(w1-tau))^{-1/2};
            // the two separately divergent 1/(w1-tau) pieces cancel inside the
            // bracket, which is why it is evaluated as a single expression.
            let s = &label.s;
            let inner = kernel_budget(budget);
            let mut thetas = ThetaCache::new(torder);
            let mut kernel = |w1: Complex64| -> Result<Complex64> {
                let sq1 = principal_sqrt_branch(tau, w1);
                let mut f = c64(0.0, 0.0);
                let mut g = c64(0.0, 0.0);
                for d in 0..2i64 {
                    let r1 = 2 * s[0] + s[1] + 3 * p * d;
                    let r2 = 2 * s[1] + s[0] + 3 * p * d;
                    f += thetas.eval(3 * p, r1, 1, w1)?
                        * phi_hat_a1(p, s[1] - p * d, tau, w1, &inner)?;
                    f += thetas.eval(3 * p, r2, 1, w1)?
                        * phi_hat_a1(p, s[0] - p * d, tau, w1, &inner)?;
                    g += thetas.eval(3 * p, r1, 0, w1)?
                        * psi_hat_a1(p, s[1] - p * d, tau, w1, &inner)?;
                    g += thetas.eval(3 * p, r2, 0, w1)?
                        * psi_hat_a1(p, s[0] - p * d, tau, w1, &inner)?;
                }
                Ok(f + g / (4.0 * PI * pf * sq1 * sq1))
            };
            let (v, err) = crate::numerics::quad_geodesic_raw(
                &mut kernel,
                &path,
                SingularPower::Half,
                budget.quad_points,
            )?;
            let lat = QuadraticLattice::a_n(2, p)?;
            let shift = mu_shift(&lat, s)?;
            let lin = weighted_lattice_theta(
                &lat,
                &shift,
                &Poly::linear(&[rat_i(1), rat_i(1)]),
                torder,
            )?;
            let (lv, _) = lin.eval(tau)?;
            Ok((lv * (1.0 / 3.0 + 3.0f64.sqrt() / PI) + (6.0 * pf).sqrt() * v, err))
        }
        (3, FamilyKind::Psi) => {
            // 2 sqrt(p) int H(tau, w1)/sqrt(i(w1-tau)) dw1
            let s = &label.s;
            let inner = kernel_budget(budget);
            let mut thetas = ThetaCache::new(torder);
            let mut kernel = |w1: Complex64| -> Result<Complex64> {
                let mut acc = c64(0.0, 0.0);
                for d in 0..2i64 {
                    acc += thetas.eval(2 * p, s[0] + 2 * s[1] + s[2] + 2 * p * d, 1, w1)?
                        * psi_hat_a1(p, s[0] - p * d, tau, w1, &inner)?
                        * psi_hat_a1(p, s[2] - p * d, tau, w1, &inner)?;
                }
                for g in 0..3i64 {
                    acc += 3.0f64.sqrt()
                        * thetas.eval(6 * p, 3 * s[0] + 2 * s[1] + s[2] + 4 * p * g, 1, w1)?
                        * psi_hat_an(2, p, &[s[1] - p * g, s[2]], tau, w1, &inner)?;
                    acc += 3.0f64.sqrt()
                        * thetas.eval(6 * p, s[0] + 2 * s[1] + 3 * s[2] + 4 * p * g, 1, w1)?
                        * psi_hat_an(2, p, &[s[0], s[1] - p * g], tau, w1, &inner)?;
                }
                Ok(acc)
            };
            let (v, err) = crate::numerics::quad_geodesic_raw(
                &mut kernel,
                &path,
                SingularPower::Half,
                budget.quad_points,
            )?;
            Ok((2.0 * pf.sqrt() * v, err))
        }
        (3, FamilyKind::Phi) => {
            // 2 sqrt(p) int F/sqrt(i(w1-tau)) + (1/(2 pi sqrt(p))) R-int G (i(w1-tau))^{-3/2}
            let s = &label.s;
            let inner = kernel_budget(budget);
            let mut thetas = ThetaCache::new(torder);
            let mut f_kernel = |w1: Complex64| -> Result<Complex64> {
                let mut acc = c64(0.0, 0.0);
                for d in 0..2i64 {
                    let t1 = thetas.eval(2 * p, s[0] + 2 * s[1] + s[2] + 2 * p * d, 1, w1)?;
                    let psi_a = psi_hat_a1(p, s[0] - p * d, tau, w1, &inner)?;
                    let psi_b = psi_hat_a1(p, s[2] - p * d, tau, w1, &inner)?;
                    let phi_a = phi_hat_a1(p, s[0] - p * d, tau, w1, &inner)?;
                    let phi_b = phi_hat_a1(p, s[2] - p * d, tau, w1, &inner)?;
                    acc += t1 * (psi_a * phi_b + phi_a * psi_b);
                }
                for g in 0..3i64 {
                    acc += 3.0f64.sqrt()
                        * thetas.eval(6 * p, 3 * s[0] + 2 * s[1] + s[2] + 4 * p * g, 1, w1)?
                        * phi_hat_a2(p, &[s[1] - p * g, s[2]], tau, w1, &inner)?;
                    acc += 3.0f64.sqrt()
                        * thetas.eval(6 * p, s[0] + 2 * s[1] + 3 * s[2] + 4 * p * g, 1, w1)?
                        * phi_hat_a2(p, &[s[0], s[1] - p * g], tau, w1, &inner)?;
                }
                Ok(acc)
            };
            let (fv, ferr) = crate::numerics::quad_geodesic_raw(
                &mut f_kernel,
                &path,
                SingularPower::Half,
                budget.quad_points,
            )?;
            let mut g_kernel = |w1: Complex64| -> Result<Complex64> {
                let mut acc = c64(0.0, 0.0);
                for d in 0..2i64 {
                    acc += 2.0
                        * thetas.eval(2 * p, s[0] + 2 * s[1] + s[2] + 2 * p * d, 0, w1)?
                        * psi_hat_a1(p, s[0] - p * d, tau, w1, &inner)?
                        * psi_hat_a1(p, s[2] - p * d, tau, w1, &inner)?;
                }
                for g in 0..3i64 {
                    acc += 3.0f64.sqrt()
                        * thetas.eval(6 * p, 3 * s[0] + 2 * s[1] + s[2] + 4 * p * g, 0, w1)?
                        * psi_hat_an(2, p, &[s[1] - p * g, s[2]], tau, w1, &inner)?;
                    acc += 3.0f64.sqrt()
                        * thetas.eval(6 * p, s[0] + 2 * s[1] + 3 * s[2] + 4 * p * g, 0, w1)?
                        * psi_hat_an(2, p, &[s[0], s[1] - p * g], tau, w1, &inner)?;
                }
                Ok(acc)
            };
            let (gv, gerr) = crate::numerics::reg_integral_32(&mut g_kernel, tau, w, budget)?;
            Ok((2.0 * pf.sqrt() * fv + gv / (2.0 * PI * pf.sqrt()), ferr + gerr))
        }
        _ => Err(Error::InvalidArgument("family rank must be 1..=3".into())),
    }
}

// ---------------------------------------------------------------------------
// A_2 modular data
// ---------------------------------------------------------------------------

/// The modular data of the sqrt(p) A_2 class family: the 3p^2 x 3p^2 unitary
/// S matrix and the diagonal of T, ordered as [`all_classes`].
pub fn modular_data_a2(p: i64) -> Result<(Vec<Vec<Complex64>>, Vec<Complex64>)> {
    if p < 2 {
        return Err(Error::InvalidArgument("modular data requires p >= 2".into()));
    }
    let lat = QuadraticLattice::a_n(2, p)?;
    let classes = all_classes(&lat)?;
    let labels: Vec<Vec<i64>> = classes.iter().map(|c| c.label.clone().unwrap()).collect();
    let dim = labels.len();
    let norm = 1.0 / (3.0f64.sqrt() * p as f64);
    let mut s_mat = vec![vec![c64(0.0, 0.0); dim]; dim];
    for (i, r) in labels.iter().enumerate() {
        for (j, s) in labels.iter().enumerate() {
            let phase = -2.0 * PI
                * (2 * r[0] * s[0] + r[1] * s[0] + r[0] * s[1] + 2 * r[1] * s[1]) as f64
                / (3.0 * p as f64);
            s_mat[i][j] = norm * c64(0.0, phase).exp();
        }
    }
    let t_diag: Vec<Complex64> = labels
        .iter()
        .map(|r| {
            let q = (r[0] * r[0] + r[0] * r[1] + r[1] * r[1]) as f64 / (3.0 * p as f64);
            c64(0.0, 2.0 * PI * (q - 1.0 / 12.0)).exp()
        })
        .collect();
    Ok((s_mat, t_diag))
}

// ---------------------------------------------------------------------------
// proof-internal series identities
// ---------------------------------------------------------------------------

/// P_{r1,r2} = sum_{gamma mod 3} (theta_{6p, r1+4 gamma p} theta^{[1]}_{3p, r2+2 gamma p}
///             - theta^{[1]}_{6p, r1+4 gamma p} theta_{3p, r2+2 gamma p}),
/// defined for r1 + r2 = 0 mod 3.
pub fn p_pair_series(p: i64, r1: i64, r2: i64, order: Rational) -> Result<QSeries> {
    if (r1 + r2).rem_euclid(3) != 0 {
        return Err(Error::InvalidArgument("p_pair_series needs r1 + r2 = 0 mod 3".into()));
    }
    let mut out = QSeries::zero(order);
    for g in 0..3i64 {
        let a0 = unary_theta(6 * p, r1 + 4 * g * p, 0, order)?;
        let a1 = unary_theta(6 * p, r1 + 4 * g * p, 1, order)?;
        let b0 = unary_theta(3 * p, r2 + 2 * g * p, 0, order)?;
        let b1 = unary_theta(3 * p, r2 + 2 * g * p, 1, order)?;
        out = out.add(&a0.mul(&b1)?).sub(&a1.mul(&b0)?);
    }
    Ok(out)
}

/// t_{1,s,delta} = 3 sum_{gamma} (theta_{6p,3s1+2s2+s3+4 gamma p} theta^{[1]}_{3p,2s2+s3-2 gamma p+3 delta p} - ...).
pub fn t1_series(p: i64, s: &[i64], delta: i64, order: Rational) -> Result<QSeries> {
    let mut out = QSeries::zero(order);
    for g in 0..3i64 {
        let r1 = 3 * s[0] + 2 * s[1] + s[2] + 4 * g * p;
        let r2 = 2 * s[1] + s[2] - 2 * g * p + 3 * delta * p;
        let a0 = unary_theta(6 * p, r1, 0, order)?;
        let a1 = unary_theta(6 * p, r1, 1, order)?;
        let b0 = unary_theta(3 * p, r2, 0, order)?;
        let b1 = unary_theta(3 * p, r2, 1, order)?;
        out = out.add(&a0.mul(&b1)?).sub(&a1.mul(&b0)?);
    }
    Ok(out.scale_rational(rat_i(3)))
}

/// t_{2,s,delta} = 2 theta_{2p,s1+2s2+s3+2 delta p} theta^{[1]}_{p,s1-delta p}
///                 - theta^{[1]}_{2p,s1+2s2+s3+2 delta p} theta_{p,s1-delta p}.
pub fn t2_series(p: i64, s: &[i64], delta: i64, order: Rational) -> Result<QSeries> {
    let r1 = s[0] + 2 * s[1] + s[2] + 2 * delta * p;
    let r2 = s[0] - delta * p;
    let a0 = unary_theta(2 * p, r1, 0, order)?;
    let a1 = unary_theta(2 * p, r1, 1, order)?;
    let b0 = unary_theta(p, r2, 0, order)?;
    let b1 = unary_theta(p, r2, 1, order)?;
    Ok(a0.mul(&b1)?.scale_rational(rat_i(2)).sub(&a1.mul(&b0)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::completion::{apply_raising, psi_hat, CompletionPoint};
    use crate::qseries::{false_boundary, Mode};

    fn budget() -> TruncationBudget {
        TruncationBudget::default()
    }

    #[test]
    fn a1_family_matches_generic_engine() {
        let label = FamilyLabel::new(1, 2, vec![1], FamilyKind::Psi).unwrap();
        let spec = family_spec(&label).unwrap();
        let tau = c64(0.0, 0.5);
        let w = c64(0.0, 2.0);
        let fam = psi_hat_family(1, 2, &[1], tau, w, &budget()).unwrap();
        let (gen, _) =
            psi_hat(&spec, &CompletionPoint::origin(1, tau, w), &budget()).unwrap();
        assert!((fam - gen).norm() < 1e-10, "{fam} vs {gen}");
    }

    #[test]
    fn a1_zero_class_cancels() {
        let v = psi_hat_family(1, 2, &[0], c64(0.0, 0.5), c64(0.0, 2.0), &budget()).unwrap();
        assert!(v.norm() < 1e-10, "{v}");
    }

    #[test]
    fn a2_family_matches_generic_engine() {
        let label = FamilyLabel::new(2, 2, vec![1, 0], FamilyKind::Psi).unwrap();
        let spec = family_spec(&label).unwrap();
        let tau = c64(0.0, 0.5);
        let w = c64(0.3, 1.2);
        let mut b = budget();
        b.lattice_cutoff = 40.0;
        let fam = psi_hat_family(2, 2, &[1, 0], tau, w, &b).unwrap();
        let (gen, _) = psi_hat(&spec, &CompletionPoint::origin(2, tau, w), &b).unwrap();
        assert!((fam - gen).norm() < 1e-9, "{fam} vs {gen}");
    }

    #[test]
    fn a2_small_w_minus_tau_limit() {
        // psi-hat -> (1/3) Theta as w -> tau
        let tau = c64(0.0, 0.8);
        let w = tau + c64(0.0, 1e-3);
        let v = psi_hat_family(2, 2, &[0, 0], tau, w, &budget()).unwrap();
        let lat = QuadraticLattice::a_n(2, 2).unwrap();
        let theta = lattice_theta(&lat, &ConjugacyClass::zero(2), rat_i(40)).unwrap();
        let (tv, _) = theta.eval(tau).unwrap();
        assert!((v - tv / 3.0).norm() < 1e-3, "{v} vs {}", tv / 3.0);
        // and the exact w = tau branch
        let at = psi_hat_family(2, 2, &[0, 0], tau, tau, &budget()).unwrap();
        assert!((at - tv / 3.0).norm() < 1e-12);
    }

    #[test]
    fn phi_a1_matches_raising_route() {
        let label = FamilyLabel::new(1, 2, vec![1], FamilyKind::Phi).unwrap();
        let spec = family_spec(&label).unwrap();
        let tau = c64(0.0, 0.5);
        let w = c64(0.0, 2.0);
        let fam = phi_hat_a1(2, 1, tau, w, &budget()).unwrap();
        let (raised, _) = apply_raising(&spec, tau, w, &spec.insertion, &budget()).unwrap();
        assert!((fam - raised).norm() < 1e-8, "{fam} vs {raised}");
    }

    #[test]
    fn phi_a2_matches_raising_route() {
        let label = FamilyLabel::new(2, 2, vec![1, 0], FamilyKind::Phi).unwrap();
        let spec = family_spec(&label).unwrap();
        let tau = c64(0.0, 0.6);
        let w = c64(0.0, 1.8);
        let mut b = budget();
        b.lattice_cutoff = 40.0;
        let fam = phi_hat_a2(2, &[1, 0], tau, w, &b).unwrap();
        let (raised, _) = apply_raising(&spec, tau, w, &spec.insertion, &b).unwrap();
        assert!((fam - raised).norm() < 1e-8, "{fam} vs {raised}");
    }

    #[test]
    fn phi_a2_small_w_minus_tau_limit() {
        let tau = c64(0.0, 0.8);
        let w = tau + c64(0.0, 1e-3);
        let v = phi_hat_a2(2, &[1, 0], tau, w, &budget()).unwrap();
        let lat = QuadraticLattice::a_n(2, 2).unwrap();
        let shift = mu_shift(&lat, &[1, 0]).unwrap();
        let lin = weighted_lattice_theta(
            &lat,
            &shift,
            &Poly::linear(&[rat_i(1), rat_i(1)]),
            rat_i(40),
        )
        .unwrap();
        let (lv, _) = lin.eval(tau).unwrap();
        let expect = lv * (1.0 / 3.0 + 3.0f64.sqrt() / PI);
        assert!((v - expect).norm() < 2e-3, "{v} vs {expect}");
    }

    #[test]
    fn phi_a3_correction_block_is_finite() {
        let mut b = budget();
        b.lattice_cutoff = 25.0;
        let v = phi_hat_a3(4, &[1, 0, 0], c64(0.0, 0.5), c64(0.0, 2.0), &b).unwrap();
        assert!(v.norm().is_finite() && v.norm() > 0.0);
    }

    #[test]
    fn boundary_families_match_generic_false_boundary() {
        let order = rat_i(12);
        let cases: Vec<FamilyLabel> = vec![
            FamilyLabel::new(1, 2, vec![1], FamilyKind::Psi).unwrap(),
            FamilyLabel::new(1, 3, vec![0], FamilyKind::Phi).unwrap(),
            FamilyLabel::new(2, 2, vec![0, 0], FamilyKind::Psi).unwrap(),
            FamilyLabel::new(2, 2, vec![3, 1], FamilyKind::Psi).unwrap(),
            FamilyLabel::new(2, 2, vec![1, 1], FamilyKind::Phi).unwrap(),
            FamilyLabel::new(3, 3, vec![3, 1, 1], FamilyKind::Psi).unwrap(),
            FamilyLabel::new(3, 3, vec![3, 1, 1], FamilyKind::Phi).unwrap(),
            FamilyLabel::new(3, 2, vec![1, 1, 0], FamilyKind::Psi).unwrap(),
        ];
        for label in cases {
            let explicit = boundary_family(&label, order).unwrap();
            let generic =
                false_boundary(&family_spec(&label).unwrap(), order, Mode::Exact).unwrap();
            assert!(
                explicit.eq_to_order(&generic, order),
                "boundary mismatch for A_{} {:?} {:?}",
                label.n,
                label.s,
                label.kind
            );
        }
    }

    #[test]
    fn a3_boundary_with_arcsin_correction_has_tag() {
        let label = FamilyLabel::new(3, 3, vec![3, 1, 1], FamilyKind::Psi).unwrap();
        let b = boundary_family(&label, rat_i(8)).unwrap();
        let tagged = b.terms.values().any(|c| {
            matches!(c, Coeff::Exact(e)
                if e.parts.keys().any(|k| matches!(k, crate::qseries::ConstKey::AsinSqrt(_))))
        });
        assert!(tagged, "expected an arcsin-tagged correction");
    }

    #[test]
    fn a2_phi_boundary_is_pure_signed_linear_series() {
        let label = FamilyLabel::new(2, 3, vec![2, 1], FamilyKind::Phi).unwrap();
        let b = boundary_family(&label, rat_i(10)).unwrap();
        let plain = signed_lattice_series(2, 3, &[2, 1], true, rat_i(10)).unwrap();
        assert_eq!(b, plain);
    }

    #[test]
    fn eichler_a1_psi_matches_direct() {
        let tau = c64(0.0, 0.5);
        let w = c64(0.0, 2.0);
        let label = FamilyLabel::new(1, 2, vec![1], FamilyKind::Psi).unwrap();
        let (eich, _) = eichler_family(&label, tau, w, &budget()).unwrap();
        let direct = psi_hat_a1(2, 1, tau, w, &budget()).unwrap();
        assert!((eich - direct).norm() < 1e-8, "{eich} vs {direct}");
    }

    #[test]
    fn eichler_a1_phi_matches_direct() {
        let tau = c64(0.0, 0.5);
        let w = c64(0.0, 2.0);
        let label = FamilyLabel::new(1, 2, vec![1], FamilyKind::Phi).unwrap();
        let (eich, _) = eichler_family(&label, tau, w, &budget()).unwrap();
        let direct = phi_hat_a1(2, 1, tau, w, &budget()).unwrap();
        assert!((eich - direct).norm() < 1e-8, "{eich} vs {direct}");
    }

    #[test]
    fn eichler_a2_psi_matches_direct() {
        let tau = c64(0.0, 0.5);
        let w = c64(0.0, 2.0);
        let mut b = budget();
        b.lattice_cutoff = 35.0;
        let label = FamilyLabel::new(2, 2, vec![1, 0], FamilyKind::Psi).unwrap();
        let (eich, _) = eichler_family(&label, tau, w, &b).unwrap();
        let direct = psi_hat_an(2, 2, &[1, 0], tau, w, &b).unwrap();
        assert!((eich - direct).norm() < 1e-6, "{eich} vs {direct}");
    }

    #[test]
    fn eichler_a2_phi_matches_direct() {
        let tau = c64(0.0, 0.5);
        let w = c64(0.0, 2.0);
        let mut b = budget();
        b.lattice_cutoff = 35.0;
        let label = FamilyLabel::new(2, 2, vec![1, 0], FamilyKind::Phi).unwrap();
        let (eich, _) = eichler_family(&label, tau, w, &b).unwrap();
        let direct = phi_hat_a2(2, &[1, 0], tau, w, &b).unwrap();
        assert!((eich - direct).norm() < 1e-6, "{eich} vs {direct}");
    }

    #[test]
    fn small_gap_expansions_a1() {
        // psi-hat ~ -i sqrt(8 i p (w - tau)) theta^{[1]}_{p,s}(tau),
        // phi-hat ~ (i/pi) (2 i p (w - tau))^{-1/2} theta_{p,s}(tau):
        // the ratio converges at first order in (w - tau)
        let p = 2i64;
        let s = 1i64;
        let tau = c64(0.0, 0.7);
        let t1 = unary_theta(p, s, 1, rat_i(40)).unwrap();
        let t0 = unary_theta(p, s, 0, rat_i(40)).unwrap();
        let (t1v, _) = t1.eval(tau).unwrap();
        let (t0v, _) = t0.eval(tau).unwrap();
        let mut last_psi_err = f64::INFINITY;
        let mut last_phi_err = f64::INFINITY;
        for gap in [1e-2, 1e-3] {
            let w = tau + c64(0.0, gap);
            let sq = principal_sqrt_branch(tau, w);
            let psi = psi_hat_a1(p, s, tau, w, &budget()).unwrap();
            let lead_psi = -I * (8.0 * p as f64).sqrt() * sq * t1v;
            let err = (psi / lead_psi - 1.0).norm();
            assert!(err < 10.0 * gap, "psi expansion error {err} at gap {gap}");
            assert!(err < last_psi_err);
            last_psi_err = err;
            let phi = phi_hat_a1(p, s, tau, w, &budget()).unwrap();
            let lead_phi = I / PI / ((2.0 * p as f64).sqrt() * sq) * t0v;
            let err = (phi / lead_phi - 1.0).norm();
            assert!(err < 10.0 * gap, "phi expansion error {err} at gap {gap}");
            assert!(err < last_phi_err);
            last_phi_err = err;
        }
    }

    #[test]
    fn modular_data_a2_properties() {
        let (s, t) = modular_data_a2(2).unwrap();
        let dim = s.len();
        assert_eq!(dim, 12);
        // unitary: S S^dagger = 1
        for i in 0..dim {
            for j in 0..dim {
                let dot: Complex64 = (0..dim).map(|k| s[i][k] * s[j][k].conj()).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).norm() < 1e-12, "S S^dag at ({i},{j}) = {dot}");
            }
        }
        // symmetric
        for i in 0..dim {
            for j in 0..dim {
                assert!((s[i][j] - s[j][i]).norm() < 1e-13);
            }
        }
        // T at the zero class is e^{-2 pi i/12}
        assert!((t[0] - c64(0.0, -2.0 * PI / 12.0).exp()).norm() < 1e-14);
        // (ST)^3 = S^2
        let mul = |a: &Vec<Vec<Complex64>>, b: &Vec<Vec<Complex64>>| -> Vec<Vec<Complex64>> {
            (0..dim)
                .map(|i| {
                    (0..dim)
                        .map(|j| (0..dim).map(|k| a[i][k] * b[k][j]).sum())
                        .collect()
                })
                .collect()
        };
        let st: Vec<Vec<Complex64>> =
            (0..dim).map(|i| (0..dim).map(|j| s[i][j] * t[j]).collect()).collect();
        let st3 = mul(&mul(&st, &st), &st);
        let s2 = mul(&s, &s);
        for i in 0..dim {
            for j in 0..dim {
                assert!(
                    (st3[i][j] - s2[i][j]).norm() < 1e-10,
                    "(ST)^3 vs S^2 at ({i},{j}): {} vs {}",
                    st3[i][j],
                    s2[i][j]
                );
            }
        }
    }

    #[test]
    fn p_pair_antisymmetry_and_t_identities() {
        // P_{r1,r2} + P_{(r1+4r2)/3, (2r1-r2)/3} = 0 and t1 = -t2,
        // exactly to order 40 for p in {2, 3}
        let order = rat_i(40);
        for p in [2i64, 3] {
            for (r1, r2) in [(1i64, 2i64), (2, 4), (0, 3), (5, 1), (4, 2)] {
                if (r1 + r2) % 3 != 0 {
                    continue;
                }
                let a = p_pair_series(p, r1, r2, order).unwrap();
                let b = p_pair_series(p, (r1 + 4 * r2) / 3, (2 * r1 - r2) / 3, order).unwrap();
                assert!(
                    a.add(&b).truncate(order - rat_i(1)).is_zero(),
                    "P antisymmetry fails at p={p}, r=({r1},{r2})"
                );
            }
            for s in [[1i64, 0, 1], [2, 1, 0], [0, 1, 1]] {
                for delta in [0i64, 1] {
                    let t1 = t1_series(p, &s, delta, order).unwrap();
                    let t2 = t2_series(p, &s, delta, order).unwrap();
                    assert!(
                        t1.add(&t2).truncate(order - rat_i(1)).is_zero(),
                        "t1 + t2 != 0 at p={p}, s={s:?}, delta={delta}"
                    );
                }
            }
        }
    }
}
