//! Vacuum characters of W^0(p)_{A_n} for n = 1, 2, 3: the Kostant/Weyl
//! lattice-sum formula, the sign-function rewrites, and the completed
//! character built from the covariant raising operators.
//!
//! The pure lattice sum eta^n * ch is kept exact; the division by eta^n is
//! exact series division.

use num_complex::Complex64;
use num_traits::{One, Signed, Zero};
use std::f64::consts::PI;

use crate::completion::apply_raising;
use crate::generr::{FalseThetaSpec, Poly};
use crate::lattice::{kostant, weyl_group, ConjugacyClass, QuadraticLattice};
use crate::numerics::{c64, TruncationBudget, I};
use crate::qseries::{eta_pow, Coeff, QSeries};
use crate::rat::{rat, rat_i, rat_sign, rv_add, rv_scale, rv_sub, RatVec, Rational};
use crate::{Error, Result};

/// Defining data for a vacuum character computation.
#[derive(Clone, Copy, Debug)]
pub struct CharacterSpec {
    pub n: usize,
    pub p: i64,
}

impl CharacterSpec {
    pub fn new(n: usize, p: i64) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::InvalidArgument("character rank must be 1..=3".into()));
        }
        if p < n as i64 + 1 {
            return Err(Error::InvalidArgument(format!(
                "character scale requires p >= n + 1 (got n = {n}, p = {p})"
            )));
        }
        Ok(CharacterSpec { n, p })
    }
}

/// eta^n * ch[W^0(p)_{A_n}] as an exact q-series:
/// sum over w in W and alpha in A_n of
///   (-1)^{l(w)} K_n(w(alpha + rho) - rho) q^{p Q_n(alpha + (p-1)/p rho)}.
pub fn vacuum_character_direct(spec: CharacterSpec, order: Rational) -> Result<QSeries> {
    let CharacterSpec { n, p } = spec;
    let lat = QuadraticLattice::a_n(n, p)?;
    let rho = lat.weyl_vector();
    let shift = rv_scale(&rho, rat(p - 1, p));
    let group = weyl_group(n)?;
    let mut out = QSeries::zero(order);
    for v in lat.enumerate_points_exact(&shift, order)? {
        let alpha = rv_sub(&v, &shift);
        let alpha_rho = rv_add(&alpha, &rho);
        let mut coeff = 0i64;
        for w in &group {
            let arg = rv_sub(&w.apply(&alpha_rho), &rho);
            coeff += w.sign() * kostant(n, &arg)? as i64;
        }
        if coeff != 0 {
            out.add_term(lat.working_quad(&v)?, Coeff::from_int(coeff));
        }
    }
    Ok(out)
}

/// Exact division by eta^n: the full character ch = (eta^n ch) / eta^n.
pub fn divide_by_eta_pow(series: &QSeries, n: u32) -> Result<QSeries> {
    series.div(&eta_pow(n, series.order + Rational::one()))
}

/// The two-term sign-rewrite of eta^2 * ch[W^0(p)_{A_2}]:
/// (1/2) sum sgn(n1 + 1/p) sgn(n2 + 1/p) (n1 + n2 + 2/p) q^{pQ_2}
///   - sum sgn(n1 + 1/p) sgn(n2) (n1 + n2 + 1/p) q^{pQ_2}
/// over the cosets (p-1)/p (1,1) and (p-1)/p (1,0).
pub fn a2_two_term_display(p: i64, order: Rational) -> Result<QSeries> {
    let lat = QuadraticLattice::a_n(2, p)?;
    let eps = rat(1, p);
    let mut out = QSeries::zero(order);
    let shift1 = vec![rat(p - 1, p), rat(p - 1, p)];
    for v in lat.enumerate_points_exact(&shift1, order)? {
        let sign = rat_sign(v[0] + eps) * rat_sign(v[1] + eps);
        if sign == 0 {
            continue;
        }
        let c = (v[0] + v[1] + eps * rat_i(2)) * rat(sign, 2);
        out.add_term(lat.working_quad(&v)?, Coeff::from_rational(c));
    }
    let shift2 = vec![rat(p - 1, p), Rational::zero()];
    for v in lat.enumerate_points_exact(&shift2, order)? {
        let sign = rat_sign(v[0] + eps) * rat_sign(v[1]);
        if sign == 0 {
            continue;
        }
        let c = (v[0] + v[1] + eps) * rat_i(-sign);
        out.add_term(lat.working_quad(&v)?, Coeff::from_rational(c));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Kostant sums and sign insertions
// ---------------------------------------------------------------------------

/// sum_{w in W} (-1)^{l(w)} K_n(w(alpha) - rho) for alpha in A_n + rho.
pub fn weyl_kostant_sum(n: usize, alpha: &[Rational]) -> Result<i64> {
    let lat = QuadraticLattice::a_n(n, 1)?;
    let rho = lat.weyl_vector();
    let mut acc = 0i64;
    for w in weyl_group(n)? {
        let arg = rv_sub(&w.apply(alpha), &rho);
        if !arg.iter().all(|x| x.is_integer()) {
            return Err(Error::InvalidArgument("alpha must lie in A_n + rho".into()));
        }
        acc += w.sign() * kostant(n, &arg)? as i64;
    }
    Ok(acc)
}

/// The signed insertion polynomials of the Kostant rewrites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertionVariant {
    /// P_2 = sgn sgn (n1 + n2) or P_3 = sgn sgn sgn (4 n1 n2 n3 - n2),
    /// normalized by 1/4^{n-1}.
    P,
    /// T_3 = sgn sgn sgn (n1 - n2 + n3), raw Weyl sum (it vanishes).
    T,
}

fn p2_insertion(v: &[Rational]) -> Rational {
    rat_i(rat_sign(v[0]) * rat_sign(v[1])) * (v[0] + v[1])
}

fn p3_insertion(v: &[Rational]) -> Rational {
    rat_i(rat_sign(v[0]) * rat_sign(v[1]) * rat_sign(v[2]))
        * (rat_i(4) * v[0] * v[1] * v[2] - v[1])
}

fn t3_insertion(v: &[Rational]) -> Rational {
    rat_i(rat_sign(v[0]) * rat_sign(v[1]) * rat_sign(v[2])) * (v[0] - v[1] + v[2])
}

/// (1/4^{n-1}) sum_w (-1)^{l(w)} P_n(w(alpha)) for variant P;
/// sum_w (-1)^{l(w)} T_3(w(alpha)) for variant T (n = 3 only).
pub fn sign_insertion_sum(n: usize, alpha: &[Rational], variant: InsertionVariant) -> Result<Rational> {
    if !(2..=3).contains(&n) {
        return Err(Error::InvalidArgument("sign insertions exist for n = 2, 3".into()));
    }
    let mut acc = Rational::zero();
    for w in weyl_group(n)? {
        let img = w.apply(alpha);
        let val = match (n, variant) {
            (2, InsertionVariant::P) => p2_insertion(&img),
            (3, InsertionVariant::P) => p3_insertion(&img),
            (3, InsertionVariant::T) => t3_insertion(&img),
            _ => return Err(Error::InvalidArgument("variant T exists only for n = 3".into())),
        };
        acc += rat_i(w.sign()) * val;
    }
    Ok(match variant {
        InsertionVariant::P => acc / rat_i(4i64.pow(n as u32 - 1)),
        InsertionVariant::T => acc,
    })
}

/// The piecewise polynomial for sum_w (-1)^l K_3(w(alpha) - rho) on the
/// interior of the fundamental Weyl chamber; None outside.
pub fn kostant_piecewise_a3(alpha: &[Rational]) -> Option<Rational> {
    let (n1, n2, n3) = (alpha[0], alpha[1], alpha[2]);
    let two = rat_i(2);
    // interior: B(alpha, alpha_j) > 0
    if !(two * n1 - n2).is_positive()
        || !(two * n2 - n1 - n3).is_positive()
        || !(two * n3 - n2).is_positive()
    {
        return None;
    }
    let half = rat(1, 2);
    let v = if n1 > n2 {
        half * (two * n2 - n1 - n3) * (two * n3 - n2) * (n2 + n3 - n1)
    } else if n3 > n2 {
        half * (two * n1 - n2) * (two * n2 - n1 - n3) * (n1 + n2 - n3)
    } else if n2 > n1 && n1 >= n3 {
        half * (n2 - two * n3)
            * (rat_i(3) * n1 * n1 + two * n2 * n2 + n3 * n3
                - rat_i(5) * n1 * n2
                - n2 * n3
                - Rational::one())
    } else if n2 > n3 && n3 >= n1 {
        half * (n2 - two * n1)
            * (n1 * n1 + two * n2 * n2 + rat_i(3) * n3 * n3
                - n1 * n2
                - rat_i(5) * n2 * n3
                - Rational::one())
    } else {
        return None;
    };
    Some(v)
}

// ---------------------------------------------------------------------------
// the A_3 sign form
// ---------------------------------------------------------------------------

/// The eight shift vectors of the A_3 rewrite with their weights epsilon.
pub fn a3_shift_set() -> Vec<(RatVec, i64)> {
    let v = |a: Rational, b: Rational, c: Rational| vec![a, b, c];
    vec![
        (v(rat(3, 2), rat_i(2), rat(3, 2)), 1),
        (v(rat(1, 2), rat_i(2), rat(1, 2)), 1),
        (v(rat(3, 2), rat_i(0), rat(1, 2)), 2),
        (v(rat(3, 2), rat_i(1), rat(-1, 2)), 2),
        (v(rat(3, 2), rat_i(1), rat(3, 2)), -1),
        (v(rat(1, 2), rat_i(-1), rat(1, 2)), -1),
        (v(rat(3, 2), rat_i(0), rat(-1, 2)), -2),
        (v(rat(3, 2), rat_i(2), rat(1, 2)), -2),
    ]
}

/// eta^3 * ch[W^0(p)_{A_3}] through the shifted sign form, valid for p >= 4:
/// (1/8) sum_{r in S} eps(r) sum_{n in Z^3 - r/p + (1/2,0,1/2)}
///   sgn(n1) sgn(n2) sgn(n3) (n2 + r2/p)(4(n1 + r1/p)(n3 + r3/p) - 1) q^{pQ_3(n)}.
pub fn vacuum_character_a3_signform(p: i64, order: Rational) -> Result<QSeries> {
    if p < 4 {
        return Err(Error::InvalidArgument("the A_3 sign form requires p >= 4".into()));
    }
    let lat = QuadraticLattice::a_n(3, p)?;
    let base = vec![rat(1, 2), Rational::zero(), rat(1, 2)];
    let mut out = QSeries::zero(order);
    for (r, eps) in a3_shift_set() {
        let nu = rv_scale(&r, rat(1, p));
        let shift = rv_sub(&base, &nu);
        for v in lat.enumerate_points_exact(&shift, order)? {
            let sign = rat_sign(v[0]) * rat_sign(v[1]) * rat_sign(v[2]);
            if sign == 0 {
                continue;
            }
            let c = (v[1] + nu[1])
                * (rat_i(4) * (v[0] + nu[0]) * (v[2] + nu[2]) - Rational::one())
                * rat(sign * eps, 8);
            out.add_term(lat.working_quad(&v)?, Coeff::from_rational(c));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// the completed A_3 character
// ---------------------------------------------------------------------------

/// The cubic insertion (x2 + nu2)(4(x1 + nu1)(x3 + nu3) - 1) realizing the
/// covariant operator of the completed character.
pub fn a3_insertion(nu: &[Rational]) -> Poly {
    let x1 = Poly::coordinate(3, 0).add(&Poly::constant(3, nu[0]));
    let x2 = Poly::coordinate(3, 1).add(&Poly::constant(3, nu[1]));
    let x3 = Poly::coordinate(3, 2).add(&Poly::constant(3, nu[2]));
    let prod = x1.mul(&x3).scale(rat_i(4)).add(&Poly::constant(3, rat_i(-1)));
    x2.mul(&prod)
}

/// The completed vacuum character of W^0(p)_{A_3}:
/// (1/(8 eta(tau)^3)) sum_{r in S} eps(r) [D(r/p) Psi-hat_{..., (1/2,0,1/2) - r/p}].
pub fn completed_character_a3(
    p: i64,
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
) -> Result<Complex64> {
    if p < 4 {
        return Err(Error::InvalidArgument("the completed A_3 character requires p >= 4".into()));
    }
    let lat = QuadraticLattice::a_n(3, p)?;
    let betas = lat.dual_basis();
    let base = vec![rat(1, 2), Rational::zero(), rat(1, 2)];
    let mut acc = c64(0.0, 0.0);
    for (r, eps) in a3_shift_set() {
        let nu = rv_scale(&r, rat(1, p));
        let shift = rv_sub(&base, &nu);
        let spec = FalseThetaSpec::new(
            lat.clone(),
            ConjugacyClass::from_shift(shift),
            vec![Rational::zero(); 3],
            betas.clone(),
            Some(a3_insertion(&nu)),
        )?;
        let (v, _) = apply_raising(&spec, tau, w, &spec.insertion, budget)?;
        acc += eps as f64 * v;
    }
    let eta3 = crate::qseries::eta_pow(3, rat_i(60));
    let (ev, _) = eta3.eval(tau)?;
    Ok(acc / (8.0 * ev))
}

/// The formal D(nu) insertion with all operator parts sent to zero:
/// nu2 (4 nu1 nu3 - 1), the classical coefficient.
pub fn a3_insertion_operator_free(nu: &[Rational]) -> Rational {
    nu[1] * (rat_i(4) * nu[0] * nu[2] - Rational::one())
}

// ---------------------------------------------------------------------------
// the A_2 character as a psi/phi combination
// ---------------------------------------------------------------------------

/// Derive the linear combination eta^2 ch = sum_i (a_i phi_{s_i} + b_i psi_{s_i})
/// over the two classes produced by the sign rewrite, by solving on leading
/// coefficients, then report the combination. Coefficients are exact.
pub struct A2Combination {
    pub classes: [Vec<i64>; 2],
    /// (phi coefficient, psi coefficient) per class.
    pub coefficients: [(Rational, Rational); 2],
}

pub fn derive_a2_combination(p: i64, order: Rational) -> Result<(A2Combination, bool)> {
    use crate::families::{boundary_family, FamilyKind, FamilyLabel};
    let target = vacuum_character_direct(CharacterSpec::new(2, p)?, order)?;
    let s1 = vec![p - 1, p - 1];
    let s2 = vec![3 * p - 2, 1];
    let basis: Vec<QSeries> = [
        (s1.clone(), FamilyKind::Phi),
        (s1.clone(), FamilyKind::Psi),
        (s2.clone(), FamilyKind::Phi),
        (s2.clone(), FamilyKind::Psi),
    ]
    .into_iter()
    .map(|(s, kind)| {
        boundary_family(&FamilyLabel::new(2, p, s, kind)?, order)
    })
    .collect::<Result<_>>()?;
    // collect exponents until the 4 x 4 system is solvable
    let mut exps: Vec<Rational> = target.terms.keys().copied().collect();
    for b in &basis {
        exps.extend(b.terms.keys().copied());
    }
    exps.sort();
    exps.dedup();
    let coeff_of = |s: &QSeries, e: Rational| -> Rational {
        match s.coefficient(e) {
            Coeff::Exact(c) => c.as_rational().unwrap_or_else(Rational::zero),
            Coeff::Numeric(_) => Rational::zero(),
        }
    };
    // solve with the first linearly independent rows
    let mut rows: Vec<(Vec<Rational>, Rational)> = Vec::new();
    for &e in &exps {
        let row: Vec<Rational> = basis.iter().map(|b| coeff_of(b, e)).collect();
        if row.iter().all(|c| c.is_zero()) {
            continue;
        }
        rows.push((row, coeff_of(&target, e)));
        if rows.len() >= 4 {
            if let Some(sol) = solve_exact_4x4(&rows) {
                let combo = A2Combination {
                    classes: [s1.clone(), s2.clone()],
                    coefficients: [(sol[0], sol[1]), (sol[2], sol[3])],
                };
                // verify the whole series
                let mut recon = QSeries::zero(order);
                for (b, c) in basis.iter().zip(&sol) {
                    recon = recon.add(&b.scale_rational(*c));
                }
                let ok = recon.eq_to_order(&target, order);
                return Ok((combo, ok));
            }
        }
    }
    Err(Error::InvalidArgument("combination system is singular".into()))
}

fn solve_exact_4x4(rows: &[(Vec<Rational>, Rational)]) -> Option<Vec<Rational>> {
    // Gaussian elimination on the last 4+ rows collected
    let m = rows.len();
    if m < 4 {
        return None;
    }
    let mut a: Vec<Vec<Rational>> = rows.iter().map(|(r, _)| r.clone()).collect();
    let mut b: Vec<Rational> = rows.iter().map(|(_, v)| *v).collect();
    let mut used = vec![false; m];
    for col in 0..4 {
        let pivot = (0..m).find(|&r| !used[r] && !a[r][col].is_zero())?;
        used[pivot] = true;
        let pv = a[pivot][col];
        for r in 0..m {
            if r != pivot && !a[r][col].is_zero() {
                let f = a[r][col] / pv;
                for c in 0..4 {
                    let v = a[pivot][c];
                    a[r][c] -= f * v;
                }
                let v = b[pivot];
                b[r] -= f * v;
            }
        }
    }
    // back out the solution from the pivot rows
    let mut out = vec![Rational::zero(); 4];
    for col in 0..4 {
        let pivot = (0..m).find(|&r| used[r] && !a[r][col].is_zero())?;
        out[col] = b[pivot] / a[pivot][col];
        used[pivot] = false;
    }
    Some(out)
}

/// eta * ch for A_1: the unary signed theta series over Z + (p-1)/2p.
pub fn a1_character_series(p: i64, order: Rational) -> Result<QSeries> {
    let lat = QuadraticLattice::a_n(1, p)?;
    let mut out = QSeries::zero(order);
    for v in lat.enumerate_points_exact(&[rat(p - 1, 2 * p)], order)? {
        let s = rat_sign(v[0]);
        if s != 0 {
            out.add_term(lat.working_quad(&v)?, Coeff::from_int(s));
        }
    }
    Ok(out)
}

pub use crate::qseries::eta_pow as eta_power_series;

#[allow(dead_code)]
fn unused_imports_guard() {
    let _ = (PI, I);
}
