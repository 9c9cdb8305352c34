//! SU(3) Z-hat invariants of Brieskorn spheres and their reduction to A_2
//! false modular forms.
//!
//! The direct form is a chi-weighted triple q-series; the reduced form is a
//! 64-term combination of the signed linear lattice sums G_mu, which in turn
//! are combinations of the depth-two families phi/psi on sqrt(P) A_2.

use num_integer::Integer;
use num_traits::Signed;

use crate::families::{boundary_family, FamilyKind, FamilyLabel};
use crate::lattice::{weyl_group, QuadraticLattice};
use crate::qseries::{Coeff, QSeries};
use crate::rat::{rat, rat_i, rat_sign, rat_to_f64, RatVec, Rational};
use crate::{Error, Result};

/// A Brieskorn sphere datum: pairwise coprime exponents with
/// 1/P1 + 1/P2 + 1/P3 < 1.
#[derive(Clone, Debug)]
pub struct BrieskornSpec {
    pub exponents: [i64; 3],
    pub big_p: i64,
    pub ells: [i64; 4],
    /// r_j = (ell_j - P) / (2P).
    pub residues: [Rational; 4],
}

impl BrieskornSpec {
    pub fn new(p1: i64, p2: i64, p3: i64) -> Result<Self> {
        for p in [p1, p2, p3] {
            if p < 2 {
                return Err(Error::InvalidArgument("exponents must be >= 2".into()));
            }
        }
        if p1.gcd(&p2) != 1 || p1.gcd(&p3) != 1 || p2.gcd(&p3) != 1 {
            return Err(Error::InvalidArgument("exponents must be pairwise coprime".into()));
        }
        let big_p = p1 * p2 * p3;
        // 1/P1 + 1/P2 + 1/P3 < 1 <=> P2 P3 + P1 P3 + P1 P2 < P1 P2 P3
        let s = p2 * p3 + p1 * p3 + p1 * p2;
        if s >= big_p {
            return Err(Error::InvalidArgument(
                "exponents must satisfy 1/P1 + 1/P2 + 1/P3 < 1".into(),
            ));
        }
        let q = |e1: i64, e2: i64, e3: i64| big_p - e1 * p2 * p3 - e2 * p1 * p3 - e3 * p1 * p2;
        let ells = [q(1, 1, 1), q(-1, -1, 1), q(1, -1, -1), q(-1, 1, -1)];
        for l in ells {
            if !(0 < l && l < 2 * big_p) {
                return Err(Error::InvalidArgument("ell values out of (0, 2P)".into()));
            }
        }
        let residues = ells.map(|l| rat(l - big_p, 2 * big_p));
        Ok(BrieskornSpec { exponents: [p1, p2, p3], big_p, ells, residues })
    }

    /// chi_{2P}(n): the sum of the four +-1 residue indicators.
    pub fn chi_2p(&self, n: i64) -> i64 {
        let two_p = 2 * self.big_p;
        let nm = n.rem_euclid(two_p);
        let mut acc = 0;
        for l in self.ells {
            if nm == l.rem_euclid(two_p) {
                acc += 1;
            } else if nm == (-l).rem_euclid(two_p) {
                acc -= 1;
            }
        }
        acc
    }

    /// The exponent quadratic form of the direct series, in units of 1/(8P):
    /// 2 n12^2 + 2 n23^2 + 2 n13^2 + 2 n13 n23 + 2 n12 n23 - 2 n12 n13.
    pub fn exponent_numerator(n12: i64, n23: i64, n13: i64) -> i64 {
        2 * n12 * n12 + 2 * n23 * n23 + 2 * n13 * n13 + 2 * n13 * n23 + 2 * n12 * n23
            - 2 * n12 * n13
    }
}

/// The direct triple series for Z-hat_{SU(3)} to the given order.
pub fn zhat_direct(spec: &BrieskornSpec, order: Rational) -> Result<QSeries> {
    if !order.is_positive() {
        return Err(Error::InvalidArgument("order must be positive".into()));
    }
    let eight_p = rat_i(8 * spec.big_p);
    let cap = (rat_to_f64(order) * 8.0 * spec.big_p as f64).ceil() as i64;
    // the form dominates (n12^2 + n13^2) on the nonnegative octant
    let outer = (cap as f64).sqrt() as i64 + 1;
    let mut out = QSeries::zero(order);
    for n12 in 0..=outer {
        let c12 = spec.chi_2p(n12);
        if c12 == 0 {
            continue;
        }
        for n13 in 0..=outer {
            let c13 = spec.chi_2p(n13);
            if c13 == 0 {
                continue;
            }
            let base = 2 * n12 * n12 + 2 * n13 * n13 - 2 * n12 * n13;
            if base > cap {
                continue;
            }
            // solve 2 n23^2 + 2 n23 (n12 + n13) + base <= cap
            let b = n12 + n13;
            let disc = (b * b + 2 * (cap - base)) as f64;
            let n23_max = ((-(b as f64) + disc.sqrt()) / 2.0).floor() as i64 + 1;
            for n23 in 0..=n23_max {
                let c23 = spec.chi_2p(n23);
                if c23 == 0 {
                    continue;
                }
                let num = BrieskornSpec::exponent_numerator(n12, n23, n13);
                let e = rat_i(num) / eight_p;
                if e <= order {
                    out.add_term(e, Coeff::from_int(c12 * c13 * c23));
                }
            }
        }
    }
    Ok(out)
}

/// G_mu(tau) = sum over m in Z^2 + mu of sgn(m1) sgn(m2) B_2(rho, m - mu) q^{P Q_2(m)},
/// exact.
pub fn g_mu(mu: &[Rational], big_p: i64, order: Rational) -> Result<QSeries> {
    if mu.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: mu.len() });
    }
    for c in mu {
        if c.abs() >= rat_i(2) {
            return Err(Error::InvalidArgument("G_mu components must lie in (-2, 2)".into()));
        }
    }
    let lat = QuadraticLattice::a_n(2, big_p)?;
    let mut out = QSeries::zero(order);
    for m in lat.enumerate_points_exact(mu, order)? {
        let sign = rat_sign(m[0]) * rat_sign(m[1]);
        if sign == 0 {
            continue;
        }
        let lin = (m[0] - mu[0]) + (m[1] - mu[1]);
        out.add_term(lat.working_quad(&m)?, Coeff::from_rational(lin * rat_i(sign)));
    }
    Ok(out)
}

/// Z-hat through the 64-triple reduction:
/// (1/2) sum_{a in A^3} (G_{(a1+a2, a1+a3)} - 2 G_{(a1+a2, a1-a3)} + G_{(a1-a2, a1-a3)}).
pub fn zhat_reduced(spec: &BrieskornSpec, order: Rational) -> Result<QSeries> {
    let mut out = QSeries::zero(order);
    let r = &spec.residues;
    for a1 in r {
        for a2 in r {
            for a3 in r {
                let g1 = g_mu(&[*a1 + *a2, *a1 + *a3], spec.big_p, order)?;
                let g2 = g_mu(&[*a1 + *a2, *a1 - *a3], spec.big_p, order)?;
                let g3 = g_mu(&[*a1 - *a2, *a1 - *a3], spec.big_p, order)?;
                out = out.add(&g1).sub(&g2.scale_rational(rat_i(2))).add(&g3);
            }
        }
    }
    Ok(out.scale_rational(rat(1, 2)))
}

/// The Weyl-symmetrized combination over the A_2 Weyl group.
pub fn g_weyl_symmetrized(mu: &[Rational], big_p: i64, order: Rational) -> Result<QSeries> {
    let mut out = QSeries::zero(order);
    for w in weyl_group(2)? {
        let img: RatVec = w.apply(mu);
        out = out.add(&g_mu(&img, big_p, order)?.scale_rational(rat_i(w.sign())));
    }
    Ok(out)
}

/// Z-hat through the symmetrized remark form:
/// (1/4) sum_{a in A^3} GG_{(a1+a2, a1+a3)}
/// + (1/2)(GG_{(r1-r2, r1-r3)} + GG_{(r1-r2, r1-r4)} + GG_{(r1-r3, r1-r4)} + GG_{(r2-r3, r2-r4)}).
pub fn zhat_symmetrized(spec: &BrieskornSpec, order: Rational) -> Result<QSeries> {
    let r = &spec.residues;
    let mut main = QSeries::zero(order);
    for a1 in r {
        for a2 in r {
            for a3 in r {
                main = main.add(&g_weyl_symmetrized(&[*a1 + *a2, *a1 + *a3], spec.big_p, order)?);
            }
        }
    }
    let mut extra = QSeries::zero(order);
    for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
        extra = extra.add(&g_weyl_symmetrized(
            &[r[i] - r[j], r[i] - r[k]],
            spec.big_p,
            order,
        )?);
    }
    Ok(main.scale_rational(rat(1, 4)).add(&extra.scale_rational(rat(1, 2))))
}

/// The class label S(mu) = P (B_2(mu, alpha_1), B_2(mu, alpha_2)); integral
/// for the mu arising from Brieskorn data.
pub fn family_label_of_mu(mu: &[Rational], big_p: i64) -> Result<[i64; 2]> {
    let s1 = rat_i(big_p) * (rat_i(2) * mu[0] - mu[1]);
    let s2 = rat_i(big_p) * (rat_i(2) * mu[1] - mu[0]);
    if !s1.is_integer() || !s2.is_integer() {
        return Err(Error::InvalidArgument(format!(
            "S(mu) = ({s1}, {s2}) is not integral for this mu"
        )));
    }
    Ok([s1.to_integer(), s2.to_integer()])
}

/// Outcome of checking G_mu = phi_{P,S(mu)} - B_2(rho, mu) psi_{P,S(mu)}
/// against the exact G_mu series.
#[derive(Clone, Debug, serde::Serialize)]
pub struct FamilyIdentityReport {
    pub mu: [String; 2],
    pub label: Option<[i64; 2]>,
    pub max_coeff_distance: f64,
    pub holds: bool,
}

/// Compare G_mu with its phi/psi family combination (numeric mode, arcsin
/// tags resolved). Classes where the bookkeeping fails are reported, not
/// asserted.
pub fn g_as_family(mu: &[Rational], big_p: i64, order: Rational) -> Result<FamilyIdentityReport> {
    let mu_str = [format!("{}", mu[0]), format!("{}", mu[1])];
    let label = match family_label_of_mu(mu, big_p) {
        Ok(l) => l,
        Err(_) => {
            return Ok(FamilyIdentityReport {
                mu: mu_str,
                label: None,
                max_coeff_distance: f64::INFINITY,
                holds: false,
            })
        }
    };
    let phi = boundary_family(
        &FamilyLabel::new(2, big_p, label.to_vec(), FamilyKind::Phi)?,
        order,
    )?
    .to_numeric();
    let psi = boundary_family(
        &FamilyLabel::new(2, big_p, label.to_vec(), FamilyKind::Psi)?,
        order,
    )?
    .to_numeric();
    let b_rho_mu = mu[0] + mu[1];
    let combo = phi.sub(&psi.scale_rational(b_rho_mu).to_numeric());
    let exact = g_mu(mu, big_p, order)?.to_numeric();
    let dist = combo.max_coeff_distance(&exact, order);
    Ok(FamilyIdentityReport {
        mu: mu_str,
        label: Some(label),
        max_coeff_distance: dist,
        holds: dist < 1e-9,
    })
}

/// All mu values arising in the reduced Z-hat sum for this spec.
pub fn arising_mus(spec: &BrieskornSpec) -> Vec<[Rational; 2]> {
    let r = &spec.residues;
    let mut out: Vec<[Rational; 2]> = Vec::new();
    for a1 in r {
        for a2 in r {
            for a3 in r {
                for mu in [
                    [*a1 + *a2, *a1 + *a3],
                    [*a1 + *a2, *a1 - *a3],
                    [*a1 - *a2, *a1 - *a3],
                ] {
                    if !out.contains(&mu) {
                        out.push(mu);
                    }
                }
            }
        }
    }
    out
}

/// Run the family-identity check across every arising mu; the returned
/// reports include any flagged classes.
pub fn family_identity_survey(spec: &BrieskornSpec, order: Rational) -> Result<Vec<FamilyIdentityReport>> {
    arising_mus(spec)
        .iter()
        .map(|mu| g_as_family(mu, spec.big_p, order))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brieskorn_2_3_7_data() {
        let spec = BrieskornSpec::new(2, 3, 7).unwrap();
        assert_eq!(spec.big_p, 42);
        assert_eq!(spec.ells, [1, 71, 41, 55]);
        assert_eq!(spec.chi_2p(1), 1);
        assert_eq!(spec.chi_2p(-1), -1);
        assert_eq!(spec.chi_2p(0), 0);
        assert_eq!(spec.chi_2p(71), 1);
        assert_eq!(spec.chi_2p(84 - 41), -1);
    }

    #[test]
    fn constructor_rejects_bad_triples() {
        // the Poincare sphere fails the hyperbolicity assumption
        assert!(BrieskornSpec::new(2, 3, 5).is_err());
        assert!(BrieskornSpec::new(2, 4, 7).is_err());
        assert!(BrieskornSpec::new(1, 3, 7).is_err());
    }

    #[test]
    fn exponent_kernel_direction() {
        // the form vanishes along (t, -t, t); on the octant only t = 0 remains
        for t in 0..10 {
            assert_eq!(BrieskornSpec::exponent_numerator(t, -t, t), 0);
        }
        assert!(BrieskornSpec::exponent_numerator(1, 1, 1) > 0);
    }

    #[test]
    fn zhat_direct_leading_behavior() {
        let spec = BrieskornSpec::new(2, 3, 7).unwrap();
        let z = zhat_direct(&spec, rat_i(5)).unwrap();
        assert!(!z.is_zero());
        // the smallest admissible triple is (1, 1, 1) with all chi = +1:
        // exponent 8/(8 * 42) = 1/42
        let lead = z.leading_exponent().unwrap();
        assert_eq!(lead, rat(1, 42));
        match z.coefficient(lead) {
            Coeff::Exact(e) => assert_eq!(e.as_rational().unwrap(), rat_i(1)),
            _ => panic!(),
        }
        // no support below the first chi residue
        assert!(z.terms.keys().all(|e| *e >= lead));
    }

    #[test]
    fn g_mu_symmetries() {
        let order = rat_i(40);
        let big_p = 6;
        let mu = [rat(1, 3), rat(5, 6)];
        let g = g_mu(&mu, big_p, order).unwrap();
        let gm = g_mu(&[-mu[0], -mu[1]], big_p, order).unwrap();
        assert_eq!(g.neg(), gm, "G_mu = -G_{{-mu}}");
        let gs = g_mu(&[mu[1], mu[0]], big_p, order).unwrap();
        assert_eq!(g, gs, "G_mu = G_{{(mu2, mu1)}}");
        let gz = g_mu(&[rat_i(0), rat_i(0)], big_p, order).unwrap();
        assert!(gz.is_zero());
    }

    #[test]
    fn min_identity() {
        // 2 min(m1, m2) = (m1 + m2) - sgn(m1 - m2 + eps)(m1 - m2)
        for m1 in -50i64..=50 {
            for m2 in -50i64..=50 {
                for eps in [rat(-3, 10), rat(3, 10), rat_i(0)] {
                    let lhs = rat_i(2 * m1.min(m2));
                    let s = rat_sign(rat_i(m1 - m2) + eps);
                    let rhs = rat_i(m1 + m2) - rat_i(s) * rat_i(m1 - m2);
                    assert_eq!(lhs, rhs, "m = ({m1}, {m2}), eps = {eps}");
                }
            }
        }
    }

    #[test]
    fn direct_equals_reduced_2_3_7() {
        let spec = BrieskornSpec::new(2, 3, 7).unwrap();
        let order = rat_i(2);
        let direct = zhat_direct(&spec, order).unwrap();
        let reduced = zhat_reduced(&spec, order).unwrap();
        assert!(direct.eq_to_order(&reduced, order), "direct != reduced");
    }

    #[test]
    fn symmetrized_form_equals_reduced() {
        let spec = BrieskornSpec::new(2, 3, 7).unwrap();
        let order = rat_i(2);
        let reduced = zhat_reduced(&spec, order).unwrap();
        let sym = zhat_symmetrized(&spec, order).unwrap();
        assert!(reduced.eq_to_order(&sym, order), "symmetrized form mismatch");
    }

    #[test]
    fn family_identity_for_generic_mu() {
        let spec = BrieskornSpec::new(2, 3, 7).unwrap();
        // a generic arising mu: r_1 + r_2 etc.
        let r = &spec.residues;
        let mu = [r[0] + r[1], r[0] + r[2]];
        let rep = g_as_family(&mu, spec.big_p, rat_i(2)).unwrap();
        assert!(rep.label.is_some());
        assert!(rep.holds, "G_mu family identity fails: distance {}", rep.max_coeff_distance);
        // mu = 0 is trivially fine
        let rep = g_as_family(&[rat_i(0), rat_i(0)], spec.big_p, rat_i(2)).unwrap();
        assert!(rep.holds);
    }

    #[test]
    fn family_identity_survey_runs() {
        let spec = BrieskornSpec::new(2, 3, 7).unwrap();
        let reports = family_identity_survey(&spec, rat_i(1)).unwrap();
        assert_eq!(reports.len(), arising_mus(&spec).len());
        let flagged: Vec<_> = reports.iter().filter(|r| !r.holds).collect();
        // report, don't assert: flagged classes are allowed but must carry
        // enough information to identify them
        for f in &flagged {
            assert!(f.label.is_none() || f.max_coeff_distance.is_finite());
        }
    }
}
