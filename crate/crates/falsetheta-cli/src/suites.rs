//! The named verification suites behind `falsetheta verify`.
//!
//! Each check carries its residual and tolerance so the CLI can render
//! per-check pass/fail lines and machine-readable reports.

use num_complex::Complex64;
use std::rc::Rc;

use falsetheta::completion::{
    e2_completion, verify_transform, CompletionPoint, OpPoint, Operators, TransformKind,
    TransformVariant, ALL_RELATIONS,
};
use falsetheta::families::{eichler_family, eval_family, family_spec, FamilyKind, FamilyLabel};
use falsetheta::generr::FalseThetaSpec;
use falsetheta::lattice::{all_classes, QuadraticLattice};
use falsetheta::numerics::{c64, quad_geodesic_raw, GeodesicPath, SingularPower, TruncationBudget, I};
use falsetheta::qseries::{eta_pow, false_theta};
use falsetheta::rat::{rat, rat_i, rat_to_f64};
use falsetheta::Result;

#[derive(Clone, Debug, serde::Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Check { name: name.into(), passed: residual <= tolerance, residual, tolerance }
    }
}

/// Kostant identities on the box max|coord| <= half_width.
pub fn suite_kostant(half_width: i64) -> Result<Vec<Check>> {
    use falsetheta::characters::{
        kostant_piecewise_a3, sign_insertion_sum, weyl_kostant_sum, InsertionVariant,
    };
    let mut max_p_mismatch = 0.0f64;
    let mut max_t = 0.0f64;
    let mut max_piecewise = 0.0f64;
    let b = half_width;
    for i in -b..b {
        for j in -b..=b {
            for k in -b..b {
                let alpha = vec![rat(2 * i + 1, 2), rat_i(j), rat(2 * k + 1, 2)];
                let lhs = weyl_kostant_sum(3, &alpha)?;
                let rhs = sign_insertion_sum(3, &alpha, InsertionVariant::P)?;
                max_p_mismatch =
                    max_p_mismatch.max((rat_to_f64(rhs) - lhs as f64).abs());
                let t = sign_insertion_sum(3, &alpha, InsertionVariant::T)?;
                max_t = max_t.max(rat_to_f64(t).abs());
                if let Some(pw) = kostant_piecewise_a3(&alpha) {
                    max_piecewise = max_piecewise.max(rat_to_f64(pw) - lhs as f64).abs();
                }
            }
        }
    }
    Ok(vec![
        Check::new(format!("kostant-insertion-identity (box {b})"), max_p_mismatch, 0.0),
        Check::new(format!("alternating-linear-insertion-vanishes (box {b})"), max_t, 0.0),
        Check::new(format!("piecewise-polynomial-agreement (box {b})"), max_piecewise, 0.0),
    ])
}

fn family_members(n: usize, p: i64, kind: FamilyKind) -> Result<Vec<FalseThetaSpec>> {
    let lat = QuadraticLattice::a_n(n, p)?;
    all_classes(&lat)?
        .iter()
        .map(|c| family_spec(&FamilyLabel::new(n, p, c.label.clone().unwrap(), kind)?))
        .collect()
}

fn explicit_eval(
    spec: &FalseThetaSpec,
    kind: FamilyKind,
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
) -> Result<Complex64> {
    let label = FamilyLabel::new(
        spec.lattice.rank,
        spec.lattice.scale,
        spec.class.label.clone().expect("family class"),
        kind,
    )?;
    eval_family(&label, tau, w, budget)
}

/// T and S laws for the A_1 and A_2 families plus the completed Eisenstein
/// weight-2 law.
pub fn suite_modular(extra_p: Option<i64>) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let pt1 = |rank: usize| CompletionPoint::origin(rank, c64(0.0, 0.5), c64(0.0, 2.0));
    let budget = TruncationBudget { lattice_cutoff: 60.0, ..Default::default() };
    let mut ps = vec![2i64];
    if let Some(p) = extra_p {
        if !ps.contains(&p) {
            ps.push(p);
        }
    }
    for &p in &ps {
        for kind in [FamilyKind::Psi, FamilyKind::Phi] {
            let family = family_members(1, p, kind)?;
            let (t_res, s_res) = transform_residuals(&family, kind, &pt1(1), &budget)?;
            let tag = match kind {
                FamilyKind::Psi => "psi",
                FamilyKind::Phi => "phi",
            };
            checks.push(Check::new(format!("T-law A1 {tag} p={p}"), t_res, 1e-9));
            checks.push(Check::new(format!("S-law A1 {tag} p={p}"), s_res, 1e-7));
        }
    }
    for kind in [FamilyKind::Psi, FamilyKind::Phi] {
        let family = family_members(2, 2, kind)?;
        let (t_res, s_res) = transform_residuals(&family, kind, &pt1(2), &budget)?;
        let tag = match kind {
            FamilyKind::Psi => "psi",
            FamilyKind::Phi => "phi",
        };
        checks.push(Check::new(format!("T-law A2 {tag} p=2"), t_res, 1e-9));
        checks.push(Check::new(format!("S-law A2 {tag} p=2"), s_res, 1e-7));
    }
    // Eisenstein completion: E2-hat(-1/tau, -1/w) = tau^2 E2-hat(tau, w)
    let (tau, w) = (c64(0.0, 0.5), c64(0.0, 2.0));
    let lhs = e2_completion(-1.0 / tau, -1.0 / w, rat_i(40))?;
    let rhs = tau * tau * e2_completion(tau, w, rat_i(40))?;
    checks.push(Check::new("weight-2 law for completed E2", (lhs - rhs).norm(), 1e-8));
    Ok(checks)
}

/// Max T/S residuals over a full class family, using the explicit family
/// evaluators (equal to the raised objects; cross-checked separately).
pub fn transform_residuals(
    family: &[FalseThetaSpec],
    kind: FamilyKind,
    pt: &CompletionPoint,
    budget: &TruncationBudget,
) -> Result<(f64, f64)> {
    let variant = match kind {
        FamilyKind::Psi => TransformVariant::Hat,
        FamilyKind::Phi => TransformVariant::Raised,
    };
    let eval = |spec: &FalseThetaSpec, tau: Complex64, w: Complex64| -> Result<Complex64> {
        explicit_eval(spec, kind, tau, w, budget)
    };
    let t = verify_transform_explicit(&TransformKind::TShift, variant, family, pt, budget, &eval)?;
    let s =
        verify_transform_explicit(&TransformKind::SInversion, variant, family, pt, budget, &eval)?;
    Ok((t, s))
}

/// verify_transform with a custom per-class evaluator at z = zf = 0.
fn verify_transform_explicit(
    kind: &TransformKind,
    variant: TransformVariant,
    family: &[FalseThetaSpec],
    pt: &CompletionPoint,
    budget: &TruncationBudget,
    eval: &dyn Fn(&FalseThetaSpec, Complex64, Complex64) -> Result<Complex64>,
) -> Result<f64> {
    falsetheta::completion::verify_transform_with(kind, variant, family, pt, budget, Some(eval))
        .map(|r| r.abs_residual)
}

/// Eichler representations against the direct evaluations, plus the unary
/// intro identity against eta^3.
pub fn suite_eichler() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let budget = TruncationBudget { lattice_cutoff: 35.0, ..Default::default() };
    let points = [(c64(0.0, 0.5), c64(0.0, 2.0)), (c64(0.3, 0.8), c64(-0.2, 1.6))];
    for (n, p, s, kind, tol) in [
        (1usize, 2i64, vec![1i64], FamilyKind::Psi, 1e-8),
        (1, 2, vec![1], FamilyKind::Phi, 1e-8),
        (2, 2, vec![1, 0], FamilyKind::Psi, 1e-6),
        (2, 2, vec![1, 0], FamilyKind::Phi, 1e-6),
    ] {
        let label = FamilyLabel::new(n, p, s.clone(), kind)?;
        let mut worst = 0.0f64;
        for (tau, w) in points {
            let (eich, _) = eichler_family(&label, tau, w, &budget)?;
            let direct = eval_family(&label, tau, w, &budget)?;
            worst = worst.max((eich - direct).norm());
        }
        let tag = match kind {
            FamilyKind::Psi => "psi",
            FamilyKind::Phi => "phi",
        };
        checks.push(Check::new(format!("eichler A{n} {tag} p={p} s={s:?}"), worst, tol));
    }
    // unary intro identity: the rank-1, l = 1 false theta equals
    // i int_tau^{tau + i inf} eta(w1)^3 (i(w1 - tau))^{-1/2} dw1
    let lat = QuadraticLattice::unary(1)?;
    let spec = FalseThetaSpec::new(
        lat,
        falsetheta::lattice::ConjugacyClass::zero(1),
        vec![rat_i(1)],
        vec![vec![rat_i(1)]],
        None,
    )?;
    let psi = false_theta(&spec, rat_i(50))?;
    let eta3 = eta_pow(3, rat_i(60));
    let mut worst = 0.0f64;
    for tau in [c64(0.0, 0.5), c64(0.3, 0.8)] {
        let (series_val, _) = psi.eval(tau)?;
        let path = GeodesicPath::between(tau, tau + c64(0.0, 40.0))?;
        let (integral, _) = quad_geodesic_raw(
            |w1| Ok(eta3.eval(w1)?.0),
            &path,
            SingularPower::Half,
            96,
        )?;
        worst = worst.max((series_val - I * integral).norm());
    }
    checks.push(Check::new("unary intro Eichler identity", worst, 1e-6));
    Ok(checks)
}

/// The covariant operator algebra on test functions.
pub fn suite_operators() -> Result<Vec<Check>> {
    let lat = QuadraticLattice::a_n(2, 1)?;
    let ops = Operators::new(&lat);
    let g: falsetheta::completion::OpFun = Rc::new(|pt: &OpPoint| {
        let poly = pt.z[0] * pt.z[1] + pt.zf[0] * 2.0 + pt.w;
        let gauss = (std::f64::consts::PI * I
            * (pt.z[0] * pt.z[0] + pt.zf[1] * pt.zf[1])
            / 4.0
            + std::f64::consts::PI * I * pt.tau / 3.0)
            .exp();
        (poly + 1.0) * gauss
    });
    let pt = OpPoint {
        z: vec![c64(0.11, 0.04), c64(-0.07, 0.02)],
        zf: vec![c64(0.03, -0.05), c64(0.09, 0.01)],
        tau: c64(0.0, 1.0),
        w: c64(0.0, 2.0),
    };
    let mut checks = Vec::new();
    for rel in ALL_RELATIONS {
        let res =
            falsetheta::completion::operator_algebra_check(rel, &ops, g.clone(), &pt, 0, 1, 2.0)?;
        checks.push(Check::new(format!("operator relation {rel:?}"), res, 1e-6));
    }
    // covariance of the raised A_1 family under S
    let budget = TruncationBudget { lattice_cutoff: 60.0, ..Default::default() };
    let family = family_members(1, 2, FamilyKind::Phi)?;
    let pt = CompletionPoint::origin(1, c64(0.0, 0.5), c64(0.0, 2.0));
    let rep = verify_transform(
        &TransformKind::SInversion,
        TransformVariant::Raised,
        &family,
        &pt,
        &budget,
    )?;
    checks.push(Check::new("raising-operator covariance (A1 family)", rep.abs_residual, 1e-6));
    Ok(checks)
}

/// Direct vs reduced Z-hat plus the symmetrized form and the family survey.
pub fn suite_zhat() -> Result<Vec<Check>> {
    use falsetheta::zhat::*;
    let mut checks = Vec::new();
    let spec = BrieskornSpec::new(2, 3, 7)?;
    let order = rat_i(2);
    let direct = zhat_direct(&spec, order)?;
    let reduced = zhat_reduced(&spec, order)?;
    checks.push(Check::new(
        "zhat direct = reduced (2,3,7)",
        direct.max_coeff_distance(&reduced, order),
        0.0,
    ));
    let sym = zhat_symmetrized(&spec, order)?;
    checks.push(Check::new(
        "zhat symmetrized = reduced (2,3,7)",
        sym.max_coeff_distance(&reduced, order),
        0.0,
    ));
    let reports = family_identity_survey(&spec, rat_i(1))?;
    let flagged = reports.iter().filter(|r| !r.holds).count();
    checks.push(Check::new(
        format!("G_mu family identity survey ({} classes, {flagged} flagged)", reports.len()),
        flagged as f64,
        0.0,
    ));
    Ok(checks)
}
