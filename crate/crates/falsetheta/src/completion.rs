//! The completed false theta function Psi-hat, its rescaled variant Psi-tilde,
//! covariant differential operators, and transformation-law verifiers.
//!
//! Psi-hat(z, zf; tau, w) = sum over n in Lambda + mu + l/2 of
//!   E_{Q,M}(-i sqrt(i(w-tau)) (n + (zf - z)/(w - tau))) q^{Q(n)} e^{2 pi i B(n, z + l/2)}.

use num_complex::Complex64;
use num_traits::Zero;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::generr::{eval_complex_scaled, FalseThetaSpec, Poly};
use crate::lattice::all_classes;
use crate::numerics::{
    c64, cauchy_derivative, chi_sign, principal_sqrt_branch, ModularMatrix, TruncationBudget, I,
};
use crate::qseries::{eisenstein_e2, false_boundary, Mode, QSeries};
use crate::rat::{rat_i, rat_to_f64, rm_inverse, RatMat, Rational};
use crate::{Error, Result};

/// Elliptic-variable evaluation point for the completion.
#[derive(Clone, Debug)]
pub struct CompletionPoint {
    pub z: Vec<Complex64>,
    pub zf: Vec<Complex64>,
    pub tau: Complex64,
    pub w: Complex64,
}

impl CompletionPoint {
    pub fn origin(rank: usize, tau: Complex64, w: Complex64) -> Self {
        CompletionPoint { z: vec![c64(0.0, 0.0); rank], zf: vec![c64(0.0, 0.0); rank], tau, w }
    }

    pub fn with_z(rank: usize, z: Vec<Complex64>, zf: Vec<Complex64>, tau: Complex64, w: Complex64) -> Result<Self> {
        if z.len() != rank || zf.len() != rank {
            return Err(Error::DimensionMismatch { expected: rank, got: z.len().max(zf.len()) });
        }
        Ok(CompletionPoint { z, zf, tau, w })
    }
}

fn working_bilinear_c(spec: &FalseThetaSpec, v: &[Rational], z: &[Complex64]) -> Complex64 {
    let lat = &spec.lattice;
    let n = lat.rank;
    let mut acc = c64(0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            acc += rat_to_f64(v[a]) * (lat.gram[a][b] * lat.scale) as f64 * z[b];
        }
    }
    acc
}

fn working_quad_c(spec: &FalseThetaSpec, z: &[Complex64]) -> Complex64 {
    let lat = &spec.lattice;
    let n = lat.rank;
    let mut acc = c64(0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            acc += z[a] * (lat.gram[a][b] * lat.scale) as f64 * z[b];
        }
    }
    acc / 2.0
}

/// The completed false theta function at a point, with a Gaussian tail
/// estimate for the truncated lattice sum. A non-constant insertion P routes
/// through [`apply_raising`] and therefore requires z = zf = 0.
pub fn psi_hat(
    spec: &FalseThetaSpec,
    pt: &CompletionPoint,
    budget: &TruncationBudget,
) -> Result<(Complex64, f64)> {
    if !spec.insertion.is_one() {
        if pt.z.iter().chain(pt.zf.iter()).any(|v| v.norm() != 0.0) {
            return Err(Error::InvalidArgument(
                "polynomial insertions are evaluated at z = zf = 0".into(),
            ));
        }
        let (v, err) = apply_raising(spec, pt.tau, pt.w, &spec.insertion, budget)?;
        return Ok((v, err));
    }
    psi_hat_plain(spec, pt, budget)
}

fn psi_hat_plain(
    spec: &FalseThetaSpec,
    pt: &CompletionPoint,
    budget: &TruncationBudget,
) -> Result<(Complex64, f64)> {
    let (tau, w) = (pt.tau, pt.w);
    if tau == w {
        return Err(Error::InvalidArgument("psi_hat requires tau != w".into()));
    }
    let n = spec.lattice.rank;
    let shift = spec.total_shift();
    let points = spec.lattice.enumerate_points(&shift, budget.lattice_cutoff)?;
    // (zf - z)/(w - tau)
    let zshift: Vec<Complex64> = (0..n).map(|i| (pt.zf[i] - pt.z[i]) / (w - tau)).collect();
    let half_l: Vec<Rational> = spec.characteristic.iter().map(|&c| c / rat_i(2)).collect();
    let zpl: Vec<Complex64> =
        (0..n).map(|i| pt.z[i] + c64(rat_to_f64(half_l[i]), 0.0)).collect();
    let y_min = tau.im.min(w.im);
    let mut acc = c64(0.0, 0.0);
    let mut amp: f64 = 0.0;
    for v in &points {
        let q = rat_to_f64(spec.lattice.working_quad(v)?);
        let x: Vec<Complex64> =
            (0..n).map(|i| c64(rat_to_f64(v[i]), 0.0) + zshift[i]).collect();
        let e = eval_complex_scaled(&spec.vectors, &x, tau, w, budget)?;
        let phase = (2.0 * PI * I * (q * tau + working_bilinear_c(spec, v, &zpl))).exp();
        let term = e * phase;
        acc += term;
        if q >= 0.7 * budget.lattice_cutoff {
            amp = amp.max(term.norm() * (2.0 * PI * y_min * q).exp());
        }
    }
    if !acc.re.is_finite() || !acc.im.is_finite() {
        return Err(Error::NonFinite("psi_hat"));
    }
    // Gaussian tail: terms beyond the cutoff are bounded by
    // amp * e^{-2 pi y_min Q}; the shell count grows polynomially.
    let cutoff = budget.lattice_cutoff;
    let tail = amp.max(1e-300) * (-2.0 * PI * y_min * cutoff).exp() * (cutoff + 2.0).powi(n as i32);
    if tail > budget.tolerance {
        return Err(Error::TailTooLarge { estimate: tail, tolerance: budget.tolerance });
    }
    Ok((acc, tail))
}

/// The rescaled completion Psi-tilde = (i(w - tau))^{r/2} Psi-hat, which is
/// single-valued across the branch ray.
pub fn psi_tilde(
    spec: &FalseThetaSpec,
    pt: &CompletionPoint,
    budget: &TruncationBudget,
) -> Result<(Complex64, f64)> {
    let (v, tail) = psi_hat(spec, pt, budget)?;
    let r = spec.vectors.r();
    let s = principal_sqrt_branch(pt.tau, pt.w);
    let factor = s.powi(r as i32);
    Ok((v * factor, tail * factor.norm()))
}

/// The boundary q-series the completion limits to as w -> tau + i infinity.
pub fn boundary(spec: &FalseThetaSpec, order: Rational, mode: Mode) -> Result<QSeries> {
    false_boundary(spec, order, mode)
}

/// The completed Eisenstein series E2-hat(tau, w) = E_2(tau) - 6i/(pi (tau - w)).
pub fn e2_completion(tau: Complex64, w: Complex64, order: Rational) -> Result<Complex64> {
    if tau == w {
        return Err(Error::InvalidArgument("e2_completion requires tau != w".into()));
    }
    let (e2, _) = eisenstein_e2(order).eval(tau)?;
    Ok(e2 - 6.0 * I / (PI * (tau - w)))
}

// ---------------------------------------------------------------------------
// raising operators via Cauchy differentiation
// ---------------------------------------------------------------------------

/// Polynomial with complex coefficients (internal to the operator calculus).
#[derive(Clone, Debug)]
struct CPoly {
    terms: Vec<(Complex64, Vec<u32>)>,
}

impl CPoly {
    fn constant(n: usize, c: Complex64) -> Self {
        CPoly { terms: vec![(c, vec![0; n])] }
    }

    fn add_assign(&mut self, other: &CPoly) {
        for (c, m) in &other.terms {
            if let Some(t) = self.terms.iter_mut().find(|(_, mm)| mm == m) {
                t.0 += c;
            } else {
                self.terms.push((*c, m.clone()));
            }
        }
        self.terms.retain(|(c, _)| c.norm() > 0.0);
    }

    fn mul(&self, other: &CPoly) -> CPoly {
        let n = self.terms.first().map(|(_, m)| m.len()).unwrap_or(0);
        let mut out = CPoly { terms: vec![] };
        for (c1, m1) in &self.terms {
            for (c2, m2) in &other.terms {
                let m: Vec<u32> = m1.iter().zip(m2).map(|(a, b)| a + b).collect();
                out.add_assign(&CPoly { terms: vec![(c1 * c2, m)] });
            }
        }
        if out.terms.is_empty() {
            out = CPoly::constant(n, c64(0.0, 0.0));
            out.terms.clear();
        }
        out
    }
}

/// Substitute x_alpha = sum_gamma Ainv[alpha][gamma] xi_gamma / (2 pi i) into a
/// rational polynomial, producing the derivative symbol P(A^{-1} xi / 2 pi i).
fn substitute_derivative_symbol(p: &Poly, ainv: &RatMat) -> CPoly {
    let n = p.nvars();
    let lin: Vec<CPoly> = (0..n)
        .map(|alpha| {
            let terms = (0..n)
                .filter(|&g| !ainv[alpha][g].is_zero())
                .map(|g| {
                    let mut m = vec![0u32; n];
                    m[g] = 1;
                    (c64(rat_to_f64(ainv[alpha][g]), 0.0) / (2.0 * PI * I), m)
                })
                .collect();
            CPoly { terms }
        })
        .collect();
    let mut out = CPoly { terms: vec![] };
    for (c, m) in &p.terms {
        let mut mono = CPoly::constant(n, c64(rat_to_f64(*c), 0.0));
        for (alpha, &e) in m.iter().enumerate() {
            for _ in 0..e {
                mono = mono.mul(&lin[alpha]);
            }
        }
        out.add_assign(&mono);
    }
    out
}

/// Polarization: express a mixed partial of total degree <= 3 as a weighted
/// combination of directional derivatives along integer directions.
fn polarize(m: &[u32]) -> Result<Vec<(Vec<i64>, usize, f64)>> {
    let n = m.len();
    let total: u32 = m.iter().sum();
    let supp: Vec<usize> = (0..n).filter(|&i| m[i] > 0).collect();
    let e = |i: usize| -> Vec<i64> {
        let mut v = vec![0i64; n];
        v[i] = 1;
        v
    };
    let comb = |pairs: &[(usize, i64)]| -> Vec<i64> {
        let mut v = vec![0i64; n];
        for &(i, c) in pairs {
            v[i] = c;
        }
        v
    };
    match (total, supp.len()) {
        (0, _) => Ok(vec![(vec![0; n], 0, 1.0)]),
        (k, 1) => Ok(vec![(e(supp[0]), k as usize, 1.0)]),
        (2, 2) => {
            let (i, j) = (supp[0], supp[1]);
            Ok(vec![
                (comb(&[(i, 1), (j, 1)]), 2, 0.25),
                (comb(&[(i, 1), (j, -1)]), 2, -0.25),
            ])
        }
        (3, 2) => {
            // x_i^2 x_j with m[i] = 2: d_i^2 d_j = [d^3_{i+j} - d^3_{i-j} - 2 d^3_j] / 6
            let (i, j) = if m[supp[0]] == 2 { (supp[0], supp[1]) } else { (supp[1], supp[0]) };
            Ok(vec![
                (comb(&[(i, 1), (j, 1)]), 3, 1.0 / 6.0),
                (comb(&[(i, 1), (j, -1)]), 3, -1.0 / 6.0),
                (e(j), 3, -1.0 / 3.0),
            ])
        }
        (3, 3) => {
            let (i, j, k) = (supp[0], supp[1], supp[2]);
            let mut out = Vec::new();
            for sj in [1i64, -1] {
                for sk in [1i64, -1] {
                    out.push((
                        comb(&[(i, 1), (j, sj), (k, sk)]),
                        3,
                        (sj * sk) as f64 / 24.0,
                    ));
                }
            }
            Ok(out)
        }
        _ => Err(Error::InvalidArgument(format!(
            "polynomial insertions support total degree <= 3 (got multi-index {m:?})"
        ))),
    }
}

/// The raised completion [P(A^{-1} D / 2 pi i)(Psi-hat)]_{z = zf = 0}.
///
/// Conjugating by e^{2 pi i Q(z)/(tau - w)} turns the covariant operator into
/// plain z-derivatives of the entire function
///   G(z) = e^{2 pi i Q(z)/(tau - w)} Psi-hat(z, 0; tau, w),
/// which are extracted by one-variable Cauchy integrals along a set of
/// polarization directions.
pub fn apply_raising(
    spec: &FalseThetaSpec,
    tau: Complex64,
    w: Complex64,
    p: &Poly,
    budget: &TruncationBudget,
) -> Result<(Complex64, f64)> {
    if tau == w {
        return Err(Error::InvalidArgument("apply_raising requires tau != w".into()));
    }
    let n = spec.lattice.rank;
    if p.nvars() != n {
        return Err(Error::DimensionMismatch { expected: n, got: p.nvars() });
    }
    let ainv = rm_inverse(&spec.lattice.working_gram());
    let symbol = substitute_derivative_symbol(p, &ainv);
    // plain spec for the inner evaluations
    let plain = FalseThetaSpec {
        lattice: spec.lattice.clone(),
        class: spec.class.clone(),
        characteristic: spec.characteristic.clone(),
        vectors: spec.vectors.clone(),
        insertion: Poly::one(n),
    };
    let zero = vec![c64(0.0, 0.0); n];
    let g = |z: &[Complex64]| -> Result<Complex64> {
        let pt = CompletionPoint { z: z.to_vec(), zf: zero.clone(), tau, w };
        let (v, _) = psi_hat_plain(&plain, &pt, budget)?;
        let conj = (2.0 * PI * I * working_quad_c(&plain, z) / (tau - w)).exp();
        Ok(conj * v)
    };
    // gather directional derivatives needed by every monomial
    let mut jobs: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    let mut plan: Vec<(Complex64, Vec<(Vec<i64>, usize, f64)>)> = Vec::new();
    for (c, m) in &symbol.terms {
        let pieces = polarize(m)?;
        for (dir, k, _) in &pieces {
            let entry = jobs.entry(dir.clone()).or_insert(0);
            *entry = (*entry).max(*k);
        }
        plan.push((*c, pieces));
    }
    // oscillation scale along a direction: the phases e^{2 pi i B(n, t v)}
    // and the conjugation Gaussian set the safe Cauchy radius
    let shift = spec.total_shift();
    let points = spec.lattice.enumerate_points(&shift, budget.lattice_cutoff)?;
    let mut derivs: BTreeMap<(Vec<i64>, usize), (Complex64, f64)> = BTreeMap::new();
    for (dir, max_k) in &jobs {
        if dir.iter().all(|&c| c == 0) {
            let v = g(&zero)?;
            derivs.insert((dir.clone(), 0), (v, 0.0));
            continue;
        }
        let dir_c: Vec<Complex64> = dir.iter().map(|&c| c64(c as f64, 0.0)).collect();
        let dir_r: Vec<Rational> = dir.iter().map(|&c| rat_i(c)).collect();
        let mut osc: f64 = 0.0;
        for v in &points {
            osc = osc.max(
                2.0 * PI * rat_to_f64(spec.lattice.working_bilinear(v, &dir_r).unwrap()).abs(),
            );
        }
        osc += (2.0 * PI * working_quad_c(spec, &dir_c).norm() / (tau - w).norm()).sqrt();
        let radius = (1.2 / (1.0 + osc)).min(0.05);
        // one trapezoid sweep per direction serves every derivative order;
        // the even-node subsample provides the error estimate
        let n = budget.quad_points.clamp(16, 32).next_multiple_of(2);
        let mut values = Vec::with_capacity(n);
        for j in 0..n {
            let th = 2.0 * PI * j as f64 / n as f64;
            let t = c64(0.0, th).exp() * radius;
            let z: Vec<Complex64> = dir_c.iter().map(|d| d * t).collect();
            values.push(g(&z)?);
        }
        for k in 1..=*max_k {
            let extract = |stride: usize| -> Complex64 {
                let m = n / stride;
                let mut acc = c64(0.0, 0.0);
                for j in 0..m {
                    let th = 2.0 * PI * (j * stride) as f64 / n as f64;
                    acc += values[j * stride] * c64(0.0, -th * k as f64).exp();
                }
                let kfact: f64 = (1..=k).map(|i| i as f64).product();
                acc * kfact / m as f64 / radius.powi(k as i32)
            };
            let fine = extract(1);
            let coarse = extract(2);
            derivs.insert((dir.clone(), k), (fine, (fine - coarse).norm()));
        }
    }
    let mut total = c64(0.0, 0.0);
    let mut err_total = 0.0;
    for (c, pieces) in &plan {
        for (dir, k, weight) in pieces {
            let (v, err) = if *k == 0 {
                *derivs.get(&(vec![0; n], 0)).ok_or(Error::NonFinite("missing base value"))?
            } else {
                *derivs.get(&(dir.clone(), *k)).ok_or(Error::NonFinite("missing derivative"))?
            };
            total += c * weight * v;
            err_total += (c * weight).norm() * err;
        }
    }
    if !total.re.is_finite() || !total.im.is_finite() {
        return Err(Error::NonFinite("apply_raising"));
    }
    Ok((total, err_total))
}

// ---------------------------------------------------------------------------
// transformation-law verification
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub enum TransformKind {
    TShift,
    SInversion,
    Elliptic { m: Vec<i64>, r: Vec<i64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformVariant {
    /// Psi-hat with the chi sign factor.
    Hat,
    /// Psi-tilde with weights tau^{(n-r)/2} w^{-r/2}.
    Tilde,
    /// The raised family of weight d + n/2 (z = zf = 0 only).
    Raised,
}

/// Residual report for one transformation law across a class family.
#[derive(Clone, Debug, serde::Serialize)]
pub struct TransformReport {
    pub law: String,
    pub point: [[f64; 2]; 2],
    pub lhs: Vec<[f64; 2]>,
    pub rhs: Vec<[f64; 2]>,
    pub abs_residual: f64,
    pub rel_residual: f64,
    #[serde(rename = "budget")]
    pub lattice_cutoff: f64,
}

fn eval_variant(
    spec: &FalseThetaSpec,
    variant: TransformVariant,
    z: &[Complex64],
    zf: &[Complex64],
    tau: Complex64,
    w: Complex64,
    budget: &TruncationBudget,
) -> Result<Complex64> {
    let pt = CompletionPoint { z: z.to_vec(), zf: zf.to_vec(), tau, w };
    match variant {
        TransformVariant::Hat => Ok(psi_hat(spec, &pt, budget)?.0),
        TransformVariant::Tilde => Ok(psi_tilde(spec, &pt, budget)?.0),
        TransformVariant::Raised => {
            if z.iter().chain(zf.iter()).any(|v| v.norm() != 0.0) {
                return Err(Error::InvalidArgument("raised laws are checked at z = zf = 0".into()));
            }
            Ok(apply_raising(spec, tau, w, &spec.insertion, budget)?.0)
        }
    }
}

/// Verify a transformation law on a full conjugacy-class family at a point.
/// `family` must enumerate the classes in the order of
/// [`crate::lattice::all_classes`] for the S-inversion.
pub fn verify_transform(
    kind: &TransformKind,
    variant: TransformVariant,
    family: &[FalseThetaSpec],
    pt: &CompletionPoint,
    budget: &TruncationBudget,
) -> Result<TransformReport> {
    verify_transform_with(kind, variant, family, pt, budget, None)
}

/// A per-class evaluator substituting for the built-in engine at z = zf = 0;
/// the law prefactors still come from `variant`.
pub type ExplicitEvaluator<'a> =
    &'a dyn Fn(&FalseThetaSpec, Complex64, Complex64) -> Result<Complex64>;

/// [`verify_transform`] with an optional explicit evaluator (used to check the
/// laws on the closed-form family expressions instead of the generic engine).
pub fn verify_transform_with(
    kind: &TransformKind,
    variant: TransformVariant,
    family: &[FalseThetaSpec],
    pt: &CompletionPoint,
    budget: &TruncationBudget,
    custom: Option<ExplicitEvaluator<'_>>,
) -> Result<TransformReport> {
    if custom.is_some() && pt.z.iter().chain(pt.zf.iter()).any(|v| v.norm() != 0.0) {
        return Err(Error::InvalidArgument(
            "explicit evaluators verify laws at z = zf = 0".into(),
        ));
    }
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty class family".into()));
    }
    let eval = |spec: &FalseThetaSpec,
                z: &[Complex64],
                zf: &[Complex64],
                tau: Complex64,
                w: Complex64|
     -> Result<Complex64> {
        match custom {
            Some(f) => f(spec, tau, w),
            None => eval_variant(spec, variant, z, zf, tau, w, budget),
        }
    };
    let spec0 = &family[0];
    let lat = &spec0.lattice;
    let n = lat.rank;
    let (tau, w) = (pt.tau, pt.w);
    let disc = lat.discriminant() as f64;
    let ell = &spec0.characteristic;
    let r = spec0.vectors.r();
    let mut lhs_all = Vec::new();
    let mut rhs_all = Vec::new();
    let law = match kind {
        TransformKind::TShift => "T-shift",
        TransformKind::SInversion => "S-inversion",
        TransformKind::Elliptic { .. } => "elliptic",
    }
    .to_string();
    match kind {
        TransformKind::TShift => {
            for spec in family {
                let lhs = eval(spec, &pt.z, &pt.zf, tau + 1.0, w + 1.0)?;
                let mu_half_l = crate::rat::rv_add(
                    &spec.class.shift,
                    &crate::rat::rv_scale(ell, crate::rat::rat(1, 2)),
                );
                let q = rat_to_f64(lat.working_quad(&mu_half_l)?);
                let rhs = (2.0 * PI * I * q).exp() * eval(spec, &pt.z, &pt.zf, tau, w)?;
                lhs_all.push(lhs);
                rhs_all.push(rhs);
            }
        }
        TransformKind::SInversion => {
            if family.len() != all_classes(lat)?.len() {
                return Err(Error::InvalidArgument(format!(
                    "S-inversion requires the full family of {} classes, got {}",
                    all_classes(lat)?.len(),
                    family.len()
                )));
            }
            let zs: Vec<Complex64> = pt.z.iter().map(|v| v / tau).collect();
            let zfs: Vec<Complex64> = pt.zf.iter().map(|v| v / w).collect();
            let values: Vec<Complex64> = family
                .iter()
                .map(|spec| eval(spec, &pt.z, &pt.zf, tau, w))
                .collect::<Result<_>>()?;
            let q_ell = rat_to_f64(lat.working_quad(ell)?);
            let q_z = working_quad_c(spec0, &pt.z);
            let chi = chi_sign(tau, w, ModularMatrix::s())? as f64;
            let prefactor = match variant {
                TransformVariant::Hat => {
                    chi.powi(r as i32)
                        * (-I * tau).powf(n as f64 / 2.0)
                        * (-PI * I * q_ell).exp()
                        / disc.sqrt()
                        * (2.0 * PI * I * q_z / tau).exp()
                }
                TransformVariant::Tilde => {
                    (-I).powf(n as f64 / 2.0)
                        * tau.powf((n as f64 - r as f64) / 2.0)
                        * w.powf(-(r as f64) / 2.0)
                        * (-PI * I * q_ell).exp()
                        / disc.sqrt()
                        * (2.0 * PI * I * q_z / tau).exp()
                }
                TransformVariant::Raised => {
                    let d = spec0.insertion.degree() as f64;
                    chi.powi(r as i32)
                        * tau.powf(d + n as f64 / 2.0)
                        * (-PI * I * n as f64 / 4.0).exp()
                        * (-PI * I * q_ell).exp()
                        / disc.sqrt()
                }
            };
            for spec in family {
                let lhs = eval(spec, &zs, &zfs, -1.0 / tau, -1.0 / w)?;
                let mut acc = c64(0.0, 0.0);
                for (other, val) in family.iter().zip(&values) {
                    let b = rat_to_f64(
                        lat.working_bilinear(&spec.class.shift, &other.class.shift)?,
                    );
                    acc += (-2.0 * PI * I * b).exp() * val;
                }
                lhs_all.push(lhs);
                rhs_all.push(prefactor * acc);
            }
        }
        TransformKind::Elliptic { m, r: rvec } => {
            let m_rat: Vec<Rational> = m.iter().map(|&c| rat_i(c)).collect();
            let r_rat: Vec<Rational> = rvec.iter().map(|&c| rat_i(c)).collect();
            let mpr = crate::rat::rv_add(&m_rat, &r_rat);
            let two_q_mpr = rat_to_f64(lat.working_quad(&mpr)?) * 2.0;
            let q_m = rat_to_f64(lat.working_quad(&m_rat)?);
            for spec in family {
                let zt: Vec<Complex64> = (0..n)
                    .map(|i| pt.z[i] + c64(m[i] as f64, 0.0) * tau + c64(rvec[i] as f64, 0.0))
                    .collect();
                let zft: Vec<Complex64> = (0..n)
                    .map(|i| pt.zf[i] + c64(m[i] as f64, 0.0) * w + c64(rvec[i] as f64, 0.0))
                    .collect();
                let lhs = eval(spec, &zt, &zft, tau, w)?;
                let b_mz = working_bilinear_c(spec, &m_rat, &pt.z);
                let factor = c64(-1.0, 0.0).powf(two_q_mpr)
                    * (-2.0 * PI * I * (q_m * tau + b_mz)).exp();
                let rhs = factor * eval(spec, &pt.z, &pt.zf, tau, w)?;
                lhs_all.push(lhs);
                rhs_all.push(rhs);
            }
        }
    }
    let mut abs_residual: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (l, r) in lhs_all.iter().zip(&rhs_all) {
        abs_residual = abs_residual.max((l - r).norm());
        scale = scale.max(l.norm()).max(r.norm());
    }
    Ok(TransformReport {
        law,
        point: [[tau.re, tau.im], [w.re, w.im]],
        lhs: lhs_all.iter().map(|v| [v.re, v.im]).collect(),
        rhs: rhs_all.iter().map(|v| [v.re, v.im]).collect(),
        abs_residual,
        rel_residual: if scale > 0.0 { abs_residual / scale } else { 0.0 },
        lattice_cutoff: budget.lattice_cutoff,
    })
}

// ---------------------------------------------------------------------------
// operator algebra
// ---------------------------------------------------------------------------

/// Evaluation state for the covariant operator calculus.
#[derive(Clone, Debug)]
pub struct OpPoint {
    pub z: Vec<Complex64>,
    pub zf: Vec<Complex64>,
    pub tau: Complex64,
    pub w: Complex64,
}

pub type OpFun = std::rc::Rc<dyn Fn(&OpPoint) -> Complex64>;

#[derive(Clone, Copy, Debug)]
enum OpVar {
    Z(usize),
    Zf(usize),
    Tau,
    W,
}

fn op_derivative(f: OpFun, var: OpVar) -> OpFun {
    std::rc::Rc::new(move |pt: &OpPoint| {
        let f = f.clone();
        let pt = pt.clone();
        let section = move |t: &[Complex64]| -> Complex64 {
            let mut q = pt.clone();
            match var {
                OpVar::Z(i) => q.z[i] += t[0],
                OpVar::Zf(i) => q.zf[i] += t[0],
                OpVar::Tau => q.tau += t[0],
                OpVar::W => q.w += t[0],
            }
            f(&q)
        };
        cauchy_derivative(section, &[1], 0.12, 24).map(|(v, _)| v).unwrap_or(c64(f64::NAN, 0.0))
    })
}

/// Operator factory bound to a working Gram matrix.
pub struct Operators {
    pub gram: Vec<Vec<f64>>,
}

impl Operators {
    pub fn new(lat: &crate::lattice::QuadraticLattice) -> Self {
        let n = lat.rank;
        Operators {
            gram: (0..n)
                .map(|i| (0..n).map(|j| (lat.gram[i][j] * lat.scale) as f64).collect())
                .collect(),
        }
    }

    fn n(&self) -> usize {
        self.gram.len()
    }

    /// D_alpha = d/dz_alpha + (2 pi i/(tau - w)) (A (z - zf))_alpha.
    pub fn d_raise(&self, alpha: usize, f: OpFun) -> OpFun {
        let df = op_derivative(f.clone(), OpVar::Z(alpha));
        let gram = self.gram.clone();
        std::rc::Rc::new(move |pt: &OpPoint| {
            let lin: Complex64 =
                (0..gram.len()).map(|b| gram[alpha][b] * (pt.z[b] - pt.zf[b])).sum();
            df(pt) + 2.0 * PI * I / (pt.tau - pt.w) * lin * f(pt)
        })
    }

    /// d_alpha = (tau - w) d/dzf_alpha.
    pub fn d_lower(&self, alpha: usize, f: OpFun) -> OpFun {
        let df = op_derivative(f, OpVar::Zf(alpha));
        std::rc::Rc::new(move |pt: &OpPoint| (pt.tau - pt.w) * df(pt))
    }

    /// R_k = d/dtau + ((z - zf)^T/(tau - w)) d/dz + 2 pi i Q((z - zf)/(tau - w)) + k/(tau - w).
    pub fn r_raise(&self, k: f64, f: OpFun) -> OpFun {
        let dtau = op_derivative(f.clone(), OpVar::Tau);
        let dz: Vec<OpFun> =
            (0..self.n()).map(|a| op_derivative(f.clone(), OpVar::Z(a))).collect();
        let gram = self.gram.clone();
        std::rc::Rc::new(move |pt: &OpPoint| {
            let n = gram.len();
            let dv: Vec<Complex64> =
                (0..n).map(|a| (pt.z[a] - pt.zf[a]) / (pt.tau - pt.w)).collect();
            let mut acc = dtau(pt);
            for a in 0..n {
                acc += dv[a] * dz[a](pt);
            }
            let mut q = c64(0.0, 0.0);
            for a in 0..n {
                for b in 0..n {
                    q += dv[a] * gram[a][b] * dv[b];
                }
            }
            acc + (PI * I * q + k / (pt.tau - pt.w)) * f(pt)
        })
    }

    /// L = (tau - w)((tau - w) d/dw + (z - zf)^T d/dzf).
    pub fn lower(&self, f: OpFun) -> OpFun {
        let dw = op_derivative(f.clone(), OpVar::W);
        let dzf: Vec<OpFun> =
            (0..self.n()).map(|a| op_derivative(f.clone(), OpVar::Zf(a))).collect();
        std::rc::Rc::new(move |pt: &OpPoint| {
            let d = pt.tau - pt.w;
            let mut acc = d * dw(pt);
            for a in 0..dzf.len() {
                acc += (pt.z[a] - pt.zf[a]) * dzf[a](pt);
            }
            d * acc
        })
    }
}

/// One of the commutation relations of the covariant operator algebra.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorRelation {
    /// [D_a, D_b] = 0
    RaiseCommute,
    /// [d_a, d_b] = 0
    LowerCommute,
    /// [D_a, d_b] = 2 pi i A_{ab}
    MixedCommutator,
    /// L R_k - R_{k-2} L = k
    LoweringRaising,
    /// d_a R_k - R_{k-1} d_a = -D_a
    LowerWithR,
    /// [d_a, L] = 0
    LowerWithL,
    /// D_a R_k - R_{k+1} D_a = 0
    RaiseWithR,
    /// [D_a, L] = d_a
    RaiseWithL,
}

pub const ALL_RELATIONS: [OperatorRelation; 8] = [
    OperatorRelation::RaiseCommute,
    OperatorRelation::LowerCommute,
    OperatorRelation::MixedCommutator,
    OperatorRelation::LoweringRaising,
    OperatorRelation::LowerWithR,
    OperatorRelation::LowerWithL,
    OperatorRelation::RaiseWithR,
    OperatorRelation::RaiseWithL,
];

/// Apply both sides of a relation to a test function and return the residual.
/// alpha/beta pick components, k is the weight parameter where applicable.
pub fn operator_algebra_check(
    relation: OperatorRelation,
    ops: &Operators,
    g: OpFun,
    pt: &OpPoint,
    alpha: usize,
    beta: usize,
    k: f64,
) -> Result<f64> {
    if (pt.tau - pt.w).norm() < 1e-3 {
        return Err(Error::InvalidArgument(
            "operator checks need tau and w separated (derivative blowup)".into(),
        ));
    }
    let value = |f: OpFun| f(pt);
    let residual = match relation {
        OperatorRelation::RaiseCommute => {
            let ab = ops.d_raise(alpha, ops.d_raise(beta, g.clone()));
            let ba = ops.d_raise(beta, ops.d_raise(alpha, g.clone()));
            (value(ab) - value(ba)).norm()
        }
        OperatorRelation::LowerCommute => {
            let ab = ops.d_lower(alpha, ops.d_lower(beta, g.clone()));
            let ba = ops.d_lower(beta, ops.d_lower(alpha, g.clone()));
            (value(ab) - value(ba)).norm()
        }
        OperatorRelation::MixedCommutator => {
            let ab = ops.d_raise(alpha, ops.d_lower(beta, g.clone()));
            let ba = ops.d_lower(beta, ops.d_raise(alpha, g.clone()));
            let expect = 2.0 * PI * I * ops.gram[alpha][beta] * g(pt);
            (value(ab) - value(ba) - expect).norm()
        }
        OperatorRelation::LoweringRaising => {
            let lr = ops.lower(ops.r_raise(k, g.clone()));
            let rl = ops.r_raise(k - 2.0, ops.lower(g.clone()));
            (value(lr) - value(rl) - k * g(pt)).norm()
        }
        OperatorRelation::LowerWithR => {
            let dr = ops.d_lower(alpha, ops.r_raise(k, g.clone()));
            let rd = ops.r_raise(k - 1.0, ops.d_lower(alpha, g.clone()));
            let expect = -value(ops.d_raise(alpha, g.clone()));
            (value(dr) - value(rd) - expect).norm()
        }
        OperatorRelation::LowerWithL => {
            let dl = ops.d_lower(alpha, ops.lower(g.clone()));
            let ld = ops.lower(ops.d_lower(alpha, g.clone()));
            (value(dl) - value(ld)).norm()
        }
        OperatorRelation::RaiseWithR => {
            let dr = ops.d_raise(alpha, ops.r_raise(k, g.clone()));
            let rd = ops.r_raise(k + 1.0, ops.d_raise(alpha, g.clone()));
            (value(dr) - value(rd)).norm()
        }
        OperatorRelation::RaiseWithL => {
            let dl = ops.d_raise(alpha, ops.lower(g.clone()));
            let ld = ops.lower(ops.d_raise(alpha, g.clone()));
            let expect = value(ops.d_lower(alpha, g.clone()));
            (value(dl) - value(ld) - expect).norm()
        }
    };
    if !residual.is_finite() {
        return Err(Error::NonFinite("operator_algebra_check"));
    }
    Ok(residual)
}
