//! Exact formal q-series with rational exponents.
//!
//! Coefficients are either EXACT (Gaussian rationals, optionally multiplied by
//! tagged transcendental constants like (2/pi) arcsin(1/sqrt(3))) or NUMERIC
//! (complex doubles). The exact layer is what makes the boundary-series and
//! proof-identity checks exact rather than approximate.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use num_traits::{One, Zero};

use crate::generr::{zero_value, FalseThetaSpec, ZeroValue};
use crate::lattice::{ConjugacyClass, QuadraticLattice};
use crate::rat::{exact_half_integer_phase, rat, rat_i, rat_sign, rat_to_f64, GRat, Rational};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// tagged constants
// ---------------------------------------------------------------------------

/// Basis constants for exact coefficients. `AsinSqrt(rho)` stands for
/// (2/pi) arcsin(sqrt(rho)); the values with rational arcsine (rho = 1/4, 1/2,
/// 3/4, 1) are folded into `One` at construction time, so the keys that occur
/// in practice are rho = 1/3 and rho = 1/9.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConstKey {
    One,
    AsinSqrt(Rational),
}

impl ConstKey {
    pub fn value(&self) -> f64 {
        match self {
            ConstKey::One => 1.0,
            ConstKey::AsinSqrt(rho) => 2.0 / PI * rat_to_f64(*rho).sqrt().asin(),
        }
    }

    pub fn json_name(&self) -> String {
        match self {
            ConstKey::One => "one".into(),
            ConstKey::AsinSqrt(r) if *r == rat(1, 3) => "asin_1_sqrt3".into(),
            ConstKey::AsinSqrt(r) if *r == rat(1, 9) => "asin_1_3".into(),
            ConstKey::AsinSqrt(r) => format!("asin_sqrt({}/{})", r.numer(), r.denom()),
        }
    }
}

/// An exact coefficient: a Gaussian-rational combination of basis constants.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ExactCoeff {
    pub parts: BTreeMap<ConstKey, GRat>,
}

impl ExactCoeff {
    pub fn from_grat(g: GRat) -> Self {
        let mut parts = BTreeMap::new();
        if !g.is_zero() {
            parts.insert(ConstKey::One, g);
        }
        ExactCoeff { parts }
    }

    pub fn from_rational(r: Rational) -> Self {
        Self::from_grat(GRat::from_rational(r))
    }

    pub fn one() -> Self {
        Self::from_grat(GRat::one())
    }

    pub fn from_zero_value(z: &ZeroValue) -> Result<Self> {
        match z {
            ZeroValue::Rat(r) => Ok(Self::from_rational(*r)),
            ZeroValue::AsinSqrt { rho, sign } => {
                let mut parts = BTreeMap::new();
                parts.insert(ConstKey::AsinSqrt(*rho), GRat::from_int(*sign));
                Ok(ExactCoeff { parts })
            }
            ZeroValue::Numeric(_) => Err(Error::ExactUnsupported(
                "numeric-only boundary constant in exact mode".into(),
            )),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn add(&self, other: &ExactCoeff) -> ExactCoeff {
        let mut parts = self.parts.clone();
        for (k, v) in &other.parts {
            let entry = parts.entry(*k).or_insert_with(GRat::zero);
            *entry = entry.add(v);
            if entry.is_zero() {
                parts.remove(k);
            }
        }
        ExactCoeff { parts }
    }

    pub fn neg(&self) -> ExactCoeff {
        ExactCoeff { parts: self.parts.iter().map(|(k, v)| (*k, v.neg())).collect() }
    }

    pub fn scale(&self, g: &GRat) -> ExactCoeff {
        if g.is_zero() {
            return ExactCoeff::default();
        }
        ExactCoeff { parts: self.parts.iter().map(|(k, v)| (*k, v.mul(g))).collect() }
    }

    /// Product; defined when at most one factor carries non-rational tags.
    pub fn mul(&self, other: &ExactCoeff) -> Result<ExactCoeff> {
        let self_tagged = self.parts.keys().any(|k| *k != ConstKey::One);
        let other_tagged = other.parts.keys().any(|k| *k != ConstKey::One);
        if self_tagged && other_tagged {
            return Err(Error::ExactUnsupported("product of two tagged constants".into()));
        }
        let (plain, tagged) = if self_tagged { (other, self) } else { (self, other) };
        let g = plain.parts.get(&ConstKey::One).cloned().unwrap_or_else(GRat::zero);
        Ok(tagged.scale(&g))
    }

    pub fn to_complex(&self) -> Complex64 {
        self.parts.iter().map(|(k, v)| v.to_complex() * k.value()).sum()
    }

    /// The value as a plain rational, if the coefficient is untagged and real.
    pub fn as_rational(&self) -> Option<Rational> {
        if self.parts.is_empty() {
            return Some(Rational::zero());
        }
        if self.parts.len() == 1 {
            if let Some(g) = self.parts.get(&ConstKey::One) {
                if g.im.is_zero() {
                    return Some(g.re);
                }
            }
        }
        None
    }
}

/// A series coefficient in one of the two modes.
#[derive(Clone, Debug, PartialEq)]
pub enum Coeff {
    Exact(ExactCoeff),
    Numeric(Complex64),
}

impl Coeff {
    pub fn zero() -> Self {
        Coeff::Exact(ExactCoeff::default())
    }

    pub fn one() -> Self {
        Coeff::Exact(ExactCoeff::one())
    }

    pub fn from_int(n: i64) -> Self {
        Coeff::Exact(ExactCoeff::from_rational(rat_i(n)))
    }

    pub fn from_rational(r: Rational) -> Self {
        Coeff::Exact(ExactCoeff::from_rational(r))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Coeff::Exact(e) => e.is_zero(),
            Coeff::Numeric(v) => *v == Complex64::new(0.0, 0.0),
        }
    }

    pub fn to_complex(&self) -> Complex64 {
        match self {
            Coeff::Exact(e) => e.to_complex(),
            Coeff::Numeric(v) => *v,
        }
    }

    pub fn to_numeric(&self) -> Coeff {
        Coeff::Numeric(self.to_complex())
    }

    pub fn add(&self, other: &Coeff) -> Coeff {
        match (self, other) {
            (Coeff::Exact(a), Coeff::Exact(b)) => Coeff::Exact(a.add(b)),
            _ => Coeff::Numeric(self.to_complex() + other.to_complex()),
        }
    }

    pub fn neg(&self) -> Coeff {
        match self {
            Coeff::Exact(a) => Coeff::Exact(a.neg()),
            Coeff::Numeric(v) => Coeff::Numeric(-v),
        }
    }

    pub fn mul(&self, other: &Coeff) -> Result<Coeff> {
        match (self, other) {
            (Coeff::Exact(a), Coeff::Exact(b)) => Ok(Coeff::Exact(a.mul(b)?)),
            _ => Ok(Coeff::Numeric(self.to_complex() * other.to_complex())),
        }
    }
}

// ---------------------------------------------------------------------------
// the series type
// ---------------------------------------------------------------------------

/// A formal series sum_e c_e q^e with exact rational exponents e <= order.
#[derive(Clone, Debug, PartialEq)]
pub struct QSeries {
    pub terms: BTreeMap<Rational, Coeff>,
    pub order: Rational,
}

impl QSeries {
    pub fn zero(order: Rational) -> Self {
        QSeries { terms: BTreeMap::new(), order }
    }

    pub fn constant(c: Coeff, order: Rational) -> Self {
        let mut s = Self::zero(order);
        s.add_term(Rational::zero(), c);
        s
    }

    pub fn add_term(&mut self, exponent: Rational, c: Coeff) {
        if exponent > self.order || c.is_zero() {
            return;
        }
        let entry = self.terms.entry(exponent).or_insert_with(Coeff::zero);
        *entry = entry.add(&c);
        if entry.is_zero() {
            self.terms.remove(&exponent);
        }
    }

    pub fn coefficient(&self, exponent: Rational) -> Coeff {
        self.terms.get(&exponent).cloned().unwrap_or_else(Coeff::zero)
    }

    pub fn leading_exponent(&self) -> Option<Rational> {
        self.terms.keys().next().copied()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn truncate(&self, order: Rational) -> QSeries {
        QSeries {
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| **e <= order)
                .map(|(e, c)| (*e, c.clone()))
                .collect(),
            order: order.min(self.order),
        }
    }

    pub fn add(&self, other: &QSeries) -> QSeries {
        let order = self.order.min(other.order);
        let mut out = QSeries::zero(order);
        for (e, c) in self.terms.iter().chain(other.terms.iter()) {
            out.add_term(*e, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &QSeries) -> QSeries {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> QSeries {
        QSeries { terms: self.terms.iter().map(|(e, c)| (*e, c.neg())).collect(), order: self.order }
    }

    pub fn scale(&self, c: &Coeff) -> Result<QSeries> {
        let mut out = QSeries::zero(self.order);
        for (e, t) in &self.terms {
            out.add_term(*e, t.mul(c)?);
        }
        Ok(out)
    }

    pub fn scale_rational(&self, r: Rational) -> QSeries {
        self.scale(&Coeff::from_rational(r)).expect("rational scaling is always exact")
    }

    /// Multiply by q^shift.
    pub fn shift_exponents(&self, shift: Rational) -> QSeries {
        QSeries {
            terms: self.terms.iter().map(|(e, c)| (*e + shift, c.clone())).collect(),
            order: self.order + shift,
        }
    }

    pub fn mul(&self, other: &QSeries) -> Result<QSeries> {
        let la = self.leading_exponent().unwrap_or_else(Rational::zero);
        let lb = other.leading_exponent().unwrap_or_else(Rational::zero);
        let order = (self.order + lb).min(other.order + la);
        let mut out = QSeries::zero(order);
        for (ea, ca) in &self.terms {
            if *ea + lb > order {
                break;
            }
            for (eb, cb) in &other.terms {
                let e = *ea + *eb;
                if e > order {
                    break;
                }
                out.add_term(e, ca.mul(cb)?);
            }
        }
        Ok(out)
    }

    /// Exact long division; the divisor's leading coefficient must be an
    /// invertible Gaussian rational without tags.
    pub fn div(&self, denom: &QSeries) -> Result<QSeries> {
        let lb = denom
            .leading_exponent()
            .ok_or_else(|| Error::InvalidArgument("division by the zero series".into()))?;
        let lead = match denom.coefficient(lb) {
            Coeff::Exact(e) => e,
            Coeff::Numeric(_) => {
                return Err(Error::ExactUnsupported("division requires an exact divisor".into()))
            }
        };
        let lead_g = lead
            .parts
            .get(&ConstKey::One)
            .cloned()
            .filter(|_| lead.parts.len() == 1)
            .ok_or_else(|| Error::ExactUnsupported("tagged leading coefficient".into()))?;
        let d = lead_g.re * lead_g.re + lead_g.im * lead_g.im;
        let lead_inv = GRat::new(lead_g.re / d, -lead_g.im / d);
        let la = self.leading_exponent().unwrap_or_else(Rational::zero);
        let order = (self.order - lb).min(la + denom.order - lb - lb);
        let mut rem = self.clone();
        let mut out = QSeries::zero(order);
        while let Some(e) = rem.leading_exponent() {
            let qe = e - lb;
            if qe > order {
                break;
            }
            let c = rem.coefficient(e).mul(&Coeff::Exact(ExactCoeff::from_grat(lead_inv)))?;
            out.add_term(qe, c.clone());
            // rem -= c q^{qe} * denom
            for (eb, cb) in &denom.terms {
                rem.add_term(qe + *eb, c.mul(cb)?.neg());
            }
        }
        Ok(out)
    }

    pub fn to_numeric(&self) -> QSeries {
        QSeries {
            terms: self.terms.iter().map(|(e, c)| (*e, c.to_numeric())).collect(),
            order: self.order,
        }
    }

    /// Exact equality of all coefficients up to the given order.
    pub fn eq_to_order(&self, other: &QSeries, order: Rational) -> bool {
        let a = self.truncate(order);
        let b = other.truncate(order);
        a.terms == b.terms
    }

    /// Largest |difference| of numeric coefficients up to the given order.
    pub fn max_coeff_distance(&self, other: &QSeries, order: Rational) -> f64 {
        let mut exps: std::collections::BTreeSet<Rational> = Default::default();
        exps.extend(self.terms.keys().filter(|e| **e <= order).copied());
        exps.extend(other.terms.keys().filter(|e| **e <= order).copied());
        exps.iter()
            .map(|e| {
                (self.coefficient(*e).to_complex() - other.coefficient(*e).to_complex()).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Evaluate at tau in H: sum c_e e^{2 pi i e tau}, with a geometric-decay
    /// tail estimate anchored at the truncation order.
    pub fn eval(&self, tau: Complex64) -> Result<(Complex64, f64)> {
        if tau.im <= 0.0 {
            return Err(Error::InvalidArgument("evaluation point must lie in H".into()));
        }
        let y = tau.im;
        let mut acc = Complex64::new(0.0, 0.0);
        for (e, c) in &self.terms {
            let ef = rat_to_f64(*e);
            acc += c.to_complex() * (2.0 * PI * crate::numerics::I * ef * tau).exp();
        }
        if !acc.re.is_finite() || !acc.im.is_finite() {
            return Err(Error::NonFinite("eval_qseries"));
        }
        // tail bound: coefficients in the top quarter of the kept exponent
        // range set the scale; worst-case unit exponent spacing beyond order.
        let order_f = rat_to_f64(self.order);
        let lead_f = self.leading_exponent().map(rat_to_f64).unwrap_or(0.0);
        let top_cut = order_f - 0.25 * (order_f - lead_f);
        let top_max = self
            .terms
            .iter()
            .filter(|(e, _)| rat_to_f64(**e) >= top_cut)
            .map(|(_, c)| c.to_complex().norm())
            .fold(0.0, f64::max)
            .max(1e-30);
        let ratio = (-2.0 * PI * y).exp();
        let tail = top_max * (-2.0 * PI * y * order_f).exp() * ratio / (1.0 - ratio);
        Ok((acc, tail))
    }

    /// Evaluate and enforce the tail tolerance.
    pub fn eval_checked(&self, tau: Complex64, tolerance: f64) -> Result<Complex64> {
        let (v, tail) = self.eval(tau)?;
        if tail > tolerance {
            return Err(Error::TailTooLarge { estimate: tail, tolerance });
        }
        Ok(v)
    }

    // ----- serialization ---------------------------------------------------

    pub fn to_json(&self) -> serde_json::Value {
        let rat_str = |r: &Rational| format!("{}/{}", r.numer(), r.denom());
        let terms: Vec<serde_json::Value> = self
            .terms
            .iter()
            .map(|(e, c)| {
                let coeff = match c {
                    Coeff::Exact(ec) => {
                        let mut map = serde_json::Map::new();
                        for (k, g) in &ec.parts {
                            map.insert(
                                k.json_name(),
                                serde_json::json!({
                                    "re": rat_str(&g.re),
                                    "im": rat_str(&g.im),
                                }),
                            );
                        }
                        serde_json::Value::Object(map)
                    }
                    Coeff::Numeric(v) => serde_json::json!({ "re": v.re, "im": v.im }),
                };
                serde_json::json!({ "exponent": rat_str(e), "coeff": coeff })
            })
            .collect();
        serde_json::json!({ "order": rat_str(&self.order), "terms": terms })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<QSeries> {
        let order = parse_rational(
            v.get("order")
                .and_then(|o| o.as_str())
                .ok_or_else(|| Error::InvalidArgument("missing order".into()))?,
        )?;
        let mut out = QSeries::zero(order);
        let terms = v
            .get("terms")
            .and_then(|t| t.as_array())
            .ok_or_else(|| Error::InvalidArgument("missing terms".into()))?;
        for t in terms {
            let e = parse_rational(
                t.get("exponent")
                    .and_then(|x| x.as_str())
                    .ok_or_else(|| Error::InvalidArgument("missing exponent".into()))?,
            )?;
            let cv = t
                .get("coeff")
                .and_then(|x| x.as_object())
                .ok_or_else(|| Error::InvalidArgument("missing coeff".into()))?;
            let coeff = if cv.contains_key("re") && cv["re"].is_number() {
                Coeff::Numeric(Complex64::new(
                    cv["re"].as_f64().unwrap_or(0.0),
                    cv.get("im").and_then(|x| x.as_f64()).unwrap_or(0.0),
                ))
            } else {
                let mut parts = BTreeMap::new();
                for (name, val) in cv {
                    let key = match name.as_str() {
                        "one" => ConstKey::One,
                        "asin_1_sqrt3" => ConstKey::AsinSqrt(rat(1, 3)),
                        "asin_1_3" => ConstKey::AsinSqrt(rat(1, 9)),
                        other => {
                            let inner = other
                                .strip_prefix("asin_sqrt(")
                                .and_then(|s| s.strip_suffix(')'))
                                .ok_or_else(|| {
                                    Error::InvalidArgument(format!("unknown tag {other}"))
                                })?;
                            ConstKey::AsinSqrt(parse_rational(inner)?)
                        }
                    };
                    let re = parse_rational(
                        val.get("re")
                            .and_then(|x| x.as_str())
                            .ok_or_else(|| Error::InvalidArgument("bad tag value".into()))?,
                    )?;
                    let im = parse_rational(
                        val.get("im")
                            .and_then(|x| x.as_str())
                            .ok_or_else(|| Error::InvalidArgument("bad tag value".into()))?,
                    )?;
                    parts.insert(key, GRat::new(re, im));
                }
                Coeff::Exact(ExactCoeff { parts })
            };
            out.add_term(e, coeff);
        }
        Ok(out)
    }
}

/// Parse "p/q" or "p" into a rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let parts: Vec<&str> = s.split('/').collect();
    let bad = || Error::InvalidArgument(format!("bad rational literal: {s}"));
    match parts.as_slice() {
        [n] => Ok(rat_i(n.trim().parse::<i64>().map_err(|_| bad())?)),
        [n, d] => Ok(rat(
            n.trim().parse::<i64>().map_err(|_| bad())?,
            d.trim().parse::<i64>().map_err(|_| bad())?,
        )),
        _ => Err(bad()),
    }
}

// ---------------------------------------------------------------------------
// named series
// ---------------------------------------------------------------------------

/// Dedekind eta: q^{1/24} prod (1 - q^n), expanded by the pentagonal number
/// theorem.
pub fn eta(order: Rational) -> QSeries {
    let mut s = QSeries::zero(order);
    let mut k: i64 = 0;
    loop {
        let mut hit = false;
        let signs: &[i64] = if k == 0 { &[1] } else { &[1, -1] };
        for &sgn in signs {
            let kk = sgn * k;
            let e = rat(kk * (3 * kk - 1), 2) + rat(1, 24);
            if e <= order {
                hit = true;
                let sign = if kk.rem_euclid(2) == 0 { 1 } else { -1 };
                s.add_term(e, Coeff::from_int(sign));
            }
        }
        if !hit && k > 0 {
            break;
        }
        k += 1;
    }
    s
}

/// eta^m.
pub fn eta_pow(m: u32, order: Rational) -> QSeries {
    // raise the internal order so the product keeps all wanted exponents
    let base = eta(order + rat_i(2));
    let mut acc = base.clone();
    for _ in 1..m {
        acc = acc.mul(&base).expect("eta coefficients are rational");
    }
    acc.truncate(order)
}

/// Unary theta function theta_{m,r}(tau) = sum_{n in Z + r/2m} q^{m n^2}
/// (deriv = 0) or its normalized first z-derivative, which inserts a factor n
/// (deriv = 1).
pub fn unary_theta(m: i64, r: i64, deriv: u32, order: Rational) -> Result<QSeries> {
    if m < 1 {
        return Err(Error::InvalidArgument("theta modulus must be >= 1".into()));
    }
    if deriv > 1 {
        return Err(Error::InvalidArgument("theta derivative order is 0 or 1".into()));
    }
    let mut s = QSeries::zero(order);
    let res = rat(r, 2 * m);
    let bound = (rat_to_f64(order).max(0.0) / m as f64).sqrt() + 2.0;
    let lo = (-bound - rat_to_f64(res)) as i64 - 2;
    let hi = (bound - rat_to_f64(res)) as i64 + 2;
    for j in lo..=hi {
        let n = rat_i(j) + res;
        let e = n * n * rat_i(m);
        if e <= order {
            let c = if deriv == 0 { Rational::one() } else { n };
            s.add_term(e, Coeff::from_rational(c));
        }
    }
    Ok(s)
}

/// Lattice theta function of a coset: sum over Z^n + mu of q^{pQ(n)}.
pub fn lattice_theta(
    lat: &QuadraticLattice,
    class: &ConjugacyClass,
    order: Rational,
) -> Result<QSeries> {
    let mut s = QSeries::zero(order);
    for v in lat.enumerate_points_exact(&class.shift, order)? {
        s.add_term(lat.working_quad(&v)?, Coeff::one());
    }
    Ok(s)
}

/// Lattice sum with a polynomial insertion: sum P(n) q^{pQ(n)}.
pub fn weighted_lattice_theta(
    lat: &QuadraticLattice,
    shift: &[Rational],
    poly: &crate::generr::Poly,
    order: Rational,
) -> Result<QSeries> {
    let mut s = QSeries::zero(order);
    for v in lat.enumerate_points_exact(shift, order)? {
        s.add_term(lat.working_quad(&v)?, Coeff::from_rational(poly.eval_rat(&v)));
    }
    Ok(s)
}

/// The quasimodular Eisenstein series E_2 = 1 - 24 sum sigma_1(n) q^n.
pub fn eisenstein_e2(order: Rational) -> QSeries {
    let mut s = QSeries::zero(order);
    s.add_term(Rational::zero(), Coeff::one());
    let top = rat_to_f64(order).floor() as i64;
    for n in 1..=top {
        let sigma: i64 = (1..=n).filter(|d| n % d == 0).sum();
        s.add_term(rat_i(n), Coeff::from_int(-24 * sigma));
    }
    s
}

/// The false theta function of a spec:
/// sum sgn(B(M, n)) P(n) e^{pi i B(n, l)} q^{Q(n)} over n in Lambda + mu + l/2,
/// exact (the phase must be a fourth root of unity, i.e. B(n, l) half-integral).
pub fn false_theta(spec: &FalseThetaSpec, order: Rational) -> Result<QSeries> {
    let mut s = QSeries::zero(order);
    let shift = spec.total_shift();
    for v in spec.lattice.enumerate_points_exact(&shift, order)? {
        let mut sign = 1i64;
        for j in 0..spec.vectors.r() {
            sign *= rat_sign(spec.vectors.pairing(j, &v));
            if sign == 0 {
                break;
            }
        }
        if sign == 0 {
            continue;
        }
        let phase_arg = spec.lattice.working_bilinear(&v, &spec.characteristic)?;
        let phase = exact_half_integer_phase(phase_arg).ok_or_else(|| {
            Error::ExactUnsupported(format!("non half-integral characteristic phase {phase_arg}"))
        })?;
        let c = GRat::from_rational(spec.insertion.eval_rat(&v) * rat_i(sign)).mul(&phase);
        s.add_term(spec.lattice.working_quad(&v)?, Coeff::Exact(ExactCoeff::from_grat(c)));
    }
    Ok(s)
}

/// Coefficient mode for assembled boundary series.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Numeric,
}

/// The full false modular form at the boundary w -> tau + i infinity:
/// the false theta series plus, for every nonempty subset S of the sign
/// vectors, the E_{Q,M_S}(0) correction restricted to B(M_S, n) = 0.
pub fn false_boundary(spec: &FalseThetaSpec, order: Rational, mode: Mode) -> Result<QSeries> {
    let mut total = false_theta(spec, order)?;
    let r = spec.vectors.r();
    let shift = spec.total_shift();
    let points = spec.lattice.enumerate_points_exact(&shift, order)?;
    for mask in 1u32..(1 << r) {
        let subset: Vec<usize> = (0..r).filter(|j| mask & (1 << j) != 0).collect();
        let zv = zero_value(&spec.vectors.subset(&subset))?;
        if zv.is_zero() {
            continue;
        }
        let zc = match mode {
            Mode::Exact => Coeff::Exact(ExactCoeff::from_zero_value(&zv)?),
            Mode::Numeric => Coeff::Numeric(Complex64::new(zv.to_f64(), 0.0)),
        };
        for v in &points {
            if subset.iter().any(|&j| !spec.vectors.pairing(j, v).is_zero()) {
                continue;
            }
            let mut sign = 1i64;
            for j in (0..r).filter(|j| !subset.contains(j)) {
                sign *= rat_sign(spec.vectors.pairing(j, v));
                if sign == 0 {
                    break;
                }
            }
            if sign == 0 {
                continue;
            }
            let phase_arg = spec.lattice.working_bilinear(v, &spec.characteristic)?;
            let phase = exact_half_integer_phase(phase_arg).ok_or_else(|| {
                Error::ExactUnsupported("non half-integral characteristic phase".into())
            })?;
            let g = GRat::from_rational(spec.insertion.eval_rat(v) * rat_i(sign)).mul(&phase);
            let term = zc.mul(&Coeff::Exact(ExactCoeff::from_grat(g)))?;
            total.add_term(spec.lattice.working_quad(v)?, term);
        }
    }
    if mode == Mode::Numeric {
        total = total.to_numeric();
    }
    Ok(total)
}
