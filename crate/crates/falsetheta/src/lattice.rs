//! Root-lattice data for A_n (n <= 3): Gram forms, conjugacy classes, point
//! enumeration, Weyl groups, Kostant partition functions and the coset
//! decompositions along fundamental weights.
//!
//! All arithmetic here is exact rational. Floats only appear as enumeration
//! bounds (with slack) before the exact filter.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use num_traits::{One, Signed, Zero};

use crate::rat::{
    rat_i, rat_to_f64, rm_from_int, rm_inverse, rm_mul_vec, rv_add, rv_sub,
    RatMat, RatVec, Rational,
};
use crate::{Error, Result};

/// A rank-n lattice with integer Gram matrix A; the working quadratic form is
/// scale * Q where Q(x) = x^T A x / 2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadraticLattice {
    pub rank: usize,
    pub gram: Vec<Vec<i64>>,
    pub scale: i64,
}

impl QuadraticLattice {
    pub fn new(gram: Vec<Vec<i64>>, scale: i64) -> Result<Self> {
        let n = gram.len();
        if gram.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidArgument("gram matrix must be square".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if gram[i][j] != gram[j][i] {
                    return Err(Error::InvalidArgument("gram matrix must be symmetric".into()));
                }
            }
        }
        if scale < 1 {
            return Err(Error::InvalidArgument("scale must be a positive integer".into()));
        }
        // positive definiteness: all leading principal minors > 0
        let rm = rm_from_int(&gram);
        for k in 1..=n {
            let minor: RatMat = (0..k).map(|i| rm[i][..k].to_vec()).collect();
            if !crate::rat::rm_det(&minor).is_positive() {
                return Err(Error::InvalidArgument(
                    "gram matrix must be positive definite".into(),
                ));
            }
        }
        Ok(QuadraticLattice { rank: n, gram, scale })
    }

    /// The A_n root lattice with Cartan Gram matrix, working form p * Q_n.
    pub fn a_n(n: usize, p: i64) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::InvalidArgument(format!("a_n supports 1 <= n <= 3, got {n}")));
        }
        let gram = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            2
                        } else if i.abs_diff(j) == 1 {
                            -1
                        } else {
                            0
                        }
                    })
                    .collect()
            })
            .collect();
        Self::new(gram, p)
    }

    /// The rank-1 lattice Z with Q(x) = x^2 / 2 (Gram matrix (1)).
    pub fn unary(scale: i64) -> Result<Self> {
        Self::new(vec![vec![1]], scale)
    }

    /// Unscaled bilinear form x^T A y.
    pub fn bilinear(&self, x: &[Rational], y: &[Rational]) -> Result<Rational> {
        if x.len() != self.rank || y.len() != self.rank {
            return Err(Error::DimensionMismatch { expected: self.rank, got: x.len().max(y.len()) });
        }
        let mut acc = Rational::zero();
        for i in 0..self.rank {
            for j in 0..self.rank {
                acc += x[i] * rat_i(self.gram[i][j]) * y[j];
            }
        }
        Ok(acc)
    }

    /// Unscaled quadratic form Q(x) = B(x, x) / 2.
    pub fn quad(&self, x: &[Rational]) -> Result<Rational> {
        Ok(self.bilinear(x, x)? / rat_i(2))
    }

    /// Working bilinear form scale * x^T A y.
    pub fn working_bilinear(&self, x: &[Rational], y: &[Rational]) -> Result<Rational> {
        Ok(self.bilinear(x, y)? * rat_i(self.scale))
    }

    /// Working quadratic form scale * Q(x).
    pub fn working_quad(&self, x: &[Rational]) -> Result<Rational> {
        Ok(self.quad(x)? * rat_i(self.scale))
    }

    /// Working Gram matrix scale * A as rationals.
    pub fn working_gram(&self) -> RatMat {
        self.gram
            .iter()
            .map(|row| row.iter().map(|&c| rat_i(c * self.scale)).collect())
            .collect()
    }

    /// Dual basis vectors beta_k with B(alpha_j, beta_k) = delta_{jk}
    /// (columns of A^{-1}, exact rationals).
    pub fn dual_basis(&self) -> Vec<RatVec> {
        let inv = rm_inverse(&rm_from_int(&self.gram));
        (0..self.rank).map(|k| (0..self.rank).map(|j| inv[j][k]).collect()).collect()
    }

    /// Weyl vector rho = sum of the dual basis vectors.
    pub fn weyl_vector(&self) -> RatVec {
        let inv = rm_inverse(&rm_from_int(&self.gram));
        rm_mul_vec(&inv, &vec![Rational::one(); self.rank])
    }

    /// |Lambda*/Lambda| of the working form: det(scale * A).
    pub fn discriminant(&self) -> i64 {
        let det = crate::rat::rm_det(&self.working_gram());
        det.to_integer()
    }

    /// Every v in Z^n + shift with working_quad(v) <= cutoff, exactly once,
    /// ordered lexicographically by integer parts.
    pub fn enumerate_points(&self, shift: &[Rational], cutoff: f64) -> Result<Vec<RatVec>> {
        if cutoff <= 0.0 {
            return Err(Error::InvalidArgument("enumeration cutoff must be positive".into()));
        }
        let bound = Rational::approximate_float(cutoff)
            .ok_or_else(|| Error::InvalidArgument("cutoff not representable".into()))?;
        self.enumerate_points_exact(shift, bound)
    }

    /// Exact-rational-cutoff variant used by the formal series code.
    pub fn enumerate_points_exact(&self, shift: &[Rational], cutoff: Rational) -> Result<Vec<RatVec>> {
        if shift.len() != self.rank {
            return Err(Error::DimensionMismatch { expected: self.rank, got: shift.len() });
        }
        let n = self.rank;
        // Cholesky of the working quadratic form scale * A / 2 (f64, for bounds only)
        let mut m = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in 0..n {
                m[i][j] = (self.gram[i][j] * self.scale) as f64 / 2.0;
            }
        }
        let mut r = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in i..n {
                let mut s = m[i][j];
                for k in 0..i {
                    s -= r[k][i] * r[k][j];
                }
                if i == j {
                    r[i][i] = s.sqrt();
                } else {
                    r[i][j] = s / r[i][i];
                }
            }
        }
        let shift_f: Vec<f64> = shift.iter().map(|&x| rat_to_f64(x)).collect();
        let budget = rat_to_f64(cutoff) * (1.0 + 1e-12) + 1e-9;
        let mut out: Vec<Vec<i64>> = Vec::new();
        let mut k = vec![0i64; n];
        // recurse from the last coordinate inward
        fn descend(
            level: usize,
            n: usize,
            r: &[Vec<f64>],
            shift_f: &[f64],
            k: &mut Vec<i64>,
            remaining: f64,
            partial: &[f64],
            out: &mut Vec<Vec<i64>>,
        ) {
            let i = level;
            // y_i + c_i where c_i collects the already-fixed coordinates
            let c = partial[i];
            let half_width = remaining.max(0.0).sqrt() / r[i][i];
            let lo = (-half_width - c - shift_f[i]).ceil() as i64;
            let hi = (half_width - c - shift_f[i]).floor() as i64;
            for ki in lo..=hi {
                k[i] = ki;
                let yi = ki as f64 + shift_f[i] + c;
                let used = r[i][i] * r[i][i] * yi * yi;
                if i == 0 {
                    out.push(k.clone());
                } else {
                    let mut next_partial = partial.to_vec();
                    for j in 0..i {
                        next_partial[j] += r[j][i] / r[j][j] * (ki as f64 + shift_f[i]);
                    }
                    descend(i - 1, n, r, shift_f, k, remaining - used, &next_partial, out);
                }
            }
        }
        descend(n - 1, n, &r, &shift_f, &mut k, budget, &vec![0.0; n], &mut out);
        out.sort();
        // exact filter
        let mut points = Vec::with_capacity(out.len());
        for kv in out {
            let v: RatVec = kv.iter().zip(shift).map(|(&a, &s)| rat_i(a) + s).collect();
            if self.working_quad(&v)? <= cutoff {
                points.push(v);
            }
        }
        Ok(points)
    }
}

// ---------------------------------------------------------------------------
// conjugacy classes
// ---------------------------------------------------------------------------

/// A coset shift mu in Lambda*/Lambda, optionally with its canonical A_n label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConjugacyClass {
    pub shift: RatVec,
    pub label: Option<Vec<i64>>,
}

impl ConjugacyClass {
    pub fn zero(rank: usize) -> Self {
        ConjugacyClass { shift: vec![Rational::zero(); rank], label: Some(vec![0; rank]) }
    }

    pub fn from_shift(shift: RatVec) -> Self {
        ConjugacyClass { shift, label: None }
    }

    /// mu_n(s) = (1/p) sum_m s_m beta_m with the label reduced to canonical
    /// range (A_1: s in [0, 2p); A_2: s1 in [0, 3p), s2 in [0, p);
    /// A_3: s1 in [0, 4p), s2, s3 in [0, p)).
    pub fn a_n_class(lat: &QuadraticLattice, s: &[i64]) -> Result<Self> {
        let n = lat.rank;
        let p = lat.scale;
        if s.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: s.len() });
        }
        let canon = canonical_label(n, p, s);
        let betas = lat.dual_basis();
        let mut shift = vec![Rational::zero(); n];
        for (m, &sm) in canon.iter().enumerate() {
            shift = rv_add(&shift, &crate::rat::rv_scale(&betas[m], Rational::new(sm, p)));
        }
        Ok(ConjugacyClass { shift, label: Some(canon) })
    }

    /// Two classes are equal iff their shifts differ by a lattice vector.
    pub fn same_class(&self, other: &ConjugacyClass) -> bool {
        rv_sub(&self.shift, &other.shift).iter().all(|x| x.is_integer())
    }

    pub fn is_zero_class(&self) -> bool {
        self.shift.iter().all(|x| x.is_integer())
    }
}

/// Reduce an A_n label to the canonical range using the coset relations
/// (A_2: mu(s1+3p, s2) = mu(s1, s2+3p)... = mu(s1+p, s2+p) = mu(s);
///  A_3: mu(s1+2p, s2+p, s3) = mu(s1+p, s2, s3+p) = mu(s1+4p, s2, s3) = mu(s)).
pub fn canonical_label(n: usize, p: i64, s: &[i64]) -> Vec<i64> {
    match n {
        1 => vec![s[0].rem_euclid(2 * p)],
        2 => {
            let k = s[1].div_euclid(p);
            let s2 = s[1] - k * p;
            let s1 = (s[0] - k * p).rem_euclid(3 * p);
            vec![s1, s2]
        }
        3 => {
            let k2 = s[1].div_euclid(p);
            let s2 = s[1] - k2 * p;
            let k3 = s[2].div_euclid(p);
            let s3 = s[2] - k3 * p;
            let s1 = (s[0] - 2 * p * k2 - p * k3).rem_euclid(4 * p);
            vec![s1, s2, s3]
        }
        _ => s.to_vec(),
    }
}

/// All canonical classes of sqrt(p) A_n; (n+1) p^n of them.
pub fn all_classes(lat: &QuadraticLattice) -> Result<Vec<ConjugacyClass>> {
    let n = lat.rank;
    let p = lat.scale;
    let mut out = Vec::new();
    match n {
        1 => {
            for s in 0..2 * p {
                out.push(ConjugacyClass::a_n_class(lat, &[s])?);
            }
        }
        2 => {
            for s1 in 0..3 * p {
                for s2 in 0..p {
                    out.push(ConjugacyClass::a_n_class(lat, &[s1, s2])?);
                }
            }
        }
        3 => {
            for s1 in 0..4 * p {
                for s2 in 0..p {
                    for s3 in 0..p {
                        out.push(ConjugacyClass::a_n_class(lat, &[s1, s2, s3])?);
                    }
                }
            }
        }
        _ => return Err(Error::InvalidArgument("all_classes supports rank <= 3".into())),
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Weyl groups
// ---------------------------------------------------------------------------

/// A Weyl group element of A_n as a permutation of {1, ..., n+1} together
/// with its integer matrix action on alpha-coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeylElement {
    pub perm: Vec<usize>,
    pub matrix: Vec<Vec<i64>>,
    pub length: usize,
}

impl WeylElement {
    pub fn apply(&self, v: &[Rational]) -> RatVec {
        (0..v.len())
            .map(|i| {
                (0..v.len()).fold(Rational::zero(), |acc, j| acc + rat_i(self.matrix[i][j]) * v[j])
            })
            .collect()
    }

    pub fn sign(&self) -> i64 {
        if self.length % 2 == 0 {
            1
        } else {
            -1
        }
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for p in out {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, p.len());
                next.push(q);
            }
        }
        out = next;
    }
    // normalize: each p maps position j to p[j]
    out.sort();
    out
}

/// All (n+1)! Weyl elements of A_n via the permutation action on Z^{n+1}.
pub fn weyl_group(n: usize) -> Result<Vec<WeylElement>> {
    if !(1..=3).contains(&n) {
        return Err(Error::InvalidArgument(format!("weyl_group supports 1 <= n <= 3, got {n}")));
    }
    let mut out = Vec::new();
    for perm in permutations(n + 1) {
        // w(alpha_j) = e_{perm(j)} - e_{perm(j+1)} expressed in alpha-coordinates
        // via partial sums of the Z^{n+1} coordinates.
        let mut matrix = vec![vec![0i64; n]; n];
        for j in 0..n {
            let mut coords = vec![0i64; n + 1];
            coords[perm[j]] += 1;
            coords[perm[j + 1]] -= 1;
            let mut acc = 0i64;
            for (k, row) in matrix.iter_mut().enumerate().take(n) {
                acc += coords[k];
                row[j] = acc;
            }
        }
        let mut length = 0;
        for a in 0..=n {
            for b in a + 1..=n {
                if perm[a] > perm[b] {
                    length += 1;
                }
            }
        }
        out.push(WeylElement { perm, matrix, length });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Kostant partition function
// ---------------------------------------------------------------------------

fn positive_roots(n: usize) -> Vec<Vec<i64>> {
    let mut roots = Vec::new();
    for k in 0..n {
        for l in k..n {
            let mut r = vec![0i64; n];
            for item in r.iter_mut().take(l + 1).skip(k) {
                *item = 1;
            }
            roots.push(r);
        }
    }
    roots
}

fn kostant_memoized(n: usize, roots: &[Vec<i64>], j: usize, v: &[i64]) -> u64 {
    if v.iter().all(|&c| c == 0) {
        return 1;
    }
    if j == 0 || v.iter().any(|&c| c < 0) {
        return 0;
    }
    static MEMO: OnceLock<Mutex<HashMap<(usize, usize, Vec<i64>), u64>>> = OnceLock::new();
    let memo = MEMO.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (n, j, v.to_vec());
    if let Some(&cached) = memo.lock().unwrap().get(&key) {
        return cached;
    }
    let root = &roots[j - 1];
    let mut total = 0u64;
    let mut rem = v.to_vec();
    loop {
        total += kostant_memoized(n, roots, j - 1, &rem);
        for (c, r) in rem.iter_mut().zip(root) {
            *c -= r;
        }
        if rem.iter().any(|&c| c < 0) {
            break;
        }
    }
    memo.lock().unwrap().insert(key, total);
    total
}

/// Number of ways to write v as a nonnegative integer combination of the
/// positive roots of A_n (dynamic programming over the root list).
pub fn kostant(n: usize, v: &[Rational]) -> Result<u64> {
    if !(1..=3).contains(&n) {
        return Err(Error::InvalidArgument(format!("kostant supports 1 <= n <= 3, got {n}")));
    }
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    if !v.iter().all(|x| x.is_integer()) {
        return Err(Error::InvalidArgument("kostant requires an integral vector".into()));
    }
    let vi: Vec<i64> = v.iter().map(|x| x.to_integer()).collect();
    let roots = positive_roots(n);
    Ok(kostant_memoized(n, &roots, roots.len(), &vi))
}

// ---------------------------------------------------------------------------
// coset decompositions along fundamental weights
// ---------------------------------------------------------------------------

/// Description of the orthogonal complement in a decomposition branch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Complement {
    /// One orthogonal A_1 line along alpha_{line} with class label s.
    A1 { line: usize, s: i64 },
    /// Two mutually orthogonal A_1 lines (A_3 split along beta_2).
    A1Pair { lines: (usize, usize), s: (i64, i64) },
    /// An A_2 sublattice along the given alpha lines with class label s.
    A2 { lines: (usize, usize), s: (i64, i64) },
}

/// One branch of a coset decomposition: the points are
/// beta_scale * (Z + line_residue) * beta_k  (+)  complement points.
/// The unary theta function of the beta_k line is theta_{theta_modulus,
/// theta_residue}.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecompBranch {
    pub index: i64,
    pub beta_scale: i64,
    pub line_residue: Rational,
    pub theta_modulus: i64,
    pub theta_residue: i64,
    pub complement: Complement,
}

/// Decompose A_n + mu_n(s) into the span of beta_k and its orthogonal
/// complement; exact residue data per branch.
pub fn decompose(lat: &QuadraticLattice, k: usize, class: &ConjugacyClass) -> Result<Vec<DecompBranch>> {
    let n = lat.rank;
    let p = lat.scale;
    let s = class
        .label
        .clone()
        .ok_or_else(|| Error::InvalidArgument("decompose requires a labeled A_n class".into()))?;
    match (n, k) {
        (2, 1) | (2, 2) => {
            let (sa, sb) = if k == 1 { (s[0], s[1]) } else { (s[1], s[0]) };
            let other_line = if k == 1 { 2 } else { 1 };
            Ok((0..2)
                .map(|d| DecompBranch {
                    index: d,
                    beta_scale: 3,
                    line_residue: Rational::new(2 * sa + sb + 3 * p * d, 6 * p),
                    theta_modulus: 3 * p,
                    theta_residue: 2 * sa + sb + 3 * p * d,
                    complement: Complement::A1 { line: other_line, s: sb - p * d },
                })
                .collect())
        }
        (3, 2) => Ok((0..2)
            .map(|d| DecompBranch {
                index: d,
                beta_scale: 2,
                line_residue: Rational::new(s[0] + 2 * s[1] + s[2] + 2 * p * d, 4 * p),
                theta_modulus: 2 * p,
                theta_residue: s[0] + 2 * s[1] + s[2] + 2 * p * d,
                complement: Complement::A1Pair { lines: (1, 3), s: (s[0] - p * d, s[2] - p * d) },
            })
            .collect()),
        (3, 1) => Ok((0..3)
            .map(|g| DecompBranch {
                index: g,
                beta_scale: 4,
                line_residue: Rational::new(3 * s[0] + 2 * s[1] + s[2] + 4 * p * g, 12 * p),
                theta_modulus: 6 * p,
                theta_residue: 3 * s[0] + 2 * s[1] + s[2] + 4 * p * g,
                complement: Complement::A2 { lines: (2, 3), s: (s[1] - p * g, s[2]) },
            })
            .collect()),
        (3, 3) => Ok((0..3)
            .map(|g| DecompBranch {
                index: g,
                beta_scale: 4,
                line_residue: Rational::new(s[0] + 2 * s[1] + 3 * s[2] + 4 * p * g, 12 * p),
                theta_modulus: 6 * p,
                theta_residue: s[0] + 2 * s[1] + 3 * s[2] + 4 * p * g,
                complement: Complement::A2 { lines: (1, 2), s: (s[0], s[1] - p * g) },
            })
            .collect()),
        _ => Err(Error::InvalidArgument(format!("no decomposition for rank {n}, direction {k}"))),
    }
}

/// Brute-force box-scan enumeration, the test oracle for enumerate_points.
pub fn box_scan(lat: &QuadraticLattice, shift: &[Rational], cutoff: Rational, half_width: i64) -> Result<Vec<RatVec>> {
    let n = lat.rank;
    let mut out = Vec::new();
    let mut k = vec![-half_width; n];
    loop {
        let v: RatVec = k.iter().zip(shift).map(|(&a, &s)| rat_i(a) + s).collect();
        if lat.working_quad(&v)? <= cutoff {
            out.push(v);
        }
        let mut pos = 0;
        loop {
            if pos == n {
                out.sort_by(|a, b| {
                    let ka: Vec<i64> = rv_sub(a, shift).iter().map(|x| x.to_integer()).collect();
                    let kb: Vec<i64> = rv_sub(b, shift).iter().map(|x| x.to_integer()).collect();
                    ka.cmp(&kb)
                });
                return Ok(out);
            }
            k[pos] += 1;
            if k[pos] <= half_width {
                break;
            }
            k[pos] = -half_width;
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::{rat, rvec};

    #[test]
    fn a2_gram_products() {
        let lat = QuadraticLattice::a_n(2, 1).unwrap();
        let a1 = rvec(&[1, 0]);
        let a2 = rvec(&[0, 1]);
        assert_eq!(lat.bilinear(&a1, &a2).unwrap(), rat_i(-1));
        assert_eq!(lat.bilinear(&a1, &a1).unwrap(), rat_i(2));
    }

    #[test]
    fn a3_dual_gram_matches_weight_inner_products() {
        let lat = QuadraticLattice::a_n(3, 1).unwrap();
        let betas = lat.dual_basis();
        let expect = [
            [rat(3, 4), rat(2, 4), rat(1, 4)],
            [rat(2, 4), rat(4, 4), rat(2, 4)],
            [rat(1, 4), rat(2, 4), rat(3, 4)],
        ];
        for j in 0..3 {
            for k in 0..3 {
                assert_eq!(lat.bilinear(&betas[j], &betas[k]).unwrap(), expect[j][k]);
            }
        }
    }

    #[test]
    fn quad_of_a3_weyl_vector() {
        let lat = QuadraticLattice::a_n(3, 1).unwrap();
        let rho = lat.weyl_vector();
        assert_eq!(rho, vec![rat(3, 2), rat_i(2), rat(3, 2)]);
        assert_eq!(lat.quad(&rho).unwrap(), rat(5, 2));
    }

    #[test]
    fn dual_basis_examples() {
        let a2 = QuadraticLattice::a_n(2, 1).unwrap();
        assert_eq!(a2.dual_basis()[0], vec![rat(2, 3), rat(1, 3)]);
        assert_eq!(a2.dual_basis()[1], vec![rat(1, 3), rat(2, 3)]);
        let a1 = QuadraticLattice::a_n(1, 1).unwrap();
        assert_eq!(a1.dual_basis()[0], vec![rat(1, 2)]);
        let a3 = QuadraticLattice::a_n(3, 1).unwrap();
        assert_eq!(a3.dual_basis()[1], vec![rat(1, 2), rat_i(1), rat(1, 2)]);
    }

    #[test]
    fn enumerate_a2_unit_ball() {
        let lat = QuadraticLattice::a_n(2, 1).unwrap();
        let pts = lat.enumerate_points(&[Rational::zero(), Rational::zero()], 1.0).unwrap();
        assert_eq!(pts.len(), 7);
        assert!(pts.contains(&rvec(&[1, 1])));
        assert!(pts.contains(&rvec(&[-1, -1])));
        assert!(pts.contains(&rvec(&[0, 0])));
    }

    #[test]
    fn enumerate_a1_below_shortest_vector() {
        let lat = QuadraticLattice::a_n(1, 3).unwrap();
        // shortest nonzero vector has working quad 3
        let pts = lat.enumerate_points(&[Rational::zero()], 2.9).unwrap();
        assert_eq!(pts, vec![rvec(&[0])]);
    }

    #[test]
    fn enumerate_a3_unit_ball_is_origin_plus_roots() {
        let lat = QuadraticLattice::a_n(3, 1).unwrap();
        let pts = lat.enumerate_points(&[Rational::zero(); 3], 1.0).unwrap();
        assert_eq!(pts.len(), 13);
    }

    #[test]
    fn enumerate_matches_box_scan_oracle() {
        for (n, p, cutoff) in [(2usize, 2i64, 20i64), (3, 1, 12), (2, 3, 50), (1, 2, 50)] {
            let lat = QuadraticLattice::a_n(n, p).unwrap();
            let class = ConjugacyClass::a_n_class(&lat, &vec![1; n]).unwrap();
            let fast = lat.enumerate_points_exact(&class.shift, rat_i(cutoff)).unwrap();
            let slow = box_scan(&lat, &class.shift, rat_i(cutoff), 14).unwrap();
            assert_eq!(fast, slow, "mismatch for A_{n}, p = {p}");
        }
    }

    #[test]
    fn weyl_group_sizes_and_parity() {
        let w1 = weyl_group(1).unwrap();
        assert_eq!(w1.len(), 2);
        let nonid = w1.iter().find(|w| w.length == 1).unwrap();
        assert_eq!(nonid.apply(&rvec(&[1])), rvec(&[-1]));
        let w2 = weyl_group(2).unwrap();
        assert_eq!(w2.len(), 6);
        assert_eq!(w2.iter().map(|w| w.sign()).sum::<i64>(), 0);
        let w3 = weyl_group(3).unwrap();
        assert_eq!(w3.len(), 24);
    }

    #[test]
    fn weyl_elements_preserve_gram_and_have_parity_determinant() {
        for n in 1..=3 {
            let lat = QuadraticLattice::a_n(n, 1).unwrap();
            for w in weyl_group(n).unwrap() {
                // w^T A w = A
                let a = rm_from_int(&lat.gram);
                let wm: RatMat = rm_from_int(&w.matrix);
                let wt: RatMat = (0..n).map(|i| (0..n).map(|j| wm[j][i]).collect()).collect();
                let prod = crate::rat::rm_mul(&wt, &crate::rat::rm_mul(&a, &wm));
                assert_eq!(prod, a);
                // det = (-1)^length
                assert_eq!(crate::rat::rm_det(&wm), rat_i(w.sign()));
            }
        }
    }

    #[test]
    fn weyl_a3_signed_insertions_pair_up() {
        // the 24 elements realize only 12 distinct functions
        // alpha -> (-1)^l P_3(w(alpha)); each function twice
        let group = weyl_group(3).unwrap();
        let samples = [
            rvec(&[1, 2, 3]),
            vec![rat(1, 2), rat_i(1), rat(5, 2)],
            vec![rat(7, 2), rat_i(-2), rat(3, 2)],
            vec![rat(-5, 2), rat_i(4), rat(1, 2)],
        ];
        let p3 = |v: &RatVec| -> Rational {
            let sgn = |x: Rational| rat_i(crate::rat::rat_sign(x));
            sgn(v[0]) * sgn(v[1]) * sgn(v[2]) * (rat_i(4) * v[0] * v[1] * v[2] - v[1])
        };
        let mut fingerprints: HashMap<Vec<Rational>, usize> = HashMap::new();
        for w in &group {
            let fp: Vec<Rational> =
                samples.iter().map(|a| p3(&w.apply(a)) * rat_i(w.sign())).collect();
            *fingerprints.entry(fp).or_insert(0) += 1;
        }
        assert_eq!(fingerprints.len(), 12);
        assert!(fingerprints.values().all(|&c| c == 2));
    }

    #[test]
    fn kostant_a2_closed_form_on_grid() {
        for n1 in -6i64..34 {
            for n2 in -6i64..34 {
                let expect = if n1 >= 0 && n2 >= 0 { (n1.min(n2) + 1) as u64 } else { 0 };
                assert_eq!(kostant(2, &rvec(&[n1, n2])).unwrap(), expect);
            }
        }
    }

    #[test]
    fn kostant_a3_examples() {
        assert_eq!(kostant(3, &rvec(&[0, 0, 0])).unwrap(), 1);
        assert_eq!(kostant(2, &rvec(&[1, 1])).unwrap(), 2);
        // oracle: enumerate all combinations of the six positive roots
        let roots = positive_roots(3);
        let target = [1i64, 1, 1];
        let mut count = 0u64;
        let mut coeffs = [0i64; 6];
        'outer: loop {
            let mut v = [0i64; 3];
            for (c, r) in coeffs.iter().zip(&roots) {
                for i in 0..3 {
                    v[i] += c * r[i];
                }
            }
            if v == target {
                count += 1;
            }
            let mut pos = 0;
            loop {
                if pos == 6 {
                    break 'outer;
                }
                coeffs[pos] += 1;
                if coeffs[pos] <= 1 {
                    break;
                }
                coeffs[pos] = 0;
                pos += 1;
            }
        }
        assert_eq!(count, 4);
        assert_eq!(kostant(3, &rvec(&[1, 1, 1])).unwrap(), 4);
    }

    #[test]
    fn kostant_vanishes_outside_cone() {
        assert_eq!(kostant(3, &rvec(&[-1, 2, 1])).unwrap(), 0);
        assert_eq!(kostant(2, &rvec(&[3, -1])).unwrap(), 0);
    }

    #[test]
    fn canonical_labels() {
        assert_eq!(canonical_label(1, 2, &[-1]), vec![3]);
        assert_eq!(canonical_label(2, 2, &[1, 5]), vec![3, 1]);
        assert_eq!(canonical_label(3, 2, &[9, 3, -1]), vec![7, 1, 1]);
        // reducing must not change the class
        let lat = QuadraticLattice::a_n(2, 2).unwrap();
        let c1 = ConjugacyClass::a_n_class(&lat, &[1, 5]).unwrap();
        let raw = {
            let betas = lat.dual_basis();
            let mut shift = vec![Rational::zero(); 2];
            shift = rv_add(&shift, &crate::rat::rv_scale(&betas[0], rat(1, 2)));
            rv_add(&shift, &crate::rat::rv_scale(&betas[1], rat(5, 2)))
        };
        assert!(c1.same_class(&ConjugacyClass::from_shift(raw)));
    }

    #[test]
    fn decompose_a2_example() {
        let lat = QuadraticLattice::a_n(2, 2).unwrap();
        let class = ConjugacyClass::a_n_class(&lat, &[1, 0]).unwrap();
        let branches = decompose(&lat, 1, &class).unwrap();
        assert_eq!(branches.len(), 2);
        assert_eq!(branches[0].line_residue, rat(1, 6));
        match branches[0].complement {
            Complement::A1 { line: 2, s: 0 } => {}
            ref other => panic!("unexpected complement {other:?}"),
        }
        assert_eq!(branches[1].line_residue, rat(2, 3));
        match branches[1].complement {
            Complement::A1 { line: 2, s: -2 } => {}
            ref other => panic!("unexpected complement {other:?}"),
        }
    }

    #[test]
    fn decompose_a3_beta2_example() {
        let lat = QuadraticLattice::a_n(3, 4).unwrap();
        let class = ConjugacyClass::a_n_class(&lat, &[1, 2, 3]).unwrap();
        let branches = decompose(&lat, 2, &class).unwrap();
        assert_eq!(branches[0].line_residue, rat(1, 2));
        match branches[0].complement {
            Complement::A1Pair { lines: (1, 3), s: (1, 3) } => {}
            ref other => panic!("unexpected complement {other:?}"),
        }
    }

    /// Reassemble decomposition branches into lattice points and compare with
    /// direct enumeration (exact set equality).
    #[test]
    fn decompose_reassembles_to_the_coset() {
        let cutoff = rat_i(20);
        for (p, s) in [(2i64, [1i64, 0]), (2, [3, 1]), (3, [4, 2])] {
            let lat = QuadraticLattice::a_n(2, p).unwrap();
            let class = ConjugacyClass::a_n_class(&lat, &s).unwrap();
            let direct: std::collections::BTreeSet<Vec<Rational>> = lat
                .enumerate_points_exact(&class.shift, cutoff)
                .unwrap()
                .into_iter()
                .collect();
            for k in [1usize, 2] {
                let betas = lat.dual_basis();
                let mut rebuilt: std::collections::BTreeSet<Vec<Rational>> = Default::default();
                for br in decompose(&lat, k, &class).unwrap() {
                    let other = match br.complement {
                        Complement::A1 { line, s } => (line, s),
                        _ => unreachable!(),
                    };
                    // scan a generous window of (m1, m2)
                    for m1 in -12i64..12 {
                        for m2 in -12i64..12 {
                            let t = rat_i(m1) + br.line_residue;
                            let u = rat_i(m2) + Rational::new(other.1, 2 * p);
                            let mut v = crate::rat::rv_scale(&betas[k - 1], t * rat_i(br.beta_scale));
                            v[other.0 - 1] += u;
                            if lat.working_quad(&v).unwrap() <= cutoff {
                                rebuilt.insert(v);
                            }
                        }
                    }
                }
                assert_eq!(direct, rebuilt, "A2 p={p} s={s:?} k={k}");
            }
        }
    }

    #[test]
    fn decompose_a3_reassembles() {
        let cutoff = rat_i(12);
        let p = 2i64;
        let lat = QuadraticLattice::a_n(3, p).unwrap();
        let class = ConjugacyClass::a_n_class(&lat, &[1, 1, 0]).unwrap();
        let direct: std::collections::BTreeSet<Vec<Rational>> =
            lat.enumerate_points_exact(&class.shift, cutoff).unwrap().into_iter().collect();
        let betas = lat.dual_basis();
        // k = 2: two orthogonal A1 lines
        let mut rebuilt: std::collections::BTreeSet<Vec<Rational>> = Default::default();
        for br in decompose(&lat, 2, &class).unwrap() {
            let (lines, s) = match br.complement {
                Complement::A1Pair { lines, s } => (lines, s),
                _ => unreachable!(),
            };
            for m in -8i64..8 {
                for u1 in -8i64..8 {
                    for u3 in -8i64..8 {
                        let t = rat_i(m) + br.line_residue;
                        let mut v = crate::rat::rv_scale(&betas[1], t * rat_i(br.beta_scale));
                        v[lines.0 - 1] += rat_i(u1) + Rational::new(s.0, 2 * p);
                        v[lines.1 - 1] += rat_i(u3) + Rational::new(s.1, 2 * p);
                        if lat.working_quad(&v).unwrap() <= cutoff {
                            rebuilt.insert(v);
                        }
                    }
                }
            }
        }
        assert_eq!(direct, rebuilt);
        // k = 1: A2 complement along (alpha_2, alpha_3)
        let mut rebuilt: std::collections::BTreeSet<Vec<Rational>> = Default::default();
        let a2 = QuadraticLattice::a_n(2, p).unwrap();
        for br in decompose(&lat, 1, &class).unwrap() {
            let s2 = match br.complement {
                Complement::A2 { lines: (2, 3), s } => s,
                _ => unreachable!(),
            };
            let sub = ConjugacyClass::a_n_class(&a2, &[s2.0, s2.1]).unwrap();
            for m in -8i64..8 {
                for u1 in -8i64..8 {
                    for u2 in -8i64..8 {
                        let t = rat_i(m) + br.line_residue;
                        let mut v = crate::rat::rv_scale(&betas[0], t * rat_i(br.beta_scale));
                        v[1] += rat_i(u1) + sub.shift[0];
                        v[2] += rat_i(u2) + sub.shift[1];
                        if lat.working_quad(&v).unwrap() <= cutoff {
                            rebuilt.insert(v);
                        }
                    }
                }
            }
        }
        assert_eq!(direct, rebuilt);
    }
}
