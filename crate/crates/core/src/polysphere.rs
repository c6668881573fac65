//! Exact algebra of polynomial functions and first-order operators on the
//! unit sphere `S^{k-1} ⊂ R^k`.
//!
//! Functions are stored in the canonical form modulo `|x|² − 1`: the last
//! coordinate never appears with exponent ≥ 2 (`x_k² → 1 − Σ_{i<k} x_i²`).
//! Two canonical forms are equal exactly when the functions agree on the
//! sphere, so every operator identity below is checked by comparing
//! canonical forms with zero tolerance.
//!
//! Indices are 0-based in the API; reports print them 1-based (`x1..xk`).
//! The Laplacian is the positive Laplace–Beltrami operator `Δ = −div∘grad`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::poly::{format_monomial, int, monomials_up_to, rational, real, unit_i, Coeff, Exponents, Poly};

/// A function on `S^{k-1}` in canonical form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpherePoly {
    poly: Poly,
}

/// Reduces an ambient polynomial on `R^k` to its canonical form on the sphere.
///
/// Panics if `k < 2`.
pub fn reduce(raw: &Poly) -> SpherePoly {
    let k = raw.nvars();
    assert!(k >= 2, "sphere algebra needs k ≥ 2, got {k}");
    let last = k - 1;
    let mut work = raw.clone();
    loop {
        let next = work.terms().keys().find(|e| e[last] >= 2).cloned();
        let Some(exps) = next else { break };
        let c = work.take_term(&exps).expect("term present");
        let mut base = exps;
        base[last] -= 2;
        for i in 0..last {
            let mut e = base.clone();
            e[i] += 2;
            work.add_term(e, -c.clone());
        }
        work.add_term(base, c);
    }
    SpherePoly { poly: work }
}

impl SpherePoly {
    pub fn zero(k: usize) -> Self {
        reduce(&Poly::zero(k))
    }

    pub fn one(k: usize) -> Self {
        reduce(&Poly::one(k))
    }

    pub fn constant(k: usize, c: Coeff) -> Self {
        reduce(&Poly::constant(k, c))
    }

    /// The coordinate function `x_i` (0-based).
    pub fn coordinate(k: usize, i: usize) -> Self {
        reduce(&Poly::var(k, i))
    }

    pub fn monomial(exps: Exponents) -> Self {
        reduce(&Poly::monomial(exps, Coeff::one()))
    }

    pub fn k(&self) -> usize {
        self.poly.nvars()
    }

    /// Canonical representative as an ambient polynomial.
    pub fn as_poly(&self) -> &Poly {
        &self.poly
    }

    pub fn terms(&self) -> &BTreeMap<Exponents, Coeff> {
        self.poly.terms()
    }

    pub fn is_zero(&self) -> bool {
        self.poly.is_zero()
    }

    pub fn scale(&self, c: &Coeff) -> Self {
        Self {
            poly: self.poly.scale(c),
        }
    }

    /// Multiplication by `x_i`.
    pub fn times_coordinate(&self, i: usize) -> Self {
        let mut e = vec![0; self.k()];
        e[i] = 1;
        reduce(&self.poly.shift(&e))
    }

    pub fn eval(&self, point: &[f64]) -> num_complex::Complex64 {
        self.poly.eval(point)
    }

    /// Integral against the normalized (probability) surface measure on the sphere.
    pub fn sphere_mean(&self) -> Coeff {
        let k = self.k();
        let mut acc = Coeff::zero();
        for (e, c) in self.terms() {
            acc = acc + c * real(sphere_monomial_mean(k, e));
        }
        acc
    }
}

/// Exact average of `x^α` over the uniform measure on `S^{k-1}`:
/// `Π (α_i − 1)!! / Π_{j < |α|/2} (k + 2j)` when every `α_i` is even, else 0.
pub fn sphere_monomial_mean(k: usize, alpha: &[u32]) -> BigRational {
    if alpha.iter().any(|a| a % 2 == 1) {
        return BigRational::zero();
    }
    let mut num = BigRational::one();
    for &a in alpha {
        let mut j = 1i64;
        while j < i64::from(a) {
            num *= rational(j, 1);
            j += 2;
        }
    }
    let half: u32 = alpha.iter().sum::<u32>() / 2;
    let mut den = BigRational::one();
    for j in 0..half {
        den *= rational(k as i64 + 2 * i64::from(j), 1);
    }
    num / den
}

/// `⟨f, g⟩ = ∫ conj(f)·g` under the normalized surface measure.
pub fn inner_product(f: &SpherePoly, g: &SpherePoly) -> Coeff {
    let k = f.k();
    let prod = &f.poly.conj() * &g.poly;
    let mut acc = Coeff::zero();
    for (e, c) in prod.terms() {
        acc = acc + c * real(sphere_monomial_mean(k, e));
    }
    acc
}

impl Add for &SpherePoly {
    type Output = SpherePoly;
    fn add(self, rhs: &SpherePoly) -> SpherePoly {
        SpherePoly {
            poly: &self.poly + &rhs.poly,
        }
    }
}

impl Sub for &SpherePoly {
    type Output = SpherePoly;
    fn sub(self, rhs: &SpherePoly) -> SpherePoly {
        SpherePoly {
            poly: &self.poly - &rhs.poly,
        }
    }
}

impl Mul for &SpherePoly {
    type Output = SpherePoly;
    fn mul(self, rhs: &SpherePoly) -> SpherePoly {
        reduce(&(&self.poly * &rhs.poly))
    }
}

impl Neg for &SpherePoly {
    type Output = SpherePoly;
    fn neg(self) -> SpherePoly {
        SpherePoly { poly: -&self.poly }
    }
}

impl fmt::Display for SpherePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.poly)
    }
}

/// Operators acting on functions on the sphere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OperatorLabel {
    /// Multiplication by `x_i`.
    X(usize),
    /// Tangential derivative `∂_i − x_i Σ_j x_j ∂_j`.
    P(usize),
    /// Symmetrized momentum `i·p̂_i − i(k−1)/2 · x̂_i`.
    Q(usize),
    /// Rotation field `x_i ∂_j − x_j ∂_i`, `i < j`.
    V(usize, usize),
    /// Positive Laplace–Beltrami operator.
    Laplacian,
}

impl OperatorLabel {
    pub fn validate(&self, k: usize) -> Result<(), String> {
        match *self {
            OperatorLabel::X(i) | OperatorLabel::P(i) | OperatorLabel::Q(i) if i >= k => {
                Err(format!("index {} out of range for k = {k}", i + 1))
            }
            OperatorLabel::V(i, j) if i >= j || j >= k => {
                Err(format!("rotation field needs i < j ≤ k, got ({}, {})", i + 1, j + 1))
            }
            _ => Ok(()),
        }
    }
}

/// Applies an operator to a canonical function. Panics on an invalid label.
pub fn apply(op: OperatorLabel, f: &SpherePoly) -> SpherePoly {
    let k = f.k();
    if let Err(msg) = op.validate(k) {
        panic!("{msg}");
    }
    match op {
        OperatorLabel::X(i) => f.times_coordinate(i),
        OperatorLabel::P(i) => tangential_derivative(i, f),
        OperatorLabel::Q(i) => {
            let p = tangential_derivative(i, f).scale(&unit_i());
            let shift = f
                .times_coordinate(i)
                .scale(&(unit_i() * real(rational(k as i64 - 1, 2))));
            &p - &shift
        }
        OperatorLabel::V(i, j) => {
            let raw = f.as_poly();
            let a = &Poly::var(k, i) * &raw.partial(j);
            let b = &Poly::var(k, j) * &raw.partial(i);
            reduce(&(&a - &b))
        }
        OperatorLabel::Laplacian => {
            let mut acc = SpherePoly::zero(k);
            for i in 0..k {
                let second = tangential_derivative(i, &tangential_derivative(i, f));
                acc = &acc - &second;
            }
            acc
        }
    }
}

// The projected gradient of any extension is independent of the extension,
// so the canonical representative can be differentiated directly.
fn tangential_derivative(i: usize, f: &SpherePoly) -> SpherePoly {
    let k = f.k();
    let raw = f.as_poly();
    let radial = &Poly::var(k, i) * &raw.euler();
    reduce(&(&raw.partial(i) - &radial))
}

/// A rational function `numerator / |x|^(2·power)` on `R^k \ {0}`.
#[derive(Clone, Debug)]
struct RadialQuotient {
    numerator: Poly,
    power: u32,
}

impl RadialQuotient {
    fn partial(&self, j: usize) -> Self {
        // ∂_j (N r^{-2m}) = (∂_j N) r^{-2m} − 2m x_j N r^{-2m-2}
        let k = self.numerator.nvars();
        let lifted = &self.numerator.partial(j) * &norm_squared(k);
        let radial = (&Poly::var(k, j) * &self.numerator).scale(&int(2 * i64::from(self.power)));
        Self {
            numerator: &lifted - &radial,
            power: self.power + 1,
        }
    }

    fn raise_to(&self, power: u32) -> Poly {
        let k = self.numerator.nvars();
        let mut n = self.numerator.clone();
        for _ in self.power..power {
            n = &n * &norm_squared(k);
        }
        n
    }
}

fn norm_squared(k: usize) -> Poly {
    let mut p = Poly::zero(k);
    for i in 0..k {
        let mut e = vec![0; k];
        e[i] = 2;
        p.add_term(e, Coeff::one());
    }
    p
}

/// Divergence of the field `p̃_i`, computed by extending it 0-homogeneously to
/// `R^k \ {0}` as `(δ_ij − x_i x_j / |x|²)_j` and taking the Euclidean
/// divergence, then restricting to the sphere.
///
/// The result should equal `−(k−1)·x_i`; see [`divergence_closed_form`].
pub fn divergence_of_ptilde(i: usize, k: usize) -> SpherePoly {
    assert!(i < k, "index out of range");
    let xi = Poly::var(k, i);
    let parts: Vec<RadialQuotient> = (0..k)
        .map(|j| {
            let mut component = &Poly::zero(k) - &(&xi * &Poly::var(k, j));
            if j == i {
                component = &component + &norm_squared(k);
            }
            RadialQuotient {
                numerator: component,
                power: 1,
            }
            .partial(j)
        })
        .collect();
    let top = parts.iter().map(|q| q.power).max().unwrap_or(0);
    let mut total = Poly::zero(k);
    for q in &parts {
        total = &total + &q.raise_to(top);
    }
    // |x| = 1 on the sphere, so the denominator drops out.
    reduce(&total)
}

pub fn divergence_closed_form(i: usize, k: usize) -> SpherePoly {
    SpherePoly::coordinate(k, i).scale(&int(-(k as i64 - 1)))
}

/// Operator identities checked by [`check_relation`].
///
/// `R3` and `R6` are the true commutators. `R3Printed` and `R6Printed` are
/// the variants with a flipped sign / missing factor `i`; they are false and
/// serve as mutation checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RelationId {
    /// `[x̂_i, x̂_j] = 0`
    R1,
    /// `[p̂_j, x̂_i] = δ_ij − x̂_i x̂_j`
    R2,
    /// `[p̂_i, p̂_j] = x̂_i p̂_j − x̂_j p̂_i`
    R3,
    /// `Σ_i x̂_i p̂_i = 0`
    R4,
    /// `[q̂_j, x̂_i] = i(δ_ij − x̂_i x̂_j)`
    R5,
    /// `[q̂_i, q̂_j] = i(x̂_i q̂_j − x̂_j q̂_i)`
    R6,
    /// `Σ_i x̂_i q̂_i = −i(k−1)/2`
    R7,
    /// `Δ = −Σ_i p̂_i²`
    R8,
    /// `Δ = Σ_i q̂_i² − (k−1)²/4`
    R9,
    /// `Δ = −Σ_{i<j} v_ij²`
    R10,
    /// `[v_ij, x̂_l] = δ_jl x̂_i − δ_il x̂_j`
    R11,
    /// `[p̂_i, p̂_j] = x̂_j p̂_i − x̂_i p̂_j` (sign-flipped, false)
    R3Printed,
    /// `[q̂_i, q̂_j] = x̂_i q̂_j − x̂_j q̂_i` (missing `i`, false)
    R6Printed,
    /// `⟨f, q̂_i g⟩ = ⟨q̂_i f, g⟩` on monomial pairs.
    QSymmetric,
    /// `div p̃_i = −(k−1) x_i` via the homogeneous extension.
    Divergence,
}

impl RelationId {
    /// The identities that must hold.
    pub const CATALOGUE: [RelationId; 13] = [
        RelationId::R1,
        RelationId::R2,
        RelationId::R3,
        RelationId::R4,
        RelationId::R5,
        RelationId::R6,
        RelationId::R7,
        RelationId::R8,
        RelationId::R9,
        RelationId::R10,
        RelationId::R11,
        RelationId::QSymmetric,
        RelationId::Divergence,
    ];

    /// Known-false variants, expected to fail.
    pub const MUTANTS: [RelationId; 2] = [RelationId::R3Printed, RelationId::R6Printed];

    pub fn name(&self) -> &'static str {
        match self {
            RelationId::R1 => "R1",
            RelationId::R2 => "R2",
            RelationId::R3 => "R3",
            RelationId::R4 => "R4",
            RelationId::R5 => "R5",
            RelationId::R6 => "R6",
            RelationId::R7 => "R7",
            RelationId::R8 => "R8",
            RelationId::R9 => "R9",
            RelationId::R10 => "R10",
            RelationId::R11 => "R11",
            RelationId::R3Printed => "R3p",
            RelationId::R6Printed => "R6p",
            RelationId::QSymmetric => "QSYM",
            RelationId::Divergence => "DIV",
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        let all = Self::CATALOGUE.iter().chain(Self::MUTANTS.iter());
        for id in all {
            if id.name().eq_ignore_ascii_case(s) {
                return Ok(*id);
            }
        }
        Err(format!("unknown relation id `{s}`"))
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// First failure of an identity: the test monomial and the operator indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub monomial: Exponents,
    pub indices: Vec<usize>,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = |i: usize| format!("x{}", i + 1);
        write!(f, "{}", format_monomial(&self.monomial, &names))?;
        if !self.indices.is_empty() {
            let idx: Vec<String> = self.indices.iter().map(|i| (i + 1).to_string()).collect();
            write!(f, "@{}", idx.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationReport {
    pub id: RelationId,
    pub k: usize,
    pub degree: u32,
    pub holds: bool,
    pub witness: Option<Witness>,
}

impl fmt::Display for RelationReport {
    /// `relation_id k degree PASS|FAIL [witness]`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.holds { "PASS" } else { "FAIL" };
        write!(f, "{} {} {} {}", self.id, self.k, self.degree, status)?;
        if let Some(w) = &self.witness {
            write!(f, " {w}")?;
        }
        Ok(())
    }
}

/// Checks `lhs(f) == rhs(f)` for every monomial `f` of degree `≤ degree`.
/// Returns the first (in graded order) failing monomial.
pub fn check_identity<L, R>(k: usize, degree: u32, lhs: L, rhs: R) -> Option<Exponents>
where
    L: Fn(&SpherePoly) -> SpherePoly + Sync,
    R: Fn(&SpherePoly) -> SpherePoly + Sync,
{
    monomials_up_to(k, degree)
        .into_par_iter()
        .find_first(|e| {
            let f = SpherePoly::monomial(e.clone());
            lhs(&f) != rhs(&f)
        })
}

fn commutator(a: OperatorLabel, b: OperatorLabel, f: &SpherePoly) -> SpherePoly {
    &apply(a, &apply(b, f)) - &apply(b, &apply(a, f))
}

fn delta(i: usize, j: usize) -> i64 {
    i64::from(i == j)
}

/// Checks one catalogue identity for `k` and all test monomials of degree
/// `≤ degree`. Fails on `k < 2` or `degree < 1`.
pub fn check_relation(id: RelationId, k: usize, degree: u32) -> Result<RelationReport, String> {
    use OperatorLabel::*;
    if k < 2 {
        return Err(format!("k must be ≥ 2, got {k}"));
    }
    if degree < 1 {
        return Err("degree bound must be ≥ 1".to_string());
    }
    let half_km1 = real(rational(k as i64 - 1, 2));
    let i_unit = unit_i();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).collect();
    let ordered: Vec<(usize, usize)> = pairs.iter().copied().filter(|(i, j)| i < j).collect();

    let mut witness: Option<Witness> = None;
    let mut record = |indices: Vec<usize>, found: Option<Exponents>| {
        if witness.is_none() {
            if let Some(m) = found {
                witness = Some(Witness {
                    monomial: m,
                    indices,
                });
            }
        }
    };

    match id {
        RelationId::R1 => {
            for &(i, j) in &pairs {
                let w = check_identity(k, degree, |f| commutator(X(i), X(j), f), |f| SpherePoly::zero(f.k()));
                record(vec![i, j], w);
            }
        }
        RelationId::R2 => {
            for &(i, j) in &pairs {
                let w = check_identity(
                    k,
                    degree,
                    |f| commutator(P(j), X(i), f),
                    |f| &f.scale(&int(delta(i, j))) - &apply(X(i), &apply(X(j), f)),
                );
                record(vec![i, j], w);
            }
        }
        RelationId::R3 | RelationId::R3Printed => {
            let printed = id == RelationId::R3Printed;
            for &(i, j) in &pairs {
                let w = check_identity(
                    k,
                    degree,
                    |f| commutator(P(i), P(j), f),
                    |f| {
                        let a = apply(X(i), &apply(P(j), f));
                        let b = apply(X(j), &apply(P(i), f));
                        if printed {
                            &b - &a
                        } else {
                            &a - &b
                        }
                    },
                );
                record(vec![i, j], w);
            }
        }
        RelationId::R4 => {
            let w = check_identity(
                k,
                degree,
                |f| {
                    (0..k).fold(SpherePoly::zero(k), |acc, i| &acc + &apply(X(i), &apply(P(i), f)))
                },
                |f| SpherePoly::zero(f.k()),
            );
            record(vec![], w);
        }
        RelationId::R5 => {
            for &(i, j) in &pairs {
                let w = check_identity(
                    k,
                    degree,
                    |f| commutator(Q(j), X(i), f),
                    |f| (&f.scale(&int(delta(i, j))) - &apply(X(i), &apply(X(j), f))).scale(&i_unit),
                );
                record(vec![i, j], w);
            }
        }
        RelationId::R6 | RelationId::R6Printed => {
            let factor = if id == RelationId::R6Printed { Coeff::one() } else { i_unit.clone() };
            for &(i, j) in &pairs {
                let w = check_identity(
                    k,
                    degree,
                    |f| commutator(Q(i), Q(j), f),
                    |f| {
                        let a = apply(X(i), &apply(Q(j), f));
                        let b = apply(X(j), &apply(Q(i), f));
                        (&a - &b).scale(&factor)
                    },
                );
                record(vec![i, j], w);
            }
        }
        RelationId::R7 => {
            let w = check_identity(
                k,
                degree,
                |f| (0..k).fold(SpherePoly::zero(k), |acc, i| &acc + &apply(X(i), &apply(Q(i), f))),
                |f| f.scale(&(-(i_unit.clone() * half_km1.clone()))),
            );
            record(vec![], w);
        }
        RelationId::R8 => {
            let w = check_identity(
                k,
                degree,
                |f| apply(Laplacian, f),
                |f| {
                    (0..k).fold(SpherePoly::zero(k), |acc, i| &acc - &apply(P(i), &apply(P(i), f)))
                },
            );
            record(vec![], w);
        }
        RelationId::R9 => {
            let shift = half_km1.clone() * half_km1.clone();
            let w = check_identity(
                k,
                degree,
                |f| apply(Laplacian, f),
                |f| {
                    let sq = (0..k).fold(SpherePoly::zero(k), |acc, i| &acc + &apply(Q(i), &apply(Q(i), f)));
                    &sq - &f.scale(&shift)
                },
            );
            record(vec![], w);
        }
        RelationId::R10 => {
            let w = check_identity(
                k,
                degree,
                |f| apply(Laplacian, f),
                |f| {
                    ordered
                        .iter()
                        .fold(SpherePoly::zero(k), |acc, &(i, j)| &acc - &apply(V(i, j), &apply(V(i, j), f)))
                },
            );
            record(vec![], w);
        }
        RelationId::R11 => {
            for &(i, j) in &ordered {
                for l in 0..k {
                    let w = check_identity(
                        k,
                        degree,
                        |f| commutator(V(i, j), X(l), f),
                        |f| {
                            let a = apply(X(i), f).scale(&int(delta(j, l)));
                            let b = apply(X(j), f).scale(&int(delta(i, l)));
                            &a - &b
                        },
                    );
                    record(vec![i, j, l], w);
                }
            }
        }
        RelationId::QSymmetric => {
            let basis: Vec<Exponents> = monomials_up_to(k, degree);
            for i in 0..k {
                let found = basis.par_iter().find_map_first(|ea| {
                    let f = SpherePoly::monomial(ea.clone());
                    let qf = apply(Q(i), &f);
                    basis.iter().find_map(|eb| {
                        let g = SpherePoly::monomial(eb.clone());
                        let lhs = inner_product(&f, &apply(Q(i), &g));
                        let rhs = inner_product(&qf, &g);
                        (lhs != rhs).then(|| ea.clone())
                    })
                });
                record(vec![i], found);
            }
        }
        RelationId::Divergence => {
            for i in 0..k {
                let ok = divergence_of_ptilde(i, k) == divergence_closed_form(i, k);
                let mut e = vec![0; k];
                e[i] = 1;
                record(vec![i], (!ok).then_some(e));
            }
        }
    }

    Ok(RelationReport {
        id,
        k,
        degree,
        holds: witness.is_none(),
        witness,
    })
}

/// Runs the full catalogue for one `k`.
pub fn check_catalogue(k: usize, degree: u32) -> Result<Vec<RelationReport>, String> {
    RelationId::CATALOGUE
        .iter()
        .map(|&id| check_relation(id, k, degree))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use OperatorLabel::*;

    fn x(k: usize, i: usize) -> SpherePoly {
        SpherePoly::coordinate(k, i)
    }

    #[test]
    fn reduce_rewrites_last_square() {
        let k = 3;
        let raw = Poly::monomial(vec![0, 0, 2], Coeff::one());
        let expected = &(&SpherePoly::one(k) - &(&x(k, 0) * &x(k, 0))) - &(&x(k, 1) * &x(k, 1));
        assert_eq!(reduce(&raw), expected);
        for e in reduce(&raw).terms().keys() {
            assert!(e[2] < 2);
        }
    }

    #[test]
    fn reduce_constant_is_unchanged() {
        assert_eq!(reduce(&Poly::one(4)).as_poly(), &Poly::one(4));
    }

    #[test]
    fn sphere_relation_collapses() {
        let k = 4;
        let mut norm = Poly::zero(k);
        for i in 0..k {
            norm = &norm + &(&Poly::var(k, i) * &Poly::var(k, i));
        }
        let raw = &norm * &Poly::var(k, 0);
        assert_eq!(reduce(&raw), x(k, 0));
    }

    #[test]
    fn reduce_is_idempotent_on_high_powers() {
        let raw = Poly::monomial(vec![1, 3, 5], Coeff::one());
        let once = reduce(&raw);
        assert_eq!(reduce(once.as_poly()), once);
    }

    #[test]
    fn tangential_derivative_of_coordinate() {
        for k in 2..=5 {
            let got = apply(P(0), &x(k, 0));
            let want = &SpherePoly::one(k) - &(&x(k, 0) * &x(k, 0));
            assert_eq!(got, want, "k = {k}");
        }
    }

    #[test]
    fn rotation_field_on_coordinate() {
        assert_eq!(apply(V(0, 1), &x(3, 0)), -&x(3, 1));
    }

    #[test]
    fn laplacian_eigenvalues() {
        for k in 2..=6 {
            assert!(apply(Laplacian, &SpherePoly::one(k)).is_zero());
            // ℓ = 1 harmonics: eigenvalue k − 1
            let l1 = apply(Laplacian, &x(k, 0));
            assert_eq!(l1, x(k, 0).scale(&int(k as i64 - 1)));
            // ℓ = 2 harmonic x1·x2: eigenvalue 2k
            let h = &x(k, 0) * &x(k, 1);
            assert_eq!(apply(Laplacian, &h), h.scale(&int(2 * k as i64)), "k = {k}");
        }
    }

    #[test]
    fn laplacian_matches_independent_second_order_formula() {
        // On the sphere, Δf = −(∇²F − r²F_rr − (k−1)F_r) for any extension F,
        // i.e. for a polynomial extension: −(Σ∂_i²F − E(E F) − (k−2)·E F)
        // where E is the Euler operator.
        for k in 2..=5 {
            for e in monomials_up_to(k, 3) {
                let raw = Poly::monomial(e.clone(), Coeff::one());
                let mut flat = Poly::zero(k);
                for i in 0..k {
                    flat = &flat + &raw.partial(i).partial(i);
                }
                let ee = raw.euler().euler();
                let radial = raw.euler().scale(&int(k as i64 - 2));
                let expected = reduce(&-&(&(&flat - &ee) - &radial));
                assert_eq!(apply(Laplacian, &SpherePoly::monomial(e)), expected);
            }
        }
    }

    #[test]
    fn divergence_examples() {
        assert_eq!(divergence_of_ptilde(0, 3), x(3, 0).scale(&int(-2)));
        assert_eq!(divergence_of_ptilde(0, 2), x(2, 0).scale(&int(-1)));
        for k in 2..=6 {
            for i in 0..k {
                let d = divergence_of_ptilde(i, k);
                assert_eq!(d.terms().len(), 1);
                let (e, _) = d.terms().iter().next().unwrap();
                let mut want = vec![0; k];
                want[i] = 1;
                assert_eq!(e, &want);
            }
        }
    }

    #[test]
    fn sphere_means() {
        // E[x1²] = 1/k, E[x1⁴] = 3/(k(k+2)), E[x1²x2²] = 1/(k(k+2))
        assert_eq!(sphere_monomial_mean(3, &[2, 0, 0]), rational(1, 3));
        assert_eq!(sphere_monomial_mean(3, &[4, 0, 0]), rational(3, 15));
        assert_eq!(sphere_monomial_mean(4, &[2, 2, 0, 0]), rational(1, 24));
        assert_eq!(sphere_monomial_mean(4, &[1, 1, 0, 0]), BigRational::zero());
        // Consistency with the sphere relation: Σ E[x_i²] = 1.
        let k = 5;
        let total: BigRational = (0..k)
            .map(|i| {
                let mut e = vec![0; k];
                e[i] = 2;
                sphere_monomial_mean(k, &e)
            })
            .sum();
        assert_eq!(total, BigRational::one());
    }

    #[test]
    fn sphere_mean_respects_reduction() {
        // Reduction must not change integrals.
        let raw = Poly::monomial(vec![2, 0, 4], Coeff::one());
        let direct = sphere_monomial_mean(3, &[2, 0, 4]);
        assert_eq!(reduce(&raw).sphere_mean(), real(direct));
    }

    #[test]
    fn selected_relations_hold() {
        let r7 = check_relation(RelationId::R7, 3, 3).unwrap();
        assert!(r7.holds, "{r7}");
        let r4 = check_relation(RelationId::R4, 2, 4).unwrap();
        assert!(r4.holds, "{r4}");
    }

    #[test]
    fn printed_sign_variants_fail_with_witness() {
        for id in RelationId::MUTANTS {
            let report = check_relation(id, 2, 2).unwrap();
            assert!(!report.holds);
            assert!(report.witness.is_some());
        }
    }

    #[test]
    fn corrupted_identity_is_caught() {
        // Flip the sign of δ_ij in R2.
        let w = check_identity(
            3,
            2,
            |f| commutator(P(0), X(0), f),
            |f| &f.scale(&int(-1)) - &apply(X(0), &apply(X(0), f)),
        );
        assert_eq!(w, Some(vec![0, 0, 0]));
    }

    #[test]
    fn report_line_format() {
        let r = check_relation(RelationId::R1, 2, 1).unwrap();
        assert_eq!(r.to_string(), "R1 2 1 PASS");
        let bad = check_relation(RelationId::R3Printed, 2, 1).unwrap();
        assert!(bad.to_string().starts_with("R3p 2 1 FAIL "));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(check_relation(RelationId::R1, 1, 2).is_err());
        assert!(check_relation(RelationId::R1, 3, 0).is_err());
        assert!(RelationId::parse("R99").is_err());
        assert_eq!(RelationId::parse("r10").unwrap(), RelationId::R10);
        assert!(V(1, 0).validate(3).is_err());
        assert!(X(3).validate(3).is_err());
    }

    #[test]
    fn apply_is_linear() {
        let k = 3;
        let f = &(&x(k, 0) * &x(k, 1)) + &x(k, 2);
        let g = &(&x(k, 2) * &x(k, 2)) - &SpherePoly::one(k);
        let alpha = real(rational(3, 7));
        let beta = unit_i();
        let combo = &f.scale(&alpha) + &g.scale(&beta);
        for op in [X(1), P(2), Q(0), V(0, 2), Laplacian] {
            let lhs = apply(op, &combo);
            let rhs = &apply(op, &f).scale(&alpha) + &apply(op, &g).scale(&beta);
            assert_eq!(lhs, rhs, "{op:?}");
        }
    }
}
