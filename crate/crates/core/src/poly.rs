//! Sparse multivariate polynomials with exact Gaussian-rational coefficients.
//!
//! This is the common carrier behind [`crate::polysphere::SpherePoly`] and
//! [`crate::phasespace::PhasePoly`]. Terms live in a `BTreeMap` keyed by the
//! exponent vector, so iteration order (and therefore every printed form) is
//! deterministic. Zero coefficients are never stored.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact coefficient: a Gaussian rational `a + b·i` with `a, b ∈ ℚ`.
pub type Coeff = Complex<BigRational>;

/// Exponent vector, one entry per variable.
pub type Exponents = Vec<u32>;

pub fn rational(numer: i64, denom: i64) -> BigRational {
    BigRational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn real(r: BigRational) -> Coeff {
    Complex::new(r, BigRational::zero())
}

pub fn imag(r: BigRational) -> Coeff {
    Complex::new(BigRational::zero(), r)
}

pub fn int(n: i64) -> Coeff {
    real(BigRational::from_integer(BigInt::from(n)))
}

/// `i`, the imaginary unit.
pub fn unit_i() -> Coeff {
    imag(BigRational::one())
}

pub fn coeff_to_f64(c: &Coeff) -> Complex64 {
    Complex64::new(
        c.re.to_f64().unwrap_or(f64::NAN),
        c.im.to_f64().unwrap_or(f64::NAN),
    )
}

pub fn format_coeff(c: &Coeff) -> String {
    match (c.re.is_zero(), c.im.is_zero()) {
        (_, true) => c.re.to_string(),
        (true, false) => format!("{}i", c.im),
        (false, false) => {
            let sign = if c.im.is_negative() { '-' } else { '+' };
            format!("({} {} {}i)", c.re, sign, c.im.abs())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Exponents, Coeff>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: Coeff) -> Self {
        Self::monomial(vec![0; nvars], c)
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, Coeff::one())
    }

    pub fn monomial(exps: Exponents, c: Coeff) -> Self {
        let mut p = Self::zero(exps.len());
        p.add_term(exps, c);
        p
    }

    /// The coordinate function of variable `i` (0-based).
    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars, "variable index {i} out of range for {nvars} variables");
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::monomial(e, Coeff::one())
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &BTreeMap<Exponents, Coeff> {
        &self.terms
    }

    pub fn into_terms(self) -> BTreeMap<Exponents, Coeff> {
        self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, exps: &[u32]) -> Coeff {
        self.terms.get(exps).cloned().unwrap_or_else(Coeff::zero)
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    pub fn add_term(&mut self, exps: Exponents, c: Coeff) {
        assert_eq!(exps.len(), self.nvars, "exponent vector length mismatch");
        if c.is_zero() {
            return;
        }
        match self.terms.entry(exps) {
            std::collections::btree_map::Entry::Vacant(slot) => {
                slot.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut slot) => {
                let sum = slot.get().clone() + c;
                if sum.is_zero() {
                    slot.remove();
                } else {
                    *slot.get_mut() = sum;
                }
            }
        }
    }

    /// Removes and returns the term with the given exponent, if present.
    pub fn take_term(&mut self, exps: &[u32]) -> Option<Coeff> {
        self.terms.remove(exps)
    }

    pub fn scale(&self, c: &Coeff) -> Self {
        if c.is_zero() {
            return Self::zero(self.nvars);
        }
        Self {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(e, a)| (e.clone(), a * c))
                .collect(),
        }
    }

    /// Multiplies by the monomial `x^exps`.
    pub fn shift(&self, exps: &[u32]) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            let sum: Exponents = e.iter().zip(exps).map(|(a, b)| a + b).collect();
            out.add_term(sum, c.clone());
        }
        out
    }

    /// Partial derivative with respect to variable `i`.
    pub fn partial(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut d = e.clone();
            d[i] -= 1;
            out.add_term(d, c * int(i64::from(e[i])));
        }
        out
    }

    /// Euler operator `Σ_j x_j ∂_j`: scales each monomial by its degree.
    pub fn euler(&self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            let deg: u32 = e.iter().sum();
            out.add_term(e.clone(), c * int(i64::from(deg)));
        }
        out
    }

    pub fn eval(&self, point: &[f64]) -> Complex64 {
        assert_eq!(point.len(), self.nvars);
        self.terms
            .iter()
            .map(|(e, c)| {
                let m: f64 = e
                    .iter()
                    .zip(point)
                    .map(|(&p, &x)| x.powi(p as i32))
                    .product();
                coeff_to_f64(c) * m
            })
            .sum()
    }

    /// Complex conjugate of every coefficient.
    pub fn conj(&self) -> Self {
        Self {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (e.clone(), c.conj()))
                .collect(),
        }
    }

    pub(crate) fn check_same_ring(&self, other: &Self) {
        assert_eq!(
            self.nvars, other.nvars,
            "polynomials over different variable sets"
        );
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        self.check_same_ring(rhs);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self.check_same_ring(rhs);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -c.clone());
        }
        out
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        self.check_same_ring(rhs);
        let mut out = Poly::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Exponents = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(&int(-1))
    }
}

/// Writes a monomial with 1-based variable names, e.g. `x1^2*x3`.
pub fn format_monomial(exps: &[u32], names: &dyn Fn(usize) -> String) -> String {
    let parts: Vec<String> = exps
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0)
        .map(|(i, &p)| {
            if p == 1 {
                names(i)
            } else {
                format!("{}^{}", names(i), p)
            }
        })
        .collect();
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join("*")
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let names = |i: usize| format!("x{}", i + 1);
        let rendered: Vec<String> = self
            .terms
            .iter()
            .map(|(e, c)| format!("{}·{}", format_coeff(c), format_monomial(e, &names)))
            .collect();
        write!(f, "{}", rendered.join(" + "))
    }
}

/// All exponent vectors over `nvars` variables with total degree `≤ max_degree`,
/// in graded order.
pub fn monomials_up_to(nvars: usize, max_degree: u32) -> Vec<Exponents> {
    let mut out = Vec::new();
    for d in 0..=max_degree {
        let mut cur = vec![0u32; nvars];
        fill_degree(&mut out, &mut cur, 0, d);
    }
    out
}

fn fill_degree(out: &mut Vec<Exponents>, cur: &mut Exponents, pos: usize, remaining: u32) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    if cur.is_empty() {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for p in (0..=remaining).rev() {
        cur[pos] = p;
        fill_degree(out, cur, pos + 1, remaining - p);
    }
    cur[pos] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coefficients_are_dropped() {
        let x = Poly::var(2, 0);
        let d = &x - &x;
        assert!(d.is_zero());
        assert_eq!(d.len(), 0);
    }

    #[test]
    fn product_rule_on_a_sample() {
        let x = Poly::var(3, 0);
        let y = Poly::var(3, 1);
        let f = &(&x * &x) * &y;
        let g = &y + &Poly::one(3);
        let lhs = (&f * &g).partial(0);
        let rhs = &(&f.partial(0) * &g) + &(&f * &g.partial(0));
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn euler_scales_by_degree() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let f = &(&x * &y) + &y;
        let e = f.euler();
        assert_eq!(e.coeff(&[1, 1]), int(2));
        assert_eq!(e.coeff(&[0, 1]), int(1));
    }

    #[test]
    fn monomial_count_matches_binomial() {
        // C(k + d, d) monomials of degree ≤ d in k variables.
        assert_eq!(monomials_up_to(3, 4).len(), 35);
        assert_eq!(monomials_up_to(5, 4).len(), 126);
        assert_eq!(monomials_up_to(1, 3).len(), 4);
    }

    #[test]
    fn display_is_readable() {
        let x = Poly::var(2, 0);
        let p = &(&x * &x).scale(&int(3)) - &Poly::one(2);
        assert_eq!(p.to_string(), "-1·1 + 3·x1^2");
    }
}
