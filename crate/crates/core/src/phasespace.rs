//! Polynomial Weyl symbols on flat phase space `R^{2m}`.
//!
//! Variables are ordered `(x_1, …, x_m, p_1, …, p_m)`. The star product is
//! the finite Moyal series; Gaussian expectations use Isserlis pairings.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::poly::{coeff_to_f64, format_coeff, format_monomial, int, rational, real, Coeff, Exponents, Poly};

pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum PhaseError {
    #[error("mode count mismatch: {0} vs {1}")]
    ModeMismatch(usize, usize),
    #[error("hbar mismatch")]
    HbarMismatch,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariance is not symmetric")]
    NotSymmetric,
    #[error("covariance is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("symbol has non-real coefficients")]
    NonRealSymbol,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhasePoly {
    modes: usize,
    hbar: BigRational,
    poly: Poly,
}

impl PhasePoly {
    pub fn zero(modes: usize) -> Self {
        Self {
            modes,
            hbar: BigRational::one(),
            poly: Poly::zero(2 * modes),
        }
    }

    pub fn constant(modes: usize, c: Coeff) -> Self {
        Self {
            poly: Poly::constant(2 * modes, c),
            ..Self::zero(modes)
        }
    }

    pub fn x(modes: usize, i: usize) -> Self {
        Self {
            poly: Poly::var(2 * modes, i),
            ..Self::zero(modes)
        }
    }

    pub fn p(modes: usize, i: usize) -> Self {
        Self {
            poly: Poly::var(2 * modes, modes + i),
            ..Self::zero(modes)
        }
    }

    pub fn from_poly(modes: usize, poly: Poly) -> Self {
        assert_eq!(poly.nvars(), 2 * modes);
        Self {
            poly,
            ..Self::zero(modes)
        }
    }

    pub fn with_hbar(mut self, hbar: BigRational) -> Self {
        self.hbar = hbar;
        self
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn hbar(&self) -> &BigRational {
        &self.hbar
    }

    pub fn as_poly(&self) -> &Poly {
        &self.poly
    }

    pub fn is_zero(&self) -> bool {
        self.poly.is_zero()
    }

    pub fn coeff(&self, exps: &[u32]) -> Coeff {
        self.poly.coeff(exps)
    }

    fn map(&self, poly: Poly) -> Self {
        Self {
            modes: self.modes,
            hbar: self.hbar.clone(),
            poly,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, PhaseError> {
        self.compatible(other)?;
        Ok(self.map(&self.poly + &other.poly))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PhaseError> {
        self.compatible(other)?;
        Ok(self.map(&self.poly - &other.poly))
    }

    /// Pointwise (commutative) product.
    pub fn mul(&self, other: &Self) -> Result<Self, PhaseError> {
        self.compatible(other)?;
        Ok(self.map(&self.poly * &other.poly))
    }

    pub fn scale(&self, c: &Coeff) -> Self {
        self.map(self.poly.scale(c))
    }

    fn compatible(&self, other: &Self) -> Result<(), PhaseError> {
        if self.modes != other.modes {
            return Err(PhaseError::ModeMismatch(self.modes, other.modes));
        }
        if self.hbar != other.hbar {
            return Err(PhaseError::HbarMismatch);
        }
        Ok(())
    }
}

impl fmt::Display for PhasePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poly.is_zero() {
            return write!(f, "0");
        }
        let m = self.modes;
        let names = move |i: usize| {
            if i < m {
                format!("x{}", i + 1)
            } else {
                format!("p{}", i - m + 1)
            }
        };
        let parts: Vec<String> = self
            .poly
            .terms()
            .iter()
            .map(|(e, c)| format!("{}·{}", format_coeff(c), format_monomial(e, &names)))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

fn falling(n: u32, r: u32) -> BigRational {
    (0..r).fold(BigRational::one(), |acc, j| acc * rational(i64::from(n - j), 1))
}

fn factorial(n: u32) -> BigRational {
    falling(n, n)
}

// All exponent vectors componentwise ≤ bound.
fn boxes(bound: &[u32]) -> Vec<Exponents> {
    let mut out = vec![Vec::with_capacity(bound.len())];
    for &b in bound {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..=b).map(move |v| {
                    let mut e = prefix.clone();
                    e.push(v);
                    e
                })
            })
            .collect();
    }
    out
}

/// Moyal product
/// `f★g = Σ_{α,β} (iħ/2)^{|α|+|β|} (−1)^{|β|} / (α!β!) · (∂_x^α ∂_p^β f)(∂_p^α ∂_x^β g)`.
pub fn star(f: &PhasePoly, g: &PhasePoly) -> Result<PhasePoly, PhaseError> {
    f.compatible(g)?;
    let m = f.modes;
    let half_ihbar = Coeff::new(BigRational::zero(), f.hbar.clone() / rational(2, 1));
    let mut out = Poly::zero(2 * m);
    for (ef, cf) in f.poly.terms() {
        let (a, b) = ef.split_at(m);
        for (eg, cg) in g.poly.terms() {
            let (c, d) = eg.split_at(m);
            let amax: Vec<u32> = a.iter().zip(d).map(|(u, v)| *u.min(v)).collect();
            let bmax: Vec<u32> = b.iter().zip(c).map(|(u, v)| *u.min(v)).collect();
            let alphas = boxes(&amax);
            let betas = boxes(&bmax);
            for alpha in &alphas {
                for beta in &betas {
                    let order: u32 = alpha.iter().sum::<u32>() + beta.iter().sum::<u32>();
                    let mut w = BigRational::one();
                    let mut exps = vec![0u32; 2 * m];
                    for i in 0..m {
                        // f: ∂_{x_i}^{α_i} ∂_{p_i}^{β_i}; g: ∂_{p_i}^{α_i} ∂_{x_i}^{β_i}
                        w *= falling(a[i], alpha[i]) * falling(b[i], beta[i]);
                        w *= falling(d[i], alpha[i]) * falling(c[i], beta[i]);
                        w /= factorial(alpha[i]) * factorial(beta[i]);
                        exps[i] = a[i] - alpha[i] + c[i] - beta[i];
                        exps[m + i] = b[i] - beta[i] + d[i] - alpha[i];
                    }
                    let sign: i64 = if beta.iter().sum::<u32>() % 2 == 0 { 1 } else { -1 };
                    let mut k = real(w) * int(sign) * cf * cg;
                    for _ in 0..order {
                        k = k * &half_ihbar;
                    }
                    out.add_term(exps, k);
                }
            }
        }
    }
    Ok(f.map(out))
}

/// Poisson bracket `{f, g} = Σ_i ∂_{x_i} f ∂_{p_i} g − ∂_{p_i} f ∂_{x_i} g`.
pub fn poisson(f: &PhasePoly, g: &PhasePoly) -> Result<PhasePoly, PhaseError> {
    f.compatible(g)?;
    let m = f.modes;
    let mut out = Poly::zero(2 * m);
    for i in 0..m {
        let a = &f.poly.partial(i) * &g.poly.partial(m + i);
        let b = &f.poly.partial(m + i) * &g.poly.partial(i);
        out = &out + &(&a - &b);
    }
    Ok(f.map(out))
}

/// Weyl symbol of `Σ_{i<j} L_ij²` with `L_ij = x_i p_j − x_j p_i`, at ħ = 1.
pub fn kinetic_weyl_symbol(k: usize) -> PhasePoly {
    assert!(k >= 2, "k must be ≥ 2");
    let mut total = PhasePoly::zero(k);
    for i in 0..k {
        for j in i + 1..k {
            let l = angular_momentum(k, i, j);
            total = total.add(&star(&l, &l).expect("same ring")).expect("same ring");
        }
    }
    total
}

/// `x_i p_j − x_j p_i`.
pub fn angular_momentum(modes: usize, i: usize, j: usize) -> PhasePoly {
    let a = PhasePoly::x(modes, i).mul(&PhasePoly::p(modes, j)).expect("same ring");
    let b = PhasePoly::x(modes, j).mul(&PhasePoly::p(modes, i)).expect("same ring");
    a.sub(&b).expect("same ring")
}

/// Mean and covariance of a Gaussian over `(x_1..x_m, p_1..p_m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSpec {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl MomentSpec {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, PhaseError> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(PhaseError::DimensionMismatch {
                expected: d,
                got: cov.nrows(),
            });
        }
        let scale = cov.amax().max(1.0);
        if (&cov - cov.transpose()).amax() > 1e-12 * scale {
            return Err(PhaseError::NotSymmetric);
        }
        if d > 0 {
            let sym = (&cov + cov.transpose()) * 0.5;
            let min = SymmetricEigen::new(sym).eigenvalues.min();
            if min < -PSD_TOL {
                return Err(PhaseError::NotPsd(min));
            }
        }
        Ok(Self { mean, cov })
    }

    pub fn centered(cov: DMatrix<f64>) -> Result<Self, PhaseError> {
        Self::new(DVector::zeros(cov.nrows()), cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// `E[z_{i_1} ⋯ z_{i_n}]` by expanding the first factor:
/// `E[z_a R] = μ_a E[R] + Σ_j C_{a,j} E[R \ j]`.
pub fn gaussian_moment(indices: &[usize], spec: &MomentSpec) -> f64 {
    let mut memo = HashMap::new();
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    moment_rec(&sorted, spec, &mut memo)
}

fn moment_rec(idx: &[usize], spec: &MomentSpec, memo: &mut HashMap<Vec<usize>, f64>) -> f64 {
    if idx.is_empty() {
        return 1.0;
    }
    if let Some(&v) = memo.get(idx) {
        return v;
    }
    let a = idx[0];
    let rest = &idx[1..];
    let mut total = spec.mean[a] * moment_rec(rest, spec, memo);
    for j in 0..rest.len() {
        let c = spec.cov[(a, rest[j])];
        if c == 0.0 {
            continue;
        }
        let mut without = rest.to_vec();
        without.remove(j);
        total += c * moment_rec(&without, spec, memo);
    }
    memo.insert(idx.to_vec(), total);
    total
}

/// Complex expectation of a symbol under a Gaussian.
pub fn wick_expectation_complex(f: &PhasePoly, spec: &MomentSpec) -> Result<Complex64, PhaseError> {
    let d = 2 * f.modes;
    if spec.dim() != d {
        return Err(PhaseError::DimensionMismatch {
            expected: d,
            got: spec.dim(),
        });
    }
    let mut memo = HashMap::new();
    let mut total = Complex64::new(0.0, 0.0);
    for (e, c) in f.poly.terms() {
        let idx: Vec<usize> = e
            .iter()
            .enumerate()
            .flat_map(|(i, &p)| std::iter::repeat_n(i, p as usize))
            .collect();
        total += coeff_to_f64(c) * moment_rec(&idx, spec, &mut memo);
    }
    Ok(total)
}

/// Expectation of a real symbol under a Gaussian.
pub fn wick_expectation(f: &PhasePoly, spec: &MomentSpec) -> Result<f64, PhaseError> {
    if f.poly.terms().values().any(|c| !c.im.is_zero()) {
        return Err(PhaseError::NonRealSymbol);
    }
    Ok(wick_expectation_complex(f, spec)?.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::unit_i;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn x(m: usize, i: usize) -> PhasePoly {
        PhasePoly::x(m, i)
    }

    fn p(m: usize, i: usize) -> PhasePoly {
        PhasePoly::p(m, i)
    }

    fn half_i() -> Coeff {
        unit_i() * real(rational(1, 2))
    }

    #[test]
    fn star_x_p() {
        let got = star(&x(1, 0), &p(1, 0)).unwrap();
        let want = x(1, 0).mul(&p(1, 0)).unwrap().add(&PhasePoly::constant(1, half_i())).unwrap();
        assert_eq!(got, want);
        let back = star(&p(1, 0), &x(1, 0)).unwrap();
        let want = x(1, 0).mul(&p(1, 0)).unwrap().sub(&PhasePoly::constant(1, half_i())).unwrap();
        assert_eq!(back, want);
    }

    #[test]
    fn star_commuting_positions() {
        assert_eq!(star(&x(2, 0), &x(2, 1)).unwrap(), x(2, 0).mul(&x(2, 1)).unwrap());
    }

    #[test]
    fn star_respects_hbar() {
        let h = rational(3, 1);
        let a = x(1, 0).with_hbar(h.clone());
        let b = p(1, 0).with_hbar(h.clone());
        let got = star(&a, &b).unwrap();
        assert_eq!(got.coeff(&[0, 0]), unit_i() * real(rational(3, 2)));
        assert!(star(&a, &p(1, 0)).is_err());
    }

    #[test]
    fn angular_momentum_square() {
        for (m, i, j) in [(2, 0, 1), (3, 0, 2), (4, 1, 3)] {
            let l = angular_momentum(m, i, j);
            let got = star(&l, &l).unwrap();
            let want = l.mul(&l).unwrap().sub(&PhasePoly::constant(m, real(rational(1, 2)))).unwrap();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn kinetic_symbol_structure() {
        for k in 2..=6 {
            let s = kinetic_weyl_symbol(k);
            let pairs = (k * (k - 1) / 2) as i64;
            assert_eq!(s.coeff(&vec![0; 2 * k]), real(rational(-pairs, 2)));
            assert_eq!(s.coeff(&vec![0; 2 * k]), real(rational(-((k * (k - 1)) as i64), 4)));
        }
        let s2 = kinetic_weyl_symbol(2);
        // (x1 p2 − x2 p1)² − 1/2
        assert_eq!(s2.coeff(&[2, 0, 0, 2]), int(1));
        assert_eq!(s2.coeff(&[1, 1, 1, 1]), int(-2));
        assert_eq!(s2.coeff(&[0, 2, 2, 0]), int(1));
        assert_eq!(s2.as_poly().len(), 4);
    }

    #[test]
    fn wick_small_cases() {
        let s2 = 0.7;
        let spec = MomentSpec::centered(DMatrix::from_diagonal_element(2, 2, s2)).unwrap();
        let xx = x(1, 0).mul(&x(1, 0)).unwrap();
        assert!((wick_expectation(&xx, &spec).unwrap() - s2).abs() < 1e-15);
        let x4 = xx.mul(&xx).unwrap();
        assert!((wick_expectation(&x4, &spec).unwrap() - 3.0 * s2 * s2).abs() < 1e-14);
        let x3 = xx.mul(&x(1, 0)).unwrap();
        assert!(wick_expectation(&x3, &spec).unwrap().abs() < 1e-15);
    }

    #[test]
    fn wick_degree_four_pairings() {
        // E[x1 p2 x2 p1] = C(x1,p2)C(x2,p1) + C(x1,x2)C(p2,p1) + C(x1,p1)C(x2,p2)
        let cov = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.2, 0.3, 0.1, //
                0.2, 1.5, -0.2, 0.25, //
                0.3, -0.2, 2.0, 0.4, //
                0.1, 0.25, 0.4, 1.2,
            ],
        );
        let spec = MomentSpec::centered(cov.clone()).unwrap();
        let f = x(2, 0).mul(&p(2, 1)).unwrap().mul(&x(2, 1)).unwrap().mul(&p(2, 0)).unwrap();
        let c = |a: usize, b: usize| cov[(a, b)];
        let want = c(0, 3) * c(1, 2) + c(0, 1) * c(3, 2) + c(0, 2) * c(1, 3);
        assert!((wick_expectation(&f, &spec).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn wick_with_mean() {
        // E[(μ + σZ)²] = μ² + σ²
        let spec = MomentSpec::new(DVector::from_vec(vec![1.5, 0.0]), DMatrix::from_diagonal_element(2, 2, 0.5)).unwrap();
        let xx = x(1, 0).mul(&x(1, 0)).unwrap();
        assert!((wick_expectation(&xx, &spec).unwrap() - 2.75).abs() < 1e-14);
    }

    #[test]
    fn wick_rejects_bad_input() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(MomentSpec::centered(bad), Err(PhaseError::NotPsd(_))));
        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert_eq!(MomentSpec::centered(skew), Err(PhaseError::NotSymmetric));
        let spec = MomentSpec::centered(DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(
            wick_expectation(&x(2, 0), &spec),
            Err(PhaseError::DimensionMismatch { .. })
        ));
        assert_eq!(
            wick_expectation(&PhasePoly::constant(1, unit_i()), &spec),
            Err(PhaseError::NonRealSymbol)
        );
    }

    fn random_symbol(modes: usize, max_degree: u32, seed: u64) -> PhasePoly {
        let mut rng = crate::mc::chunk_rng(seed, 0);
        let mut poly = Poly::zero(2 * modes);
        for e in crate::poly::monomials_up_to(2 * modes, max_degree) {
            if rng.random::<f64>() < 0.3 {
                let num: i64 = rng.random_range(-4..=4);
                let im: i64 = rng.random_range(-2..=2);
                poly.add_term(e, Coeff::new(rational(num, 3), rational(im, 2)));
            }
        }
        PhasePoly::from_poly(modes, poly)
    }

    fn random_real_symbol(modes: usize, max_degree: u32, seed: u64) -> PhasePoly {
        let f = random_symbol(modes, max_degree, seed);
        let mut poly = Poly::zero(2 * modes);
        for (e, c) in f.as_poly().terms() {
            poly.add_term(e.clone(), real(c.re.clone()));
        }
        PhasePoly::from_poly(modes, poly)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn commutator_is_poisson_at_low_degree(seed in 0u64..10_000) {
            let f = random_symbol(2, 2, seed);
            let g = random_symbol(2, 2, seed + 77_777);
            let lhs = star(&f, &g).unwrap().sub(&star(&g, &f).unwrap()).unwrap();
            let rhs = poisson(&f, &g).unwrap().scale(&unit_i());
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn star_is_associative(seed in 0u64..10_000) {
            let f = random_symbol(1, 3, seed);
            let g = random_symbol(1, 3, seed + 1);
            let h = random_symbol(1, 3, seed + 2);
            let left = star(&star(&f, &g).unwrap(), &h).unwrap();
            let right = star(&f, &star(&g, &h).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn wick_is_linear(seed in 0u64..10_000, alpha in -3.0f64..3.0) {
            let f = random_real_symbol(2, 4, seed);
            let g = random_real_symbol(2, 4, seed + 5);
            let spec = random_spec(2, seed);
            let a = crate::poly::real(BigRational::from_float(alpha).unwrap());
            let combo = f.scale(&a).add(&g).unwrap();
            let lhs = wick_expectation(&combo, &spec).unwrap();
            let alpha_exact = crate::poly::coeff_to_f64(&a).re;
            let rhs = alpha_exact * wick_expectation(&f, &spec).unwrap() + wick_expectation(&g, &spec).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        }
    }

    fn random_spec(modes: usize, seed: u64) -> MomentSpec {
        let d = 2 * modes;
        let mut rng = crate::mc::chunk_rng(seed, 3);
        let a = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
        let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.1;
        let mean = DVector::from_fn(d, |_, _| rng.random::<f64>() - 0.5);
        MomentSpec::new(mean, cov).unwrap()
    }

    #[test]
    fn wick_matches_monte_carlo() {
        for seed in 0..6 {
            let f = random_real_symbol(2, 4, 100 + seed);
            let spec = random_spec(2, seed);
            let exact = wick_expectation(&f, &spec).unwrap();
            let chol = spec.covariance().clone().cholesky().unwrap().l();
            let mean = spec.mean().clone();
            let est = crate::mc::estimate(200_000, seed, |rng| {
                let z = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
                let pt = &mean + &chol * z;
                f.as_poly().eval(pt.as_slice()).re
            });
            assert!(
                (est.mean - exact).abs() < 4.0 * est.std_err + 1e-12,
                "seed {seed}: mc {} ± {} vs exact {exact}",
                est.mean,
                est.std_err
            );
        }
    }
}
