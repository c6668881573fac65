//! Exact small-instance ground truth at `k = 2`.
//!
//! On the circle `L²(S¹)` has the Fourier basis `e^{imθ}`, where the
//! Laplacian is diagonal with eigenvalue `m²` and `x_v·x_w = cos(θ_v − θ_w)`
//! shifts `(m_v, m_w) → (m_v ± 1, m_w ∓ 1)` with amplitude `1/2`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::SphericalMoments;
use crate::mc;
use crate::relax::RotorInstance;

pub const MAX_DIM: usize = 2_000_000;
pub const DENSE_LIMIT: usize = 400;
pub const MAX_SWEEPS: usize = 2000;
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("the Fourier oracle needs k = 2, got k = {0}")]
    UnsupportedK(usize),
    #[error("truncated dimension (2M+1)^n = {0} exceeds {MAX_DIM}")]
    DimensionOverflow(u128),
    #[error("cutoff M must be ≥ 1")]
    Cutoff,
    #[error("eigensolver did not converge (residual {0:e})")]
    NotConverged(f64),
}

#[derive(Clone, Debug)]
pub struct TruncatedHamiltonian {
    pub instance: RotorInstance,
    pub cutoff: usize,
    pub matrix: CsrMatrix<f64>,
}

impl TruncatedHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for (i, row) in self.matrix.row_iter().enumerate() {
            out[i] = row.col_indices().iter().zip(row.values()).map(|(&j, &a)| a * v[j]).sum();
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (i, j, &v) in self.matrix.triplet_iter() {
            m[(i, j)] += v;
        }
        m
    }

    /// `v†Hv / v†v`.
    pub fn rayleigh(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.apply(v)) / v.norm_squared()
    }
}

/// Modes `m_v ∈ {−M..M}`; index `Σ_v (m_v + M)(2M+1)^v`.
pub fn hamiltonian_k2(inst: &RotorInstance, cutoff: usize) -> Result<TruncatedHamiltonian, OracleError> {
    if inst.k != 2 {
        return Err(OracleError::UnsupportedK(inst.k));
    }
    if cutoff == 0 {
        return Err(OracleError::Cutoff);
    }
    let base = 2 * cutoff + 1;
    let dim = (base as u128).checked_pow(inst.n as u32).unwrap_or(u128::MAX);
    if dim > MAX_DIM as u128 {
        return Err(OracleError::DimensionOverflow(dim));
    }
    let dim = dim as usize;
    let stride: Vec<usize> = (0..inst.n).map(|v| base.pow(v as u32)).collect();
    let m = cutoff as i64;
    let potential_const: f64 = inst.edges.iter().map(|e| inst.b * e.w * inst.c_pot).sum();
    let mut coo = CooMatrix::new(dim, dim);
    let mut modes = vec![0i64; inst.n];
    for idx in 0..dim {
        let mut r = idx;
        for mv in modes.iter_mut() {
            *mv = (r % base) as i64 - m;
            r /= base;
        }
        let kinetic: f64 = inst.a * modes.iter().map(|&x| (x * x) as f64).sum::<f64>();
        coo.push(idx, idx, kinetic + potential_const);
        for e in &inst.edges {
            let amp = 0.5 * inst.b * e.w;
            if amp == 0.0 {
                continue;
            }
            // (m_u, m_v) → (m_u + 1, m_v − 1); the reverse move is its transpose
            if modes[e.u] < m && modes[e.v] > -m {
                let j = idx + stride[e.u] - stride[e.v];
                coo.push(idx, j, amp);
                coo.push(j, idx, amp);
            }
        }
    }
    Ok(TruncatedHamiltonian {
        instance: inst.clone(),
        cutoff,
        matrix: CsrMatrix::from(&coo),
    })
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub values: Vec<f64>,
    pub vector: DVector<f64>,
    pub residual: f64,
}

/// Two lowest eigenvalues of a dense symmetric matrix.
pub fn dense_lowest(m: &DMatrix<f64>) -> Eigenpair {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vector = eig.eigenvectors.column(order[0]).into_owned();
    let residual = (m * &vector - &vector * eig.eigenvalues[order[0]]).norm();
    Eigenpair {
        values: order.iter().take(2).map(|&i| eig.eigenvalues[i]).collect(),
        vector,
        residual,
    }
}

/// Restarted Lanczos with full reorthogonalization.
pub fn lanczos_lowest(op: impl Fn(&DVector<f64>) -> DVector<f64>, dim: usize, seed: u64) -> Result<Eigenpair, OracleError> {
    let mut rng = mc::chunk_rng(seed, 0);
    let mut start = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    start /= start.norm();
    let basis_cap = (100_000_000 / dim.max(1)).clamp(20, 300).min(dim);
    let mut residual = f64::INFINITY;
    for _restart in 0..50 {
        let mut q: Vec<DVector<f64>> = vec![start.clone()];
        let (mut alpha, mut beta) = (Vec::new(), Vec::new());
        loop {
            let j = q.len() - 1;
            let mut w = op(&q[j]);
            alpha.push(q[j].dot(&w));
            for _ in 0..2 {
                for qi in &q {
                    let c = qi.dot(&w);
                    w.axpy(-c, qi, 1.0);
                }
            }
            let b = w.norm();
            let m = alpha.len();
            let check = m == basis_cap || b < 1e-12 || m % 10 == 0;
            if check {
                let t = DMatrix::from_fn(m, m, |r, c| {
                    if r == c {
                        alpha[r]
                    } else if r + 1 == c {
                        beta[r]
                    } else if c + 1 == r {
                        beta[c]
                    } else {
                        0.0
                    }
                });
                let eig = SymmetricEigen::new(t);
                let mut order: Vec<usize> = (0..m).collect();
                order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
                let s = eig.eigenvectors.column(order[0]);
                residual = (b * s[m - 1]).abs();
                let mut vector = DVector::zeros(dim);
                for (i, qi) in q.iter().enumerate() {
                    vector.axpy(s[i], qi, 1.0);
                }
                let values: Vec<f64> = order.iter().take(2).map(|&i| eig.eigenvalues[i]).collect();
                let scale = values[0].abs().max(1.0);
                let pair = Eigenpair { values, vector, residual };
                if residual < RESIDUAL_TOL * scale || b < 1e-12 {
                    return Ok(pair);
                }
                if m == basis_cap {
                    start = &pair.vector / pair.vector.norm();
                    break;
                }
            }
            beta.push(b);
            q.push(w / b);
        }
    }
    Err(OracleError::NotConverged(residual))
}

fn lowest(h: &TruncatedHamiltonian) -> Result<Eigenpair, OracleError> {
    if h.dim() <= DENSE_LIMIT {
        Ok(dense_lowest(&h.to_dense()))
    } else {
        lanczos_lowest(|v| h.apply(v), h.dim(), 0x5eed)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleResult {
    pub ground_energy: f64,
    pub gap: f64,
    pub cutoff: usize,
    pub dim: usize,
    pub residual: f64,
    /// `|E₀(M) − E₀(M−2)|`
    pub convergence_delta: Option<f64>,
    pub product_energy: Option<ProductResult>,
}

pub fn ground_energy(h: &TruncatedHamiltonian) -> Result<OracleResult, OracleError> {
    let pair = lowest(h)?;
    let e0 = pair.values[0];
    let delta = if h.cutoff > 2 {
        let smaller = hamiltonian_k2(&h.instance, h.cutoff - 2)?;
        Some((e0 - lowest(&smaller)?.values[0]).abs())
    } else {
        None
    };
    Ok(OracleResult {
        ground_energy: e0,
        gap: pair.values.get(1).map_or(f64::NAN, |e1| e1 - e0),
        cutoff: h.cutoff,
        dim: h.dim(),
        residual: pair.residual,
        convergence_delta: delta,
        product_energy: None,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ProductResult {
    pub energy: f64,
    pub converged: bool,
    pub sweeps: usize,
    pub restart: usize,
    /// `E_v[e^{iθ}]` per site
    pub means: Vec<[f64; 2]>,
}

struct Site {
    coeffs: DVector<Complex64>,
}

impl Site {
    fn mean(&self) -> Complex64 {
        // E[e^{iθ}] = Σ_n c_{n−1} conj(c_n)
        let c = &self.coeffs;
        (1..c.len()).map(|n| c[n - 1] * c[n].conj()).sum()
    }

    fn kinetic(&self, cutoff: usize) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, z)| (i as f64 - cutoff as f64).powi(2) * z.norm_sqr())
            .sum()
    }
}

fn product_energy(inst: &RotorInstance, sites: &[Site], cutoff: usize) -> f64 {
    let kin: f64 = sites.iter().map(|s| inst.a * s.kinetic(cutoff)).sum();
    let means: Vec<Complex64> = sites.iter().map(Site::mean).collect();
    let pot: f64 = inst
        .edges
        .iter()
        .map(|e| inst.b * e.w * (inst.c_pot + (means[e.u] * means[e.v].conj()).re))
        .sum();
    kin + pot
}

/// Exact minimization over site `v` with the others fixed.
fn update_site(inst: &RotorInstance, sites: &mut [Site], v: usize, cutoff: usize) {
    let d = 2 * cutoff + 1;
    let mut field = Complex64::new(0.0, 0.0);
    for e in &inst.edges {
        if e.u == v {
            field += inst.b * e.w * sites[e.v].mean();
        } else if e.v == v {
            field += inst.b * e.w * sites[e.u].mean();
        }
    }
    // a m² + Re(conj(μ) e^{iθ}); e^{iθ} raises m by one
    let mut h = DMatrix::<Complex64>::zeros(d, d);
    for i in 0..d {
        h[(i, i)] = Complex64::new(inst.a * (i as f64 - cutoff as f64).powi(2), 0.0);
    }
    for i in 0..d - 1 {
        h[(i + 1, i)] = 0.5 * field.conj();
        h[(i, i + 1)] = 0.5 * field;
    }
    let eig = SymmetricEigen::new(h);
    let imin = (0..d).min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])).expect("d ≥ 1");
    let vec = eig.eigenvectors.column(imin).into_owned();
    let n = vec.norm();
    sites[v].coeffs = vec / Complex64::new(n, 0.0);
}

fn random_site(rng: &mut impl Rng, cutoff: usize) -> Site {
    let d = 2 * cutoff + 1;
    let c = DVector::from_fn(d, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let n = c.norm();
    Site {
        coeffs: c / Complex64::new(n, 0.0),
    }
}

/// Alternating single-site minimization from `restarts` random starts.
/// Gives an upper bound on the best product-state energy. Near critical
/// couplings the sweeps converge sublinearly; after `MAX_SWEEPS` the best
/// energy seen is returned with `converged = false`.
pub fn product_state_k2(inst: &RotorInstance, cutoff: usize, restarts: usize, seed: u64) -> Result<ProductResult, OracleError> {
    if inst.k != 2 {
        return Err(OracleError::UnsupportedK(inst.k));
    }
    if cutoff == 0 {
        return Err(OracleError::Cutoff);
    }
    let runs: Vec<ProductResult> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = mc::chunk_rng(seed, r as u64);
            let mut sites: Vec<Site> = (0..inst.n).map(|_| random_site(&mut rng, cutoff)).collect();
            let mut energy = product_energy(inst, &sites, cutoff);
            let mut converged = false;
            let mut sweeps = 0;
            for _ in 0..MAX_SWEEPS {
                sweeps += 1;
                for v in 0..inst.n {
                    update_site(inst, &mut sites, v, cutoff);
                }
                let next = product_energy(inst, &sites, cutoff);
                let drop = energy - next;
                energy = energy.min(next);
                if drop.abs() < 1e-13 * (1.0 + energy.abs()) {
                    converged = true;
                    break;
                }
            }
            ProductResult {
                energy,
                converged,
                sweeps,
                restart: r,
                means: sites.iter().map(|s| {
                    let m = s.mean();
                    [m.re, m.im]
                }).collect(),
            }
        })
        .collect();
    Ok(runs
        .into_iter()
        .min_by(|a, b| a.energy.total_cmp(&b.energy))
        .expect("at least one restart"))
}

/// Fourier coefficients `c_m`, `m ∈ {−M..M}`, of a wavefunction on `S¹`.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleState {
    pub cutoff: usize,
    pub coeffs: DVector<Complex64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WaveMoments {
    pub laplacian: f64,
    pub mu: Vec<f64>,
}

impl CircleState {
    pub fn new(cutoff: usize, coeffs: DVector<Complex64>) -> Self {
        assert_eq!(coeffs.len(), 2 * cutoff + 1);
        let n = coeffs.norm();
        Self {
            cutoff,
            coeffs: coeffs / Complex64::new(n, 0.0),
        }
    }

    fn mode(&self, i: usize) -> f64 {
        i as f64 - self.cutoff as f64
    }

    fn get(&self, i: i64) -> Complex64 {
        if i < 0 || i as usize >= self.coeffs.len() {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[i as usize]
        }
    }

    /// `E[e^{i s θ}] = Σ_n c_{n−s} conj(c_n)`.
    pub fn fourier_moment(&self, s: i64) -> Complex64 {
        (0..self.coeffs.len() as i64).map(|n| self.get(n - s) * self.get(n).conj()).sum()
    }

    pub fn laplacian(&self) -> f64 {
        self.coeffs.iter().enumerate().map(|(i, z)| self.mode(i).powi(2) * z.norm_sqr()).sum()
    }

    pub fn moments(&self) -> WaveMoments {
        let z = self.fourier_moment(1);
        WaveMoments {
            laplacian: self.laplacian(),
            mu: vec![z.re, z.im],
        }
    }

    /// Rotated copy with spherical mean `t e₁`, `t ≥ 0`.
    pub fn aligned(&self) -> Self {
        let alpha = self.fourier_moment(1).arg();
        let coeffs = DVector::from_fn(self.coeffs.len(), |i, _| self.coeffs[i] * Complex64::from_polar(1.0, self.mode(i) * alpha));
        Self {
            cutoff: self.cutoff,
            coeffs,
        }
    }

    /// Moment data for the spherical certificate, with
    /// `M[a, b] = ∫ (a f)·conj(b f)` and `v₁₂ = i∂_θ`.
    pub fn spherical_moments(&self) -> SphericalMoments {
        let s = self.aligned();
        let t = s.fourier_moment(1).re;
        let w = s.fourier_moment(2).re;
        let n = s.coeffs.len() as i64;
        // (sin θ f)_n = (c_{n−1} − c_{n+1})/(2i), (v₁₂ f)_n = −n c_n
        let xv: Complex64 = (0..n)
            .map(|i| {
                let sin_f = (s.get(i - 1) - s.get(i + 1)) / Complex64::new(0.0, 2.0);
                let v_f = -s.mode(i as usize) * s.get(i);
                sin_f * v_f.conj()
            })
            .sum();
        SphericalMoments {
            k: 2,
            t,
            x_sq: vec![(1.0 + w) / 2.0, (1.0 - w) / 2.0],
            xv: vec![xv],
            vv: vec![s.laplacian()],
            laplacian: s.laplacian(),
        }
    }
}

/// Random normalized state with a random envelope, so that spherical means
/// range over `[0, 1)`.
pub fn random_circle_state(cutoff: usize, seed: u64) -> CircleState {
    let mut rng = mc::chunk_rng(seed, 0);
    let d = 2 * cutoff + 1;
    let center = rng.random_range(-(cutoff as f64)..=cutoff as f64);
    let decay = 10f64.powf(rng.random_range(-2.0..1.0));
    let coeffs = DVector::from_fn(d, |i, _| {
        let env = (-decay * (i as f64 - cutoff as f64 - center).abs()).exp();
        Complex64::new(rng.sample::<f64, _>(StandardNormal) * env, rng.sample::<f64, _>(StandardNormal) * env)
    });
    CircleState::new(cutoff, coeffs)
}

pub fn random_wavefunction_moments(k: usize, cutoff: usize, seed: u64) -> Result<WaveMoments, OracleError> {
    if k != 2 {
        return Err(OracleError::UnsupportedK(k));
    }
    if cutoff == 0 {
        return Err(OracleError::Cutoff);
    }
    Ok(random_circle_state(cutoff, seed).moments())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{erb_rhs, spherical_certificate};
    use proptest::prelude::*;
    use rand::Rng;

    fn edge(a: f64, b: f64) -> RotorInstance {
        RotorInstance::unweighted(2, 2, a, b, 2.0, &[(0, 1)]).unwrap()
    }

    #[test]
    fn single_rotor_spectrum() {
        let inst = RotorInstance::unweighted(1, 2, 1.0, 0.0, 2.0, &[]).unwrap();
        let h = hamiltonian_k2(&inst, 5).unwrap();
        let dense = h.to_dense();
        for i in 0..11 {
            assert_eq!(dense[(i, i)], (i as f64 - 5.0).powi(2));
        }
        let r = ground_energy(&h).unwrap();
        assert!(r.ground_energy.abs() < 1e-12);
        assert!((r.gap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_structure() {
        let h = hamiltonian_k2(&edge(1.0, 1.0), 4).unwrap();
        let d = h.to_dense();
        assert!((&d - d.transpose()).amax() < 1e-15);
        // total mode number is conserved
        let base = 9;
        for (i, j, &v) in h.matrix.triplet_iter() {
            let s = |x: usize| (x % base) as i64 + (x / base) as i64;
            assert_eq!(s(i), s(j), "{i} {j} {v}");
        }
        assert!(matches!(hamiltonian_k2(&RotorInstance::unweighted(2, 3, 1.0, 1.0, 2.0, &[(0, 1)]).unwrap(), 4), Err(OracleError::UnsupportedK(3))));
        let big = RotorInstance::unweighted(5, 2, 1.0, 1.0, 2.0, &[]).unwrap();
        assert!(matches!(hamiltonian_k2(&big, 20), Err(OracleError::DimensionOverflow(_))));
    }

    #[test]
    fn two_by_two_closed_form() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let e = dense_lowest(&m);
        assert!((e.values[0] - (2.5 - 1.25f64.sqrt())).abs() < 1e-12);
        let l = lanczos_lowest(|v| &m * v, 2, 1).unwrap();
        assert!((l.values[0] - e.values[0]).abs() < 1e-12);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, -1.5, 7.0, 0.25]));
        assert!((lanczos_lowest(|v| &diag * v, 4, 2).unwrap().values[0] + 1.5).abs() < 1e-12);
    }

    #[test]
    fn dense_and_lanczos_agree() {
        let h = hamiltonian_k2(&edge(1.0, 1.0), 8).unwrap();
        let dense = dense_lowest(&h.to_dense());
        let lz = lanczos_lowest(|v| h.apply(v), h.dim(), 7).unwrap();
        assert!((dense.values[0] - lz.values[0]).abs() < 1e-9);
        let tri = RotorInstance::unweighted(3, 2, 1.0, 1.0, 2.0, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let h = hamiltonian_k2(&tri, 4).unwrap();
        let dense = dense_lowest(&h.to_dense());
        let lz = lanczos_lowest(|v| h.apply(v), h.dim(), 8).unwrap();
        assert!(lz.residual < RESIDUAL_TOL * (1.0 + lz.values[0].abs()));
        assert!((dense.values[0] - lz.values[0]).abs() < 1e-9);
    }

    #[test]
    fn edge_energies() {
        let classical = ground_energy(&hamiltonian_k2(&edge(0.0, 1.0), 20).unwrap()).unwrap();
        assert!(classical.ground_energy > 1.0 && classical.ground_energy < 1.01);
        let free = ground_energy(&hamiltonian_k2(&edge(1.0, 0.0), 6).unwrap()).unwrap();
        assert!(free.ground_energy.abs() < 1e-12);
        let both = ground_energy(&hamiltonian_k2(&edge(1.0, 1.0), 16).unwrap()).unwrap();
        assert!(both.ground_energy > 1.0 && both.ground_energy < 2.0);
        assert!(both.convergence_delta.unwrap() < 1e-8);
    }

    #[test]
    fn truncation_delta_decreases() {
        let inst = edge(1.0, 1.0);
        let mut prev = f64::INFINITY;
        let floor = 1e-12;
        for m in 6..=12 {
            let d = ground_energy(&hamiltonian_k2(&inst, m).unwrap()).unwrap().convergence_delta.unwrap();
            assert!(d < prev || (d < floor && prev < floor), "M={m}: {d} vs {prev}");
            prev = d;
        }
    }

    #[test]
    fn product_states() {
        let free = product_state_k2(&edge(1.0, 0.0), 6, 4, 1).unwrap();
        assert!(free.energy.abs() < 1e-12);
        let classical = product_state_k2(&edge(0.0, 1.0), 16, 4, 1).unwrap();
        assert!(classical.energy > 1.0 && classical.energy < 1.01);
        let inst = edge(1.0, 1.0);
        let p = product_state_k2(&inst, 16, 8, 1).unwrap();
        let e0 = ground_energy(&hamiltonian_k2(&inst, 16).unwrap()).unwrap().ground_energy;
        assert!(p.energy > e0 + 1e-4, "{} vs {e0}", p.energy);
        // critical coupling: means decay slowly toward the uncorrelated optimum 2
        assert!(p.energy >= 2.0 && p.energy < 2.0 + 1e-6, "{p:?}");
        let weak = product_state_k2(&edge(1.0, 3.0), 16, 4, 1).unwrap();
        assert!(weak.converged && weak.energy < 3.0 * 2.0);
        let once = product_state_k2(&edge(1.0, 2.0), 6, 3, 9).unwrap();
        let again = product_state_k2(&edge(1.0, 2.0), 6, 3, 9).unwrap();
        assert_eq!(once.energy, again.energy);
    }

    #[test]
    fn wavefunction_examples() {
        let mut c = DVector::zeros(7);
        c[3] = Complex64::new(1.0, 0.0);
        let constant = CircleState::new(3, c.clone()).moments();
        assert_eq!(constant.laplacian, 0.0);
        assert!(constant.mu.iter().all(|x| x.abs() < 1e-15));
        c[3] = Complex64::new(0.0, 0.0);
        c[4] = Complex64::new(1.0, 0.0);
        let single = CircleState::new(3, c.clone()).moments();
        assert_eq!(single.laplacian, 1.0);
        assert!(single.mu.iter().all(|x| x.abs() < 1e-15));
        // (1 + e^{iθ})/√2: ⟨Δ⟩ = 1/2, |μ| = 1/2
        c[3] = Complex64::new(1.0, 0.0);
        let mix = CircleState::new(3, c).moments();
        let mu = (mix.mu[0].powi(2) + mix.mu[1].powi(2)).sqrt();
        assert!((mix.laplacian - 0.5).abs() < 1e-15 && (mu - 0.5).abs() < 1e-15);
        assert!(mix.laplacian >= erb_rhs(mu, 2).unwrap());
        assert!(random_wavefunction_moments(3, 4, 1).is_err());
    }

    #[test]
    fn spherical_moments_follow_the_commutator() {
        for seed in 0..50 {
            let s = random_circle_state(8, seed);
            let mo = s.spherical_moments();
            assert!((mo.xv[0].im - mo.t / 2.0).abs() < 1e-12);
            let mu = s.moments().mu;
            assert!((mo.t - (mu[0].powi(2) + mu[1].powi(2)).sqrt()).abs() < 1e-12);
            let cert = spherical_certificate(&mo).unwrap();
            assert!(cert.holds(), "{cert}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn variational_principle(seed in 0u64..10_000) {
            let h = hamiltonian_k2(&edge(1.0, 0.7), 5).unwrap();
            let e0 = dense_lowest(&h.to_dense()).values[0];
            let mut rng = mc::chunk_rng(seed, 0);
            let v = DVector::from_fn(h.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
            prop_assert!(h.rayleigh(&v) >= e0 - 1e-12);
        }

        #[test]
        fn erb_inequality(seed in 0u64..100_000) {
            let m = random_wavefunction_moments(2, 10, seed).unwrap();
            let mu = (m.mu[0].powi(2) + m.mu[1].powi(2)).sqrt();
            prop_assert!(m.laplacian >= erb_rhs(mu, 2).unwrap() - 1e-9);
        }
    }
}
