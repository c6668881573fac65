//! Bosonic-Gaussian rounding of a reduced moment solution and the energy of
//! the rounded state.
//!
//! The Gaussian has covariance `σ = (k/(k−1))·Re(M′ ⊗ I_k)` over interleaved
//! coordinates `(x_{v,i}, p_{v,i})` with `p = −q`, so that the fixed
//! imaginary parts of `M′` become the canonical `±1/2`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::bov::{self, AlphaBov};
use crate::mc::{self, Estimate};
use crate::phasespace::{self, MomentSpec, PhaseError};
use crate::poly::coeff_to_f64;
use crate::relax::{ReducedMoment, RotorInstance};
use crate::sdpcore::{min_eig_real, psd_sqrt, real_embedding};

pub const VALIDITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RoundingError {
    #[error("σ + (i/2)Ω is not PSD (min eigenvalue {0:e})")]
    ValidityViolation(f64),
    #[error("unknown kinetic mode {0:?} (expected closed_form, wick or mc)")]
    UnknownMode(String),
    #[error("closed form needs K_v = 0, got x–p covariance {0:e}")]
    CrossMoment(f64),
    #[error("instance and moment disagree: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error("{0}")]
    Mc(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianCovariance {
    pub n: usize,
    pub k: usize,
    pub sigma: DMatrix<f64>,
}

impl GaussianCovariance {
    pub fn dim(&self) -> usize {
        2 * self.n * self.k
    }

    pub fn xi(&self, v: usize, i: usize) -> usize {
        2 * (v * self.k + i)
    }

    pub fn pi(&self, v: usize, i: usize) -> usize {
        self.xi(v, i) + 1
    }

    /// Block-diagonal `[[0, 1], [−1, 0]]`.
    pub fn omega(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut o = DMatrix::zeros(d, d);
        for m in 0..d / 2 {
            o[(2 * m, 2 * m + 1)] = 1.0;
            o[(2 * m + 1, 2 * m)] = -1.0;
        }
        o
    }

    /// Minimum eigenvalue of `σ + (i/2)Ω`, via the real embedding.
    pub fn validity_margin(&self) -> f64 {
        let o = self.omega();
        let h = DMatrix::from_fn(self.dim(), self.dim(), |a, b| Complex64::new(self.sigma[(a, b)], 0.5 * o[(a, b)]));
        // the embedding doubles every eigenvalue's multiplicity
        min_eig_real(&real_embedding(&h).expect("Hermitian by construction"))
    }

    /// Correlation coefficient of `x_{v,1}` and `x_{w,1}`.
    pub fn correlation(&self, v: usize, w: usize) -> f64 {
        let (a, b) = (self.xi(v, 0), self.xi(w, 0));
        let t = self.sigma[(a, b)] / (self.sigma[(a, a)] * self.sigma[(b, b)]).sqrt();
        t.clamp(-1.0, 1.0)
    }

    /// Covariance of vertex `v` over `(x_1..x_k, p_1..p_k)`.
    pub fn vertex_marginal(&self, v: usize) -> DMatrix<f64> {
        let k = self.k;
        let idx: Vec<usize> = (0..k).map(|i| self.xi(v, i)).chain((0..k).map(|i| self.pi(v, i))).collect();
        DMatrix::from_fn(2 * k, 2 * k, |a, b| self.sigma[(idx[a], idx[b])])
    }
}

pub fn build_gaussian(rm: &ReducedMoment) -> Result<GaussianCovariance, RoundingError> {
    let gc = gaussian_unchecked(rm);
    let margin = gc.validity_margin();
    if margin < -VALIDITY_TOL {
        return Err(RoundingError::ValidityViolation(margin));
    }
    Ok(gc)
}

fn gaussian_unchecked(rm: &ReducedMoment) -> GaussianCovariance {
    let (n, k) = (rm.n(), rm.k);
    let scale = k as f64 / (k as f64 - 1.0);
    let m = rm.matrix();
    let mut gc = GaussianCovariance {
        n,
        k,
        sigma: DMatrix::zeros(2 * n * k, 2 * n * k),
    };
    // reduced row 2v is x_v, 2v+1 is q_v = −p_v
    let sign = |r: usize| if r % 2 == 0 { 1.0 } else { -1.0 };
    for r in 0..2 * n {
        for c in 0..2 * n {
            let val = scale * sign(r) * sign(c) * m[(r, c)].re;
            for i in 0..k {
                let a = gc.xi(r / 2, i) + r % 2;
                let b = gc.xi(c / 2, i) + c % 2;
                gc.sigma[(a, b)] = val;
            }
        }
    }
    gc
}

/// `k·Re M′[x_v, x_w]`, the correlation read off the moment matrix.
pub fn moment_correlation(rm: &ReducedMoment, v: usize, w: usize) -> f64 {
    if v == w {
        return 1.0;
    }
    (rm.k as f64 * rm.block(v, w)[0][0]).clamp(-1.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KineticMode {
    ClosedForm,
    Wick,
    Mc,
}

impl FromStr for KineticMode {
    type Err = RoundingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "closed_form" => Ok(Self::ClosedForm),
            "wick" => Ok(Self::Wick),
            "mc" => Ok(Self::Mc),
            other => Err(RoundingError::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for KineticMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ClosedForm => "closed_form",
            Self::Wick => "wick",
            Self::Mc => "mc",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McOptions {
    pub samples: u64,
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            samples: 100_000,
            seed: 0,
        }
    }
}

/// `w·(c_pot + h(k, t_vw))`.
pub fn rounded_potential_edge(gc: &GaussianCovariance, v: usize, w: usize, weight: f64, c_pot: f64, mc: &McOptions) -> Result<Estimate, RoundingError> {
    let t = gc.correlation(v, w);
    let h = bov::h(gc.k, t, mc.samples, mc.seed).map_err(RoundingError::Mc)?;
    Ok(Estimate {
        mean: weight * (c_pot + h.mean),
        std_err: weight.abs() * h.std_err,
        samples: h.samples,
    })
}

/// Expected kinetic symbol `Σ_{i<j} (x_i p_j − x_j p_i)² − 1/2` at vertex
/// `v`, times `a`.
pub fn rounded_kinetic_vertex(gc: &GaussianCovariance, v: usize, a: f64, mode: KineticMode, mc: &McOptions) -> Result<Estimate, RoundingError> {
    let k = gc.k;
    let kf = k as f64;
    let value = match mode {
        KineticMode::ClosedForm => {
            let (x, p) = (gc.xi(v, 0), gc.pi(v, 0));
            let cross = gc.sigma[(x, p)];
            if cross.abs() > 1e-12 {
                return Err(RoundingError::CrossMoment(cross));
            }
            // Var(x) = 1/(k−1) and Var(p) = (k/(k−1))·L_v
            let lv = gc.sigma[(p, p)] * (kf - 1.0) / kf;
            Estimate::exact(-kf * (kf - 1.0) / 4.0 + kf * kf / (kf - 1.0) * lv)
        }
        KineticMode::Wick => {
            let spec = MomentSpec::centered(gc.vertex_marginal(v))?;
            Estimate::exact(phasespace::wick_expectation(&phasespace::kinetic_weyl_symbol(k), &spec)?)
        }
        KineticMode::Mc => kinetic_mc(gc, v, mc)?,
    };
    Ok(Estimate {
        mean: a * value.mean,
        std_err: a.abs() * value.std_err,
        samples: value.samples,
    })
}

fn kinetic_mc(gc: &GaussianCovariance, v: usize, mc: &McOptions) -> Result<Estimate, RoundingError> {
    let cov = gc.vertex_marginal(v);
    let root = psd_sqrt(&cov, 1e-9).map_err(|e| RoundingError::Mc(e.to_string()))?;
    let symbol = phasespace::kinetic_weyl_symbol(gc.k);
    let terms: Vec<(Vec<u32>, f64)> = symbol
        .as_poly()
        .terms()
        .iter()
        .map(|(e, c)| (e.clone(), coeff_to_f64(c).re))
        .collect();
    let d = cov.nrows();
    Ok(mc::estimate(mc.samples, mc.seed, |rng| {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let pt = &root * z;
        terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(pt.iter()).map(|(&p, &x)| x.powi(p as i32)).product::<f64>())
            .sum()
    }))
}

#[derive(Clone, Debug, Serialize)]
pub struct VertexTerm {
    pub v: usize,
    pub sdp: f64,
    pub rounded: f64,
    pub std_err: f64,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EdgeTerm {
    pub u: usize,
    pub v: usize,
    pub w: f64,
    pub t: f64,
    pub sdp: f64,
    pub rounded: f64,
    pub std_err: f64,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RoundingReport {
    pub k: usize,
    pub mode: KineticMode,
    pub samples: u64,
    pub seed: u64,
    pub validity_margin: f64,
    pub sdp_value: f64,
    pub rounded_value: f64,
    pub rounded_std_err: f64,
    pub vertices: Vec<VertexTerm>,
    pub edges: Vec<EdgeTerm>,
}

fn ratio(rounded: f64, sdp: f64) -> Option<f64> {
    (sdp.abs() > 1e-12).then(|| rounded / sdp)
}

pub fn rounded_value(inst: &RotorInstance, rm: &ReducedMoment, mode: KineticMode, mc: &McOptions) -> Result<RoundingReport, RoundingError> {
    if inst.n != rm.n() || inst.k != rm.k {
        return Err(RoundingError::Mismatch(format!(
            "instance (n={}, k={}) vs moment (n={}, k={})",
            inst.n,
            inst.k,
            rm.n(),
            rm.k
        )));
    }
    let gc = build_gaussian(rm)?;
    let kin = rm.kinetic_terms(inst);
    let pot = rm.potential_terms(inst);
    let mut vertices = Vec::with_capacity(inst.n);
    for (v, &sdp) in kin.iter().enumerate() {
        let e = rounded_kinetic_vertex(&gc, v, inst.a, mode, mc)?;
        vertices.push(VertexTerm {
            v,
            sdp,
            rounded: e.mean,
            std_err: e.std_err,
            ratio: ratio(e.mean, sdp),
        });
    }
    let mut edges = Vec::with_capacity(inst.edges.len());
    for (e, &sdp) in inst.edges.iter().zip(&pot) {
        let r = rounded_potential_edge(&gc, e.u, e.v, inst.b * e.w, inst.c_pot, mc)?;
        edges.push(EdgeTerm {
            u: e.u,
            v: e.v,
            w: e.w,
            t: gc.correlation(e.u, e.v),
            sdp,
            rounded: r.mean,
            std_err: r.std_err,
            ratio: ratio(r.mean, sdp),
        });
    }
    let var: f64 = vertices.iter().map(|t| t.std_err.powi(2)).sum::<f64>() + edges.iter().map(|t| t.std_err.powi(2)).sum::<f64>();
    Ok(RoundingReport {
        k: inst.k,
        mode,
        samples: mc.samples,
        seed: mc.seed,
        validity_margin: gc.validity_margin(),
        sdp_value: kin.iter().sum::<f64>() + pot.iter().sum::<f64>(),
        rounded_value: vertices.iter().map(|t| t.rounded).sum::<f64>() + edges.iter().map(|t| t.rounded).sum::<f64>(),
        // edge estimates share samples, so this is a lower estimate
        rounded_std_err: var.sqrt(),
        vertices,
        edges,
    })
}

impl fmt::Display for RoundingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.6}"));
        writeln!(f, "k={} mode={} samples={} seed={}", self.k, self.mode, self.samples, self.seed)?;
        writeln!(f, "validity margin {:.3e}", self.validity_margin)?;
        writeln!(f, "{:<10} {:>14} {:>14} {:>12} {:>10}", "term", "sdp", "rounded", "std_err", "ratio")?;
        for t in &self.vertices {
            writeln!(f, "{:<10} {:>14.8} {:>14.8} {:>12.3e} {:>10}", format!("v{}", t.v), t.sdp, t.rounded, t.std_err, r(t.ratio))?;
        }
        for t in &self.edges {
            writeln!(
                f,
                "{:<10} {:>14.8} {:>14.8} {:>12.3e} {:>10}",
                format!("e{}-{}", t.u, t.v),
                t.sdp,
                t.rounded,
                t.std_err,
                r(t.ratio)
            )?;
        }
        writeln!(
            f,
            "{:<10} {:>14.8} {:>14.8} {:>12.3e} {:>10}",
            "total",
            self.sdp_value,
            self.rounded_value,
            self.rounded_std_err,
            r(ratio(self.rounded_value, self.sdp_value))
        )
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AlphaReport {
    pub k: usize,
    pub alpha_bov: AlphaBov,
    pub k_ratio: f64,
    pub alpha_k: f64,
}

/// `α_k = max(α_BOV,k, k/(k−1))`.
pub fn alpha(k: usize, c_pot: f64, mc: &McOptions) -> Result<AlphaReport, RoundingError> {
    if k < 2 {
        return Err(RoundingError::Mismatch("k must be ≥ 2".into()));
    }
    let ab = bov::alpha_bov(k, c_pot, bov::GRID_SIZE, mc.samples, mc.seed).map_err(RoundingError::Mc)?;
    let k_ratio = k as f64 / (k as f64 - 1.0);
    Ok(AlphaReport {
        k,
        alpha_bov: ab,
        k_ratio,
        alpha_k: ab.value.max(k_ratio),
    })
}
