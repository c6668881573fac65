//! Rank-k Grothendieck relaxation and Gaussian rounding with radial
//! projection `y ↦ y/|y|`.
//!
//! `h(k, t) = E[(x/|x|)·(y/|y|)]` for `(x, y) ~ N(0, [[1, t], [t, 1]] ⊗ I_k/k)`
//! is estimated by Monte Carlo. Because the integrand is rotation and scale
//! invariant it depends on three scalars only: with `a² ~ χ²_k`,
//! `u ~ N(0, 1)`, `r² ~ χ²_{k−1}` and `s = √(1 − t²)`,
//!
//! ```text
//! (x/|x|)·(y/|y|) = (t a + s u) / √((t a + s u)² + s² r²).
//! ```
//!
//! One draw of `(a, u, r)` serves every `t` on the grid.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::mc::{self, Estimate, Welford};
use crate::relax::Edge;
use crate::sdpcore::{self, psd_sqrt, SdpError, SdpOptions, SdpProblem};

pub const GRID_SIZE: usize = 201;

/// `E|x|` for `x ~ N(0, I_k/k)`: `√(2/k)·Γ((k+1)/2)/Γ(k/2)`.
pub fn chi_mean(k: usize) -> f64 {
    assert!(k >= 1, "k must be ≥ 1");
    let kf = k as f64;
    (2.0 / kf).sqrt() * (ln_gamma((kf + 1.0) / 2.0) - ln_gamma(kf / 2.0)).exp()
}

/// `E|x/|x| − x|² = 2(1 − E|x|)`.
pub fn mismatch(k: usize) -> f64 {
    2.0 * (1.0 - chi_mean(k))
}

/// Direct sampling estimate of `E|x/|x| − x|²` for `x ~ N(0, I_k/k)`.
pub fn mismatch_mc(k: usize, samples: u64, seed: u64) -> Estimate {
    let sd = (1.0 / k as f64).sqrt();
    mc::estimate(samples, seed, |rng| {
        let x: Vec<f64> = (0..k).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter().map(|v| (v / norm - v).powi(2)).sum()
    })
}

struct Reduced {
    a: f64,
    u: f64,
    r: f64,
}

fn draw_reduced(rng: &mut ChaCha20Rng, chi_k: &ChiSquared<f64>, chi_km1: Option<&ChiSquared<f64>>) -> Reduced {
    Reduced {
        a: chi_k.sample(rng).sqrt(),
        u: rng.sample(StandardNormal),
        r: chi_km1.map_or(0.0, |d| d.sample(rng).sqrt()),
    }
}

fn dot_at(s: &Reduced, t: f64) -> f64 {
    if t >= 1.0 {
        return 1.0;
    }
    if t <= -1.0 {
        return -1.0;
    }
    let sn = (1.0 - t * t).sqrt();
    let along = t * s.a + sn * s.u;
    let perp = sn * s.r;
    let norm = (along * along + perp * perp).sqrt();
    if norm == 0.0 {
        0.0
    } else {
        along / norm
    }
}

fn chi_dists(k: usize) -> (ChiSquared<f64>, Option<ChiSquared<f64>>) {
    let chi_k = ChiSquared::new(k as f64).expect("k ≥ 1");
    let chi_km1 = (k > 1).then(|| ChiSquared::new(k as f64 - 1.0).expect("k ≥ 2"));
    (chi_k, chi_km1)
}

/// Monte Carlo estimate of `h(k, t)`; exact at `t = ±1`.
pub fn h(k: usize, t: f64, samples: u64, seed: u64) -> Result<Estimate, String> {
    if k == 0 {
        return Err("k must be ≥ 1".into());
    }
    if !(-1.0..=1.0).contains(&t) {
        return Err(format!("correlation {t} outside [−1, 1]"));
    }
    if samples == 0 {
        return Err("samples must be ≥ 1".into());
    }
    if t.abs() == 1.0 {
        return Ok(Estimate::exact(t));
    }
    Ok(h_curve(k, &[t], samples, seed)[0])
}

/// `h(k, t)` at every `t` in `ts` from one shared sample set.
pub fn h_curve(k: usize, ts: &[f64], samples: u64, seed: u64) -> Vec<Estimate> {
    let (chi_k, chi_km1) = chi_dists(k);
    let acc = mc::chunked(samples, seed, ts.len(), |rng, acc, count| {
        for _ in 0..count {
            let s = draw_reduced(rng, &chi_k, chi_km1.as_ref());
            for (w, &t) in acc.iter_mut().zip(ts) {
                w.push(dot_at(&s, t));
            }
        }
    });
    acc.iter()
        .zip(ts)
        .map(|(w, &t)| if t.abs() >= 1.0 { Estimate::exact(t.signum()) } else { w.estimate() })
        .collect()
}

/// Direct estimate of `h(k, t)` from full `2k`-dimensional Gaussian vectors.
pub fn h_direct(k: usize, t: f64, samples: u64, seed: u64) -> Estimate {
    let sn = (1.0 - t * t).max(0.0).sqrt();
    mc::estimate(samples, seed, |rng| {
        let mut dot = 0.0;
        let (mut nx, mut ny) = (0.0, 0.0);
        for _ in 0..k {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let x = z1;
            let y = t * z1 + sn * z2;
            dot += x * y;
            nx += x * x;
            ny += y * y;
        }
        if nx == 0.0 || ny == 0.0 {
            0.0
        } else {
            dot / (nx * ny).sqrt()
        }
    })
}

/// `g(k, t) = (c_pot + h(k, t)) / (c_pot + t)`.
pub fn g(k: usize, t: f64, c_pot: f64, samples: u64, seed: u64) -> Result<Estimate, String> {
    if c_pot + t <= 0.0 {
        return Err(format!("c_pot + t = {} must be positive", c_pot + t));
    }
    let e = h(k, t, samples, seed)?;
    Ok(Estimate {
        mean: (c_pot + e.mean) / (c_pot + t),
        std_err: e.std_err / (c_pot + t),
        samples: e.samples,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioCurve {
    pub k: usize,
    pub c_pot: f64,
    pub samples: u64,
    pub seed: u64,
    pub t: Vec<f64>,
    pub g: Vec<Estimate>,
}

pub fn grid(size: usize) -> Vec<f64> {
    assert!(size >= 2);
    (0..size).map(|i| -1.0 + 2.0 * i as f64 / (size - 1) as f64).collect()
}

pub fn ratio_curve(k: usize, c_pot: f64, grid_size: usize, samples: u64, seed: u64) -> Result<RatioCurve, String> {
    let ts = grid(grid_size);
    if c_pot - 1.0 <= 0.0 {
        return Err(format!("c_pot = {c_pot} must exceed 1 so that c_pot + t > 0 on [−1, 1]"));
    }
    let hs = h_curve(k, &ts, samples, seed);
    let g = hs
        .iter()
        .zip(&ts)
        .map(|(e, &t)| Estimate {
            mean: (c_pot + e.mean) / (c_pot + t),
            std_err: e.std_err / (c_pot + t),
            samples: e.samples,
        })
        .collect();
    Ok(RatioCurve {
        k,
        c_pot,
        samples,
        seed,
        t: ts,
        g,
    })
}

impl RatioCurve {
    /// `# k=… samples=… seed=… c_pot=…`, then `t,g,std_err` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# k={} samples={} seed={} c_pot={}", self.k, self.samples, self.seed, self.c_pot).unwrap();
        writeln!(s, "t,g,std_err").unwrap();
        for (t, g) in self.t.iter().zip(&self.g) {
            writeln!(s, "{t:.6},{:.12},{:.6e}", g.mean, g.std_err).unwrap();
        }
        s
    }

    /// Grid maximum refined by a 3-point quadratic fit.
    pub fn alpha(&self) -> AlphaBov {
        let (imax, best) = self
            .g
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.mean.partial_cmp(&b.1.mean).expect("finite"))
            .expect("nonempty grid");
        let mut value = best.mean;
        let mut t_star = self.t[imax];
        if imax > 0 && imax + 1 < self.t.len() {
            let (y0, y1, y2) = (self.g[imax - 1].mean, best.mean, self.g[imax + 1].mean);
            let denom = y0 - 2.0 * y1 + y2;
            if denom < 0.0 {
                let step = self.t[imax + 1] - self.t[imax];
                let off = 0.5 * (y0 - y2) / denom;
                if off.abs() <= 1.0 {
                    t_star += off * step;
                    value = y1 - 0.25 * (y0 - y2) * off;
                }
            }
        }
        AlphaBov {
            k: self.k,
            value: value.max(1.0),
            std_err: best.std_err,
            t_star,
            samples: self.samples,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AlphaBov {
    pub k: usize,
    pub value: f64,
    pub std_err: f64,
    pub t_star: f64,
    pub samples: u64,
}

pub fn alpha_bov(k: usize, c_pot: f64, grid_size: usize, samples: u64, seed: u64) -> Result<AlphaBov, String> {
    Ok(ratio_curve(k, c_pot, grid_size, samples, seed)?.alpha())
}

/// `minimize Σ w (c_pot + M′_vw)` over `n × n` PSD `M′` with unit diagonal.
pub fn build_bov(n: usize, edges: &[Edge], c_pot: f64) -> SdpProblem {
    let mut p = SdpProblem::new(n);
    for v in 0..n {
        let mut a = sdpcore::Hermitian::new(n);
        a.add_real(v, v, 1.0);
        p.add_constraint(a, 1.0);
    }
    for e in edges {
        p.objective.add_re_functional(e.u, e.v, e.w);
        p.offset += e.w * c_pot;
    }
    p
}

#[derive(Clone, Debug, PartialEq)]
pub struct BovSolution {
    pub m: DMatrix<f64>,
    pub value: f64,
}

impl BovSolution {
    pub fn value_of(m: &DMatrix<f64>, edges: &[Edge], c_pot: f64) -> f64 {
        edges.iter().map(|e| e.w * (c_pot + m[(e.u, e.v)])).sum()
    }
}

pub fn solve_bov(n: usize, edges: &[Edge], c_pot: f64, opts: &SdpOptions) -> Result<BovSolution, SdpError> {
    let p = build_bov(n, edges, c_pot);
    let s = sdpcore::solve(&p, opts)?;
    let m = s.x.map(|v| v.re);
    Ok(BovSolution {
        value: BovSolution::value_of(&m, edges, c_pot),
        m,
    })
}

#[derive(Clone, Debug)]
pub struct Rounded {
    pub vectors: Vec<DVector<f64>>,
    pub value: f64,
}

/// One draw of the rounding `y ~ N(0, M′ ⊗ I_k)`, `v ↦ y_v/|y_v|`.
pub fn round_bov(sol: &BovSolution, edges: &[Edge], c_pot: f64, k: usize, seed: u64) -> Result<Rounded, SdpError> {
    let root = psd_sqrt(&sol.m, 1e-6)?;
    let mut rng = mc::chunk_rng(seed, 0);
    Ok(round_with(&root, edges, c_pot, k, &mut rng))
}

fn round_with(root: &DMatrix<f64>, edges: &[Edge], c_pot: f64, k: usize, rng: &mut ChaCha20Rng) -> Rounded {
    let n = root.nrows();
    loop {
        let z = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = root * z;
        let mut vectors = Vec::with_capacity(n);
        let mut degenerate = false;
        for v in 0..n {
            let row = y.row(v).transpose();
            let norm = row.norm();
            if norm == 0.0 {
                degenerate = true;
                break;
            }
            vectors.push(row / norm);
        }
        if degenerate {
            continue;
        }
        let value = edges.iter().map(|e| e.w * (c_pot + vectors[e.u].dot(&vectors[e.v]))).sum();
        return Rounded { vectors, value };
    }
}

/// Mean rounded value over `samples` independent roundings.
pub fn round_bov_mean(sol: &BovSolution, edges: &[Edge], c_pot: f64, k: usize, samples: u64, seed: u64) -> Result<Estimate, SdpError> {
    let root = psd_sqrt(&sol.m, 1e-6)?;
    Ok(mc::chunked(samples, seed, 1, |rng, acc: &mut [Welford], count| {
        for _ in 0..count {
            acc[0].push(round_with(&root, edges, c_pot, k, rng).value);
        }
    })[0]
        .estimate())
}
