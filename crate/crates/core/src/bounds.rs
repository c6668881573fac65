//! Single-edge product-state and entangled-state bounds, and moment-matrix
//! certificates for the Bloch, Heisenberg and spherical uncertainty
//! principles.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::sdpcore::min_eig;

/// Upper clamp for `t ∈ [0, 1)`.
pub const T_MAX: f64 = 1.0 - 1e-9;
pub const PROD_GRID: usize = 256;
pub const CERT_TOL: f64 = 1e-10;

fn phi(t: f64) -> f64 {
    t * t / (1.0 - t * t)
}

fn kinetic_scale(k: usize) -> f64 {
    ((k as f64 - 1.0) / 2.0).powi(2)
}

/// Golden-section minimum of a unimodal `f` on `[lo, hi]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    let best = [(lo, f(lo)), (c, fc), (d, fd), (hi, f(hi))]
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    best
}

/// `((k−1)/2)²·μ²/(1−μ²)`.
pub fn erb_rhs(mu_norm: f64, k: usize) -> Result<f64, String> {
    if !(0.0..1.0).contains(&mu_norm) {
        return Err(format!("spherical mean norm {mu_norm} must lie in [0, 1)"));
    }
    Ok(kinetic_scale(k) * phi(mu_norm))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProdLower {
    pub value: f64,
    pub s: f64,
    pub t: f64,
}

/// `inf_{s,t ∈ [0,1)} a((k−1)/2)²(φ(s) + φ(t)) + b(c_pot − st)`,
/// `φ(t) = t²/(1−t²)`.
pub fn prod_lower(k: usize, a: f64, b: f64, c_pot: f64) -> ProdLower {
    let aa = a * kinetic_scale(k);
    let f = |s: f64, t: f64| aa * (phi(s) + phi(t)) + b * (c_pot - s * t);
    let grid: Vec<f64> = (0..PROD_GRID).map(|i| T_MAX * i as f64 / (PROD_GRID - 1) as f64).collect();
    let (mut s, mut t, mut best) = grid
        .par_iter()
        .map(|&s| {
            grid.iter()
                .map(|&t| (s, t, f(s, t)))
                .min_by(|x, y| x.2.total_cmp(&y.2))
                .expect("nonempty")
        })
        .min_by(|x, y| x.2.total_cmp(&y.2))
        .expect("nonempty");
    // each coordinate problem is convex
    for _ in 0..10_000 {
        let (ns, _) = golden_min(|x| f(x, t), 0.0, T_MAX, 1e-13);
        let (nt, v) = golden_min(|x| f(ns, x), 0.0, T_MAX, 1e-13);
        let moved = (ns - s).abs() + (nt - t).abs();
        if v <= best {
            s = ns;
            t = nt;
            best = v;
        }
        if moved < 1e-12 {
            break;
        }
    }
    ProdLower { value: best, s, t }
}

/// `inf_{t ∈ [0,1)} 2aC((k−1)/2)² φ(t) + b(c_pot − t)`.
pub fn entangled_curve(k: usize, a: f64, b: f64, c: f64, c_pot: f64) -> f64 {
    let aa = 2.0 * a * c * kinetic_scale(k);
    golden_min(|t| aa * phi(t) + b * (c_pot - t), 0.0, T_MAX, 1e-13).1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProdRatio {
    pub k: usize,
    pub c: f64,
    pub c_pot: f64,
    pub ratio: f64,
    /// Maximizing kinetic weight; 0 when the supremum is only approached as `a → 0`.
    pub a_star: f64,
}

/// Bounds of the scan over `A = a((k−1)/2)²`, the only combination the ratio depends on.
pub const RATIO_A_MIN: f64 = 1e-6;
pub const RATIO_A_MAX: f64 = 1e4;

/// `sup_a prod_lower / entangled_curve` at `b = 1` and potential constant 1.
pub fn prod_ratio(k: usize, c: f64) -> ProdRatio {
    prod_ratio_with(k, c, 1.0)
}

/// Ratio limit as `a → 0`: both infima approach `c_pot − 1` plus a `√a` correction.
pub fn prod_ratio_limit(c: f64, c_pot: f64) -> f64 {
    if c_pot == 1.0 {
        (2.0 / c).sqrt()
    } else {
        1.0
    }
}

pub fn prod_ratio_with(k: usize, c: f64, c_pot: f64) -> ProdRatio {
    let scale = kinetic_scale(k);
    let ratio_at = |la: f64| {
        let a = 10f64.powf(la) / scale;
        prod_lower(k, a, 1.0, c_pot).value / entangled_curve(k, a, 1.0, c, c_pot)
    };
    let (lo, hi) = (RATIO_A_MIN.log10(), RATIO_A_MAX.log10());
    let n = 401;
    let pts: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let la = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            (la, ratio_at(la))
        })
        .collect();
    let imax = (0..n).max_by(|&i, &j| pts[i].1.total_cmp(&pts[j].1)).expect("nonempty");
    let step = (hi - lo) / (n - 1) as f64;
    let (bl, bh) = ((pts[imax].0 - step).max(lo), (pts[imax].0 + step).min(hi));
    let (la, neg) = golden_min(|x| -ratio_at(x), bl, bh, 1e-9);
    let (la, ratio) = if -neg >= pts[imax].1 { (la, -neg) } else { pts[imax] };
    let limit = prod_ratio_limit(c, c_pot);
    let (ratio, a_star) = if limit > ratio { (limit, 0.0) } else { (ratio, 10f64.powf(la) / scale) };
    ProdRatio {
        k,
        c,
        c_pot,
        ratio,
        a_star,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QmcProduct {
    pub value: f64,
    pub u: [f64; 3],
    pub v: [f64; 3],
}

/// Best product-state energy `(1 − u·v)/4` over Bloch vectors `|u|, |v| ≤ 1`.
pub fn qmc_product_edge() -> QmcProduct {
    // u·v = r₁r₂cos θ; scan radii and angle
    let n = 64;
    let mut best = QmcProduct {
        value: f64::NEG_INFINITY,
        u: [0.0; 3],
        v: [0.0; 3],
    };
    for i in 0..=n {
        let r1 = i as f64 / n as f64;
        for j in 0..=n {
            let r2 = j as f64 / n as f64;
            for l in 0..=4 * n {
                let th = std::f64::consts::PI * l as f64 / (4 * n) as f64;
                let u = [0.0, 0.0, r1];
                let v = [r2 * th.sin(), 0.0, r2 * th.cos()];
                let value = (1.0 - dot3(&u, &v)) / 4.0;
                if value > best.value {
                    best = QmcProduct { value, u, v };
                }
            }
        }
    }
    best
}

fn dot3(u: &[f64; 3], v: &[f64; 3]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Bloch,
    Heisenberg,
    Spherical,
}

#[derive(Clone, Debug, Serialize)]
pub struct Block {
    pub label: String,
    #[serde(serialize_with = "serialize_matrix")]
    pub matrix: DMatrix<Complex64>,
    pub det: f64,
    pub min_eigenvalue: f64,
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<Complex64>, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect();
    serde::Serialize::serialize(&rows, s)
}

impl Block {
    pub fn new(label: impl Into<String>, matrix: DMatrix<Complex64>) -> Self {
        Self {
            label: label.into(),
            det: matrix.determinant().re,
            min_eigenvalue: min_eig(&matrix),
            matrix,
        }
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue >= -CERT_TOL
    }
}

/// `lhs ≥ rhs` follows from the blocks being PSD.
#[derive(Clone, Debug, Serialize)]
pub struct UncertaintyCertificate {
    pub kind: CertificateKind,
    pub blocks: Vec<Block>,
    pub lhs: f64,
    pub rhs: f64,
    pub violations: Vec<String>,
}

impl UncertaintyCertificate {
    pub fn min_block_eigenvalue(&self) -> f64 {
        self.blocks.iter().map(|b| b.min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }

    fn finish(kind: CertificateKind, blocks: Vec<Block>, lhs: f64, rhs: f64, mut violations: Vec<String>, slack: f64) -> Self {
        for b in &blocks {
            if !b.is_psd() {
                violations.push(format!("block {} has eigenvalue {:e}", b.label, b.min_eigenvalue));
            }
        }
        if lhs < rhs - slack {
            violations.push(format!("bound fails: {lhs} < {rhs}"));
        }
        Self {
            kind,
            blocks,
            lhs,
            rhs,
            violations,
        }
    }
}

impl fmt::Display for UncertaintyCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            CertificateKind::Bloch => "bloch",
            CertificateKind::Heisenberg => "heisenberg",
            CertificateKind::Spherical => "spherical",
        };
        writeln!(f, "certificate {kind}")?;
        for b in &self.blocks {
            writeln!(f, "block {} det {:.12e} min_eig {:.12e}", b.label, b.det, b.min_eigenvalue)?;
            for i in 0..b.matrix.nrows() {
                let row: Vec<String> = (0..b.matrix.ncols())
                    .map(|j| format!("{:.12e}{:+.12e}i", b.matrix[(i, j)].re, b.matrix[(i, j)].im))
                    .collect();
                writeln!(f, "  {}", row.join(" "))?;
            }
        }
        writeln!(f, "lhs {:.12e} rhs {:.12e}", self.lhs, self.rhs)?;
        for v in &self.violations {
            writeln!(f, "violation {v}")?;
        }
        writeln!(f, "{}", if self.holds() { "HOLDS" } else { "VIOLATED" })
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Moment matrix over `(1, X, Z)`; `det = 1 − |⟨σ⟩|²`.
pub fn bloch_certificate(state: [Complex64; 2]) -> UncertaintyCertificate {
    let norm = (state[0].norm_sqr() + state[1].norm_sqr()).sqrt();
    let (a, b) = (state[0] / norm, state[1] / norm);
    let x = 2.0 * (a.conj() * b).re;
    let y = 2.0 * (a.conj() * b).im;
    let z = a.norm_sqr() - b.norm_sqr();
    let m = DMatrix::from_row_slice(
        3,
        3,
        &[c(1.0, 0.0), c(x, 0.0), c(z, 0.0), c(x, 0.0), c(1.0, 0.0), c(0.0, y), c(z, 0.0), c(0.0, -y), c(1.0, 0.0)],
    );
    UncertaintyCertificate::finish(CertificateKind::Bloch, vec![Block::new("M", m)], 1.0, x * x + y * y + z * z, Vec::new(), 1e-12)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HeisenbergMoments {
    pub x: f64,
    pub p: f64,
    pub x2: f64,
    pub p2: f64,
    /// `Re⟨xp⟩`
    pub xp: f64,
}

/// Moment matrix over `(1, x, p)` at ħ = 1 and its Schur complement.
pub fn heisenberg_certificate(mo: &HeisenbergMoments) -> UncertaintyCertificate {
    let xp = c(mo.xp, 0.5);
    let m = DMatrix::from_row_slice(
        3,
        3,
        &[c(1.0, 0.0), c(mo.x, 0.0), c(mo.p, 0.0), c(mo.x, 0.0), c(mo.x2, 0.0), xp, c(mo.p, 0.0), xp.conj(), c(mo.p2, 0.0)],
    );
    let vx = mo.x2 - mo.x * mo.x;
    let vp = mo.p2 - mo.p * mo.p;
    let cov = mo.xp - mo.x * mo.p;
    let schur = DMatrix::from_row_slice(2, 2, &[c(vx, 0.0), c(cov, 0.5), c(cov, -0.5), c(vp, 0.0)]);
    UncertaintyCertificate::finish(
        CertificateKind::Heisenberg,
        vec![Block::new("M", m), Block::new("M/1", schur)],
        vx * vp - cov * cov,
        0.25,
        Vec::new(),
        1e-10,
    )
}

/// Moments of a wavefunction on `S^{k−1}` rotated so that its spherical
/// mean is `t e₁`, with `M[a, b] = ∫ (a f)·conj(b f)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SphericalMoments {
    pub k: usize,
    pub t: f64,
    /// `M[x_i²]`, `i = 1..k`
    pub x_sq: Vec<f64>,
    /// `M[x_i v_{1i}]`, `i = 2..k`
    pub xv: Vec<Complex64>,
    /// `M[v_{1i}²]`, `i = 2..k`
    pub vv: Vec<f64>,
    /// `⟨f, Δ f⟩`
    pub laplacian: f64,
}

pub fn spherical_certificate(mo: &SphericalMoments) -> Result<UncertaintyCertificate, String> {
    let k = mo.k;
    if k < 2 || mo.x_sq.len() != k || mo.xv.len() != k - 1 || mo.vv.len() != k - 1 {
        return Err(format!("moment vectors do not match k = {k}"));
    }
    if !(0.0..1.0).contains(&mo.t) {
        return Err(format!("t = {} must lie in [0, 1)", mo.t));
    }
    let mut violations = Vec::new();
    let total: f64 = mo.x_sq.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        violations.push(format!("Σ M[x_i²] = {total} ≠ 1"));
    }
    for (i, z) in mo.xv.iter().enumerate() {
        if (z.im - mo.t / 2.0).abs() > 1e-9 {
            violations.push(format!("Im M[x_{0} v_1{0}] = {1} ≠ t/2", i + 2, z.im));
        }
    }
    let mut blocks = vec![Block::new(
        "x1",
        DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(mo.t, 0.0), c(mo.t, 0.0), c(mo.x_sq[0], 0.0)]),
    )];
    let (mut sx, mut sxv, mut svv) = (0.0, Complex64::new(0.0, 0.0), 0.0);
    for i in 0..k - 1 {
        let (x, z, v) = (mo.x_sq[i + 1], mo.xv[i], mo.vv[i]);
        blocks.push(Block::new(
            format!("x{}v1{}", i + 2, i + 2),
            DMatrix::from_row_slice(2, 2, &[c(x, 0.0), z, z.conj(), c(v, 0.0)]),
        ));
        sx += x;
        sxv += z;
        svv += v;
    }
    blocks.push(Block::new("trace", DMatrix::from_row_slice(2, 2, &[c(sx, 0.0), sxv, sxv.conj(), c(svv, 0.0)])));
    let rhs = erb_rhs(mo.t, k)?;
    if svv < rhs - 1e-9 {
        violations.push(format!("Σ M[v_1i²] = {svv} below {rhs}"));
    }
    Ok(UncertaintyCertificate::finish(CertificateKind::Spherical, blocks, mo.laplacian, rhs, violations, 1e-9))
}
