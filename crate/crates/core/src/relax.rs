//! Level-1 moment relaxation of the quantum rotor Hamiltonian
//!
//! ```text
//! H = a Σ_v Δ_v + b Σ_{(v,w)} w_vw (c_pot + x_v · x_w)
//! ```
//!
//! in its full form over `{1} ∪ {x_{v,i}} ∪ {q_{v,i}}` and in the `O(k)`
//! reduced form `M = 1 ⊕ M′ ⊗ I_k` with `M′` of size `2n`.
//!
//! The moment matrix is `M[a, b] = Ẽ[a b]`. Full index map: `1 ↦ 0`,
//! `x_{v,i} ↦ 1 + 2kv + i`, `q_{v,i} ↦ 1 + 2kv + k + i`. Reduced index map:
//! `x_v ↦ 2v`, `q_v ↦ 2v + 1`.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sdpcore::{self, min_eig, Hermitian, SdpError, SdpOptions, SdpProblem, SdpSolution};

pub const DEFAULT_C_POT: f64 = 2.0;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("invalid instance: {}edge {index}: {msg}", .line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Edge { index: usize, line: Option<usize>, msg: String },
}

impl InstanceError {
    fn edge(index: usize, msg: String) -> Self {
        Self::Edge { index, line: None, msg }
    }
}

/// 1-based line of each element of the top-level `"edges"` array.
fn edge_lines(text: &str) -> Vec<usize> {
    let Some(start) = text.find("\"edges\"") else {
        return Vec::new();
    };
    let mut line = 1 + text[..start].matches('\n').count();
    let mut depth = 0usize;
    let mut out = Vec::new();
    for ch in text[start..].chars() {
        match ch {
            '\n' => line += 1,
            '[' => {
                depth += 1;
                if depth == 2 {
                    out.push(line);
                }
            }
            ']' => {
                if depth <= 1 {
                    break;
                }
                depth -= 1;
            }
            _ => {}
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RotorInstance {
    pub n: usize,
    pub k: usize,
    pub a: f64,
    pub b: f64,
    pub c_pot: f64,
    pub edges: Vec<Edge>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    k: usize,
    a: f64,
    b: f64,
    #[serde(default)]
    c_pot: Option<f64>,
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    edges: Vec<Vec<f64>>,
}

impl RotorInstance {
    pub fn new(n: usize, k: usize, a: f64, b: f64, c_pot: f64, edges: Vec<Edge>) -> Result<Self, InstanceError> {
        let inst = Self {
            n,
            k,
            a,
            b,
            c_pot,
            edges,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Unit-weight edges.
    pub fn unweighted(n: usize, k: usize, a: f64, b: f64, c_pot: f64, edges: &[(usize, usize)]) -> Result<Self, InstanceError> {
        let edges = edges.iter().map(|&(u, v)| Edge { u, v, w: 1.0 }).collect();
        Self::new(n, k, a, b, c_pot, edges)
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let bad = |m: String| Err(InstanceError::Invalid(m));
        if self.k < 2 {
            return bad(format!("k must be ≥ 2, got {}", self.k));
        }
        if !(self.a >= 0.0 && self.a.is_finite()) || !(self.b >= 0.0 && self.b.is_finite()) {
            return bad("a and b must be finite and ≥ 0".into());
        }
        if !self.c_pot.is_finite() {
            return bad("c_pot must be finite".into());
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.u == e.v {
                return Err(InstanceError::edge(i, format!("self-loop at vertex {}", e.u)));
            }
            if e.u >= self.n || e.v >= self.n {
                return Err(InstanceError::edge(i, format!("vertex out of range for n = {}", self.n)));
            }
            if !e.w.is_finite() {
                return Err(InstanceError::edge(i, "weight must be finite".into()));
            }
        }
        Ok(())
    }

    /// Parses `{"k", "a", "b", "c_pot"?, "n"?, "edges": [[u, v, w?], ...]}`.
    /// `n` defaults to one more than the largest vertex id.
    /// Edge diagnostics carry the line of the offending edge.
    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        Self::parse_raw(text).map_err(|e| match e {
            InstanceError::Edge { index, msg, .. } => InstanceError::Edge {
                index,
                line: edge_lines(text).get(index).copied(),
                msg,
            },
            other => other,
        })
    }

    fn parse_raw(text: &str) -> Result<Self, InstanceError> {
        let raw: RawInstance = serde_json::from_str(text)?;
        let mut edges = Vec::with_capacity(raw.edges.len());
        for (i, e) in raw.edges.iter().enumerate() {
            if e.len() != 2 && e.len() != 3 {
                return Err(InstanceError::edge(i, "expected [u, v] or [u, v, w]".into()));
            }
            let id = |x: f64| -> Result<usize, InstanceError> {
                if x >= 0.0 && x.fract() == 0.0 && x < 1e9 {
                    Ok(x as usize)
                } else {
                    Err(InstanceError::edge(i, format!("vertex id {x} is not a nonnegative integer")))
                }
            };
            edges.push(Edge {
                u: id(e[0])?,
                v: id(e[1])?,
                w: e.get(2).copied().unwrap_or(1.0),
            });
        }
        let implied = edges.iter().map(|e| e.u.max(e.v) + 1).max().unwrap_or(1);
        let n = raw.n.unwrap_or(implied);
        Self::new(n, raw.k, raw.a, raw.b, raw.c_pot.unwrap_or(DEFAULT_C_POT), edges)
    }

    pub fn to_json(&self) -> String {
        let edges: Vec<String> = self.edges.iter().map(|e| format!("[{}, {}, {}]", e.u, e.v, e.w)).collect();
        format!(
            "{{\"n\": {}, \"k\": {}, \"a\": {}, \"b\": {}, \"c_pot\": {}, \"edges\": [{}]}}",
            self.n,
            self.k,
            self.a,
            self.b,
            self.c_pot,
            edges.join(", ")
        )
    }

    pub fn has_negative_weights(&self) -> bool {
        self.edges.iter().any(|e| e.w < 0.0)
    }

    /// Applies the vertex relabeling `v ↦ perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                u: perm[e.u],
                v: perm[e.v],
                w: e.w,
            })
            .collect();
        Self {
            edges,
            ..self.clone()
        }
    }
}

/// Index helpers for the full moment matrix.
#[derive(Clone, Copy, Debug)]
pub struct FullIndex {
    pub n: usize,
    pub k: usize,
}

impl FullIndex {
    pub fn dim(&self) -> usize {
        1 + 2 * self.n * self.k
    }
    pub fn x(&self, v: usize, i: usize) -> usize {
        1 + 2 * self.k * v + i
    }
    pub fn q(&self, v: usize, i: usize) -> usize {
        1 + 2 * self.k * v + self.k + i
    }
}

pub fn rx(v: usize) -> usize {
    2 * v
}

pub fn rq(v: usize) -> usize {
    2 * v + 1
}

/// Full SDP over the `(1 + 2nk)`-dimensional Hermitian moment matrix.
pub fn build_full(inst: &RotorInstance) -> Result<SdpProblem, InstanceError> {
    inst.validate()?;
    let (n, k) = (inst.n, inst.k);
    let ix = FullIndex { n, k };
    let dim = ix.dim();
    let mut p = SdpProblem::new(dim);

    p.fix_entry(0, 0, Complex64::new(1.0, 0.0));
    for v in 0..n {
        for i in 0..k {
            // Hermitian operators have real expectations.
            p.fix_imag(0, ix.x(v, i), 0.0);
            p.fix_imag(0, ix.q(v, i), 0.0);
        }
    }
    for v in 0..n {
        for w in 0..n {
            if v >= w {
                continue;
            }
            // Operators on different sites commute.
            for i in 0..k {
                for j in 0..k {
                    for (a, b) in [
                        (ix.x(v, i), ix.x(w, j)),
                        (ix.x(v, i), ix.q(w, j)),
                        (ix.q(v, i), ix.x(w, j)),
                        (ix.q(v, i), ix.q(w, j)),
                    ] {
                        p.fix_imag(a, b, 0.0);
                    }
                }
            }
        }
    }
    for v in 0..n {
        for i in 0..k {
            for j in 0..k {
                if i < j {
                    p.fix_imag(ix.x(v, i), ix.x(v, j), 0.0);
                }
                // [q_j, x_i] = i(δ_ij − x_i x_j)
                let mut a = Hermitian::new(dim);
                a.add_im_functional(ix.x(v, i), ix.q(v, j), 1.0);
                a.add_re_functional(ix.x(v, i), ix.x(v, j), -0.5);
                p.add_constraint(a, -0.5 * delta(i, j));
                // [q_i, q_j] = i(x_i q_j − x_j q_i)
                if i < j {
                    let mut a = Hermitian::new(dim);
                    a.add_im_functional(ix.q(v, i), ix.q(v, j), 1.0);
                    a.add_re_functional(ix.x(v, i), ix.q(v, j), -0.5);
                    a.add_re_functional(ix.x(v, j), ix.q(v, i), 0.5);
                    p.add_constraint(a, 0.0);
                }
            }
        }
        let mut norm = Hermitian::new(dim);
        let mut xq = Hermitian::new(dim);
        for i in 0..k {
            norm.add_re_functional(ix.x(v, i), ix.x(v, i), 1.0);
            xq.add_re_functional(ix.x(v, i), ix.q(v, i), 1.0);
        }
        p.add_constraint(norm, 1.0);
        // Σ_i Ẽ[x_i q_i] = −i(k−1)/2; the imaginary part already follows from
        // the commutator constraints.
        p.add_constraint(xq, 0.0);
    }

    for v in 0..n {
        for i in 0..k {
            p.objective.add_re_functional(ix.q(v, i), ix.q(v, i), inst.a);
        }
    }
    for e in &inst.edges {
        for i in 0..k {
            p.objective.add_re_functional(ix.x(e.u, i), ix.x(e.v, i), inst.b * e.w);
        }
    }
    p.offset = objective_offset(inst);
    Ok(p)
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

fn objective_offset(inst: &RotorInstance) -> f64 {
    let km1 = inst.k as f64 - 1.0;
    -inst.a * inst.n as f64 * km1 * km1 / 4.0 + inst.b * inst.edges.iter().map(|e| e.w * inst.c_pot).sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedOptions {
    /// Sets the real parts of cross-site x–q moments to zero. Complex
    /// conjugation of states maps feasible points to feasible points with
    /// these entries negated and the objective unchanged.
    pub time_reversal: bool,
}

impl Default for ReducedOptions {
    fn default() -> Self {
        Self { time_reversal: true }
    }
}

/// Reduced SDP over the `2n × 2n` Hermitian matrix `M′`.
pub fn build_reduced(inst: &RotorInstance, opts: &ReducedOptions) -> Result<SdpProblem, InstanceError> {
    inst.validate()?;
    let (n, k) = (inst.n, inst.k as f64);
    let mut p = SdpProblem::new(2 * n);
    for v in 0..n {
        p.fix_entry(rx(v), rx(v), Complex64::new(1.0 / k, 0.0));
        // K_v = 0 is forced by Re Σ_i Ẽ[x_i q_i] = 0.
        p.fix_entry(rx(v), rq(v), Complex64::new(0.0, -(k - 1.0) / (2.0 * k)));
    }
    for v in 0..n {
        for w in v + 1..n {
            for a in [rx(v), rq(v)] {
                for b in [rx(w), rq(w)] {
                    p.fix_imag(a, b, 0.0);
                }
            }
            if opts.time_reversal {
                let mut a = Hermitian::new(2 * n);
                a.add_re_functional(rx(v), rq(w), 1.0);
                p.add_constraint(a, 0.0);
                let mut a = Hermitian::new(2 * n);
                a.add_re_functional(rq(v), rx(w), 1.0);
                p.add_constraint(a, 0.0);
            }
        }
    }
    for v in 0..n {
        p.objective.add_re_functional(rq(v), rq(v), inst.a * k);
    }
    for e in &inst.edges {
        p.objective.add_re_functional(rx(e.u), rx(e.v), inst.b * e.w * k);
    }
    p.offset = objective_offset(inst);
    Ok(p)
}

/// Full moment matrix over `{1} ∪ {x_{v,i}} ∪ {q_{v,i}}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FullMoment {
    pub n: usize,
    pub k: usize,
    pub matrix: DMatrix<Complex64>,
}

/// Symmetry-reduced moment data.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReducedMoment {
    pub k: usize,
    /// `Re M′[x_v, q_v]`
    pub kv: Vec<f64>,
    /// `M′[q_v, q_v]`
    pub lv: Vec<f64>,
    /// Real cross blocks `[[xx, xq], [qx, qq]]` for `v < w`, row-major in
    /// `(v, w)` order.
    pub blocks: Vec<((usize, usize), [[f64; 2]; 2])>,
}

#[derive(Debug, Error)]
pub enum MomentError {
    #[error("moment matrix is not PSD (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl ReducedMoment {
    pub fn n(&self) -> usize {
        self.kv.len()
    }

    /// Uncorrelated point with `K_v = 0`, `L_v = ((k−1)²/(4k)) + extra`.
    pub fn uniform(n: usize, k: usize, extra: f64) -> Self {
        let kf = k as f64;
        let mut blocks = Vec::new();
        for v in 0..n {
            for w in v + 1..n {
                blocks.push(((v, w), [[0.0; 2]; 2]));
            }
        }
        Self {
            k,
            kv: vec![0.0; n],
            lv: vec![(kf - 1.0).powi(2) / (4.0 * kf) + extra; n],
            blocks,
        }
    }

    pub fn block(&self, v: usize, w: usize) -> [[f64; 2]; 2] {
        let (lo, hi, flip) = if v < w { (v, w, false) } else { (w, v, true) };
        let b = self
            .blocks
            .iter()
            .find(|(key, _)| *key == (lo, hi))
            .map(|(_, b)| *b)
            .unwrap_or([[0.0; 2]; 2]);
        if flip {
            [[b[0][0], b[1][0]], [b[0][1], b[1][1]]]
        } else {
            b
        }
    }

    /// Assembles `M′`.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        let n = self.n();
        let k = self.k as f64;
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        let skew = (k - 1.0) / (2.0 * k);
        for v in 0..n {
            m[(rx(v), rx(v))] = Complex64::new(1.0 / k, 0.0);
            m[(rx(v), rq(v))] = Complex64::new(self.kv[v], -skew);
            m[(rq(v), rx(v))] = Complex64::new(self.kv[v], skew);
            m[(rq(v), rq(v))] = Complex64::new(self.lv[v], 0.0);
        }
        for &((v, w), b) in &self.blocks {
            for (ai, a) in [rx(v), rq(v)].into_iter().enumerate() {
                for (bi, bb) in [rx(w), rq(w)].into_iter().enumerate() {
                    m[(a, bb)] = Complex64::new(b[ai][bi], 0.0);
                    m[(bb, a)] = Complex64::new(b[ai][bi], 0.0);
                }
            }
        }
        m
    }

    /// Reads the reduced parameters from `M′` (real parts of the free entries).
    pub fn from_matrix(k: usize, m: &DMatrix<Complex64>) -> Result<Self, MomentError> {
        if m.nrows() % 2 != 0 || m.nrows() != m.ncols() {
            return Err(MomentError::Dimension(format!("M′ must be 2n×2n, got {}×{}", m.nrows(), m.ncols())));
        }
        let n = m.nrows() / 2;
        let mut blocks = Vec::new();
        for v in 0..n {
            for w in v + 1..n {
                let e = |a: usize, b: usize| 0.5 * (m[(a, b)].re + m[(b, a)].re);
                blocks.push((
                    (v, w),
                    [[e(rx(v), rx(w)), e(rx(v), rq(w))], [e(rq(v), rx(w)), e(rq(v), rq(w))]],
                ));
            }
        }
        Ok(Self {
            k,
            kv: (0..n).map(|v| 0.5 * (m[(rx(v), rq(v))].re + m[(rq(v), rx(v))].re)).collect(),
            lv: (0..n).map(|v| m[(rq(v), rq(v))].re).collect(),
            blocks,
        })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eig(&self.matrix())
    }

    /// `(1 − θ)·self + θ·other`; the fixed entries of both agree.
    pub fn mix(&self, other: &Self, theta: f64) -> Self {
        let lerp = |a: f64, b: f64| (1.0 - theta) * a + theta * b;
        Self {
            k: self.k,
            kv: self.kv.iter().zip(&other.kv).map(|(&a, &b)| lerp(a, b)).collect(),
            lv: self.lv.iter().zip(&other.lv).map(|(&a, &b)| lerp(a, b)).collect(),
            blocks: self
                .blocks
                .iter()
                .map(|&((v, w), b)| {
                    let o = other.block(v, w);
                    ((v, w), [[lerp(b[0][0], o[0][0]), lerp(b[0][1], o[0][1])], [lerp(b[1][0], o[1][0]), lerp(b[1][1], o[1][1])]])
                })
                .collect(),
        }
    }

    /// Smallest mix toward a strictly feasible uncorrelated point that makes
    /// `M′` PSD. Returns the repaired moment and the weight used.
    pub fn restore_psd(&self) -> (Self, f64) {
        let lambda = self.min_eigenvalue();
        if lambda >= 0.0 {
            return (self.clone(), 0.0);
        }
        let extra = 1.0 + self.lv.iter().fold(0.0_f64, |m, &l| m.max(l.abs()));
        let anchor = Self::uniform(self.n(), self.k, extra);
        let lu = anchor.min_eigenvalue();
        let mut theta = -lambda / (lu - lambda);
        loop {
            let out = self.mix(&anchor, theta);
            if out.min_eigenvalue() >= 0.0 || theta >= 1.0 {
                return (out, theta);
            }
            theta = (theta * 1.5).min(1.0);
        }
    }

    /// Objective `a Σ_v (−(k−1)²/4 + k L_v) + b Σ w (c_pot + k B_vw[x,x])`.
    pub fn objective(&self, inst: &RotorInstance) -> f64 {
        self.kinetic_terms(inst).iter().sum::<f64>() + self.potential_terms(inst).iter().sum::<f64>()
    }

    /// Per-vertex kinetic contributions `a(−(k−1)²/4 + k L_v)`.
    pub fn kinetic_terms(&self, inst: &RotorInstance) -> Vec<f64> {
        let k = self.k as f64;
        self.lv.iter().map(|l| inst.a * (-(k - 1.0).powi(2) / 4.0 + k * l)).collect()
    }

    /// Per-edge potential contributions `b w (c_pot + k B_vw[x,x])`.
    pub fn potential_terms(&self, inst: &RotorInstance) -> Vec<f64> {
        let k = self.k as f64;
        inst.edges
            .iter()
            .map(|e| inst.b * e.w * (inst.c_pot + k * self.block(e.u, e.v)[0][0]))
            .collect()
    }
}

impl FullMoment {
    pub fn index(&self) -> FullIndex {
        FullIndex { n: self.n, k: self.k }
    }

    /// `⟨C, M⟩ + offset` for the full objective.
    pub fn objective(&self, inst: &RotorInstance) -> f64 {
        let ix = self.index();
        let m = &self.matrix;
        let mut kin = 0.0;
        for v in 0..self.n {
            for i in 0..self.k {
                kin += m[(ix.q(v, i), ix.q(v, i))].re;
            }
        }
        let mut pot = 0.0;
        for e in &inst.edges {
            let s: f64 = (0..self.k).map(|i| m[(ix.x(e.u, i), ix.x(e.v, i))].re).sum();
            pot += e.w * s;
        }
        inst.a * kin + inst.b * pot + objective_offset(inst)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eig(&self.matrix)
    }
}

/// `1 ⊕ M′ ⊗ I_k` in the full index order.
pub fn lift(rm: &ReducedMoment, psd_tol: f64) -> Result<FullMoment, MomentError> {
    let min = rm.min_eigenvalue();
    if min < -psd_tol {
        return Err(MomentError::NotPsd(min));
    }
    let (n, k) = (rm.n(), rm.k);
    let ix = FullIndex { n, k };
    let mp = rm.matrix();
    let mut m = DMatrix::zeros(ix.dim(), ix.dim());
    m[(0, 0)] = Complex64::new(1.0, 0.0);
    let full = |v: usize, a: usize, i: usize| if a == 0 { ix.x(v, i) } else { ix.q(v, i) };
    for v in 0..n {
        for a in 0..2 {
            for w in 0..n {
                for b in 0..2 {
                    let val = mp[(2 * v + a, 2 * w + b)];
                    for i in 0..k {
                        m[(full(v, a, i), full(w, b, i))] = val;
                    }
                }
            }
        }
    }
    Ok(FullMoment { n, k, matrix: m })
}

/// Group average over `O(k)`: every `k × k` sub-block becomes
/// `(trace / k)·I` and the degree-1 row vanishes.
pub fn symmetrize(fm: &FullMoment) -> ReducedMoment {
    let (n, k) = (fm.n, fm.k);
    let ix = fm.index();
    let full = |v: usize, a: usize, i: usize| if a == 0 { ix.x(v, i) } else { ix.q(v, i) };
    let mut mp = DMatrix::zeros(2 * n, 2 * n);
    for v in 0..n {
        for a in 0..2 {
            for w in 0..n {
                for b in 0..2 {
                    let tr: Complex64 = (0..k).map(|i| fm.matrix[(full(v, a, i), full(w, b, i))]).sum();
                    mp[(2 * v + a, 2 * w + b)] = tr / k as f64;
                }
            }
        }
    }
    ReducedMoment::from_matrix(k, &mp).expect("square even matrix")
}

#[derive(Clone, Debug)]
pub struct FullSolution {
    pub moment: FullMoment,
    pub value: f64,
    pub sdp: SdpSolution,
}

#[derive(Clone, Debug)]
pub struct ReducedSolution {
    pub moment: ReducedMoment,
    pub value: f64,
    pub sdp: SdpSolution,
    /// Weight of the PSD repair applied to the solver's moment.
    pub repair: f64,
}

#[derive(Debug, Error)]
pub enum RelaxError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

pub fn solve_full(inst: &RotorInstance, opts: &SdpOptions) -> Result<FullSolution, RelaxError> {
    let p = build_full(inst)?;
    let sdp = sdpcore::solve(&p, opts)?;
    Ok(FullSolution {
        moment: FullMoment {
            n: inst.n,
            k: inst.k,
            matrix: sdp.x.clone(),
        },
        value: sdp.primal_value,
        sdp,
    })
}

pub fn solve_reduced(inst: &RotorInstance, ropts: &ReducedOptions, opts: &SdpOptions) -> Result<ReducedSolution, RelaxError> {
    let p = build_reduced(inst, ropts)?;
    let sdp = sdpcore::solve(&p, opts)?;
    // the solver meets the fixed entries only to tolerance; rebuilding them
    // exactly can leave a tiny negative eigenvalue
    let (moment, repair) = ReducedMoment::from_matrix(inst.k, &sdp.x).expect("solver returns 2n×2n").restore_psd();
    Ok(ReducedSolution {
        moment,
        value: sdp.primal_value,
        sdp,
        repair,
    })
}

impl fmt::Display for ReducedMoment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "k {}", self.k)?;
        for v in 0..self.n() {
            writeln!(f, "vertex {v} K {:.16e} L {:.16e}", self.kv[v], self.lv[v])?;
        }
        for ((v, w), b) in &self.blocks {
            writeln!(
                f,
                "block {v} {w} {:.16e} {:.16e} {:.16e} {:.16e}",
                b[0][0], b[0][1], b[1][0], b[1][1]
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn single(k: usize, a: f64, b: f64) -> RotorInstance {
        RotorInstance::unweighted(1, k, a, b, 2.0, &[]).unwrap()
    }

    fn edge(k: usize, a: f64, b: f64) -> RotorInstance {
        RotorInstance::unweighted(2, k, a, b, 2.0, &[(0, 1)]).unwrap()
    }

    #[test]
    fn instance_parsing() {
        let inst = RotorInstance::from_json(r#"{"k": 3, "a": 1, "b": 0.5, "edges": [[0, 1], [1, 2, 2.5]]}"#).unwrap();
        assert_eq!(inst.n, 3);
        assert_eq!(inst.c_pot, 2.0);
        assert_eq!(inst.edges[1].w, 2.5);
        let lone = RotorInstance::from_json(r#"{"k": 2, "a": 1, "b": 0, "n": 1, "edges": []}"#).unwrap();
        assert_eq!(lone.n, 1);
        assert!(RotorInstance::from_json(r#"{"k": 2, "a": 1, "b": 0, "edges": [[0, 0]]}"#).is_err());
        assert!(RotorInstance::from_json(r#"{"k": 1, "a": 1, "b": 0}"#).is_err());
        assert!(RotorInstance::from_json(r#"{"k": 2, "a": -1, "b": 0}"#).is_err());
        let err = RotorInstance::from_json("{\n\"k\": 2,\n\"a\": ,\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = RotorInstance::from_json("{\"k\": 2, \"a\": 1, \"b\": 1,\n\"edges\": [\n  [0, 1],\n  [2, 2]\n]}").unwrap_err();
        assert!(err.to_string().contains("line 4: edge 1: self-loop"), "{err}");
        let round = RotorInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(round, inst);
    }

    #[test]
    fn lone_rotor_full_value_is_zero() {
        for k in 2..=4 {
            let s = solve_full(&single(k, 1.0, 0.0), &SdpOptions::default()).unwrap();
            assert!(s.value.abs() < 1e-5, "k = {k}: {}", s.value);
        }
    }

    #[test]
    fn lone_rotor_reduced_optimum() {
        for k in 2..=5 {
            let s = solve_reduced(&single(k, 1.0, 0.0), &ReducedOptions::default(), &SdpOptions::default()).unwrap();
            let kf = k as f64;
            assert!(s.value.abs() < 1e-5);
            assert!((s.moment.lv[0] - (kf - 1.0).powi(2) / (4.0 * kf)).abs() < 1e-5);
            assert!(s.moment.kv[0].abs() < 1e-7);
        }
    }

    #[test]
    fn classical_edge_value_is_an_unattained_infimum() {
        // With a = 0 the x-block can only approach rank one as L_v → ∞, so
        // the solver drifts toward 1 from above without converging.
        let opts = SdpOptions {
            max_iter: 20_000,
            ..Default::default()
        };
        let value = match solve_full(&edge(2, 0.0, 1.0), &opts) {
            Ok(s) => s.value,
            Err(RelaxError::Sdp(SdpError::NotConverged { best })) => best.primal_value,
            Err(e) => panic!("{e}"),
        };
        assert!(value > 1.0 - 1e-6 && value < 1.01, "{value}");
        // Lower bound: any PSD x-block with diagonal 1/2 has Σ_i M[x_1i, x_2i] ≥ −1.
        let mut rm = ReducedMoment::uniform(2, 2, 0.0);
        for l in [1e1, 1e3, 1e5] {
            rm.lv = vec![l; 2];
            let t = -0.5 + 0.25 / l;
            rm.blocks[0].1 = [[t, 0.0], [0.0, 0.0]];
            assert!(rm.min_eigenvalue() > -1e-12);
            let v = rm.objective(&edge(2, 0.0, 1.0));
            assert!(v >= 1.0 && v < 1.0 + 1.0 / l);
        }
    }

    #[test]
    fn full_and_reduced_agree_on_small_instances() {
        for (n, k) in [(2usize, 2usize), (2, 3)] {
            let edges: Vec<(usize, usize)> = (0..n - 1).map(|v| (v, v + 1)).collect();
            let inst = RotorInstance::unweighted(n, k, 1.0, 1.0, 2.0, &edges).unwrap();
            let f = solve_full(&inst, &SdpOptions::default()).unwrap();
            let r = solve_reduced(&inst, &ReducedOptions::default(), &SdpOptions::default()).unwrap();
            assert!((f.value - r.value).abs() < 1e-5, "(n,k)=({n},{k}): {} vs {}", f.value, r.value);
            let r2 = solve_reduced(&inst, &ReducedOptions { time_reversal: false }, &SdpOptions::default()).unwrap();
            assert!((r2.value - r.value).abs() < 1e-5);
        }
    }

    #[test]
    fn kinetic_part_is_nonnegative() {
        let inst = RotorInstance::unweighted(3, 3, 0.7, 1.3, 2.0, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let s = solve_reduced(&inst, &ReducedOptions::default(), &SdpOptions::default()).unwrap();
        for t in s.moment.kinetic_terms(&inst) {
            assert!(t >= -1e-6);
        }
    }

    #[test]
    fn uniform_point_is_feasible() {
        for (n, k) in [(1, 2), (3, 3), (4, 7)] {
            let rm = ReducedMoment::uniform(n, k, 1.0);
            assert!(rm.min_eigenvalue() > 0.0);
            let inst = RotorInstance::unweighted(n, k, 1.0, 1.0, 2.0, &[]).unwrap();
            let p = build_reduced(&inst, &ReducedOptions::default()).unwrap();
            assert!(p.constraint_violation(&rm.matrix()) < 1e-14);
            let fm = lift(&rm, 1e-12).unwrap();
            let pf = build_full(&inst).unwrap();
            assert!(pf.constraint_violation(&fm.matrix) < 1e-14);
        }
    }

    #[test]
    fn lift_rejects_non_psd() {
        let mut rm = ReducedMoment::uniform(1, 3, 0.0);
        rm.lv[0] = 0.0;
        assert!(matches!(lift(&rm, 1e-12), Err(MomentError::NotPsd(_))));
    }

    fn random_feasible(n: usize, k: usize, seed: u64) -> ReducedMoment {
        // Mix the uniform point with scaled random PSD cross structure.
        let mut rng = crate::mc::chunk_rng(seed, 21);
        let mut rm = ReducedMoment::uniform(n, k, 0.5 + rng.random::<f64>());
        let kf = k as f64;
        for ((_, _), b) in rm.blocks.iter_mut() {
            for row in b.iter_mut() {
                for e in row.iter_mut() {
                    *e = (rng.random::<f64>() - 0.5) * 0.2 / (kf * n as f64);
                }
            }
        }
        rm
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn lift_and_symmetrize_preserve_objective(seed in 0u64..100_000, n in 1usize..4, k in 2usize..5) {
            let rm = random_feasible(n, k, seed);
            prop_assume!(rm.min_eigenvalue() > 0.0);
            let edges: Vec<(usize, usize)> = (0..n).flat_map(|v| (v + 1..n).map(move |w| (v, w))).collect();
            let inst = RotorInstance::unweighted(n, k, 0.8, 1.1, 2.0, &edges).unwrap();
            let fm = lift(&rm, 1e-12).unwrap();
            prop_assert!((fm.objective(&inst) - rm.objective(&inst)).abs() < 1e-12);
            // spec(1 ⊕ M′ ⊗ I_k) = {1} ∪ spec(M′)
            prop_assert!((fm.min_eigenvalue() - rm.min_eigenvalue().min(1.0)).abs() < 1e-12);
            let back = symmetrize(&fm);
            prop_assert!((back.matrix() - rm.matrix()).camax() < 1e-14);
            // The SDP objective matrix agrees with the direct evaluation.
            let pf = build_full(&inst).unwrap();
            prop_assert!((pf.objective_value(&fm.matrix) - fm.objective(&inst)).abs() < 1e-12);
            let pr = build_reduced(&inst, &ReducedOptions::default()).unwrap();
            prop_assert!((pr.objective_value(&rm.matrix()) - rm.objective(&inst)).abs() < 1e-12);
        }

        #[test]
        fn objective_is_relabeling_invariant(seed in 0u64..100_000) {
            let mut rng = crate::mc::chunk_rng(seed, 22);
            let n = 4;
            let edges: Vec<Edge> = [(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]
                .iter()
                .map(|&(u, v)| Edge { u, v, w: 0.5 + rng.random::<f64>() })
                .collect();
            let inst = RotorInstance::new(n, 2, 1.0, 1.0, 2.0, edges).unwrap();
            let perm = [2usize, 0, 3, 1];
            let rm = random_feasible(n, 2, seed);
            let mut permuted = ReducedMoment::uniform(n, 2, 0.0);
            for v in 0..n {
                permuted.kv[perm[v]] = rm.kv[v];
                permuted.lv[perm[v]] = rm.lv[v];
            }
            for v in 0..n {
                for w in v + 1..n {
                    let b = rm.block(v, w);
                    let (pv, pw) = (perm[v], perm[w]);
                    let (lo, hi) = (pv.min(pw), pv.max(pw));
                    let stored = if pv < pw { b } else { [[b[0][0], b[1][0]], [b[0][1], b[1][1]]] };
                    for entry in permuted.blocks.iter_mut() {
                        if entry.0 == (lo, hi) {
                            entry.1 = stored;
                        }
                    }
                }
            }
            let relabeled = inst.relabel(&perm);
            prop_assert!((rm.objective(&inst) - permuted.objective(&relabeled)).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetrize_of_random_feasible_full_point() {
        // A generic feasible full point: the full SDP optimum of a small
        // asymmetric instance, perturbed toward the uniform point.
        let inst = RotorInstance::new(
            2,
            2,
            1.0,
            1.0,
            2.0,
            vec![Edge { u: 0, v: 1, w: 0.7 }],
        )
        .unwrap();
        let f = solve_full(&inst, &SdpOptions::default()).unwrap();
        let rm = symmetrize(&f.moment);
        assert!((rm.objective(&inst) - f.moment.objective(&inst)).abs() < 1e-12);
        for v in 0..inst.n {
            assert!((rm.matrix()[(rx(v), rx(v))].re - 0.5).abs() < 1e-6);
        }
        assert!(rm.min_eigenvalue() > -1e-7);
    }

    #[test]
    fn repaired_moment_is_psd_and_near_optimal() {
        let inst = RotorInstance::unweighted(3, 3, 1.0, 1.0, 2.0, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let sol = solve_reduced(&inst, &ReducedOptions::default(), &SdpOptions::default()).unwrap();
        assert!(sol.moment.min_eigenvalue() >= 0.0);
        assert!(sol.repair < 1e-5);
        assert!((sol.moment.objective(&inst) - sol.value).abs() < 1e-5 * (1.0 + sol.value.abs()));
        let mut bad = ReducedMoment::uniform(2, 3, 0.0);
        bad.lv[0] -= 0.01;
        let (fixed, theta) = bad.restore_psd();
        assert!(theta > 0.0 && theta < 1.0);
        assert!(fixed.min_eigenvalue() >= 0.0);
    }
}
