//! Small dense SDP solver for Hermitian problems
//!
//! ```text
//! minimize   ⟨C, X⟩ + offset
//! subject to ⟨A_i, X⟩ = b_i,  X ⪰ 0
//! ```
//!
//! with `⟨A, X⟩ = Re tr(A† X)`. Complex data are passed through the real
//! embedding `H ↦ [[Re H, −Im H], [Im H, Re H]]`; problems with real data are
//! solved directly. The solver is the alternating direction augmented
//! Lagrangian method on the dual (Wen, Goldfarb and Yin 2010).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_GAP_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 200_000;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("problem is infeasible: {reason}")]
    Infeasible { reason: String, certificate: DVector<f64> },
    #[error("solver did not converge after {} iterations (primal {:.3e}, dual {:.3e}, gap {:.3e})",
        .best.iterations, .best.residuals.primal_infeasibility, .best.residuals.dual_infeasibility, .best.residuals.duality_gap)]
    NotConverged { best: Box<SdpSolution> },
    #[error("matrix is indefinite beyond tolerance (min eigenvalue {0:e})")]
    Indefinite(f64),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Hermitian matrix stored by its upper triangle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Hermitian {
    dim: usize,
    entries: BTreeMap<(usize, usize), Complex64>,
}

impl Hermitian {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds `v` at `(i, j)` and `conj(v)` at `(j, i)`. On the diagonal only
    /// the real part is kept.
    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        assert!(i < self.dim && j < self.dim, "index out of range");
        let (key, v) = match i.cmp(&j) {
            std::cmp::Ordering::Less => ((i, j), v),
            std::cmp::Ordering::Greater => ((j, i), v.conj()),
            std::cmp::Ordering::Equal => ((i, i), Complex64::new(v.re, 0.0)),
        };
        let slot = self.entries.entry(key).or_insert(Complex64::new(0.0, 0.0));
        *slot += v;
        if *slot == Complex64::new(0.0, 0.0) {
            self.entries.remove(&key);
        }
    }

    pub fn add_real(&mut self, i: usize, j: usize, v: f64) {
        self.add(i, j, Complex64::new(v, 0.0));
    }

    /// Adds `c·Re X[i,j]` to the linear functional `X ↦ ⟨self, X⟩`.
    pub fn add_re_functional(&mut self, i: usize, j: usize, c: f64) {
        if i == j {
            self.add_real(i, i, c);
        } else {
            self.add_real(i, j, 0.5 * c);
        }
    }

    /// Adds `c·Im X[i,j]` (`i ≠ j`) to the linear functional.
    pub fn add_im_functional(&mut self, i: usize, j: usize, c: f64) {
        assert_ne!(i, j, "diagonal entries are real");
        self.add(i, j, Complex64::new(0.0, 0.5 * c));
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn is_real(&self) -> bool {
        self.entries.values().all(|v| v.im == 0.0)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.entries() {
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
        m
    }

    pub fn from_dense(m: &DMatrix<Complex64>, tol: f64) -> Result<Self, SdpError> {
        if m.nrows() != m.ncols() {
            return Err(SdpError::DimensionMismatch("matrix is not square".into()));
        }
        let dev = hermitian_deviation(m);
        if dev > tol {
            return Err(SdpError::NotHermitian(dev));
        }
        let mut h = Self::new(m.nrows());
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                if v != Complex64::new(0.0, 0.0) {
                    h.add(i, j, v);
                }
            }
        }
        Ok(h)
    }

    /// `Re tr(A† X)`.
    pub fn inner(&self, x: &DMatrix<Complex64>) -> f64 {
        self.entries()
            .map(|(i, j, a)| {
                if i == j {
                    a.re * x[(i, i)].re
                } else {
                    (a.conj() * x[(i, j)]).re + (a * x[(j, i)]).re
                }
            })
            .sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries()
            .map(|(i, j, a)| if i == j { a.norm_sqr() } else { 2.0 * a.norm_sqr() })
            .sum()
    }
}

fn hermitian_deviation(m: &DMatrix<Complex64>) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub a: Hermitian,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    pub dim: usize,
    pub objective: Hermitian,
    pub offset: f64,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            objective: Hermitian::new(dim),
            offset: 0.0,
            constraints: Vec::new(),
        }
    }

    pub fn add_constraint(&mut self, a: Hermitian, b: f64) {
        self.constraints.push(Constraint { a, b });
    }

    /// Constrains `X[i,j]` (and its mirror) to equal `v`: one constraint for
    /// the real part, and one for the imaginary part off the diagonal.
    pub fn fix_entry(&mut self, i: usize, j: usize, v: Complex64) {
        let mut re = Hermitian::new(self.dim);
        if i == j {
            re.add_real(i, i, 1.0);
            self.add_constraint(re, v.re);
            return;
        }
        re.add_real(i, j, 0.5);
        self.add_constraint(re, v.re);
        self.fix_imag(i, j, v.im);
    }

    /// Constrains `Im X[i,j] = v` for `i ≠ j`.
    pub fn fix_imag(&mut self, i: usize, j: usize, v: f64) {
        assert_ne!(i, j, "diagonal entries are real");
        let mut im = Hermitian::new(self.dim);
        // Re(conj(a)·X_ij) + Re(a·X_ji) = Im X_ij for a = i/2
        im.add(i, j, Complex64::new(0.0, 0.5));
        self.add_constraint(im, v);
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if self.objective.dim() != self.dim {
            return Err(SdpError::DimensionMismatch(format!(
                "objective is {}×{}, problem is {}",
                self.objective.dim(),
                self.objective.dim(),
                self.dim
            )));
        }
        for (n, c) in self.constraints.iter().enumerate() {
            if c.a.dim() != self.dim {
                return Err(SdpError::DimensionMismatch(format!(
                    "constraint {n} is {}×{}, problem is {}",
                    c.a.dim(),
                    c.a.dim(),
                    self.dim
                )));
            }
            if !c.b.is_finite() {
                return Err(SdpError::DimensionMismatch(format!("constraint {n} has non-finite rhs")));
            }
        }
        Ok(())
    }

    pub fn is_real(&self) -> bool {
        self.objective.is_real() && self.constraints.iter().all(|c| c.a.is_real())
    }

    pub fn objective_value(&self, x: &DMatrix<Complex64>) -> f64 {
        self.objective.inner(x) + self.offset
    }

    /// `max_i |⟨A_i, X⟩ − b_i|`.
    pub fn constraint_violation(&self, x: &DMatrix<Complex64>) -> f64 {
        self.constraints
            .iter()
            .map(|c| (c.a.inner(x) - c.b).abs())
            .fold(0.0, f64::max)
    }

    /// Dense text dump: header, then `objective`, then one block per
    /// constraint. Rows are written row-major as `re im` pairs with 17
    /// significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "sdp-problem").unwrap();
        writeln!(s, "dim {}", self.dim).unwrap();
        writeln!(s, "constraints {}", self.constraints.len()).unwrap();
        writeln!(s, "offset {:.16e}", self.offset).unwrap();
        writeln!(s, "objective").unwrap();
        write_complex_matrix(&mut s, &self.objective.to_dense());
        for (n, c) in self.constraints.iter().enumerate() {
            writeln!(s, "constraint {n} rhs {:.16e}", c.b).unwrap();
            write_complex_matrix(&mut s, &c.a.to_dense());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, SdpError> {
        let mut lines = TextLines::new(text);
        lines.expect_keyword("sdp-problem")?;
        let dim = lines.key_usize("dim")?;
        let ncons = lines.key_usize("constraints")?;
        let offset = lines.key_f64("offset")?;
        lines.expect_keyword("objective")?;
        let objective = Hermitian::from_dense(&lines.complex_matrix(dim)?, 0.0)
            .map_err(|e| lines.error(&e.to_string()))?;
        let mut p = SdpProblem {
            dim,
            objective,
            offset,
            constraints: Vec::with_capacity(ncons),
        };
        for n in 0..ncons {
            let (line, toks) = lines.next_tokens()?;
            if toks.len() != 4 || toks[0] != "constraint" || toks[2] != "rhs" || toks[1] != n.to_string() {
                return Err(SdpError::Parse {
                    line,
                    msg: format!("expected `constraint {n} rhs <value>`"),
                });
            }
            let b = parse_f64(toks[3], line)?;
            let a = Hermitian::from_dense(&lines.complex_matrix(dim)?, 0.0)
                .map_err(|e| lines.error(&e.to_string()))?;
            p.add_constraint(a, b);
        }
        Ok(p)
    }
}

fn write_complex_matrix(s: &mut String, m: &DMatrix<Complex64>) {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:.16e} {:.16e}", m[(i, j)].re, m[(i, j)].im))
            .collect();
        writeln!(s, "{}", row.join(" ")).unwrap();
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, SdpError> {
    tok.parse::<f64>().map_err(|_| SdpError::Parse {
        line,
        msg: format!("invalid number `{tok}`"),
    })
}

struct TextLines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> TextLines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            iter: text.lines().enumerate(),
            last: 0,
        }
    }

    fn error(&self, msg: &str) -> SdpError {
        SdpError::Parse {
            line: self.last,
            msg: msg.to_string(),
        }
    }

    fn next_tokens(&mut self) -> Result<(usize, Vec<&'a str>), SdpError> {
        for (n, l) in self.iter.by_ref() {
            let toks: Vec<&str> = l.split_whitespace().collect();
            if !toks.is_empty() {
                self.last = n + 1;
                return Ok((n + 1, toks));
            }
        }
        Err(SdpError::Parse {
            line: self.last + 1,
            msg: "unexpected end of input".into(),
        })
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), SdpError> {
        let (line, toks) = self.next_tokens()?;
        if toks != [kw] {
            return Err(SdpError::Parse {
                line,
                msg: format!("expected `{kw}`"),
            });
        }
        Ok(())
    }

    fn key_value(&mut self, key: &str) -> Result<(usize, &'a str), SdpError> {
        let (line, toks) = self.next_tokens()?;
        if toks.len() != 2 || toks[0] != key {
            return Err(SdpError::Parse {
                line,
                msg: format!("expected `{key} <value>`"),
            });
        }
        Ok((line, toks[1]))
    }

    fn key_usize(&mut self, key: &str) -> Result<usize, SdpError> {
        let (line, v) = self.key_value(key)?;
        v.parse().map_err(|_| SdpError::Parse {
            line,
            msg: format!("invalid integer `{v}`"),
        })
    }

    fn key_f64(&mut self, key: &str) -> Result<f64, SdpError> {
        let (line, v) = self.key_value(key)?;
        parse_f64(v, line)
    }

    fn real_row(&mut self, len: usize) -> Result<Vec<f64>, SdpError> {
        let (line, toks) = self.next_tokens()?;
        if toks.len() != len {
            return Err(SdpError::Parse {
                line,
                msg: format!("expected {len} numbers, found {}", toks.len()),
            });
        }
        toks.iter().map(|t| parse_f64(t, line)).collect()
    }

    fn complex_matrix(&mut self, dim: usize) -> Result<DMatrix<Complex64>, SdpError> {
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            let row = self.real_row(2 * dim)?;
            for j in 0..dim {
                m[(i, j)] = Complex64::new(row[2 * j], row[2 * j + 1]);
            }
        }
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Residuals {
    /// `max_i |⟨A_i, X⟩ − b_i|`
    pub constraint_inf_norm: f64,
    pub min_eigenvalue: f64,
    /// `|primal − dual| / (1 + |primal| + |dual|)`
    pub duality_gap: f64,
    /// `‖A(X) − b‖ / (1 + ‖b‖)` on the scaled problem.
    pub primal_infeasibility: f64,
    /// `‖C − A*y − S‖ / (1 + ‖C‖)` on the scaled problem.
    pub dual_infeasibility: f64,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub x: DMatrix<Complex64>,
    pub y: DVector<f64>,
    pub primal_value: f64,
    pub dual_value: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "sdp-solution").unwrap();
        writeln!(s, "dim {}", self.x.nrows()).unwrap();
        writeln!(s, "iterations {}", self.iterations).unwrap();
        writeln!(s, "primal_value {:.16e}", self.primal_value).unwrap();
        writeln!(s, "dual_value {:.16e}", self.dual_value).unwrap();
        writeln!(s, "constraint_inf_norm {:.16e}", self.residuals.constraint_inf_norm).unwrap();
        writeln!(s, "min_eigenvalue {:.16e}", self.residuals.min_eigenvalue).unwrap();
        writeln!(s, "duality_gap {:.16e}", self.residuals.duality_gap).unwrap();
        writeln!(s, "x").unwrap();
        write_complex_matrix(&mut s, &self.x);
        writeln!(s, "y {}", self.y.len()).unwrap();
        for v in self.y.iter() {
            writeln!(s, "{v:.16e}").unwrap();
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdpOptions {
    pub tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            gap_tol: DEFAULT_GAP_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// `[[Re H, −Im H], [Im H, Re H]]`.
pub fn real_embedding(h: &DMatrix<Complex64>) -> Result<DMatrix<f64>, SdpError> {
    if h.nrows() != h.ncols() {
        return Err(SdpError::DimensionMismatch("matrix is not square".into()));
    }
    let scale = h.iter().map(|v| v.norm()).fold(1.0, f64::max);
    let dev = hermitian_deviation(h);
    if dev > 1e-12 * scale {
        return Err(SdpError::NotHermitian(dev));
    }
    let m = h.nrows();
    let mut out = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            let v = h[(i, j)];
            out[(i, j)] = v.re;
            out[(m + i, m + j)] = v.re;
            out[(m + i, j)] = v.im;
            out[(i, m + j)] = -v.im;
        }
    }
    Ok(out)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eig(h: &DMatrix<Complex64>) -> f64 {
    if h.nrows() == 0 {
        return 0.0;
    }
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(sym).eigenvalues.min()
}

pub fn min_eig_real(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Lower Cholesky factor of a symmetric PSD matrix, adding a diagonal shift
/// of at most `shift_tol` when the plain factorization fails.
pub fn cholesky_psd(m: &DMatrix<f64>, shift_tol: f64) -> Result<DMatrix<f64>, SdpError> {
    let sym = (m + m.transpose()) * 0.5;
    if let Some(c) = sym.clone().cholesky() {
        return Ok(c.l());
    }
    let n = sym.nrows();
    let mut shift = (f64::EPSILON * sym.amax().max(1.0)).min(shift_tol);
    while shift <= shift_tol {
        if let Some(c) = (&sym + DMatrix::identity(n, n) * shift).cholesky() {
            return Ok(c.l());
        }
        if shift == shift_tol {
            break;
        }
        shift = (shift * 10.0).min(shift_tol);
    }
    Err(SdpError::Indefinite(min_eig_real(&sym)))
}

/// Symmetric square root `Q·diag(√max(λ, 0))·Qᵀ` of a PSD matrix; fails if an
/// eigenvalue is below `−tol`.
pub fn psd_sqrt(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>, SdpError> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.min();
    if min < -tol {
        return Err(SdpError::Indefinite(min));
    }
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose())
}

// Real symmetric sparse matrix, upper triangle.
#[derive(Clone, Debug, Default)]
struct SymSparse {
    entries: Vec<(usize, usize, f64)>,
}

impl SymSparse {
    fn inner(&self, x: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, a)| if i == j { a * x[(i, i)] } else { 2.0 * a * x[(i, j)] })
            .sum()
    }

    fn add_to(&self, out: &mut DMatrix<f64>, scale: f64) {
        for &(i, j, a) in &self.entries {
            out[(i, j)] += scale * a;
            if i != j {
                out[(j, i)] += scale * a;
            }
        }
    }

    fn scale(&mut self, s: f64) {
        self.entries.iter_mut().for_each(|e| e.2 *= s);
    }

    fn norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, a)| if i == j { a * a } else { 2.0 * a * a })
            .sum::<f64>()
            .sqrt()
    }

    // ⟨self, other⟩ with `other` given by its index.
    fn dot_indexed(&self, other: &HashMap<(usize, usize), f64>) -> f64 {
        self.entries
            .iter()
            .filter_map(|&(i, j, a)| other.get(&(i, j)).map(|&s| if i == j { a * s } else { 2.0 * a * s }))
            .sum()
    }

    fn index(&self) -> HashMap<(usize, usize), f64> {
        let mut h = HashMap::new();
        for &(i, j, a) in &self.entries {
            *h.entry((i, j)).or_insert(0.0) += a;
        }
        h
    }
}

// Real form of a Hermitian matrix: itself if real, else half the embedding,
// so that inner products are preserved.
fn to_real(h: &Hermitian, embed: bool) -> SymSparse {
    let m = h.dim();
    let mut entries = Vec::new();
    for (i, j, v) in h.entries() {
        if !embed {
            entries.push((i, j, v.re));
            continue;
        }
        let (re, im) = (0.5 * v.re, 0.5 * v.im);
        if re != 0.0 {
            entries.push((i, j, re));
            entries.push((m + i, m + j, re));
        }
        if i != j && im != 0.0 {
            // (m+i, j) = Im and its mirror (j, m+i); (i, m+j) = −Im.
            entries.push((j, m + i, im));
            entries.push((i, m + j, -im));
        }
    }
    SymSparse { entries }
}

// Block (Y + J Y Jᵀ)/2 followed by extraction of H = R + iS.
fn from_real(y: &DMatrix<f64>, m: usize, embedded: bool) -> DMatrix<Complex64> {
    if !embedded {
        return y.map(|v| Complex64::new(v, 0.0));
    }
    DMatrix::from_fn(m, m, |i, j| {
        let re = 0.5 * (y[(i, j)] + y[(m + i, m + j)]);
        let im = 0.5 * (y[(m + i, j)] - y[(i, m + j)]);
        Complex64::new(re, im)
    })
}

/// Solves the problem to the residual tolerances in `opts`.
pub fn solve(p: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution, SdpError> {
    p.validate()?;
    if opts.tol <= 0.0 || opts.gap_tol <= 0.0 {
        return Err(SdpError::DimensionMismatch("tolerances must be positive".into()));
    }
    let embed = !p.is_real();
    let n = if embed { 2 * p.dim } else { p.dim };
    let ncons = p.constraints.len();

    // Row-normalized constraints and scaled objective.
    let mut rows: Vec<SymSparse> = Vec::with_capacity(ncons);
    let mut b = DVector::zeros(ncons);
    let mut row_scale = vec![1.0; ncons];
    for (k, c) in p.constraints.iter().enumerate() {
        let mut a = to_real(&c.a, embed);
        let nrm = a.norm();
        if nrm == 0.0 {
            if c.b.abs() > 0.0 {
                let mut cert = DVector::zeros(ncons);
                cert[k] = c.b.signum();
                return Err(SdpError::Infeasible {
                    reason: format!("constraint {k} has zero matrix and rhs {}", c.b),
                    certificate: cert,
                });
            }
            rows.push(a);
            b[k] = 0.0;
            row_scale[k] = 0.0;
            continue;
        }
        a.scale(1.0 / nrm);
        row_scale[k] = 1.0 / nrm;
        b[k] = c.b / nrm;
        rows.push(a);
    }
    let c_real = to_real(&p.objective, embed);
    let mut c_dense = DMatrix::zeros(n, n);
    c_real.add_to(&mut c_dense, 1.0);
    let c_scale = c_dense.norm().max(1.0);
    c_dense /= c_scale;

    // Pseudo-inverse of the Gram matrix A A*.
    let indices: Vec<HashMap<(usize, usize), f64>> = rows.iter().map(SymSparse::index).collect();
    let gram = DMatrix::from_fn(ncons, ncons, |i, j| rows[i].dot_indexed(&indices[j]));
    let (gram_pinv, null_basis) = pseudo_inverse(&gram);
    if let Some(cert) = affine_certificate(&null_basis, &b) {
        let mut y = cert.clone();
        for k in 0..ncons {
            y[k] *= row_scale[k];
        }
        return Err(SdpError::Infeasible {
            reason: "affine constraints are inconsistent".into(),
            certificate: y,
        });
    }

    let apply_a = |x: &DMatrix<f64>| DVector::from_iterator(ncons, rows.iter().map(|r| r.inner(x)));
    let apply_at = |y: &DVector<f64>| {
        let mut out = DMatrix::zeros(n, n);
        for (r, &v) in rows.iter().zip(y.iter()) {
            if v != 0.0 {
                r.add_to(&mut out, v);
            }
        }
        out
    };

    let b_norm = b.norm();
    let c_norm = c_dense.norm();
    let mut x = DMatrix::<f64>::zeros(n, n);
    let mut s = DMatrix::<f64>::zeros(n, n);
    let mut y = DVector::<f64>::zeros(ncons);
    let mut mu: f64 = 1.0;
    let mut best: Option<(f64, DMatrix<f64>, DVector<f64>)> = None;
    let mut pinf_hist = 0.0;
    let mut dinf_hist = 0.0;

    let mut iter = 0;
    let mut converged = false;
    while iter < opts.max_iter {
        iter += 1;
        let rhs = (&b - apply_a(&x)) * mu + apply_a(&(&c_dense - &s));
        y = &gram_pinv * rhs;
        let aty = apply_at(&y);
        let v = &c_dense - &aty - &x * mu;
        let v = (&v + v.transpose()) * 0.5;
        let eig = SymmetricEigen::new(v);
        let q = &eig.eigenvectors;
        let pos = eig.eigenvalues.map(|l| l.max(0.0));
        let neg = eig.eigenvalues.map(|l| (-l).max(0.0));
        s = q * DMatrix::from_diagonal(&pos) * q.transpose();
        x = q * DMatrix::from_diagonal(&neg) * q.transpose() / mu;

        let pres = apply_a(&x) - &b;
        let pinf = pres.norm() / (1.0 + b_norm);
        let dinf = (&c_dense - &aty - &s).norm() / (1.0 + c_norm);
        let pobj = c_dense.dot(&x);
        let dobj = b.dot(&y);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());

        let score = pinf.max(dinf).max(gap * opts.tol / opts.gap_tol);
        if best.as_ref().is_none_or(|(sc, _, _)| score < *sc) {
            best = Some((score, x.clone(), y.clone()));
        }
        if pinf <= opts.tol && dinf <= opts.tol && gap <= opts.gap_tol {
            // Also require the unscaled constraints to hold to `tol`.
            let worst = pres
                .iter()
                .zip(&row_scale)
                .filter(|(_, &w)| w > 0.0)
                .map(|(r, w)| r.abs() / w)
                .fold(0.0, f64::max);
            if worst <= opts.tol {
                converged = true;
                break;
            }
        }

        if dobj.abs() > 1e12 && dinf < 1e-3 {
            let mut cert = y.clone();
            for k in 0..ncons {
                cert[k] *= row_scale[k];
            }
            return Err(SdpError::Infeasible {
                reason: "dual objective diverges".into(),
                certificate: cert,
            });
        }

        pinf_hist += pinf.max(1e-300).ln();
        dinf_hist += dinf.max(1e-300).ln();
        if iter % 20 == 0 {
            let ratio = (pinf_hist - dinf_hist) / 20.0;
            if ratio > 1.0_f64.ln() + 0.7 {
                mu = (mu * 1.6).min(1e6);
            } else if ratio < -0.7 {
                mu = (mu / 1.6).max(1e-6);
            }
            pinf_hist = 0.0;
            dinf_hist = 0.0;
        }
    }

    let (x_fin, y_fin) = if converged {
        (x, y)
    } else {
        let (_, bx, by) = best.expect("at least one iteration");
        (bx, by)
    };
    let sol = finish(p, embed, &x_fin, &y_fin, &row_scale, c_scale, &rows, &b, &c_dense, iter);
    if converged {
        Ok(sol)
    } else {
        Err(SdpError::NotConverged { best: Box::new(sol) })
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: &SdpProblem,
    embed: bool,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    row_scale: &[f64],
    c_scale: f64,
    rows: &[SymSparse],
    b: &DVector<f64>,
    c_dense: &DMatrix<f64>,
    iterations: usize,
) -> SdpSolution {
    let xc = from_real(x, p.dim, embed);
    let mut y_orig = y.clone() * c_scale;
    for (k, v) in y_orig.iter_mut().enumerate() {
        *v *= row_scale[k];
    }
    let primal = p.objective_value(&xc);
    let dual = p.constraints.iter().zip(y_orig.iter()).map(|(c, v)| c.b * v).sum::<f64>() + p.offset;

    let ax = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.inner(x)));
    let pinf = (ax - b).norm() / (1.0 + b.norm());
    let mut aty = DMatrix::zeros(x.nrows(), x.ncols());
    for (r, &v) in rows.iter().zip(y.iter()) {
        r.add_to(&mut aty, v);
    }
    let zmat = c_dense - aty;
    let zmat = (&zmat + zmat.transpose()) * 0.5;
    let s = if zmat.nrows() > 0 {
        let e = SymmetricEigen::new(zmat.clone());
        let pos = e.eigenvalues.map(|l| l.max(0.0));
        &e.eigenvectors * DMatrix::from_diagonal(&pos) * e.eigenvectors.transpose()
    } else {
        zmat.clone()
    };
    let dinf = (&zmat - s).norm() / (1.0 + c_dense.norm());

    SdpSolution {
        residuals: Residuals {
            constraint_inf_norm: p.constraint_violation(&xc),
            min_eigenvalue: min_eig(&xc),
            duality_gap: (primal - dual).abs() / (1.0 + primal.abs() + dual.abs()),
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
        },
        x: xc,
        y: y_orig,
        primal_value: primal,
        dual_value: dual,
        iterations,
    }
}

fn pseudo_inverse(g: &DMatrix<f64>) -> (DMatrix<f64>, Vec<DVector<f64>>) {
    let n = g.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), Vec::new());
    }
    let eig = SymmetricEigen::new(g.clone());
    let top = eig.eigenvalues.amax();
    let cut = top * 1e-10;
    let mut inv = DMatrix::zeros(n, n);
    let mut null = Vec::new();
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k).into_owned();
        if l > cut {
            inv += &v * v.transpose() / l;
        } else {
            null.push(v);
        }
    }
    (inv, null)
}

// Component of b outside the range of A, if non-negligible: r with A*r = 0
// and bᵀr > 0.
fn affine_certificate(null_basis: &[DVector<f64>], b: &DVector<f64>) -> Option<DVector<f64>> {
    let mut r = DVector::zeros(b.len());
    for v in null_basis {
        r += v * v.dot(b);
    }
    (r.norm() > 1e-9 * (1.0 + b.norm())).then_some(r)
}
