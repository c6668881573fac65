//! `rotor`: bounds and checks for quantum rotor instances.
//!
//! Reports are `key: value` lines, one per fact, in a fixed order. Exit
//! codes: 0 success, 1 a verification or certificate failed, 2 invalid
//! input, 3 a solver did not converge.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rotor_core::bounds::{erb_rhs, spherical_certificate};
use rotor_core::bov;
use rotor_core::oracle::{self, OracleError};
use rotor_core::phasespace::{angular_momentum, star, PhasePoly};
use rotor_core::poly::{rational, real};
use rotor_core::polysphere::check_catalogue;
use rotor_core::relax::{solve_full, solve_reduced, ReducedOptions, RelaxError, RotorInstance};
use rotor_core::rounding::{rounded_value, KineticMode, McOptions, RoundingError};
use rotor_core::sdpcore::{SdpError, SdpOptions};

#[derive(Parser)]
#[command(name = "rotor", version, about = "SDP lower bounds, Gaussian rounding and exact checks for quantum rotor models")]
struct Cli {
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Level-1 SDP lower bound on the ground energy.
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = Form::Reduced)]
        form: Form,
        #[command(flatten)]
        sdp: SdpArgs,
        /// Append the optimal reduced moment matrix.
        #[arg(long)]
        moment: bool,
    },
    /// Solve the reduced SDP and round it to a Gaussian state.
    Round {
        instance: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, value_enum, default_value_t = Mode::ClosedForm)]
        mode: Mode,
        #[command(flatten)]
        sdp: SdpArgs,
    },
    /// Exact ground energy of a k = 2 instance in a truncated Fourier basis.
    Oracle {
        instance: PathBuf,
        /// Fourier cutoff M; each site keeps modes −M..=M.
        #[arg(long, default_value_t = 16)]
        truncation: usize,
        /// Mean-field restarts for the product-state bound; 0 skips it.
        #[arg(long, default_value_t = 32)]
        restarts: usize,
        /// Required when restarts > 0.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Approximation ratio of Gaussian rounding at rotor dimension k.
    Ratio {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 2.0)]
        c_pot: f64,
        #[arg(long, default_value_t = bov::GRID_SIZE)]
        grid: usize,
        /// Write the curve `t,g,std_err` here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Exact identity checks.
    #[command(subcommand)]
    Verify(Verify),
    /// Uncertainty certificates on random k = 2 wavefunctions.
    Certify {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        states: u64,
        #[arg(long, default_value_t = 10)]
        truncation: usize,
    },
}

#[derive(Subcommand)]
enum Verify {
    /// Sphere operator relations on all monomials up to a degree.
    Algebra {
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 4)]
        degree: u32,
    },
    /// `L ⋆ L = L² − 1/2` for every angular momentum component.
    Moyal {
        #[arg(long, default_value_t = 3)]
        modes: usize,
    },
}

#[derive(Args)]
struct SdpArgs {
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

impl SdpArgs {
    fn options(&self) -> SdpOptions {
        let mut o = SdpOptions::default();
        if let Some(t) = self.tol {
            o.tol = t;
            o.gap_tol = t;
        }
        if let Some(m) = self.max_iter {
            o.max_iter = m;
        }
        o
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Form {
    Reduced,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    ClosedForm,
    Wick,
    Mc,
}

impl From<Mode> for KineticMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::ClosedForm => KineticMode::ClosedForm,
            Mode::Wick => KineticMode::Wick,
            Mode::Mc => KineticMode::Mc,
        }
    }
}

enum Failure {
    Check(String),
    Invalid(String),
    NotConverged(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Invalid(_) => 2,
            Failure::NotConverged(_) => 3,
        }
    }
}

impl From<RelaxError> for Failure {
    fn from(e: RelaxError) -> Self {
        match e {
            RelaxError::Sdp(SdpError::NotConverged { .. }) => Failure::NotConverged(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::NotConverged(_) => Failure::NotConverged(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<RoundingError> for Failure {
    fn from(e: RoundingError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

/// Ordered `key: value` lines.
#[derive(Default)]
struct Report(String);

impl Report {
    fn kv(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        writeln!(self.0, "{key}: {value}").unwrap();
        self
    }

    fn num(&mut self, key: &str, x: f64) -> &mut Self {
        self.kv(key, format_args!("{x:.12e}"))
    }

    /// Header for a multi-line block that follows.
    fn section(&mut self, key: &str) -> &mut Self {
        writeln!(self.0, "{key}:").unwrap();
        self
    }

    fn raw(&mut self, text: &str) -> &mut Self {
        self.0.push_str(text);
        if !text.ends_with('\n') {
            self.0.push('\n');
        }
        self
    }
}

fn load(path: &PathBuf) -> Result<RotorInstance, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    RotorInstance::from_json(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn describe(r: &mut Report, inst: &RotorInstance) {
    r.kv("n", inst.n).kv("k", inst.k).kv("a", inst.a).kv("b", inst.b).kv("c_pot", inst.c_pot).kv("edges", inst.edges.len());
}

fn solve(inst: &RotorInstance, form: Form, sdp: &SdpArgs, moment: bool) -> Result<Report, Failure> {
    let mut r = Report::default();
    r.kv("command", "solve");
    describe(&mut r, inst);
    let opts = sdp.options();
    match form {
        Form::Reduced => {
            let sol = solve_reduced(inst, &ReducedOptions::default(), &opts)?;
            r.kv("form", "reduced").num("lower_bound", sol.value).num("dual_value", sol.sdp.dual_value);
            residuals(&mut r, &sol.sdp);
            r.num("psd_repair", sol.repair);
            if moment {
                r.section("moment").raw(&sol.moment.to_string());
            }
        }
        Form::Full => {
            let sol = solve_full(inst, &opts)?;
            r.kv("form", "full").num("lower_bound", sol.value).num("dual_value", sol.sdp.dual_value);
            residuals(&mut r, &sol.sdp);
        }
    }
    Ok(r)
}

fn residuals(r: &mut Report, s: &rotor_core::sdpcore::SdpSolution) {
    r.kv("iterations", s.iterations)
        .num("constraint_inf_norm", s.residuals.constraint_inf_norm)
        .num("min_eigenvalue", s.residuals.min_eigenvalue)
        .num("duality_gap", s.residuals.duality_gap);
}

fn round(inst: &RotorInstance, seed: u64, samples: u64, mode: Mode, sdp: &SdpArgs) -> Result<Report, Failure> {
    let sol = solve_reduced(inst, &ReducedOptions::default(), &sdp.options())?;
    let mc = McOptions { samples, seed };
    let rep = rounded_value(inst, &sol.moment, mode.into(), &mc)?;
    let mut r = Report::default();
    r.kv("command", "round");
    describe(&mut r, inst);
    r.kv("mode", rep.mode)
        .kv("seed", seed)
        .kv("samples", samples)
        .num("validity_margin", rep.validity_margin)
        .num("lower_bound", sol.value)
        .num("psd_repair", sol.repair)
        .num("rounded_moment_value", rep.sdp_value)
        .num("upper_bound", rep.rounded_value)
        .num("upper_bound_std_err", rep.rounded_std_err);
    if sol.value > 0.0 {
        r.num("ratio", rep.rounded_value / sol.value);
    }
    r.section("terms").raw(&rep.to_string());
    Ok(r)
}

fn run_oracle(inst: &RotorInstance, truncation: usize, restarts: usize, seed: Option<u64>) -> Result<Report, Failure> {
    let seed = match (restarts, seed) {
        (0, s) => s,
        (_, None) => return Err(Failure::Invalid("--seed is required when --restarts > 0".into())),
        (_, s) => s,
    };
    let h = oracle::hamiltonian_k2(inst, truncation)?;
    let res = oracle::ground_energy(&h)?;
    let mut r = Report::default();
    r.kv("command", "oracle");
    describe(&mut r, inst);
    r.kv("truncation", res.cutoff)
        .kv("dim", res.dim)
        .num("ground_energy", res.ground_energy)
        .num("gap", res.gap)
        .num("residual", res.residual);
    match res.convergence_delta {
        Some(d) => r.num("truncation_delta", d),
        None => r.kv("truncation_delta", "-"),
    };
    if restarts > 0 {
        let seed = seed.expect("checked above");
        let p = oracle::product_state_k2(inst, truncation, restarts, seed)?;
        r.kv("restarts", restarts)
            .kv("seed", seed)
            .num("product_upper_bound", p.energy)
            .kv("product_converged", p.converged)
            .kv("product_sweeps", p.sweeps)
            .kv("product_restart", p.restart);
        for (v, m) in p.means.iter().enumerate() {
            r.kv(&format!("product_mean_{v}"), format_args!("{:.12e} {:.12e}", m[0], m[1]));
        }
    }
    Ok(r)
}

fn ratio(k: usize, seed: u64, samples: u64, c_pot: f64, grid: usize, csv: Option<&PathBuf>) -> Result<Report, Failure> {
    if k < 2 {
        return Err(Failure::Invalid(format!("k must be ≥ 2, got {k}")));
    }
    let curve = bov::ratio_curve(k, c_pot, grid, samples, seed).map_err(Failure::Invalid)?;
    let ab = curve.alpha();
    let k_ratio = k as f64 / (k as f64 - 1.0);
    if let Some(path) = csv {
        fs::write(path, curve.to_csv()).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    }
    let mut r = Report::default();
    r.kv("command", "ratio")
        .kv("k", k)
        .kv("seed", seed)
        .kv("samples", samples)
        .kv("c_pot", c_pot)
        .kv("grid", grid)
        .num("k_over_k_minus_1", k_ratio)
        .num("alpha_bov", ab.value)
        .num("alpha_bov_std_err", ab.std_err)
        .num("alpha_bov_t", ab.t_star)
        .num("alpha_k", ab.value.max(k_ratio));
    Ok(r)
}

fn verify(v: &Verify) -> Result<Report, Failure> {
    let mut r = Report::default();
    let mut failed = 0;
    match *v {
        Verify::Algebra { k, degree } => {
            let reports = check_catalogue(k, degree).map_err(Failure::Invalid)?;
            r.kv("command", "verify algebra").kv("k", k).kv("degree", degree);
            for rep in &reports {
                failed += usize::from(!rep.holds);
                r.raw(&rep.to_string());
            }
            r.kv("relations", reports.len());
        }
        Verify::Moyal { modes } => {
            if modes < 2 {
                return Err(Failure::Invalid(format!("need at least 2 modes, got {modes}")));
            }
            r.kv("command", "verify moyal").kv("modes", modes);
            let half = PhasePoly::constant(modes, real(rational(1, 2)));
            for i in 0..modes {
                for j in i + 1..modes {
                    let l = angular_momentum(modes, i, j);
                    let holds = star(&l, &l).ok() == l.mul(&l).and_then(|sq| sq.sub(&half)).ok();
                    failed += usize::from(!holds);
                    r.kv(&format!("L_{i}{j}"), if holds { "PASS" } else { "FAIL" });
                }
            }
        }
    }
    r.kv("failures", failed);
    if failed > 0 {
        return Err(Failure::Check(r.0));
    }
    Ok(r)
}

fn certify(seed: u64, states: u64, truncation: usize) -> Result<Report, Failure> {
    if truncation == 0 || states == 0 {
        return Err(Failure::Invalid("--states and --truncation must be ≥ 1".into()));
    }
    let mut r = Report::default();
    r.kv("command", "certify").kv("seed", seed).kv("states", states).kv("truncation", truncation);
    let (mut failures, mut min_slack, mut min_eig) = (0u64, f64::INFINITY, f64::INFINITY);
    let mut worst = None;
    for i in 0..states {
        let s = oracle::random_circle_state(truncation, seed.wrapping_add(i));
        let m = s.moments();
        let mu = m.mu.iter().map(|x| x * x).sum::<f64>().sqrt();
        let slack = m.laplacian - erb_rhs(mu, 2).map_err(Failure::Invalid)?;
        let cert = spherical_certificate(&s.spherical_moments()).map_err(Failure::Invalid)?;
        if !cert.holds() || slack < 0.0 {
            failures += 1;
        }
        min_slack = min_slack.min(slack);
        let e = cert.min_block_eigenvalue();
        if e < min_eig {
            min_eig = e;
            worst = Some(cert);
        }
    }
    r.kv("failures", failures).num("min_erb_slack", min_slack).num("min_block_eigenvalue", min_eig);
    if let Some(c) = worst {
        r.section("tightest_certificate").raw(&c.to_string());
    }
    if failures > 0 {
        return Err(Failure::Check(r.0));
    }
    Ok(r)
}

fn run(cli: &Cli) -> Result<Report, Failure> {
    match &cli.command {
        Command::Solve { instance, form, sdp, moment } => solve(&load(instance)?, *form, sdp, *moment),
        Command::Round {
            instance,
            seed,
            samples,
            mode,
            sdp,
        } => round(&load(instance)?, *seed, *samples, *mode, sdp),
        Command::Oracle {
            instance,
            truncation,
            restarts,
            seed,
        } => run_oracle(&load(instance)?, *truncation, *restarts, *seed),
        Command::Ratio {
            k,
            seed,
            samples,
            c_pot,
            grid,
            csv,
        } => ratio(*k, *seed, *samples, *c_pot, *grid, csv.as_ref()),
        Command::Verify(v) => verify(v),
        Command::Certify { seed, states, truncation } => certify(*seed, *states, *truncation),
    }
}

fn emit(cli: &Cli, text: &str) -> Result<(), Failure> {
    match &cli.output {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Invalid(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|r| emit(&cli, &r.0));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Check(report) => {
                    // the report is still useful when a check fails
                    let _ = emit(&cli, report);
                    eprintln!("error: verification failed");
                }
                Failure::Invalid(m) => eprintln!("error: {m}"),
                Failure::NotConverged(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
