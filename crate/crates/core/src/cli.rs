//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::basis::build_basis;
use crate::critical::{mu_c_closed_form, mu_c_high_k_bound, mu_c_lattice, mu_c_numeric, mu_c_small_k};
use crate::dispersion::{
    capital_lambda, format_sig17, maximal_mode_inequality_check, nonlinear_constants, solve_column, sweep,
    KSpec, Problem,
};
use crate::error::Error;
use crate::forms::{assemble, SlipCoefficients};
use crate::growth::{assemble_mode, growth_sequence, verify_characteristic_identity};
use crate::profile::{lambda_upper_bound, make_profile, ProfileKind};
use crate::spectrum::gamma_monotonicity_check;

/// Default output directory when `--output` is absent.
pub const OUT_DIR_ENV: &str = "RTSLIP_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_SUBCRITICAL: i32 = 4;
pub const EXIT_THRESHOLD: i32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

fn default_n_modes() -> usize {
    48
}

fn default_tol() -> f64 {
    1e-10
}

fn default_m_modes() -> usize {
    8
}

fn default_format() -> OutputFormat {
    OutputFormat::Csv
}

/// Flat run configuration. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: String,
    pub profile_params: Vec<f64>,
    pub g: f64,
    pub mu: f64,
    #[serde(rename = "L")]
    pub period_l: f64,
    pub xi_minus: f64,
    pub xi_plus: f64,
    #[serde(default = "default_n_modes")]
    pub n_modes: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub j_max: Option<usize>,
    #[serde(default)]
    pub k_grid: Option<Vec<f64>>,
    #[serde(default = "default_m_modes")]
    pub m_modes: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: OutputFormat,
}

impl Default for RunConfig {
    /// rho0 = 2 + x2, g = 1, mu = 1, L = 1, no slip, lattice j <= 8.
    fn default() -> Self {
        Self {
            profile: "linear".into(),
            profile_params: vec![2.0, 1.0],
            g: 1.0,
            mu: 1.0,
            period_l: 1.0,
            xi_minus: 0.0,
            xi_plus: 0.0,
            n_modes: default_n_modes(),
            tol: default_tol(),
            j_max: Some(8),
            k_grid: None,
            m_modes: default_m_modes(),
            output: None,
            format: default_format(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| format!("config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical JSON: fixed key order, pretty-printed.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        self.problem().map_err(|e| e.to_string())?;
        if !(self.period_l > 0.0) || !self.period_l.is_finite() {
            return Err(format!("L must be positive, got {}", self.period_l));
        }
        if self.n_modes < 4 {
            return Err(format!("n_modes must be at least 4, got {}", self.n_modes));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(format!("tol must be positive, got {}", self.tol));
        }
        if self.m_modes == 0 || self.m_modes > self.n_modes {
            return Err(format!("m_modes must be in 1..={}, got {}", self.n_modes, self.m_modes));
        }
        if self.j_max == Some(0) {
            return Err("j_max must be at least 1".into());
        }
        if let Some(grid) = &self.k_grid {
            KSpec::Grid(grid.clone()).values().map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn slip(&self) -> Result<SlipCoefficients, Error> {
        SlipCoefficients::new(self.xi_minus, self.xi_plus)
    }

    pub fn problem(&self) -> Result<Problem, Error> {
        let kind = ProfileKind::from_parts(&self.profile, &self.profile_params)?;
        Problem::new(make_profile(kind)?, self.g, self.mu, self.slip()?)
    }

    pub fn k_spec(&self) -> KSpec {
        match &self.k_grid {
            Some(grid) => KSpec::Grid(grid.clone()),
            None => KSpec::Lattice {
                period_l: self.period_l,
                j_max: self.j_max.unwrap_or(8),
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "rtslip", version, about = "Linear Rayleigh-Taylor stability with Navier-slip walls")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Density profile kind: linear, exponential or polynomial.
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Comma-separated profile parameters.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    profile_params: Option<Vec<f64>>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    g: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    mu: Option<f64>,
    /// Horizontal period parameter L (lattice k = j / L).
    #[arg(long = "period", global = true, allow_negative_numbers = true)]
    period_l: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    xi_minus: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    xi_plus: Option<f64>,
    /// Number of basis functions.
    #[arg(long, global = true)]
    n_modes: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Growth rates per wave number.
    #[arg(long, global = true)]
    m_modes: Option<usize>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Critical viscosity per wave number.
    MuC(MuCArgs),
    /// Growth rates and residuals at one wave number.
    Growth(GrowthArgs),
    /// Growth rates over a set of wave numbers.
    Dispersion(DispersionArgs),
    /// Constants of the nonlinear-instability regime.
    Constants,
    /// Run the invariant suite.
    Verify,
    /// Print the effective configuration as canonical JSON.
    Config,
}

#[derive(Args, Debug)]
struct MuCArgs {
    #[arg(long, allow_negative_numbers = true, conflicts_with = "k_range")]
    k: Option<f64>,
    /// start,end,count
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    k_range: Option<Vec<f64>>,
    #[arg(long, conflicts_with_all = ["numeric", "both"])]
    closed_form: bool,
    #[arg(long, conflicts_with = "both")]
    numeric: bool,
    #[arg(long)]
    both: bool,
}

#[derive(Args, Debug)]
struct GrowthArgs {
    /// Wave number; defaults to 1 / L.
    #[arg(long, allow_negative_numbers = true)]
    k: Option<f64>,
    /// Number of growth rates to report; defaults to m_modes.
    #[arg(long)]
    n_modes_out: Option<usize>,
    /// Directory for per-mode profile tables.
    #[arg(long)]
    profiles_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DispersionArgs {
    /// Lattice size j_max.
    #[arg(long, conflicts_with = "k_grid")]
    lattice: Option<usize>,
    /// Comma-separated wave numbers.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    k_grid: Option<Vec<f64>>,
}

enum CliError {
    Config(String),
    Solver(Error),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::ProfileInvalid { .. } => CliError::Config(e.to_string()),
            other => CliError::Solver(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Solver(Error::SubcriticalViscosity { .. }) => EXIT_SUBCRITICAL,
            CliError::Solver(Error::ThresholdViolation { .. }) => EXIT_THRESHOLD,
            CliError::Solver(_) => EXIT_NUMERICAL,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(m) => format!("configuration error: {m}"),
            CliError::Io(m) => format!("i/o error: {m}"),
            CliError::Solver(e) => e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_CONFIG
                }
            };
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn effective_config(common: &CommonArgs) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = &common.profile {
        cfg.profile = v.clone();
    }
    if let Some(v) = &common.profile_params {
        cfg.profile_params = v.clone();
    }
    macro_rules! override_fields {
        ($($f:ident),*) => { $(if let Some(v) = common.$f { cfg.$f = v; })* };
    }
    override_fields!(g, mu, period_l, xi_minus, xi_plus, n_modes, tol, m_modes, format);
    if let Some(v) = &common.output {
        cfg.output = Some(v.clone());
    }
    cfg.validate().map_err(CliError::Config)?;
    Ok(cfg)
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> CliResult<i32> {
    let mut cfg = effective_config(&cli.common)?;
    match cli.command {
        Command::MuC(args) => cmd_mu_c(&cfg, &args, out).map(|_| EXIT_OK),
        Command::Growth(args) => cmd_growth(&cfg, &args, out).map(|_| EXIT_OK),
        Command::Dispersion(args) => {
            if let Some(j) = args.lattice {
                cfg.j_max = Some(j);
                cfg.k_grid = None;
            }
            if let Some(grid) = args.k_grid {
                cfg.k_grid = Some(grid);
            }
            cfg.validate().map_err(CliError::Config)?;
            cmd_dispersion(&cfg, out).map(|_| EXIT_OK)
        }
        Command::Constants => cmd_constants(&cfg, out).map(|_| EXIT_OK),
        Command::Verify => cmd_verify(&cfg, out),
        Command::Config => emit(&cfg, "config", "json", &(cfg.to_json() + "\n"), out).map(|_| EXIT_OK),
    }
}

/// Writes to `--output`, else to `$RTSLIP_OUT_DIR/<stem>.<ext>`, else to stdout.
fn emit(cfg: &RunConfig, stem: &str, ext: &str, text: &str, out: &mut dyn Write) -> CliResult<()> {
    let target = cfg
        .output
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(|d| Path::new(&d).join(format!("{stem}.{ext}"))));
    match target {
        Some(path) => std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn check_k(k: f64) -> CliResult<f64> {
    if k > 0.0 && k.is_finite() {
        Ok(k)
    } else {
        Err(CliError::Config(format!("wave number must satisfy k > 0, got {k}")))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_sig17).unwrap_or_default()
}

fn cmd_mu_c(cfg: &RunConfig, args: &MuCArgs, out: &mut dyn Write) -> CliResult<()> {
    let ks: Vec<f64> = match (&args.k, &args.k_range) {
        (Some(k), _) => vec![check_k(*k)?],
        (None, Some(r)) => match r.as_slice() {
            [a, b, n] if *n >= 1.0 && n.fract() == 0.0 => {
                let n = *n as usize;
                let step = if n > 1 { (b - a) / (n - 1) as f64 } else { 0.0 };
                (0..n).map(|i| check_k(a + step * i as f64)).collect::<CliResult<_>>()?
            }
            _ => return Err(CliError::Config("--k-range expects start,end,count".into())),
        },
        (None, None) => vec![1.0 / cfg.period_l],
    };
    let slip = cfg.slip()?;
    let want_closed = !args.numeric || args.both;
    let want_numeric = args.numeric || args.both;
    let basis = if want_numeric { Some(build_basis(cfg.n_modes)?) } else { None };
    let mut text = String::from("k,mu_c_closed_form,mu_c_numeric,relative_gap,mu_c_small_k,high_k_bound\n");
    for k in ks {
        let closed = if want_closed { Some(mu_c_closed_form(k, slip)?) } else { None };
        let numeric = match &basis {
            Some(b) => Some(mu_c_numeric(b, k, slip)?.value),
            None => None,
        };
        let gap = match (closed, numeric) {
            (Some(c), Some(n)) if c > 0.0 => Some((c - n) / c),
            (Some(_), Some(n)) => Some(n.abs()),
            _ => None,
        };
        let _ = writeln!(
            text,
            "{},{},{},{},{},{}",
            format_sig17(k),
            opt(closed),
            opt(numeric),
            opt(gap),
            format_sig17(mu_c_small_k(k, slip)),
            format_sig17(mu_c_high_k_bound(k, slip)?)
        );
    }
    emit(cfg, "mu_c", "csv", &text, out)
}

fn cmd_growth(cfg: &RunConfig, args: &GrowthArgs, out: &mut dyn Write) -> CliResult<()> {
    let k = check_k(args.k.unwrap_or(1.0 / cfg.period_l))?;
    let m = args.n_modes_out.unwrap_or(cfg.m_modes);
    if m == 0 || m > cfg.n_modes {
        return Err(CliError::Config(format!("--n-modes-out must be in 1..={}", cfg.n_modes)));
    }
    let problem = cfg.problem()?;
    let basis = Arc::new(build_basis(cfg.n_modes)?);
    let ops = Arc::new(assemble(basis, &problem.profile, k, problem.slip)?);
    let seq = growth_sequence(ops, problem.g, problem.mu, m, cfg.tol)?;
    let mut text = String::from("n,lambda_n,fixed_point_residual,ode_residual,bc_residual\n");
    for mode in &seq.modes {
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            mode.n,
            format_sig17(mode.lambda_n),
            format_sig17(mode.fixed_point_residual),
            format_sig17(mode.ode_residual),
            format_sig17(mode.bc_residual)
        );
    }
    if let Some(dir) = &args.profiles_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let pts: Vec<f64> = (0..=100).map(|i| -1.0 + 0.02 * i as f64).collect();
        for mode in &seq.modes {
            let (rows, _) = assemble_mode(mode, &pts)?;
            let mut t = String::from("x2,phi,dphi,omega,theta,q\n");
            for r in rows {
                let _ = writeln!(
                    t,
                    "{},{},{},{},{},{}",
                    format_sig17(r.x2),
                    format_sig17(r.phi),
                    format_sig17(r.dphi),
                    format_sig17(r.omega),
                    format_sig17(r.theta),
                    format_sig17(r.q)
                );
            }
            let path = dir.join(format!("mode_{}.csv", mode.n));
            std::fs::write(&path, t).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
    }
    emit(cfg, "growth", "csv", &text, out)
}

fn cmd_dispersion(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let problem = cfg.problem()?;
    let basis = Arc::new(build_basis(cfg.n_modes)?);
    let curve = sweep(&problem, basis, &cfg.k_spec(), cfg.m_modes, cfg.tol)?;
    match cfg.format {
        OutputFormat::Csv => emit(cfg, "dispersion", "csv", &curve.to_csv(), out),
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(&curve.to_json()).expect("json") + "\n";
            emit(cfg, "dispersion", "json", &text, out)
        }
    }
}

fn cmd_constants(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let problem = cfg.problem()?;
    let mu_c = mu_c_lattice(cfg.period_l, problem.slip)?;
    if !(problem.mu > 3.0 * mu_c) {
        return Err(Error::ThresholdViolation { mu: problem.mu, threshold: 3.0 * mu_c }.into());
    }
    let spec = KSpec::Lattice { period_l: cfg.period_l, j_max: cfg.j_max.unwrap_or(8) };
    let basis = Arc::new(build_basis(cfg.n_modes)?);
    let curve = sweep(&problem, basis, &spec, cfg.m_modes, cfg.tol)?;
    let constants = nonlinear_constants(&curve, cfg.period_l)?;
    let cap = capital_lambda(&curve)?;
    let mut doc = constants.to_json();
    doc["window_note"] = cap.disclaimer().into();
    doc["m1_identity_residual"] = constants.m1_identity_residual().into();
    doc["m2_identity_residual"] = constants.m2_identity_residual(problem.mu).into();
    let text = serde_json::to_string_pretty(&doc).expect("json") + "\n";
    emit(cfg, "constants", "json", &text, out)
}

struct Suite<'a> {
    out: &'a mut dyn Write,
    failures: usize,
}

impl Suite<'_> {
    fn record(&mut self, group: &str, outcome: Result<String, String>) {
        let line = match outcome {
            Ok(detail) => format!("[PASS] {group}: {detail}"),
            Err(detail) => {
                self.failures += 1;
                format!("[FAIL] {group}: {detail}")
            }
        };
        let _ = writeln!(self.out, "{line}");
    }

    fn skip(&mut self, group: &str, why: &str) {
        let _ = writeln!(self.out, "[SKIP] {group}: {why}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cmd_verify(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<i32> {
    let problem = cfg.problem()?;
    let basis = Arc::new(build_basis(cfg.n_modes)?);
    let k1 = 1.0 / cfg.period_l;
    let bound = lambda_upper_bound(&problem.profile, problem.g)?;
    let mut suite = Suite { out, failures: 0 };

    suite.record(
        "critical viscosity",
        (|| {
            let closed = mu_c_closed_form(k1, problem.slip).map_err(|e| e.to_string())?;
            let numeric = mu_c_numeric(&basis, k1, problem.slip).map_err(|e| e.to_string())?.value;
            let gap = if closed > 0.0 { (closed - numeric) / closed } else { numeric.abs() };
            ensure((-1e-12..=1e-7).contains(&gap), || format!("closed {closed} vs numeric {numeric}"))?;
            Ok(format!("mu_c(k={k1}) = {closed}, relative gap {gap:.2e}"))
        })(),
    );

    let mu_c1 = mu_c_closed_form(k1, problem.slip)?;
    if problem.mu <= mu_c1 {
        suite.skip("growth rates", &format!("mu = {} <= mu_c(k={k1}) = {mu_c1}", problem.mu));
    } else {
        let ops = Arc::new(assemble(Arc::clone(&basis), &problem.profile, k1, problem.slip)?);
        suite.record(
            "spectrum monotonicity",
            (|| {
                let grid: Vec<f64> = (0..=5).map(|i| bound * i as f64 / 5.0).collect();
                let report = gamma_monotonicity_check(&ops, problem.mu, &grid, 5.min(cfg.m_modes)).map_err(|e| e.to_string())?;
                ensure(report.holds, || format!("{:?}", report.findings.iter().find(|f| !f.decreasing)))?;
                Ok("gamma_n decreasing in lambda".into())
            })(),
        );
        suite.record(
            "growth rates",
            (|| {
                let seq = growth_sequence(Arc::clone(&ops), problem.g, problem.mu, cfg.m_modes, cfg.tol)
                    .map_err(|e| e.to_string())?;
                let nodes = basis.quad_nodes().to_vec();
                for m in &seq.modes {
                    ensure(m.lambda_n > 0.0 && m.lambda_n <= bound + 1e-10, || format!("lambda_{} = {} out of (0, {bound}]", m.n, m.lambda_n))?;
                    ensure(m.ode_residual <= 1e-6 && m.bc_residual <= 1e-6 && m.fixed_point_residual <= 1e-6, || {
                        format!("residuals of mode {}: {} {} {}", m.n, m.ode_residual, m.bc_residual, m.fixed_point_residual)
                    })?;
                    let id = verify_characteristic_identity(m).map_err(|e| e.to_string())?;
                    ensure(id <= 1e-8, || format!("identity residual {id} for mode {}", m.n))?;
                    let (rows, _) = assemble_mode(m, &nodes).map_err(|e| e.to_string())?;
                    let div = rows.iter().map(|r| (m.k() * r.theta + r.dphi).abs()).fold(0.0, f64::max);
                    ensure(div <= 1e-9, || format!("k theta + phi' = {div} for mode {}", m.n))?;
                }
                Ok(format!("lambda_1 = {}, {} modes", seq.modes[0].lambda_n, seq.modes.len()))
            })(),
        );
    }

    let curve = sweep(&problem, Arc::clone(&basis), &cfg.k_spec(), 1.max(cfg.m_modes.min(3)), cfg.tol)?;
    let cap = capital_lambda(&curve);
    suite.record(
        "dispersion",
        cap.as_ref()
            .map_err(|e| e.to_string())
            .and_then(|cap| {
                for c in &curve.columns {
                    if let Some(l) = &c.lambdas {
                        ensure(l[0] > 0.0, || format!("lambda_1(k={}) = {}", c.k, l[0]))?;
                    }
                }
                ensure(cap.value <= bound + 1e-10, || format!("Lambda = {} exceeds {bound}", cap.value))?;
                Ok(format!("Lambda = {} at k = {}", cap.value, cap.argmax_k))
            }),
    );

    let mu_c = mu_c_lattice(cfg.period_l, problem.slip)?;
    if !(problem.mu > 3.0 * mu_c) {
        suite.skip("nonlinear constants", &format!("mu = {} <= 3 mu_c = {}", problem.mu, 3.0 * mu_c));
    } else if let Ok(cap) = cap {
        suite.record(
            "nonlinear constants",
            nonlinear_constants(&curve, cfg.period_l).map_err(|e| e.to_string()).and_then(|c| {
                ensure(c.nu0 > 1.0 && c.nu0 < 1.5, || format!("nu0 = {}", c.nu0))?;
                ensure(c.m1_identity_residual() <= 1e-12, || format!("m1 identity {}", c.m1_identity_residual()))?;
                let r = c.m2_identity_residual(problem.mu);
                ensure(r <= 1e-10, || format!("m2 identity {r}"))?;
                Ok(format!("nu0 = {}, m1 = {}, m2 = {}", c.nu0, c.m1, c.m2))
            }),
        );
        suite.record(
            "maximal-mode inequality",
            (|| {
                let ops = Arc::new(
                    assemble(Arc::clone(&basis), &problem.profile, cap.argmax_k, problem.slip).map_err(|e| e.to_string())?,
                );
                let seq = growth_sequence(ops, problem.g, problem.mu, cfg.m_modes.min(3), cfg.tol).map_err(|e| e.to_string())?;
                for m in &seq.modes {
                    let (_, field) = assemble_mode(m, &[0.0]).map_err(|e| e.to_string())?;
                    let r = maximal_mode_inequality_check(&field, &basis, &problem, cap.value, cfg.period_l)
                        .map_err(|e| e.to_string())?;
                    ensure(r.slack >= -1e-10 * r.rhs, || format!("slack {} for mode {}", r.slack, m.n))?;
                    ensure(r.sup_bound_slack >= -1e-10 * r.gradient_energy, || {
                        format!("boundary quotient above mu_c for mode {}", m.n)
                    })?;
                }
                Ok(format!("{} modes at k = {}", seq.modes.len(), cap.argmax_k))
            })(),
        );
    }

    let k_col = curve.columns.iter().find(|c| !c.skipped()).map(|c| c.k);
    if let Some(k) = k_col {
        suite.record(
            "determinism",
            (|| {
                let a = solve_column(&problem, Arc::clone(&basis), k, 1, cfg.tol).map_err(|e| e.to_string())?;
                let b = solve_column(&problem, Arc::clone(&basis), k, 1, cfg.tol).map_err(|e| e.to_string())?;
                let (a, b) = (a.expect("supercritical"), b.expect("supercritical"));
                ensure(a.modes[0].lambda_n.to_bits() == b.modes[0].lambda_n.to_bits(), || "repeat solve differs".into())?;
                Ok("repeat solve bit-identical".into())
            })(),
        );
    }

    let failures = suite.failures;
    let _ = writeln!(out, "{}", if failures == 0 { "verify: all checks passed".to_string() } else { format!("verify: {failures} check(s) failed") });
    Ok(if failures == 0 { EXIT_OK } else { EXIT_VERIFY_FAILED })
}
