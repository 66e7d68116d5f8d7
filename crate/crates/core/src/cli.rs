//! `gas-collide` command line: config files, subcommands and CSV output.
//!
//! Config files hold one `key = value` per line; `#` starts a comment.
//! Every CSV has a header row and writes floats with 17 significant digits.
//! Times are in units of `1/Gamma~`, energies in units of `hbar omega_S` and
//! rates in units of `Gamma~`.
//!
//! Exit codes: 0 success, 2 invalid config, 3 numeric failure, 4 failed check,
//! 1 for I/O errors.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::dynamics::{channels_from_rates, Lindblad};
use crate::error::{Error, Result};
use crate::qmath::{frobenius_norm, DensityMatrix, SpinQuantum};
use crate::rates::{check_local_detailed_balance, integral_i, QuadratureSpec, RateMatrix};
use crate::scattering::{check_microreversibility, AmplitudeTable};
use crate::spin::{spin_gibbs, SpinScenario};
use crate::thermo::{entropy_production_check, thermo_series};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

/// Tolerance of the micro-reversibility sub-check.
pub const MICRO_TOL: f64 = 1e-12;
/// Tolerance on `|ln(R_ij/R_ji) + beta (eps_i - eps_j)|`.
pub const DETAILED_BALANCE_TOL: f64 = 1e-8;
/// `||C gamma_S||_F` bound in units of `Gamma~`.
pub const GIBBS_STATIONARITY_TOL: f64 = 1e-8;

/// Float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
        Error::NumericFailure(_) | Error::ChannelClosed { .. } => EXIT_NUMERIC,
        Error::Io(_) | Error::Csv(_) => EXIT_IO,
    }
}

const KNOWN_KEYS: &[&str] = &[
    "J",
    "D",
    "A",
    "alpha",
    "omega_S_over_ER",
    "gamma_tilde",
    "density",
    "V0",
    "equilibrium",
    "t_max",
    "n_samples",
    "initial_state",
    "amplitude_table",
    "micro_samples",
    "radial_nodes",
    "angular_nodes",
    "quad_rel_tol",
    "alpha_grid",
    "s_grid",
];

/// Raw `key = value` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
    /// Directory relative paths are resolved against.
    base: PathBuf,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KNOWN_KEYS.contains(&k) {
                return Err(config_err(format!("line {}: unknown key `{k}`", n + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(config_err(format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        Ok(ConfigMap {
            entries,
            base: PathBuf::new(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        let mut c = ConfigMap::parse(&text)?;
        c.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(config_err(format!("unknown key `{key}`")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    fn real(&self, key: &str, default: Option<f64>) -> Result<f64> {
        match self.get(key) {
            Some(v) => {
                let x: f64 = v
                    .parse()
                    .map_err(|_| config_err(format!("`{key}`: `{v}` is not a number")))?;
                if !x.is_finite() {
                    return Err(config_err(format!("`{key}` must be finite")));
                }
                Ok(x)
            }
            None => default.ok_or_else(|| config_err(format!("missing key `{key}`"))),
        }
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| config_err(format!("`{key}`: `{v}` is not a non-negative integer"))),
            None => Ok(default),
        }
    }

    fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            None => Ok(false),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(config_err(format!("`{key}`: expected true or false, got `{v}`"))),
        }
    }

    /// Comma-separated values or `linspace(start, stop, count)`.
    pub fn grid(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.get(key).ok_or_else(|| config_err(format!("missing key `{key}`")))?;
        parse_grid(v).map_err(|m| config_err(format!("`{key}`: {m}")))
    }
}

fn parse_grid(v: &str) -> std::result::Result<Vec<f64>, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", s.trim()));
    if let Some(inner) = v.strip_prefix("linspace(").and_then(|r| r.strip_suffix(')')) {
        let parts: Vec<&str> = inner.split(',').collect();
        if parts.len() != 3 {
            return Err("linspace takes (start, stop, count)".into());
        }
        let (a, b) = (num(parts[0])?, num(parts[1])?);
        let n: usize = parts[2].trim().parse().map_err(|_| "count must be an integer".to_string())?;
        return Ok(match n {
            0 => Vec::new(),
            1 => vec![a],
            _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
        });
    }
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(num).collect()
}

/// Starting state of a spin run.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    /// `m = -J`.
    Ground,
    /// Gibbs state at temperature `kB T / hbar omega_S`; may be negative.
    Gibbs(f64),
    /// Populations for `m = -J..=J`.
    Populations(Vec<f64>),
    /// Identity over the dimension.
    Mixed,
}

impl InitialState {
    pub fn parse(v: &str) -> Result<Self> {
        let v = v.trim();
        if v == "ground" {
            return Ok(InitialState::Ground);
        }
        if v == "mixed" {
            return Ok(InitialState::Mixed);
        }
        if let Some(t) = v.strip_prefix("gibbs:") {
            let t: f64 = t
                .trim()
                .parse()
                .map_err(|_| config_err(format!("initial_state: bad temperature `{t}`")))?;
            if !(t.is_finite() && t != 0.0) {
                return Err(config_err("initial_state: Gibbs temperature must be finite and nonzero"));
            }
            return Ok(InitialState::Gibbs(t));
        }
        if let Some(p) = v.strip_prefix("populations:") {
            let p = parse_grid(p).map_err(|m| config_err(format!("initial_state: {m}")))?;
            return Ok(InitialState::Populations(p));
        }
        Err(config_err(format!(
            "initial_state must be `ground`, `mixed`, `gibbs:<T>` or `populations:<p,...>`, got `{v}`"
        )))
    }

    pub fn density_matrix(&self, spin: SpinQuantum) -> Result<DensityMatrix> {
        match self {
            InitialState::Ground => DensityMatrix::pure(spin.dim(), 0),
            InitialState::Mixed => spin_gibbs(spin, 0.0),
            InitialState::Gibbs(t) => spin_gibbs(spin, 1.0 / t),
            InitialState::Populations(p) => {
                if p.len() != spin.dim() {
                    return Err(config_err(format!(
                        "initial_state: {} populations for {} levels",
                        p.len(),
                        spin.dim()
                    )));
                }
                crate::dynamics::PopulationVector::new(p.clone())
                    .map_err(|e| config_err(format!("initial_state: {e}")))?
                    .to_density_matrix()
            }
        }
    }
}

/// Parsed spin-run configuration.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub scenario: SpinScenario,
    pub t_max: f64,
    pub n_samples: usize,
    pub initial_state: InitialState,
    /// False when `initial_state` was left at its default.
    pub initial_state_given: bool,
    pub amplitude_table: Option<PathBuf>,
    pub micro_samples: usize,
    pub quadrature: QuadratureSpec,
}

impl ScenarioConfig {
    pub fn from_map(c: &ConfigMap) -> Result<Self> {
        let spin = SpinQuantum::new(c.real("J", Some(20.0))?).map_err(|e| config_err(format!("J: {e}")))?;
        let equilibrium = c.flag("equilibrium")?;
        let alpha = c.real("alpha", Some(1.0))?;
        let omega_s = c.real("omega_S_over_ER", Some(1.0))?;
        let d = c.real("D", Some(0.0))?;
        let gamma_tilde = match (c.get("gamma_tilde"), c.get("density"), c.get("V0")) {
            (Some(_), None, None) | (None, None, None) => c.real("gamma_tilde", Some(1.0))?,
            (None, Some(_), _) => {
                // Gamma~ = n lambda^3 V0^2 / (2 hbar E_R)
                let n = c.real("density", None)?;
                let v0 = c.real("V0", Some(1.0))?;
                n * (2.0 * std::f64::consts::PI * alpha).powf(1.5) * v0 * v0 / 2.0
            }
            _ => return Err(config_err("give either `gamma_tilde` or `density` (with optional `V0`), not both")),
        };
        let scenario = if equilibrium {
            if c.get("A").is_some() {
                return Err(config_err("`A` is fixed by the gas temperature when `equilibrium = true`"));
            }
            SpinScenario::equilibrium(spin, d, alpha, omega_s, gamma_tilde)
        } else {
            SpinScenario::new(spin, d, c.real("A", None)?, alpha, omega_s, gamma_tilde)
        }
        .map_err(|e| config_err(e.to_string()))?;
        let t_max = c.real("t_max", Some(50.0))?;
        if !(t_max > 0.0) {
            return Err(config_err("t_max must be > 0"));
        }
        let n_samples = c.count("n_samples", 200)?;
        if n_samples < 2 {
            return Err(config_err("n_samples must be at least 2"));
        }
        let initial_state = InitialState::parse(c.get("initial_state").unwrap_or("ground"))?;
        initial_state.density_matrix(spin)?;
        let defaults = QuadratureSpec::default();
        let quadrature = QuadratureSpec::new(
            c.count("radial_nodes", defaults.radial_nodes)?,
            c.count("angular_nodes", defaults.angular_nodes)?,
            c.real("quad_rel_tol", Some(defaults.rel_tol))?,
            defaults.max_subdivisions,
        )
        .map_err(|e| config_err(e.to_string()))?;
        Ok(ScenarioConfig {
            scenario,
            t_max,
            n_samples,
            initial_state,
            initial_state_given: c.get("initial_state").is_some(),
            amplitude_table: c.get("amplitude_table").map(|p| c.base.join(p)),
            micro_samples: c.count("micro_samples", 10_000)?,
            quadrature,
        })
    }

    /// `n_samples` equally spaced times on `[0, t_max]`.
    pub fn time_grid(&self) -> Vec<f64> {
        let n = self.n_samples;
        (0..n).map(|k| self.t_max * k as f64 / (n - 1) as f64).collect()
    }
}

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    pub note: String,
}

/// Summary of a subcommand run.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub outputs: Vec<PathBuf>,
    pub checks: Vec<CheckResult>,
    pub duration: Duration,
}

impl RunReport {
    fn new(command: &str, config: Option<&ConfigMap>) -> Self {
        RunReport {
            command: command.to_string(),
            config: config
                .map(|c| c.entries().map(|(k, v)| (k.to_string(), v.to_string())).collect())
                .unwrap_or_default(),
            outputs: Vec::new(),
            checks: Vec::new(),
            duration: Duration::ZERO,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "command: {}", self.command)?;
        for (k, v) in &self.config {
            writeln!(f, "  {k} = {v}")?;
        }
        for c in &self.checks {
            writeln!(
                f,
                "check {}: {} (value {:e}, threshold {:e}){}",
                c.name,
                if c.pass { "PASS" } else { "FAIL" },
                c.value,
                c.threshold,
                if c.note.is_empty() { String::new() } else { format!(" {}", c.note) }
            )?;
        }
        for p in &self.outputs {
            writeln!(f, "wrote {}", p.display())?;
        }
        write!(f, "elapsed {:.3} s", self.duration.as_secs_f64())
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

/// Writes `alpha,s,I` for every grid pair.
pub fn cmd_integral(alpha_grid: &[f64], s_grid: &[f64], out: &Path) -> Result<RunReport> {
    let start = Instant::now();
    if alpha_grid.is_empty() || s_grid.is_empty() {
        return Err(Error::InvalidArgument("alpha and s grids must be nonempty".into()));
    }
    if let Some(a) = alpha_grid.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::InvalidArgument(format!("alpha must be > 0, got {a}")));
    }
    let pairs: Vec<(f64, f64)> = alpha_grid
        .iter()
        .flat_map(|&a| s_grid.iter().map(move |&s| (a, s)))
        .collect();
    let values: Vec<Result<f64>> = pairs.par_iter().map(|&(a, s)| integral_i(a, s)).collect();
    let mut w = csv_writer(out)?;
    w.write_record(["alpha", "s", "I"])?;
    for (&(a, s), v) in pairs.iter().zip(values) {
        w.write_record([fmt17(a), fmt17(s), fmt17(v?)])?;
    }
    w.flush()?;
    let mut r = RunReport::new("integral", None);
    r.outputs.push(out.to_path_buf());
    r.duration = start.elapsed();
    Ok(r)
}

/// Evolves the spin from the configured initial state and writes
/// `t_gamma,ergotropy_over_hbar_omegaS,E_S,S,Q_dot,clausius_residual`.
///
/// The Clausius residual uses the effective inverse temperature of the gas
/// and is left empty where the state is too close to singular.
pub fn cmd_ergotropy(cfg: &ScenarioConfig, out: &Path) -> Result<RunReport> {
    let start = Instant::now();
    let s = &cfg.scenario;
    let gen = s.generator()?;
    let h_s = s.system_hamiltonian();
    let rho0 = cfg.initial_state.density_matrix(s.spin)?;
    let traj = gen.evolve(&rho0, &cfg.time_grid())?;
    let series = thermo_series(&gen, &h_s, &traj, Some(s.beta_eff()?))?;
    let mut w = csv_writer(out)?;
    w.write_record(["t_gamma", "ergotropy_over_hbar_omegaS", "E_S", "S", "Q_dot", "clausius_residual"])?;
    for x in &series {
        w.write_record([
            fmt17(x.t),
            fmt17(x.ergotropy),
            fmt17(x.energy),
            fmt17(x.entropy),
            fmt17(x.q_dot),
            fmt_opt(x.clausius_residual),
        ])?;
    }
    w.flush()?;
    let mut r = RunReport::new("ergotropy", None);
    r.outputs.push(out.to_path_buf());
    r.duration = start.elapsed();
    Ok(r)
}

fn load_table_model(cfg: &ScenarioConfig, path: &Path) -> Result<crate::scattering::AmplitudeModel> {
    let table = AmplitudeTable::from_path(path)?;
    cfg.scenario.table_model(table)
}

/// Writes `i,j,rate` from the scattering quadrature. Without an amplitude
/// table the Born model of the spin is used and the closed-form rates are
/// added as `analytic_rate,rel_deviation`.
pub fn cmd_rates(cfg: &ScenarioConfig, out: &Path) -> Result<RunReport> {
    let start = Instant::now();
    let s = &cfg.scenario;
    let g = s.gamma_tilde;
    let (quad, analytic) = match &cfg.amplitude_table {
        Some(path) => {
            let model = load_table_model(cfg, path)?;
            let r = crate::rates::rate_matrix(&s.levels()?, &model, &s.environment()?, &cfg.quadrature)?;
            (r, None)
        }
        None => (s.quadrature_rate_matrix(&cfg.quadrature)?, Some(s.analytic_rate_matrix()?)),
    };
    let mut w = csv_writer(out)?;
    let d = quad.dim();
    let mut worst: f64 = 0.0;
    match &analytic {
        Some(a) => {
            w.write_record(["i", "j", "rate", "analytic_rate", "rel_deviation"])?;
            for i in 0..d {
                for j in 0..d {
                    let (q, x) = (quad.rate(i, j), a.rate(i, j));
                    let dev = if x != 0.0 {
                        (q - x).abs() / x.abs()
                    } else if q == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                    worst = worst.max(dev);
                    w.write_record([i.to_string(), j.to_string(), fmt17(q / g), fmt17(x / g), fmt17(dev)])?;
                }
            }
        }
        None => {
            w.write_record(["i", "j", "rate"])?;
            for i in 0..d {
                for j in 0..d {
                    w.write_record([i.to_string(), j.to_string(), fmt17(quad.rate(i, j) / g)])?;
                }
            }
        }
    }
    w.flush()?;
    let mut r = RunReport::new("rates", None);
    if analytic.is_some() {
        r.checks.push(CheckResult {
            name: "quadrature_vs_analytic".into(),
            pass: worst <= 1e-4,
            value: worst,
            threshold: 1e-4,
            note: String::new(),
        });
    }
    r.outputs.push(out.to_path_buf());
    r.duration = start.elapsed();
    Ok(r)
}

/// Runs the consistency checks and writes `check,pass,value,threshold,note`.
///
/// Detailed balance and Gibbs stationarity are tested against the motional
/// temperature of the gas; the Clausius check uses the effective temperature
/// the dynamics relaxes to. A check that cannot be evaluated is reported as
/// failed with the error in its note.
pub fn cmd_verify(cfg: &ScenarioConfig, out: &Path) -> Result<RunReport> {
    let start = Instant::now();
    let s = &cfg.scenario;
    let mut report = RunReport::new("verify", None);
    let fail = |name: &str, e: Error| CheckResult {
        name: name.into(),
        pass: false,
        value: f64::NAN,
        threshold: f64::NAN,
        note: e.to_string(),
    };
    let levels = s.levels()?;
    let model = match &cfg.amplitude_table {
        Some(p) => load_table_model(cfg, p)?,
        None => s.amplitude_model()?,
    };

    report.checks.push(
        match check_microreversibility(&model, cfg.micro_samples.max(1), MICRO_TOL) {
            Ok(m) => CheckResult {
                name: "microreversibility".into(),
                pass: m.pass,
                value: m.max_violation,
                threshold: MICRO_TOL,
                note: match m.worst {
                    Some((ch, p, c)) if !m.pass => format!("worst channel {ch:?} at |p| = {p}, cos = {c}"),
                    _ => String::new(),
                },
            },
            Err(e) => fail("microreversibility", e),
        },
    );

    let rates: Result<RateMatrix> = match &cfg.amplitude_table {
        Some(_) => crate::rates::rate_matrix(&levels, &model, &s.environment()?, &cfg.quadrature),
        None => s.analytic_rate_matrix(),
    };
    let gen: Result<Lindblad> = match (&cfg.amplitude_table, &rates) {
        (None, _) => s.generator(),
        (Some(_), Ok(r)) => {
            let scaled = RateMatrix::new(r.matrix().scale(1.0 / s.gamma_tilde))?;
            Lindblad::new(
                &s.system_hamiltonian().scaled(s.omega_s / s.gamma_tilde),
                &channels_from_rates(&scaled),
            )
        }
        (Some(_), Err(e)) => Err(Error::NumericFailure(e.to_string())),
    };

    report.checks.push(match &rates {
        Ok(r) => match check_local_detailed_balance(r, &levels, s.alpha, DETAILED_BALANCE_TOL) {
            Ok(d) => CheckResult {
                name: "local_detailed_balance".into(),
                pass: d.pass,
                value: d.max_log_violation,
                threshold: DETAILED_BALANCE_TOL,
                note: match (d.one_sided, d.worst_pair) {
                    (Some(p), _) => format!("one-sided pair {p:?}"),
                    (None, Some(p)) if !d.pass => format!("worst pair {p:?}"),
                    _ => String::new(),
                },
            },
            Err(e) => fail("local_detailed_balance", e),
        },
        Err(e) => fail("local_detailed_balance", Error::NumericFailure(e.to_string())),
    });

    report.checks.push(match &gen {
        Ok(g) => match spin_gibbs(s.spin, s.beta_motion()) {
            Ok(gamma) => {
                let n = frobenius_norm(&g.dissipator_action(gamma.matrix()));
                CheckResult {
                    name: "gibbs_stationarity".into(),
                    pass: n <= GIBBS_STATIONARITY_TOL,
                    value: n,
                    threshold: GIBBS_STATIONARITY_TOL,
                    note: String::new(),
                }
            }
            Err(e) => fail("gibbs_stationarity", e),
        },
        Err(e) => fail("gibbs_stationarity", Error::NumericFailure(e.to_string())),
    });

    let clausius = (|| {
        let g = gen.as_ref().map_err(|e| Error::NumericFailure(e.to_string()))?;
        // A pure start has no regular samples when the Gibbs tail drops below the
        // eigenvalue floor, so the default here is the full-support mixed state.
        let start = if cfg.initial_state_given { &cfg.initial_state } else { &InitialState::Mixed };
        let rho0 = start.density_matrix(s.spin)?;
        let traj = g.evolve(&rho0, &cfg.time_grid())?;
        let beta = s.beta_eff()?;
        entropy_production_check(g, &s.system_hamiltonian(), &traj, beta)
    })();
    report.checks.push(match clausius {
        Ok(c) => CheckResult {
            name: "clausius".into(),
            pass: c.pass,
            value: c.min_residual,
            threshold: -1e-8 * c.max_abs_s_dot.max(1.0),
            note: if c.skipped.is_empty() {
                String::new()
            } else {
                format!("{} near-singular samples skipped", c.skipped.len())
            },
        },
        Err(e) => fail("clausius", e),
    });

    let mut w = csv_writer(out)?;
    w.write_record(["check", "pass", "value", "threshold", "note"])?;
    for c in &report.checks {
        w.write_record([
            c.name.clone(),
            c.pass.to_string(),
            fmt17(c.value),
            fmt17(c.threshold),
            c.note.clone(),
        ])?;
    }
    w.flush()?;
    report.outputs.push(out.to_path_buf());
    report.duration = start.elapsed();
    Ok(report)
}

#[derive(Parser, Debug)]
#[command(name = "gas-collide", version, about = "Collisional thermalisation of quantum systems in a gas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct RunArgs {
    /// Key-value config file.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// Repeat the run for each value, e.g. `--sweep D=1,2,3`.
    #[arg(long, value_name = "KEY=V1,V2,...")]
    sweep: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the parameter integral I(alpha, s) over `alpha_grid` x `s_grid`.
    Integral(RunArgs),
    /// Ergotropy and thermodynamic series of the spin.
    Ergotropy(RunArgs),
    /// Rate matrix from the scattering integral.
    Rates(RunArgs),
    /// Micro-reversibility, detailed balance, Gibbs stationarity and Clausius checks.
    Verify(RunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kind {
    Integral,
    Ergotropy,
    Rates,
    Verify,
}

fn run_one(kind: Kind, config: &ConfigMap, out: &Path) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = match kind {
        Kind::Integral => cmd_integral(&config.grid("alpha_grid")?, &config.grid("s_grid")?, out),
        _ => {
            let cfg = ScenarioConfig::from_map(config)?;
            match kind {
                Kind::Ergotropy => cmd_ergotropy(&cfg, out),
                Kind::Rates => cmd_rates(&cfg, out),
                _ => cmd_verify(&cfg, out),
            }
        }
    }?;
    report.config = config.entries().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    report.duration = start.elapsed();
    Ok(report)
}

/// `out.csv` with `[("D", "2")]` becomes `out_D=2.csv`.
fn sweep_path(out: &Path, assignment: &[(String, String)]) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let tag: Vec<String> = assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let name = match out.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{}.{ext}", tag.join("_")),
        None => format!("{stem}_{}", tag.join("_")),
    };
    out.with_file_name(name)
}

fn parse_sweeps(args: &[String]) -> Result<Vec<(String, Vec<String>)>> {
    let mut out: Vec<(String, Vec<String>)> = Vec::new();
    for a in args {
        let (k, vs) = a
            .split_once('=')
            .ok_or_else(|| config_err(format!("--sweep expects KEY=V1,V2,..., got `{a}`")))?;
        let k = k.trim().to_string();
        if !KNOWN_KEYS.contains(&k.as_str()) {
            return Err(config_err(format!("--sweep: unknown key `{k}`")));
        }
        if out.iter().any(|(o, _)| *o == k) {
            return Err(config_err(format!("--sweep: key `{k}` given twice")));
        }
        let vals: Vec<String> = vs.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if vals.is_empty() {
            return Err(config_err(format!("--sweep: no values for `{k}`")));
        }
        out.push((k, vals));
    }
    Ok(out)
}

/// Cartesian product of sweep values in the order given.
fn sweep_points(sweeps: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    let mut points = vec![Vec::new()];
    for (k, vals) in sweeps {
        points = points
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((k.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

/// Concatenates per-run CSVs, prefixing each row with the swept values.
fn merge_sweep(out: &Path, runs: &[(Vec<(String, String)>, PathBuf)]) -> Result<()> {
    let mut w = csv_writer(out)?;
    let mut header_written = false;
    for (assignment, path) in runs {
        let mut rdr = csv::Reader::from_path(path)?;
        if !header_written {
            let mut h: Vec<String> = assignment.iter().map(|(k, _)| k.clone()).collect();
            h.extend(rdr.headers()?.iter().map(str::to_string));
            w.write_record(&h)?;
            header_written = true;
        }
        for rec in rdr.records() {
            let rec = rec?;
            let mut row: Vec<String> = assignment.iter().map(|(_, v)| v.clone()).collect();
            row.extend(rec.iter().map(str::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn execute(kind: Kind, args: &RunArgs) -> Result<Vec<RunReport>> {
    let base = ConfigMap::from_path(&args.config)?;
    let sweeps = parse_sweeps(&args.sweep)?;
    if sweeps.is_empty() {
        return Ok(vec![run_one(kind, &base, &args.out)?]);
    }
    let points = sweep_points(&sweeps);
    let jobs: Vec<(Vec<(String, String)>, ConfigMap, PathBuf)> = points
        .into_iter()
        .map(|p| {
            let mut c = base.clone();
            for (k, v) in &p {
                c.set(k, v)?;
            }
            let path = sweep_path(&args.out, &p);
            Ok((p, c, path))
        })
        .collect::<Result<_>>()?;
    let results: Vec<Result<RunReport>> = jobs.par_iter().map(|(_, c, path)| run_one(kind, c, path)).collect();
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        reports.push(r?);
    }
    let runs: Vec<(Vec<(String, String)>, PathBuf)> = jobs.into_iter().map(|(p, _, path)| (p, path)).collect();
    merge_sweep(&args.out, &runs)?;
    Ok(reports)
}

/// Entry point of the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (kind, args) = match &cli.command {
        Command::Integral(a) => (Kind::Integral, a),
        Command::Ergotropy(a) => (Kind::Ergotropy, a),
        Command::Rates(a) => (Kind::Rates, a),
        Command::Verify(a) => (Kind::Verify, a),
    };
    match execute(kind, args) {
        Ok(reports) => {
            for r in &reports {
                println!("{r}");
            }
            if reports.iter().all(RunReport::all_passed) {
                EXIT_OK
            } else {
                EXIT_CHECK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.trim_start_matches('-').split('e').next().unwrap().replace('.', "");
            assert_eq!(mantissa.len(), 17, "{s}");
        }
    }

    #[test]
    fn config_parsing() {
        let c = ConfigMap::parse("# header\nJ = 2 # spin\nD=1.5\n\nequilibrium = true\n").unwrap();
        assert_eq!(c.get("J"), Some("2"));
        assert_eq!(c.get("D"), Some("1.5"));
        let s = ScenarioConfig::from_map(&c).unwrap();
        assert!(s.scenario.equilibrium);
        assert_eq!(s.scenario.spin.dim(), 5);
        assert!(ConfigMap::parse("J 2").is_err());
        assert!(ConfigMap::parse("J = 1\nJ = 2").is_err());
        assert!(ConfigMap::parse("colour = blue").is_err());
        // A is required out of equilibrium
        assert!(ScenarioConfig::from_map(&ConfigMap::parse("J = 1").unwrap()).is_err());
        assert!(ScenarioConfig::from_map(&ConfigMap::parse("J = 0.7\nequilibrium = true").unwrap()).is_err());
    }

    #[test]
    fn density_sets_gamma_tilde() {
        let c = ConfigMap::parse("equilibrium = true\nalpha = 2\ndensity = 0.5\nV0 = 3").unwrap();
        let s = ScenarioConfig::from_map(&c).unwrap();
        let sc = crate::gas::derived_scales(&s.scenario.environment().unwrap(), &s.scenario.interaction().unwrap());
        // same Gamma~ from the raw gas parameters
        let want = 0.5 * (2.0 * std::f64::consts::PI * 2.0f64).powf(1.5) * 9.0 / 2.0;
        assert!((sc.gamma_tilde - want).abs() < 1e-12 * want);
        assert!(ScenarioConfig::from_map(&ConfigMap::parse("equilibrium = true\ngamma_tilde = 1\ndensity = 1").unwrap()).is_err());
    }

    #[test]
    fn grids_and_initial_states() {
        assert_eq!(parse_grid("1, 2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_grid("linspace(0, 1, 3)").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_grid("1,x").is_err());
        let spin = SpinQuantum::new(0.5).unwrap();
        assert_eq!(InitialState::parse("ground").unwrap(), InitialState::Ground);
        let g = InitialState::parse("gibbs:-2").unwrap().density_matrix(spin).unwrap();
        assert!(g.populations()[1] > g.populations()[0]);
        assert!(InitialState::parse("populations:0.5,0.5").unwrap().density_matrix(spin).is_ok());
        assert!(InitialState::parse("populations:0.5,0.6").unwrap().density_matrix(spin).is_err());
        assert!(InitialState::parse("gibbs:0").is_err());
        assert!(InitialState::parse("excited").is_err());
    }

    #[test]
    fn sweep_helpers() {
        let s = parse_sweeps(&["D=1,2".to_string(), "A=3".to_string()]).unwrap();
        let pts = sweep_points(&s);
        assert_eq!(pts.len(), 2);
        assert_eq!(
            sweep_path(Path::new("/tmp/x/out.csv"), &pts[1]),
            PathBuf::from("/tmp/x/out_D=2_A=3.csv")
        );
        assert!(parse_sweeps(&["bogus=1".to_string()]).is_err());
        assert!(parse_sweeps(&["D".to_string()]).is_err());
    }
}
