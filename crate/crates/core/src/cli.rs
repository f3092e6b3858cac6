//! Command-line frontend.
//!
//! Every subcommand takes a scenario: the name of a builtin (`linear`,
//! `pendulum`) or the path of a scenario file. An existing file wins over a
//! builtin of the same name. Summaries go to stdout as `key = value` lines
//! and artifacts are written under `--out`.
//!
//! Exit codes: 0 success, 1 structural-check failure, 2 synthesis, solver
//! or output error, 64 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::dsl::ScenarioSpec;
use crate::model::{linearize, structure_report_with, ChainConfig, ModelError, SystemModel};
use crate::mpr::{mpr_run, MprConfig, MprError, MprRun};
use crate::regulation::{solve_francis_linear, write_matrix};
use crate::sim::{builtin, fmt_num, rollout_polynomial, steady_state_metrics, Trajectory};
use crate::terminal::{estimate_lyapunov_region, synthesize, RegionConfig, TerminalError, TerminalLaw};

pub const EXIT_OK: i32 = 0;
pub const EXIT_STRUCTURAL: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable overriding the default seed.
pub const SEED_ENV: &str = "MPRLAB_SEED";

/// Jet degree used for every model built by the CLI.
const JET_CAP: usize = 4;

#[derive(Debug, Parser)]
#[command(
    name = "mprlab",
    version,
    about = "Model predictive regulation of nonlinear SISO plants"
)]
struct Cli {
    /// Directory for written artifacts.
    #[arg(long, global = true, default_value = "mprlab-out")]
    out: PathBuf,
    /// Seed for sampled checks (default: $MPRLAB_SEED, else 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Controller {
    /// Quadratic cost, linear feedback.
    Linear,
    /// Quartic cost, cubic feedback.
    Cubic,
}

impl Controller {
    fn cost_degree(self) -> usize {
        match self {
            Controller::Linear => 2,
            Controller::Cubic => 4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Controller::Linear => "linear",
            Controller::Cubic => "cubic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Demo {
    Linear,
    Pendulum,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Relative degree, poles, zeros and the structural flags.
    Check { scenario: String },
    /// Synthesize the terminal cost and feedback.
    Synth {
        scenario: String,
        /// Cost degree (feedback degree is one less); default from the scenario.
        #[arg(long)]
        degree: Option<usize>,
    },
    /// Closed loop under a polynomial feedback law.
    Simulate {
        scenario: String,
        #[arg(long, value_enum, default_value_t = Controller::Cubic)]
        controller: Controller,
        #[arg(long)]
        steps: Option<usize>,
        /// Initial state, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        /// Initial exosystem state, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        w0: Option<Vec<f64>>,
    },
    /// Receding-horizon regulation.
    Mpr {
        scenario: String,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        terminal_degree: Option<usize>,
        /// Control bound `|u| <= U`, or `none`.
        #[arg(long, allow_hyphen_values = true)]
        umax: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Terminal-set level `c*`, or `auto` for the sampled estimate.
        #[arg(long, allow_hyphen_values = true)]
        terminal_level: Option<String>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        w0: Option<Vec<f64>>,
    },
    /// Reproduce a builtin experiment end to end.
    Demo {
        #[arg(value_enum)]
        which: Demo,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Structural(String),
    Failure(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Structural(_) => EXIT_STRUCTURAL,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Structural(m) | CliError::Failure(m) => m,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Structural(e.to_string())
    }
}

impl From<TerminalError> for CliError {
    fn from(e: TerminalError) -> Self {
        match e {
            TerminalError::Structural(_) | TerminalError::Model(_) => CliError::Structural(e.to_string()),
            other => CliError::Failure(other.to_string()),
        }
    }
}

impl From<MprError> for CliError {
    fn from(e: MprError) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(format!("io: {e}"))
    }
}

/// Runs the command line `args` (program name first), printing summaries to
/// `stdout` and errors to stderr. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("mprlab: {}", e.message());
            e.code()
        }
    }
}

fn seed(cli: &Cli) -> Result<u64, CliError> {
    if let Some(s) = cli.seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

/// Builtin name or scenario file.
fn load_scenario(name: &str) -> Result<ScenarioSpec, CliError> {
    let path = Path::new(name);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {name}: {e}")))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(name);
        return ScenarioSpec::parse(stem, &text).map_err(|e| CliError::Usage(e.to_string()));
    }
    builtin(name).ok_or_else(|| {
        CliError::Usage(format!(
            "`{name}` is neither a scenario file nor a builtin (linear, pendulum)"
        ))
    })
}

fn build_model(spec: &ScenarioSpec) -> Result<SystemModel, CliError> {
    Ok(SystemModel::from_scenario(spec, JET_CAP)?)
}

fn check_len(what: &str, v: &[f64], want: usize) -> Result<(), CliError> {
    if v.len() == want {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} has {} entries, the scenario needs {want}",
            v.len()
        )))
    }
}

fn initial_state(
    spec: &ScenarioSpec,
    x0: &Option<Vec<f64>>,
    w0: &Option<Vec<f64>>,
) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let x = x0.clone().unwrap_or_else(|| spec.x0.clone());
    let w = w0.clone().unwrap_or_else(|| spec.w0.clone());
    check_len("--x0", &x, spec.dims.n)?;
    check_len("--w0", &w, spec.dims.k)?;
    Ok((x, w))
}

/// Second half of a run of `steps` steps.
fn metric_window(steps: usize) -> Range<usize> {
    steps / 2..steps
}

fn write_artifact(dir: &Path, name: &str, body: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, body)?;
    Ok(path)
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    stdout.write_all(text.as_bytes())?;
    Ok(())
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let seed = seed(cli)?;
    match &cli.command {
        Command::Check { scenario } => check(cli, seed, scenario, stdout),
        Command::Synth { scenario, degree } => {
            let spec = load_scenario(scenario)?;
            let m = build_model(&spec)?;
            let degree = degree.unwrap_or(spec.mpr.degree);
            let law = synthesize_with_level(&m, degree, seed)?;
            let path = write_artifact(
                &cli.out,
                &format!("{}_law_d{degree}.txt", spec.name),
                &law.to_debug_string(),
            )?;
            emit(stdout, &law.summary())?;
            emit(stdout, &format!("law_file = {}\n", path.display()))?;
            Ok(EXIT_OK)
        }
        Command::Simulate {
            scenario,
            controller,
            steps,
            x0,
            w0,
        } => {
            let spec = load_scenario(scenario)?;
            let m = build_model(&spec)?;
            let (x0, w0) = initial_state(&spec, x0, w0)?;
            let steps = steps.unwrap_or(spec.mpr.steps);
            let law = synthesize(&m, controller.cost_degree())?;
            let tr = rollout_polynomial(&m, &law, &x0, &w0, steps);
            let stem = format!("{}_simulate_{}", spec.name, controller.name());
            let summary = run_summary(&tr, steps);
            write_artifact(&cli.out, &format!("{stem}.csv"), &tr.to_csv())?;
            let path = write_artifact(&cli.out, &format!("{stem}_metrics.txt"), &summary)?;
            emit(stdout, &summary)?;
            emit(stdout, &format!("metrics_file = {}\n", path.display()))?;
            Ok(EXIT_OK)
        }
        Command::Mpr {
            scenario,
            horizon,
            terminal_degree,
            umax,
            steps,
            max_iter,
            terminal_level,
            x0,
            w0,
        } => {
            let spec = load_scenario(scenario)?;
            let m = build_model(&spec)?;
            let (x0, w0) = initial_state(&spec, x0, w0)?;
            let mut settings = spec.mpr.clone();
            if let Some(h) = horizon {
                settings.horizon = *h;
            }
            if let Some(d) = terminal_degree {
                settings.degree = *d;
            }
            if let Some(u) = umax {
                settings.umax = parse_umax(u)?;
            }
            if let Some(s) = steps {
                settings.steps = *s;
            }
            if let Some(i) = max_iter {
                settings.max_iter = *i;
            }
            let law = synthesize(&m, settings.degree)?;
            let level = match terminal_level.as_deref() {
                None => None,
                Some("auto") => Some(estimate_level(&m, &law, seed)?),
                Some(v) => Some(v.parse::<f64>().ok().filter(|c| *c > 0.0).ok_or_else(|| {
                    CliError::Usage(format!("--terminal-level must be positive or `auto`, got `{v}`"))
                })?),
            };
            let mut cfg = MprConfig::from_settings(&settings, law);
            cfg.terminal_level = level;
            let run = mpr_run(&m, &cfg, &x0, &w0, settings.steps)?;
            let stem = format!("{}_mpr_T{}_d{}", spec.name, settings.horizon, settings.degree);
            let summary = mpr_summary(&run, &cfg, settings.steps);
            write_artifact(&cli.out, &format!("{stem}.csv"), &run.trajectory.to_csv())?;
            write_artifact(&cli.out, &format!("{stem}_diagnostics.csv"), &run.diagnostics_csv())?;
            let path = write_artifact(&cli.out, &format!("{stem}_metrics.txt"), &summary)?;
            emit(stdout, &summary)?;
            emit(stdout, &format!("metrics_file = {}\n", path.display()))?;
            Ok(EXIT_OK)
        }
        Command::Demo { which: Demo::Linear } => demo_linear(cli, seed, stdout),
        Command::Demo { which: Demo::Pendulum } => demo_pendulum(cli, seed, stdout),
    }
}

fn parse_umax(v: &str) -> Result<Option<f64>, CliError> {
    if v == "none" {
        return Ok(None);
    }
    match v.parse::<f64>() {
        Ok(u) if u > 0.0 && u.is_finite() => Ok(Some(u)),
        _ => Err(CliError::Usage(format!("--umax must be positive or `none`, got `{v}`"))),
    }
}

fn check(cli: &Cli, seed: u64, scenario: &str, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let spec = load_scenario(scenario)?;
    let m = build_model(&spec)?;
    let cfg = ChainConfig {
        seed,
        ..ChainConfig::default()
    };
    let report = structure_report_with(&m, &cfg)?;
    let mut body = report.to_kv();
    let _ = writeln!(body, "all_ok = {}", report.all_ok());
    write_artifact(&cli.out, &format!("{}_structure.txt", spec.name), &body)?;
    emit(stdout, &body)?;
    if report.all_ok() {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "mprlab: model: structural check failed: {}",
            report.failures().join(", ")
        );
        Ok(EXIT_STRUCTURAL)
    }
}

fn estimate_level(m: &SystemModel, law: &TerminalLaw, seed: u64) -> Result<f64, CliError> {
    let cfg = RegionConfig {
        seed,
        ..RegionConfig::default()
    };
    Ok(estimate_lyapunov_region(m, law, &cfg)?.c_star)
}

fn synthesize_with_level(m: &SystemModel, degree: usize, seed: u64) -> Result<TerminalLaw, CliError> {
    let mut law = synthesize(m, degree)?;
    law.level = Some(estimate_level(m, &law, seed)?);
    Ok(law)
}

/// Divergence record plus tracking metrics over the second half.
fn run_summary(tr: &Trajectory, steps: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "steps = {steps}");
    let _ = writeln!(s, "diverged = {}", tr.diverged());
    let _ = writeln!(
        s,
        "diverged_at = {}",
        tr.diverged_at.map_or("none".into(), |t| t.to_string())
    );
    let window = metric_window(steps);
    let _ = writeln!(s, "window = {}..{}", window.start, window.end);
    match steady_state_metrics(tr, window) {
        Ok(mt) => s.push_str(&mt.to_kv()),
        Err(e) => {
            let _ = writeln!(s, "steady_state_avg_error = none");
            let _ = writeln!(s, "metrics_error = {e}");
        }
    }
    s
}

fn mpr_summary(run: &MprRun, cfg: &MprConfig, steps: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "horizon = {}", cfg.horizon);
    let _ = writeln!(s, "terminal_degree = {}", cfg.terminal.cost_degree);
    let _ = writeln!(
        s,
        "u_box = {}",
        cfg.u_box
            .map_or("none".into(), |(lo, hi)| format!("{}, {}", fmt_num(lo), fmt_num(hi)))
    );
    let _ = writeln!(
        s,
        "terminal_level = {}",
        cfg.terminal_level.map_or("none".into(), fmt_num)
    );
    let iterations: usize = run.diagnostics.iter().map(|d| d.iterations).sum();
    let _ = writeln!(s, "solver_iterations = {iterations}");
    let _ = writeln!(
        s,
        "restarts = {}",
        run.diagnostics.iter().filter(|d| d.restarted).count()
    );
    let _ = writeln!(
        s,
        "terminal_violations = {}",
        run.diagnostics.iter().filter(|d| !d.terminal_ok).count()
    );
    s.push_str(&run_summary(&run.trajectory, steps));
    s
}

fn demo_linear(cli: &Cli, seed: u64, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let spec = builtin("linear").expect("builtin exists");
    let m = build_model(&spec)?;
    let (t, l) = solve_francis_linear(&linearize(&m)).map_err(|e| CliError::Failure(e.to_string()))?;
    let law = synthesize_with_level(&m, 2, seed)?;
    let mut s = String::new();
    write_matrix(&mut s, "T", &t);
    write_matrix(&mut s, "L", &l);
    write_matrix(&mut s, "P", &law.riccati.p);
    write_matrix(&mut s, "K", &law.riccati.k);
    let _ = writeln!(s, "[piT]");
    let _ = write!(s, "{}", law.pi_t);
    let _ = writeln!(s, "[kappaT]");
    let _ = write!(s, "{}", law.kappa_t);
    let tr = rollout_polynomial(&m, &law, &spec.x0, &spec.w0, spec.mpr.steps);
    write_artifact(&cli.out, "linear_demo.txt", &s)?;
    write_artifact(&cli.out, "linear_demo.csv", &tr.to_csv())?;
    emit(stdout, &s)?;
    emit(stdout, &run_summary(&tr, spec.mpr.steps))?;
    Ok(EXIT_OK)
}

/// Polynomial laws from the nominal and two larger offsets, then MPR with
/// and without the control bound.
fn demo_pendulum(cli: &Cli, seed: u64, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let spec = builtin("pendulum").expect("builtin exists");
    let m = build_model(&spec)?;
    let steps = spec.mpr.steps;
    let w0 = spec.w0.clone();
    let mut summary = String::new();
    let mut laws = Vec::new();
    for controller in [Controller::Linear, Controller::Cubic] {
        let law = synthesize_with_level(&m, controller.cost_degree(), seed)?;
        for x0 in [spec.x0.clone(), vec![1.5, 0.0], vec![2.0, 0.0]] {
            let tr = rollout_polynomial(&m, &law, &x0, &w0, steps);
            let tag = format!("{}_x{}", controller.name(), x0[0]);
            write_artifact(&cli.out, &format!("pendulum_{tag}.csv"), &tr.to_csv())?;
            let _ = writeln!(summary, "[{tag}]");
            summary.push_str(&run_summary(&tr, steps));
        }
        laws.push(law);
    }
    let cubic = laws.pop().expect("two laws");
    for umax in [None, Some(2.0)] {
        let mut settings = spec.mpr.clone();
        settings.umax = umax;
        let cfg = MprConfig::from_settings(&settings, cubic.clone());
        let x0 = [2.0, 0.0];
        let run = mpr_run(&m, &cfg, &x0, &w0, steps)?;
        let tag = match umax {
            None => "mpr_x2".to_string(),
            Some(u) => format!("mpr_x2_umax{u}"),
        };
        write_artifact(&cli.out, &format!("pendulum_{tag}.csv"), &run.trajectory.to_csv())?;
        write_artifact(
            &cli.out,
            &format!("pendulum_{tag}_diagnostics.csv"),
            &run.diagnostics_csv(),
        )?;
        let _ = writeln!(summary, "[{tag}]");
        summary.push_str(&mpr_summary(&run, &cfg, steps));
    }
    write_artifact(&cli.out, "pendulum_demo.txt", &summary)?;
    emit(stdout, &summary)?;
    Ok(EXIT_OK)
}
