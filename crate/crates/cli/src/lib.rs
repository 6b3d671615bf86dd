//! Command-line front end: configuration files, synthetic data, studies and
//! CSV/report output around `fracwave-core`.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure (including divergence and non-convergence), 4 consistency
//! violation of the measurement.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fracwave_core::inverse::NoiseMode;

pub mod commands;
pub mod config;
pub mod io;

pub use commands::Ctx;
pub use config::{parse_config, Config, ConfigError, QSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CONSISTENCY: i32 = 4;

/// Bad command-line values that clap cannot check on its own.
#[derive(Debug, Clone)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// The iteration budget ran out before the tolerance was met.
#[derive(Debug, Clone)]
pub struct NotConverged(pub String);

impl fmt::Display for NotConverged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "not converged: {}", self.0)
    }
}

impl std::error::Error for NotConverged {}

#[derive(Debug, Parser)]
#[command(name = "fracwave", version, about = "Direct and inverse solvers for a Caputo diffusion-wave equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Accept observation functionals whose weights are not square-summable
    /// (point evaluation).
    #[arg(long, global = true)]
    pub allow_non_l2: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the two-parameter Mittag-Leffler function.
    Mlf(MlfArgs),
    /// Forward problem.
    Direct {
        #[command(subcommand)]
        action: DirectAction,
    },
    /// Generate a measurement mu(t) from [study] q_true on a refined grid.
    Synthesize(SynthArgs),
    /// Recover q(t) from a measurement by fixed-point iteration.
    Recover(RecoverArgs),
    /// Convergence, contraction and stability studies.
    Study {
        #[command(subcommand)]
        study: StudyKind,
    },
}

#[derive(Debug, Args)]
pub struct MlfArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub beta: f64,
    #[arg(long, allow_negative_numbers = true, required_unless_present = "table", conflicts_with = "table")]
    pub z: Option<f64>,
    /// Evenly spaced arguments from ZMIN to ZMAX.
    #[arg(long, num_args = 3, value_names = ["ZMIN", "ZMAX", "N"], allow_negative_numbers = true)]
    pub table: Option<Vec<String>>,
    /// Space the table logarithmically in |z|.
    #[arg(long, requires = "table")]
    pub log: bool,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DirectAction {
    /// Solve for all modes; writes PREFIX_modes.csv, PREFIX_norms.csv, PREFIX_report.txt.
    Solve(DirectSolveArgs),
}

#[derive(Debug, Args)]
pub struct DirectSolveArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// CSV `t,q` on the config grid; overrides [problem] q.
    #[arg(long)]
    pub q_file: Option<PathBuf>,
    /// Per-step Picard iteration instead of the implicit step.
    #[arg(long)]
    pub picard: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Fine-grid factor (>= 2); defaults to [study] refine.
    #[arg(long)]
    pub refine: Option<usize>,
    /// Writes PREFIX_mu.csv and PREFIX_report.txt.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// CSV `t,mu` on the config grid.
    #[arg(long)]
    pub measurement: PathBuf,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Relaxation factor in (0, 1].
    #[arg(long)]
    pub relax: Option<f64>,
    /// Moving-average window applied to mu before differentiation.
    #[arg(long)]
    pub presmooth: Option<usize>,
    /// mu'(0); overrides a `# mu_prime_0 = ...` line in the measurement file.
    #[arg(long, allow_negative_numbers = true)]
    pub mu_prime_0: Option<f64>,
    /// Continue even if mu(0), mu'(0) disagree with the initial data.
    #[arg(long)]
    pub skip_consistency: bool,
    /// Writes PREFIX_q.csv, PREFIX_trace.csv and PREFIX_report.txt.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum StudyKind {
    /// Refinement study of mu and of the fixed-point defect.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        /// Grid sizes, each dividing the next.
        #[arg(long, num_args = 2..)]
        levels: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measured contraction ratio of the fixed-point map against T.
    Contraction {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, num_args = 1..)]
        horizons: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recovery error under perturbed measurements.
    Stability {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, num_args = 1..)]
        deltas: Option<Vec<f64>>,
        /// smooth-sine or seeded-uniform
        #[arg(long)]
        noise: Option<NoiseMode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn report_path(&self) -> Option<PathBuf> {
        let prefix: &Path = match self {
            Command::Mlf(_) => return None,
            Command::Direct {
                action: DirectAction::Solve(a),
            } => &a.out,
            Command::Synthesize(a) => &a.out,
            Command::Recover(a) => &a.out,
            Command::Study { study } => match study {
                StudyKind::Convergence { out, .. }
                | StudyKind::Contraction { out, .. }
                | StudyKind::Stability { out, .. } => out,
            },
        };
        Some(io::prefixed(prefix, "report.txt"))
    }
}

/// Outcome of one invocation.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub exit_code: i32,
    pub outputs: Vec<PathBuf>,
    /// Wall-clock seconds per phase.
    pub timings: Vec<(String, f64)>,
    pub error: Option<String>,
}

/// Maps an error chain onto the documented exit codes.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use fracwave_core::Error as E;
    fn core_code(e: &E) -> i32 {
        match e {
            E::Consistency(_) => EXIT_CONSISTENCY,
            E::Mode { source, .. } => core_code(source),
            e if e.is_numerical() => EXIT_NUMERICAL,
            E::Io(_) => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        }
    }
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<UsageError>() {
            return EXIT_CONFIG;
        }
        if cause.is::<NotConverged>() {
            return EXIT_NUMERICAL;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return core_code(e);
        }
    }
    EXIT_NUMERICAL
}

fn dispatch(cli: &Cli, ctx: &mut Ctx) -> anyhow::Result<()> {
    let allow_non_l2 = cli.allow_non_l2;
    match &cli.command {
        Command::Mlf(a) => {
            let points = commands::mlf_points(a.z, a.table.as_deref(), a.log)?;
            let body = commands::mlf_table(&commands::MlfRequest {
                alpha: a.alpha,
                beta: a.beta,
                points,
            })?;
            commands::stdout_or_file(ctx, a.out.as_deref(), &body)
        }
        Command::Direct {
            action: DirectAction::Solve(a),
        } => commands::direct_solve(
            ctx,
            &commands::DirectRequest {
                config: &a.config,
                q_file: a.q_file.as_deref(),
                picard: a.picard,
                out: &a.out,
                allow_non_l2,
            },
        ),
        Command::Synthesize(a) => commands::synthesize(
            ctx,
            &commands::SynthRequest {
                config: &a.config,
                refine: a.refine,
                out: &a.out,
                allow_non_l2,
            },
        ),
        Command::Recover(a) => commands::recover(
            ctx,
            &commands::RecoverRequest {
                config: &a.config,
                measurement: &a.measurement,
                tol: a.tol,
                max_iter: a.max_iter,
                relax: a.relax,
                presmooth: a.presmooth,
                mu_prime_0: a.mu_prime_0,
                skip_consistency: a.skip_consistency,
                out: &a.out,
                allow_non_l2,
            },
        ),
        Command::Study { study } => match study {
            StudyKind::Convergence { config, levels, out } => commands::study_convergence(
                ctx,
                &commands::ConvergenceRequest {
                    config,
                    levels: levels.clone(),
                    out,
                    allow_non_l2,
                },
            ),
            StudyKind::Contraction { config, horizons, out } => commands::study_contraction(
                ctx,
                &commands::ContractionRequest {
                    config,
                    horizons: horizons.clone(),
                    out,
                    allow_non_l2,
                },
            ),
            StudyKind::Stability {
                config,
                deltas,
                noise,
                seed,
                out,
            } => commands::study_stability(
                ctx,
                &commands::StabilityRequest {
                    config,
                    deltas: deltas.clone(),
                    noise: *noise,
                    seed: *seed,
                    out,
                    allow_non_l2,
                },
            ),
        },
    }
}

/// Runs one parsed invocation. Errors never escape: they are classified into
/// an exit code and, for commands with an output prefix, written to the report.
pub fn run(cli: &Cli) -> RunResult {
    let mut ctx = Ctx::default();
    let outcome = dispatch(cli, &mut ctx);
    let (mut exit_code, mut error) = match &outcome {
        Ok(()) => (EXIT_OK, None),
        Err(e) => (exit_code(e), Some(format!("{e:#}"))),
    };
    if let Some(path) = cli.command.report_path() {
        let mut report = io::Report::default();
        report.set("status", if exit_code == EXIT_OK { "ok" } else { "error" });
        report.set("exit_code", exit_code);
        if let Some(e) = &error {
            report.set("error", e);
        }
        let mut body = report.render();
        body.push_str(&ctx.report.render());
        for (phase, secs) in &ctx.timings {
            body.push_str(&format!("time_{phase}_s: {secs:.6}\n"));
        }
        match io::write_file(&path, &body) {
            Ok(p) => ctx.outputs.push(p),
            Err(e) if exit_code == EXIT_OK => {
                exit_code = EXIT_NUMERICAL;
                error = Some(format!("{e:#}"));
            }
            Err(_) => {}
        }
    }
    RunResult {
        exit_code,
        outputs: ctx.outputs,
        timings: ctx.timings,
        error,
    }
}

/// Parses `args` (program name first) and runs; clap usage errors map to 2.
pub fn run_args<I, T>(args: I) -> RunResult
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            RunResult {
                exit_code: code,
                outputs: Vec::new(),
                timings: Vec::new(),
                error: Some(e.to_string()),
            }
        }
    }
}
