//! `qpush`: command-line front end for the q-PushASEP laboratory.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 a checked quantity missed
//! its tolerance (the report is still written).

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use config::Settings;
use output::Format;

#[derive(Parser, Debug)]
#[command(name = "qpush", version, about = "q-PushASEP simulation, exact moments and contour formulas")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON object of settings; flags take precedence over its keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for every random stream
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when absent)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    /// Worker threads (results do not depend on this)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

/// Model parameters. Without `--a` the speeds are all 1.
#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub q: Option<f64>,
    /// Right jump rate R
    #[arg(long)]
    pub right: Option<f64>,
    /// Left jump rate L
    #[arg(long)]
    pub left: Option<f64>,
    /// Speeds a_1,...,a_N
    #[arg(long, value_delimiter = ',')]
    pub a: Option<Vec<f64>>,
    /// Number of particles when --a is not given
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long)]
    pub t: Option<f64>,
}

/// Which moments to compute. Without either flag, every index of level 1.
#[derive(Args, Debug, Clone, Default)]
pub struct IndexArgs {
    /// Multi-index n_1 >= ... >= n_k, comma separated; repeat for several
    #[arg(long = "n")]
    pub n: Vec<String>,
    /// Every index of this level with labels >= 1
    #[arg(long)]
    pub level: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Final positions of independent runs, or the event list of one run
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Initial positions (default: step x_i = -i)
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x0: Option<Vec<i64>>,
        #[arg(long)]
        samples: Option<usize>,
        /// Print every event of run 0 instead of final positions
        #[arg(long)]
        events: bool,
    },
    /// Monte Carlo q-moments
    MomentsMc {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        index: IndexArgs,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x0: Option<Vec<i64>>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// q-moments from the dual ODE
    MomentsExact {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        index: IndexArgs,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x0: Option<Vec<i64>>,
    },
    /// q-moments from the nested contour integrals (step initial data)
    MomentsContour {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        index: IndexArgs,
        /// Initial nodes per circle
        #[arg(long)]
        points: Option<usize>,
        /// Relative change at which node doubling stops
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_points: Option<usize>,
    },
    /// Duality identity, free-evolution conditions and the partial-sum identity
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        /// Random (x, y) pairs for the duality check
        #[arg(long)]
        trials: Option<usize>,
        /// Highest level for the free-evolution conditions (at most 3)
        #[arg(long)]
        level: Option<usize>,
    },
    /// Fredholm determinant for the q-Laplace transform of x_n(t)
    Fredholm {
        #[command(flatten)]
        model: ModelArgs,
        /// Particle label n
        #[arg(long)]
        index: Option<usize>,
        #[arg(long, allow_negative_numbers = true)]
        zeta_re: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        zeta_im: Option<f64>,
        /// Trapezoid nodes on the vertical line
        #[arg(long)]
        mb_points: Option<usize>,
        /// Nystrom nodes on the small circle
        #[arg(long)]
        nystrom_points: Option<usize>,
        /// Also estimate the transform by Monte Carlo with this many runs
        #[arg(long)]
        mc_samples: Option<usize>,
    },
    /// Stationary q-geometric gap law and the gap chain
    Stationary {
        #[command(flatten)]
        model: ModelArgs,
        /// Density parameter, 0 < alpha < R min a
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        truncation: Option<usize>,
        /// Gap-chain samples for a chi-square test (0 skips it)
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        burn_in: Option<f64>,
        #[arg(long)]
        spacing: Option<f64>,
    },
    /// Leftmost-particle moments of the interlacing-array dynamics against the exact values
    Array2d {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        index: IndexArgs,
        #[arg(long)]
        samples: Option<usize>,
        /// Exit 2 when a Monte Carlo moment is more than 4 standard errors off
        #[arg(long)]
        check: bool,
    },
    /// Weak-noise SDE hierarchy, optionally against the rescaled particle system
    Sde {
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        /// Scaled speeds, a_k = exp(-eps * value)
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        a: Option<Vec<f64>>,
        #[arg(long, allow_negative_numbers = true)]
        r: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        l: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        paths: Option<usize>,
        /// G_0 = 0 ("zero") or no level zero ("absent")
        #[arg(long)]
        level_zero: Option<String>,
        /// Drop the exponential interaction terms
        #[arg(long)]
        free: bool,
        /// Also simulate the rescaled particle system (exit 2 when level 1 disagrees)
        #[arg(long)]
        compare: bool,
        /// Also run the dt, dt/2, dt/4 weak-order check
        #[arg(long)]
        richardson: bool,
    },
    /// Run the acceptance criteria
    Acceptance {
        /// Monte Carlo runs per estimate
        #[arg(long)]
        paths: Option<usize>,
        /// Only these criteria, comma separated
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u8>>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::MomentsMc { .. } => "moments-mc",
            Command::MomentsExact { .. } => "moments-exact",
            Command::MomentsContour { .. } => "moments-contour",
            Command::Verify { .. } => "verify",
            Command::Fredholm { .. } => "fredholm",
            Command::Stationary { .. } => "stationary",
            Command::Array2d { .. } => "array2d",
            Command::Sde { .. } => "sde",
            Command::Acceptance { .. } => "acceptance",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
}

impl From<qpush::Error> for CliError {
    fn from(e: qpush::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn run(cli: Cli) -> Result<Option<String>, CliError> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let mut settings = Settings::load(cli.global.config.as_deref())?;
    let name = cli.command.name();
    settings.record("command", &name);
    let seed = settings.get("seed", cli.global.seed, commands::default_seed(&cli.command))?;
    let start = Instant::now();
    let report = commands::dispatch(cli.command, &mut settings, seed)?;
    settings.check_unused()?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut out: Box<dyn Write> = match &cli.global.out {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    output::write(&report, name, &settings, cli.global.format, elapsed, &mut out)?;
    out.flush().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(report.violation)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(v)) => {
            eprintln!("tolerance violation: {v}");
            ExitCode::from(2)
        }
        Err(CliError::Usage(m)) | Err(CliError::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
