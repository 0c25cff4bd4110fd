mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use periodicity::config::SolverConfig;
use periodicity::tensor::TimeFormat;
use periodicity::{Error, ErrorKind, Solver};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  usage or configuration error
  2  input data failed validation
  3  solver budget exhausted without any candidate support
  4  internal numerical failure";

/// Sparse autoregressive periodicity analysis of count time series.
#[derive(Parser, Debug)]
#[command(name = "periodicity", version, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: ConfigArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select one lag support shared by every series.
    Select {
        #[command(flatten)]
        input: InputArgs,
        /// Selection JSON; stdout if omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Search trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Fit every series on a fixed support.
    Fit {
        #[command(flatten)]
        input: InputArgs,
        /// Support JSON: a lag array or a selection document.
        #[arg(long)]
        support: PathBuf,
        /// Coefficients CSV; stdout if omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Periodicity strengths and derived summaries.
    Report(ReportArgs),
    /// Generate a synthetic tensor from a JSON spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        /// Tensor CSV in long format; stdout if omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Ground-truth JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run a seeded recovery study from a JSON grid.
    Study {
        #[arg(long)]
        spec: PathBuf,
        /// Study CSV; stdout if omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Input count table.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Layout::Long)]
    layout: Layout,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Layout {
    /// location, variable, time, count columns
    Long,
    /// time column, optional variable column, one column per location
    Wide,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Coefficients CSV written by `fit`.
    #[arg(long)]
    coefficients: Option<PathBuf>,
    /// Strength CSV; stdout if omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Per-variable aggregate CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Strength difference B - A between two variables.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    diff: Option<Vec<String>>,
    #[arg(long, requires = "diff")]
    diff_out: Option<PathBuf>,
    /// Count table used by --weekly-profile, --scatter and --daily.
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Layout::Long)]
    layout: Layout,
    /// Average weekly profile and volume relative to --baseline.
    #[arg(long, requires = "input")]
    weekly_profile: bool,
    #[arg(long)]
    profile_out: Option<PathBuf>,
    #[arg(long)]
    recovery_out: Option<PathBuf>,
    /// Lag scatter pairs for one series.
    #[arg(long, num_args = 3, value_names = ["LOCATION", "VARIABLE", "LAG"], requires = "input")]
    scatter: Option<Vec<String>>,
    #[arg(long)]
    scatter_out: Option<PathBuf>,
    /// Mean daily totals per series.
    #[arg(long, requires = "input")]
    daily: Option<PathBuf>,
}

/// Settings shared by all commands. Flags override the config file, which
/// overrides built-in defaults.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Maximum lag d.
    #[arg(long, global = true)]
    order: Option<usize>,
    /// Maximum support size.
    #[arg(long, global = true)]
    sparsity: Option<usize>,
    #[arg(long, global = true, value_parser = parse_solver)]
    solver: Option<Solver>,
    #[arg(long, global = true)]
    target_lag: Option<usize>,
    /// Comma-separated strength thresholds.
    #[arg(long, global = true, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long, global = true)]
    baseline: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Order identifiers lexicographically instead of by first appearance.
    #[arg(long, global = true)]
    sort_ids: bool,
    #[arg(long, global = true)]
    node_budget: Option<u64>,
    #[arg(long, global = true)]
    swap_rounds: Option<usize>,
    /// Time step width, e.g. 1h or 30min.
    #[arg(long, global = true)]
    resolution: Option<String>,
    /// First valid time index.
    #[arg(long, global = true)]
    time_base: Option<i64>,
    /// Parse the time column as ISO-8601 timestamps.
    #[arg(long, global = true)]
    timestamps: bool,
    /// Zero-fill series that end early instead of rejecting them.
    #[arg(long, global = true)]
    fill_trailing: bool,
}

fn parse_solver(s: &str) -> Result<Solver, String> {
    match s {
        "exact" => Ok(Solver::Exact),
        "greedy" => Ok(Solver::Greedy),
        _ => Err(format!("unknown solver `{s}` (expected exact or greedy)")),
    }
}

impl ConfigArgs {
    fn resolve(&self) -> periodicity::Result<SolverConfig> {
        let mut c = match &self.config {
            Some(p) => SolverConfig::from_json_path(p)?,
            None => SolverConfig::default(),
        };
        if let Some(v) = self.order {
            c.order = v;
        }
        if let Some(v) = self.sparsity {
            c.sparsity = v;
        }
        if let Some(v) = self.solver {
            c.solver = v;
        }
        if let Some(v) = self.target_lag {
            c.target_lag = v;
        }
        if let Some(v) = &self.thresholds {
            c.thresholds = v.clone();
        }
        if let Some(v) = &self.baseline {
            c.baseline = Some(v.clone());
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.threads {
            c.threads = v;
        }
        if self.sort_ids {
            c.sort_ids = true;
        }
        if let Some(v) = self.node_budget {
            c.node_budget = v;
        }
        if let Some(v) = self.swap_rounds {
            c.swap_rounds = v;
        }
        if let Some(v) = &self.resolution {
            c.resolution = v.clone();
        }
        if let Some(v) = self.time_base {
            c.time_base = v;
        }
        if self.timestamps {
            c.time_format = TimeFormat::Timestamp;
        }
        if self.fill_trailing {
            c.fill_trailing = true;
        }
        c.validate()?;
        Ok(c)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Usage => 1,
        ErrorKind::Validation => 2,
        ErrorKind::Budget => 3,
        ErrorKind::Internal => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> periodicity::Result<()> {
    let config = cli.opts.resolve()?;
    if config.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure threads: {e}")))?;
    }
    match cli.command {
        Command::Select { input, out, trace } => {
            commands::select(&config, &input.input, input.layout, out.as_deref(), trace.as_deref())
        }
        Command::Fit { input, support, out } => {
            commands::fit(&config, &input.input, input.layout, &support, out.as_deref())
        }
        Command::Report(args) => commands::report(&config, &args),
        Command::Synth { spec, out, truth } => {
            commands::synth(&config, &spec, cli.opts.seed, out.as_deref(), truth.as_deref())
        }
        Command::Study { spec, out } => commands::study(&spec, out.as_deref()),
    }
}
