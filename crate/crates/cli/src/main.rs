use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Args, Parser, Subcommand};

use platalloc::simulator::Trend;
use platalloc::solver::CountTable;
use platalloc_cli::api::{
    self, AllocationSource, ApiError, ApiResult, CaseKind, CurveRequest, ErrorKind, Mode, Rounding, SimulateRequest,
    SolveRequest, Strategy, TablesRequest, DEFAULT_SEED,
};
use platalloc_cli::render::{Document, Format};

const AFTER_HELP: &str = "\
Settings are taken from command-line flags first, then from PLATALLOC_* environment \
variables (for example PLATALLOC_SEED or PLATALLOC_MODE), then from built-in defaults.

Exit codes: 0 on success, 2 for an invalid request, 3 when the computation fails. \
Errors are written to standard error as JSON.";

/// Optimal allocation and simulation for three-period platform trials with a
/// shared control.
#[derive(Debug, Parser)]
#[command(name = "platalloc", version, after_help = AFTER_HELP)]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, env = "PLATALLOC_FORMAT", default_value = "json")]
    format: Format,
    /// Master seed of simulations that do not set their own.
    #[arg(long, global = true, env = "PLATALLOC_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Write the output to this file instead of standard output.
    #[arg(long, global = true, env = "PLATALLOC_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal allocation proportions and variances for one design.
    Solve(SolveRequest),
    /// Optimal period-2 allocation over a grid of r2 values.
    Curve(CurveRequest),
    /// Integer sample-size tables for the one-to-one, sqrt-k and optimal rules.
    Tables(TablesRequest),
    /// Monte Carlo power, type 1 error and CI width of a design.
    Simulate(Box<SimulateArgs>),
    /// Serve GET /solve, /curve, /tables and POST /simulate over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON file holding a complete simulation request; replaces the flags below.
    #[arg(long)]
    request: Option<PathBuf>,
    /// Explicit counts as "control;arm1;arm2", each three comma-separated period counts.
    #[arg(long)]
    counts: Option<String>,
    /// Design whose rounded sample-size table is simulated (when --counts is absent).
    #[arg(long, value_enum, default_value = "unrestricted")]
    case: CaseKind,
    #[arg(long)]
    r1: Option<f64>,
    #[arg(long)]
    r2: Option<f64>,
    /// Analysis under which the simulated design is solved.
    #[arg(long, value_enum, default_value = "cc")]
    design_mode: Mode,
    /// Total sample size of the solved design.
    #[arg(long, env = "PLATALLOC_N")]
    n: Option<u64>,
    #[arg(long, value_enum, default_value = "optimal")]
    strategy: Strategy,
    #[arg(long, value_enum, default_value = "nearest")]
    rounding: Rounding,
    /// Control mean.
    #[arg(long, default_value_t = 0.0)]
    mu0: f64,
    /// True effects of arms 1 and 2, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1, default_value = "0,0")]
    theta: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Time trend: "none", "linear:SLOPE" or "step:S1,S2,S3".
    #[arg(long, default_value = "none", value_parser = parse_trend)]
    trend: Trend,
    /// One-sided significance level.
    #[arg(long, default_value_t = 0.025)]
    alpha: f64,
    /// Analysis of arm 2.
    #[arg(long, value_enum, env = "PLATALLOC_MODE", default_value = "cc")]
    mode: Mode,
    /// Test with the true SD and normal quantiles.
    #[arg(long)]
    known_sigma: bool,
    /// Confidence level of the reported intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, env = "PLATALLOC_REPS", default_value_t = api::default_reps())]
    reps: u64,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "PLATALLOC_HOST", default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, env = "PLATALLOC_PORT", default_value_t = 8080)]
    port: u16,
}

fn parse_numbers<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',').map(|x| x.trim().parse::<T>().map_err(|_| format!("cannot parse {x:?} as a number"))).collect()
}

fn parse_trend(s: &str) -> Result<Trend, String> {
    let (kind, args) = s.split_once(':').unwrap_or((s, ""));
    match kind {
        "none" if args.is_empty() => Ok(Trend::None),
        "linear" => Ok(Trend::Linear { slope: args.parse().map_err(|_| format!("bad slope {args:?}"))? }),
        "step" => {
            let shifts: [f64; 3] =
                parse_numbers(args)?.try_into().map_err(|_| "step needs three shifts".to_string())?;
            Ok(Trend::Step { shifts })
        }
        _ => Err(format!("unknown trend {s:?}; use none, linear:SLOPE or step:S1,S2,S3")),
    }
}

fn parse_counts(s: &str) -> ApiResult<CountTable> {
    let rows: Vec<[u64; 3]> = s
        .split(';')
        .map(|row| parse_numbers::<u64>(row)?.try_into().map_err(|_| format!("row {row:?} needs three counts")))
        .collect::<Result<_, String>>()
        .map_err(ApiError::invalid)?;
    let rows: [[u64; 3]; 3] = rows.try_into().map_err(|_| ApiError::invalid("counts need three rows"))?;
    Ok(CountTable::from_arm_rows(rows))
}

fn simulate_request(args: &SimulateArgs, seed: u64) -> ApiResult<SimulateRequest> {
    if let Some(path) = &args.request {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ApiError::invalid(format!("cannot read {}: {e}", path.display())))?;
        let mut req: SimulateRequest =
            serde_json::from_str(&text).map_err(|e| ApiError::invalid(format!("{}: {e}", path.display())))?;
        req.seed.get_or_insert(seed);
        return Ok(req);
    }
    let allocation = match &args.counts {
        Some(c) => AllocationSource::Counts { counts: parse_counts(c)? },
        None => AllocationSource::Solved {
            case: args.case,
            r1: args.r1,
            r2: args.r2,
            mode: args.design_mode,
            n: args.n.ok_or_else(|| ApiError::invalid("either --counts or --n is required"))?,
            strategy: args.strategy,
            rounding: args.rounding,
        },
    };
    let theta: [f64; 2] =
        args.theta.clone().try_into().map_err(|_| ApiError::invalid("--theta needs two comma-separated effects"))?;
    Ok(SimulateRequest {
        allocation,
        mu0: args.mu0,
        theta,
        sigma: args.sigma,
        trend: args.trend,
        alpha_one_sided: args.alpha,
        mode: args.mode,
        known_sigma: args.known_sigma,
        level: args.level,
        reps: args.reps,
        seed: Some(seed),
    })
}

fn emit(text: &str, out: Option<&PathBuf>) -> ApiResult<()> {
    let result = match out {
        Some(path) => std::fs::write(path, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    result.map_err(|e| ApiError::invalid(format!("cannot write output: {e}")))
}

fn run(cli: Cli) -> ApiResult<()> {
    let text = match &cli.command {
        Command::Solve(req) => api::solve(req)?.render(cli.format)?,
        Command::Curve(req) => api::curve(req)?.render(cli.format)?,
        Command::Tables(req) => api::tables(req)?.render(cli.format)?,
        Command::Simulate(args) => api::simulate(&simulate_request(args, cli.seed)?)?.render(cli.format)?,
        Command::Serve(args) => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| ApiError::failure(e.to_string()))?;
            return runtime
                .block_on(platalloc_cli::http::serve(SocketAddr::new(args.host, args.port)))
                .map_err(|e| ApiError::invalid(format!("cannot serve: {e}")));
        }
    };
    emit(&text, cli.out.as_ref())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{}", ApiError::invalid(e.render().to_string().trim_end()).to_json());
                    ExitCode::from(2)
                }
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprint!("{}", e.to_json());
            ExitCode::from(match e.kind {
                ErrorKind::InvalidRequest => 2,
                ErrorKind::SolverFailure => 3,
            })
        }
    }
}
