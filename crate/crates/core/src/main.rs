use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mec_offload::algorithms::Algorithm;
use mec_offload::baselines::{brute_force_oracle, OracleLimits};
use mec_offload::experiments::{
    emit_region, emit_sweep, run_algorithm, run_region, run_sweep, trace_csv, write_atomic,
    OutputFormat, RegionSpec, SweepParameter, SweepSpec, UserClass, DEFAULT_DROPS,
};
use mec_offload::scenario::{build_scenario, draw_channels, ScenarioConfig};
use mec_offload::{Error, SolverError};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "mec-offload",
    version,
    about = "Joint power allocation and offloading decisions for multi-cell MEC"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte-Carlo sweep over one scenario parameter.
    Run {
        /// Scenario JSON; omitted fields take defaults.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        algorithm: AlgorithmArg,
        #[arg(long, default_value_t = DEFAULT_DROPS)]
        drops: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "bit-stream-size")]
        sweep: SweepArg,
        /// Comma-separated values (bits, seconds or users per cell).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        format: FormatArg,
    },
    /// Offloading-region map of a tagged user over bit-stream size and deadline.
    Region {
        #[arg(long, value_enum)]
        user: UserArg,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "both-solvers")]
        algorithm: AlgorithmArg,
        #[arg(long, default_value_t = DEFAULT_DROPS)]
        drops: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_delimiter = ',')]
        bit_sizes: Option<Vec<f64>>,
        /// Deadlines in seconds.
        #[arg(long, value_delimiter = ',')]
        delays: Option<Vec<f64>>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        format: FormatArg,
    },
    /// Iteration trace of one drop (debugging aid).
    Trace {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "jpad")]
        algorithm: AlgorithmArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exhaustive optimum of a tiny scenario next to every heuristic, as JSON on stdout.
    Oracle {
        #[arg(long)]
        tiny_fixture: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Clone)]
struct AlgorithmArg(Vec<Algorithm>);

impl std::str::FromStr for AlgorithmArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(Self(vec![
                Algorithm::LocalOnly,
                Algorithm::EqualPower,
                Algorithm::LowerBound,
                Algorithm::Cpad,
                Algorithm::Jpad,
            ])),
            "both-solvers" => Ok(Self(vec![Algorithm::Jpad, Algorithm::Cpad])),
            _ => s
                .split(',')
                .map(|a| {
                    Algorithm::parse(a.trim()).ok_or_else(|| format!("unknown algorithm {a:?}"))
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Self),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepArg {
    #[value(alias = "L")]
    BitStreamSize,
    #[value(alias = "T")]
    DelayThreshold,
    #[value(alias = "F")]
    UsersPerCell,
}

impl From<SweepArg> for SweepParameter {
    fn from(a: SweepArg) -> Self {
        match a {
            SweepArg::BitStreamSize => SweepParameter::BitStreamSize,
            SweepArg::DelayThreshold => SweepParameter::DelayThreshold,
            SweepArg::UsersPerCell => SweepParameter::UsersPerCell,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UserArg {
    Normal,
    Edge,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

impl FormatArg {
    fn formats(self) -> Vec<OutputFormat> {
        match self {
            FormatArg::Csv => vec![OutputFormat::Csv],
            FormatArg::Json => vec![OutputFormat::Json],
            FormatArg::Both => vec![OutputFormat::Csv, OutputFormat::Json],
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<ScenarioConfig, Error> {
    match path {
        Some(p) => ScenarioConfig::from_file(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        // Oversized oracle instances are rejected inputs, not solver failures.
        Error::Solver(SolverError::TooLarge(_)) => EXIT_CONFIG,
        Error::Solver(_) => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Run {
            scenario,
            algorithm,
            drops,
            seed,
            sweep,
            values,
            out,
            format,
        } => {
            let parameter = SweepParameter::from(sweep);
            let mut spec = SweepSpec::new(
                parameter,
                values.unwrap_or_else(|| parameter.default_values()),
                drops,
                algorithm.0,
            );
            spec.base = load_config(scenario.as_ref())?;
            spec.seed = seed;
            let result = run_sweep(&spec)?;
            for path in emit_sweep(&result, &out, &format.formats())? {
                eprintln!("wrote {}", path.display());
            }
            println!(
                "{:>10} {:>12} {:>12} {:>10} {:>8} {:>6}",
                parameter.name(),
                "algorithm",
                "power_w",
                "saving_%",
                "local",
                "fail"
            );
            for r in &result.summary {
                println!(
                    "{:>10} {:>12} {:>12.5e} {:>10.2} {:>8.3} {:>6}",
                    r.value,
                    r.algorithm.name(),
                    r.mean_power,
                    r.saving_pct,
                    r.local_fraction,
                    r.failures
                );
            }
            Ok(if result.failures() > 0 {
                EXIT_SOLVER
            } else {
                0
            })
        }
        Command::Region {
            user,
            scenario,
            algorithm,
            drops,
            seed,
            bit_sizes,
            delays,
            out,
            format,
        } => {
            let class = match user {
                UserArg::Normal => UserClass::Normal,
                UserArg::Edge => UserClass::CellEdge,
            };
            let mut spec = RegionSpec::new(class, drops);
            spec.base = load_config(scenario.as_ref())?;
            spec.seed = seed;
            spec.algorithms = algorithm.0;
            if let Some(b) = bit_sizes {
                spec.bit_sizes = b;
            }
            if let Some(d) = delays {
                spec.delays = d;
            }
            let result = run_region(&spec)?;
            for path in emit_region(&result, &out, &format.formats())? {
                eprintln!("wrote {}", path.display());
            }
            for c in &result.cells {
                println!(
                    "L={:<8} T={:<6} {:>6} offload={:.3}",
                    c.bit_stream_size,
                    c.delay_threshold,
                    c.algorithm.name(),
                    c.offload_fraction
                );
            }
            Ok(if result.failures() > 0 {
                EXIT_SOLVER
            } else {
                0
            })
        }
        Command::Trace {
            scenario,
            algorithm,
            seed,
            out,
        } => {
            let [alg] = algorithm.0[..] else {
                return Err(Error::InvalidSpec(
                    "trace takes exactly one algorithm".into(),
                ));
            };
            let scn = build_scenario(&load_config(scenario.as_ref())?)?;
            let realization = draw_channels(&scn, seed);
            let res = run_algorithm(
                alg,
                &scn,
                &realization,
                &Default::default(),
                mec_offload::baselines::DEFAULT_EQUAL_POWER_STEP_W,
            )?;
            write_atomic(&out, &trace_csv(&res.trace)?)?;
            eprintln!("wrote {}", out.display());
            Ok(0)
        }
        Command::Oracle { tiny_fixture, seed } => {
            let scenario = build_scenario(&ScenarioConfig::from_file(&tiny_fixture)?)?;
            let realization = draw_channels(&scenario, seed);
            let oracle = brute_force_oracle(&scenario, &realization, &OracleLimits::default())?;
            let mut report = serde_json::Map::new();
            report.insert("seed".into(), seed.into());
            report.insert("oracle".into(), oracle.total_power.into());
            for alg in [
                Algorithm::Jpad,
                Algorithm::Cpad,
                Algorithm::EqualPower,
                Algorithm::LowerBound,
                Algorithm::LocalOnly,
            ] {
                let res = run_algorithm(
                    alg,
                    &scenario,
                    &realization,
                    &Default::default(),
                    mec_offload::baselines::DEFAULT_EQUAL_POWER_STEP_W,
                )?;
                report.insert(alg.name().into(), res.total_power.into());
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
