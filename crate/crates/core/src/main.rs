use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use slotsched::experiments::{
    bench_csv, bench_rows, congestion_outputs, congestion_rows, loglog_slope, mispriority_csv, mispriority_rows,
    prioritization_outputs, synthetic_arrivals, write_atomic, ExperimentConfig,
};
use slotsched::simgen::{ingest_footfall, PreferenceRegime};
use slotsched::{run_period, validate, Execution, Instance, MechanismConfig};

const EXIT_INPUT: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "slotsched",
    version,
    about = "Priority-preserving slot scheduling with VCG delays"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mechanism period on an instance JSON file.
    Allocate {
        /// Instance JSON: {"m": .., "k": .., "valuations": [[..], ..]}
        input: PathBuf,
        /// Outcome JSON destination (stdout when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Allocated preference rank and delay per urgency class vs. population.
    Prioritization(ExperimentArgs),
    /// Hourly population with and without scheduling on store footfall.
    Congestion {
        #[command(flatten)]
        common: ExperimentArgs,
        /// Checkout-timestamp CSV; the calibrated synthetic month is used when omitted.
        #[arg(long)]
        footfall: Option<PathBuf>,
    },
    /// Mispriority of FCFS booking vs. the mechanism.
    Mispriority(ExperimentArgs),
    /// Timing of a full mechanism round at n = m * k.
    Bench(ExperimentArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    trials_multiplier: Option<usize>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// identical | random
    #[arg(long)]
    regime: Option<PreferenceRegime>,
    /// Comma-separated slot capacities (congestion).
    #[arg(long, value_delimiter = ',')]
    capacities: Option<Vec<usize>>,
    #[arg(long)]
    days: Option<usize>,
    /// Output directory.
    #[arg(short, long)]
    output: Option<String>,
    /// Comma-separated slot counts (bench).
    #[arg(long, value_delimiter = ',')]
    bench_m: Option<Vec<usize>>,
    #[arg(long)]
    bench_k: Option<usize>,
    #[arg(long)]
    bench_trials: Option<usize>,
    /// Run trials one after another.
    #[arg(long)]
    sequential: bool,
}

impl ExperimentArgs {
    fn resolve(&self, name: &str) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        cfg.experiment = name.to_string();
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        set!(
            m,
            k,
            n_min,
            delta,
            trials_multiplier,
            seed,
            regime,
            capacities,
            days,
            output,
            bench_m,
            bench_k,
            bench_trials
        );
        if self.n_max.is_some() {
            cfg.n_max = self.n_max;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

/// Input problems exit with 2, everything else with 3.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn input(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        error: error.into(),
    }
}

fn internal(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_INTERNAL,
        error: error.into(),
    }
}

fn write_all(dir: &Path, files: &[(String, String)]) -> Result<(), Failure> {
    for (name, contents) in files {
        write_atomic(dir, name, contents)
            .with_context(|| format!("writing {}", dir.join(name).display()))
            .map_err(internal)?;
        eprintln!("wrote {}", dir.join(name).display());
    }
    Ok(())
}

fn allocate(path: &Path, output: Option<&Path>) -> Result<(), Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(input)?;
    let instance: Instance = serde_json::from_str(&text)
        .with_context(|| format!("parsing instance {}", path.display()))
        .map_err(input)?;
    let outcome = run_period(&instance, &MechanismConfig::default()).map_err(internal)?;
    validate(&instance, outcome.allocation())
        .map_err(|v| internal(anyhow!("solver produced an infeasible allocation: {v}")))?;
    let json = serde_json::to_string(&outcome).map_err(internal)?;
    match output {
        Some(out) => {
            let dir = out
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            let name = out
                .file_name()
                .ok_or_else(|| input(anyhow!("output path {} has no file name", out.display())))?;
            write_atomic(dir, &name.to_string_lossy(), &(json + "\n"))
                .with_context(|| format!("writing {}", out.display()))
                .map_err(internal)
        }
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Allocate { input: path, output } => allocate(&path, output.as_deref()),
        Command::Prioritization(args) => {
            let cfg = args.resolve("prioritization").map_err(input)?;
            let files = prioritization_outputs(&cfg, args.execution()).map_err(internal)?;
            write_all(Path::new(&cfg.output), &files)
        }
        Command::Mispriority(args) => {
            let cfg = args.resolve("mispriority").map_err(input)?;
            let rows = mispriority_rows(&cfg, args.execution()).map_err(internal)?;
            write_all(
                Path::new(&cfg.output),
                &[("mispriority.csv".into(), mispriority_csv(&rows))],
            )
        }
        Command::Congestion { common, footfall } => {
            let cfg = common.resolve("congestion").map_err(input)?;
            let arrivals = match footfall {
                Some(path) => {
                    let file = fs::File::open(&path)
                        .with_context(|| format!("opening {}", path.display()))
                        .map_err(input)?;
                    ingest_footfall(BufReader::new(file)).map_err(input)?.1
                }
                None => synthetic_arrivals(&cfg).map_err(internal)?,
            };
            let model = cfg.model().map_err(input)?;
            let rows = congestion_rows(&arrivals, &cfg.capacities, &model, cfg.seed, common.execution()).map_err(
                |e| match e {
                    slotsched::Error::Config(_) => input(e),
                    other => internal(other),
                },
            )?;
            write_all(Path::new(&cfg.output), &congestion_outputs(&rows))
        }
        Command::Bench(args) => {
            let cfg = args.resolve("bench").map_err(input)?;
            let mechanism = MechanismConfig {
                use_oracle: false,
                execution: args.execution(),
            };
            let rows =
                bench_rows(cfg.bench_k, &cfg.bench_m, cfg.bench_trials, cfg.seed, mechanism).map_err(internal)?;
            if let Some(slope) = loglog_slope(&rows) {
                eprintln!("log-log slope of time vs m: {slope:.3}");
            }
            write_all(Path::new(&cfg.output), &[("bench.csv".into(), bench_csv(&rows))])
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
