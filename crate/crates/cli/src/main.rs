use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use locequate_cli::commands::parse_bandwidth;
use locequate_cli::{
    cmd_diagnose, cmd_equate, cmd_simulate, parse_dataset, CliError, DatasetSchema, EquateMethod, EquateOptions,
    SimulateOptions,
};

/// Local observed-score equating without an anchor test.
#[derive(Debug, Parser)]
#[command(name = "locequate", version)]
struct Cli {
    /// Directory for all output tables.
    #[arg(long, global = true, env = "LOCEQUATE_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Equate form Y to form X and write transform tables and curves.
    Equate {
        dataset: PathBuf,
        /// anchor, strat, ipw, equipercentile-anchor, equipercentile-strat or equipercentile-ipw.
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 8)]
        strata: usize,
        #[arg(long, default_value_t = 0.01)]
        trim_alpha: f64,
        /// step, inf, or a positive kernel bandwidth.
        #[arg(long, default_value = "step")]
        bandwidth: String,
        #[arg(long, value_delimiter = ',', default_value = "10,30,50,70,90")]
        percentiles: Vec<f64>,
        /// Largest score in the curve files (default: largest observed).
        #[arg(long)]
        max_score: Option<u32>,
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Covariate balance (ASMD) within propensity strata for several K.
    Diagnose {
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
        strata: Vec<usize>,
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Run the Monte Carlo comparison described by a key=value config.
    Simulate {
        /// Config file; all defaults when omitted.
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Also write each scenario's first sample as a dataset.
        #[arg(long)]
        export_sample: bool,
    },
}

fn load_schema(path: Option<&PathBuf>) -> Result<DatasetSchema, CliError> {
    match path {
        Some(p) => DatasetSchema::load(p),
        None => Ok(DatasetSchema::conventional()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Equate { dataset, method, strata, trim_alpha, bandwidth, percentiles, max_score, schema } => {
            let data = parse_dataset(&dataset, &load_schema(schema.as_ref())?)?;
            let options = EquateOptions {
                method: method.parse::<EquateMethod>()?,
                strata,
                trim_alpha,
                bandwidth: parse_bandwidth(&bandwidth)?,
                percentiles,
                max_score,
            };
            let out = cmd_equate(&data, &options, &cli.out_dir)?;
            for c in &out.curves {
                println!("{}", c.path.display());
            }
        }
        Command::Diagnose { dataset, strata, schema } => {
            let data = parse_dataset(&dataset, &load_schema(schema.as_ref())?)?;
            for report in cmd_diagnose(&data, &strata, &cli.out_dir)? {
                let fractions: Vec<String> = report.satisfactory_fraction.iter().map(|f| format!("{f:.3}")).collect();
                println!("K={}: balanced share per covariate {}", report.k, fractions.join(" "));
            }
        }
        Command::Simulate { config, seed, threads, export_sample } => {
            let text = match config {
                Some(p) => fs::read_to_string(p)?,
                None => String::new(),
            };
            let options = SimulateOptions { seed, threads, export_sample };
            for report in cmd_simulate(&text, &options, &cli.out_dir)? {
                if report.unstable {
                    eprintln!("scenario {} is unstable: {} failed replications", report.scenario.name, report.failed_replications);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) | CliError::Config(_) | CliError::Schema(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
