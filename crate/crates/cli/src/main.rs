use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pqaslab_core::harness::{self, acceptance, record, ExperimentConfig, Format};
use pqaslab_core::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_ACCEPTANCE: u8 = 3;

#[derive(Parser)]
#[command(name = "pqaslab", version, about = "Keyed scrambler experiments, attacks and self-tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write its records.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output file; defaults to the config's `out`, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<OutFormat>,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the acceptance suite and print one verdict per criterion.
    Selftest {
        #[arg(long, default_value_t = acceptance::ACCEPTANCE_SEED)]
        seed: u64,
        /// Criterion numbers to run, e.g. `--only 1,8`. Default: all.
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
        #[arg(long)]
        threads: Option<usize>,
        /// Print the individual checks under each verdict.
        #[arg(long, short)]
        verbose: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }
}

fn set_threads(threads: Option<usize>) -> Result<(), Error> {
    match threads {
        Some(0) => Err(Error::param("threads", "must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::param("threads", e.to_string())),
        None => Ok(()),
    }
}

fn run(config: PathBuf, out: Option<PathBuf>, format: Option<OutFormat>, seed: Option<u64>) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::from_path(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(f) = format {
        cfg.format = f.into();
    }
    let records = harness::run(&cfg)?;
    match out.or_else(|| cfg.out.clone()) {
        Some(path) => harness::emit(&records, cfg.format, &path),
        None => {
            let text = match cfg.format {
                Format::Csv => record::to_csv(&records)?,
                Format::Json => record::to_json(&records)?,
            };
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn selftest(seed: u64, only: &[usize], verbose: bool) -> Result<bool, Error> {
    for &id in only {
        if id == 0 || id > acceptance::CRITERIA.len() {
            return Err(Error::param("only", format!("no criterion {id}")));
        }
    }
    let mut all = true;
    for (i, criterion) in acceptance::CRITERIA.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let report = criterion(seed)?;
        println!("{}", if verbose { report.render() } else { report.summary() });
        all &= report.passed();
    }
    Ok(all)
}

fn fail(e: Error) -> ExitCode {
    eprintln!("pqaslab: {e}");
    ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, format, seed, threads } => {
            match set_threads(threads).and_then(|_| run(config, out, format, seed)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::Selftest { seed, only, threads, verbose } => {
            match set_threads(threads).and_then(|_| selftest(seed, &only, verbose)) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => {
                    eprintln!("pqaslab: acceptance failed");
                    ExitCode::from(EXIT_ACCEPTANCE)
                }
                Err(e) => fail(e),
            }
        }
    }
}
