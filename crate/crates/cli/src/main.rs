use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

mod config;
mod experiments;
mod output;

#[derive(Debug)]
pub enum CliError {
    Schema(String),
    Lib(iasched::Error),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use iasched::Error as E;
        match self {
            CliError::Schema(_) => 2,
            CliError::Lib(E::Config(_) | E::Argument(_) | E::InfeasibleArrival) => 2,
            CliError::Lib(E::NonConvergence { .. } | E::Numeric(_) | E::SearchBound { .. }) => 3,
            CliError::Lib(E::Guard { .. }) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "schema error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<iasched::Error> for CliError {
    fn from(e: iasched::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Batch runner for rate, region, fraction and queue-stability experiments.
#[derive(Debug, Parser)]
#[command(name = "iasched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Override a config field, e.g. `--set system.bits=40`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Symmetric rates r(L), μ(L), their totals, and r_svd.
    Rates,
    /// Vertex set of a stability region.
    Region,
    /// Bit/pair reduction fractions, β_A, β_P and bit budgets.
    Fractions,
    /// Region membership of an arrival vector.
    Membership,
    /// IA vs TDMA-SVD choice for an arrival vector.
    Select,
    /// One queue simulation.
    Simulate,
    /// Uniform-arrival stability sweep.
    Sweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Rates => "rates",
            Command::Region => "region",
            Command::Fractions => "fractions",
            Command::Membership => "membership",
            Command::Select => "select",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
        }
    }

    /// Stable stream id per experiment kind.
    fn stream(self) -> u64 {
        self as u64 + 1
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Schema("--config is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?;
    let mut doc: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("invalid JSON: {e}")))?;
    config::apply_overrides(&mut doc, &cli.sets)?;
    let exp = config::parse(doc.clone())?;
    let cfg = exp.system.build()?;

    let rng = iasched::RngStream::new(cli.seed, cli.command.stream());
    let artifacts = match cli.command {
        Command::Rates => experiments::rates(&cfg)?,
        Command::Region => experiments::region(&cfg, &exp.region)?,
        Command::Fractions => experiments::fractions(&cfg, &exp.fractions)?,
        Command::Membership => experiments::membership_check(&cfg, exp.membership.as_ref())?,
        Command::Select => experiments::select(&cfg, exp.select.as_ref())?,
        Command::Simulate => experiments::simulate(&cfg, &exp.simulate, &rng)?,
        Command::Sweep => experiments::sweep(&cfg, &exp.sweep, &rng)?,
    };

    std::fs::create_dir_all(&cli.out)?;
    let mut written = Vec::new();
    for art in &artifacts {
        written.push(output::write(&cli.out, art, cli.format)?);
    }

    let hash = Sha256::digest(serde_json::to_vec(&doc).expect("serializable"));
    let manifest = json!({
        "experiment": cli.command.name(),
        "config_sha256": hash.iter().map(|b| format!("{b:02x}")).collect::<String>(),
        "seed": cli.seed,
        "format": match cli.format { Format::Csv => "csv", Format::Json => "json" },
        "outputs": written,
        "versions": {
            "iasched": iasched::VERSION,
            "iasched-cli": env!("CARGO_PKG_VERSION"),
        },
        "started_unix": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    });
    std::fs::write(
        cli.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("serializable"),
    )?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("iasched {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
