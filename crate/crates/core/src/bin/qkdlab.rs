use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use qkdlab::decoy::load_observations;
use qkdlab::preset::{load_config_file, ExperimentPreset};
use qkdlab::sweep::emit_csv;
use qkdlab::{EcEfficiencyTable, EcMode, MuPolicy, Protocol, QkdError, Result, SweepCommand, SweepRange, SweepSpec};

/// Decoy-state BB84 link model: QBER, key-rate and optimal-intensity sweeps as CSV.
#[derive(Debug, Parser)]
#[command(name = "qkdlab", version)]
struct Cli {
    /// qber-vs-mu | qber-vs-distance | rate-vs-distance | optimal-mu-vs-eta |
    /// optimal-mu-vs-distance | decoy-solve | cutoff
    command: String,

    /// Built-in setup: T8, G13, KTH or GYS.
    #[arg(long)]
    preset: Option<String>,

    /// key=value config file; overrides fields of --preset when both are given.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Comma-separated: lutkenhaus, gllp, gllp-decoy, upper-bound, asymptotic.
    #[arg(long, value_delimiter = ',')]
    protocol: Vec<String>,

    /// Source intensity: a number, `optimal`, or `eta` (mu equal to the overall efficiency).
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,

    /// START:STOP:STEP of the swept variable. Intensity and efficiency sweeps are
    /// logarithmic with STEP in decades unless --linear is given.
    #[arg(long, allow_hyphen_values = true)]
    range: Option<String>,

    /// Use a linear grid for intensity / efficiency sweeps.
    #[arg(long)]
    linear: bool,

    /// Fiber length in km for intensity sweeps.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    distance: f64,

    /// Key-rate threshold per pulse for `cutoff`.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    threshold: f64,

    /// interpolate | regression
    #[arg(long, default_value = "interpolate")]
    ec_mode: String,

    /// Two-column (qber, factor) table replacing the built-in EC efficiencies.
    #[arg(long)]
    ec_table: Option<PathBuf>,

    /// Observation file for decoy-solve: `mu p_d delta` per line.
    #[arg(long)]
    decoy_file: Option<PathBuf>,

    /// Relative tolerance of the vacuum-decoy check.
    #[arg(long, default_value_t = 0.05)]
    vacuum_tolerance: f64,

    /// Output file; standard output when absent.
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,

    /// Tab-separated output.
    #[arg(long)]
    gnuplot_friendly: bool,
}

fn resolve_preset(cli: &Cli) -> Result<ExperimentPreset> {
    let base = match &cli.preset {
        Some(name) => Some(
            ExperimentPreset::builtin(name)
                .ok_or_else(|| QkdError::Config(format!("preset: unknown preset {name:?}")))?,
        ),
        None => None,
    };
    match (&cli.config, base) {
        (Some(path), base) => load_config_file(path, base),
        (None, Some(preset)) => Ok(preset),
        (None, None) => Err(QkdError::Config("preset: give --preset NAME or --config FILE".into())),
    }
}

fn build_spec(cli: &Cli) -> Result<SweepSpec> {
    let command: SweepCommand = cli.command.parse()?;
    let mut spec = SweepSpec::new(command);
    if !cli.protocol.is_empty() {
        spec.protocols = cli.protocol.iter().map(|p| p.trim().parse()).collect::<Result<Vec<Protocol>>>()?;
    }
    if let Some(range) = &cli.range {
        spec.range = range.parse::<SweepRange>()?;
    }
    if cli.linear {
        spec.log_grid = false;
    }
    if let Some(mu) = &cli.mu {
        spec.mu_policy = mu.parse::<MuPolicy>()?;
    }
    spec.distance = cli.distance;
    spec.threshold = cli.threshold;
    spec.vacuum_tolerance = cli.vacuum_tolerance;
    let mode: EcMode = cli.ec_mode.parse()?;
    spec.ec_table = match &cli.ec_table {
        Some(path) => EcEfficiencyTable::load(path, mode)?,
        None => EcEfficiencyTable::builtin().with_mode(mode),
    };
    if let Some(path) = &cli.decoy_file {
        spec.observations = load_observations(path)?;
    }
    Ok(spec)
}

fn run(cli: &Cli) -> Result<()> {
    let spec = build_spec(cli)?;
    let preset = resolve_preset(cli)?;
    let output = qkdlab::run_sweep(&spec, &preset)?;
    let delimiter = if cli.gnuplot_friendly { '\t' } else { ',' };
    match &cli.output {
        Some(path) => {
            let file = File::create(path).map_err(|e| QkdError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            emit_csv(&output, delimiter, BufWriter::new(file))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            emit_csv(&output, delimiter, &mut lock)?;
            lock.flush().map_err(|e| QkdError::Io {
                path: "stdout".into(),
                message: e.to_string(),
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("qkdlab: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
