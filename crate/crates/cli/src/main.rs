use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod manifest;

use commands::{Artifact, Failure, Run, Status};
use manifest::RunManifest;

/// Lattice amplitude experiments with reproducible, machine-readable output.
#[derive(Debug, Parser, Serialize)]
#[command(name = "qlattice", version)]
pub struct Cli {
    /// Master seed for randomized subcommands.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Path prefix for outputs; writes `<prefix>.<ext>` and
    /// `<prefix>.manifest.json`. Without it results go to stdout and the
    /// manifest to stderr.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Amplitude of a setup under every evaluation strategy.
    Amplitude(AmplitudeArgs),
    /// Strategy agreement over random setups and kernels.
    Fuzz(FuzzArgs),
    /// Time series of a wave function under a kernel.
    Evolve(EvolveArgs),
    /// Exact and Gaussian window overlaps for increasing N.
    Born(BornArgs),
    /// Explicit N-fold product state against the binomial overlap.
    BornDirect(BornDirectArgs),
    /// Regrade recovery or product-rule check for a catalog operation.
    Regrade(RegradeArgs),
    /// One hole, the other hole, and both, at every detector site.
    DoubleSlit(DoubleSlitArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Amplitude(_) => "amplitude",
            Command::Fuzz(_) => "fuzz",
            Command::Evolve(_) => "evolve",
            Command::Born(_) => "born",
            Command::BornDirect(_) => "born-direct",
            Command::Regrade(_) => "regrade",
            Command::DoubleSlit(_) => "double-slit",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct AmplitudeArgs {
    #[arg(long, required_unless_present = "composite", requires = "kernel")]
    pub setup: Option<PathBuf>,
    #[arg(long, requires = "setup")]
    pub kernel: Option<PathBuf>,
    /// Composite file `{"parts": [{"setup": ..., "kernel_ref": ...}]}`.
    #[arg(long, conflicts_with_all = ["setup", "kernel"])]
    pub composite: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FuzzArgs {
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long = "L", default_value_t = 8)]
    pub num_sites: usize,
    #[arg(long = "T", default_value_t = 6)]
    pub num_steps: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct EvolveArgs {
    #[arg(long)]
    pub kernel: PathBuf,
    /// JSON list of `[re, im]` pairs.
    #[arg(long)]
    pub psi: PathBuf,
    #[arg(long)]
    pub steps: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct BornArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub f: f64,
    #[arg(long)]
    pub eps: f64,
    #[arg(long = "N-list", value_delimiter = ',', required = true)]
    pub n_list: Vec<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct BornDirectArgs {
    #[arg(long)]
    pub psi: PathBuf,
    /// Detection site k.
    #[arg(long)]
    pub site: usize,
    #[arg(long = "N")]
    pub n_replicas: usize,
    #[arg(long)]
    pub f: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Regrade,
    ProductRule,
}

#[derive(Debug, Args, Serialize)]
pub struct RegradeArgs {
    /// One of add, cubic-mean, uv-shift, product, broken-assoc.
    #[arg(long)]
    pub op: String,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub coef: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Check::Regrade)]
    pub check: Check,
    /// `lo,hi` for both arguments; overrides the catalog domain.
    #[arg(
        long,
        value_delimiter = ',',
        num_args = 1,
        allow_negative_numbers = true
    )]
    pub domain: Option<Vec<f64>>,
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct DoubleSlitArgs {
    #[arg(long = "L", default_value_t = 16)]
    pub num_sites: usize,
    #[arg(long, default_value_t = 8)]
    pub steps: usize,
    /// Two slit sites.
    #[arg(long, value_delimiter = ',', required = true)]
    pub holes: Vec<usize>,
    /// Source site; defaults to `L / 2`.
    #[arg(long)]
    pub source: Option<usize>,
    /// Time of the slit screen; defaults to `steps / 2`.
    #[arg(long)]
    pub slit_time: Option<usize>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub hop: f64,
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    /// Kernel JSON used instead of the tight-binding ring.
    #[arg(long)]
    pub kernel: Option<PathBuf>,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let started = Instant::now();
    let run = match commands::dispatch(&cli) {
        Ok(run) => run,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    match emit(&cli, &argv, &run, started) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: writing outputs: {e}");
            return ExitCode::from(1);
        }
    }
    match &run.status {
        Status::Ok => ExitCode::SUCCESS,
        Status::Rejected(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Status::Breach(msg) => {
            eprintln!("consistency violation: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Writes every artifact then the manifest. Output order is fixed.
fn emit(cli: &Cli, argv: &[String], run: &Run, started: Instant) -> std::io::Result<()> {
    use std::io::Write;
    let format = cli.format.unwrap_or(run.default_format);
    let mut outputs = Vec::new();
    match &cli.out {
        Some(prefix) => {
            for a in run
                .artifacts
                .iter()
                .filter(|a| a.always || a.format == format)
            {
                let path = artifact_path(prefix, a);
                std::fs::write(&path, &a.bytes)?;
                outputs.push(path);
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            let pick = run
                .artifacts
                .iter()
                .find(|a| a.format == format)
                .or_else(|| run.artifacts.first());
            if let Some(a) = pick {
                stdout.write_all(&a.bytes)?;
            }
            stdout.flush()?;
        }
    }
    let manifest = RunManifest::new(cli, argv, outputs, &run.summary, started);
    let text = serde_json::to_string_pretty(&manifest)?;
    match &cli.out {
        Some(prefix) => std::fs::write(manifest::manifest_path(prefix), text + "\n"),
        None => writeln!(std::io::stderr(), "{text}"),
    }
}

fn artifact_path(prefix: &std::path::Path, a: &Artifact) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(".");
    name.push(a.suffix);
    PathBuf::from(name)
}
