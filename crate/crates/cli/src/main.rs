//! Command-line front end for the anisotropic toolkit.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use aniso_tl::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "aniso-tl", version, about = "Expansive matrices, anisotropic covers and discrete Triebel-Lizorkin norms")]
struct Cli {
    /// TOML run configuration; matrix names resolve against it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// write `<report>.json` and `<report>.csv` here
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Step quasi-norm and scale index of points
    Rho {
        #[arg(long)]
        matrix: String,
        /// coordinates, comma separated; repeat for several points
        #[arg(long = "point", required = true, allow_hyphen_values = true)]
        points: Vec<String>,
    },
    /// Expansive ellipsoid certificate
    Ellipsoid {
        #[arg(long)]
        matrix: String,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Intersection sets J_i of two frequency covers
    Covers {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, default_value_t = 8)]
        range: i64,
    },
    /// Decide whether two matrices give the same spaces
    Equiv {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        depth: Option<i64>,
    },
    /// Discrete TL norm of an atom sum or a stored field
    TlNorm {
        #[arg(long)]
        matrix: String,
        /// lines `delta eta_1 .. eta_d re im`
        #[arg(long, conflicts_with = "field", required_unless_present = "field")]
        atoms: Option<PathBuf>,
        /// binary field written by the library
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 256)]
        n: usize,
        /// spatial half-width in units of 1/delta
        #[arg(long, default_value_t = 48.0)]
        extent: f64,
        /// Peetre maximal form
        #[arg(long)]
        maximal: bool,
    },
    /// Norms of finite sequences on dilated cubes
    Cubes {
        #[arg(long)]
        matrix: String,
        /// lines `i k_1 .. k_d re im`
        #[arg(long)]
        seq: PathBuf,
        #[arg(long, value_enum)]
        op: CubeOp,
        /// second sequence for `pairing`
        #[arg(long, required_if_eq("op", "pairing"))]
        other: Option<PathBuf>,
        #[arg(long, default_value = "greedy")]
        method: String,
        #[arg(long, default_value_t = 2)]
        margin: i64,
    },
    /// One experiment with its configured settings
    Experiment {
        #[arg(value_enum)]
        name: Experiment,
        #[arg(long)]
        a: Option<String>,
        #[arg(long)]
        b: Option<String>,
        /// khintchine: exponent
        #[arg(long)]
        p: Option<f64>,
        /// khintchine: coefficients, comma separated
        #[arg(long, allow_hyphen_values = true)]
        coeffs: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// The full acceptance battery
    Suite {
        /// criteria to run, comma separated
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
        #[arg(long)]
        no_repeat: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CubeOp {
    F1inf,
    Finf1,
    Finf1Tent,
    Carleson,
    Pairing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Experiment {
    SingleAtom,
    AtomTrain,
    Khintchine,
    QDetection,
    DetQuotient,
    Coincidence,
    Convolution,
    Cubes,
}

/// Exit statuses.
const PASS: u8 = 0;
const FAIL: u8 = 1;
const INCONCLUSIVE: u8 = 2;
const USAGE: u8 = 64;
const SOFTWARE: u8 = 70;
const IOERR: u8 = 74;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(aniso_tl::Error),
    Write(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => USAGE,
            CliError::Run(_) => SOFTWARE,
            CliError::Write(_) => IOERR,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Write(m) => f.write_str(m),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<aniso_tl::Error> for CliError {
    fn from(e: aniso_tl::Error) -> Self {
        CliError::Run(e)
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) if !p.exists() => Err(CliError::Usage(format!("config file {} not found", p.display()))),
        Some(p) => RunConfig::load(p).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", p.display()))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { PASS };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let run = || -> Result<u8, CliError> {
        let cfg = load_config(cli.config.as_ref())?;
        commands::run(cli.cmd, &cfg, cli.out.as_deref())
    };
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("aniso-tl: {e}");
            ExitCode::from(e.code())
        }
    }
}
