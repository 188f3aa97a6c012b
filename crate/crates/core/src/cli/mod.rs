//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical failure (undefined
//! rate or no cutoff in range), 3 Monte Carlo validation failure.

pub mod commands;
pub mod config;
pub mod sweep;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::Error;
use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID_INPUT: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::UndefinedRate(_) | Error::NoSignChange { .. } => EXIT_NUMERICAL,
        Error::InvalidParameter { .. }
        | Error::ProtocolViolation(_)
        | Error::TooFewSamples { .. }
        | Error::Config { .. }
        | Error::Io { .. } => EXIT_INVALID_INPUT,
    }
}

macro_rules! overrides {
    ($($key:ident),* $(,)?) => {
        /// Per-key overrides of the config file.
        #[derive(Debug, Default, clap::Args)]
        pub struct Overrides {
            $(
                #[arg(
                    long = stringify!($key),
                    global = true,
                    value_name = "VALUE",
                    help = concat!("Override config key `", stringify!($key), "`")
                )]
                $key: Option<String>,
            )*
        }

        impl Overrides {
            fn pairs(&self) -> Vec<(&'static str, &str)> {
                let mut v = Vec::new();
                $(
                    if let Some(x) = &self.$key {
                        v.push((stringify!($key), x.as_str()));
                    }
                )*
                v
            }
        }
    };
}

overrides!(
    d_r_mm,
    d_t_mm,
    divergence_mrad,
    alpha_db_per_km,
    eta_bob,
    clamp_geometry,
    p_dark,
    e_det,
    f_ec,
    mu,
    mu_mode,
    mu_min,
    mu_max,
    mu_tol,
    distance_km,
    loss_db,
    loss_convention,
    sweep_axis,
    sweep_start,
    sweep_stop,
    sweep_steps,
    cutoff_lo_db,
    cutoff_hi_db,
    cutoff_tol_db,
    pulses,
    batch_size,
);

#[derive(Debug, Parser)]
#[command(
    name = "sarg04",
    version,
    about = "SARG04 key rate over free-space links"
)]
pub struct Cli {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output file (CSV for `sweep`, the report otherwise).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Monte Carlo seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(flatten)]
    pub overrides: Overrides,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Evaluate the key rate and every intermediate quantity at one point.
    Keyrate,
    /// Sweep distance or loss and emit CSV.
    Sweep,
    /// Optimal mean photon number at one point.
    Optimize,
    /// Loss at which the optimized key rate reaches zero.
    Cutoff,
    /// Monte Carlo run of the protocol at one point.
    Simulate,
    /// Compare Monte Carlo estimates against the closed-form model.
    Validate,
}

/// Builds the effective config: defaults, then the config file, then flags.
pub fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            RunConfig::from_text(&text)?
        }
        None => RunConfig::default(),
    };
    for (key, value) in cli.overrides.pairs() {
        cfg.set(key, value)
            .map_err(|reason| Error::Config { line: 0, reason })?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn write_file(path: &Path, body: &str) -> Result<(), Error> {
    std::fs::write(path, body).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Runs one command and returns the exit code.
pub fn execute(cmd: Command, cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32, Error> {
    let (text, code) = match cmd {
        Command::Keyrate => (commands::keyrate(cfg)?.1, EXIT_OK),
        Command::Optimize => (commands::optimize(cfg)?.1, EXIT_OK),
        Command::Cutoff => (commands::cutoff(cfg)?.1, EXIT_OK),
        Command::Simulate => (commands::simulate(cfg)?.1, EXIT_OK),
        Command::Sweep => (sweep::to_csv_string(&commands::sweep(cfg)?), EXIT_OK),
        Command::Validate => {
            let report = commands::validate(cfg)?;
            let code = if report.passed {
                EXIT_OK
            } else {
                EXIT_VALIDATION
            };
            (report.text, code)
        }
    };
    match &cfg.out {
        Some(path) => {
            write_file(path, &text)?;
            if !matches!(cmd, Command::Sweep) {
                let _ = stdout.write_all(text.as_bytes());
            }
        }
        None => {
            let _ = stdout.write_all(text.as_bytes());
        }
    }
    Ok(code)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() {
                EXIT_INVALID_INPUT
            } else {
                EXIT_OK
            };
        }
    };
    let result = load_config(&cli).and_then(|cfg| execute(cli.command, &cfg, stdout));
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
