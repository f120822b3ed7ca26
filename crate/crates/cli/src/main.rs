//! `slelab`: sampling and verification front end.
//!
//! Exit codes: 0 when every tolerance passes (or a sampling run completes),
//! 1 when some tolerance fails, 2 for usage, config or runtime errors.

mod commands;
mod config;
mod emit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use commands::*;

#[derive(Debug, Parser)]
#[command(name = "slelab", version, about = "Multiple SLE, β-Jacobi and critical Ising experiments")]
struct Cli {
    /// key = value file with one [section] per subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (default: $SLELAB_OUT, else ./slelab-out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Driving processes of SLE_κ(ρ) with optional traces.
    SampleSle(SampleSle),
    /// Outermost-first multiple-curve systems.
    SampleMultisle(SampleMultisle),
    /// β-Jacobi spectra.
    SampleJacobi(SampleJacobi),
    /// Monte Carlo P[A_δ] on a lattice rectangle next to F_N.
    EstimateIsing(EstimateIsing),
    /// Normalization identity between the two hitting densities.
    VerifyPartition(VerifyPartition),
    /// Second-order PDE residuals of R_N at κ = 3.
    VerifyPde(VerifyPde),
    /// Flatness of the martingale weight along SLE_3 paths.
    VerifyMartingale(VerifyMartingale),
    /// Weighted base runs against the direct cascade.
    VerifyCascade(VerifyCascade),
    /// Cascade endpoints against direct draws from the hitting densities.
    VerifyHitting(VerifyHitting),
    /// Collapsed endpoints against β-Jacobi samplers.
    VerifyJacobiLink(VerifyJacobiLink),
}

const SUBCOMMANDS: [&str; 10] = [
    "sample-sle",
    "sample-multisle",
    "sample-jacobi",
    "estimate-ising",
    "verify-partition",
    "verify-pde",
    "verify-martingale",
    "verify-cascade",
    "verify-hitting",
    "verify-jacobi-link",
];

/// Whether `subcommand` (or the top level) has a long flag `--key`.
fn accepts(subcommand: &str, key: &str) -> bool {
    let has = |c: &clap::Command| {
        c.get_arguments().any(|a| a.get_long() == Some(key) || a.get_all_aliases().is_some_and(|al| al.contains(&key)))
    };
    let cmd = Cli::command();
    has(&cmd) || cmd.find_subcommand(subcommand).is_some_and(has)
}

fn parse_cli(raw: Vec<String>) -> Result<Cli, ExitCode> {
    let args = match config::find_config_arg(&raw) {
        Some(path) => match config::ConfigFile::load(path.as_ref()) {
            Ok(cfg) => config::splice(&raw, &SUBCOMMANDS, &cfg, accepts),
            Err(e) => {
                eprintln!("error: {e}");
                return Err(ExitCode::from(2));
            }
        },
        None => raw,
    };
    let cmd = Cli::command().args_override_self(true).mut_subcommands(|s| s.args_override_self(true));
    let parsed = cmd.try_get_matches_from(args).and_then(|m| Cli::from_arg_matches(&m));
    parsed.map_err(|e| {
        let _ = e.print();
        ExitCode::from(if e.use_stderr() { 2 } else { 0 })
    })
}

fn main() -> ExitCode {
    let cli = match parse_cli(std::env::args().collect()) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let out = emit::out_dir(cli.out.as_deref());
    let result = match &cli.command {
        Command::SampleSle(a) => sample_sle(a),
        Command::SampleMultisle(a) => sample_multisle(a),
        Command::SampleJacobi(a) => sample_jacobi(a),
        Command::EstimateIsing(a) => estimate_ising(a),
        Command::VerifyPartition(a) => verify_partition(a),
        Command::VerifyPde(a) => verify_pde(a),
        Command::VerifyMartingale(a) => verify_martingale(a),
        Command::VerifyCascade(a) => verify_cascade(a),
        Command::VerifyHitting(a) => verify_hitting(a),
        Command::VerifyJacobiLink(a) => verify_jacobi_link(a),
    };
    let outcome = match result.and_then(|o| o.write(&out).map(|_| o)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    outcome.print_summary(&out);
    if outcome.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
