use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use contact_sr::commands::{split_assignment, RunOptions};
use contact_sr::{cmd_derive, cmd_run, cmd_verify, load_system, resolve_seed, CliError, EXIT_FAILURE, EXIT_OK};

#[derive(Parser)]
#[command(name = "contact-sr", version, about = "Derive, integrate and verify contact Lagrangian systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the constraint algorithm and print the ladder and projected fields.
    Derive(Common),
    /// Integrate the final field, write a trajectory CSV and check invariants.
    Run(Common),
    /// Compare the derivation with the `.golden` file next to the system file.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// System file.
    file: PathBuf,
    /// Integration horizon [default: 10].
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// Fixed RK4 step [default: 0.001].
    #[arg(long)]
    dt: Option<f64>,
    /// Output path of the trajectory CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Zero-test seed; overrides CONTACT_SR_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Expression for a free unknown, as NAME=EXPR.
    #[arg(long, value_name = "NAME=EXPR")]
    gauge: Vec<String>,
    /// Initial value of a coordinate, as NAME=VALUE.
    #[arg(long, value_name = "NAME=VALUE")]
    init: Vec<String>,
}

fn run_options(c: &Common) -> Result<RunOptions, CliError> {
    let mut init = Vec::new();
    for arg in &c.init {
        let (k, v) = split_assignment(arg)?;
        let value = v.parse().map_err(|_| CliError::InvalidArgument(format!("`{v}` is not a number")))?;
        init.push((k, value));
    }
    let gauge = c.gauge.iter().map(|g| split_assignment(g)).collect::<Result<_, _>>()?;
    Ok(RunOptions { t_final: c.t_final, dt: c.dt, out: c.out.clone(), init, gauge })
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let (Command::Derive(c) | Command::Run(c) | Command::Verify(c)) = &cli.command;
    let loaded = load_system(&c.file, resolve_seed(c.seed)?)?;
    match &cli.command {
        Command::Derive(_) => {
            print!("{}", cmd_derive(&loaded)?);
            Ok(EXIT_OK)
        }
        Command::Run(c) => {
            let outcome = cmd_run(&loaded, &run_options(c)?)?;
            println!("trajectory: {} ({} steps)", outcome.csv_path.display(), outcome.trajectory.len() - 1);
            print!("{}", outcome.report.summary());
            Ok(outcome.exit_code())
        }
        Command::Verify(_) => {
            let report = cmd_verify(&loaded)?;
            print!("{report}");
            Ok(if report.passes() { EXIT_OK } else { EXIT_FAILURE })
        }
    }
}

fn main() -> ExitCode {
    let code = match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
