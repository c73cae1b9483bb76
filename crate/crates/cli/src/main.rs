use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pdwalker_cli::{find_orbit_cmd, report_run, report_verify, run, verify, CommonArgs, Failure};

/// Simulate and analyse a PD-controlled two-link walker.
#[derive(Parser)]
#[command(name = "pdwalker", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Walk every configured gain and write traces, Poincaré logs and plots.
    Run(Flags),
    /// Run the property checks and write a pass/fail table.
    Verify(Flags),
    /// Search for the periodic orbit of the zero dynamics and write orbit.json.
    FindOrbit(Flags),
}

#[derive(Args)]
struct Flags {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `outputs` in the config. Defaults to ./out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random perturbations and sampled checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Reuse an orbit.json from `find-orbit` instead of searching again.
    #[arg(long)]
    orbit: Option<PathBuf>,
}

impl From<Flags> for CommonArgs {
    fn from(f: Flags) -> Self {
        CommonArgs {
            config: f.config,
            out: f.out,
            seed: f.seed,
            jobs: f.jobs,
            orbit: f.orbit,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(f) => run(&f.into()).and_then(|r| report_run(&r)),
        Command::Verify(f) => verify(&f.into()).and_then(|r| report_verify(&r)),
        Command::FindOrbit(f) => find_orbit_cmd(&f.into()).map(|(path, o)| {
            println!(
                "z* = ({:.17e}, {:.17e}), T* = {:.17e}, |eig Drho| = {:?}, residual {:e}",
                o.z_star[0], o.z_star[1], o.t_star, o.rho_jacobian_eigs, o.residual
            );
            println!("wrote {}", path.display());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pdwalker: {e}");
            ExitCode::from(exit_byte(&e))
        }
    }
}

fn exit_byte(e: &Failure) -> u8 {
    e.exit_code() as u8
}
