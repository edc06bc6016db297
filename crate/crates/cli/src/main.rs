use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use quadtomo_cli::error::CliError;
use quadtomo_cli::{run, Cli, SEED_ENV};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot start the worker pool")?;
    }
    let env_seed = std::env::var(SEED_ENV).ok();
    for line in run(cli, env_seed.as_deref())? {
        println!("{line}");
    }
    Ok(())
}
