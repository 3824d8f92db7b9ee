use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use ecgbench::{exit, Cli, CliError};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match try_main(&cli) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<CliError>())
                .map_or(exit::INTERNAL, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn try_main(cli: &Cli) -> anyhow::Result<String> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool")?;
    }
    let name = format!("{:?}", cli.command).to_lowercase();
    let name = name.split([' ', '{']).next().unwrap_or("command").to_string();
    ecgbench::run(cli).with_context(|| format!("{name} failed"))
}
