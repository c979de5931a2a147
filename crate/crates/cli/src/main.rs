use std::net::{IpAddr, SocketAddr};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use shared_dof_cli::commands::{bench, run, Cli, Command, Outcome, ServeArgs};
use shared_dof_cli::server::{bind, serve, ServeOptions};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();

    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Bench(args) => bench(args),
        Command::Serve(args) => serve_blocking(args),
    };
    match result {
        Ok(outcome) => ExitCode::from(outcome.code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(Outcome::Failed.code() as u8)
        }
    }
}

fn serve_blocking(args: &ServeArgs) -> anyhow::Result<Outcome> {
    if !(args.tick_rate.is_finite() && args.tick_rate > 0.0) {
        anyhow::bail!("--tick-rate must be positive");
    }
    let host: IpAddr = args.host.parse()?;
    let options = ServeOptions {
        tick_rate_hz: args.tick_rate,
        ..Default::default()
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = bind(SocketAddr::new(host, args.port)).await?;
        tracing::info!(addr = %listener.local_addr()?, tick_rate = args.tick_rate, "serving /session");
        serve(listener, options).await?;
        Ok(Outcome::Success)
    })
}
