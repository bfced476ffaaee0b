use std::process::ExitCode;

use clap::Parser;
use ncla_cli::cli::{run, Cli};
use ncla_cli::ErrorReport;

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = ErrorReport::from(&e);
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| format!("{{\"error\":{:?}}}", e.to_string())));
            ExitCode::FAILURE
        }
    }
}
