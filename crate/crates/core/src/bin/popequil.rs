use std::process::ExitCode;

use clap::Parser;
use popequil::cli::{error_json, run_args, Args};

fn main() -> ExitCode {
    let args = Args::parse();
    match run_args(&args) {
        Ok(report) => {
            println!("{}", report.summary());
            ExitCode::SUCCESS
        }
        Err(e) => {
            println!("{}", error_json(&e));
            ExitCode::from(if e.name() == "ConfigError" { 2 } else { 1 })
        }
    }
}
