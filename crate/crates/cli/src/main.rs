mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use hsic_core::ErrorClass;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_FORMAT: u8 = 4;
const EXIT_OTHER: u8 = 1;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<hsic_core::Error>() {
            return match e.class() {
                ErrorClass::Validation => EXIT_VALIDATION,
                ErrorClass::Io => EXIT_IO,
                ErrorClass::Format => EXIT_FORMAT,
            };
        }
        if cause.is::<commands::UsageError>() {
            return EXIT_VALIDATION;
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if cause.is::<serde_json::Error>() {
            return EXIT_FORMAT;
        }
    }
    EXIT_OTHER
}

/// The error and its causes, skipping causes the message already quotes.
fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let part = cause.to_string();
        if !text.ends_with(&part) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&part);
        }
    }
    text
}

fn configure_threads() -> Result<(), commands::UsageError> {
    let Ok(value) = std::env::var("HSIC_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| {
            commands::UsageError(format!(
                "HSIC_THREADS must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| commands::UsageError(e.to_string()))
}

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    let result = configure_threads()
        .map_err(anyhow::Error::from)
        .and_then(|_| commands::run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
