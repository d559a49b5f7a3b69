//! `monitomation`: run scenarios headless, decode keypad audio, talk to a
//! running gateway and check event logs.
//!
//! Exit codes: 0 success, 1 usage error, 2 scenario or validation error,
//! 3 runtime I/O error.

mod client;
mod commands;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "monitomation",
    version,
    about = "Simulated 802.15.4 monitoring and home-automation network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario to its duration and print a summary.
    Run(RunArgs),
    /// Decode DTMF keys from a mono 16-bit WAV file.
    DtmfDecode(DtmfArgs),
    /// Send one message, command or keypad recording to a gateway.
    Send(SendArgs),
    /// Dump a gateway's event log as JSON lines.
    Events(EventsArgs),
    /// Re-check the invariants of a JSON-lines log.
    VerifyLog(VerifyArgs),
    /// Serve the HTTP + event-stream API for a live simulation.
    Serve(serve::ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where to write the JSON-lines log.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the summary as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct DtmfArgs {
    #[arg(long)]
    pub wav: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("what").required(true).args(["text", "input", "wav"])))]
pub struct SendArgs {
    /// Gateway base URL.
    #[arg(long, env = "MONITOMATION_GATEWAY", default_value = "http://127.0.0.1:8080")]
    pub gateway: String,
    /// Free text for the display.
    #[arg(long)]
    pub text: Option<String>,
    /// Destination for --text; defaults to the display.
    #[arg(long, requires = "text")]
    pub to: Option<u16>,
    /// Keypad string or lookup-table phrase.
    #[arg(long)]
    pub input: Option<String>,
    /// Keypad recording to decode on the gateway.
    #[arg(long)]
    pub wav: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EventsArgs {
    #[arg(long, env = "MONITOMATION_GATEWAY", default_value = "http://127.0.0.1:8080")]
    pub gateway: String,
    /// Print records with offsets after this one.
    #[arg(long, default_value_t = 0)]
    pub after: u64,
    /// Keep streaming new records.
    #[arg(long)]
    pub follow: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub log: PathBuf,
}

/// A failed command and its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Invalid(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Invalid(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Invalid(m) | Failure::Io(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(&a),
        Command::DtmfDecode(a) => commands::dtmf_decode(&a),
        Command::Send(a) => client::send(&a),
        Command::Events(a) => client::events(&a),
        Command::VerifyLog(a) => commands::verify_log(&a),
        Command::Serve(a) => serve::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
