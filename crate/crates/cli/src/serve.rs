//! `serve`: flags, environment and an optional JSON config file.
//!
//! Precedence is flag, then environment variable, then config file, then
//! the built-in default. Relative paths in the config file resolve against
//! the file's directory.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::Args;
use monitomation_core::{load_scenario_file, SerialLinkConfig};
use monitomation_gateway::{FsyncPolicy, GatewayConfig, DEFAULT_PORT};
use serde::Deserialize;

use crate::commands::scenario_failure;
use crate::Failure;

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// JSON file with any of the keys below.
    #[arg(long, env = "MONITOMATION_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "MONITOMATION_SCENARIO")]
    pub scenario: Option<PathBuf>,
    #[arg(long, env = "MONITOMATION_PORT")]
    pub port: Option<u16>,
    #[arg(long, env = "MONITOMATION_HOST")]
    pub host: Option<IpAddr>,
    /// Serial link rate between front end and coordinator, 2400..=115200.
    #[arg(long, env = "MONITOMATION_BAUD")]
    pub baud: Option<u32>,
    /// Simulated time per wall-clock time.
    #[arg(long, env = "MONITOMATION_SPEED")]
    pub speed: Option<f64>,
    #[arg(long, env = "MONITOMATION_SEED")]
    pub seed: Option<u64>,
    /// JSON-lines log file; history in it is replayed on start.
    #[arg(long, env = "MONITOMATION_LOG")]
    pub log: Option<PathBuf>,
    /// `always` or `never`.
    #[arg(long, env = "MONITOMATION_FSYNC")]
    pub fsync: Option<FsyncPolicy>,
    /// Static console bundle served under `/`.
    #[arg(long, env = "MONITOMATION_CONSOLE_DIR")]
    pub console_dir: Option<PathBuf>,
    /// Start with simulated time stopped.
    #[arg(long)]
    pub paused: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    scenario: Option<PathBuf>,
    port: Option<u16>,
    host: Option<IpAddr>,
    baud: Option<u32>,
    speed: Option<f64>,
    seed: Option<u64>,
    log: Option<PathBuf>,
    fsync: Option<FsyncPolicy>,
    console_dir: Option<PathBuf>,
    #[serde(default)]
    paused: bool,
}

fn load_file(path: &Path) -> Result<FileConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut c: FileConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::Invalid(format!("ParseError: {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for p in [&mut c.scenario, &mut c.log, &mut c.console_dir]
        .into_iter()
        .flatten()
    {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(c)
}

/// The resolved settings.
#[derive(Debug)]
struct Settings {
    addr: SocketAddr,
    gateway: GatewayConfig,
}

fn resolve(a: ServeArgs) -> Result<Settings, Failure> {
    let file = match &a.config {
        Some(p) => load_file(p)?,
        None => FileConfig::default(),
    };
    let scenario_path = a
        .scenario
        .or(file.scenario)
        .ok_or_else(|| Failure::Usage("--scenario (or MONITOMATION_SCENARIO) is required".into()))?;
    let mut scenario = load_scenario_file(&scenario_path).map_err(scenario_failure)?;
    if let Some(baud) = a.baud.or(file.baud) {
        scenario.serial = SerialLinkConfig::new(baud).map_err(|e| Failure::Invalid(e.to_string()))?;
    }
    if let Some(seed) = a.seed.or(file.seed) {
        scenario.seed = seed;
    }
    let speed = a.speed.or(file.speed).unwrap_or(1.0);
    if !(speed.is_finite() && speed > 0.0) {
        return Err(Failure::Invalid(format!(
            "InvalidConfig: speed must be positive, got {speed}"
        )));
    }
    let mut gateway = GatewayConfig::new(scenario);
    gateway.speed = speed;
    gateway.log = a.log.or(file.log);
    gateway.fsync = a.fsync.or(file.fsync).unwrap_or_default();
    gateway.console_dir = a.console_dir.or(file.console_dir);
    gateway.start_paused = a.paused || file.paused;
    let host = a.host.or(file.host).unwrap_or(IpAddr::from([127, 0, 0, 1]));
    let port = a.port.or(file.port).unwrap_or(DEFAULT_PORT);
    Ok(Settings {
        addr: SocketAddr::new(host, port),
        gateway,
    })
}

pub fn serve(a: ServeArgs) -> Result<(), Failure> {
    let s = resolve(a)?;
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
    rt.block_on(monitomation_gateway::serve(s.gateway, s.addr))
        .map_err(|e| match e {
            monitomation_gateway::GatewayError::InvalidSpeed(_) => Failure::Invalid(e.to_string()),
            _ => Failure::Io(e.to_string()),
        })
}
