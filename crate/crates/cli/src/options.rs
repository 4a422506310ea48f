use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prexel_core::session::SessionConfig;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "prexel", version, about = "Flexible force and proximity skin: simulator, calibration and live service")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    #[value(name = "16px")]
    Strip16,
    #[value(name = "64px")]
    Patch64,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Strip16 => "16px",
            Preset::Patch64 => "64px",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Session config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Turn every noise source off.
    #[arg(long, global = true, conflicts_with = "seed")]
    pub noiseless: bool,
    #[arg(long, global = true)]
    pub preset: Option<Preset>,
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long = "rate-tactile", global = true, value_name = "HZ")]
    pub rate_tactile: Option<f64>,
    #[arg(long = "rate-prox", global = true, value_name = "HZ")]
    pub rate_prox: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write the raw capture plus a run report.
    Simulate {
        /// s; defaults to the config, else the scenario end plus 2 s.
        #[arg(long)]
        duration: Option<f64>,
        /// Also write host estimates as JSON lines.
        #[arg(long, value_name = "PATH")]
        estimates: Option<PathBuf>,
    },
    /// Fit models from experiment logs and write a model file.
    Calibrate {
        #[arg(long, value_name = "CSV")]
        force_log: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        drift_log: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        prox_log: Option<PathBuf>,
        /// Record the three logs on the simulated bench into DIR first.
        #[arg(long, value_name = "DIR")]
        bench: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        degree: usize,
    },
    /// Datasheet figures from the simulated bench, or a summary of a capture.
    Characterize {
        #[arg(long, value_name = "PXB")]
        capture: Option<PathBuf>,
        /// Shorter drift test, h.
        #[arg(long)]
        drift_hours: Option<f64>,
    },
    /// Re-run host processing over a capture, or stream it to clients.
    Replay {
        capture: PathBuf,
        /// Playback speed factor when serving.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Serve the replay on this address instead of writing estimates.
        #[arg(long, value_name = "ADDR")]
        listen: Option<SocketAddr>,
    },
    /// Live simulator with a WebSocket endpoint at /ws.
    Serve {
        #[arg(long, value_name = "ADDR", default_value = "127.0.0.1:8765")]
        listen: SocketAddr,
    },
}

impl Common {
    /// Config file (if any) with the command-line overrides applied.
    pub fn session_config(&self) -> Result<SessionConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => SessionConfig::load(p)?,
            None => SessionConfig::default(),
        };
        if let Some(p) = self.preset {
            cfg.preset = p.name().into();
        }
        if self.noiseless {
            cfg.seed = None;
        } else if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(r) = self.rate_tactile {
            cfg.daq.tactile_rate = r;
        }
        if let Some(r) = self.rate_prox {
            cfg.daq.proximity_rate = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
