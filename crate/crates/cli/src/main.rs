use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use prexel_cli::capture::write_estimates;
use prexel_cli::commands::{self, Logs};
use prexel_cli::messages::Layout;
use prexel_cli::options::{Cli, Command, Common};
use prexel_cli::{service, CliError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("prexel: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(CliError::data)
}

fn out_or(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| default.into())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = &cli.common;
    match cli.command {
        Command::Simulate { duration, estimates } => {
            let cfg = common.session_config()?;
            let out = out_or(common, "capture.pxb");
            let res = commands::simulate(cfg, duration, &out)?;
            if let Some(p) = estimates {
                write_estimates(Some(&p), &res.estimates)?;
            }
            let r = &res.report;
            println!(
                "{}: {} tactile + {} proximity frames over {:.2} s, {} dropped, {} triggers, touches: {}; report {}",
                out.display(),
                r.frames.tactile,
                r.frames.proximity,
                r.duration,
                r.dropped,
                r.triggers.len(),
                commands::touch_summary(&r.touches),
                out.with_extension("json").display()
            );
        }
        Command::Calibrate {
            force_log,
            drift_log,
            prox_log,
            bench,
            degree,
        } => {
            let cfg = common.session_config()?;
            let model = cfg.sensor_model()?;
            let logs = match bench {
                Some(dir) => {
                    if force_log.is_some() || drift_log.is_some() || prox_log.is_some() {
                        return Err(CliError::Usage("--bench records its own logs; drop the --*-log flags".into()));
                    }
                    commands::bench_logs(&model, &cfg.daq, cfg.seed, &dir)?
                }
                None => Logs {
                    force: force_log,
                    drift: drift_log,
                    proximity: prox_log,
                },
            };
            let out = out_or(common, "models.json");
            let (_, report) = commands::calibrate(&model, &logs, degree, &out)?;
            println!(
                "{} written ({}{}{}); diagnostics in {}",
                out.display(),
                if report.force.is_some() { "force " } else { "" },
                if report.drift.is_some() { "drift " } else { "" },
                if report.proximity.is_some() { "proximity" } else { "" },
                commands::diagnostics_path(&out).display()
            );
        }
        Command::Characterize { capture, drift_hours } => {
            let cfg = common.session_config()?;
            let (report, table) = match &capture {
                Some(p) => commands::characterize_capture(&cfg, p)?,
                None => commands::characterize_bench(&cfg, drift_hours)?,
            };
            let out = out_or(common, "characterization.json");
            commands::write_report(&out, &report)?;
            print!("{table}");
        }
        Command::Replay { capture, speed, listen } => {
            let cfg = common.session_config()?;
            match listen {
                None => {
                    let lines = commands::replay_estimates(&cfg, &capture)?;
                    write_estimates(common.out.as_deref(), &lines)?;
                }
                Some(addr) => {
                    let cap = prexel_cli::capture::read_capture(&capture)?;
                    let model = cfg.sensor_model()?;
                    commands::check_layout(&cap.frames, &model)?;
                    let host = cfg.host_pipeline(&model, cfg.model_file()?.as_ref())?;
                    let frames = prexel_cli::capture::retime(cap.frames, &cfg.daq);
                    let layout = Layout {
                        rows: model.layout.rows,
                        cols: model.layout.cols,
                    };
                    runtime()?.block_on(async {
                        let h = service::start_replay(frames, host, layout, cfg.avoidance, cfg.start_pose, speed, addr)
                            .await?;
                        println!("replaying on ws://{}/ws once a client connects", h.addr);
                        h.finished().await
                    })?;
                }
            }
        }
        Command::Serve { listen } => {
            let cfg = common.session_config()?;
            runtime()?.block_on(async {
                let h = service::start_live(cfg, listen).await?;
                println!("serving on ws://{}/ws", h.addr);
                let _ = tokio::signal::ctrl_c().await;
                h.shutdown().await
            })?;
        }
    }
    Ok(())
}
