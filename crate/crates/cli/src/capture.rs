//! `.pxb` captures: wire frames back to back, nothing else.

use std::path::Path;

use prexel_core::daq::{DaqConfig, TimedFrame};
use prexel_core::pipeline::{HostEvent, HostPipeline};
use prexel_core::wire::{decode_all, Diagnostic, Frame};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn encode_frames<'a>(frames: impl IntoIterator<Item = &'a Frame>) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    for f in frames {
        f.encode_into(&mut out).map_err(CliError::data)?;
    }
    Ok(out)
}

pub fn write_capture<'a>(path: &Path, frames: impl IntoIterator<Item = &'a Frame>) -> Result<(), CliError> {
    std::fs::write(path, encode_frames(frames)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub struct Capture {
    pub frames: Vec<Frame>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn read_capture(path: &Path) -> Result<Capture, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let (frames, diagnostics) = decode_all(&bytes);
    if frames.is_empty() && !bytes.is_empty() {
        return Err(CliError::Data(format!("{}: no valid frames", path.display())));
    }
    Ok(Capture { frames, diagnostics })
}

/// Puts the frames back on the emulator timeline: the k-th tactile frame at
/// `k / tactile_rate`, the k-th proximity frame at `k / proximity_rate`.
pub fn retime(frames: Vec<Frame>, daq: &DaqConfig) -> Vec<TimedFrame> {
    let (mut nt, mut np) = (0u64, 0u64);
    frames
        .into_iter()
        .map(|frame| {
            let t = if frame.is_tactile() {
                nt += 1;
                (nt - 1) as f64 / daq.tactile_rate
            } else {
                np += 1;
                (np - 1) as f64 / daq.proximity_rate
            };
            TimedFrame { t, frame }
        })
        .collect()
}

/// One line of an estimates file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub t: f64,
    pub seq: u16,
    pub event: Option<HostEvent>,
}

pub fn estimates(frames: &[TimedFrame], host: &mut HostPipeline) -> Vec<Estimate> {
    frames
        .iter()
        .map(|tf| Estimate {
            t: tf.t,
            seq: tf.frame.seq,
            event: host.on_frame(&tf.frame),
        })
        .collect()
}

pub fn write_estimates(path: Option<&Path>, lines: &[Estimate]) -> Result<(), CliError> {
    let mut text = String::new();
    for e in lines {
        text.push_str(&serde_json::to_string(e).map_err(CliError::data)?);
        text.push('\n');
    }
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}
