//! Simulation, signal processing and calibration for a flexible hybrid
//! force and proximity sensor skin.

pub mod calibration;
pub mod characterize;
pub mod daq;
pub mod dsp;
pub mod physics;
pub mod pipeline;
pub mod poly;
pub mod robot;
pub mod scenario;
pub mod session;
pub mod wire;

use rand::RngCore;

/// Short reborrow of an optional noise source, so it can be handed out in a loop.
pub(crate) fn reborrow<'a>(rng: &'a mut Option<&mut dyn RngCore>) -> Option<&'a mut dyn RngCore> {
    match rng {
        Some(r) => Some(&mut **r),
        None => None,
    }
}
