use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use super::DspError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub order: usize,
    /// Hz
    pub cutoff: f64,
    /// Hz
    pub sample_rate: f64,
}

impl FilterSpec {
    /// Sixth order, 1 Hz cutoff.
    pub fn proximity(sample_rate: f64) -> Self {
        Self {
            order: 6,
            cutoff: 1.0,
            sample_rate,
        }
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.order < 2 || self.order % 2 != 0 {
            return Err(DspError::InvalidSpec(format!("order {} must be even and ≥ 2", self.order)));
        }
        if !(self.cutoff > 0.0 && self.cutoff < self.sample_rate / 2.0) {
            return Err(DspError::InvalidSpec(format!(
                "cutoff {} Hz must lie in (0, {}) Hz",
                self.cutoff,
                self.sample_rate / 2.0
            )));
        }
        Ok(())
    }
}

/// One biquad, `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Section {
    fn response(&self, w: f64) -> Complex<f64> {
        let z1 = Complex::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b[0] + z1 * self.b[1] + z2 * self.b[2];
        let den = 1.0 + z1 * self.a[0] + z2 * self.a[1];
        num / den
    }

    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / (1.0 + self.a[0] + self.a[1])
    }

    /// Largest pole magnitude.
    pub fn pole_radius(&self) -> f64 {
        let (a1, a2) = (self.a[0], self.a[1]);
        let disc = a1 * a1 - 4.0 * a2;
        if disc < 0.0 {
            a2.sqrt()
        } else {
            let s = disc.sqrt();
            ((-a1 + s) / 2.0).abs().max(((-a1 - s) / 2.0).abs())
        }
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lowpass {
    pub spec: FilterSpec,
    pub sections: Vec<Section>,
}

/// Butterworth low-pass via the bilinear transform, prewarped so the
/// −3 dB point lands exactly on the cutoff.
pub fn design_lowpass(spec: FilterSpec) -> Result<Lowpass, DspError> {
    spec.validate()?;
    let k = (PI * spec.cutoff / spec.sample_rate).tan();
    let k2 = k * k;
    let n = spec.order;
    let sections = (0..n / 2)
        .map(|i| {
            // s² + αs + 1 for the conjugate pole pair at angle θ
            let theta = PI * (2 * i + 1) as f64 / (2 * n) as f64;
            let alpha = 2.0 * theta.sin();
            let norm = 1.0 / (1.0 + alpha * k + k2);
            let b0 = k2 * norm;
            Section {
                b: [b0, 2.0 * b0, b0],
                a: [2.0 * (k2 - 1.0) * norm, (1.0 - alpha * k + k2) * norm],
            }
        })
        .collect();
    Ok(Lowpass { spec, sections })
}

impl Lowpass {
    pub fn magnitude(&self, freq: f64) -> f64 {
        let w = 2.0 * PI * freq / self.spec.sample_rate;
        self.sections.iter().map(|s| s.response(w)).product::<Complex<f64>>().norm()
    }

    pub fn dc_gain(&self) -> f64 {
        self.sections.iter().map(Section::dc_gain).product()
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(|s| s.pole_radius() < 1.0)
    }

    /// Output standard deviation per unit of white input noise: the root
    /// energy of the impulse response.
    pub fn noise_gain(&self) -> f64 {
        let mut state = FilterState::zeros(self);
        let mut energy = state.process(self, 1.0).powi(2);
        let mut quiet = 0;
        for _ in 0..10_000_000 {
            let h = state.process(self, 0.0);
            energy += h * h;
            quiet = if h * h < 1e-20 * energy { quiet + 1 } else { 0 };
            if quiet > 1000 {
                break;
            }
        }
        energy.sqrt()
    }
}

/// Transposed direct form II delay line of every section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    z: Vec<[f64; 2]>,
}

impl FilterState {
    pub fn zeros(filter: &Lowpass) -> Self {
        Self {
            z: vec![[0.0; 2]; filter.sections.len()],
        }
    }

    /// State the filter would hold after an infinitely long constant input `x`.
    pub fn settled(filter: &Lowpass, x: f64) -> Self {
        let mut input = x;
        let z = filter
            .sections
            .iter()
            .map(|s| {
                let y = s.dc_gain() * input;
                let z2 = s.b[2] * input - s.a[1] * y;
                let z1 = s.b[1] * input - s.a[0] * y + z2;
                input = y;
                [z1, z2]
            })
            .collect();
        Self { z }
    }

    pub fn process(&mut self, filter: &Lowpass, x: f64) -> f64 {
        let mut v = x;
        for (s, z) in filter.sections.iter().zip(self.z.iter_mut()) {
            let y = s.b[0] * v + z[0];
            z[0] = s.b[1] * v - s.a[0] * y + z[1];
            z[1] = s.b[2] * v - s.a[1] * y;
            v = y;
        }
        v
    }
}

/// Causal filtering of a chunk; feeding the returned state back in makes
/// chunked processing identical to one pass over the whole signal.
pub fn filter_stream(samples: &[f64], filter: &Lowpass, mut state: FilterState) -> (Vec<f64>, FilterState) {
    let out = samples.iter().map(|&x| state.process(filter, x)).collect();
    (out, state)
}
