use serde::{Deserialize, Serialize};

/// Normalised conductance rise after a step load.
///
/// A fast contact term and a slow creep term:
/// `y(t) = 1 − w·e^(−t/τ_fast) − (1 − w)·e^(−t/τ_slow)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub fast_weight: f64,
    pub fast_tau: f64,
    pub slow_tau: f64,
}

impl Default for StepResponse {
    /// 4.8 ms to 50 %, 34.5 ms from 10 % to 90 %.
    fn default() -> Self {
        Self {
            fast_weight: 0.6,
            fast_tau: 3.7896e-3,
            slow_tau: 25.322e-3,
        }
    }
}

impl StepResponse {
    pub fn first_order(tau: f64) -> Self {
        Self {
            fast_weight: 1.0,
            fast_tau: tau,
            slow_tau: tau,
        }
    }

    pub fn fraction(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let w = self.fast_weight;
        1.0 - w * (-t / self.fast_tau).exp() - (1.0 - w) * (-t / self.slow_tau).exp()
    }

    /// Uniformly sampled step of height `amplitude` applied at `onset`.
    pub fn sample(&self, amplitude: f64, onset: f64, sample_rate: f64, duration: f64) -> (Vec<f64>, Vec<f64>) {
        let n = (duration * sample_rate).round() as usize;
        let times: Vec<f64> = (0..n).map(|i| i as f64 / sample_rate).collect();
        let values = times.iter().map(|&t| amplitude * self.fraction(t - onset)).collect();
        (times, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_at_zero_and_settles() {
        let s = StepResponse::default();
        assert_eq!(s.fraction(0.0), 0.0);
        assert!((s.fraction(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn first_order_half_point() {
        let s = StepResponse::first_order(0.01);
        assert!((s.fraction(0.01 * 2.0f64.ln()) - 0.5).abs() < 1e-12);
    }
}
