use serde::{Deserialize, Serialize};

/// Dense polynomial with coefficients in ascending order of degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    /// Smallest value of the derivative on `[lo, hi]`, sampled on `n` points.
    pub fn min_slope(&self, lo: f64, hi: f64, n: usize) -> f64 {
        let d = self.derivative();
        (0..n)
            .map(|i| d.eval(lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64))
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horner_matches_power_sum() {
        let p = Polynomial::new(vec![1.0, -2.0, 0.5, 3.0]);
        let x: f64 = 1.7;
        let direct = 1.0 - 2.0 * x + 0.5 * x.powi(2) + 3.0 * x.powi(3);
        assert!((p.eval(x) - direct).abs() < 1e-12);
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn derivative_of_cubic() {
        let p = Polynomial::new(vec![1.0, -2.0, 0.5, 3.0]);
        assert_eq!(p.derivative().coeffs(), &[-2.0, 1.0, 9.0]);
        assert!(Polynomial::new(vec![4.0]).derivative().coeffs().is_empty());
    }
}
