use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::CalibrationError;
use crate::poly::Polynomial;

/// Largest accepted condition number of the column-scaled design matrix.
pub const MAX_CONDITION: f64 = 1.0e10;
/// Bisection stops once the conductance residual is below this, S.
pub const INVERSION_TOLERANCE: f64 = 1.0e-12;

/// Repeated force sweeps. `conductance[run][k]` was measured at `forces[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceRuns {
    pub forces: Vec<f64>,
    pub conductance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceConductanceModel {
    pub poly: Polynomial,
    pub valid_force: (f64, f64),
    pub knots: Vec<f64>,
    /// Across-run standard deviation at each knot, S.
    pub sigma: Vec<f64>,
    /// Half-width of the 95 % band at each knot, S.
    pub ci95: Vec<f64>,
}

impl ForceConductanceModel {
    pub fn degree(&self) -> usize {
        self.poly.degree()
    }

    pub fn conductance(&self, force: f64) -> f64 {
        self.poly.eval(force)
    }

    /// Band half-width at `force`, linear between knots.
    pub fn ci95_at(&self, force: f64) -> f64 {
        let k = &self.knots;
        if k.is_empty() {
            return 0.0;
        }
        let i = k.partition_point(|&x| x < force);
        if i == 0 {
            return self.ci95[0];
        }
        if i == k.len() {
            return self.ci95[k.len() - 1];
        }
        let w = (force - k[i - 1]) / (k[i] - k[i - 1]);
        self.ci95[i - 1] + w * (self.ci95[i] - self.ci95[i - 1])
    }

    /// Model built straight from a known polynomial, with no band.
    pub fn from_poly(poly: Polynomial, valid_force: (f64, f64)) -> Self {
        Self {
            poly,
            valid_force,
            knots: Vec::new(),
            sigma: Vec::new(),
            ci95: Vec::new(),
        }
    }
}

/// Weighted least-squares polynomial through the per-knot run averages.
///
/// Knots outside `valid_force` are dropped. Each run must cover every knot.
pub fn fit_force_conductance(
    runs: &ForceRuns,
    degree: usize,
    valid_force: (f64, f64),
) -> Result<ForceConductanceModel, CalibrationError> {
    let n_runs = runs.conductance.len();
    if n_runs < 2 {
        return Err(CalibrationError::InsufficientData(format!("{n_runs} runs, need at least 2")));
    }
    if let Some(r) = runs.conductance.iter().find(|r| r.len() != runs.forces.len()) {
        return Err(CalibrationError::InsufficientData(format!(
            "run has {} values for {} forces",
            r.len(),
            runs.forces.len()
        )));
    }
    let (lo, hi) = valid_force;
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (k, &f) in runs.forces.iter().enumerate() {
        if f < lo || f > hi {
            continue;
        }
        let vals: Vec<f64> = runs.conductance.iter().map(|r| r[k]).collect();
        let mean = vals.iter().sum::<f64>() / n_runs as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_runs - 1) as f64;
        rows.push((f, mean, var.sqrt()));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut distinct = rows.iter().map(|r| r.0).collect::<Vec<_>>();
    distinct.dedup();
    if distinct.len() < degree + 1 {
        return Err(CalibrationError::IllConditioned(format!(
            "{} distinct forces cannot determine a degree {degree} polynomial",
            distinct.len()
        )));
    }

    let m = rows.len();
    let p = degree + 1;
    // Spread grows with conductance, so knots are weighted by 1/σ when every
    // knot has a spread at all.
    let weights: Vec<f64> = if rows.iter().all(|r| r.2 > 0.0) {
        rows.iter().map(|r| 1.0 / r.2).collect()
    } else {
        vec![1.0; m]
    };
    let mut design = DMatrix::from_fn(m, p, |i, j| weights[i] * rows[i].0.powi(j as i32));
    // Column scaling keeps the condition number meaningful across degrees.
    let scale: Vec<f64> = (0..p).map(|j| design.column(j).norm()).collect();
    for (j, s) in scale.iter().enumerate() {
        design.column_mut(j).unscale_mut(*s);
    }
    let y = DVector::from_iterator(m, rows.iter().zip(&weights).map(|(r, w)| w * r.1));
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > MAX_CONDITION {
        return Err(CalibrationError::IllConditioned(format!(
            "condition number {cond:.3e} for degree {degree} on {m} knots"
        )));
    }
    let sol = svd
        .solve(&y, 0.0)
        .map_err(|e| CalibrationError::IllConditioned(e.to_string()))?;
    let coeffs: Vec<f64> = sol.iter().zip(&scale).map(|(c, s)| c / s).collect();
    let poly = Polynomial::new(coeffs);

    let fit_lo = rows[0].0;
    let fit_hi = rows[m - 1].0;
    let d = poly.derivative();
    if let Some(bad) = (0..=1000)
        .map(|i| fit_lo + (fit_hi - fit_lo) * i as f64 / 1000.0)
        .find(|&f| d.eval(f) <= 0.0)
    {
        return Err(CalibrationError::NotMonotone { force: bad });
    }

    Ok(ForceConductanceModel {
        poly,
        valid_force,
        knots: rows.iter().map(|r| r.0).collect(),
        sigma: rows.iter().map(|r| r.2).collect(),
        ci95: rows.iter().map(|r| 1.96 * r.2).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForceEstimate {
    Value { force: f64, half_width: f64 },
    /// Below the reliable force; no value is given.
    Unreliable,
    /// Above the characterised range.
    Saturated,
}

impl ForceEstimate {
    pub fn value(&self) -> Option<f64> {
        match self {
            ForceEstimate::Value { force, .. } => Some(*force),
            _ => None,
        }
    }
}

/// Inverts the model by bisection on the valid force range.
pub fn force_of_conductance(g: f64, model: &ForceConductanceModel) -> ForceEstimate {
    let (lo, hi) = model.valid_force;
    let g_lo = model.conductance(lo);
    let g_hi = model.conductance(hi);
    if !(g >= g_lo) {
        return ForceEstimate::Unreliable;
    }
    if g > g_hi {
        return ForceEstimate::Saturated;
    }
    let (mut a, mut b) = (lo, hi);
    let mut f = 0.5 * (a + b);
    for _ in 0..200 {
        f = 0.5 * (a + b);
        let r = model.conductance(f) - g;
        if r.abs() <= INVERSION_TOLERANCE || b - a < 1e-15 {
            break;
        }
        if r < 0.0 {
            a = f;
        } else {
            b = f;
        }
    }
    let slope = model.poly.derivative().eval(f);
    ForceEstimate::Value {
        force: f,
        half_width: model.ci95_at(f) / slope,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn runs_from(poly: &Polynomial, forces: &[f64], n: usize) -> ForceRuns {
        ForceRuns {
            forces: forces.to_vec(),
            conductance: (0..n).map(|_| forces.iter().map(|&f| poly.eval(f)).collect()).collect(),
        }
    }

    #[test]
    fn exact_linear_recovered() {
        let truth = Polynomial::new(vec![2e-4, 1.5e-4]);
        let forces: Vec<f64> = (0..30).map(|i| 0.5 + i as f64 * 0.5).collect();
        let m = fit_force_conductance(&runs_from(&truth, &forces, 3), 1, (0.5, 15.0)).unwrap();
        for (c, t) in m.poly.coeffs().iter().zip(truth.coeffs()) {
            assert!((c - t).abs() < 1e-10);
        }
        assert!(m.ci95.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn low_forces_are_excluded() {
        let truth = Polynomial::new(vec![2e-4, 1.5e-4]);
        let forces = [0.1, 0.3, 1.0, 2.0, 3.0];
        let m = fit_force_conductance(&runs_from(&truth, &forces, 2), 1, (0.5, 15.0)).unwrap();
        assert_eq!(m.knots, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn decreasing_data_rejected() {
        let truth = Polynomial::new(vec![3e-3, -1e-4]);
        let forces: Vec<f64> = (1..15).map(f64::from).collect();
        assert!(matches!(
            fit_force_conductance(&runs_from(&truth, &forces, 2), 1, (0.5, 15.0)),
            Err(CalibrationError::NotMonotone { .. })
        ));
    }

    #[test]
    fn too_high_degree_rejected() {
        let truth = Polynomial::new(vec![2e-4, 1.5e-4]);
        let forces = [1.0, 2.0, 3.0];
        assert!(matches!(
            fit_force_conductance(&runs_from(&truth, &forces, 2), 3, (0.5, 15.0)),
            Err(CalibrationError::IllConditioned(_))
        ));
    }

    #[test]
    fn single_run_rejected() {
        let truth = Polynomial::new(vec![2e-4, 1.5e-4]);
        assert!(fit_force_conductance(&runs_from(&truth, &[1.0, 2.0], 1), 1, (0.5, 15.0)).is_err());
    }

    #[test]
    fn inversion_markers_and_round_trip() {
        let poly = crate::physics::PiezoParams::default().conductance_poly;
        let m = ForceConductanceModel::from_poly(poly.clone(), (0.5, 15.0));
        assert_eq!(force_of_conductance(poly.eval(0.5) * 0.999, &m), ForceEstimate::Unreliable);
        assert_eq!(force_of_conductance(poly.eval(15.0) * 1.001, &m), ForceEstimate::Saturated);
        let f = force_of_conductance(poly.eval(8.1), &m).value().unwrap();
        assert!((f - 8.1).abs() < 1e-6);
        for i in 0..1000 {
            let f = 0.5 + 14.5 * i as f64 / 999.0;
            let back = force_of_conductance(poly.eval(f), &m).value().unwrap();
            assert!((back - f).abs() < 1e-6, "f={f} back={back}");
        }
    }

    #[test]
    fn half_width_maps_band_through_slope() {
        let truth = Polynomial::new(vec![2e-4, 1.5e-4]);
        let forces: Vec<f64> = (1..=10).map(f64::from).collect();
        let mut runs = runs_from(&truth, &forces, 2);
        for v in &mut runs.conductance[0] {
            *v += 1e-5;
        }
        for v in &mut runs.conductance[1] {
            *v -= 1e-5;
        }
        let m = fit_force_conductance(&runs, 1, (0.5, 15.0)).unwrap();
        let ForceEstimate::Value { half_width, .. } = force_of_conductance(truth.eval(5.0), &m) else {
            panic!("expected a value");
        };
        let sigma = (2.0f64).sqrt() * 1e-5;
        assert!((half_width - 1.96 * sigma / 1.5e-4).abs() < 1e-9);
    }
}
