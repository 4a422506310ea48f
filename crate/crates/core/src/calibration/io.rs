//! Experiment logs (CSV) and fitted model files (JSON).
//!
//! | log        | header                         |
//! |------------|--------------------------------|
//! | force      | `run,force_n,conductance_s`    |
//! | drift      | `time_s,resistance_ohm`        |
//! | proximity  | `distance_mm,counter` (empty distance = baseline) |

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CalibrationError, ForceConductanceModel, ForceRuns, ProximityModel};
use crate::physics::DriftModel;

pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
struct ForceRow {
    run: u32,
    force_n: f64,
    conductance_s: f64,
}

#[derive(Debug, Deserialize)]
struct DriftRow {
    time_s: f64,
    resistance_ohm: f64,
}

#[derive(Debug, Deserialize)]
struct ProximityRow {
    distance_mm: Option<f64>,
    counter: f64,
}

fn expect_headers<R: Read>(r: &mut csv::Reader<R>, want: &[&str]) -> Result<(), CalibrationError> {
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got != want {
        return Err(CalibrationError::Format(format!(
            "expected header {}, found {}",
            want.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

/// Rows are grouped by `run`; every run must visit the same forces in the same order.
pub fn read_force_log<R: Read>(input: R) -> Result<ForceRuns, CalibrationError> {
    let mut r = csv::Reader::from_reader(input);
    expect_headers(&mut r, &["run", "force_n", "conductance_s"])?;
    let mut ids: Vec<u32> = Vec::new();
    let mut runs: Vec<Vec<(f64, f64)>> = Vec::new();
    for row in r.deserialize() {
        let row: ForceRow = row?;
        let k = match ids.iter().position(|&id| id == row.run) {
            Some(k) => k,
            None => {
                ids.push(row.run);
                runs.push(Vec::new());
                ids.len() - 1
            }
        };
        runs[k].push((row.force_n, row.conductance_s));
    }
    let Some(first) = runs.first() else {
        return Err(CalibrationError::InsufficientData("empty force log".into()));
    };
    let forces: Vec<f64> = first.iter().map(|p| p.0).collect();
    for (id, run) in ids.iter().zip(&runs) {
        if run.len() != forces.len() || run.iter().zip(&forces).any(|(p, f)| (p.0 - f).abs() > 1e-9) {
            return Err(CalibrationError::Format(format!("run {id} does not share the force sequence of run {}", ids[0])));
        }
    }
    Ok(ForceRuns {
        forces,
        conductance: runs.into_iter().map(|r| r.into_iter().map(|p| p.1).collect()).collect(),
    })
}

pub fn read_drift_log<R: Read>(input: R) -> Result<(Vec<f64>, Vec<f64>), CalibrationError> {
    let mut r = csv::Reader::from_reader(input);
    expect_headers(&mut r, &["time_s", "resistance_ohm"])?;
    let mut out = (Vec::new(), Vec::new());
    for row in r.deserialize() {
        let row: DriftRow = row?;
        out.0.push(row.time_s);
        out.1.push(row.resistance_ohm);
    }
    Ok(out)
}

/// Returns `(baseline counters, (distance, counter) pairs)`.
pub fn read_proximity_log<R: Read>(input: R) -> Result<(Vec<f64>, Vec<(f64, f64)>), CalibrationError> {
    let mut r = csv::Reader::from_reader(input);
    expect_headers(&mut r, &["distance_mm", "counter"])?;
    let mut baseline = Vec::new();
    let mut pairs = Vec::new();
    for row in r.deserialize() {
        let row: ProximityRow = row?;
        match row.distance_mm {
            Some(x) => pairs.push((x, row.counter)),
            None => baseline.push(row.counter),
        }
    }
    Ok((baseline, pairs))
}

/// Versioned bundle of fitted models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<ForceConductanceModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proximity: Option<ProximityModel>,
}

impl Default for ModelFile {
    fn default() -> Self {
        Self {
            version: MODEL_FILE_VERSION,
            force: None,
            drift: None,
            proximity: None,
        }
    }
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String, CalibrationError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, CalibrationError> {
        let f: Self = serde_json::from_str(text)?;
        if f.version != MODEL_FILE_VERSION {
            return Err(CalibrationError::Format(format!(
                "model file version {} (this build reads {MODEL_FILE_VERSION})",
                f.version
            )));
        }
        Ok(f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CalibrationError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CalibrationError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;

    #[test]
    fn force_log_groups_runs() {
        let text = "run,force_n,conductance_s\n1,1.0,2e-4\n1,2.0,3e-4\n2,1.0,2.1e-4\n2,2.0,3.1e-4\n";
        let runs = read_force_log(text.as_bytes()).unwrap();
        assert_eq!(runs.forces, vec![1.0, 2.0]);
        assert_eq!(runs.conductance, vec![vec![2e-4, 3e-4], vec![2.1e-4, 3.1e-4]]);
    }

    #[test]
    fn force_log_with_mismatched_runs() {
        let text = "run,force_n,conductance_s\n1,1.0,2e-4\n1,2.0,3e-4\n2,1.0,2.1e-4\n";
        assert!(read_force_log(text.as_bytes()).is_err());
        assert!(read_force_log("f,g\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn proximity_log_splits_baseline() {
        let text = "distance_mm,counter\n,1611\n,1609\n20,1771\n";
        let (b, p) = read_proximity_log(text.as_bytes()).unwrap();
        assert_eq!(b, vec![1611.0, 1609.0]);
        assert_eq!(p, vec![(20.0, 1771.0)]);
    }

    #[test]
    fn drift_log() {
        let (t, r) = read_drift_log("time_s,resistance_ohm\n0,870\n1,869.9\n".as_bytes()).unwrap();
        assert_eq!(t, vec![0.0, 1.0]);
        assert_eq!(r, vec![870.0, 869.9]);
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("models.json");
        let file = ModelFile {
            force: Some(ForceConductanceModel::from_poly(Polynomial::new(vec![1e-4, 1.5e-4]), (0.5, 15.0))),
            drift: Some(DriftModel::default()),
            proximity: Some(ProximityModel::new(3220.0, 1610.0, 9.6, 3.0, 100.0)),
            ..ModelFile::default()
        };
        file.save(&path).unwrap();
        assert_eq!(ModelFile::load(&path).unwrap(), file);
        let text = file.to_json().unwrap().replacen("\"version\": 1", "\"version\": 2", 1);
        assert!(ModelFile::from_json(&text).is_err());
    }
}
