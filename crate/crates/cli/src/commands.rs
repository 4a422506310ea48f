use std::path::{Path, PathBuf};

use prexel_core::calibration::{
    fit_drift, fit_force_conductance, fit_proximity, read_drift_log, read_force_log, read_proximity_log,
    DriftFitConfig, ForceRuns, ModelFile, ProximityModel, MODEL_FILE_VERSION,
};
use prexel_core::characterize::{
    characterize, prexel_series, summarize_capture, CaptureSummary, CharacterizeConfig, Characterization,
};
use prexel_core::daq::{measure_counter, resistance_of_adc, Daq, DaqConfig};
use prexel_core::physics::{GroundTruthState, SensorModel};
use prexel_core::robot::TouchClass;
use prexel_core::scenario::{Action, Scenario, ScenarioTruth};
use prexel_core::session::{Mode, Session, SessionConfig, TouchRecord};
use prexel_core::wire::{decode_all, Payload};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capture::{self, Estimate};
use crate::CliError;

pub const REPORT_VERSION: u32 = 1;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(CliError::data)?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub tactile: f64,
    pub proximity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameCounts {
    pub tactile: u64,
    pub proximity: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub preset: String,
    pub mode: Mode,
    pub seed: Option<u64>,
    /// s
    pub duration: f64,
    pub rates: Rates,
    pub frames: FrameCounts,
    /// Frames the capture lost: encoding failures plus anything that did not
    /// decode back.
    pub dropped: u64,
    pub bytes: u64,
    /// Safe-pose commands, s.
    pub triggers: Vec<f64>,
    pub touches: Vec<TouchRecord>,
    pub final_pose: [f64; 3],
    pub capture: PathBuf,
}

pub struct SimulateOutput {
    pub report: RunReport,
    pub estimates: Vec<Estimate>,
}

/// Runs the session and writes `out` (`.pxb`) and the report next to it.
pub fn simulate(mut cfg: SessionConfig, duration: Option<f64>, out: &Path) -> Result<SimulateOutput, CliError> {
    if let Some(d) = duration {
        if !(d > 0.0) {
            return Err(CliError::Usage(format!("duration must be positive, got {d}")));
        }
        cfg.duration = Some(d);
    }
    cfg.record_frames = false;
    let mut session = Session::new(cfg)?;
    let until = session.planned_duration();
    let mut bytes = Vec::new();
    let mut estimates = Vec::new();
    let mut dropped: u64 = 0;
    let (mut nt, mut np) = (0u64, 0u64);
    while session.next_time() < until {
        let out = session.step()?;
        if out.frame.frame.is_tactile() {
            nt += 1;
        } else {
            np += 1;
        }
        if out.frame.frame.encode_into(&mut bytes).is_err() {
            dropped += 1;
        }
        estimates.push(Estimate {
            t: out.frame.t,
            seq: out.frame.frame.seq,
            event: out.event,
        });
    }
    let (decoded, _) = decode_all(&bytes);
    dropped += (nt + np - dropped).saturating_sub(decoded.len() as u64);
    std::fs::write(out, &bytes).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    let cfg = &session.cfg;
    let log = session.log();
    let report = RunReport {
        version: REPORT_VERSION,
        preset: cfg.preset.clone(),
        mode: cfg.mode,
        seed: cfg.seed,
        duration: until,
        rates: Rates {
            tactile: cfg.daq.tactile_rate,
            proximity: cfg.daq.proximity_rate,
        },
        frames: FrameCounts {
            tactile: nt,
            proximity: np,
        },
        dropped,
        bytes: bytes.len() as u64,
        triggers: log.triggers.clone(),
        touches: log.touches.clone(),
        final_pose: session.robot().pose(),
        capture: out.to_path_buf(),
    };
    write_json(&out.with_extension("json"), &report)?;
    Ok(SimulateOutput { report, estimates })
}

/// Host estimates over a capture, as the live run would have produced them.
pub fn replay_estimates(cfg: &SessionConfig, capture_path: &Path) -> Result<Vec<Estimate>, CliError> {
    let cap = capture::read_capture(capture_path)?;
    for d in &cap.diagnostics {
        eprintln!("{}: {d:?}", capture_path.display());
    }
    let model = cfg.sensor_model()?;
    check_layout(&cap.frames, &model)?;
    let mut host = cfg.host_pipeline(&model, cfg.model_file()?.as_ref())?;
    let frames = capture::retime(cap.frames, &cfg.daq);
    Ok(capture::estimates(&frames, &mut host))
}

pub fn check_layout(frames: &[prexel_core::wire::Frame], model: &SensorModel) -> Result<(), CliError> {
    let first = frames.iter().find_map(|f| match &f.payload {
        Payload::Tactile { rows, cols, .. } => Some((*rows as usize, *cols as usize)),
        _ => None,
    });
    match first {
        Some((r, c)) if (r, c) != (model.layout.rows, model.layout.cols) => Err(CliError::Data(format!(
            "capture holds {r}x{c} scans but the config describes a {}x{} sensor",
            model.layout.rows, model.layout.cols
        ))),
        _ => Ok(()),
    }
}

// ---------------------------------------------------------------- calibrate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceDiagnostics {
    pub runs: usize,
    pub knots: usize,
    pub degree: usize,
    /// RMS of the run mean about the fitted curve, S.
    pub rms_residual: f64,
    pub max_relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftDiagnostics {
    pub samples: usize,
    pub rms: f64,
    pub iterations: usize,
    pub drift_free: bool,
    pub span_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityDiagnostics {
    pub baseline_samples: usize,
    pub distances: usize,
    /// RMS of the counters about the fitted curve, counts.
    pub rms_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub version: u32,
    pub force: Option<ForceDiagnostics>,
    pub drift: Option<DriftDiagnostics>,
    pub proximity: Option<ProximityDiagnostics>,
}

pub struct Logs {
    pub force: Option<PathBuf>,
    pub drift: Option<PathBuf>,
    pub proximity: Option<PathBuf>,
}

fn open(path: &Path) -> Result<std::fs::File, CliError> {
    std::fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn in_file<T, E: std::fmt::Display>(path: &Path, r: Result<T, E>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Fits whatever logs are given and writes the model file and, next to it,
/// `<stem>.diagnostics.json`.
pub fn calibrate(
    model: &SensorModel,
    logs: &Logs,
    degree: usize,
    out: &Path,
) -> Result<(ModelFile, CalibrationReport), CliError> {
    if logs.force.is_none() && logs.drift.is_none() && logs.proximity.is_none() {
        return Err(CliError::Usage("give at least one of --force-log, --drift-log, --prox-log or --bench".into()));
    }
    let mut file = ModelFile::default();
    let mut report = CalibrationReport {
        version: MODEL_FILE_VERSION,
        ..CalibrationReport::default()
    };
    if let Some(p) = &logs.force {
        let runs = in_file(p, read_force_log(open(p)?))?;
        let valid = (model.piezo.min_reliable_force, model.piezo.force_range);
        let m = in_file(p, fit_force_conductance(&runs, degree, valid))?;
        report.force = Some(force_diagnostics(&runs, &m.poly, degree));
        file.force = Some(m);
    }
    if let Some(p) = &logs.drift {
        let (t, r) = in_file(p, read_drift_log(open(p)?))?;
        let fit = in_file(p, fit_drift(&t, &r, &DriftFitConfig::default()))?;
        report.drift = Some(DriftDiagnostics {
            samples: t.len(),
            rms: fit.rms,
            iterations: fit.iterations,
            drift_free: fit.drift_free,
            span_ok: fit.span_ok,
        });
        file.drift = Some(fit.model);
    }
    if let Some(p) = &logs.proximity {
        let (baseline, pairs) = in_file(p, read_proximity_log(open(p)?))?;
        let m = in_file(p, fit_proximity(&baseline, &pairs, model.capacitive.detection_range))?;
        report.proximity = Some(proximity_diagnostics(&baseline, &pairs, &m));
        file.proximity = Some(m);
    }
    in_file(out, file.save(out))?;
    write_json(&diagnostics_path(out), &report)?;
    Ok((file, report))
}

pub fn diagnostics_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or("models".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.diagnostics.json"))
}

fn force_diagnostics(runs: &ForceRuns, poly: &prexel_core::poly::Polynomial, degree: usize) -> ForceDiagnostics {
    let n = runs.conductance.len() as f64;
    let mut sq = 0.0;
    let mut worst: f64 = 0.0;
    for (k, &f) in runs.forces.iter().enumerate() {
        let mean = runs.conductance.iter().map(|r| r[k]).sum::<f64>() / n;
        let fit = poly.eval(f);
        sq += (mean - fit).powi(2);
        worst = worst.max(((mean - fit) / fit).abs());
    }
    ForceDiagnostics {
        runs: runs.conductance.len(),
        knots: runs.forces.len(),
        degree,
        rms_residual: (sq / runs.forces.len().max(1) as f64).sqrt(),
        max_relative_residual: worst,
    }
}

fn proximity_diagnostics(baseline: &[f64], pairs: &[(f64, f64)], m: &ProximityModel) -> ProximityDiagnostics {
    let sq: f64 = pairs.iter().map(|(x, c)| (c - (m.a / x + m.b)).powi(2)).sum();
    let mut d: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    d.sort_by(f64::total_cmp);
    d.dedup();
    ProximityDiagnostics {
        baseline_samples: baseline.len(),
        distances: d.len(),
        rms_residual: (sq / pairs.len().max(1) as f64).sqrt(),
    }
}

/// Records the three calibration experiments on the simulated bench and
/// writes `force.csv`, `drift.csv` and `proximity.csv` into `dir`.
pub fn bench_logs(model: &SensorModel, daq: &DaqConfig, seed: Option<u64>, dir: &Path) -> Result<Logs, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let logs = Logs {
        force: Some(dir.join("force.csv")),
        drift: Some(dir.join("drift.csv")),
        proximity: Some(dir.join("proximity.csv")),
    };
    let write = |p: &Option<PathBuf>, text: String| {
        let p = p.as_ref().expect("set above");
        std::fs::write(p, text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
    };
    write(&logs.force, force_bench(model, daq, seed)?)?;
    write(&logs.drift, drift_bench(model, daq, seed)?)?;
    write(&logs.proximity, proximity_bench(model, daq, seed))?;
    Ok(logs)
}

const BENCH_RUNS: usize = 6;
const BENCH_HOLD_S: f64 = 0.5;

/// Six staircase runs on prexel (0, 0); each level is read as the mean
/// conductance over the second half of its hold.
fn force_bench(model: &SensorModel, daq: &DaqConfig, seed: Option<u64>) -> Result<String, CliError> {
    let piezo = &model.piezo;
    let levels: Vec<f64> = (0..)
        .map(|i| piezo.min_reliable_force + 0.5 * i as f64)
        .take_while(|f| *f <= piezo.force_range + 1e-9)
        .collect();
    let run_len = BENCH_HOLD_S * (levels.len() + 2) as f64;
    let mut sc = Scenario::default();
    for r in 0..BENCH_RUNS {
        let t0 = r as f64 * run_len;
        for (i, &f) in levels.iter().enumerate() {
            sc.push(t0 + BENCH_HOLD_S * i as f64, Action::Press { row: 0, col: 0, force: f, ramp: 0.0 });
        }
        sc.push(t0 + BENCH_HOLD_S * levels.len() as f64, Action::Release { row: 0, col: 0, ramp: 0.0 });
    }
    let mut truth = ScenarioTruth::new(sc, model.layout.rows, model.layout.cols).map_err(CliError::data)?;
    let mut d = Daq::new(model.clone(), daq.clone(), seed).map_err(CliError::data)?;
    let frames = d.run_until(&mut truth, run_len * BENCH_RUNS as f64).map_err(CliError::data)?;
    let mut sums = vec![vec![(0.0, 0usize); levels.len()]; BENCH_RUNS];
    for tf in &frames {
        let Payload::Tactile { raw, .. } = &tf.frame.payload else { continue };
        let r = (tf.t / run_len) as usize;
        let local = tf.t - r as f64 * run_len;
        let i = (local / BENCH_HOLD_S) as usize;
        let within = local - i as f64 * BENCH_HOLD_S;
        if r < BENCH_RUNS && i < levels.len() && within >= 0.5 * BENCH_HOLD_S {
            if let Some(ohm) = resistance_of_adc(raw[0], daq).filter(|o| *o > 0.0) {
                sums[r][i].0 += 1.0 / ohm;
                sums[r][i].1 += 1;
            }
        }
    }
    let mut text = String::from("run,force_n,conductance_s\n");
    for (r, run) in sums.iter().enumerate() {
        for (f, (s, n)) in levels.iter().zip(run) {
            if *n == 0 {
                return Err(CliError::Data(format!("no readings at {f} N, raise the tactile rate")));
            }
            text.push_str(&format!("{},{f},{:e}\n", r + 1, s / *n as f64));
        }
    }
    Ok(text)
}

const BENCH_DRIFT_S: f64 = 3.0 * 3600.0;

/// Three hours at 8.1 N on prexel (0, 0), once a second.
fn drift_bench(model: &SensorModel, daq: &DaqConfig, seed: Option<u64>) -> Result<String, CliError> {
    let cfg = DaqConfig {
        tactile_rate: 1.0,
        proximity_rate: 1.0,
        ..daq.clone()
    };
    let mut sc = Scenario::default();
    sc.push(0.0, Action::Press { row: 0, col: 0, force: 8.1, ramp: 0.0 });
    let mut truth = ScenarioTruth::new(sc, model.layout.rows, model.layout.cols).map_err(CliError::data)?;
    let mut d = Daq::new(model.clone(), cfg.clone(), seed).map_err(CliError::data)?;
    let frames = d.run_until(&mut truth, BENCH_DRIFT_S).map_err(CliError::data)?;
    let onset = d.load_onsets()[0].unwrap_or(0.0);
    let (times, ohms) = prexel_series(&frames, 0, &cfg);
    let mut text = String::from("time_s,resistance_ohm\n");
    for (t, r) in times.iter().zip(&ohms) {
        text.push_str(&format!("{},{r}\n", t - onset));
    }
    Ok(text)
}

/// Baseline readings with nothing near, then a hand held at 10 mm steps.
fn proximity_bench(model: &SensorModel, daq: &DaqConfig, seed: Option<u64>) -> String {
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let (rows, cols) = (model.layout.rows, model.layout.cols);
    let mut read = |x: Option<f64>| {
        let mut s = GroundTruthState::empty(rows, cols);
        if let Some(x) = x {
            s = s.with_hand(x);
        }
        let noise = rng.as_mut().map(|r| r as &mut dyn rand::RngCore);
        measure_counter(&s, daq, &model.capacitive, noise).counts
    };
    let mut text = String::from("distance_mm,counter\n");
    for _ in 0..200 {
        text.push_str(&format!(",{}\n", read(None)));
    }
    let top = model.capacitive.detection_range;
    for x in (1..).map(|i| 10.0 * i as f64).take_while(|x| *x <= top) {
        for _ in 0..20 {
            text.push_str(&format!("{x},{}\n", read(Some(x))));
        }
    }
    text
}

// ---------------------------------------------------------------- characterize

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CharacterizeReport {
    Bench {
        version: u32,
        #[serde(flatten)]
        figures: Characterization,
    },
    Capture {
        version: u32,
        #[serde(flatten)]
        summary: CaptureSummary,
    },
}

pub fn characterize_bench(
    cfg: &SessionConfig,
    drift_hours: Option<f64>,
) -> Result<(CharacterizeReport, String), CliError> {
    let model = cfg.sensor_model()?;
    let mut c = CharacterizeConfig {
        seed: cfg.seed,
        ..CharacterizeConfig::default()
    };
    if let Some(h) = drift_hours {
        if !(h > 0.0) {
            return Err(CliError::Usage(format!("drift hours must be positive, got {h}")));
        }
        c.drift_hours = h;
    }
    let figures = characterize(&model, &cfg.daq, &c).map_err(CliError::data)?;
    let table = figures.table();
    Ok((
        CharacterizeReport::Bench {
            version: REPORT_VERSION,
            figures,
        },
        table,
    ))
}

pub fn characterize_capture(cfg: &SessionConfig, path: &Path) -> Result<(CharacterizeReport, String), CliError> {
    let model = cfg.sensor_model()?;
    let cap = capture::read_capture(path)?;
    check_layout(&cap.frames, &model)?;
    let frames = capture::retime(cap.frames, &cfg.daq);
    let s = summarize_capture(&frames, model.layout.cols, &cfg.daq);
    let opt = |v: Option<f64>, unit: &str| v.map_or("-".to_string(), |v| format!("{v:.2}{unit}"));
    let rows = [
        ("Tactile frames", s.tactile_frames.to_string()),
        ("Proximity frames", s.proximity_frames.to_string()),
        ("Duration", format!("{:.2} s", s.duration)),
        (
            "Loaded prexel",
            s.loaded_prexel.map_or("-".to_string(), |(r, c)| format!("row {r}, col {c}")),
        ),
        ("Static loading (relative to initial)", opt(s.static_loading, "%")),
        ("Proximity counter mean", opt(s.counter_mean, " counts")),
        ("Proximity counter deviation", opt(s.counter_sd, " counts")),
        ("Saturated counter readings", s.saturated_counters.to_string()),
    ];
    let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut table = format!("{:<w$}  Value\n{}\n", "Parameter", "-".repeat(w + 24));
    for (k, v) in rows {
        table.push_str(&format!("{k:<w$}  {v}\n"));
    }
    Ok((
        CharacterizeReport::Capture {
            version: REPORT_VERSION,
            summary: s,
        },
        table,
    ))
}

pub fn write_report<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_json(path, value)
}

/// Touch classes in a report, for a one-line summary.
pub fn touch_summary(touches: &[TouchRecord]) -> String {
    let count = |c: TouchClass| touches.iter().filter(|t| t.class == c).count();
    format!(
        "{} hand, {} object, {} unknown",
        count(TouchClass::HumanHand),
        count(TouchClass::Object),
        count(TouchClass::Unknown)
    )
}
