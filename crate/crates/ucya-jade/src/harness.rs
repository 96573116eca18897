//! Reproducible Monte-Carlo experiment driver.
//!
//! An experiment is a scenario plus one sweep axis (SNR, antenna counts, or
//! path count), a trial count and a master seed. Every trial derives its own
//! seed by counter, runs the full pipeline
//! (simulate -> stage 1 -> beam selection -> stage 2 -> interpolation ->
//! estimation -> optional localization) and records matched per-path errors.
//! Trials are independent and run on the rayon pool when the `parallel`
//! feature is enabled; output is identical either way.
//!
//! Results are written as two CSV files with fixed headers (see
//! [`TRIALS_HEADER`] and [`SUMMARY_HEADER`]); all numbers carry nine
//! significant digits so reruns with the same master seed are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::prelude::*;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::array_model::ArrayConfig;
use crate::beamformer::{apply_stage, build_stage1, build_stage2, dispersion_factor, select_beams};
use crate::channel_sim::{
    simulate_snapshots, splitmix64, GainModel, PathParams, SimulationScenario,
};
use crate::crlb::{crlb, PipelinePoint};
use crate::exec;
use crate::jade::{estimate_all, JadeOptions, MusicBlock, PathEstimate};
use crate::localization::{
    forward_path, locate_two_paths, norm, ray_from_estimate, sub, Plane, SceneModel, Vec3,
};
use crate::mdsi::{reconstruct, MdsiMode};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// The swept axis.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// Single point at the scenario's own settings.
    None,
    SnrDb(Vec<f64>),
    /// `(N_V, N_H)` pairs.
    Antennas(Vec<(usize, usize)>),
    NPaths(Vec<usize>),
}

impl Sweep {
    pub fn len(&self) -> usize {
        match self {
            Sweep::None => 1,
            Sweep::SnrDb(v) => v.len(),
            Sweep::Antennas(v) => v.len(),
            Sweep::NPaths(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self) -> &'static str {
        match self {
            Sweep::None => "none",
            Sweep::SnrDb(_) => "snr_db",
            Sweep::Antennas(_) => "n_antennas",
            Sweep::NPaths(_) => "n_paths",
        }
    }

    fn numeric_value(&self, idx: usize) -> f64 {
        match self {
            Sweep::None => 0.0,
            Sweep::SnrDb(v) => v[idx],
            Sweep::Antennas(v) => (v[idx].0 * v[idx].1) as f64,
            Sweep::NPaths(v) => v[idx] as f64,
        }
    }
}

/// How the clock offset behaves in localization experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClockOffset {
    Known(f64),
    /// Zero-mean Gaussian with the given standard deviation, redrawn per
    /// trial and unknown to the estimator.
    UnknownGaussian(f64),
}

/// Scene description for localization experiments: the geometry is declared
/// input, the per-path angles/delays are derived from it.
#[derive(Debug, Clone)]
pub struct ExperimentScene {
    pub bs: Vec3,
    pub reflectors: Vec<Plane>,
    pub ms: Vec3,
    /// One hypothesis per path: `None` = LOS, `Some(i)` = reflector `i`.
    pub path_hypotheses: Vec<Option<usize>>,
    pub clock_offset: ClockOffset,
}

/// Complete experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub array: ArrayConfig,
    pub scenario: SimulationScenario,
    pub scene: Option<ExperimentScene>,
    pub sweep: Sweep,
    pub trials: usize,
    pub eta: f64,
    pub gamma_override: Option<f64>,
    pub mdsi_mode: MdsiMode,
    pub music_grid: usize,
    pub music_block: MusicBlock,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    pub locate: bool,
    /// Delay-uncertainty scale for the localization weight `1/(c sigma_tau)^2`.
    pub sigma_tau: f64,
    /// Compute the antenna-level CRLB per sweep point.
    pub with_crlb: bool,
}

/// Per-path truth/estimate/error record.
#[derive(Debug, Clone, Copy)]
pub struct PathErrorRecord {
    pub true_delay: f64,
    pub true_elevation: f64,
    pub true_azimuth: f64,
    pub est_delay: f64,
    pub est_elevation: f64,
    pub est_azimuth: f64,
    pub err_delay: f64,
    pub err_elevation: f64,
    pub err_azimuth: f64,
}

/// One pipeline run.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub per_path: Vec<PathErrorRecord>,
    pub position_error: Option<f64>,
    /// Wall time of the trial; kept out of the CSVs so reruns stay
    /// byte-identical.
    pub wall_ms: f64,
    pub excluded: bool,
    pub stage: String,
}

/// One `(sweep point, parameter)` summary row.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub sweep_value: f64,
    pub parameter: &'static str,
    pub rmse: f64,
    pub crlb: f64,
    pub trials: usize,
    pub exclusions: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub sweep_label: &'static str,
    pub trials: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Scenario specialized to one sweep point.
fn point_config(cfg: &ExperimentConfig, idx: usize) -> Result<(ArrayConfig, SimulationScenario)> {
    let mut array = cfg.array.clone();
    let mut scenario = cfg.scenario.clone();
    match &cfg.sweep {
        Sweep::None => {}
        Sweep::SnrDb(v) => scenario.snr_db = v[idx],
        Sweep::Antennas(v) => {
            let (nv, nh) = v[idx];
            array = ArrayConfig::new(
                nv,
                nh,
                array.radius,
                array.ring_spacing,
                array.f0,
                array.delta_f,
                array.n_subcarriers,
            )?;
        }
        Sweep::NPaths(v) => {
            let n = v[idx];
            if n == 0 || n > scenario.paths.len() {
                return Err(Error::Config(format!(
                    "n_paths sweep value {n} outside 1..={}",
                    scenario.paths.len()
                )));
            }
            scenario.paths.truncate(n);
        }
    }
    Ok((array, scenario))
}

fn trial_seed(master: u64, point: usize, trial: usize) -> u64 {
    splitmix64(master ^ splitmix64(((point as u64) << 32) | trial as u64))
}

/// Wrap-around delay distance on the `[0, 1/delta_f)` circle.
fn delay_distance(a: f64, b: f64, delta_f: f64) -> f64 {
    let period = 1.0 / delta_f;
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

fn angle_distance(a: f64, b: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let d = (a - b).rem_euclid(two_pi);
    d.min(two_pi - d)
}

/// Match estimates to truth by exact minimum-total-error assignment over the
/// normalized (delay, elevation, azimuth) metric.
pub fn match_estimates(
    estimates: &[PathEstimate],
    truth: &[PathParams],
    delta_f: f64,
) -> Result<Vec<usize>> {
    let n = truth.len();
    let mut cost = Array2::zeros((n, n));
    for (i, e) in estimates.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let dtau = delay_distance(e.delay, t.delay, delta_f) * delta_f;
            let dth = (e.elevation - t.elevation) / std::f64::consts::PI;
            let dph = angle_distance(e.azimuth, t.azimuth) / std::f64::consts::PI;
            cost[[i, j]] = dtau * dtau + dth * dth + dph * dph;
        }
    }
    crate::linalg::min_cost_assignment(&cost)
}

/// Run one trial of the full pipeline.
fn run_trial(
    array: &ArrayConfig,
    base: &SimulationScenario,
    scene: Option<&ExperimentScene>,
    cfg: &ExperimentConfig,
    sweep_value: f64,
    trial: usize,
    seed: u64,
) -> TrialRecord {
    let start = Instant::now();
    let mut record = TrialRecord {
        sweep_value,
        trial,
        seed,
        per_path: Vec::new(),
        position_error: None,
        wall_ms: 0.0,
        excluded: false,
        stage: String::new(),
    };

    // clock offset shifts every simulated delay; the estimator never sees it
    let offset = match scene.map(|s| s.clock_offset) {
        Some(ClockOffset::UnknownGaussian(std)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x0FF5_E7));
            let z: f64 = rng.sample(StandardNormal);
            z * std
        }
        Some(ClockOffset::Known(of)) => of,
        None => 0.0,
    };
    let mut scenario = base.clone();
    scenario.seed = seed;
    for p in scenario.paths.iter_mut() {
        p.delay = (p.delay + offset).rem_euclid(1.0 / array.delta_f);
    }

    let outcome = (|| -> Result<(Vec<PathEstimate>, Option<f64>)> {
        let n_paths = scenario.paths.len();
        let tensor = simulate_snapshots(array, &scenario).map_err(|e| e.in_stage("simulate"))?;
        let s1 = build_stage1(array);
        let y1 = apply_stage(&s1, &tensor).map_err(|e| e.in_stage("stage1"))?;
        let gamma = cfg
            .gamma_override
            .unwrap_or_else(|| dispersion_factor(array, None));
        let selection = select_beams(&y1, cfg.eta, gamma, n_paths)
            .map_err(|e| e.in_stage("select_beams"))?;
        let s2 = build_stage2(array, &selection);
        let y2 = apply_stage(&s2, &tensor).map_err(|e| e.in_stage("stage2"))?;
        let rec = reconstruct(&y2, array, &selection, cfg.mdsi_mode)
            .map_err(|e| e.in_stage("mdsi"))?;
        let opts = JadeOptions {
            music_grid: cfg.music_grid,
            music_block: cfg.music_block,
        };
        let est = estimate_all(&rec, &selection, array, n_paths, &opts)?;
        // RF-chain budget invariant: never more digital channels than
        // max(N_V, (2P+1) N_B)
        let budget = array
            .n_vertical
            .max(array.n_phase_modes() * selection.n_beams());
        debug_assert!(s1.rf_chain_count().max(s2.rf_chain_count()) <= budget);

        let position = if cfg.locate && n_paths >= 2 {
            scene.and_then(|sc| locate_in_scene(sc, &est.paths, cfg.sigma_tau).ok())
        } else {
            None
        };
        Ok((est.paths, position))
    })();

    match outcome {
        Ok((estimates, position)) => {
            let assign = match match_estimates(&estimates, &scenario.paths, array.delta_f) {
                Ok(a) => a,
                Err(_) => (0..scenario.paths.len()).collect(),
            };
            for (i, est) in estimates.iter().enumerate() {
                let t = scenario.paths[assign[i]];
                record.per_path.push(PathErrorRecord {
                    true_delay: t.delay,
                    true_elevation: t.elevation,
                    true_azimuth: t.azimuth,
                    est_delay: est.delay,
                    est_elevation: est.elevation,
                    est_azimuth: est.azimuth,
                    err_delay: delay_distance(est.delay, t.delay, array.delta_f),
                    err_elevation: (est.elevation - t.elevation).abs(),
                    err_azimuth: angle_distance(est.azimuth, t.azimuth),
                });
            }
            record.position_error = position;
        }
        Err(e) => {
            record.excluded = true;
            record.stage = e.stage().unwrap_or("pipeline").to_string();
            for p in &scenario.paths {
                record.per_path.push(PathErrorRecord {
                    true_delay: p.delay,
                    true_elevation: p.elevation,
                    true_azimuth: p.azimuth,
                    est_delay: f64::NAN,
                    est_elevation: f64::NAN,
                    est_azimuth: f64::NAN,
                    err_delay: f64::NAN,
                    err_elevation: f64::NAN,
                    err_azimuth: f64::NAN,
                });
            }
        }
    }
    record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    record
}

/// Position error from the estimated paths against the declared scene: every
/// pair of estimates is tried against every ordered pair of distinct path
/// hypotheses, and the lowest-residual intersection wins.
fn locate_in_scene(
    scene: &ExperimentScene,
    estimates: &[PathEstimate],
    sigma_tau: f64,
) -> Result<f64> {
    let model = SceneModel {
        bs_position: scene.bs,
        reflectors: scene.reflectors.clone(),
        clock_offset: None,
    };
    let weight = 1.0 / (SPEED_OF_LIGHT * sigma_tau).powi(2);
    let mut best: Option<(f64, Vec3)> = None;
    for i in 0..estimates.len() {
        for j in (i + 1)..estimates.len() {
            for &ha in &scene.path_hypotheses {
                for &hb in &scene.path_hypotheses {
                    if ha == hb {
                        continue;
                    }
                    let ra = ray_from_estimate(
                        estimates[i].delay,
                        estimates[i].elevation,
                        estimates[i].azimuth,
                        &model,
                        ha,
                    )?;
                    let rb = ray_from_estimate(
                        estimates[j].delay,
                        estimates[j].elevation,
                        estimates[j].azimuth,
                        &model,
                        hb,
                    )?;
                    if let Ok((pos, resid)) = locate_two_paths((&ra, &rb), weight) {
                        if best.map(|(r, _)| resid < r).unwrap_or(true) {
                            best = Some((resid, pos));
                        }
                    }
                }
            }
        }
    }
    let (_, pos) = best.ok_or_else(|| Error::Degenerate("no ray pair intersected".into()))?;
    Ok(norm(sub(pos, scene.ms)))
}

/// Derive scenario paths from the scene geometry (delays from path lengths,
/// angles from the virtual anchors), keeping the declared gains.
pub fn scene_scenario(
    scene: &ExperimentScene,
    gains: &[C64],
    array: &ArrayConfig,
    base: &SimulationScenario,
) -> Result<SimulationScenario> {
    if gains.len() != scene.path_hypotheses.len() {
        return Err(Error::Config(format!(
            "{} scene paths but {} gains",
            scene.path_hypotheses.len(),
            gains.len()
        )));
    }
    let model = SceneModel {
        bs_position: scene.bs,
        reflectors: scene.reflectors.clone(),
        clock_offset: None,
    };
    let mut paths = Vec::with_capacity(gains.len());
    for (hyp, &gain) in scene.path_hypotheses.iter().zip(gains.iter()) {
        let (az, el, len) = forward_path(&model, scene.ms, *hyp)?;
        paths.push(PathParams::new(
            az,
            el,
            len / SPEED_OF_LIGHT,
            gain,
            array.delta_f,
        )?);
    }
    Ok(SimulationScenario {
        paths,
        ..base.clone()
    })
}

/// Run the full experiment; trials execute via the crate's data-parallel map.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_impl(cfg, false)
}

/// Sequential twin of [`run_experiment`], kept callable for benchmarks.
pub fn run_experiment_sequential(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_impl(cfg, true)
}

fn run_experiment_impl(cfg: &ExperimentConfig, force_sequential: bool) -> Result<ExperimentResult> {
    if cfg.trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    cfg.scenario.validate()?;
    let n_points = cfg.sweep.len();
    if n_points == 0 {
        return Err(Error::Config("sweep has no points".into()));
    }
    // validate every sweep point up front
    let mut points = Vec::with_capacity(n_points);
    for i in 0..n_points {
        points.push(point_config(cfg, i)?);
    }

    let total = n_points * cfg.trials;
    let job = |k: usize| -> TrialRecord {
        let point = k / cfg.trials;
        let trial = k % cfg.trials;
        let (array, scenario) = &points[point];
        run_trial(
            array,
            scenario,
            cfg.scene.as_ref(),
            cfg,
            cfg.sweep.numeric_value(point),
            trial,
            trial_seed(cfg.master_seed, point, trial),
        )
    };
    let trials: Vec<TrialRecord> = if force_sequential {
        exec::map_indexed_sequential(total, job)
    } else {
        exec::map_indexed(total, job)
    };

    // per-point summaries
    let mut summary = Vec::new();
    for (point, (array, scenario)) in points.iter().enumerate() {
        let rows = &trials[point * cfg.trials..(point + 1) * cfg.trials];
        let sweep_value = cfg.sweep.numeric_value(point);
        let included: Vec<&TrialRecord> = rows.iter().filter(|t| !t.excluded).collect();
        let exclusions = cfg.trials - included.len();
        let bound = if cfg.with_crlb && scenario.snr_db.is_finite() {
            crlb(array, scenario, PipelinePoint::Antenna)
                .map(|b| {
                    let agg = |k: usize| {
                        (b.per_path.iter().map(|p| p[k] * p[k]).sum::<f64>()
                            / b.per_path.len() as f64)
                            .sqrt()
                    };
                    [agg(0), agg(1), agg(2)]
                })
                .unwrap_or([f64::NAN; 3])
        } else {
            [f64::NAN; 3]
        };
        let rmse = |f: &dyn Fn(&PathErrorRecord) -> f64| -> f64 {
            let mut acc = 0.0;
            let mut n = 0usize;
            for t in &included {
                for p in &t.per_path {
                    let v = f(p);
                    if v.is_finite() {
                        acc += v * v;
                        n += 1;
                    }
                }
            }
            if n == 0 {
                f64::NAN
            } else {
                (acc / n as f64).sqrt()
            }
        };
        summary.push(SummaryRow {
            sweep_value,
            parameter: "delay_s",
            rmse: rmse(&|p| p.err_delay),
            crlb: bound[0],
            trials: cfg.trials,
            exclusions,
        });
        summary.push(SummaryRow {
            sweep_value,
            parameter: "elevation_rad",
            rmse: rmse(&|p| p.err_elevation),
            crlb: bound[1],
            trials: cfg.trials,
            exclusions,
        });
        summary.push(SummaryRow {
            sweep_value,
            parameter: "azimuth_rad",
            rmse: rmse(&|p| p.err_azimuth),
            crlb: bound[2],
            trials: cfg.trials,
            exclusions,
        });
        let mut pos: Vec<f64> = included
            .iter()
            .filter_map(|t| t.position_error)
            .filter(|p| p.is_finite())
            .collect();
        pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pos_rmse = if pos.is_empty() {
            f64::NAN
        } else {
            (pos.iter().map(|p| p * p).sum::<f64>() / pos.len() as f64).sqrt()
        };
        summary.push(SummaryRow {
            sweep_value,
            parameter: "position_m",
            rmse: pos_rmse,
            crlb: f64::NAN,
            trials: cfg.trials,
            exclusions,
        });
        for (name, q) in [
            ("position_q10_m", 0.1),
            ("position_q50_m", 0.5),
            ("position_q60_m", 0.6),
            ("position_q90_m", 0.9),
        ] {
            summary.push(SummaryRow {
                sweep_value,
                parameter: name,
                rmse: quantile(&pos, q),
                crlb: f64::NAN,
                trials: cfg.trials,
                exclusions,
            });
        }
    }
    Ok(ExperimentResult {
        sweep_label: cfg.sweep.label(),
        trials,
        summary,
    })
}

/// Empirical quantile of a sorted sample (linear interpolation).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Fraction of samples at or below `threshold` (empirical CDF value).
pub fn cdf_at(sorted: &[f64], threshold: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let n = sorted.iter().take_while(|&&x| x <= threshold).count();
    n as f64 / sorted.len() as f64
}

pub const TRIALS_HEADER: &str = "sweep,sweep_value,trial,seed,path,true_delay_s,true_elevation_rad,true_azimuth_rad,est_delay_s,est_elevation_rad,est_azimuth_rad,err_delay_s,err_elevation_rad,err_azimuth_rad,position_error_m,excluded,stage";
pub const SUMMARY_HEADER: &str = "sweep,sweep_value,parameter,rmse,crlb,trials,exclusions";

/// Nine significant digits, `nan` for missing values.
pub fn fmt_g9(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.8e}")
    }
}

/// Render the trials table; one row per (trial, path).
pub fn trials_csv(result: &ExperimentResult) -> String {
    let mut out = String::new();
    out.push_str(TRIALS_HEADER);
    out.push('\n');
    for t in &result.trials {
        for (pi, p) in t.per_path.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                result.sweep_label,
                fmt_g9(t.sweep_value),
                t.trial,
                t.seed,
                pi,
                fmt_g9(p.true_delay),
                fmt_g9(p.true_elevation),
                fmt_g9(p.true_azimuth),
                fmt_g9(p.est_delay),
                fmt_g9(p.est_elevation),
                fmt_g9(p.est_azimuth),
                fmt_g9(p.err_delay),
                fmt_g9(p.err_elevation),
                fmt_g9(p.err_azimuth),
                fmt_g9(t.position_error.unwrap_or(f64::NAN)),
                u8::from(t.excluded),
                t.stage,
            );
        }
    }
    out
}

/// Render the summary table; one row per (sweep point, parameter).
pub fn summary_csv(result: &ExperimentResult) -> String {
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for r in &result.summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            result.sweep_label,
            fmt_g9(r.sweep_value),
            r.parameter,
            fmt_g9(r.rmse),
            fmt_g9(r.crlb),
            r.trials,
            r.exclusions,
        );
    }
    out
}

/// Write `trials.csv` and `summary.csv` under `out_dir`.
pub fn emit_csv(result: &ExperimentResult, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(out_dir)?;
    let trials_path = out_dir.join("trials.csv");
    let summary_path = out_dir.join("summary.csv");
    std::fs::write(&trials_path, trials_csv(result))?;
    std::fs::write(&summary_path, summary_csv(result))?;
    Ok((trials_path, summary_path))
}

/// Re-parse an emitted summary CSV (round-trip check / downstream tooling).
pub fn parse_summary_csv(text: &str) -> Result<Vec<(String, f64, String, f64, f64, usize, usize)>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty summary csv".into()))?;
    if header != SUMMARY_HEADER {
        return Err(Error::Config(format!("unexpected summary header '{header}'")));
    }
    let parse_f = |s: &str| -> Result<f64> {
        if s == "nan" {
            Ok(f64::NAN)
        } else {
            s.parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number '{s}': {e}")))
        }
    };
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(Error::Config(format!("bad summary row '{line}'")));
        }
        rows.push((
            cols[0].to_string(),
            parse_f(cols[1])?,
            cols[2].to_string(),
            parse_f(cols[3])?,
            parse_f(cols[4])?,
            cols[5]
                .parse()
                .map_err(|e| Error::Config(format!("bad count: {e}")))?,
            cols[6]
                .parse()
                .map_err(|e| Error::Config(format!("bad count: {e}")))?,
        ));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Config file parsing
// ---------------------------------------------------------------------------

/// Parse the flat sectioned key-value experiment file format.
///
/// Sections `[array]`, `[scenario]`, `[scene]`, `[experiment]`; one
/// `key = value` per line; `#` starts a comment; repeated `path`,
/// `reflector` and `scene_path` keys accumulate.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut section = String::new();
    let mut kv: Vec<(String, String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            section = line[1..line.len() - 1].trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        kv.push((
            section.clone(),
            key.trim().to_string(),
            value.trim().to_string(),
        ));
    }
    let get = |sec: &str, key: &str| -> Option<&str> {
        kv.iter()
            .find(|(s, k, _)| s == sec && k == key)
            .map(|(_, _, v)| v.as_str())
    };
    let get_all = |sec: &str, key: &str| -> Vec<&str> {
        kv.iter()
            .filter(|(s, k, _)| s == sec && k == key)
            .map(|(_, _, v)| v.as_str())
            .collect()
    };
    let req = |sec: &str, key: &str| -> Result<&str> {
        get(sec, key).ok_or_else(|| Error::Config(format!("missing [{sec}] {key}")))
    };
    let parse_f64 = |sec: &str, key: &str, v: &str| -> Result<f64> {
        if v == "inf" {
            return Ok(f64::INFINITY);
        }
        v.parse::<f64>()
            .map_err(|e| Error::Config(format!("[{sec}] {key} = '{v}': {e}")))
    };
    let parse_usize = |sec: &str, key: &str, v: &str| -> Result<usize> {
        v.parse::<usize>()
            .map_err(|e| Error::Config(format!("[{sec}] {key} = '{v}': {e}")))
    };

    // [array]
    let f0 = parse_f64("array", "f0_hz", req("array", "f0_hz")?)?;
    let lambda0 = SPEED_OF_LIGHT / f0;
    let radius = match (get("array", "radius_m"), get("array", "radius_wavelengths")) {
        (Some(v), _) => parse_f64("array", "radius_m", v)?,
        (None, Some(v)) => parse_f64("array", "radius_wavelengths", v)? * lambda0,
        (None, None) => return Err(Error::Config("missing [array] radius".into())),
    };
    let spacing = match (
        get("array", "ring_spacing_m"),
        get("array", "ring_spacing_wavelengths"),
    ) {
        (Some(v), _) => parse_f64("array", "ring_spacing_m", v)?,
        (None, Some(v)) => parse_f64("array", "ring_spacing_wavelengths", v)? * lambda0,
        (None, None) => return Err(Error::Config("missing [array] ring_spacing".into())),
    };
    let array = ArrayConfig::new(
        parse_usize("array", "n_vertical", req("array", "n_vertical")?)?,
        parse_usize("array", "n_horizontal", req("array", "n_horizontal")?)?,
        radius,
        spacing,
        f0,
        parse_f64("array", "delta_f_hz", req("array", "delta_f_hz")?)?,
        parse_usize("array", "n_subcarriers", req("array", "n_subcarriers")?)?,
    )?;

    // [scenario]
    let pilot = match get("scenario", "pilot") {
        Some(v) => {
            let parts: Vec<&str> = v.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(Error::Config("pilot needs 're im'".into()));
            }
            C64::new(
                parse_f64("scenario", "pilot", parts[0])?,
                parse_f64("scenario", "pilot", parts[1])?,
            )
        }
        None => C64::new(1.0, 0.0),
    };
    let gain_model = match get("scenario", "gain_model").unwrap_or("per_snapshot_random") {
        "fixed" => GainModel::Fixed,
        "per_snapshot_random" => GainModel::PerSnapshotRandom,
        other => return Err(Error::Config(format!("unknown gain model '{other}'"))),
    };
    let snr_db = parse_f64("scenario", "snr_db", get("scenario", "snr_db").unwrap_or("inf"))?;
    let n_snapshots = parse_usize(
        "scenario",
        "n_snapshots",
        get("scenario", "n_snapshots").unwrap_or("32"),
    )?;

    // [scene] (optional)
    let scene_gains: Vec<C64>;
    let scene: Option<ExperimentScene> = if get("scene", "ms").is_some() {
        let vec3 = |sec: &str, key: &str, v: &str| -> Result<Vec3> {
            let parts: Vec<&str> = v.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!("[{sec}] {key} needs 3 numbers")));
            }
            Ok([
                parse_f64(sec, key, parts[0])?,
                parse_f64(sec, key, parts[1])?,
                parse_f64(sec, key, parts[2])?,
            ])
        };
        let bs = match get("scene", "bs") {
            Some(v) => vec3("scene", "bs", v)?,
            None => [0.0, 0.0, 0.0],
        };
        let ms = vec3("scene", "ms", req("scene", "ms")?)?;
        let mut reflectors = Vec::new();
        for v in get_all("scene", "reflector") {
            let parts: Vec<&str> = v.split_whitespace().collect();
            if parts.len() != 6 {
                return Err(Error::Config(
                    "reflector needs 'px py pz nx ny nz'".into(),
                ));
            }
            let nums: Vec<f64> = parts
                .iter()
                .map(|p| parse_f64("scene", "reflector", p))
                .collect::<Result<_>>()?;
            reflectors.push(Plane::new(
                [nums[0], nums[1], nums[2]],
                [nums[3], nums[4], nums[5]],
            )?);
        }
        let mut hypotheses = Vec::new();
        let mut gains = Vec::new();
        for v in get_all("scene", "scene_path") {
            let parts: Vec<&str> = v.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Config(
                    "scene_path needs '<los|index> gain_re gain_im'".into(),
                ));
            }
            let hyp = if parts[0] == "los" {
                None
            } else {
                Some(parse_usize("scene", "scene_path", parts[0])?)
            };
            hypotheses.push(hyp);
            gains.push(C64::new(
                parse_f64("scene", "scene_path", parts[1])?,
                parse_f64("scene", "scene_path", parts[2])?,
            ));
        }
        if hypotheses.is_empty() {
            return Err(Error::Config("scene declared without scene_path lines".into()));
        }
        let clock_offset = match get("scene", "clock_offset_ns") {
            Some("unknown") | None => {
                let std_ns = parse_f64(
                    "scene",
                    "clock_offset_std_ns",
                    get("scene", "clock_offset_std_ns").unwrap_or("4.0"),
                )?;
                ClockOffset::UnknownGaussian(std_ns * 1e-9)
            }
            Some(v) => ClockOffset::Known(parse_f64("scene", "clock_offset_ns", v)? * 1e-9),
        };
        scene_gains = gains;
        Some(ExperimentScene {
            bs,
            reflectors,
            ms,
            path_hypotheses: hypotheses,
            clock_offset,
        })
    } else {
        scene_gains = Vec::new();
        None
    };

    // paths: explicit lines or derived from the scene
    let base = SimulationScenario {
        paths: Vec::new(),
        snr_db,
        n_snapshots,
        pilot,
        gain_model,
        seed: 0,
    };
    let scenario = if let Some(sc) = &scene {
        scene_scenario(sc, &scene_gains, &array, &base)?
    } else {
        let mut paths = Vec::new();
        for v in get_all("scenario", "path") {
            let parts: Vec<&str> = v.split_whitespace().collect();
            if parts.len() != 5 {
                return Err(Error::Config(
                    "path needs 'az_deg el_deg delay_ns gain_re gain_im'".into(),
                ));
            }
            let nums: Vec<f64> = parts
                .iter()
                .map(|p| parse_f64("scenario", "path", p))
                .collect::<Result<_>>()?;
            paths.push(PathParams::new(
                nums[0].to_radians().rem_euclid(2.0 * std::f64::consts::PI),
                nums[1].to_radians(),
                nums[2] * 1e-9,
                C64::new(nums[3], nums[4]),
                array.delta_f,
            )?);
        }
        if paths.is_empty() {
            return Err(Error::Config("no scenario paths declared".into()));
        }
        SimulationScenario { paths, ..base }
    };

    // [experiment]
    let sweep = match get("experiment", "sweep").unwrap_or("none") {
        "none" => Sweep::None,
        "snr_db" => {
            let vals = req("experiment", "snr_db_values")?;
            Sweep::SnrDb(
                vals.split_whitespace()
                    .map(|v| parse_f64("experiment", "snr_db_values", v))
                    .collect::<Result<_>>()?,
            )
        }
        "n_antennas" => {
            let vals = req("experiment", "antenna_values")?;
            let mut pairs = Vec::new();
            for v in vals.split_whitespace() {
                let (a, b) = v
                    .split_once('x')
                    .ok_or_else(|| Error::Config(format!("antenna value '{v}' not NVxNH")))?;
                pairs.push((
                    parse_usize("experiment", "antenna_values", a)?,
                    parse_usize("experiment", "antenna_values", b)?,
                ));
            }
            Sweep::Antennas(pairs)
        }
        "n_paths" => {
            let vals = req("experiment", "n_paths_values")?;
            Sweep::NPaths(
                vals.split_whitespace()
                    .map(|v| parse_usize("experiment", "n_paths_values", v))
                    .collect::<Result<_>>()?,
            )
        }
        other => return Err(Error::Config(format!("unknown sweep '{other}'"))),
    };
    let mdsi_mode: MdsiMode = get("experiment", "mdsi_mode")
        .unwrap_or("offset_corrected")
        .parse()?;
    let music_block: MusicBlock = get("experiment", "music_block")
        .unwrap_or("strongest")
        .parse()?;
    let eta = parse_f64("experiment", "eta", get("experiment", "eta").unwrap_or("0.9"))?;
    let trials = parse_usize(
        "experiment",
        "trials",
        get("experiment", "trials").unwrap_or("1"),
    )?;
    let master_seed = get("experiment", "seed")
        .unwrap_or("1")
        .parse::<u64>()
        .map_err(|e| Error::Config(format!("bad seed: {e}")))?;
    let gamma_override = match get("experiment", "gamma_override") {
        Some(v) => Some(parse_f64("experiment", "gamma_override", v)?),
        None => None,
    };
    let music_grid = parse_usize(
        "experiment",
        "music_grid",
        get("experiment", "music_grid").unwrap_or("100"),
    )?;
    let locate = match get("experiment", "locate").unwrap_or("false") {
        "true" => true,
        "false" => false,
        other => return Err(Error::Config(format!("locate = '{other}' not true/false"))),
    };
    let sigma_tau = parse_f64(
        "experiment",
        "sigma_tau_ns",
        get("experiment", "sigma_tau_ns").unwrap_or("4.0"),
    )? * 1e-9;
    let with_crlb = match get("experiment", "with_crlb").unwrap_or("true") {
        "true" => true,
        "false" => false,
        other => return Err(Error::Config(format!("with_crlb = '{other}'"))),
    };
    let out_dir = PathBuf::from(get("experiment", "out_dir").unwrap_or("out"));

    Ok(ExperimentConfig {
        array,
        scenario,
        scene,
        sweep,
        trials,
        eta,
        gamma_override,
        mdsi_mode,
        music_grid,
        music_block,
        master_seed,
        out_dir,
        locate,
        sigma_tau,
        with_crlb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL_CONFIG: &str = r#"
# minimal experiment
[array]
n_vertical = 8
n_horizontal = 25
radius_wavelengths = 2.0
ring_spacing_wavelengths = 0.5
f0_hz = 30e9
delta_f_hz = 10e6
n_subcarriers = 16

[scenario]
snr_db = inf
n_snapshots = 8
gain_model = per_snapshot_random
path = 120.0 105.0 33.0 1.0 0.0
path = 205.0 121.0 12.0 0.8 0.3

[experiment]
trials = 2
eta = 0.9
seed = 77
mdsi_mode = offset_corrected
with_crlb = false
"#;

    #[test]
    fn parse_and_run_small_config() {
        let cfg = parse_config(SMALL_CONFIG).unwrap();
        assert_eq!(cfg.array.n_vertical, 8);
        assert_eq!(cfg.scenario.paths.len(), 2);
        assert_eq!(cfg.trials, 2);
        let result = run_experiment(&cfg).unwrap();
        assert_eq!(result.trials.len(), 2);
        assert_eq!(
            result.summary.len(),
            8, // 4 parameters + 4 quantile rows, single sweep point
        );
    }

    #[test]
    fn identical_seeds_give_identical_csv() {
        let cfg = parse_config(SMALL_CONFIG).unwrap();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(trials_csv(&a), trials_csv(&b));
        assert_eq!(summary_csv(&a), summary_csv(&b));
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let cfg = parse_config(SMALL_CONFIG).unwrap();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment_sequential(&cfg).unwrap();
        assert_eq!(trials_csv(&a), trials_csv(&b));
    }

    #[test]
    fn noiseless_two_path_errors_small() {
        // downward-looking scenario with mild squint: the full pipeline's
        // matched errors stay well under a degree / a nanosecond
        let cfg = parse_config(SMALL_CONFIG).unwrap();
        let result = run_experiment(&cfg).unwrap();
        for row in &result.summary {
            match row.parameter {
                "delay_s" => assert!(row.rmse < 1e-9, "delay rmse {}", row.rmse),
                "elevation_rad" | "azimuth_rad" => {
                    assert!(row.rmse < 0.05, "{} rmse {}", row.parameter, row.rmse)
                }
                _ => {}
            }
            assert_eq!(row.exclusions, 0);
        }
    }

    #[test]
    fn summary_round_trips_through_csv() {
        let cfg = parse_config(SMALL_CONFIG).unwrap();
        let result = run_experiment(&cfg).unwrap();
        let text = summary_csv(&result);
        let rows = parse_summary_csv(&text).unwrap();
        assert_eq!(rows.len(), result.summary.len());
        for (parsed, row) in rows.iter().zip(result.summary.iter()) {
            assert_eq!(parsed.2, row.parameter);
            if row.rmse.is_nan() {
                assert!(parsed.3.is_nan());
            } else {
                // 9 significant digits survive the round trip
                assert!((parsed.3 - row.rmse).abs() <= 1e-8 * row.rmse.abs().max(1e-300));
            }
            assert_eq!(parsed.5, row.trials);
        }
    }

    #[test]
    fn empty_experiment_emits_header_only() {
        let result = ExperimentResult {
            sweep_label: "none",
            trials: Vec::new(),
            summary: Vec::new(),
        };
        assert_eq!(trials_csv(&result), format!("{TRIALS_HEADER}\n"));
        assert_eq!(summary_csv(&result), format!("{SUMMARY_HEADER}\n"));
    }

    #[test]
    fn quantiles_and_cdf() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((quantile(&v, 0.5) - 3.0).abs() < 1e-12);
        assert!((quantile(&v, 0.0) - 1.0).abs() < 1e-12);
        assert!((quantile(&v, 1.0) - 5.0).abs() < 1e-12);
        assert!((cdf_at(&v, 3.5) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn delay_distance_wraps() {
        let df = 100e6; // period 10 ns
        assert!((delay_distance(9.8e-9, 0.2e-9, df) - 0.4e-9).abs() < 1e-15);
        assert!((delay_distance(3.0e-9, 5.0e-9, df) - 2.0e-9).abs() < 1e-15);
    }

    #[test]
    fn config_errors_are_reported() {
        assert!(parse_config("not a config").is_err());
        let missing = SMALL_CONFIG.replace("f0_hz = 30e9", "");
        assert!(parse_config(&missing).is_err());
        let bad_sweep = SMALL_CONFIG.replace("trials = 2", "sweep = bogus");
        assert!(parse_config(&bad_sweep).is_err());
    }

    #[test]
    fn scene_config_generates_paths_and_locates() {
        let text = r#"
[array]
n_vertical = 8
n_horizontal = 25
radius_wavelengths = 2.0
ring_spacing_wavelengths = 0.5
f0_hz = 30e9
delta_f_hz = 10e6
n_subcarriers = 16

[scenario]
snr_db = inf
n_snapshots = 8
gain_model = per_snapshot_random

[scene]
bs = 0 0 10
ms = 6 -3 1.5
reflector = 12 0 0  -1 0 0
reflector = 0 -9 0  0 1 0
scene_path = 0 1.0 0.0
scene_path = 1 0.8 0.3
clock_offset_ns = unknown
clock_offset_std_ns = 4.0

[experiment]
trials = 2
locate = true
with_crlb = false
seed = 5
"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.scenario.paths.len(), 2);
        // forward-generated elevations point below the BS
        for p in &cfg.scenario.paths {
            assert!(p.elevation > std::f64::consts::FRAC_PI_2);
        }
        let result = run_experiment(&cfg).unwrap();
        for t in &result.trials {
            assert!(!t.excluded, "trial excluded at stage {}", t.stage);
            let pe = t.position_error.expect("position error recorded");
            assert!(pe < 0.5, "position error {pe} m");
        }
    }
}
