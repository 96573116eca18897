//! Numerical Cramér-Rao lower bounds for the per-path parameters.
//!
//! For a complex Gaussian observation with deterministic mean `mu(p)` and
//! white noise of variance `sigma_n^2` per entry, the Fisher information is
//! `FIM = (2/sigma_n^2) Re[ sum (d mu/d p)^H (d mu/d p) ]`. The Jacobian is
//! computed by central finite differences with one Richardson extrapolation.
//! Parameters are stacked `(tau, theta, phi, Re beta, Im beta)` per path;
//! gain nuisance parameters are marginalized by inverting the full matrix.

use ndarray::prelude::*;
use ndarray_linalg::{Inverse, SVD};
use num_complex::Complex64 as C64;

use crate::array_model::ArrayConfig;
use crate::beamformer::{apply_stage, build_stage1, build_stage2, select_beams, BeamformerStage};
use crate::channel_sim::{
    simulate_snapshots, GainModel, PathParams, SimulationScenario, SnapshotTensor, SpatialDim,
};
use crate::{Error, Result};

/// Observation model the bound conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelinePoint {
    /// Full antenna array before any combining (the reference bound).
    Antenna,
    /// After the hybrid front-end; quantifies combining losses. Uses the
    /// same white-noise expression on the reduced observation.
    PostStage2 { eta_permille: u32, gamma_times_paths: u32 },
}

/// Per-path standard-deviation bounds.
#[derive(Debug, Clone)]
pub struct BoundReport {
    /// One `(delay_s, elevation_rad, azimuth_rad)` triple per path.
    pub per_path: Vec<[f64; 3]>,
    pub snr_db: f64,
    /// Condition number of the Fisher matrix.
    pub condition_number: f64,
}

const PARAMS_PER_PATH: usize = 5;

/// Noiseless mean observation stacked over subcarriers for one snapshot.
fn mean_observation(
    cfg: &ArrayConfig,
    paths: &[PathParams],
    pilot: C64,
    stage: Option<&BeamformerStage>,
) -> Result<Array1<C64>> {
    let dim = stage.map(|s| s.composite.ncols()).unwrap_or(cfg.n_antennas());
    let mut mu = Array1::zeros(dim * cfg.n_subcarriers);
    for m in 0..cfg.n_subcarriers {
        let h = crate::channel_sim::channel_vector(cfg, paths, m)?;
        let hm = h.mapv(|z| z * pilot);
        let y = match stage {
            None => hm,
            Some(s) => s.composite.t().mapv(|z| z.conj()).dot(&hm),
        };
        mu.slice_mut(s![m * dim..(m + 1) * dim]).assign(&y);
    }
    Ok(mu)
}

fn paths_with_param(paths: &[PathParams], idx: usize, value: f64) -> Vec<PathParams> {
    let mut out = paths.to_vec();
    let l = idx / PARAMS_PER_PATH;
    match idx % PARAMS_PER_PATH {
        0 => out[l].delay = value,
        1 => out[l].elevation = value,
        2 => out[l].azimuth = value,
        3 => out[l].gain = C64::new(value, out[l].gain.im),
        _ => out[l].gain = C64::new(out[l].gain.re, value),
    }
    out
}

fn param_value(paths: &[PathParams], idx: usize) -> f64 {
    let l = idx / PARAMS_PER_PATH;
    match idx % PARAMS_PER_PATH {
        0 => paths[l].delay,
        1 => paths[l].elevation,
        2 => paths[l].azimuth,
        3 => paths[l].gain.re,
        _ => paths[l].gain.im,
    }
}

/// Characteristic scale used for the relative finite-difference step when a
/// parameter sits near zero.
fn param_floor(cfg: &ArrayConfig, idx: usize, paths: &[PathParams]) -> f64 {
    match idx % PARAMS_PER_PATH {
        0 => 1.0 / cfg.bandwidth(), // one delay-resolution cell
        1 | 2 => 1e-2,
        _ => {
            let l = idx / PARAMS_PER_PATH;
            paths[l].gain.norm().max(1e-3)
        }
    }
}

/// Numerical Fisher information for the scenario's paths at the chosen
/// pipeline point. Returns the full `(5 N_p)^2` matrix.
pub fn fisher_numeric(
    cfg: &ArrayConfig,
    scenario: &SimulationScenario,
    point: PipelinePoint,
) -> Result<Array2<f64>> {
    scenario.validate()?;
    let sigma2 = scenario.noise_power();
    if !(sigma2 > 0.0) {
        return Err(Error::Config(
            "Fisher information needs finite SNR (noiseless bound is degenerate)".into(),
        ));
    }
    let stage = match point {
        PipelinePoint::Antenna => None,
        PipelinePoint::PostStage2 {
            eta_permille,
            gamma_times_paths,
        } => {
            // construct the front-end from a noiseless pass
            let clean = SimulationScenario {
                snr_db: f64::INFINITY,
                gain_model: GainModel::Fixed,
                ..scenario.clone()
            };
            let tensor = simulate_snapshots(cfg, &clean)?;
            let s1 = build_stage1(cfg);
            let out1 = apply_stage(&s1, &tensor)?;
            let sel = select_beams(
                &out1,
                eta_permille as f64 / 1000.0,
                gamma_times_paths as f64 / scenario.paths.len().max(1) as f64,
                scenario.paths.len(),
            )?;
            Some(build_stage2(cfg, &sel))
        }
    };
    let paths = &scenario.paths;
    let n_params = paths.len() * PARAMS_PER_PATH;
    let dim = mean_observation(cfg, paths, scenario.pilot, stage.as_ref())?.len();

    // central difference with one Richardson extrapolation:
    // D ~ (4 D(h/2) - D(h)) / 3
    let mut jac = Array2::<C64>::zeros((dim, n_params));
    for k in 0..n_params {
        let x0 = param_value(paths, k);
        let scale = x0.abs().max(param_floor(cfg, k, paths));
        let h = 1e-6 * scale;
        let diff_at = |step: f64| -> Result<Array1<C64>> {
            let plus = mean_observation(
                cfg,
                &paths_with_param(paths, k, x0 + step),
                scenario.pilot,
                stage.as_ref(),
            )?;
            let minus = mean_observation(
                cfg,
                &paths_with_param(paths, k, x0 - step),
                scenario.pilot,
                stage.as_ref(),
            )?;
            Ok((plus - minus).mapv(|z| z / (2.0 * step)))
        };
        let d_h = diff_at(h)?;
        let d_h2 = diff_at(h / 2.0)?;
        let col = (d_h2.mapv(|z| z * 4.0) - d_h).mapv(|z| z / 3.0);
        jac.column_mut(k).assign(&col);
    }

    let ts = scenario.n_snapshots as f64;
    let gram = jac.t().mapv(|z| z.conj()).dot(&jac);
    let mut fim = Array2::zeros((n_params, n_params));
    for i in 0..n_params {
        for j in 0..n_params {
            fim[[i, j]] = 2.0 / sigma2 * ts * gram[[i, j]].re;
        }
    }
    Ok(fim)
}

/// Invert the Fisher matrix and extract per-path standard-deviation bounds
/// on the `(tau, theta, phi)` block.
pub fn bounds_from_fisher(fim: &Array2<f64>, n_paths: usize, snr_db: f64) -> Result<BoundReport> {
    let fim_c = fim.mapv(|x| C64::new(x, 0.0));
    let (_, sv, _) = fim_c.svd(false, false)?;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition_number < 1e12) {
        return Err(Error::Degenerate(format!(
            "Fisher matrix is ill-conditioned (cond = {condition_number:.3e}); \
             the scenario is unidentifiable"
        )));
    }
    let inv = fim.inv().map_err(Error::from)?;
    let mut per_path = Vec::with_capacity(n_paths);
    for l in 0..n_paths {
        let base = l * PARAMS_PER_PATH;
        per_path.push([
            inv[[base, base]].max(0.0).sqrt(),
            inv[[base + 1, base + 1]].max(0.0).sqrt(),
            inv[[base + 2, base + 2]].max(0.0).sqrt(),
        ]);
    }
    Ok(BoundReport {
        per_path,
        snr_db,
        condition_number,
    })
}

/// Convenience wrapper: Fisher + inversion in one call.
pub fn crlb(
    cfg: &ArrayConfig,
    scenario: &SimulationScenario,
    point: PipelinePoint,
) -> Result<BoundReport> {
    let fim = fisher_numeric(cfg, scenario, point)?;
    bounds_from_fisher(&fim, scenario.paths.len(), scenario.snr_db)
}

/// Closed-form single-parameter toy: delay-only Fisher information for a
/// scalar observation `mu_m = beta x e^{-j 2 pi f_m tau}` per subcarrier,
/// `FIM = (2/sigma^2) T_s sum_m |2 pi f_m x|^2 |beta|^2`. Oracle for the
/// numeric differentiation.
pub fn delay_only_fisher_closed_form(
    cfg: &ArrayConfig,
    gain: C64,
    pilot: C64,
    sigma2: f64,
    n_snapshots: usize,
) -> f64 {
    let mut acc = 0.0;
    for m in 0..cfg.n_subcarriers {
        let w = 2.0 * std::f64::consts::PI * cfg.subcarrier_freq(m);
        acc += (w * pilot.norm()).powi(2) * gain.norm_sqr();
    }
    2.0 / sigma2 * n_snapshots as f64 * acc
}

/// Numerical counterpart of the toy model above (delay the only unknown),
/// using the same differencing scheme as [`fisher_numeric`].
pub fn delay_only_fisher_numeric(
    cfg: &ArrayConfig,
    gain: C64,
    pilot: C64,
    sigma2: f64,
    n_snapshots: usize,
    tau: f64,
) -> f64 {
    let mu = |t: f64| -> Array1<C64> {
        Array1::from_iter((0..cfg.n_subcarriers).map(|m| {
            let w = -2.0 * std::f64::consts::PI * cfg.subcarrier_freq(m) * t;
            gain * pilot * C64::from_polar(1.0, w)
        }))
    };
    let h = 1e-6 * tau.abs().max(1.0 / cfg.bandwidth());
    let diff = |step: f64| -> Array1<C64> {
        (mu(tau + step) - mu(tau - step)).mapv(|z| z / (2.0 * step))
    };
    let d = (diff(h / 2.0).mapv(|z| z * 4.0) - diff(h)).mapv(|z| z / 3.0);
    let gram: f64 = d.iter().map(|z| z.norm_sqr()).sum();
    2.0 / sigma2 * n_snapshots as f64 * gram
}
