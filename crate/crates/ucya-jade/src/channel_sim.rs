//! Synthetic wideband multipath channels and noisy receive snapshots.
//!
//! The channel at subcarrier `m` is a sum of planar paths,
//! `H_m = sum_l beta_l exp(-j 2 pi f_m tau_l) a_m(phi_l, theta_l)`, observed
//! as `r_m = H_m x_m + n_m` with circularly-symmetric white Gaussian noise.
//! Snapshots are generated from counter-based per-snapshot substreams, so a
//! tensor is reproducible from its seed no matter how generation is split
//! across threads.

use ndarray::prelude::*;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::array_model::{full_steering, ArrayConfig};
use crate::{Error, Result};

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    /// Azimuth of arrival, radians in `[0, 2 pi)`.
    pub azimuth: f64,
    /// Elevation of arrival, radians in `(0, pi)` (measured from the array axis).
    pub elevation: f64,
    /// Propagation delay, seconds.
    pub delay: f64,
    /// Complex path amplitude.
    pub gain: C64,
}

impl PathParams {
    /// Validate against the unambiguous delay range of the band layout.
    pub fn new(azimuth: f64, elevation: f64, delay: f64, gain: C64, delta_f: f64) -> Result<Self> {
        if !(0.0..2.0 * std::f64::consts::PI).contains(&azimuth) {
            return Err(Error::Config(format!("azimuth {azimuth} outside [0, 2pi)")));
        }
        if !(elevation > 0.0 && elevation < std::f64::consts::PI) {
            return Err(Error::Config(format!(
                "elevation {elevation} outside (0, pi)"
            )));
        }
        if !(delay >= 0.0 && delay < 1.0 / delta_f) {
            return Err(Error::Config(format!(
                "delay {delay} outside the unambiguous range [0, {})",
                1.0 / delta_f
            )));
        }
        if !gain.is_finite() || gain.norm() == 0.0 {
            return Err(Error::Config("path gain must be finite and nonzero".into()));
        }
        Ok(Self {
            azimuth,
            elevation,
            delay,
            gain,
        })
    }
}

/// How path amplitudes evolve over the snapshot axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainModel {
    /// Amplitudes stay at their scenario values for every snapshot. The
    /// snapshot covariance then has rank one; use only for single-path or
    /// linearity tests.
    Fixed,
    /// Each snapshot redraws `beta_l` as complex Gaussian with the scenario
    /// gain's mean power, independent across paths and snapshots. This is the
    /// rank condition the subspace covariance model needs.
    PerSnapshotRandom,
}

/// A complete simulation scenario.
#[derive(Debug, Clone)]
pub struct SimulationScenario {
    pub paths: Vec<PathParams>,
    /// Per-antenna average SNR in dB; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    /// Number of snapshots `T_s`.
    pub n_snapshots: usize,
    /// Pilot symbol, identical on every subcarrier.
    pub pilot: C64,
    pub gain_model: GainModel,
    pub seed: u64,
}

impl SimulationScenario {
    pub fn validate(&self) -> Result<()> {
        if self.paths.is_empty() {
            return Err(Error::Config("scenario needs at least one path".into()));
        }
        if self.gain_model == GainModel::PerSnapshotRandom && self.n_snapshots < self.paths.len() {
            return Err(Error::Config(format!(
                "rank condition violated: {} snapshots < {} paths",
                self.n_snapshots,
                self.paths.len()
            )));
        }
        if self.n_snapshots == 0 {
            return Err(Error::Config("need at least one snapshot".into()));
        }
        Ok(())
    }

    /// Mean path power `E{|beta|^2}` over the scenario's paths.
    pub fn mean_path_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum::<f64>() / self.paths.len() as f64
    }

    /// Noise power per complex entry,
    /// `sigma_n^2 = |pilot|^2 E{|beta|^2} / 10^(snr/10)`.
    pub fn noise_power(&self) -> f64 {
        if self.snr_db.is_infinite() {
            return 0.0;
        }
        self.pilot.norm_sqr() * self.mean_path_power() / 10f64.powf(self.snr_db / 10.0)
    }
}

/// Which stage of the receive pipeline a snapshot tensor sits at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialDim {
    /// Raw antenna samples, dimension `N_R`.
    Antenna,
    /// After vertical beamspace combining, dimension `N_V`.
    PostStage1,
    /// After the phase-mode reduction, dimension `(2P+1) N_B`.
    PostStage2,
}

/// Complex baseband observations indexed `(spatial, subcarrier, snapshot)`.
#[derive(Debug, Clone)]
pub struct SnapshotTensor {
    pub data: Array3<C64>,
    pub label: SpatialDim,
}

impl SnapshotTensor {
    pub fn new(data: Array3<C64>, label: SpatialDim) -> Result<Self> {
        if data.iter().any(|z| !z.is_finite()) {
            return Err(Error::Config("snapshot tensor has non-finite entries".into()));
        }
        Ok(Self { data, label })
    }

    pub fn spatial_dim(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_subcarriers(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn n_snapshots(&self) -> usize {
        self.data.shape()[2]
    }
}

/// Noise-free channel vector at subcarrier `m`:
/// `sum_l beta_l exp(-j 2 pi f_m tau_l) a_m(phi_l, theta_l)`.
pub fn channel_vector(cfg: &ArrayConfig, paths: &[PathParams], m: usize) -> Result<Array1<C64>> {
    let mut h = Array1::zeros(cfg.n_antennas());
    let fm = cfg.subcarrier_freq(m);
    for p in paths {
        let a = full_steering(cfg, m, p.azimuth, p.elevation)?;
        let phasor = p.gain * C64::from_polar(1.0, -2.0 * std::f64::consts::PI * fm * p.delay);
        h.zip_mut_with(&a.entries, |acc, &ai| *acc += phasor * ai);
    }
    Ok(h)
}

/// Substream seed for snapshot `t`, derived so generation order and thread
/// layout cannot change the draw.
fn snapshot_seed(seed: u64, t: usize) -> u64 {
    splitmix64(seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// SplitMix64 finalizer; cheap seed scrambling for substreams.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn complex_gaussian(rng: &mut ChaCha8Rng, sigma2: f64) -> C64 {
    let s = (sigma2 / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

/// Simulate antenna-level snapshots for a scenario. Deterministic in
/// `scenario.seed`; per-snapshot substreams make the result independent of
/// how snapshots are scheduled.
pub fn simulate_snapshots(cfg: &ArrayConfig, scenario: &SimulationScenario) -> Result<SnapshotTensor> {
    scenario.validate()?;
    let nr = cfg.n_antennas();
    let m_count = cfg.n_subcarriers;
    let ts = scenario.n_snapshots;
    let sigma2 = scenario.noise_power();
    let np = scenario.paths.len();

    // Per-path steering phasors, shared across snapshots.
    let mut steer: Vec<Array1<C64>> = Vec::with_capacity(np * m_count);
    for m in 0..m_count {
        let fm = cfg.subcarrier_freq(m);
        for p in &scenario.paths {
            let a = full_steering(cfg, m, p.azimuth, p.elevation)?;
            let phasor = C64::from_polar(1.0, -2.0 * std::f64::consts::PI * fm * p.delay);
            steer.push(a.entries.mapv(|z| z * phasor * scenario.pilot));
        }
    }

    let mut data = Array3::zeros((nr, m_count, ts));
    for t in 0..ts {
        let mut rng = ChaCha8Rng::seed_from_u64(snapshot_seed(scenario.seed, t));
        // draw order is pinned: path gains first, then noise
        let gains: Vec<C64> = scenario
            .paths
            .iter()
            .map(|p| match scenario.gain_model {
                GainModel::Fixed => p.gain,
                GainModel::PerSnapshotRandom => complex_gaussian(&mut rng, p.gain.norm_sqr()),
            })
            .collect();
        for m in 0..m_count {
            for (l, g) in gains.iter().enumerate() {
                let a = &steer[m * np + l];
                let mut col = data.slice_mut(s![.., m, t]);
                col.zip_mut_with(a, |acc, &ai| *acc += *g * ai);
            }
            if sigma2 > 0.0 {
                let mut col = data.slice_mut(s![.., m, t]);
                for z in col.iter_mut() {
                    *z += complex_gaussian(&mut rng, sigma2);
                }
            }
        }
    }
    SnapshotTensor::new(data, SpatialDim::Antenna)
}
