//! Uniform cylindrical array geometry and steering vectors.
//!
//! The receive array stacks `n_vertical` rings (uniform circular arrays) of
//! `n_horizontal` antennas each, radius `radius`, adjacent rings `ring_spacing`
//! apart. Steering factorizes as `a = a_V (x) a_H` (vertical Kronecker
//! horizontal, both unit-norm). On top of the exact responses this module
//! provides the two transformed responses the hybrid beamformer produces:
//! the Dirichlet-kernel vertical beamspace response and the Bessel-weighted
//! phase-mode (Q-DFT) horizontal response.

use ndarray::prelude::*;
use num_complex::Complex64 as C64;

use crate::bessel::bessel_j_upto;
use crate::linalg::kron_vec;
use crate::{Error, Result, SPEED_OF_LIGHT};

/// UCyA geometry plus OFDM band layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayConfig {
    /// Number of stacked rings `N_V`.
    pub n_vertical: usize,
    /// Antennas per ring `N_H`.
    pub n_horizontal: usize,
    /// Ring radius in meters.
    pub radius: f64,
    /// Vertical spacing between adjacent rings in meters.
    pub ring_spacing: f64,
    /// Carrier frequency at the lower band edge, Hz.
    pub f0: f64,
    /// Subcarrier spacing, Hz.
    pub delta_f: f64,
    /// Number of subcarriers `M`.
    pub n_subcarriers: usize,
}

impl ArrayConfig {
    pub fn new(
        n_vertical: usize,
        n_horizontal: usize,
        radius: f64,
        ring_spacing: f64,
        f0: f64,
        delta_f: f64,
        n_subcarriers: usize,
    ) -> Result<Self> {
        let cfg = Self {
            n_vertical,
            n_horizontal,
            radius,
            ring_spacing,
            f0,
            delta_f,
            n_subcarriers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.n_vertical == 0 || self.n_horizontal == 0 {
            return Err(Error::Config("array needs at least one antenna".into()));
        }
        if !(self.radius > 0.0) || !(self.ring_spacing > 0.0) {
            return Err(Error::Config("radius and ring spacing must be > 0".into()));
        }
        if !(self.f0 > 0.0) || !(self.delta_f > 0.0) {
            return Err(Error::Config("f0 and delta_f must be > 0".into()));
        }
        if self.n_subcarriers < 2 {
            return Err(Error::Config("need at least 2 subcarriers".into()));
        }
        let p = self.highest_order();
        if self.n_horizontal < 2 * p {
            return Err(Error::Config(format!(
                "n_horizontal = {} violates N_H >= 2P with P = {p}; the phase-mode \
                 transform would alias significant Bessel orders",
                self.n_horizontal
            )));
        }
        Ok(())
    }

    /// Total antenna count `N_R = N_V * N_H`.
    pub fn n_antennas(&self) -> usize {
        self.n_vertical * self.n_horizontal
    }

    /// Frequency of subcarrier `m`: `f_m = f0 + m * delta_f`.
    pub fn subcarrier_freq(&self, m: usize) -> f64 {
        self.f0 + m as f64 * self.delta_f
    }

    /// Carrier wavelength at the lower band edge.
    pub fn lambda0(&self) -> f64 {
        SPEED_OF_LIGHT / self.f0
    }

    /// Occupied bandwidth `M * delta_f`.
    pub fn bandwidth(&self) -> f64 {
        self.n_subcarriers as f64 * self.delta_f
    }

    /// Highest retained phase-mode order `P = floor(2 pi f0 r / c)`.
    pub fn highest_order(&self) -> usize {
        highest_order(self.f0, self.radius)
    }

    /// Number of retained phase modes, `2P + 1`.
    pub fn n_phase_modes(&self) -> usize {
        2 * self.highest_order() + 1
    }

    fn check_subcarrier(&self, m: usize) -> Result<()> {
        if m >= self.n_subcarriers {
            return Err(Error::Domain(format!(
                "subcarrier index {m} out of range [0, {})",
                self.n_subcarriers
            )));
        }
        Ok(())
    }
}

/// `P = floor(2 pi f0 r / c)`.
pub fn highest_order(f0: f64, radius: f64) -> usize {
    (2.0 * std::f64::consts::PI * f0 * radius / SPEED_OF_LIGHT).floor() as usize
}

/// Which response family a steering vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteeringPlane {
    Vertical,
    Horizontal,
    Full,
    PhaseModeHorizontal,
    DirichletVertical,
}

/// An array response vector tagged with its family and subcarrier.
#[derive(Debug, Clone)]
pub struct SteeringVector {
    pub entries: Array1<C64>,
    pub plane: SteeringPlane,
    pub subcarrier: usize,
}

impl SteeringVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Exact vertical response: entry `n_V` (1-based) is
/// `exp(-j 2 pi f_m h (n_V - (N_V+1)/2) cos(theta) / c) / sqrt(N_V)`.
pub fn vertical_steering(cfg: &ArrayConfig, m: usize, theta: f64) -> Result<SteeringVector> {
    cfg.check_subcarrier(m)?;
    let fm = cfg.subcarrier_freq(m);
    let nv = cfg.n_vertical;
    let scale = 1.0 / (nv as f64).sqrt();
    let coef = 2.0 * std::f64::consts::PI / SPEED_OF_LIGHT * fm * cfg.ring_spacing * theta.cos();
    let center = (nv as f64 + 1.0) / 2.0;
    let entries = Array1::from_iter((1..=nv).map(|k| {
        let phase = -coef * (k as f64 - center);
        C64::from_polar(scale, phase)
    }));
    Ok(SteeringVector {
        entries,
        plane: SteeringPlane::Vertical,
        subcarrier: m,
    })
}

/// Exact horizontal response: entry `n_H` (1-based) is
/// `exp(j 2 pi f_m r sin(theta) cos(phi - phi_{n_H}) / c) / sqrt(N_H)` with
/// `phi_{n_H} = 2 pi (n_H - 1) / N_H`.
pub fn horizontal_steering(
    cfg: &ArrayConfig,
    m: usize,
    phi: f64,
    theta: f64,
) -> Result<SteeringVector> {
    cfg.check_subcarrier(m)?;
    let fm = cfg.subcarrier_freq(m);
    let nh = cfg.n_horizontal;
    let scale = 1.0 / (nh as f64).sqrt();
    let omega = 2.0 * std::f64::consts::PI / SPEED_OF_LIGHT * fm * cfg.radius * theta.sin();
    let entries = Array1::from_iter((0..nh).map(|i| {
        let phin = 2.0 * std::f64::consts::PI * i as f64 / nh as f64;
        C64::from_polar(scale, omega * (phi - phin).cos())
    }));
    Ok(SteeringVector {
        entries,
        plane: SteeringPlane::Horizontal,
        subcarrier: m,
    })
}

/// Full response `a_V (x) a_H`, length `N_R`, vertical index major.
pub fn full_steering(cfg: &ArrayConfig, m: usize, phi: f64, theta: f64) -> Result<SteeringVector> {
    let v = vertical_steering(cfg, m, theta)?;
    let h = horizontal_steering(cfg, m, phi, theta)?;
    Ok(SteeringVector {
        entries: kron_vec(&v.entries, &h.entries),
        plane: SteeringPlane::Full,
        subcarrier: m,
    })
}

/// Phase-mode horizontal response after the Q-DFT reduction: entry for order
/// `p` (stored at `p + P`) is `j^p J_p(w) exp(-j p phi)` with
/// `w = 2 pi f_m r sin(theta) / c`.
pub fn phase_mode_steering(
    cfg: &ArrayConfig,
    m: usize,
    phi: f64,
    theta: f64,
) -> Result<SteeringVector> {
    cfg.check_subcarrier(m)?;
    let fm = cfg.subcarrier_freq(m);
    let p = cfg.highest_order() as i64;
    let entries = phase_mode_vector(p, fm, cfg.radius, phi, theta)?;
    Ok(SteeringVector {
        entries,
        plane: SteeringPlane::PhaseModeHorizontal,
        subcarrier: m,
    })
}

/// Phase-mode response for arbitrary geometry (no config invariants), used
/// both by the pipeline and the Theorem-1 leakage measurements.
pub fn phase_mode_vector(
    p_max: i64,
    freq: f64,
    radius: f64,
    phi: f64,
    theta: f64,
) -> Result<Array1<C64>> {
    let omega = 2.0 * std::f64::consts::PI / SPEED_OF_LIGHT * freq * radius * theta.sin();
    let j = bessel_j_upto(p_max as usize, omega)?;
    let n = (2 * p_max + 1) as usize;
    let mut entries = Array1::zeros(n);
    for p in -p_max..=p_max {
        // j^p J_p(w) e^{-j p phi}; J_{-p} = (-1)^p J_p
        let jp = if p >= 0 {
            j[p as usize]
        } else if p % 2 == 0 {
            j[(-p) as usize]
        } else {
            -j[(-p) as usize]
        };
        let phase = std::f64::consts::FRAC_PI_2 * p as f64 - p as f64 * phi;
        entries[(p + p_max) as usize] = C64::from_polar(1.0, phase) * jp;
    }
    Ok(entries)
}

/// Dirichlet-kernel vertical beamspace response for the selected beams:
/// entry for beam `eta(u)` is `sin(N_V psi/2) / sin(psi/2)` with
/// `psi = 2 pi f_m h cos(theta)/c - 2 pi eta(u)/N_V`; the removable
/// singularity at `sin(psi/2) = 0` evaluates to `+-N_V`.
pub fn dirichlet_vertical(
    cfg: &ArrayConfig,
    m: usize,
    theta: f64,
    beam_indices: &[usize],
) -> Result<SteeringVector> {
    cfg.check_subcarrier(m)?;
    for &b in beam_indices {
        if b < 1 || b > cfg.n_vertical {
            return Err(Error::Domain(format!(
                "beam index {b} outside [1, {}]",
                cfg.n_vertical
            )));
        }
    }
    let fm = cfg.subcarrier_freq(m);
    let nv = cfg.n_vertical as f64;
    let g = 2.0 * std::f64::consts::PI * fm * cfg.ring_spacing * theta.cos() / SPEED_OF_LIGHT;
    let entries = Array1::from_iter(beam_indices.iter().map(|&u| {
        let psi = g - 2.0 * std::f64::consts::PI * u as f64 / nv;
        C64::new(dirichlet_kernel(psi, cfg.n_vertical), 0.0)
    }));
    Ok(SteeringVector {
        entries,
        plane: SteeringPlane::DirichletVertical,
        subcarrier: m,
    })
}

/// `sin(N psi / 2) / sin(psi / 2)` with the removable singularity handled.
pub fn dirichlet_kernel(psi: f64, n: usize) -> f64 {
    let half = psi / 2.0;
    let den = half.sin();
    if den.abs() < 1e-12 {
        // removable singularity at 2*pi multiples; l'Hopital gives +-N
        return n as f64 * (n as f64 * half).cos() / half.cos();
    }
    (n as f64 * half).sin() / den
}

/// Vertical beamspace matrix `U_d`: column `i` (1-based) holds
/// `exp(-j 2 pi (n_V - (N_V+1)/2) i / N_V)`; columns are orthogonal with
/// `U_d^H U_d = N_V I`.
pub fn beamspace_matrix(n_vertical: usize) -> Array2<C64> {
    let nv = n_vertical;
    let center = (nv as f64 + 1.0) / 2.0;
    let mut u = Array2::zeros((nv, nv));
    for (col, i) in (1..=nv).enumerate() {
        for (row, k) in (1..=nv).enumerate() {
            let phase =
                -2.0 * std::f64::consts::PI / nv as f64 * (k as f64 - center) * i as f64;
            u[[row, col]] = C64::from_polar(1.0, phase);
        }
    }
    u
}

/// Exact Q-DFT of a horizontal sample vector at integer order `p`:
/// `sum_n a[n] exp(-j 2 pi (n-1) p / N_H)`.
pub fn qdft_coefficient(samples: &Array1<C64>, p: i64) -> C64 {
    let nh = samples.len();
    let mut acc = C64::new(0.0, 0.0);
    for (i, &s) in samples.iter().enumerate() {
        let phase = -2.0 * std::f64::consts::PI * i as f64 * p as f64 / nh as f64;
        acc += s * C64::from_polar(1.0, phase);
    }
    acc
}

/// Relative squared error between the exact `(2P+1)`-order Q-DFT of the
/// exact horizontal steering vector and its Bessel phase-mode approximation,
/// at one `(phi, theta)` point. This is the Theorem-1 truncation/aliasing
/// loss; it is tiny when `N_H >= 2P` and large otherwise.
pub fn phase_mode_approx_error(
    n_horizontal: usize,
    p_max: i64,
    f0: f64,
    radius: f64,
    phi: f64,
    theta: f64,
) -> Result<f64> {
    let omega = 2.0 * std::f64::consts::PI / SPEED_OF_LIGHT * f0 * radius * theta.sin();
    let scale = 1.0 / (n_horizontal as f64).sqrt();
    let samples = Array1::from_iter((0..n_horizontal).map(|i| {
        let phin = 2.0 * std::f64::consts::PI * i as f64 / n_horizontal as f64;
        C64::from_polar(scale, omega * (phi - phin).cos())
    }));
    let approx = phase_mode_vector(p_max, f0, radius, phi, theta)?;
    let sqrt_nh = (n_horizontal as f64).sqrt();
    let mut num = 0.0;
    let mut den = 0.0;
    for p in -p_max..=p_max {
        let exact = qdft_coefficient(&samples, p);
        // Theorem-1 form: A_PM,p ~ sqrt(N_H) j^p J_p(w) e^{-j p phi}
        let diff = exact - approx[(p + p_max) as usize] * sqrt_nh;
        num += diff.norm_sqr();
        den += exact.norm_sqr();
    }
    Ok(num / den.max(1e-300))
}

/// Fraction of Q-DFT energy in distinct DFT bins with |order| > P
/// (the truncation discards it). Only meaningful when `N_H > 2P`.
pub fn out_of_band_energy_fraction(
    n_horizontal: usize,
    p_max: i64,
    f0: f64,
    radius: f64,
    phi: f64,
    theta: f64,
) -> Result<f64> {
    let omega = 2.0 * std::f64::consts::PI / SPEED_OF_LIGHT * f0 * radius * theta.sin();
    let scale = 1.0 / (n_horizontal as f64).sqrt();
    let samples = Array1::from_iter((0..n_horizontal).map(|i| {
        let phin = 2.0 * std::f64::consts::PI * i as f64 / n_horizontal as f64;
        C64::from_polar(scale, omega * (phi - phin).cos())
    }));
    let nh = n_horizontal as i64;
    let lo = -(nh - 1) / 2 - i64::from(nh % 2 == 0);
    let hi = nh / 2;
    let mut inband = 0.0;
    let mut total = 0.0;
    for p in lo..=hi {
        let e = qdft_coefficient(&samples, p).norm_sqr();
        total += e;
        if p.abs() <= p_max {
            inband += e;
        }
    }
    Ok((total - inband) / total.max(1e-300))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::bessel_j;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    pub(crate) fn test_config() -> ArrayConfig {
        // f0 = 30 GHz, r = 2 lambda0, h = lambda0 / 2, B = 2 GHz over 20 carriers
        let f0 = 30e9;
        let lam = SPEED_OF_LIGHT / f0;
        ArrayConfig::new(20, 30, 2.0 * lam, 0.5 * lam, f0, 100e6, 20).unwrap()
    }

    #[test]
    fn highest_order_examples() {
        let cfg = test_config();
        // r = 2 lambda0 -> floor(4 pi) = 12
        assert_eq!(cfg.highest_order(), 12);
        // r -> 0+ gives 0 (constructed without the N_H >= 2P guard tripping)
        assert_eq!(highest_order(30e9, 1e-12), 0);
        // r = lambda0 -> floor(2 pi) = 6
        assert_eq!(highest_order(30e9, SPEED_OF_LIGHT / 30e9), 6);
    }

    #[test]
    fn config_rejects_undersized_ring() {
        let f0 = 30e9;
        let lam = SPEED_OF_LIGHT / f0;
        // P = 12 requires N_H >= 24
        assert!(ArrayConfig::new(20, 10, 2.0 * lam, 0.5 * lam, f0, 100e6, 20).is_err());
    }

    #[test]
    fn vertical_steering_broadside_is_flat() {
        let cfg = test_config();
        let v = vertical_steering(&cfg, 0, std::f64::consts::FRAC_PI_2).unwrap();
        let want = 1.0 / (cfg.n_vertical as f64).sqrt();
        for z in v.entries.iter() {
            assert_abs_diff_eq!(z.re, want, epsilon = 1e-12);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn vertical_steering_single_ring() {
        let f0 = 30e9;
        let lam = SPEED_OF_LIGHT / f0;
        let cfg = ArrayConfig::new(1, 30, 2.0 * lam, 0.5 * lam, f0, 100e6, 20).unwrap();
        let v = vertical_steering(&cfg, 0, 1.0).unwrap();
        assert_eq!(v.len(), 1);
        assert_abs_diff_eq!((v.entries[0] - C64::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn vertical_steering_matches_scalar_formula() {
        // independent elementwise evaluation at N_V = 4, theta = 60 deg
        let f0 = 30e9;
        let lam = SPEED_OF_LIGHT / f0;
        let cfg = ArrayConfig::new(4, 30, 2.0 * lam, 0.5 * lam, f0, 100e6, 20).unwrap();
        let theta = 60f64.to_radians();
        let v = vertical_steering(&cfg, 0, theta).unwrap();
        for (i, k) in (1..=4).enumerate() {
            let arg = -2.0 * std::f64::consts::PI / SPEED_OF_LIGHT
                * cfg.f0
                * cfg.ring_spacing
                * (k as f64 - 2.5)
                * theta.cos();
            let want = C64::from_polar(0.5, arg);
            assert_abs_diff_eq!((v.entries[i] - want).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn horizontal_steering_zenith_is_flat() {
        let cfg = test_config();
        let h = horizontal_steering(&cfg, 3, 1.0, 1e-9).unwrap();
        let want = 1.0 / (cfg.n_horizontal as f64).sqrt();
        for z in h.entries.iter() {
            assert_abs_diff_eq!(z.re, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn horizontal_rotation_permutes_entries() {
        let cfg = test_config();
        let theta = 1.1;
        let phi = 0.37;
        let step = 2.0 * std::f64::consts::PI / cfg.n_horizontal as f64;
        let a = horizontal_steering(&cfg, 5, phi, theta).unwrap();
        let b = horizontal_steering(&cfg, 5, phi + step, theta).unwrap();
        // rotating by one antenna spacing shifts the pattern by one slot
        let nh = cfg.n_horizontal;
        for i in 0..nh {
            let j = (i + 1) % nh;
            assert_abs_diff_eq!((b.entries[j] - a.entries[i]).norm(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn full_steering_is_kronecker() {
        let cfg = test_config();
        let (phi, theta) = (2.0, 1.0);
        let f = full_steering(&cfg, 7, phi, theta).unwrap();
        let v = vertical_steering(&cfg, 7, theta).unwrap();
        let h = horizontal_steering(&cfg, 7, phi, theta).unwrap();
        assert_eq!(f.len(), cfg.n_antennas());
        for (i, z) in f.entries.iter().enumerate() {
            let want = v.entries[i / cfg.n_horizontal] * h.entries[i % cfg.n_horizontal];
            assert_eq!(*z, want, "bit-exact kron construction at {i}");
        }
    }

    #[test]
    fn phase_mode_zenith_collapses_to_dc() {
        let cfg = test_config();
        let pm = phase_mode_steering(&cfg, 0, 1.0, 0.0).unwrap();
        let p = cfg.highest_order();
        for (i, z) in pm.entries.iter().enumerate() {
            if i == p {
                assert_abs_diff_eq!(z.re, 1.0, epsilon = 1e-12);
            } else {
                assert_abs_diff_eq!(z.norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn phase_mode_magnitude_symmetry() {
        let cfg = test_config();
        let pm = phase_mode_steering(&cfg, 4, 0.9, 1.2).unwrap();
        let p = cfg.highest_order() as i64;
        for q in 1..=p {
            let plus = pm.entries[(q + p) as usize].norm();
            let minus = pm.entries[(-q + p) as usize].norm();
            assert_abs_diff_eq!(plus, minus, epsilon = 1e-13);
        }
    }

    #[test]
    fn phase_mode_close_to_exact_qdft() {
        // relative L2 distance to (1/sqrt(N_H)) * exact Q-DFT below 1e-2
        // for N_H = 30, P = 12
        let cfg = test_config();
        let (phi, theta) = (0.8, 1.05);
        let h = horizontal_steering(&cfg, 0, phi, theta).unwrap();
        let pm = phase_mode_steering(&cfg, 0, phi, theta).unwrap();
        let p = cfg.highest_order() as i64;
        let scale = 1.0 / (cfg.n_horizontal as f64).sqrt();
        let mut num = 0.0;
        let mut den = 0.0;
        for q in -p..=p {
            let exact = qdft_coefficient(&h.entries, q) * scale;
            let diff = exact - pm.entries[(q + p) as usize];
            num += diff.norm_sqr();
            den += exact.norm_sqr();
        }
        assert!((num / den).sqrt() < 1e-2, "rel dist {}", (num / den).sqrt());
    }

    #[test]
    fn dirichlet_peak_and_null() {
        let cfg = test_config();
        let nv = cfg.n_vertical as f64;
        // pick theta so that psi_u = 0 exactly for beam u: g = 2 pi u / N_V
        let u = 5usize;
        let cos_theta =
            u as f64 / nv * SPEED_OF_LIGHT / (cfg.f0 * cfg.ring_spacing);
        let theta = cos_theta.acos();
        let d = dirichlet_vertical(&cfg, 0, theta, &[u]).unwrap();
        assert_abs_diff_eq!(d.entries[0].re, nv, epsilon = 1e-6);
        // off-peak null: psi = 2 pi / N_V away from the peak
        let g_null = 2.0 * std::f64::consts::PI * (u as f64 + 1.0) / nv;
        let cos_null = g_null * SPEED_OF_LIGHT / (2.0 * std::f64::consts::PI * cfg.f0 * cfg.ring_spacing);
        let d0 = dirichlet_vertical(&cfg, 0, cos_null.acos(), &[u]).unwrap();
        assert_abs_diff_eq!(d0.entries[0].norm(), 0.0, epsilon = 1e-6);
    }

    #[test]
    fn dirichlet_matches_beamspace_projection() {
        // sqrt(N_V) * (U_d columns)^H a_V, elementwise
        let cfg = test_config();
        let theta = 1.0;
        let beams = [2usize, 5, 9];
        let d = dirichlet_vertical(&cfg, 3, theta, &beams).unwrap();
        let u = beamspace_matrix(cfg.n_vertical);
        let a = vertical_steering(&cfg, 3, theta).unwrap();
        for (i, &b) in beams.iter().enumerate() {
            let col = u.column(b - 1);
            let proj: C64 = col
                .iter()
                .zip(a.entries.iter())
                .map(|(ui, ai)| ui.conj() * ai)
                .sum();
            let want = proj * (cfg.n_vertical as f64).sqrt();
            assert_abs_diff_eq!((d.entries[i] - want).norm(), 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn beamspace_columns_orthogonal() {
        let u = beamspace_matrix(20);
        let g = u.t().mapv(|z| z.conj()).dot(&u);
        for i in 0..20 {
            for j in 0..20 {
                let want = if i == j { 20.0 } else { 0.0 };
                assert_abs_diff_eq!((g[[i, j]] - C64::new(want, 0.0)).norm(), 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn bessel_convergence_bound_over_order_grid() {
        // 0 < J_v(v rho) <= J_1(1) + 1e-6, nonincreasing in v at fixed rho
        let bound = bessel_j(1, 1.0).unwrap() + 1e-6;
        for step in 1..=20usize {
            let rho = 0.05 * step as f64;
            let mut prev = f64::INFINITY;
            for v in 1..=50i64 {
                let val = bessel_j(v, v as f64 * rho).unwrap();
                assert!(val > 0.0, "J_{v}({}) not positive", v as f64 * rho);
                assert!(val <= bound, "J_{v}(v rho) = {val} above bound");
                assert!(val <= prev + 1e-12, "not nonincreasing at v={v}, rho={rho}");
                prev = val;
            }
        }
    }

    #[test]
    fn truncation_leakage_small_in_operational_range() {
        // discarded-bin energy fraction for N_H = 30, P = 12 over a grid of
        // azimuths and elevations in the operational range (the estimator's
        // validity region; at theta -> 90 deg the argument slightly exceeds
        // P and the discarded bins pick up a few percent)
        let mut worst = 0.0f64;
        for i in 0..10 {
            for k in 0..10 {
                let phi = 2.0 * std::f64::consts::PI * i as f64 / 10.0;
                let theta = (15.0 + 60.0 * k as f64 / 9.0).to_radians();
                let f0 = 30e9;
                let r = 2.0 * SPEED_OF_LIGHT / f0;
                let frac = out_of_band_energy_fraction(30, 12, f0, r, phi, theta).unwrap();
                worst = worst.max(frac);
            }
        }
        assert!(worst < 1e-2, "out-of-band energy fraction {worst}");
    }

    proptest! {
        #[test]
        fn horizontal_entries_unit_modulus(
            phi in 0.0..(2.0 * std::f64::consts::PI),
            theta in 0.05..3.0f64,
            m in 0usize..20,
        ) {
            let cfg = test_config();
            let h = horizontal_steering(&cfg, m, phi, theta).unwrap();
            let want = 1.0 / (cfg.n_horizontal as f64).sqrt();
            for z in h.entries.iter() {
                prop_assert!((z.norm() - want).abs() < 1e-12);
            }
        }

        #[test]
        fn full_equals_kron_property(
            phi in 0.0..(2.0 * std::f64::consts::PI),
            theta in 0.05..3.0f64,
        ) {
            let cfg = test_config();
            let f = full_steering(&cfg, 2, phi, theta).unwrap();
            let v = vertical_steering(&cfg, 2, theta).unwrap();
            let h = horizontal_steering(&cfg, 2, phi, theta).unwrap();
            let k = kron_vec(&v.entries, &h.entries);
            for (a, b) in f.entries.iter().zip(k.iter()) {
                prop_assert_eq!(*a, *b);
            }
        }
    }
}
