//! Multidimensional spatial interpolation against beam squint.
//!
//! The transformed responses after stage 2 depend on the subcarrier
//! frequency, which smears the signal subspace across the band. The
//! interpolation nudges every stage-2 sample with scaled one-sided
//! differences along the phase-mode axis and the selected-beam axis so the
//! per-subcarrier response better matches the reference-frequency response
//! with virtual geometry `h_vi,m = f0 h / f_m`, `r_vi,m = f0 r / f_m`.
//!
//! Two stencil scalings are provided: `AsPrinted` applies the full neighbor
//! difference weighted by `r_vi/r` and `h_vi/h` (which equal 1 at `m = 0`),
//! `OffsetCorrected` weights by `r_vi/r - 1` and `h_vi/h - 1` (zero at
//! `m = 0`). Their squint suppression is measured, not assumed; the
//! acceptance harness picks whichever empirically lands closer to the
//! reference-frequency signal.

use ndarray::prelude::*;
use num_complex::Complex64 as C64;

use crate::array_model::{dirichlet_vertical, phase_mode_steering, ArrayConfig};
use crate::beamformer::BeamSelection;
use crate::channel_sim::{PathParams, SnapshotTensor, SpatialDim};
use crate::linalg::kron_vec;
use crate::{Error, Result};

/// Interpolation stencil variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MdsiMode {
    /// Scale factors `r_vi/r`, `h_vi/h` exactly as printed.
    AsPrinted,
    /// Scale factors `r_vi/r - 1`, `h_vi/h - 1` (no-op at the reference
    /// subcarrier).
    #[default]
    OffsetCorrected,
    /// Pass the tensor through unchanged.
    Disabled,
}

impl std::str::FromStr for MdsiMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as_printed" => Ok(MdsiMode::AsPrinted),
            "offset_corrected" => Ok(MdsiMode::OffsetCorrected),
            "disabled" => Ok(MdsiMode::Disabled),
            other => Err(Error::Config(format!("unknown mdsi mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for MdsiMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MdsiMode::AsPrinted => "as_printed",
            MdsiMode::OffsetCorrected => "offset_corrected",
            MdsiMode::Disabled => "disabled",
        };
        f.write_str(s)
    }
}

/// Per-subcarrier virtual geometry.
#[derive(Debug, Clone)]
pub struct VirtualGeometry {
    pub h_virtual: Vec<f64>,
    pub r_virtual: Vec<f64>,
}

impl VirtualGeometry {
    pub fn new(cfg: &ArrayConfig) -> Self {
        let h = (0..cfg.n_subcarriers)
            .map(|m| cfg.f0 * cfg.ring_spacing / cfg.subcarrier_freq(m))
            .collect();
        let r = (0..cfg.n_subcarriers)
            .map(|m| cfg.f0 * cfg.radius / cfg.subcarrier_freq(m))
            .collect();
        Self {
            h_virtual: h,
            r_virtual: r,
        }
    }
}

/// Reconstruct a stage-2 tensor. Elements with 1-based flat index up to
/// `(2P+1)(N_B - 1)` use forward differences along both axes, the rest use
/// backward differences; a neighbor falling off the tensor contributes a
/// zero difference (only possible when `N_B = 1`).
pub fn reconstruct(
    input: &SnapshotTensor,
    cfg: &ArrayConfig,
    selection: &BeamSelection,
    mode: MdsiMode,
) -> Result<SnapshotTensor> {
    if input.label != SpatialDim::PostStage2 {
        return Err(Error::Dimension(
            "mdsi expects a stage-2 output tensor".into(),
        ));
    }
    let n_modes = cfg.n_phase_modes();
    let nb = selection.n_beams();
    let n_ds = n_modes * nb;
    if input.spatial_dim() != n_ds {
        return Err(Error::Dimension(format!(
            "tensor spatial dim {} does not match (2P+1) N_B = {n_ds}",
            input.spatial_dim()
        )));
    }
    if mode == MdsiMode::Disabled {
        return SnapshotTensor::new(input.data.clone(), SpatialDim::PostStage2);
    }
    let geom = VirtualGeometry::new(cfg);
    let forward_limit = n_modes * (nb - 1); // 1-based threshold
    let mut out = input.data.clone();
    let m_count = input.n_subcarriers();
    let ts = input.n_snapshots();
    for m in 0..m_count {
        let ratio = geom.r_virtual[m] / cfg.radius; // equals h_vi/h as well
        let (scale_h, scale_v) = match mode {
            MdsiMode::AsPrinted => (ratio, ratio),
            MdsiMode::OffsetCorrected => (ratio - 1.0, ratio - 1.0),
            MdsiMode::Disabled => unreachable!(),
        };
        for t in 0..ts {
            let cur = input.data.slice(s![.., m, t]);
            for n in 0..n_ds {
                let forward = n + 1 <= forward_limit;
                let dh = if forward {
                    cur[n + 1] - cur[n]
                } else if n >= 1 {
                    cur[n] - cur[n - 1]
                } else {
                    C64::new(0.0, 0.0)
                };
                let dv = if forward {
                    cur[n + n_modes] - cur[n]
                } else if n >= n_modes {
                    cur[n] - cur[n - n_modes]
                } else {
                    C64::new(0.0, 0.0)
                };
                out[[n, m, t]] = cur[n] + dh * scale_h + dv * scale_v;
            }
        }
    }
    SnapshotTensor::new(out, SpatialDim::PostStage2)
}

/// The beam-squint-free target signal of the reconstruction: the noiseless
/// stage-2 observation built from reference-frequency responses,
/// `sum_l beta_l x e^{-j 2 pi f_m tau_l} (a~_V,0 (x) a~_H,0)`. Test/diagnostic
/// helper only.
pub fn ideal_reference(
    cfg: &ArrayConfig,
    selection: &BeamSelection,
    paths: &[PathParams],
    m: usize,
    pilot: C64,
) -> Result<Array1<C64>> {
    let n_ds = cfg.n_phase_modes() * selection.n_beams();
    let mut out = Array1::zeros(n_ds);
    let fm = cfg.subcarrier_freq(m);
    for p in paths {
        let dv = dirichlet_vertical(cfg, 0, p.elevation, &selection.indices)?;
        let pm = phase_mode_steering(cfg, 0, p.azimuth, p.elevation)?;
        let vec = kron_vec(&dv.entries, &pm.entries);
        let phasor =
            p.gain * pilot * C64::from_polar(1.0, -2.0 * std::f64::consts::PI * fm * p.delay);
        out.zip_mut_with(&vec, |acc, &v| *acc += phasor * v);
    }
    Ok(out)
}

/// Mean (over subcarriers) relative residual of the tensor's per-subcarrier
/// snapshots outside the span of the ideal reference-frequency signal
/// directions. Used to choose the operative stencil and to quantify squint.
pub fn mean_distance_to_ideal(
    tensor: &SnapshotTensor,
    cfg: &ArrayConfig,
    selection: &BeamSelection,
    paths: &[PathParams],
    pilot: C64,
) -> Result<f64> {
    let n_ds = cfg.n_phase_modes() * selection.n_beams();
    // orthonormal basis of the ideal per-path directions at m = 0
    let mut basis: Vec<Array1<C64>> = Vec::new();
    for p in paths {
        let one = ideal_reference(cfg, selection, std::slice::from_ref(p), 0, pilot)?;
        let mut v = one;
        for b in &basis {
            let proj: C64 = b.iter().zip(v.iter()).map(|(bi, vi)| bi.conj() * vi).sum();
            v.zip_mut_with(b, |x, &bi| *x -= proj * bi);
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-12 {
            basis.push(v.mapv(|z| z / norm));
        }
    }
    let mut acc = 0.0;
    let m_count = tensor.n_subcarriers();
    for m in 0..m_count {
        let mut num = 0.0;
        let mut den = 0.0;
        for t in 0..tensor.n_snapshots() {
            let y = tensor.data.slice(s![.., m, t]);
            let mut resid: Array1<C64> = y.to_owned();
            for b in &basis {
                let proj: C64 = b
                    .iter()
                    .zip(resid.iter())
                    .map(|(bi, vi)| bi.conj() * vi)
                    .sum();
                resid.zip_mut_with(b, |x, &bi| *x -= proj * bi);
            }
            num += resid.iter().map(|z| z.norm_sqr()).sum::<f64>();
            den += y.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        if den > 0.0 {
            acc += (num / den).sqrt();
        }
    }
    let _ = n_ds;
    Ok(acc / m_count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamformer::{apply_stage, build_stage1, build_stage2, select_beams};
    use crate::channel_sim::{simulate_snapshots, GainModel, SimulationScenario};
    use crate::SPEED_OF_LIGHT;
    use approx::assert_abs_diff_eq;

    fn cfg() -> ArrayConfig {
        let f0 = 30e9;
        let lam = SPEED_OF_LIGHT / f0;
        ArrayConfig::new(12, 30, 2.0 * lam, 0.5 * lam, f0, 100e6, 16).unwrap()
    }

    fn selection_for(c: &ArrayConfig, paths: &[PathParams]) -> (BeamSelection, SnapshotTensor) {
        let scenario = SimulationScenario {
            paths: paths.to_vec(),
            snr_db: f64::INFINITY,
            n_snapshots: 4,
            pilot: C64::new(1.0, 0.0),
            gain_model: GainModel::Fixed,
            seed: 2,
        };
        let tensor = simulate_snapshots(c, &scenario).unwrap();
        let s1 = apply_stage(&build_stage1(c), &tensor).unwrap();
        let sel = select_beams(&s1, 0.9, 1.0, paths.len()).unwrap();
        let s2 = apply_stage(&build_stage2(c, &sel), &tensor).unwrap();
        (sel, s2)
    }

    fn single_path(c: &ArrayConfig) -> PathParams {
        PathParams::new(2.1, 1.05, 2.3e-9, C64::new(1.0, 0.0), c.delta_f).unwrap()
    }

    #[test]
    fn constant_input_is_fixed_point() {
        let c = cfg();
        let (sel, s2) = selection_for(&c, &[single_path(&c)]);
        let n_ds = c.n_phase_modes() * sel.n_beams();
        let constant = SnapshotTensor::new(
            Array3::from_elem((n_ds, c.n_subcarriers, 2), C64::new(0.7, -0.3)),
            SpatialDim::PostStage2,
        )
        .unwrap();
        for mode in [MdsiMode::AsPrinted, MdsiMode::OffsetCorrected, MdsiMode::Disabled] {
            let out = reconstruct(&constant, &c, &sel, mode).unwrap();
            let diff = (&out.data - &constant.data)
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(diff < 1e-14, "mode {mode}: constant input changed by {diff}");
        }
        let _ = s2;
    }

    #[test]
    fn boundary_uses_backward_stencil() {
        // input nonzero only at the last element; hand-computed stencil
        let c = cfg();
        let (sel, _) = selection_for(&c, &[single_path(&c)]);
        let n_modes = c.n_phase_modes();
        let n_ds = n_modes * sel.n_beams();
        let mut data = Array3::zeros((n_ds, c.n_subcarriers, 1));
        let spike = C64::new(1.0, 0.5);
        data[[n_ds - 1, 3, 0]] = spike;
        let tensor = SnapshotTensor::new(data, SpatialDim::PostStage2).unwrap();
        let out = reconstruct(&tensor, &c, &sel, MdsiMode::OffsetCorrected).unwrap();
        let ratio = c.f0 / c.subcarrier_freq(3) - 1.0;
        // last element: backward differences both hit the spike itself
        let want_last = spike + spike * ratio + spike * ratio;
        assert_abs_diff_eq!(
            (out.data[[n_ds - 1, 3, 0]] - want_last).norm(),
            0.0,
            epsilon = 1e-14
        );
        // the forward-region neighbors that reference the spike
        let want_prev = spike * ratio; // element n_ds-2 sees spike as +1 neighbor
        assert_abs_diff_eq!(
            (out.data[[n_ds - 2, 3, 0]] - want_prev).norm(),
            0.0,
            epsilon = 1e-14
        );
        let want_vstep = spike * ratio; // element n_ds-1-n_modes sees it as +V neighbor
        assert_abs_diff_eq!(
            (out.data[[n_ds - 1 - n_modes, 3, 0]] - want_vstep).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn reconstruct_is_linear() {
        let c = cfg();
        let (sel, s2) = selection_for(&c, &[single_path(&c)]);
        let n_ds = c.n_phase_modes() * sel.n_beams();
        let other = SnapshotTensor::new(
            Array3::from_shape_fn((n_ds, c.n_subcarriers, s2.n_snapshots()), |(i, m, t)| {
                C64::new(
                    ((i * 7 + m * 3 + t) % 11) as f64 / 11.0 - 0.5,
                    ((i * 5 + m + 2 * t) % 13) as f64 / 13.0 - 0.5,
                )
            }),
            SpatialDim::PostStage2,
        )
        .unwrap();
        let alpha = C64::new(1.3, -0.4);
        let mixed = SnapshotTensor::new(
            &s2.data + &other.data.mapv(|z| z * alpha),
            SpatialDim::PostStage2,
        )
        .unwrap();
        let lhs = reconstruct(&mixed, &c, &sel, MdsiMode::OffsetCorrected).unwrap();
        let r1 = reconstruct(&s2, &c, &sel, MdsiMode::OffsetCorrected).unwrap();
        let r2 = reconstruct(&other, &c, &sel, MdsiMode::OffsetCorrected).unwrap();
        let rhs = &r1.data + &r2.data.mapv(|z| z * alpha);
        let diff = (&lhs.data - &rhs).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn virtual_geometry_monotone_and_anchored() {
        let c = cfg();
        let g = VirtualGeometry::new(&c);
        assert_abs_diff_eq!(g.h_virtual[0], c.ring_spacing, epsilon = 0.0);
        assert_abs_diff_eq!(g.r_virtual[0], c.radius, epsilon = 0.0);
        for m in 1..c.n_subcarriers {
            assert!(g.h_virtual[m] < g.h_virtual[m - 1]);
            assert!(g.r_virtual[m] < g.r_virtual[m - 1]);
        }
    }

    #[test]
    fn ideal_reference_matches_stage2_at_reference_subcarrier() {
        let c = cfg();
        let p = single_path(&c);
        let (sel, s2) = selection_for(&c, &[p]);
        let ideal = ideal_reference(&c, &sel, &[p], 0, C64::new(1.0, 0.0)).unwrap();
        let got = s2.data.slice(s![.., 0, 0]);
        let num: f64 = got
            .iter()
            .zip(ideal.iter())
            .map(|(g, w)| (g - w).norm_sqr())
            .sum();
        let den: f64 = ideal.iter().map(|w| w.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-2, "rel err {}", (num / den).sqrt());
    }

    #[test]
    fn ideal_reference_empty_paths_is_zero() {
        let c = cfg();
        let (sel, _) = selection_for(&c, &[single_path(&c)]);
        let ideal = ideal_reference(&c, &sel, &[], 5, C64::new(1.0, 0.0)).unwrap();
        assert!(ideal.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn ideal_reference_vertical_factor_is_reference_dirichlet() {
        // single path: the beam-axis profile of the ideal signal equals the
        // f0 Dirichlet response elementwise (up to the common horizontal sum)
        let c = cfg();
        let p = single_path(&c);
        let (sel, _) = selection_for(&c, &[p]);
        let m = 9;
        let ideal = ideal_reference(&c, &sel, &[p], m, C64::new(1.0, 0.0)).unwrap();
        let dv = dirichlet_vertical(&c, 0, p.elevation, &sel.indices).unwrap();
        let n_modes = c.n_phase_modes();
        // ratio of per-beam blocks must match the Dirichlet ratios
        let blk = |u: usize| -> C64 {
            (0..n_modes).map(|q| ideal[u * n_modes + q]).sum()
        };
        let r0 = blk(0) / dv.entries[0];
        for u in 1..sel.n_beams() {
            let ru = blk(u) / dv.entries[u];
            assert_abs_diff_eq!((ru - r0).norm(), 0.0, epsilon = 1e-9 * r0.norm());
        }
    }

    #[test]
    fn squint_distance_is_measured_per_mode() {
        // The printed stencil must measurably worsen the distance to the
        // ideal signal while the offset stencil stays near the raw tensor;
        // which of the two the pipeline uses is decided empirically by the
        // harness, and this pins the measured ordering.
        let c = cfg();
        let p = single_path(&c);
        let (sel, s2) = selection_for(&c, &[p]);
        let pilot = C64::new(1.0, 0.0);
        let d_raw = mean_distance_to_ideal(&s2, &c, &sel, &[p], pilot).unwrap();
        let rec_p = reconstruct(&s2, &c, &sel, MdsiMode::AsPrinted).unwrap();
        let rec_o = reconstruct(&s2, &c, &sel, MdsiMode::OffsetCorrected).unwrap();
        let d_p = mean_distance_to_ideal(&rec_p, &c, &sel, &[p], pilot).unwrap();
        let d_o = mean_distance_to_ideal(&rec_o, &c, &sel, &[p], pilot).unwrap();
        assert!(d_raw > 0.0 && d_raw < 1.0);
        assert!(
            d_o < d_p,
            "offset stencil ({d_o}) should beat the as-printed stencil ({d_p})"
        );
        // the offset stencil is a small perturbation of the raw tensor
        assert!((d_o - d_raw).abs() < 0.2, "d_o {d_o} vs d_raw {d_raw}");
    }
}
