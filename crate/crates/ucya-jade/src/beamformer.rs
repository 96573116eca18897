//! Two-stage hybrid beamformer.
//!
//! Stage 1 transforms each antenna column into the vertical DFT beamspace
//! (one output per ring direction) and greedily selects the beams that carry
//! the requested power fraction on every subcarrier. Stage 2 applies the
//! Q-DFT across each ring, keeping phase-mode orders `|p| <= P`, so the
//! digital dimension drops from `N_R` to `(2P+1) N_B` while both transformed
//! responses keep the recurrence structure the subspace estimators need.

use ndarray::prelude::*;
use num_complex::Complex64 as C64;

use crate::array_model::{beamspace_matrix, dirichlet_kernel, ArrayConfig};
use crate::channel_sim::{SnapshotTensor, SpatialDim};
use crate::linalg::kron;
use crate::{Error, Result, SPEED_OF_LIGHT};

/// One factored hybrid combining stage, `W = G_PS G_AC W_BB`.
#[derive(Debug, Clone)]
pub struct BeamformerStage {
    /// Unit-modulus phase-shifter matrix `G_PS`.
    pub phase_shifters: Array2<C64>,
    /// Binary array-combiner matrix `G_AC` (entries 0/1).
    pub array_combiners: Array2<f64>,
    /// Digital combiner `W_BB`.
    pub baseband: Array2<C64>,
    /// Composite combiner `W = G_PS G_AC W_BB`.
    pub composite: Array2<C64>,
    /// Label the stage's output acquires.
    pub output_label: SpatialDim,
}

impl BeamformerStage {
    /// Number of RF chains the stage requires (its digital output width).
    pub fn rf_chain_count(&self) -> usize {
        self.composite.ncols()
    }
}

/// Result of the vertical beam selection.
#[derive(Debug, Clone)]
pub struct BeamSelection {
    /// Selected beam indices, 1-based, sorted ascending.
    pub indices: Vec<usize>,
    /// Power threshold used per subcarrier.
    pub threshold: f64,
    /// Channel dispersion factor used for the padding floor.
    pub dispersion: f64,
    /// Rank (position in `indices`) of the beam with the largest
    /// band-aggregated power; MUSIC reads this block by default.
    pub strongest_rank: usize,
}

impl BeamSelection {
    pub fn n_beams(&self) -> usize {
        self.indices.len()
    }
}

/// Build stage 1: `W_BB = I/sqrt(N_V)`, `G_PS = U_d (x) I_{N_H}`,
/// `G_AC = I_{N_V} (x) 1_{N_H}` (each ring summed into one combiner).
pub fn build_stage1(cfg: &ArrayConfig) -> BeamformerStage {
    let nv = cfg.n_vertical;
    let nh = cfg.n_horizontal;
    let ud = beamspace_matrix(nv);
    let eye_h: Array2<C64> = Array2::eye(nh);
    let phase_shifters = kron(&ud, &eye_h);
    let mut array_combiners = Array2::zeros((nv * nh, nv));
    for v in 0..nv {
        for h in 0..nh {
            array_combiners[[v * nh + h, v]] = 1.0;
        }
    }
    let scale = 1.0 / (nv as f64).sqrt();
    let baseband = Array2::eye(nv).mapv(|z: C64| z * scale);
    // W = (U_d (x) 1_{N_H}) / sqrt(N_V), assembled directly
    let mut composite = Array2::zeros((nv * nh, nv));
    for v in 0..nv {
        for h in 0..nh {
            for b in 0..nv {
                composite[[v * nh + h, b]] = ud[[v, b]] * scale;
            }
        }
    }
    BeamformerStage {
        phase_shifters,
        array_combiners,
        baseband,
        composite,
        output_label: SpatialDim::PostStage1,
    }
}

/// Apply a stage: `y(:, m, t) = W^H r(:, m, t)`, advancing the label.
pub fn apply_stage(stage: &BeamformerStage, input: &SnapshotTensor) -> Result<SnapshotTensor> {
    let (rows, cols) = stage.composite.dim();
    if input.spatial_dim() != rows {
        return Err(Error::Dimension(format!(
            "stage expects {rows} spatial channels, tensor has {}",
            input.spatial_dim()
        )));
    }
    let m_count = input.n_subcarriers();
    let ts = input.n_snapshots();
    let wh = stage.composite.t().mapv(|z| z.conj());
    // flatten (m, t) into one GEMM
    let flat = input
        .data
        .view()
        .into_shape_with_order((rows, m_count * ts))
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let out = wh.dot(&flat);
    let data = out
        .into_shape_with_order((cols, m_count, ts))
        .map_err(|e| Error::Dimension(e.to_string()))?;
    SnapshotTensor::new(data, stage.output_label)
}

/// Snapshot-averaged beam powers, `N_V x M`.
pub fn beam_powers(stage1_output: &SnapshotTensor) -> Array2<f64> {
    let nv = stage1_output.spatial_dim();
    let m_count = stage1_output.n_subcarriers();
    let ts = stage1_output.n_snapshots() as f64;
    let mut pw = Array2::zeros((nv, m_count));
    for i in 0..nv {
        for m in 0..m_count {
            let mut acc = 0.0;
            for t in 0..stage1_output.n_snapshots() {
                acc += stage1_output.data[[i, m, t]].norm_sqr();
            }
            pw[[i, m]] = acc / ts;
        }
    }
    pw
}

/// Channel dispersion factor `gamma = mean_l N_V alpha |chi_l|` with
/// `alpha = W/f_c`, `chi_l = f_c h cos(theta_l) / c`, `f_c = f0 + W/2`.
/// `elevations = None` evaluates the worst case `|cos theta| = 1`.
pub fn dispersion_factor(cfg: &ArrayConfig, elevations: Option<&[f64]>) -> f64 {
    let w_bw = cfg.bandwidth();
    let fc = cfg.f0 + w_bw / 2.0;
    let alpha = w_bw / fc;
    let chi_scale = fc * cfg.ring_spacing / SPEED_OF_LIGHT;
    let nv = cfg.n_vertical as f64;
    match elevations {
        None => nv * alpha * chi_scale,
        Some(thetas) => {
            let mean: f64 = thetas
                .iter()
                .map(|&t| (chi_scale * t.cos()).abs())
                .sum::<f64>()
                / thetas.len() as f64;
            nv * alpha * mean
        }
    }
}

/// Greedy per-subcarrier beam selection with a dispersion-driven floor.
///
/// Per subcarrier, beams are added strongest-first (ties to the lower index)
/// until they carry at least `eta` of the subcarrier's power; the overall set
/// is the union over subcarriers. If the union is smaller than
/// `ceil(gamma * n_paths_hint)` it is padded with the next-strongest beams by
/// band-aggregated power.
pub fn select_beams(
    stage1_output: &SnapshotTensor,
    eta: f64,
    gamma: f64,
    n_paths_hint: usize,
) -> Result<BeamSelection> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain(format!("eta = {eta} outside (0, 1]")));
    }
    if stage1_output.label != SpatialDim::PostStage1 {
        return Err(Error::Dimension(
            "beam selection expects a stage-1 output tensor".into(),
        ));
    }
    let pw = beam_powers(stage1_output);
    let nv = pw.nrows();
    let m_count = pw.ncols();
    let mut selected = vec![false; nv];
    for m in 0..m_count {
        let total: f64 = pw.column(m).sum();
        let mut order: Vec<usize> = (0..nv).collect();
        order.sort_by(|&a, &b| {
            pw[[b, m]]
                .partial_cmp(&pw[[a, m]])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut acc = 0.0;
        for &i in &order {
            if acc >= eta * total {
                break;
            }
            acc += pw[[i, m]];
            selected[i] = true;
        }
    }
    // band-aggregate ranking for padding and for the strongest-beam block
    let band: Vec<f64> = (0..nv).map(|i| pw.row(i).sum()).collect();
    let floor = (gamma * n_paths_hint as f64).ceil().max(0.0) as usize;
    if floor > 0 {
        let mut order: Vec<usize> = (0..nv).collect();
        order.sort_by(|&a, &b| band[b].partial_cmp(&band[a]).unwrap().then(a.cmp(&b)));
        let mut count = selected.iter().filter(|&&s| s).count();
        for &i in &order {
            if count >= floor.min(nv) {
                break;
            }
            if !selected[i] {
                selected[i] = true;
                count += 1;
            }
        }
    }
    let indices: Vec<usize> = (0..nv).filter(|&i| selected[i]).map(|i| i + 1).collect();
    if indices.is_empty() {
        return Err(Error::Degenerate("no beams selected".into()));
    }
    let strongest_rank = indices
        .iter()
        .enumerate()
        .max_by(|(_, &a), (_, &b)| band[a - 1].partial_cmp(&band[b - 1]).unwrap())
        .map(|(rank, _)| rank)
        .unwrap();
    Ok(BeamSelection {
        indices,
        threshold: eta,
        dispersion: gamma,
        strongest_rank,
    })
}

/// Build stage 2: `G_PS = U_d (x) U_sH`, `G_AC = J_B (x) I_{2P+1}`,
/// `W_BB = sqrt(N_V/N_H) I`; the composite factorizes as
/// `sqrt(N_V/N_H) (U_sV (x) U_sH)` with `U_sV = U_d J_B`.
pub fn build_stage2(cfg: &ArrayConfig, selection: &BeamSelection) -> BeamformerStage {
    let nv = cfg.n_vertical;
    let nh = cfg.n_horizontal;
    let p = cfg.highest_order() as i64;
    let n_modes = cfg.n_phase_modes();
    let nb = selection.n_beams();

    let ud = beamspace_matrix(nv);
    // [U_sH]_{n_H, p+P+1} = exp(j 2 pi (n_H - 1) p / N_H)
    let mut ush = Array2::zeros((nh, n_modes));
    for h in 0..nh {
        for q in -p..=p {
            let phase = 2.0 * std::f64::consts::PI * h as f64 * q as f64 / nh as f64;
            ush[[h, (q + p) as usize]] = C64::from_polar(1.0, phase);
        }
    }
    let phase_shifters = kron(&ud, &ush);

    let mut jb = Array2::zeros((nv, nb));
    for (u, &beam) in selection.indices.iter().enumerate() {
        jb[[beam - 1, u]] = 1.0;
    }
    let eye_modes: Array2<f64> = Array2::eye(n_modes);
    let array_combiners = kron_f64(&jb, &eye_modes);

    let scale = (nv as f64 / nh as f64).sqrt();
    let baseband = Array2::eye(n_modes * nb).mapv(|z: C64| z * scale);

    // composite via the Kronecker factorization U_sV (x) U_sH
    let usv = ud.select(Axis(1), &selection.indices.iter().map(|&b| b - 1).collect::<Vec<_>>());
    let composite = kron(&usv, &ush).mapv(|z| z * scale);

    BeamformerStage {
        phase_shifters,
        array_combiners,
        baseband,
        composite,
        output_label: SpatialDim::PostStage2,
    }
}

fn kron_f64(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            if a[[i, j]] == 0.0 {
                continue;
            }
            for p in 0..rb {
                for q in 0..cb {
                    out[[i * rb + p, j * cb + q]] = a[[i, j]] * b[[p, q]];
                }
            }
        }
    }
    out
}

/// Normalized power of vertical beam `i` at absolute frequency `f` for a
/// unit-amplitude plane wave at elevation `theta` (the beam-squint profile of
/// the vertical beamspace).
pub fn beam_power_profile(n_vertical: usize, ring_spacing: f64, theta: f64, beam: usize, f: f64) -> f64 {
    let psi = 2.0 * std::f64::consts::PI * f * ring_spacing * theta.cos() / SPEED_OF_LIGHT
        - 2.0 * std::f64::consts::PI * beam as f64 / n_vertical as f64;
    let d = dirichlet_kernel(psi, n_vertical);
    d * d / (n_vertical as f64 * n_vertical as f64)
}
