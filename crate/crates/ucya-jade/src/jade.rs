//! Joint delay / elevation / azimuth estimation with pair matching.
//!
//! The reconstructed stage-2 snapshots are stacked subcarrier-major into one
//! long vector whose covariance carries a multiple-invariance structure:
//! adjacent subcarrier blocks are related by the diagonal delay rotation, and
//! adjacent selected beams obey a linear Dirichlet recurrence in
//! `tan(g(theta)/2)`. ESPRIT reads delays and elevations off the eigenvalues
//! of the two invariance solutions; azimuths come from a 1D MUSIC search on
//! the phase-mode block; a minimum-norm perturbation aligns the two
//! eigensystems so every triple belongs to one physical path.

use ndarray::prelude::*;
use num_complex::Complex64 as C64;

use crate::array_model::{phase_mode_steering, ArrayConfig};
use crate::beamformer::BeamSelection;
use crate::channel_sim::{SnapshotTensor, SpatialDim};
use crate::linalg::{cond, eig_sorted, eigh_desc, kron, lstsq_minnorm, tls_solve};
use crate::{Error, Result, SPEED_OF_LIGHT};
use ndarray_linalg::{Solve, SVD};

/// Signal/noise split of the stacked-observation covariance.
#[derive(Debug, Clone)]
pub struct SubspaceDecomposition {
    /// Top `n_paths` eigenvectors, `N_DS2 * M x N_p`.
    pub signal_basis: Array2<C64>,
    /// Remaining eigenvectors; only materialized when the decomposition came
    /// from an explicit covariance matrix (the snapshot-SVD path leaves it
    /// empty, nothing downstream needs it).
    pub noise_basis: Option<Array2<C64>>,
    /// Covariance eigenvalues, nonincreasing, full length.
    pub eigenvalues: Array1<f64>,
    /// Mean of the trailing eigenvalues.
    pub noise_power_estimate: f64,
    pub n_paths: usize,
}

/// Matched per-path estimates plus the matrices behind them.
#[derive(Debug, Clone)]
pub struct JadeEstimates {
    /// One record per path: (delay seconds, elevation radians, azimuth radians).
    pub paths: Vec<PathEstimate>,
    pub psi_delay: Array2<C64>,
    pub psi_elevation: Array2<C64>,
    /// Minimum-norm perturbation added to `psi_delay` by pair matching.
    pub perturbation: Array2<C64>,
    /// `pairing[l]` is the index into the standalone delay estimate list that
    /// pair matching associated with elevation slot `l`.
    pub pairing: Vec<usize>,
    /// Pair matching fell back to greedy eigenvector correlation.
    pub pairing_fallback: bool,
    pub noise_power_estimate: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct PathEstimate {
    pub delay: f64,
    pub elevation: f64,
    pub azimuth: f64,
}

/// Stack the tensor subcarrier-major (`index = m * N_DS2 + n`) and form the
/// sample covariance `R = (1/T_s) sum_t y_t y_t^H`.
pub fn vectorize_and_covariance(tensor: &SnapshotTensor) -> Result<Array2<C64>> {
    let y = stacked_snapshots(tensor)?;
    let ts = tensor.n_snapshots();
    if ts == 0 {
        return Err(Error::Degenerate("no snapshots".into()));
    }
    let yh = y.t().mapv(|z| z.conj());
    Ok(y.dot(&yh).mapv(|z| z / ts as f64))
}

/// Snapshot matrix with rows stacked subcarrier-major, `N_DS2 * M x T_s`.
pub fn stacked_snapshots(tensor: &SnapshotTensor) -> Result<Array2<C64>> {
    if tensor.label != SpatialDim::PostStage2 {
        return Err(Error::Dimension(
            "jade expects a (reconstructed) stage-2 tensor".into(),
        ));
    }
    let n = tensor.spatial_dim();
    let m_count = tensor.n_subcarriers();
    let ts = tensor.n_snapshots();
    let mut y = Array2::zeros((n * m_count, ts));
    for m in 0..m_count {
        for i in 0..n {
            for t in 0..ts {
                y[[m * n + i, t]] = tensor.data[[i, m, t]];
            }
        }
    }
    Ok(y)
}

/// Eigendecompose an explicit covariance into signal and noise subspaces.
pub fn subspace(r: &Array2<C64>, n_paths: usize) -> Result<SubspaceDecomposition> {
    let n = r.nrows();
    if r.ncols() != n {
        return Err(Error::Dimension("covariance must be square".into()));
    }
    if n_paths >= n {
        return Err(Error::Config(format!(
            "n_paths = {n_paths} leaves no noise subspace in dimension {n}"
        )));
    }
    let herm_err = {
        let rh = r.t().mapv(|z| z.conj());
        (&rh - r).iter().map(|z| z.norm()).fold(0.0, f64::max)
    };
    let scale = r.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    if herm_err / scale > 1e-8 {
        return Err(Error::Domain(format!(
            "covariance is not Hermitian (relative asymmetry {:.2e})",
            herm_err / scale
        )));
    }
    let (vals, vecs) = eigh_desc(r)?;
    let signal_basis = vecs.slice(s![.., ..n_paths]).to_owned();
    let noise_basis = vecs.slice(s![.., n_paths..]).to_owned();
    let noise_power_estimate =
        vals.slice(s![n_paths..]).sum() / (n - n_paths) as f64;
    Ok(SubspaceDecomposition {
        signal_basis,
        noise_basis: Some(noise_basis),
        eigenvalues: vals,
        noise_power_estimate,
        n_paths,
    })
}

/// Signal subspace straight from the snapshot matrix via a thin SVD; avoids
/// materializing the `N_DS2 M x N_DS2 M` covariance. Eigenvalues of `R` are
/// `s_i^2 / T_s`, zero-padded past the snapshot rank.
pub fn subspace_from_snapshots(
    tensor: &SnapshotTensor,
    n_paths: usize,
) -> Result<SubspaceDecomposition> {
    let y = stacked_snapshots(tensor)?;
    let (rows, ts) = y.dim();
    if n_paths >= rows {
        return Err(Error::Config(format!(
            "n_paths = {n_paths} leaves no noise subspace in dimension {rows}"
        )));
    }
    if n_paths > ts {
        return Err(Error::Degenerate(format!(
            "{ts} snapshots cannot support {n_paths} paths"
        )));
    }
    let (u, sv, _) = y.svd(true, false)?;
    let u = u.ok_or_else(|| Error::Linalg("SVD did not return U".into()))?;
    let signal_basis = u.slice(s![.., ..n_paths]).to_owned();
    let mut eigenvalues = Array1::zeros(rows);
    for (i, &s) in sv.iter().enumerate() {
        eigenvalues[i] = s * s / ts as f64;
    }
    let total: f64 = y.iter().map(|z| z.norm_sqr()).sum::<f64>() / ts as f64;
    let signal: f64 = eigenvalues.slice(s![..n_paths]).sum();
    let noise_power_estimate = ((total - signal) / (rows - n_paths) as f64).max(0.0);
    Ok(SubspaceDecomposition {
        signal_basis,
        noise_basis: None,
        eigenvalues,
        noise_power_estimate,
        n_paths,
    })
}

/// Sum the signal basis across the spatial block of each subcarrier
/// (the row-of-ones delay selection), `M x N_p`.
fn delay_compressed(decomp: &SubspaceDecomposition, n_ds: usize, m_count: usize) -> Array2<C64> {
    let np = decomp.n_paths;
    let mut ed = Array2::zeros((m_count, np));
    for m in 0..m_count {
        for l in 0..np {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..n_ds {
                acc += decomp.signal_basis[[m * n_ds + i, l]];
            }
            ed[[m, l]] = acc;
        }
    }
    ed
}

/// Delay ESPRIT across subcarriers.
///
/// Solves the stacked invariance `E_D[0..M-1] Psi_D = E_D[1..M]` by TLS, then
/// averages the `M - 1` per-step eigenvalue estimates in the eigenbasis of
/// `Psi_D` (which keeps the per-step estimates consistently ordered) before
/// reading delays off the principal phase.
pub fn esprit_delay(
    decomp: &SubspaceDecomposition,
    cfg: &ArrayConfig,
    n_ds: usize,
) -> Result<(Vec<f64>, Array2<C64>)> {
    let m_count = cfg.n_subcarriers;
    if m_count < 2 {
        return Err(Error::Config("delay ESPRIT needs at least 2 subcarriers".into()));
    }
    let np = decomp.n_paths;
    let ed = delay_compressed(decomp, n_ds, m_count);
    let e1 = ed.slice(s![..m_count - 1, ..]).to_owned();
    let e2 = ed.slice(s![1.., ..]).to_owned();
    // rank check on the compressed subspace
    let (_, sv, _) = e1.svd(false, false)?;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smax > 0.0) || smin / smax < 1e-9 {
        return Err(Error::Degenerate(format!(
            "delay submatrix is rank deficient (sigma ratio {:.2e}); a path's \
             compressed steering gain vanished",
            smin / smax.max(1e-300)
        )));
    }
    let psi = tls_solve(&e1, &e2)?;
    let (lams, tvecs) = eig_sorted(&psi)?;
    // per-step eigenvalue estimates z[m+1]/z[m] in the shared eigenbasis
    let z = ed.dot(&tvecs);
    let delta_f = cfg.delta_f;
    let mut delays = Vec::with_capacity(np);
    for l in 0..np {
        let lam = lams[l];
        let base = lam / lam.norm().max(1e-300);
        let mut phase_sum = 0.0;
        let mut count = 0usize;
        let col_scale = (0..m_count).map(|m| z[[m, l]].norm()).fold(0.0, f64::max);
        for m in 0..m_count - 1 {
            if z[[m, l]].norm() < 1e-9 * col_scale {
                continue;
            }
            let ratio = z[[m + 1, l]] / z[[m, l]];
            // deviation of this step's rotation from the global eigenvalue
            phase_sum += (ratio * base.conj()).arg();
            count += 1;
        }
        let phase = if count > 0 {
            base.arg() + phase_sum / count as f64
        } else {
            base.arg()
        };
        let tau = (-phase) / (2.0 * std::f64::consts::PI * delta_f);
        delays.push(tau.rem_euclid(1.0 / delta_f));
    }
    Ok((delays, psi))
}

/// The two sparse recurrence matrices of the Dirichlet beam relation: row
/// `u~` couples selected beams `eta(u~)` and `eta(u~+1)` with signed
/// `cos(pi eta / N_V)` (in `F0`) and `sin(pi eta / N_V)` (in `F1`) weights,
/// so that `tan(g/2) F0 a~_V,0 = F1 a~_V,0`.
pub fn build_recurrence_matrices(
    selection: &BeamSelection,
    n_vertical: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let nb = selection.n_beams();
    if nb < 2 {
        return Err(Error::Degenerate(
            "elevation recurrence needs at least 2 selected beams".into(),
        ));
    }
    let nv = n_vertical as f64;
    let mut f0 = Array2::zeros((nb - 1, nb));
    let mut f1 = Array2::zeros((nb - 1, nb));
    for u in 0..nb - 1 {
        let ea = selection.indices[u] as f64;
        let eb = selection.indices[u + 1] as f64;
        let sa = if selection.indices[u] % 2 == 0 { 1.0 } else { -1.0 };
        let sb = if selection.indices[u + 1] % 2 == 0 { 1.0 } else { -1.0 };
        f0[[u, u]] = sa * (std::f64::consts::PI * ea / nv).cos();
        f0[[u, u + 1]] = -sb * (std::f64::consts::PI * eb / nv).cos();
        f1[[u, u]] = sa * (std::f64::consts::PI * ea / nv).sin();
        f1[[u, u + 1]] = -sb * (std::f64::consts::PI * eb / nv).sin();
    }
    Ok((f0, f1))
}

/// Elevation ESPRIT over the selected-beam axis.
///
/// Extracts the beam-profile submatrix `E_V` (sum over subcarriers, then over
/// phase modes within each beam), solves `F0 E_V Psi_V = F1 E_V` by TLS and
/// maps eigenvalues through `theta = arccos(c atan(Re lambda) / (pi f0 h))`.
pub fn esprit_elevation(
    decomp: &SubspaceDecomposition,
    selection: &BeamSelection,
    cfg: &ArrayConfig,
) -> Result<(Vec<f64>, Array2<C64>)> {
    let nb = selection.n_beams();
    let n_modes = cfg.n_phase_modes();
    let n_ds = n_modes * nb;
    let m_count = cfg.n_subcarriers;
    let np = decomp.n_paths;
    // E_A = sum over subcarrier blocks; E_V = per-beam mode sums
    let mut ev = Array2::zeros((nb, np));
    for l in 0..np {
        for u in 0..nb {
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..m_count {
                for q in 0..n_modes {
                    acc += decomp.signal_basis[[m * n_ds + u * n_modes + q, l]];
                }
            }
            ev[[u, l]] = acc;
        }
    }
    let (f0, f1) = build_recurrence_matrices(selection, cfg.n_vertical)?;
    let f0c = f0.mapv(|x| C64::new(x, 0.0));
    let f1c = f1.mapv(|x| C64::new(x, 0.0));
    let a = f0c.dot(&ev);
    let b = f1c.dot(&ev);
    let (_, sv, _) = a.svd(false, false)?;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smax > 0.0) || smin / smax < 1e-9 {
        return Err(Error::Degenerate(format!(
            "elevation submatrix is rank deficient (sigma ratio {:.2e})",
            smin / smax.max(1e-300)
        )));
    }
    let psi = tls_solve(&a, &b)?;
    let (lams, _) = eig_sorted(&psi)?;
    let scale = SPEED_OF_LIGHT / (std::f64::consts::PI * cfg.f0 * cfg.ring_spacing);
    let mut elevations = Vec::with_capacity(np);
    for l in 0..np {
        let arg = lams[l].re.atan() * scale;
        if !(-1.0..=1.0).contains(&arg) {
            return Err(Error::OutOfRange(format!(
                "elevation eigenvalue {} maps to cos(theta) = {arg}",
                lams[l]
            )));
        }
        elevations.push(arg.acos());
    }
    Ok((elevations, psi))
}

/// Outcome of eigenvalue pair matching.
#[derive(Debug, Clone)]
pub struct PairMatch {
    /// Minimum-norm perturbation `P_D`.
    pub perturbation: Array2<C64>,
    /// `pairing[l]` = index of the standalone delay eigenvalue matched to
    /// elevation slot `l`.
    pub pairing: Vec<usize>,
    /// Delay eigenvalues read in the elevation eigenbasis.
    pub paired_delay_eigs: Array1<C64>,
    /// Greedy eigenvector-correlation fallback was used.
    pub fallback: bool,
}

/// Align the delay eigensystem with the elevation eigensystem.
///
/// Solves the linearized commutation condition
/// `vec(P_D) = [Psi_V^T (+) (-Psi_V)]^+ vec(Psi_V Psi_D - Psi_D Psi_V)`
/// (Kronecker sum, minimum-Frobenius-norm solution, `P_V` fixed at zero),
/// then reads the paired delay eigenvalues from
/// `diag(T~^{-1} (Psi_D + P_D) T~)` where `T~` diagonalizes `Psi_V`.
pub fn pair_match(psi_delay: &Array2<C64>, psi_elev: &Array2<C64>) -> Result<PairMatch> {
    let np = psi_delay.nrows();
    if psi_delay.dim() != (np, np) || psi_elev.dim() != (np, np) {
        return Err(Error::Dimension("pair_match expects square N_p matrices".into()));
    }
    if np > 16 {
        return Err(Error::Config("pair matching supports up to 16 paths".into()));
    }
    let eye: Array2<C64> = Array2::eye(np);
    let k = kron(&psi_elev.t().to_owned(), &eye) - kron(&eye, psi_elev);
    let comm = psi_elev.dot(psi_delay) - psi_delay.dot(psi_elev);
    // column-major vec to match vec(A X B) = (B^T (x) A) vec(X)
    let mut rhs = Array2::zeros((np * np, 1));
    for j in 0..np {
        for i in 0..np {
            rhs[[j * np + i, 0]] = comm[[i, j]];
        }
    }
    let pvec = lstsq_minnorm(&k, &rhs)?;
    let mut perturbation = Array2::zeros((np, np));
    for j in 0..np {
        for i in 0..np {
            perturbation[[i, j]] = pvec[[j * np + i, 0]];
        }
    }
    let corrected = psi_delay + &perturbation;
    let (_, tvecs) = eig_sorted(psi_elev)?;
    let (delay_eigs, delay_vecs) = eig_sorted(psi_delay)?;

    let defective = cond(&tvecs).map(|c| c > 1e10).unwrap_or(true);
    if defective {
        // greedy eigenvector correlation between the two standalone systems
        let corr = tvecs.t().mapv(|z| z.conj()).dot(&delay_vecs);
        let mut used = vec![false; np];
        let mut pairing = vec![0usize; np];
        let mut paired = Array1::zeros(np);
        for l in 0..np {
            let mut best = (0usize, -1.0);
            for j in 0..np {
                if used[j] {
                    continue;
                }
                let c = corr[[l, j]].norm();
                if c > best.1 {
                    best = (j, c);
                }
            }
            used[best.0] = true;
            pairing[l] = best.0;
            paired[l] = delay_eigs[best.0];
        }
        return Ok(PairMatch {
            perturbation,
            pairing,
            paired_delay_eigs: paired,
            fallback: true,
        });
    }

    // D = T~^{-1} (Psi_D + P_D) T~, column by column
    let prod = corrected.dot(&tvecs);
    let mut paired = Array1::zeros(np);
    for l in 0..np {
        let col = prod.column(l).to_owned();
        let sol = tvecs.solve(&col).map_err(Error::from)?;
        paired[l] = sol[l];
    }
    // associate each paired eigenvalue with the closest standalone delay
    // eigenvalue (exact assignment, so the delay multiset is preserved)
    let mut cost = Array2::zeros((np, np));
    for l in 0..np {
        for j in 0..np {
            cost[[l, j]] = (paired[l] - delay_eigs[j]).norm();
        }
    }
    let pairing = crate::linalg::min_cost_assignment(&cost)?;
    Ok(PairMatch {
        perturbation,
        pairing,
        paired_delay_eigs: paired,
        fallback: false,
    })
}

/// Which selected-beam block feeds the azimuth MUSIC search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MusicBlock {
    /// The strongest selected beam's phase-mode block.
    #[default]
    Strongest,
    /// Average the pseudospectrum over every selected beam's block.
    Averaged,
}

impl std::str::FromStr for MusicBlock {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strongest" => Ok(MusicBlock::Strongest),
            "averaged" => Ok(MusicBlock::Averaged),
            other => Err(Error::Config(format!("unknown music block '{other}'"))),
        }
    }
}

/// MUSIC azimuth search on the phase-mode block(s).
///
/// Builds the horizontal observation by summing the reconstructed tensor
/// over subcarriers and slicing the chosen beam block, eigendecomposes its
/// covariance, and for each elevation maximizes
/// `1 / ||E_n,H^H a~_H,0(phi, theta)||^2` on a wrap-around grid refined by
/// golden-section search.
pub fn music_azimuth(
    tensor: &SnapshotTensor,
    selection: &BeamSelection,
    cfg: &ArrayConfig,
    elevations: &[f64],
    grid_size: usize,
    block: MusicBlock,
) -> Result<Vec<f64>> {
    if grid_size < 8 {
        return Err(Error::Config("music grid must have at least 8 points".into()));
    }
    let n_modes = cfg.n_phase_modes();
    let np = elevations.len();
    if n_modes <= np {
        return Err(Error::Config(format!(
            "noise subspace empty: (2P+1) = {n_modes} <= N_p = {np}"
        )));
    }
    let nb = selection.n_beams();
    let ts = tensor.n_snapshots();
    let m_count = tensor.n_subcarriers();
    // subcarrier sum per snapshot (the angle selection), then per-beam block
    let blocks: Vec<usize> = match block {
        MusicBlock::Strongest => vec![selection.strongest_rank],
        MusicBlock::Averaged => (0..nb).collect(),
    };
    let mut noise_bases: Vec<Array2<C64>> = Vec::with_capacity(blocks.len());
    for &u in &blocks {
        let mut h = Array2::zeros((n_modes, ts));
        for t in 0..ts {
            for q in 0..n_modes {
                let mut acc = C64::new(0.0, 0.0);
                for m in 0..m_count {
                    acc += tensor.data[[u * n_modes + q, m, t]];
                }
                h[[q, t]] = acc;
            }
        }
        let hh = h.t().mapv(|z| z.conj());
        let r = h.dot(&hh).mapv(|z| z / ts as f64);
        let (_, vecs) = eigh_desc(&r)?;
        noise_bases.push(vecs.slice(s![.., np..]).to_owned());
    }

    let spectrum = |phi: f64, theta: f64| -> Result<f64> {
        let a = phase_mode_steering(cfg, 0, phi, theta)?.entries;
        let mut acc = 0.0;
        for en in &noise_bases {
            let proj = en.t().mapv(|z| z.conj()).dot(&a);
            let p: f64 = proj.iter().map(|z| z.norm_sqr()).sum();
            acc += 1.0 / p.max(1e-300);
        }
        Ok(acc / noise_bases.len() as f64)
    };

    let two_pi = 2.0 * std::f64::consts::PI;
    let mut azimuths = Vec::with_capacity(np);
    for &theta in elevations {
        let mut best = (0usize, f64::NEG_INFINITY);
        for i in 0..grid_size {
            let phi = two_pi * i as f64 / grid_size as f64;
            let v = spectrum(phi, theta)?;
            if v > best.1 {
                best = (i, v);
            }
        }
        let step = two_pi / grid_size as f64;
        let center = two_pi * best.0 as f64 / grid_size as f64;
        // golden-section on the projection power (minimize) in the
        // bracketing cell; phi is evaluated modulo 2 pi
        let (mut lo, mut hi) = (center - step, center + step);
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        let objective = |phi: f64| -> Result<f64> { Ok(1.0 / spectrum(phi, theta)?) };
        let mut x1 = hi - gr * (hi - lo);
        let mut x2 = lo + gr * (hi - lo);
        let mut f1 = objective(x1)?;
        let mut f2 = objective(x2)?;
        while hi - lo > 1e-7 {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - gr * (hi - lo);
                f1 = objective(x1)?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + gr * (hi - lo);
                f2 = objective(x2)?;
            }
        }
        azimuths.push((0.5 * (lo + hi)).rem_euclid(two_pi));
    }
    Ok(azimuths)
}

/// Options shared by [`estimate_all`].
#[derive(Debug, Clone, Copy)]
pub struct JadeOptions {
    pub music_grid: usize,
    pub music_block: MusicBlock,
}

impl Default for JadeOptions {
    fn default() -> Self {
        Self {
            music_grid: 100,
            music_block: MusicBlock::Strongest,
        }
    }
}

/// Full estimation pipeline on a reconstructed stage-2 tensor:
/// covariance -> subspace -> delay ESPRIT -> elevation ESPRIT -> pair
/// matching -> azimuth MUSIC, returning matched triples.
pub fn estimate_all(
    tensor: &SnapshotTensor,
    selection: &BeamSelection,
    cfg: &ArrayConfig,
    n_paths: usize,
    opts: &JadeOptions,
) -> Result<JadeEstimates> {
    let n_ds = cfg.n_phase_modes() * selection.n_beams();
    let decomp = subspace_from_snapshots(tensor, n_paths).map_err(|e| e.in_stage("subspace"))?;
    let (delays, psi_delay) =
        esprit_delay(&decomp, cfg, n_ds).map_err(|e| e.in_stage("esprit_delay"))?;
    let (elevations, psi_elev) =
        esprit_elevation(&decomp, selection, cfg).map_err(|e| e.in_stage("esprit_elevation"))?;
    let matched = pair_match(&psi_delay, &psi_elev).map_err(|e| e.in_stage("pair_match"))?;
    let azimuths = music_azimuth(
        tensor,
        selection,
        cfg,
        &elevations,
        opts.music_grid,
        opts.music_block,
    )
    .map_err(|e| e.in_stage("music_azimuth"))?;
    let paths = (0..n_paths)
        .map(|l| PathEstimate {
            delay: delays[matched.pairing[l]],
            elevation: elevations[l],
            azimuth: azimuths[l],
        })
        .collect();
    Ok(JadeEstimates {
        paths,
        psi_delay,
        psi_elevation: psi_elev,
        perturbation: matched.perturbation,
        pairing: matched.pairing,
        pairing_fallback: matched.fallback,
        noise_power_estimate: decomp.noise_power_estimate,
    })
}
