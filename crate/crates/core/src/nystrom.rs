//! Anchor-based Nyström approximation of the diffusion kernel `K_{2t}`.
//!
//! `K̂ = C (K_AA + λI)⁺ Cᵀ`, where `K_AA` is the exact anchor block. The cross
//! block `C` is either read from the exact kernel or synthesized from hop
//! distances: by polarization, `k(v, a) = (k(v,v) + k(a,a) - d(v,a)²) / 2`
//! with `d(v, a)` replaced by the fitted link `ψ(SPD(v, a))`.

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{node_anchor_distances, Graph, Hop};
use crate::linkage::{collect_pairs_with, fit_isotonic, MonotoneLink, PairScope};
use crate::spectral::{heat_kernel, EigenSystem};
use crate::trilateration::{anchor_difference_matrix, median};

/// Singular-value cutoff (relative to the largest) of the block pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-12;

/// Default Tikhonov weight relative to the mean anchor-block diagonal.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossMode {
    ExactColumns,
    DistanceDriven,
}

impl CrossMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::ExactColumns => "exact_columns",
            Self::DistanceDriven => "distance_driven",
        }
    }
}

impl std::str::FromStr for CrossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_columns" | "exact" => Ok(Self::ExactColumns),
            "distance_driven" | "distance" => Ok(Self::DistanceDriven),
            other => Err(Error::InvalidParameter(format!("unknown cross mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NystromConfig {
    pub k: usize,
    pub t: f64,
    pub m: usize,
    /// Ridge `λ`; `None` selects `1e-6 · trace(K_AA) / k`.
    pub lambda_reg: Option<f64>,
    pub cross_mode: CrossMode,
}

impl Default for NystromConfig {
    fn default() -> Self {
        Self { k: 32, t: 1.0, m: 8, lambda_reg: None, cross_mode: CrossMode::DistanceDriven }
    }
}

/// The kernel Nyström approximates: `K_{2t}`, whose induced distance is `d_t`.
pub fn reference_kernel(eig: &EigenSystem, t: f64) -> Result<DMatrix<f64>> {
    heat_kernel(eig, 2.0 * t)
}

/// Squared-distance matrix induced by a kernel, `k(u,u) + k(v,v) - 2k(u,v)`,
/// clamped at zero.
pub fn kernel_squared_distances(kernel: &DMatrix<f64>) -> DMatrix<f64> {
    let n = kernel.nrows();
    DMatrix::from_fn(
        n,
        n,
        |u, v| {
            if u == v {
                0.0
            } else {
                (kernel[(u, u)] + kernel[(v, v)] - 2.0 * kernel[(u, v)]).max(0.0)
            }
        },
    )
}

/// Upper-triangle pairwise distances induced by a kernel, row by row.
pub fn kernel_pair_distances(kernel: &DMatrix<f64>) -> Vec<f64> {
    let sq = kernel_squared_distances(kernel);
    let n = sq.nrows();
    (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).map(|(u, v)| sq[(u, v)].sqrt()).collect()
}

/// Isotonic link from hop distance to the full distance induced by
/// `reference` (all pairs within `radius`), pinned at the origin.
pub fn fit_kernel_link(g: &Graph, reference: &DMatrix<f64>, radius: Hop) -> Result<MonotoneLink> {
    let sq = kernel_squared_distances(reference);
    let samples = collect_pairs_with(g, radius, &PairScope::AllPairs, |u, v| sq[(u, v)].sqrt())?;
    Ok(fit_isotonic(&samples)?.with_origin())
}

fn spectral_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = SVD::new(m.clone(), false, false).singular_values;
    (sv.min(), sv.max())
}

/// Moore-Penrose inverse of a symmetric matrix with relative cutoff.
fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = SVD::new(m.clone(), true, true);
    let max = svd.singular_values.max();
    svd.pseudo_inverse(PINV_CUTOFF * max).expect("both factors were computed")
}

/// `K̂` and the anchor-block diagnostics it was built from.
#[derive(Debug, Clone)]
pub struct NystromKernel {
    pub kernel: DMatrix<f64>,
    /// Ridge actually applied.
    pub lambda: f64,
    /// Spectral condition number of the unregularized anchor block.
    pub cond_kaa: f64,
    pub anchor_block: DMatrix<f64>,
}

/// Builds `K̂ = C (K_AA + λI)⁺ Cᵀ`.
///
/// `reference` is the exact `K_{2t}`; its diagonal and anchor block are used in
/// both modes. `link` is required in distance-driven mode.
pub fn nystrom_kernel(
    reference: &DMatrix<f64>,
    g: &Graph,
    cfg: &NystromConfig,
    anchors: &[usize],
    link: Option<&MonotoneLink>,
) -> Result<NystromKernel> {
    let n = reference.nrows();
    if g.node_count() != n {
        return Err(Error::ShapeMismatch { expected: (g.node_count(), g.node_count()), got: reference.shape() });
    }
    if anchors.is_empty() {
        return Err(Error::EmptyAnchors);
    }
    let k = anchors.len();
    let mut seen = vec![false; n];
    for &a in anchors {
        if a >= n {
            return Err(Error::NodeOutOfRange { node: a, n });
        }
        if std::mem::replace(&mut seen[a], true) {
            return Err(Error::InvalidParameter(format!("anchor {a} repeated")));
        }
    }

    let block = DMatrix::from_fn(k, k, |i, j| reference[(anchors[i], anchors[j])]);
    let lambda = match cfg.lambda_reg {
        Some(l) if l < 0.0 || !l.is_finite() => {
            return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {l}")))
        }
        Some(l) => l,
        None => DEFAULT_RIDGE_SCALE * block.trace() / k as f64,
    };
    let (min, max) = spectral_extremes(&block);
    if lambda == 0.0 && min <= PINV_CUTOFF * max {
        return Err(Error::SingularAnchorBlock);
    }
    let cond_kaa = if min > 0.0 { max / min } else { f64::INFINITY };

    let cross = match cfg.cross_mode {
        CrossMode::ExactColumns => DMatrix::from_fn(n, k, |v, i| reference[(v, anchors[i])]),
        CrossMode::DistanceDriven => {
            let link =
                link.ok_or_else(|| Error::InvalidParameter("distance-driven mode needs a fitted link".into()))?;
            let spd = node_anchor_distances(g, anchors)?;
            if spd.has_unreachable() {
                return Err(Error::Disconnected);
            }
            DMatrix::from_fn(n, k, |v, i| {
                let a = anchors[i];
                let d = link.evaluate_hop(spd.get(v, i));
                0.5 * (reference[(v, v)] + reference[(a, a)] - d * d)
            })
        }
    };

    let regularized = &block + DMatrix::<f64>::identity(k, k) * lambda;
    let approx = &cross * pseudo_inverse(&regularized) * cross.transpose();
    Ok(NystromKernel { kernel: (&approx + approx.transpose()) * 0.5, lambda, cond_kaa, anchor_block: block })
}

/// Diffusion-map coordinates from a kernel: eigenpairs 2..m+1 in descending
/// order, each eigenvector scaled by the square root of its eigenvalue.
pub fn nystrom_embedding(kernel: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    let n = kernel.nrows();
    if m == 0 || m + 1 > n {
        return Err(Error::OrderOutOfRange { m, max: n.saturating_sub(1) });
    }
    let eig = kernel.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let bottom = eig.eigenvalues[order[n - 1]];
    if bottom < -1e-10 * top.max(1.0) {
        return Err(Error::InvalidParameter(format!("kernel is not positive semidefinite (eigenvalue {bottom:e})")));
    }
    let rank = order.iter().take_while(|&&j| eig.eigenvalues[j] > PINV_CUTOFF * top).count();
    if top <= 0.0 || rank < m + 1 {
        return Err(Error::InsufficientRank { rank, needed: m + 1 });
    }
    Ok(DMatrix::from_fn(n, m, |v, j| {
        let idx = order[j + 1];
        eig.eigenvalues[idx].sqrt() * eig.eigenvectors[(v, idx)]
    }))
}

#[derive(Debug, Clone)]
pub struct ProcrustesFit {
    /// `(X - x̄) Q s + ȳ`
    pub aligned: DMatrix<f64>,
    pub rotation: DMatrix<f64>,
    pub scale: f64,
    /// Mean squared entry error between `aligned` and `Y`.
    pub mse: f64,
}

fn centered(x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let mean = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    (c, DMatrix::from_row_slice(1, x.ncols(), mean.as_slice()))
}

/// Orthogonal Procrustes: the rotation or reflection `Q` minimizing
/// `||X_c Q - Y_c||_F` over column-centered inputs. With `allow_scaling`, an
/// isotropic scale is fitted as well.
pub fn procrustes_align(x: &DMatrix<f64>, y: &DMatrix<f64>, allow_scaling: bool) -> Result<ProcrustesFit> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch { expected: y.shape(), got: x.shape() });
    }
    let (xc, _) = centered(x);
    let (yc, y_mean) = centered(y);
    let d = x.ncols();
    let cross = xc.transpose() * &yc;
    let (rotation, trace) = if cross.amax() == 0.0 {
        (DMatrix::<f64>::identity(d, d), 0.0)
    } else {
        let svd = SVD::new(cross, true, true);
        let u = svd.u.expect("requested");
        let v_t = svd.v_t.expect("requested");
        (u * v_t, svd.singular_values.sum())
    };
    let x_norm = xc.norm_squared();
    let scale = if allow_scaling && x_norm > 0.0 { trace / x_norm } else { 1.0 };
    let mut aligned = &xc * &rotation * scale;
    for mut row in aligned.row_iter_mut() {
        row += &y_mean;
    }
    let mse = if y.is_empty() { 0.0 } else { (&aligned - y).norm_squared() / y.len() as f64 };
    Ok(ProcrustesFit { aligned, rotation, scale, mse })
}

/// Pearson correlation between two equally long samples.
pub fn distance_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch { expected: (b.len(), 1), got: (a.len(), 1) });
    }
    if a.len() < 2 {
        return Err(Error::InvalidParameter("correlation needs at least two pairs".into()));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// `log10` of the spectral condition number; `+∞` for singular input.
pub fn log10_condition(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch { expected: (m.nrows(), m.nrows()), got: m.shape() });
    }
    let (min, max) = spectral_extremes(m);
    Ok(if min > 0.0 { (max / min).log10() } else { f64::INFINITY })
}

/// `(value, fraction of values ≥ value)` pairs, ascending.
pub fn ccdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().map(|(i, &x)| (x, (v.len() - i) as f64 / n)).collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConditioningDiagnostics {
    pub log10_cond_kaa: f64,
    pub log10_cond_a_tri: Option<f64>,
}

/// Log condition numbers of the anchor block and, when given, the
/// trilateration matrix.
pub fn conditioning_diagnostics(kaa: &DMatrix<f64>, a_tri: Option<&DMatrix<f64>>) -> Result<ConditioningDiagnostics> {
    Ok(ConditioningDiagnostics {
        log10_cond_kaa: log10_condition(kaa)?,
        log10_cond_a_tri: a_tri.map(log10_condition).transpose()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    /// `||K̂ - K||_F / ||K||_F`
    pub rel_kernel_frob: f64,
    /// Mean squared coordinate error after Procrustes alignment.
    pub coord_mse: f64,
    /// Pearson correlation of approximate and exact pairwise distances.
    pub dist_pearson: f64,
    pub cond_kaa: f64,
    pub cond_a_tri: Option<f64>,
    pub lambda: f64,
}

/// Report plus per-node detail from one approximation run.
#[derive(Debug, Clone)]
pub struct ApproxOutcome {
    pub report: ApproxReport,
    /// Coordinate error per node after alignment.
    pub node_errors: Vec<f64>,
    pub approx_embedding: DMatrix<f64>,
    pub exact_embedding: DMatrix<f64>,
}

/// Runs the full comparison against the exact diffusion geometry: kernel
/// error, aligned embedding error, and distance correlation.
///
/// In distance-driven mode without an explicit `link`, one is fitted from all
/// pairs within `radius`. Embeddings are compared at order `min(m, k - 1)`.
pub fn approximate_diffusion(
    g: &Graph,
    eig: &EigenSystem,
    cfg: &NystromConfig,
    anchors: &[usize],
    link: Option<&MonotoneLink>,
    radius: Hop,
) -> Result<ApproxOutcome> {
    let reference = reference_kernel(eig, cfg.t)?;
    let fitted;
    let link = match (cfg.cross_mode, link) {
        (CrossMode::DistanceDriven, None) => {
            fitted = fit_kernel_link(g, &reference, radius)?;
            Some(&fitted)
        }
        (_, link) => link,
    };
    let approx = nystrom_kernel(&reference, g, cfg, anchors, link)?;
    let rel_kernel_frob = (&approx.kernel - &reference).norm() / reference.norm();

    // a rank-k approximation carries at most k - 1 nontrivial coordinates
    let m = cfg.m.min(anchors.len() - 1);
    if m == 0 {
        return Err(Error::InvalidParameter("embedding comparison needs at least two anchors".into()));
    }
    let exact_embedding = nystrom_embedding(&reference, m)?;
    let approx_embedding = nystrom_embedding(&approx.kernel, m)?;
    let fit = procrustes_align(&approx_embedding, &exact_embedding, false)?;
    let node_errors = (0..g.node_count()).map(|v| (fit.aligned.row(v) - exact_embedding.row(v)).norm()).collect();

    let dist_pearson =
        distance_correlation(&kernel_pair_distances(&approx.kernel), &kernel_pair_distances(&reference))?;

    let cond_a_tri = (anchors.len() > m).then(|| {
        let positions = DMatrix::from_fn(m + 1, m, |i, j| exact_embedding[(anchors[i], j)]);
        let a = anchor_difference_matrix(&positions).transpose() * 2.0;
        let (min, max) = spectral_extremes(&a);
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    });

    Ok(ApproxOutcome {
        report: ApproxReport {
            rel_kernel_frob,
            coord_mse: fit.mse,
            dist_pearson,
            cond_kaa: approx.cond_kaa,
            cond_a_tri,
            lambda: approx.lambda,
        },
        node_errors,
        approx_embedding: fit.aligned,
        exact_embedding,
    })
}

/// Median of a report field over a batch.
pub fn median_of(reports: &[ApproxReport], field: impl Fn(&ApproxReport) -> f64) -> f64 {
    median(&reports.iter().map(field).collect::<Vec<_>>())
}
