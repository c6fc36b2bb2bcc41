//! Normalized Laplacians, their dense eigendecomposition, heat kernels, and
//! diffusion distances (full and truncated).
//!
//! All spectral objects are built from one [`EigenSystem`]. With eigenpairs
//! `(λ_j, φ_j)` sorted ascending, the truncated embedding at time `t` keeps the
//! `m` eigenvectors after the trivial one, each scaled by `exp(-t λ)`. The
//! squared full distance splits exactly into the truncated part plus the tail
//! over the discarded modes.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Maximum absolute asymmetry accepted by [`eigendecompose`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Eigenvalue gap below which a truncation boundary is treated as splitting
/// a degenerate eigenspace.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianMode {
    /// `I - A / r` for an `r`-regular graph.
    Regular,
    /// `I - D^{-1/2} A D^{-1/2}`.
    General,
}

impl LaplacianMode {
    /// Regular form when the graph is regular, symmetric normalized otherwise.
    /// The two coincide on regular graphs.
    pub fn for_graph(g: &Graph) -> Self {
        if g.degree_regular().is_some() {
            Self::Regular
        } else {
            Self::General
        }
    }
}

pub fn laplacian(g: &Graph, mode: LaplacianMode) -> Result<DMatrix<f64>> {
    let n = g.node_count();
    let mut l = DMatrix::<f64>::identity(n, n);
    match mode {
        LaplacianMode::Regular => {
            let r = g.degree_regular().ok_or(Error::NotRegular)? as f64;
            for (u, v) in g.edges() {
                l[(u, v)] = -1.0 / r;
                l[(v, u)] = -1.0 / r;
            }
        }
        LaplacianMode::General => {
            if let Some(v) = (0..n).find(|&v| g.degree(v) == 0) {
                return Err(Error::IsolatedNode(v));
            }
            let inv_sqrt: Vec<f64> = (0..n).map(|v| 1.0 / (g.degree(v) as f64).sqrt()).collect();
            for (u, v) in g.edges() {
                let w = -inv_sqrt[u] * inv_sqrt[v];
                l[(u, v)] = w;
                l[(v, u)] = w;
            }
        }
    }
    Ok(l)
}

/// Ascending eigenvalues and orthonormal eigenvectors (as columns) of a
/// symmetric matrix, normally a normalized Laplacian.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
    mode: Option<LaplacianMode>,
}

/// Numerical health of an eigendecomposition.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EigenDiagnostics {
    /// `max_j ||L φ_j - λ_j φ_j||_2`
    pub max_residual: f64,
    /// `max |ΦᵀΦ - I|`
    pub max_gram_deviation: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

impl EigenSystem {
    /// Laplacian of `g` in `mode`, decomposed.
    pub fn from_graph(g: &Graph, mode: LaplacianMode) -> Result<Self> {
        let mut eig = eigendecompose(&laplacian(g, mode)?)?;
        eig.mode = Some(mode);
        Ok(eig)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn mode(&self) -> Option<LaplacianMode> {
        self.mode
    }

    /// `exp(-t λ_j)` with round-off negatives clamped to zero (0-based `j`).
    pub fn decay(&self, t: f64, j: usize) -> f64 {
        (-t * self.values[j].max(0.0)).exp()
    }

    pub fn diagnostics(&self, l: &DMatrix<f64>) -> EigenDiagnostics {
        let lphi = l * &self.vectors;
        let max_residual = (0..self.len())
            .map(|j| (lphi.column(j) - self.vectors.column(j) * self.values[j]).norm())
            .fold(0.0, f64::max);
        let gram = self.vectors.transpose() * &self.vectors;
        let n = self.len();
        let max_gram_deviation = (gram - DMatrix::<f64>::identity(n, n)).amax();
        EigenDiagnostics {
            max_residual,
            max_gram_deviation,
            min_eigenvalue: self.values.min(),
            max_eigenvalue: self.values.max(),
        }
    }

    /// `Σ_j exp(-t λ_j) φ_j(u) φ_j(v)`, one entry of the heat kernel.
    pub fn kernel_entry(&self, t: f64, u: usize, v: usize) -> f64 {
        (0..self.len()).map(|j| self.decay(t, j) * self.vectors[(u, j)] * self.vectors[(v, j)]).sum()
    }

    /// Weighted squared eigenvector gap summed over modes `range` (0-based).
    fn spectral_gap_sq(&self, t: f64, u: usize, v: usize, range: std::ops::Range<usize>) -> f64 {
        range
            .map(|j| {
                let diff = self.vectors[(u, j)] - self.vectors[(v, j)];
                self.decay(2.0 * t, j) * diff * diff
            })
            .sum()
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node < self.len() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { node, n: self.len() })
        }
    }
}

/// Full dense symmetric eigendecomposition, eigenvalues ascending.
///
/// Each eigenvector is oriented so that its largest-magnitude entry (first
/// such index on ties) is positive.
pub fn eigendecompose(l: &DMatrix<f64>) -> Result<EigenSystem> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(Error::ShapeMismatch { expected: (n, n), got: (n, l.ncols()) });
    }
    let asym = (l - l.transpose()).amax();
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric(asym));
    }
    let eig = l.clone().try_symmetric_eigen(f64::EPSILON, 1000 * n.max(1)).ok_or(Error::EigenNonConvergence)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&j| eig.eigenvalues[j]));
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let pivot = col.iter().enumerate().fold(0, |best, (i, x)| if x.abs() > col[best].abs() { i } else { best });
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(dst, &(col * sign));
    }
    Ok(EigenSystem { values, vectors, mode: None })
}

/// `K_t = Σ_j exp(-t λ_j) φ_j φ_jᵀ`.
pub fn heat_kernel(eig: &EigenSystem, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("diffusion time must be >= 0, got {t}")));
    }
    let n = eig.len();
    let scaled = DMatrix::from_fn(n, n, |i, j| eig.vectors[(i, j)] * eig.decay(t, j));
    let k = &scaled * eig.vectors.transpose();
    // symmetrize away round-off from the product
    Ok((&k + k.transpose()) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMethod {
    /// `sqrt(Σ_j exp(-2tλ_j) (φ_j(u) - φ_j(v))²)`
    SpectralSum,
    /// `sqrt(k_2t(u,u) + k_2t(v,v) - 2 k_2t(u,v))`
    KernelIdentity,
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("diffusion time must be > 0, got {t}")))
    }
}

/// Full diffusion distance `d_t(u, v)`.
pub fn diffusion_distance(eig: &EigenSystem, t: f64, u: usize, v: usize, method: DistanceMethod) -> Result<f64> {
    check_time(t)?;
    eig.check_node(u)?;
    eig.check_node(v)?;
    let sq = match method {
        DistanceMethod::SpectralSum => eig.spectral_gap_sq(t, u, v, 0..eig.len()),
        DistanceMethod::KernelIdentity => {
            let kt = 2.0 * t;
            eig.kernel_entry(kt, u, u) + eig.kernel_entry(kt, v, v) - 2.0 * eig.kernel_entry(kt, u, v)
        }
    };
    Ok(sq.max(0.0).sqrt())
}

/// Rows of the truncated diffusion map at one time `t`.
#[derive(Debug, Clone)]
pub struct DiffusionEmbedding {
    t: f64,
    coords: DMatrix<f64>,
}

impl DiffusionEmbedding {
    /// Wraps precomputed coordinates (one row per node).
    pub fn from_coords(t: f64, coords: DMatrix<f64>) -> Self {
        Self { t, coords }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Truncation order (number of coordinates).
    pub fn order(&self) -> usize {
        self.coords.ncols()
    }

    pub fn node_count(&self) -> usize {
        self.coords.nrows()
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn point(&self, v: usize) -> DVector<f64> {
        self.coords.row(v).transpose()
    }

    /// Writes `node_id,phi_0,...,phi_{m-1}` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["node_id".to_string()];
        header.extend((0..self.order()).map(|j| format!("phi_{j}")));
        w.write_record(&header)?;
        for v in 0..self.node_count() {
            let mut record = vec![v.to_string()];
            record.extend(self.coords.row(v).iter().map(|x| x.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `coords(v, j) = exp(-t λ_{j+2}) φ_{j+2}(v)` for `j = 0..m` (0-based `j`,
/// 1-based eigen-index), skipping the trivial eigenvector.
pub fn truncated_embedding(eig: &EigenSystem, t: f64, m: usize) -> Result<DiffusionEmbedding> {
    check_time(t)?;
    let n = eig.len();
    if m == 0 || m + 1 > n {
        return Err(Error::OrderOutOfRange { m, max: n.saturating_sub(1) });
    }
    if m + 1 < n && (eig.values[m + 1] - eig.values[m]).abs() < TIE_TOLERANCE {
        log::warn!(
            "truncation at m = {m} splits a degenerate eigenspace (λ = {:.12}); coordinates depend on the eigenbasis",
            eig.values[m]
        );
    }
    let coords = DMatrix::from_fn(n, m, |v, j| eig.decay(t, j + 1) * eig.vectors[(v, j + 1)]);
    Ok(DiffusionEmbedding { t, coords })
}

/// Euclidean distance between two rows of the embedding.
pub fn truncated_distance(emb: &DiffusionEmbedding, u: usize, v: usize) -> f64 {
    (emb.coords.row(u) - emb.coords.row(v)).norm()
}

/// Distance discarded by truncating at order `m`:
/// `sqrt(Σ_{j=m+2}^{n} exp(-2tλ_j) (φ_j(u) - φ_j(v))²)`.
pub fn tail(eig: &EigenSystem, t: f64, m: usize, u: usize, v: usize) -> Result<f64> {
    check_time(t)?;
    eig.check_node(u)?;
    eig.check_node(v)?;
    if m == 0 || m + 1 > eig.len() {
        return Err(Error::OrderOutOfRange { m, max: eig.len().saturating_sub(1) });
    }
    Ok(eig.spectral_gap_sq(t, u, v, m + 1..eig.len()).sqrt())
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_simple_edges(n, edges).unwrap()
    }

    fn cycle(n: usize) -> Graph {
        let edges: Vec<_> = (0..n).map(|v| (v, (v + 1) % n)).collect();
        graph(n, &edges)
    }

    fn k2() -> Graph {
        graph(2, &[(0, 1)])
    }

    fn complete(n: usize) -> Graph {
        let edges: Vec<_> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        graph(n, &edges)
    }

    #[test]
    fn k2_laplacian() {
        let l = laplacian(&k2(), LaplacianMode::Regular).unwrap();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn c4_laplacian() {
        let l = laplacian(&cycle(4), LaplacianMode::Regular).unwrap();
        for i in 0..4 {
            assert_eq!(l[(i, i)], 1.0);
            assert_eq!(l[(i, (i + 1) % 4)], -0.5);
            assert_eq!(l[(i, (i + 2) % 4)], 0.0);
        }
    }

    #[test]
    fn star_general_laplacian() {
        // centre degree 3, leaves degree 1: -1/sqrt(3 * 1)
        let star = graph(4, &[(0, 1), (0, 2), (0, 3)]);
        let l = laplacian(&star, LaplacianMode::General).unwrap();
        for leaf in 1..4 {
            assert_abs_diff_eq!(l[(0, leaf)], -1.0 / 3f64.sqrt(), epsilon = 1e-15);
            assert_abs_diff_eq!(l[(leaf, 0)], -1.0 / 3f64.sqrt(), epsilon = 1e-15);
        }
        assert!(matches!(laplacian(&star, LaplacianMode::Regular), Err(Error::NotRegular)));
        let isolated = graph(3, &[(0, 1)]);
        assert!(matches!(laplacian(&isolated, LaplacianMode::General), Err(Error::IsolatedNode(2))));
    }

    #[test]
    fn regular_and_general_agree_on_regular_graphs() {
        let g = cycle(7);
        let a = laplacian(&g, LaplacianMode::Regular).unwrap();
        let b = laplacian(&g, LaplacianMode::General).unwrap();
        assert!((a - b).amax() < 1e-15);
    }

    #[test]
    fn c4_spectrum() {
        let eig = EigenSystem::from_graph(&cycle(4), LaplacianMode::Regular).unwrap();
        // 1 - cos(2πj/4) for j = 0..3, sorted
        let mut expected: Vec<f64> =
            (0..4).map(|j| 1.0 - (2.0 * std::f64::consts::PI * j as f64 / 4.0).cos()).collect();
        expected.sort_by(f64::total_cmp);
        for (got, want) in eig.eigenvalues().iter().zip(&expected) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn complete_graph_spectrum() {
        for n in [2usize, 3, 5, 8] {
            let eig = EigenSystem::from_graph(&complete(n), LaplacianMode::Regular).unwrap();
            assert_abs_diff_eq!(eig.eigenvalues()[0], 0.0, epsilon = 1e-12);
            for j in 1..n {
                assert_abs_diff_eq!(eig.eigenvalues()[j], n as f64 / (n - 1) as f64, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rejects_asymmetric_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(eigendecompose(&m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn diagnostics_within_tolerance() {
        let g = cycle(9);
        let l = laplacian(&g, LaplacianMode::Regular).unwrap();
        let eig = eigendecompose(&l).unwrap();
        let d = eig.diagnostics(&l);
        assert!(d.max_residual <= 1e-8 * 9.0);
        assert!(d.max_gram_deviation <= 1e-10);
        assert!(d.min_eigenvalue >= -1e-10 && d.max_eigenvalue <= 2.0 + 1e-10);
    }

    #[test]
    fn heat_kernel_fixtures() {
        let eig = EigenSystem::from_graph(&k2(), LaplacianMode::Regular).unwrap();
        let k0 = heat_kernel(&eig, 0.0).unwrap();
        assert!((k0 - DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);

        let k1 = heat_kernel(&eig, 1.0).unwrap();
        let e2 = (-2.0f64).exp();
        assert_abs_diff_eq!(k1[(0, 0)], (1.0 + e2) / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k1[(0, 1)], (1.0 - e2) / 2.0, epsilon = 1e-14);

        let eig = EigenSystem::from_graph(&cycle(4), LaplacianMode::Regular).unwrap();
        for t in [0.1, 1.0, 7.5] {
            let k = heat_kernel(&eig, t).unwrap();
            for row in k.row_iter() {
                assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
            }
        }
        assert!(heat_kernel(&eig, -1.0).is_err());
    }

    #[test]
    fn k2_diffusion_distance() {
        let eig = EigenSystem::from_graph(&k2(), LaplacianMode::Regular).unwrap();
        let expected = 2f64.sqrt() * (-2.0f64).exp();
        assert_abs_diff_eq!(expected, 0.191393, epsilon = 1e-6);
        for method in [DistanceMethod::SpectralSum, DistanceMethod::KernelIdentity] {
            assert_abs_diff_eq!(diffusion_distance(&eig, 1.0, 0, 1, method).unwrap(), expected, epsilon = 1e-14);
            assert_eq!(diffusion_distance(&eig, 1.0, 1, 1, method).unwrap(), 0.0);
        }
        assert!(diffusion_distance(&eig, 1.0, 0, 2, DistanceMethod::SpectralSum).is_err());
        assert!(diffusion_distance(&eig, 0.0, 0, 1, DistanceMethod::SpectralSum).is_err());
    }

    #[test]
    fn c4_antipodal_distance_matches_kernel_rows() {
        // Oracle: d_t(u,v) is the Euclidean distance between rows of K_t.
        let eig = EigenSystem::from_graph(&cycle(4), LaplacianMode::Regular).unwrap();
        let k = heat_kernel(&eig, 1.0).unwrap();
        let oracle = (k.row(0) - k.row(2)).norm();
        let got = diffusion_distance(&eig, 1.0, 0, 2, DistanceMethod::SpectralSum).unwrap();
        assert_abs_diff_eq!(got, oracle, epsilon = 1e-12);
        // closed form: the λ=2 mode (1,-1,1,-1)/2 is equal at 0 and 2; the λ=1
        // eigenspace projects e_0 - e_2 with squared norm 2, so d² = 2e^{-2}
        assert_abs_diff_eq!(got, (2.0 * (-2.0f64).exp()).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn k2_truncated_embedding() {
        let eig = EigenSystem::from_graph(&k2(), LaplacianMode::Regular).unwrap();
        let emb = truncated_embedding(&eig, 1.0, 1).unwrap();
        let want = (-2.0f64).exp() / 2f64.sqrt();
        assert_abs_diff_eq!(emb.coords()[(0, 0)].abs(), want, epsilon = 1e-14);
        assert_abs_diff_eq!(emb.coords()[(1, 0)], -emb.coords()[(0, 0)], epsilon = 1e-14);
        assert!(truncated_embedding(&eig, 1.0, 2).is_err());
        assert!(truncated_embedding(&eig, 1.0, 0).is_err());
    }

    #[test]
    fn column_norms_are_decays() {
        let g = cycle(11);
        let eig = EigenSystem::from_graph(&g, LaplacianMode::Regular).unwrap();
        let emb = truncated_embedding(&eig, 0.7, 6).unwrap();
        for j in 0..6 {
            assert_abs_diff_eq!(emb.coords().column(j).norm(), eig.decay(0.7, j + 1), epsilon = 1e-8);
        }
    }

    #[test]
    fn c6_tail_matches_direct_sum() {
        let eig = EigenSystem::from_graph(&cycle(6), LaplacianMode::Regular).unwrap();
        let (t, u, v) = (1.0, 0, 1);
        // modes 3..6 (1-based) are 0-based indices 2..6
        let mut oracle = 0.0;
        for j in 2..6 {
            let lam: f64 = eig.eigenvalues()[j].max(0.0);
            let phi = eig.eigenvectors();
            oracle += (-2.0 * t * lam).exp() * (phi[(u, j)] - phi[(v, j)]).powi(2);
        }
        assert_abs_diff_eq!(tail(&eig, t, 1, u, v).unwrap(), oracle.sqrt(), epsilon = 1e-14);
        assert_eq!(tail(&eig, t, 5, u, v).unwrap(), 0.0);
    }

    #[test]
    fn no_truncation_recovers_full_distance() {
        let g = cycle(8);
        let eig = EigenSystem::from_graph(&g, LaplacianMode::Regular).unwrap();
        let emb = truncated_embedding(&eig, 1.0, 7).unwrap();
        for u in 0..8 {
            for v in 0..8 {
                let full = diffusion_distance(&eig, 1.0, u, v, DistanceMethod::SpectralSum).unwrap();
                // the trivial mode is constant in regular mode, so it adds nothing
                assert_abs_diff_eq!(truncated_distance(&emb, u, v), full, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn embedding_csv_has_header_and_rows() {
        let eig = EigenSystem::from_graph(&cycle(5), LaplacianMode::Regular).unwrap();
        let emb = truncated_embedding(&eig, 1.0, 2).unwrap();
        let mut buf = Vec::new();
        emb.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "node_id,phi_0,phi_1");
        assert_eq!(lines.len(), 6);
    }
}
