//! Recovering truncated diffusion coordinates from distances to `m + 1` anchors.
//!
//! With anchor positions `p_1..p_{m+1}` in `R^m`, squared-distance equations
//! `||z - p_i||² = r_i²` become linear after subtracting the last one:
//! `A z = b(r)` with `A = 2 [(p_i - p_{m+1})ᵀ]` and
//! `b_i = ||p_i||² - ||p_{m+1}||² + r_{m+1}² - r_i²`. Feeding linked hop
//! distances `ψ(SPD(a_i, v))` as radii gives the reconstruction `T(v)`.

use nalgebra::{DMatrix, DVector, LU, SVD};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{bfs_distances, is_connected, peripheral_node, DistanceMatrix, Graph, Hop, UNREACHABLE};
use crate::linkage::MonotoneLink;
use crate::spectral::{truncated_distance, DiffusionEmbedding};

/// Smallest-to-largest singular value ratio at or below which a matrix is
/// treated as singular.
pub const SINGULAR_RATIO: f64 = 1e-12;

/// Relative round-off allowance used when comparing reconstruction errors
/// against analytic bounds.
pub const BOUND_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStrategy {
    /// Distinct nodes drawn uniformly at random.
    Uniform,
    /// Farthest-point sampling in hop distance. Without an explicit start,
    /// begins at a peripheral node found by double BFS.
    Fps {
        start: Option<usize>,
    },
    Explicit(Vec<usize>),
}

/// Node ids chosen by `strategy`, in selection order.
pub fn select_anchor_nodes(g: &Graph, count: usize, strategy: &AnchorStrategy, seed: u64) -> Result<Vec<usize>> {
    let n = g.node_count();
    if count > n {
        return Err(Error::TooManyAnchors { count, n });
    }
    if count == 0 {
        return Err(Error::EmptyAnchors);
    }
    match strategy {
        AnchorStrategy::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(index::sample(&mut rng, n, count).into_vec())
        }
        AnchorStrategy::Fps { start } => {
            if !is_connected(g) {
                return Err(Error::Disconnected);
            }
            let start = match *start {
                Some(s) if s >= n => return Err(Error::NodeOutOfRange { node: s, n }),
                Some(s) => s,
                None => peripheral_node(g)?,
            };
            farthest_point_sampling(g, start, count)
        }
        AnchorStrategy::Explicit(ids) => {
            if ids.len() != count {
                return Err(Error::InvalidParameter(format!(
                    "{} explicit anchors given, {count} requested",
                    ids.len()
                )));
            }
            let mut seen = vec![false; n];
            for &a in ids {
                if a >= n {
                    return Err(Error::NodeOutOfRange { node: a, n });
                }
                if std::mem::replace(&mut seen[a], true) {
                    return Err(Error::InvalidParameter(format!("anchor {a} repeated")));
                }
            }
            Ok(ids.clone())
        }
    }
}

/// Greedy max-min selection; ties go to the smallest node id.
fn farthest_point_sampling(g: &Graph, start: usize, count: usize) -> Result<Vec<usize>> {
    let mut chosen = vec![start];
    let mut nearest: Vec<Hop> = bfs_distances(g, start)?;
    while chosen.len() < count {
        let (next, _) =
            nearest.iter().enumerate().fold(
                (usize::MAX, 0),
                |(best, best_d), (v, &d)| {
                    if d > best_d {
                        (v, d)
                    } else {
                        (best, best_d)
                    }
                },
            );
        if next == usize::MAX {
            break;
        }
        chosen.push(next);
        for (slot, d) in nearest.iter_mut().zip(bfs_distances(g, next)?) {
            *slot = (*slot).min(d);
        }
    }
    Ok(chosen)
}

/// Anchors with their embedded positions `p_i`, one row each.
#[derive(Debug, Clone)]
pub struct AnchorSet {
    indices: Vec<usize>,
    positions: DMatrix<f64>,
    strategy: AnchorStrategy,
    jitter_eps: Option<f64>,
}

impl AnchorSet {
    /// Positions taken from `emb` rows at `indices`.
    pub fn from_embedding(indices: Vec<usize>, emb: &DiffusionEmbedding, strategy: AnchorStrategy) -> Result<Self> {
        let n = emb.node_count();
        if let Some(&bad) = indices.iter().find(|&&a| a >= n) {
            return Err(Error::NodeOutOfRange { node: bad, n });
        }
        let positions = DMatrix::from_fn(indices.len(), emb.order(), |i, j| emb.coords()[(indices[i], j)]);
        Ok(Self { indices, positions, strategy, jitter_eps: None })
    }

    /// Anchors at arbitrary positions (rows), not tied to an embedding.
    pub fn from_positions(indices: Vec<usize>, positions: DMatrix<f64>) -> Result<Self> {
        if indices.len() != positions.nrows() {
            return Err(Error::ShapeMismatch { expected: (indices.len(), positions.ncols()), got: positions.shape() });
        }
        Ok(Self { strategy: AnchorStrategy::Explicit(indices.clone()), indices, positions, jitter_eps: None })
    }

    /// Adds `eps · ξ` to each position with `ξ` standard Gaussian.
    pub fn jittered(mut self, eps: f64, seed: u64) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("jitter must be >= 0, got {eps}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in self.positions.iter_mut() {
            let xi: f64 = rng.sample(StandardNormal);
            *x += eps * xi;
        }
        self.jitter_eps = Some(eps);
        Ok(self)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }

    pub fn position(&self, i: usize) -> DVector<f64> {
        self.positions.row(i).transpose()
    }

    pub fn strategy(&self) -> &AnchorStrategy {
        &self.strategy
    }

    pub fn jitter_eps(&self) -> Option<f64> {
        self.jitter_eps
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Embedding dimension of the positions.
    pub fn dimension(&self) -> usize {
        self.positions.ncols()
    }
}

/// Selects `count` anchors and reads their positions from `emb`, optionally
/// jittered by `jitter_eps` (the jitter stream is derived from `seed`).
pub fn select_anchors(
    g: &Graph,
    emb: &DiffusionEmbedding,
    count: usize,
    strategy: &AnchorStrategy,
    seed: u64,
    jitter_eps: Option<f64>,
) -> Result<AnchorSet> {
    let indices = select_anchor_nodes(g, count, strategy, seed)?;
    let set = AnchorSet::from_embedding(indices, emb, strategy.clone())?;
    match jitter_eps {
        Some(eps) => set.jittered(eps, seed ^ 0x9e37_79b9_7f4a_7c15),
        None => Ok(set),
    }
}

/// `M = [p_1 - p_{m+1}, ..., p_m - p_{m+1}]` (differences as columns).
pub fn anchor_difference_matrix(positions: &DMatrix<f64>) -> DMatrix<f64> {
    let k = positions.nrows();
    let last = positions.row(k - 1);
    DMatrix::from_fn(positions.ncols(), k - 1, |j, i| positions[(i, j)] - last[j])
}

fn singular_value_range(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = SVD::new(m.clone(), false, false).singular_values;
    (sv.min(), sv.max())
}

fn is_singular(min: f64, max: f64) -> bool {
    max == 0.0 || min <= SINGULAR_RATIO * max
}

/// Factorized trilateration matrix for one anchor set.
#[derive(Debug, Clone)]
pub struct TrilaterationSystem {
    a: DMatrix<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    cond: f64,
    inverse_norm: f64,
    det_m_nonzero: bool,
}

impl TrilaterationSystem {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Spectral condition number `σ_max / σ_min`.
    pub fn cond(&self) -> f64 {
        self.cond
    }

    /// `||A^{-1}||_op = 1 / σ_min`.
    pub fn inverse_norm(&self) -> f64 {
        self.inverse_norm
    }

    pub fn det_m_nonzero(&self) -> bool {
        self.det_m_nonzero
    }

    pub fn dimension(&self) -> usize {
        self.a.nrows()
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.lu.solve(b).ok_or(Error::SingularSystem { ratio: 0.0 })
    }
}

/// Assembles and factorizes `A = 2 Mᵀ`; degenerate anchors are an error.
pub fn build_system(anchors: &AnchorSet) -> Result<TrilaterationSystem> {
    let m = anchors.dimension();
    if anchors.len() != m + 1 || m == 0 {
        return Err(Error::ShapeMismatch { expected: (m + 1, m), got: anchors.positions().shape() });
    }
    let a = anchor_difference_matrix(anchors.positions()).transpose() * 2.0;
    let (min, max) = singular_value_range(&a);
    if is_singular(min, max) {
        return Err(Error::SingularSystem { ratio: if max == 0.0 { 0.0 } else { min / max } });
    }
    Ok(TrilaterationSystem { lu: LU::new(a.clone()), a, cond: max / min, inverse_norm: 1.0 / min, det_m_nonzero: true })
}

/// `b(r)_i = ||p_i||² - ||p_{m+1}||² + r_{m+1}² - r_i²`.
pub fn rhs(anchors: &AnchorSet, radii: &[f64]) -> Result<DVector<f64>> {
    let k = anchors.len();
    if radii.len() != k || k < 2 {
        return Err(Error::ShapeMismatch { expected: (k, 1), got: (radii.len(), 1) });
    }
    if let Some(r) = radii.iter().find(|r| !(**r >= 0.0)) {
        return Err(Error::InvalidParameter(format!("radius must be nonnegative, got {r}")));
    }
    let p = anchors.positions();
    let norm_sq = |i: usize| p.row(i).norm_squared();
    let last = k - 1;
    let base = radii[last] * radii[last] - norm_sq(last);
    Ok(DVector::from_fn(k - 1, |i, _| norm_sq(i) + base - radii[i] * radii[i]))
}

/// Solves `A T = b(radii)`.
pub fn reconstruct_from_radii(
    system: &TrilaterationSystem,
    anchors: &AnchorSet,
    radii: &[f64],
) -> Result<DVector<f64>> {
    system.solve(&rhs(anchors, radii)?)
}

/// `T(v) = A^{-1} b(ψ(SPD(a_i, v)))` from one row of hop distances.
pub fn reconstruct(
    system: &TrilaterationSystem,
    anchors: &AnchorSet,
    link: &MonotoneLink,
    spd_row: &[Hop],
) -> Result<DVector<f64>> {
    if spd_row.contains(&UNREACHABLE) {
        return Err(Error::Disconnected);
    }
    let radii: Vec<f64> = spd_row.iter().map(|&h| link.evaluate_hop(h)).collect();
    reconstruct_from_radii(system, anchors, &radii)
}

/// Node-by-anchor truncated diffusion distances.
pub fn node_anchor_diffusion(emb: &DiffusionEmbedding, anchors: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(emb.node_count(), anchors.len(), |v, i| truncated_distance(emb, v, anchors[i]))
}

fn check_shapes(d_diff: &DMatrix<f64>, d_spd: &DistanceMatrix) -> Result<()> {
    if d_diff.shape() != (d_spd.rows(), d_spd.cols()) {
        return Err(Error::ShapeMismatch { expected: (d_spd.rows(), d_spd.cols()), got: d_diff.shape() });
    }
    if d_spd.has_unreachable() {
        return Err(Error::Disconnected);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrobeniusGap {
    /// `||D_diff - ψ(D_SPD)||_F`
    pub raw: f64,
    /// `raw / sqrt(rows · cols)`
    pub normalized: f64,
}

pub fn frobenius_gap(d_diff: &DMatrix<f64>, d_spd: &DistanceMatrix, link: &MonotoneLink) -> Result<FrobeniusGap> {
    check_shapes(d_diff, d_spd)?;
    let raw = d_spd
        .entries()
        .iter()
        .enumerate()
        .map(|(idx, &h)| {
            let (v, i) = (idx / d_spd.cols(), idx % d_spd.cols());
            (d_diff[(v, i)] - link.evaluate_hop(h)).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    Ok(FrobeniusGap { raw, normalized: raw / ((d_spd.rows() * d_spd.cols()) as f64).sqrt() })
}

/// Largest node-anchor link residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    /// Over every entry, using the clamped extension beyond the radius.
    pub max_all: f64,
    /// Over entries with hop distance at most the radius.
    pub max_in_radius: f64,
    /// Over all entries of nodes whose every anchor lies within the radius.
    pub max_in_radius_nodes: f64,
}

pub fn node_anchor_residuals(
    d_diff: &DMatrix<f64>,
    d_spd: &DistanceMatrix,
    link: &MonotoneLink,
    radius: Hop,
) -> Result<ResidualSummary> {
    check_shapes(d_diff, d_spd)?;
    let mut summary = ResidualSummary { max_all: 0.0, max_in_radius: 0.0, max_in_radius_nodes: 0.0 };
    for v in 0..d_spd.rows() {
        let row = d_spd.row(v);
        let node_in = row.iter().all(|&h| h <= radius);
        for (i, &h) in row.iter().enumerate() {
            let r = (d_diff[(v, i)] - link.evaluate_hop(h)).abs();
            summary.max_all = summary.max_all.max(r);
            if h <= radius {
                summary.max_in_radius = summary.max_in_radius.max(r);
            }
            if node_in {
                summary.max_in_radius_nodes = summary.max_in_radius_nodes.max(r);
            }
        }
    }
    Ok(summary)
}

/// `||D_diff - ψ(D_SPD)||_F ≤ δ sqrt(rows · cols)`.
pub fn frobenius_bound_holds(gap: &FrobeniusGap, delta: f64, rows: usize, cols: usize) -> bool {
    gap.raw <= delta * ((rows * cols) as f64).sqrt() * (1.0 + BOUND_SLACK)
}

/// Right-hand side `||A^{-1}||_op sqrt(m) (4 ρ_R δ + 2 δ²)`.
pub fn pointwise_bound(inverse_norm: f64, m: usize, rho_r: f64, delta: f64) -> f64 {
    inverse_norm * (m as f64).sqrt() * (4.0 * rho_r * delta + 2.0 * delta * delta)
}

/// Per-node reconstruction error against the pointwise bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeBound {
    pub node: usize,
    pub error: f64,
    pub bound_rhs: f64,
    /// Every anchor within the locality radius.
    pub in_radius: bool,
    pub violated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub nodes: Vec<NodeBound>,
    pub median_error: f64,
    pub cond: f64,
    pub inverse_norm: f64,
    pub rho_r: f64,
    pub delta: f64,
    pub violations: usize,
}

impl ReconstructionReport {
    /// `node_id,error,bound_rhs,in_radius` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["node_id", "error", "bound_rhs", "in_radius"])?;
        for nb in &self.nodes {
            w.write_record([
                nb.node.to_string(),
                nb.error.to_string(),
                nb.bound_rhs.to_string(),
                nb.in_radius.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Checks every node's reconstruction error against the pointwise bound with
/// radii `radii(v)` and link error level `delta`.
///
/// `rho_max` is the largest radius value the link produces on `[0, R]`; the
/// bound uses `ρ_R = rho_max + delta`. Only nodes flagged in `in_radius` can
/// violate.
pub fn check_bound_with_radii<F>(
    system: &TrilaterationSystem,
    anchors: &AnchorSet,
    emb: &DiffusionEmbedding,
    delta: f64,
    rho_max: f64,
    in_radius: &[bool],
    mut radii: F,
) -> Result<ReconstructionReport>
where
    F: FnMut(usize) -> Vec<f64>,
{
    let m = system.dimension();
    let rho_r = rho_max + delta;
    let bound_rhs = pointwise_bound(system.inverse_norm(), m, rho_r, delta);
    let anchor_scale = (0..anchors.len()).map(|i| anchors.position(i).norm()).fold(0.0, f64::max);
    let mut nodes = Vec::with_capacity(emb.node_count());
    for v in 0..emb.node_count() {
        let truth = emb.point(v);
        let estimate = reconstruct_from_radii(system, anchors, &radii(v))?;
        let error = (&truth - &estimate).norm();
        let slack = BOUND_SLACK * system.cond() * (truth.norm() + estimate.norm() + anchor_scale);
        nodes.push(NodeBound {
            node: v,
            error,
            bound_rhs,
            in_radius: in_radius[v],
            violated: in_radius[v] && error > bound_rhs + slack,
        });
    }
    let errors: Vec<f64> = nodes.iter().map(|nb| nb.error).collect();
    Ok(ReconstructionReport {
        median_error: median(&errors),
        violations: nodes.iter().filter(|nb| nb.violated).count(),
        nodes,
        cond: system.cond(),
        inverse_norm: system.inverse_norm(),
        rho_r,
        delta,
    })
}

/// Pointwise bound check with radii `ψ(SPD(a_i, v))`.
///
/// `delta` must dominate every link residual of in-radius nodes against the
/// anchors; smaller values violate the bound's hypothesis and are rejected.
#[allow(clippy::too_many_arguments)]
pub fn check_pointwise_bound(
    system: &TrilaterationSystem,
    anchors: &AnchorSet,
    emb: &DiffusionEmbedding,
    link: &MonotoneLink,
    d_spd: &DistanceMatrix,
    delta: f64,
    radius: Hop,
) -> Result<ReconstructionReport> {
    let d_diff = node_anchor_diffusion(emb, anchors.indices());
    let measured = node_anchor_residuals(&d_diff, d_spd, link, radius)?.max_in_radius_nodes;
    if delta < measured {
        return Err(Error::BoundPrecondition { delta, measured });
    }
    let in_radius: Vec<bool> = (0..d_spd.rows()).map(|v| d_spd.row(v).iter().all(|&h| h <= radius)).collect();
    check_bound_with_radii(system, anchors, emb, delta, link.max_on(radius as f64), &in_radius, |v| {
        d_spd.row(v).iter().map(|&h| link.evaluate_hop(h)).collect()
    })
}

/// Fraction of `trials` i.i.d. uniform draws of `m + 1` nodes (with
/// replacement) whose anchor difference matrix is singular.
pub fn degeneracy_probe(emb: &DiffusionEmbedding, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidParameter("degeneracy probe needs at least one trial".into()));
    }
    let n = emb.node_count();
    let m = emb.order();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut singular = 0usize;
    for _ in 0..trials {
        let draws: Vec<usize> = (0..=m).map(|_| rng.random_range(0..n)).collect();
        let positions = DMatrix::from_fn(m + 1, m, |i, j| emb.coords()[(draws[i], j)]);
        let (min, max) = singular_value_range(&anchor_difference_matrix(&positions));
        if is_singular(min, max) {
            singular += 1;
        }
    }
    Ok(singular as f64 / trials as f64)
}

/// Whether the anchor positions are affinely independent.
pub fn is_generic(positions: &DMatrix<f64>) -> bool {
    let (min, max) = singular_value_range(&anchor_difference_matrix(positions));
    !is_singular(min, max)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::graph::node_anchor_distances;
    use crate::linkage::{fit_isotonic, LinkSample};
    use crate::spectral::{truncated_embedding, EigenSystem, LaplacianMode};

    fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        Graph::from_simple_edges(n, &edges).unwrap()
    }

    fn line_embedding(values: &[f64]) -> DiffusionEmbedding {
        DiffusionEmbedding::from_coords(1.0, DMatrix::from_column_slice(values.len(), 1, values))
    }

    fn positions(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn count_n_selects_everything() {
        let g = path(6);
        for strategy in [AnchorStrategy::Uniform, AnchorStrategy::Fps { start: None }] {
            let mut nodes = select_anchor_nodes(&g, 6, &strategy, 3).unwrap();
            nodes.sort_unstable();
            assert_eq!(nodes, (0..6).collect::<Vec<_>>());
        }
        assert!(matches!(select_anchor_nodes(&g, 7, &AnchorStrategy::Uniform, 0), Err(Error::TooManyAnchors { .. })));
    }

    #[test]
    fn fps_on_path_picks_far_end() {
        let nodes = select_anchor_nodes(&path(10), 2, &AnchorStrategy::Fps { start: Some(0) }, 0).unwrap();
        assert_eq!(nodes, vec![0, 9]);
        let nodes = select_anchor_nodes(&path(10), 3, &AnchorStrategy::Fps { start: Some(0) }, 0).unwrap();
        assert_eq!(nodes, vec![0, 9, 4]);
        let split = Graph::from_simple_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(matches!(
            select_anchor_nodes(&split, 2, &AnchorStrategy::Fps { start: None }, 0),
            Err(Error::Disconnected)
        ));
    }

    #[test]
    fn uniform_is_deterministic_and_distinct() {
        let g = path(50);
        let a = select_anchor_nodes(&g, 9, &AnchorStrategy::Uniform, 42).unwrap();
        let b = select_anchor_nodes(&g, 9, &AnchorStrategy::Uniform, 42).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 9);
    }

    #[test]
    fn explicit_anchors_validated() {
        let g = path(5);
        assert_eq!(select_anchor_nodes(&g, 2, &AnchorStrategy::Explicit(vec![4, 1]), 0).unwrap(), vec![4, 1]);
        assert!(select_anchor_nodes(&g, 2, &AnchorStrategy::Explicit(vec![1, 1]), 0).is_err());
        assert!(select_anchor_nodes(&g, 2, &AnchorStrategy::Explicit(vec![1, 7]), 0).is_err());
    }

    #[test]
    fn unit_simplex_gives_identity() {
        let m = 4;
        let mut rows = DMatrix::zeros(m + 1, m);
        for i in 0..m {
            rows[(i, i)] = 0.5;
        }
        let anchors = AnchorSet::from_positions((0..=m).collect(), rows).unwrap();
        let sys = build_system(&anchors).unwrap();
        assert!((sys.matrix() - DMatrix::<f64>::identity(m, m)).amax() < 1e-15);
        assert_abs_diff_eq!(sys.cond(), 1.0, epsilon = 1e-12);
        assert!(sys.det_m_nonzero());
    }

    #[test]
    fn coincident_anchors_are_singular() {
        let anchors = AnchorSet::from_positions(vec![0, 1, 2], DMatrix::from_element(3, 2, 0.3)).unwrap();
        assert!(matches!(build_system(&anchors), Err(Error::SingularSystem { .. })));
        let wrong = AnchorSet::from_positions(vec![0, 1], DMatrix::from_element(2, 2, 0.3)).unwrap();
        assert!(matches!(build_system(&wrong), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn one_dimensional_system() {
        let anchors = AnchorSet::from_positions(vec![0, 1], positions(&[&[1.0], &[0.0]])).unwrap();
        let sys = build_system(&anchors).unwrap();
        assert_eq!(sys.matrix()[(0, 0)], 2.0);
        assert_eq!(sys.cond(), 1.0);

        let b = rhs(&anchors, &[1.0, 0.0]).unwrap();
        assert_eq!(b[0], 0.0);
        assert_eq!(sys.solve(&b).unwrap()[0], 0.0);

        let b = rhs(&anchors, &[0.0, 1.0]).unwrap();
        assert_eq!(b[0], 2.0);
        assert_eq!(reconstruct_from_radii(&sys, &anchors, &[0.0, 1.0]).unwrap()[0], 1.0);
    }

    #[test]
    fn rhs_vanishes_at_origin() {
        let anchors = AnchorSet::from_positions(vec![0, 1, 2], DMatrix::zeros(3, 2)).unwrap();
        assert_eq!(rhs(&anchors, &[0.4, 0.4, 0.4]).unwrap(), DVector::zeros(2));
        assert!(rhs(&anchors, &[0.4, 0.4]).is_err());
        assert!(rhs(&anchors, &[0.4, -0.4, 0.1]).is_err());
    }

    #[test]
    fn exact_radii_recover_points() {
        let g = crate::graph::generate_random_regular(40, 3, 5).unwrap();
        let eig = EigenSystem::from_graph(&g, LaplacianMode::Regular).unwrap();
        let emb = truncated_embedding(&eig, 1.0, 3).unwrap();
        let anchors = select_anchors(&g, &emb, 4, &AnchorStrategy::Uniform, 9, None).unwrap();
        let sys = build_system(&anchors).unwrap();
        for v in 0..40 {
            let radii: Vec<f64> = anchors.indices().iter().map(|&a| truncated_distance(&emb, a, v)).collect();
            let t = reconstruct_from_radii(&sys, &anchors, &radii).unwrap();
            assert!((t - emb.point(v)).norm() < 1e-12 * sys.cond());
        }
        let last = anchors.indices()[3];
        let radii: Vec<f64> = anchors.indices().iter().map(|&a| truncated_distance(&emb, a, last)).collect();
        let t = reconstruct_from_radii(&sys, &anchors, &radii).unwrap();
        assert!((t - anchors.position(3)).norm() < 1e-12 * sys.cond());
    }

    #[test]
    fn exact_radii_have_zero_bound_and_zero_error() {
        let g = crate::graph::generate_random_regular(30, 4, 1).unwrap();
        let eig = EigenSystem::from_graph(&g, LaplacianMode::Regular).unwrap();
        let emb = truncated_embedding(&eig, 1.0, 2).unwrap();
        let anchors = select_anchors(&g, &emb, 3, &AnchorStrategy::Uniform, 2, None).unwrap();
        let sys = build_system(&anchors).unwrap();
        let report = check_bound_with_radii(&sys, &anchors, &emb, 0.0, 1.0, &[true; 30], |v| {
            anchors.indices().iter().map(|&a| truncated_distance(&emb, a, v)).collect()
        })
        .unwrap();
        assert_eq!(report.nodes[0].bound_rhs, 0.0);
        assert_eq!(report.violations, 0);
        assert!(report.nodes.iter().all(|nb| nb.error < 1e-12));
    }

    #[test]
    fn pointwise_bound_precondition_and_check() {
        let g = crate::graph::generate_random_regular(60, 3, 11).unwrap();
        let eig = EigenSystem::from_graph(&g, LaplacianMode::Regular).unwrap();
        let emb = truncated_embedding(&eig, 1.0, 3).unwrap();
        let anchors = select_anchors(&g, &emb, 4, &AnchorStrategy::Uniform, 4, None).unwrap();
        let sys = build_system(&anchors).unwrap();
        let d_spd = node_anchor_distances(&g, anchors.indices()).unwrap();
        let d_diff = node_anchor_diffusion(&emb, anchors.indices());
        let samples: Vec<LinkSample> = (0..60)
            .flat_map(|v| (0..4).map(move |i| (v, i)))
            .filter(|&(v, i)| d_spd.get(v, i) > 0)
            .map(|(v, i)| LinkSample { hop: d_spd.get(v, i), value: d_diff[(v, i)] })
            .collect();
        let link = fit_isotonic(&samples).unwrap().with_origin();
        let radius = 6;
        let measured = node_anchor_residuals(&d_diff, &d_spd, &link, radius).unwrap();
        assert!(measured.max_in_radius_nodes > 0.0);

        let report =
            check_pointwise_bound(&sys, &anchors, &emb, &link, &d_spd, measured.max_in_radius_nodes, radius).unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.nodes.iter().filter(|nb| nb.in_radius).all(|nb| nb.error <= nb.bound_rhs));

        let halved = measured.max_in_radius_nodes / 2.0;
        assert!(matches!(
            check_pointwise_bound(&sys, &anchors, &emb, &link, &d_spd, halved, radius),
            Err(Error::BoundPrecondition { .. })
        ));

        let gap = frobenius_gap(&d_diff, &d_spd, &link).unwrap();
        assert!(frobenius_bound_holds(&gap, measured.max_all, 60, 4));
        assert_abs_diff_eq!(gap.normalized, gap.raw / 240f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn interpolating_link_has_zero_gap() {
        // path 0-1-2 embedded on a line so that hop distance equals coordinate gap
        let g = path(3);
        let emb = line_embedding(&[0.0, 1.0, 2.0]);
        let d_spd = node_anchor_distances(&g, &[0, 2]).unwrap();
        let d_diff = node_anchor_diffusion(&emb, &[0, 2]);
        let link = MonotoneLink::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0]).unwrap();
        let gap = frobenius_gap(&d_diff, &d_spd, &link).unwrap();
        assert_eq!(gap.raw, 0.0);
        let bad = DMatrix::zeros(2, 2);
        assert!(matches!(frobenius_gap(&bad, &d_spd, &link), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn degeneracy_of_collapsed_embedding() {
        let emb = DiffusionEmbedding::from_coords(1.0, DMatrix::from_element(10, 2, 0.25));
        assert_eq!(degeneracy_probe(&emb, 200, 1).unwrap(), 1.0);
        assert!(degeneracy_probe(&emb, 0, 1).is_err());
    }

    #[test]
    fn degeneracy_matches_collision_probability() {
        // m = 1: singular iff both draws land on equal values.
        let values = [0.0, 0.0, 1.0, 2.0, 2.0, 2.0];
        let n = values.len();
        let exact = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| values[i] == values[j]).count()
            as f64
            / (n * n) as f64;
        assert_abs_diff_eq!(exact, 14.0 / 36.0, epsilon = 1e-15);
        let trials = 20_000;
        let eta = degeneracy_probe(&line_embedding(&values), trials, 8).unwrap();
        let sd = (exact * (1.0 - exact) / trials as f64).sqrt();
        assert!((eta - exact).abs() < 5.0 * sd, "eta {eta} vs {exact}");
    }

    #[test]
    fn jitter_makes_anchors_generic() {
        let collapsed = DMatrix::from_element(4, 3, 0.1);
        assert!(!is_generic(&collapsed));
        for seed in 0..1000 {
            let set =
                AnchorSet::from_positions(vec![0, 1, 2, 3], collapsed.clone()).unwrap().jittered(1e-3, seed).unwrap();
            assert!(is_generic(set.positions()));
            assert!(build_system(&set).unwrap().det_m_nonzero());
        }
    }

    #[test]
    fn a_is_twice_m_transposed() {
        let p = positions(&[&[0.3, -0.1], &[0.2, 0.5], &[-0.4, 0.0]]);
        let anchors = AnchorSet::from_positions(vec![0, 1, 2], p.clone()).unwrap();
        let sys = build_system(&anchors).unwrap();
        assert_eq!(sys.matrix(), &(anchor_difference_matrix(&p).transpose() * 2.0));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
