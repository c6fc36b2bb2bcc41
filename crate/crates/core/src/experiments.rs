//! Experiment cells shared by the command-line tools and the acceptance suite.
//!
//! Every cell derives its own seed from the root seed and a textual cell key,
//! so a cell can be re-run alone and execution order never changes results.

use serde::{Deserialize, Serialize};

use crate::encodings::emit_de;
use crate::error::{Error, Result};
use crate::graph::{generate_molecule_like, generate_random_regular, is_connected, node_anchor_distances, Graph};
use crate::linkage::{collect_link_pairs, fit_isotonic, linkage_error, PairScope, RadialKind, RadiusRule};
use crate::nystrom::{
    approximate_diffusion, fit_kernel_link, reference_kernel, ApproxOutcome, CrossMode, NystromConfig,
};
use crate::spectral::{truncated_embedding, EigenSystem, LaplacianMode};
use crate::trilateration::{
    build_system, check_pointwise_bound, frobenius_bound_holds, frobenius_gap, median, node_anchor_diffusion,
    node_anchor_residuals, select_anchor_nodes, select_anchors, AnchorStrategy,
};

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn stable_hash(key: &str) -> u64 {
    key.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Per-cell seed: `root XOR hash(key)`.
pub fn cell_seed(root: u64, key: &str) -> u64 {
    root ^ stable_hash(key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkScope {
    AllPairs,
    NodeAnchor,
}

/// Random-regular validation study parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrgConfig {
    pub ns: Vec<usize>,
    pub r: usize,
    pub t: f64,
    pub m: usize,
    pub radius_rule: RadiusRule,
    pub seeds: usize,
    pub root_seed: u64,
    pub link_scope: LinkScope,
}

impl Default for RrgConfig {
    fn default() -> Self {
        Self {
            ns: vec![256, 512, 1024, 2048],
            r: 6,
            t: 1.0,
            m: 8,
            radius_rule: RadiusRule::NaturalLog,
            seeds: 3,
            root_seed: 0,
            link_scope: LinkScope::AllPairs,
        }
    }
}

/// One `(n, replicate)` cell of the random-regular study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrgRow {
    pub n: usize,
    pub r: usize,
    pub t: f64,
    pub m: usize,
    #[serde(rename = "R")]
    pub radius: u32,
    pub replicate: usize,
    pub seed: u64,
    pub delta_hat: f64,
    pub residual_rms: f64,
    pub pair_count: usize,
    pub frob_gap: f64,
    pub frob_gap_raw: f64,
    /// Largest node-anchor residual over every entry (clamped extension).
    pub delta_node_anchor: f64,
    /// Largest node-anchor residual over nodes with every anchor in radius.
    pub delta_in_radius: f64,
    pub median_tri_error: f64,
    pub cond_a: f64,
    pub in_radius_nodes: usize,
    pub pointwise_violations: usize,
    pub frob_bound_holds: bool,
    pub error: String,
    /// Per-node reconstruction errors, kept for pooled medians.
    #[serde(skip)]
    pub node_errors: Vec<f64>,
}

impl RrgRow {
    fn failed(cfg: &RrgConfig, n: usize, replicate: usize, seed: u64, err: &Error) -> Self {
        Self {
            n,
            r: cfg.r,
            t: cfg.t,
            m: cfg.m,
            radius: cfg.radius_rule.radius(n),
            replicate,
            seed,
            delta_hat: f64::NAN,
            residual_rms: f64::NAN,
            pair_count: 0,
            frob_gap: f64::NAN,
            frob_gap_raw: f64::NAN,
            delta_node_anchor: f64::NAN,
            delta_in_radius: f64::NAN,
            median_tri_error: f64::NAN,
            cond_a: f64::NAN,
            in_radius_nodes: 0,
            pointwise_violations: 0,
            frob_bound_holds: false,
            error: err.to_string(),
            node_errors: Vec::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_empty()
    }
}

pub fn rrg_cell_key(n: usize, replicate: usize) -> String {
    format!("rrg/n={n}/rep={replicate}")
}

/// Runs one cell; failures are captured in the row's `error` field.
pub fn rrg_cell(cfg: &RrgConfig, n: usize, replicate: usize) -> RrgRow {
    let seed = cell_seed(cfg.root_seed, &rrg_cell_key(n, replicate));
    rrg_cell_inner(cfg, n, replicate, seed).unwrap_or_else(|err| {
        log::warn!("rrg cell n={n} replicate={replicate} failed: {err}");
        RrgRow::failed(cfg, n, replicate, seed, &err)
    })
}

fn rrg_cell_inner(cfg: &RrgConfig, n: usize, replicate: usize, seed: u64) -> Result<RrgRow> {
    let g = generate_random_regular(n, cfg.r, seed)?;
    if !is_connected(&g) {
        return Err(Error::Disconnected);
    }
    let eig = EigenSystem::from_graph(&g, LaplacianMode::Regular)?;
    let emb = truncated_embedding(&eig, cfg.t, cfg.m)?;
    let radius = cfg.radius_rule.radius(n);

    let anchors = select_anchors(&g, &emb, cfg.m + 1, &AnchorStrategy::Uniform, cell_seed(seed, "anchors"), None)?;
    let scope = match cfg.link_scope {
        LinkScope::AllPairs => PairScope::AllPairs,
        LinkScope::NodeAnchor => PairScope::NodeAnchor(anchors.indices().to_vec()),
    };
    let samples = collect_link_pairs(&g, &emb, radius, &scope)?;
    let link = fit_isotonic(&samples)?.with_origin();
    let report = linkage_error(&link, &samples)?;

    let d_spd = node_anchor_distances(&g, anchors.indices())?;
    let d_diff = node_anchor_diffusion(&emb, anchors.indices());
    let gap = frobenius_gap(&d_diff, &d_spd, &link)?;
    let residuals = node_anchor_residuals(&d_diff, &d_spd, &link, radius)?;

    let system = build_system(&anchors)?;
    let recon = check_pointwise_bound(&system, &anchors, &emb, &link, &d_spd, residuals.max_in_radius_nodes, radius)?;

    Ok(RrgRow {
        n,
        r: cfg.r,
        t: cfg.t,
        m: cfg.m,
        radius,
        replicate,
        seed,
        delta_hat: report.delta_hat,
        residual_rms: report.residual_rms,
        pair_count: report.pair_count,
        frob_gap: gap.normalized,
        frob_gap_raw: gap.raw,
        delta_node_anchor: residuals.max_all,
        delta_in_radius: residuals.max_in_radius_nodes,
        median_tri_error: recon.median_error,
        cond_a: system.cond(),
        in_radius_nodes: recon.nodes.iter().filter(|nb| nb.in_radius).count(),
        pointwise_violations: recon.violations,
        frob_bound_holds: frobenius_bound_holds(&gap, residuals.max_all, n, cfg.m + 1),
        error: String::new(),
        node_errors: recon.nodes.iter().map(|nb| nb.error).collect(),
    })
}

/// Mean, sample standard deviation, and medians per `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrgSummary {
    pub n: usize,
    #[serde(rename = "R")]
    pub radius: u32,
    pub cells: usize,
    pub failed: usize,
    pub delta_hat_mean: f64,
    pub delta_hat_std: f64,
    pub frob_gap_mean: f64,
    pub frob_gap_std: f64,
    pub median_tri_error: f64,
    pub median_cond_a: f64,
    pub pointwise_violations: usize,
    pub frob_bound_failures: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Aggregates rows by `n` (ascending). The error median pools every node of
/// every successful cell; the condition-number median is over cells.
pub fn summarize_rrg(rows: &[RrgRow]) -> Vec<RrgSummary> {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let cells: Vec<&RrgRow> = rows.iter().filter(|r| r.n == n).collect();
            let ok: Vec<&RrgRow> = cells.iter().copied().filter(|r| r.is_ok()).collect();
            let pick = |f: fn(&RrgRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (delta_hat_mean, delta_hat_std) = mean_std(&pick(|r| r.delta_hat));
            let (frob_gap_mean, frob_gap_std) = mean_std(&pick(|r| r.frob_gap));
            RrgSummary {
                n,
                radius: cells[0].radius,
                cells: cells.len(),
                failed: cells.len() - ok.len(),
                delta_hat_mean,
                delta_hat_std,
                frob_gap_mean,
                frob_gap_std,
                median_tri_error: median(&ok.iter().flat_map(|r| r.node_errors.iter().copied()).collect::<Vec<_>>()),
                median_cond_a: median(&pick(|r| r.cond_a)),
                pointwise_violations: ok.iter().map(|r| r.pointwise_violations).sum(),
                frob_bound_failures: ok.iter().filter(|r| !r.frob_bound_holds).count(),
            }
        })
        .collect()
}

/// Runs every cell of the study in key order.
pub fn run_rrg(cfg: &RrgConfig) -> Vec<RrgRow> {
    cfg.ns.iter().flat_map(|&n| (0..cfg.seeds).map(move |rep| (n, rep))).map(|(n, rep)| rrg_cell(cfg, n, rep)).collect()
}

/// Diffusion-approximation settings for one corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub nystrom: NystromConfig,
    pub radius_rule: RadiusRule,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self { nystrom: NystromConfig::default(), radius_rule: RadiusRule::NaturalLog }
    }
}

/// One graph's Nyström comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionRow {
    pub graph_id: String,
    pub n: usize,
    pub k: usize,
    pub lambda: f64,
    pub mode: String,
    pub rel_kernel_frob: f64,
    pub coord_mse: f64,
    pub dist_pearson: f64,
    #[serde(rename = "log10_cond_KAA")]
    pub log10_cond_kaa: f64,
    pub cond_a_tri: f64,
    pub link_delta_hat: f64,
}

/// Nyström comparison on one connected graph. `k` is capped at the node count.
pub fn diffusion_graph(graph_id: &str, g: &Graph, cfg: &DiffusionConfig) -> Result<(DiffusionRow, ApproxOutcome)> {
    if !is_connected(g) {
        return Err(Error::Disconnected);
    }
    let n = g.node_count();
    let nystrom = NystromConfig { k: cfg.nystrom.k.min(n), ..cfg.nystrom };
    let eig = EigenSystem::from_graph(g, LaplacianMode::for_graph(g))?;
    let anchors = select_anchor_nodes(g, nystrom.k, &AnchorStrategy::Fps { start: None }, 0)?;
    let radius = cfg.radius_rule.radius(n);

    let reference = reference_kernel(&eig, nystrom.t)?;
    let link = fit_kernel_link(g, &reference, radius)?;
    let sq = crate::nystrom::kernel_squared_distances(&reference);
    let samples = crate::linkage::collect_pairs_with(g, radius, &PairScope::AllPairs, |u, v| sq[(u, v)].sqrt())?;
    let link_delta_hat = linkage_error(&link, &samples)?.delta_hat;

    let outcome = approximate_diffusion(g, &eig, &nystrom, &anchors, Some(&link), radius)?;
    let r = &outcome.report;
    Ok((
        DiffusionRow {
            graph_id: graph_id.to_string(),
            n,
            k: nystrom.k,
            lambda: r.lambda,
            mode: nystrom.cross_mode.name().to_string(),
            rel_kernel_frob: r.rel_kernel_frob,
            coord_mse: r.coord_mse,
            dist_pearson: r.dist_pearson,
            log10_cond_kaa: r.cond_kaa.log10(),
            cond_a_tri: r.cond_a_tri.unwrap_or(f64::NAN),
            link_delta_hat,
        },
        outcome,
    ))
}

/// One cell of the ψ × k ablation grid, aggregated over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub psi: String,
    pub k: usize,
    pub mode: String,
    pub graphs: usize,
    pub de_mean: f64,
    pub de_std: f64,
    pub median_rel_kernel_frob: f64,
    pub median_dist_pearson: f64,
    pub median_coord_mse: f64,
    pub median_link_delta_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub psi: Vec<RadialKind>,
    pub ks: Vec<usize>,
    pub diffusion: DiffusionConfig,
}

impl AblationConfig {
    pub fn cells(&self) -> Result<Vec<(RadialKind, usize)>> {
        if self.psi.is_empty() || self.ks.is_empty() {
            return Err(Error::InvalidParameter("ablation grid is empty".into()));
        }
        Ok(self.psi.iter().flat_map(|&p| self.ks.iter().map(move |&k| (p, k))).collect())
    }
}

/// Evaluates one grid cell over `corpus` (graph id, graph); disconnected
/// graphs are skipped.
pub fn ablation_cell(
    corpus: &[(String, Graph)],
    psi: RadialKind,
    k: usize,
    cfg: &DiffusionConfig,
) -> Result<AblationRow> {
    let diffusion = DiffusionConfig { nystrom: NystromConfig { k, ..cfg.nystrom }, ..*cfg };
    let mut features = Vec::new();
    let mut rows = Vec::new();
    for (id, g) in corpus.iter().filter(|(_, g)| is_connected(g)) {
        let anchors = select_anchor_nodes(g, k.min(g.node_count()), &AnchorStrategy::Fps { start: None }, 0)?;
        features.extend(emit_de(g, &anchors, psi, None)?.data.iter().copied());
        rows.push(diffusion_graph(id, g, &diffusion)?.0);
    }
    if rows.is_empty() {
        return Err(Error::InvalidParameter("no connected graphs in corpus".into()));
    }
    let (de_mean, de_std) = mean_std(&features);
    let med = |f: fn(&DiffusionRow) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
    Ok(AblationRow {
        psi: psi.name().to_string(),
        k,
        mode: cfg.nystrom.cross_mode.name().to_string(),
        graphs: rows.len(),
        de_mean,
        de_std,
        median_rel_kernel_frob: med(|r| r.rel_kernel_frob),
        median_dist_pearson: med(|r| r.dist_pearson),
        median_coord_mse: med(|r| r.coord_mse),
        median_link_delta_hat: med(|r| r.link_delta_hat),
    })
}

/// `count` connected molecule-like graphs (max degree 4, one ring closure per
/// ten atoms) with sizes drawn from `n_min..=n_max`. Graph `i` is named
/// `mol_{i:03}` and seeded from the key `corpus/{i}`.
pub fn molecule_corpus(count: usize, n_min: usize, n_max: usize, root: u64) -> Result<Vec<(String, Graph)>> {
    if n_min < 2 || n_max < n_min {
        return Err(Error::InvalidParameter(format!("bad size range {n_min}..={n_max}")));
    }
    (0..count)
        .map(|i| {
            let seed = cell_seed(root, &format!("corpus/{i}"));
            let n = n_min + (stable_hash(&seed.to_string()) % (n_max - n_min + 1) as u64) as usize;
            Ok((format!("mol_{i:03}"), generate_molecule_like(n, n / 10, 4, seed)?))
        })
        .collect()
}

/// Default sweep: all three radial maps at `k = 16`.
pub fn default_psi_sweep() -> AblationConfig {
    AblationConfig {
        psi: RadialKind::ALL.to_vec(),
        ks: vec![16],
        diffusion: DiffusionConfig {
            nystrom: NystromConfig { cross_mode: CrossMode::DistanceDriven, ..Default::default() },
            ..Default::default()
        },
    }
}
