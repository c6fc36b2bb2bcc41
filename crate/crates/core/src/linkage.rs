//! Monotone link between hop distance and diffusion distance.
//!
//! Samples `(SPD(u, v), d(u, v))` within a locality radius are fitted by L2
//! isotonic regression (pool adjacent violators). The fitted step values are
//! joined by linear interpolation and clamped to the end values outside the
//! fitted range, which makes the link total on `[0, ∞)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{bfs_distances, is_connected, Graph, Hop};
use crate::spectral::{truncated_distance, DiffusionEmbedding};

/// Slope added by [`MonotoneLink::strictly_increasing`] to break flat runs.
pub const TIE_BREAK_SLOPE: f64 = 1e-9;

/// One `(hop distance, target distance)` observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSample {
    pub hop: Hop,
    pub value: f64,
}

/// Which node pairs feed the link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairScope {
    /// Every unordered pair `{u, v}`, `u != v`.
    AllPairs,
    /// Every `(v, a)` with `a` an anchor and `v != a`.
    NodeAnchor(Vec<usize>),
}

/// Locality radius `⌈log n⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusRule {
    NaturalLog,
    Log2,
    Log10,
    Fixed(Hop),
}

impl RadiusRule {
    pub fn radius(self, n: usize) -> Hop {
        let n = n.max(2) as f64;
        let r = match self {
            Self::NaturalLog => n.ln(),
            Self::Log2 => n.log2(),
            Self::Log10 => n.log10(),
            Self::Fixed(r) => return r,
        };
        (r.ceil() as Hop).max(1)
    }

    pub fn name(self) -> String {
        match self {
            Self::NaturalLog => "ln".into(),
            Self::Log2 => "log2".into(),
            Self::Log10 => "log10".into(),
            Self::Fixed(r) => r.to_string(),
        }
    }
}

impl std::str::FromStr for RadiusRule {
    type Err = Error;

    /// `ln`, `log2`, `log10`, or a fixed hop count.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ln" | "natural_log" => Ok(Self::NaturalLog),
            "log2" => Ok(Self::Log2),
            "log10" => Ok(Self::Log10),
            other => other
                .parse()
                .map(Self::Fixed)
                .map_err(|_| Error::InvalidParameter(format!("unknown radius rule {other:?}"))),
        }
    }
}

/// Samples pairs in `scope` whose hop distance lies in `1..=radius`, using
/// `target(u, v)` as the regression target.
pub fn collect_pairs_with<F>(g: &Graph, radius: Hop, scope: &PairScope, mut target: F) -> Result<Vec<LinkSample>>
where
    F: FnMut(usize, usize) -> f64,
{
    if radius < 1 {
        return Err(Error::InvalidParameter("radius must be at least 1".into()));
    }
    if !is_connected(g) {
        return Err(Error::Disconnected);
    }
    let n = g.node_count();
    let mut samples = Vec::new();
    match scope {
        PairScope::AllPairs => {
            for u in 0..n {
                let dist = bfs_distances(g, u)?;
                for v in u + 1..n {
                    if dist[v] <= radius {
                        samples.push(LinkSample { hop: dist[v], value: target(u, v) });
                    }
                }
            }
        }
        PairScope::NodeAnchor(anchors) => {
            for &a in anchors {
                let dist = bfs_distances(g, a)?;
                for v in 0..n {
                    if v != a && dist[v] <= radius {
                        samples.push(LinkSample { hop: dist[v], value: target(v, a) });
                    }
                }
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::NoPairsInRadius(radius));
    }
    Ok(samples)
}

/// Samples of truncated diffusion distance against hop distance.
pub fn collect_link_pairs(
    g: &Graph,
    emb: &DiffusionEmbedding,
    radius: Hop,
    scope: &PairScope,
) -> Result<Vec<LinkSample>> {
    if emb.node_count() != g.node_count() {
        return Err(Error::ShapeMismatch {
            expected: (g.node_count(), emb.order()),
            got: (emb.node_count(), emb.order()),
        });
    }
    collect_pairs_with(g, radius, scope, |u, v| truncated_distance(emb, u, v))
}

/// Nondecreasing piecewise-linear link through fitted step values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneLink {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    radius: f64,
}

impl MonotoneLink {
    /// Builds a link from ascending distinct breakpoints and nondecreasing values.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::InvalidParameter("link needs matching nonempty breakpoints and values".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) || breakpoints[0] < 0.0 {
            return Err(Error::InvalidParameter("breakpoints must be nonnegative and strictly ascending".into()));
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("link values must be nondecreasing".into()));
        }
        let radius = *breakpoints.last().unwrap();
        Ok(Self { breakpoints, values, radius })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest hop distance covered by the fit.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Pins `ψ(0) = 0` when the fit starts above zero with nonnegative values.
    ///
    /// A node is at distance zero from itself under both metrics, so the
    /// self-pair is an exact sample that fitting leaves out.
    pub fn with_origin(mut self) -> Self {
        if self.breakpoints[0] > 0.0 && self.values[0] >= 0.0 {
            self.breakpoints.insert(0, 0.0);
            self.values.insert(0, 0.0);
        }
        self
    }

    /// The same link with `TIE_BREAK_SLOPE * (d - d_0)` added, so that flat
    /// runs become strictly increasing.
    pub fn strictly_increasing(&self) -> Self {
        let d0 = self.breakpoints[0];
        let values = self.breakpoints.iter().zip(&self.values).map(|(d, v)| v + TIE_BREAK_SLOPE * (d - d0)).collect();
        Self { breakpoints: self.breakpoints.clone(), values, radius: self.radius }
    }

    /// `ψ(d)`: exact at breakpoints, linear between, clamped outside.
    pub fn evaluate(&self, d: f64) -> f64 {
        let bp = &self.breakpoints;
        if d <= bp[0] {
            return self.values[0];
        }
        let last = bp.len() - 1;
        if d >= bp[last] {
            return self.values[last];
        }
        let hi = bp.partition_point(|&b| b <= d);
        let lo = hi - 1;
        if bp[lo] == d {
            return self.values[lo];
        }
        let w = (d - bp[lo]) / (bp[hi] - bp[lo]);
        self.values[lo] + w * (self.values[hi] - self.values[lo])
    }

    pub fn evaluate_hop(&self, hop: Hop) -> f64 {
        self.evaluate(hop as f64)
    }

    /// `max_{0 ≤ d ≤ radius} ψ(d)`.
    pub fn max_on(&self, radius: f64) -> f64 {
        self.evaluate(radius.max(0.0))
    }
}

/// Weighted PAVA: the nondecreasing sequence closest to `targets` in weighted
/// least squares. Inputs are per-level means in level order.
pub fn pava(targets: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(targets.len(), weights.len());
    // blocks: (weighted mean, total weight, number of levels)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(targets.len());
    for (&y, &w) in targets.iter().zip(weights) {
        let mut block = (y, w, 1);
        while let Some(&(prev_mean, prev_w, prev_len)) = blocks.last() {
            if prev_mean <= block.0 {
                break;
            }
            blocks.pop();
            let total = prev_w + block.1;
            block = ((prev_mean * prev_w + block.0 * block.1) / total, total, prev_len + block.2);
        }
        blocks.push(block);
    }
    blocks.into_iter().flat_map(|(mean, _, len)| std::iter::repeat_n(mean, len)).collect()
}

/// L2 isotonic regression of sample values on hop distance.
///
/// Samples sharing a hop value are averaged first and weighted by their count.
pub fn fit_isotonic(samples: &[LinkSample]) -> Result<MonotoneLink> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("cannot fit a link to zero samples".into()));
    }
    let mut levels: BTreeMap<Hop, (f64, usize)> = BTreeMap::new();
    for s in samples {
        let entry = levels.entry(s.hop).or_insert((0.0, 0));
        entry.0 += s.value;
        entry.1 += 1;
    }
    let breakpoints: Vec<f64> = levels.keys().map(|&h| h as f64).collect();
    let means: Vec<f64> = levels.values().map(|&(sum, c)| sum / c as f64).collect();
    let weights: Vec<f64> = levels.values().map(|&(_, c)| c as f64).collect();
    MonotoneLink::new(breakpoints, pava(&means, &weights))
}

/// Residual summary of a link over a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkageReport {
    /// `max |y - ψ(hop)|`
    pub delta_hat: f64,
    pub residual_rms: f64,
    pub pair_count: usize,
    pub radius: f64,
}

pub fn linkage_error(link: &MonotoneLink, samples: &[LinkSample]) -> Result<LinkageReport> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("linkage error needs samples".into()));
    }
    let mut max = 0.0f64;
    let mut sum_sq = 0.0;
    for s in samples {
        let r = (s.value - link.evaluate_hop(s.hop)).abs();
        max = max.max(r);
        sum_sq += r * r;
    }
    Ok(LinkageReport {
        delta_hat: max,
        residual_rms: (sum_sq / samples.len() as f64).sqrt(),
        pair_count: samples.len(),
        radius: link.radius(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialKind {
    Identity,
    ExpNeg,
    Log1p,
}

impl RadialKind {
    pub const ALL: [RadialKind; 3] = [Self::Identity, Self::ExpNeg, Self::Log1p];

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::ExpNeg => "exp_neg",
            Self::Log1p => "log1p",
        }
    }
}

impl std::str::FromStr for RadialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "id" => Ok(Self::Identity),
            "exp_neg" | "exp" => Ok(Self::ExpNeg),
            "log1p" => Ok(Self::Log1p),
            other => Err(Error::InvalidParameter(format!("unknown radial transform {other:?}"))),
        }
    }
}

/// Rescales `d` by `median_scale` and applies the radial map.
pub fn radial_transform(d: f64, kind: RadialKind, median_scale: f64) -> Result<f64> {
    if !(median_scale > 0.0) {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {median_scale}")));
    }
    if !(d >= 0.0) {
        return Err(Error::InvalidParameter(format!("distance must be nonnegative, got {d}")));
    }
    let x = d / median_scale;
    Ok(match kind {
        RadialKind::Identity => x,
        RadialKind::ExpNeg => (-x).exp(),
        RadialKind::Log1p => x.ln_1p(),
    })
}
