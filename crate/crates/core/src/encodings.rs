//! Per-node positional features: distance encodings (DE), Laplacian
//! eigenvectors (LapPE), random-walk return probabilities (RWSE), and heat
//! kernel signatures (HKS).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::graph::{node_anchor_distances, Graph, UNREACHABLE};
use crate::linkage::{radial_transform, RadialKind};
use crate::spectral::{EigenSystem, TIE_TOLERANCE};

pub const RWSE_STEPS: [usize; 5] = [1, 2, 4, 8, 16];
pub const HKS_TIMES: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncodingKind {
    #[serde(rename = "DE")]
    De,
    #[serde(rename = "LapPE")]
    LapPe,
    #[serde(rename = "RWSE")]
    Rwse,
    #[serde(rename = "HKS")]
    Hks,
}

impl EncodingKind {
    pub fn prefix(self) -> &'static str {
        match self {
            Self::De => "de",
            Self::LapPe => "lappe",
            Self::Rwse => "rwse",
            Self::Hks => "hks",
        }
    }
}

impl std::str::FromStr for EncodingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "de" => Ok(Self::De),
            "lappe" => Ok(Self::LapPe),
            "rwse" => Ok(Self::Rwse),
            "hks" => Ok(Self::Hks),
            other => Err(Error::InvalidParameter(format!("unknown encoding kind {other:?}"))),
        }
    }
}

/// Named per-node feature columns plus the parameters that produced them.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub kind: EncodingKind,
    pub columns: Vec<String>,
    pub data: DMatrix<f64>,
    pub params: Value,
}

impl FeatureTable {
    fn new(kind: EncodingKind, data: DMatrix<f64>, params: Value) -> Result<Self> {
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite feature value {bad}")));
        }
        let columns = (0..data.ncols()).map(|j| format!("{}_{j}", kind.prefix())).collect();
        Ok(Self { kind, columns, data, params })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    /// `node_id,<kind>_0,...` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["node_id".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for v in 0..self.rows() {
            let mut record = vec![v.to_string()];
            record.extend(self.data.row(v).iter().map(|x| x.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn sidecar(&self) -> Value {
        json!({
            "kind": self.kind,
            "rows": self.rows(),
            "columns": self.columns,
            "params": self.params,
        })
    }

    /// Writes the CSV to `path` and the JSON sidecar next to it; returns the
    /// sidecar path. `extra` is merged into the sidecar's top level.
    pub fn write_files(&self, path: &Path, extra: Option<&Value>) -> Result<PathBuf> {
        let file = fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))?;
        let mut sidecar = self.sidecar();
        if let (Some(Value::Object(extra)), Value::Object(obj)) = (extra, &mut sidecar) {
            obj.extend(extra.clone());
        }
        let side_path = path.with_extension("json");
        fs::write(&side_path, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(side_path)
    }
}

/// Per-column mean and standard deviation fitted on a training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Free-form description of where the statistics came from.
    pub source: String,
}

impl StandardizeStats {
    /// Pools the rows of every table (population moments).
    pub fn fit(tables: &[&FeatureTable], source: impl Into<String>) -> Result<Self> {
        let cols = tables
            .first()
            .map(|t| t.data.ncols())
            .ok_or_else(|| Error::InvalidParameter("standardization needs at least one table".into()))?;
        if tables.iter().any(|t| t.data.ncols() != cols) {
            return Err(Error::InvalidParameter("tables disagree on column count".into()));
        }
        let total: usize = tables.iter().map(|t| t.rows()).sum();
        if total == 0 {
            return Err(Error::InvalidParameter("standardization needs at least one row".into()));
        }
        let mut mean = vec![0.0; cols];
        for t in tables {
            for (j, col) in t.data.column_iter().enumerate() {
                mean[j] += col.sum();
            }
        }
        mean.iter_mut().for_each(|m| *m /= total as f64);
        let mut var = vec![0.0; cols];
        for t in tables {
            for (j, col) in t.data.column_iter().enumerate() {
                var[j] += col.iter().map(|x| (x - mean[j]).powi(2)).sum::<f64>();
            }
        }
        Ok(Self { mean, std: var.into_iter().map(|v| (v / total as f64).sqrt()).collect(), source: source.into() })
    }

    /// `(x - mean) / std`; constant training columns are only centered.
    pub fn apply(&self, data: &mut DMatrix<f64>) -> Result<()> {
        if data.ncols() != self.mean.len() {
            return Err(Error::ShapeMismatch { expected: (data.nrows(), self.mean.len()), got: data.shape() });
        }
        for (j, mut col) in data.column_iter_mut().enumerate() {
            let scale = if self.std[j] > 0.0 { self.std[j] } else { 1.0 };
            col.iter_mut().for_each(|x| *x = (*x - self.mean[j]) / scale);
        }
        Ok(())
    }
}

/// Median of the nonzero finite entries.
fn median_nonzero(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.filter(|&x| x > 0.0 && x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

/// Distance encoding: hop distances to `anchors`, divided by the graph's
/// median nonzero node-anchor distance, passed through `kind`, then
/// standardized with `stats` when given.
///
/// Pairs in different components are assigned hop distance `n`.
pub fn emit_de(
    g: &Graph,
    anchors: &[usize],
    kind: RadialKind,
    stats: Option<&StandardizeStats>,
) -> Result<FeatureTable> {
    let spd = node_anchor_distances(g, anchors)?;
    let n = g.node_count();
    let hop = |h: u32| if h == UNREACHABLE { n as f64 } else { h as f64 };
    let scale = median_nonzero(spd.entries().iter().map(|&h| hop(h)))
        .ok_or_else(|| Error::InvalidParameter("all node-anchor distances are zero".into()))?;
    let mut data = DMatrix::zeros(n, anchors.len());
    for v in 0..n {
        for (i, &h) in spd.row(v).iter().enumerate() {
            data[(v, i)] = radial_transform(hop(h), kind, scale)?;
        }
    }
    if let Some(stats) = stats {
        stats.apply(&mut data)?;
    }
    FeatureTable::new(
        EncodingKind::De,
        data,
        json!({
            "anchors": anchors,
            "radial": kind.name(),
            "median_scale": scale,
            "standardized": stats.is_some(),
            "stats_source": stats.map(|s| s.source.clone()),
            "unreachable_hop": n,
        }),
    )
}

/// Eigenvectors 2..m+1, each shifted and scaled to zero mean and unit
/// (population) variance within the graph. Signs are arbitrary.
///
/// `noise` adds `N(0, sigma²)` to every entry after normalization.
pub fn emit_lappe(eig: &EigenSystem, m: usize, noise: Option<(f64, u64)>) -> Result<FeatureTable> {
    let n = eig.len();
    if m == 0 || m + 1 > n {
        return Err(Error::OrderOutOfRange { m, max: n.saturating_sub(1) });
    }
    let phi = eig.eigenvectors();
    let mut data = DMatrix::zeros(n, m);
    for j in 0..m {
        let col = phi.column(j + 1);
        let mean = col.mean();
        let std = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if std < 1e-12 {
            return Err(Error::ConstantColumn(j));
        }
        for v in 0..n {
            data[(v, j)] = (col[v] - mean) / std;
        }
    }
    if let Some((sigma, seed)) = noise {
        let dist = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        data.iter_mut().for_each(|x| *x += dist.sample(&mut rng));
    }
    let lambdas = eig.eigenvalues();
    let tied: Vec<usize> = (0..m)
        .filter(|&j| {
            let here = lambdas[j + 1];
            (lambdas[j] - here).abs() < TIE_TOLERANCE || (j + 2 < n && (lambdas[j + 2] - here).abs() < TIE_TOLERANCE)
        })
        .collect();
    FeatureTable::new(
        EncodingKind::LapPe,
        data,
        json!({
            "m": m,
            "eigenvalues": lambdas.iter().skip(1).take(m).collect::<Vec<_>>(),
            "sign_ambiguous": true,
            "tied_columns": tied,
            "noise_sigma": noise.map(|(s, _)| s),
            "noise_seed": noise.map(|(_, s)| s),
        }),
    )
}

/// Random-walk matrix `P = D^{-1} A`.
pub fn walk_matrix(g: &Graph) -> Result<DMatrix<f64>> {
    let n = g.node_count();
    let mut p = DMatrix::zeros(n, n);
    for v in 0..n {
        let deg = g.degree(v);
        if deg == 0 {
            return Err(Error::IsolatedNode(v));
        }
        for &w in g.neighbors(v) {
            p[(v, w)] = 1.0 / deg as f64;
        }
    }
    Ok(p)
}

/// Return probabilities `(P^s)_{vv}` for each step `s`.
pub fn emit_rwse(g: &Graph, steps: &[usize]) -> Result<FeatureTable> {
    if steps.is_empty() || steps.contains(&0) {
        return Err(Error::InvalidParameter("RWSE steps must be nonempty and positive".into()));
    }
    let p = walk_matrix(g)?;
    let n = g.node_count();
    let max_step = *steps.iter().max().unwrap();
    let mut diagonals = vec![Vec::new(); max_step + 1];
    let mut power = p.clone();
    for s in 1..=max_step {
        if s > 1 {
            power = &power * &p;
        }
        if steps.contains(&s) {
            diagonals[s] = power.diagonal().iter().copied().collect();
        }
    }
    let data = DMatrix::from_fn(n, steps.len(), |v, j| diagonals[steps[j]][v]);
    FeatureTable::new(EncodingKind::Rwse, data, json!({ "steps": steps }))
}

/// Heat kernel signature `Σ_{j<trunc_k} exp(-t λ_j) φ_j(v)²` per time.
pub fn emit_hks(eig: &EigenSystem, times: &[f64], trunc_k: usize) -> Result<FeatureTable> {
    let n = eig.len();
    if trunc_k == 0 || trunc_k > n {
        return Err(Error::OrderOutOfRange { m: trunc_k, max: n });
    }
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidParameter("HKS times must be nonempty and nonnegative".into()));
    }
    let phi = eig.eigenvectors();
    let data = DMatrix::from_fn(n, times.len(), |v, c| {
        (0..trunc_k).map(|j| eig.decay(times[c], j) * phi[(v, j)].powi(2)).sum()
    });
    FeatureTable::new(EncodingKind::Hks, data, json!({ "times": times, "trunc_k": trunc_k }))
}
