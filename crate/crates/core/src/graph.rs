//! Undirected simple graphs in compressed adjacency form, hop distances, and
//! the two graph sources used by the experiments: edge-list files and the
//! random regular model.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Hop count between two nodes.
pub type Hop = u32;

/// Hop count reported for node pairs in different components.
pub const UNREACHABLE: Hop = Hop::MAX;

/// Restart budget of the configuration model.
pub const REGULAR_RESTART_BUDGET: usize = 1_000_000;

/// Immutable undirected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    degree_regular: Option<usize>,
    labels: Option<Vec<String>>,
}

/// What was discarded while building a simple graph from raw edges.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeCleanup {
    pub duplicates: usize,
    pub self_loops: usize,
}

impl Graph {
    /// Builds the simple graph on `n` nodes spanned by `edges`, dropping
    /// self-loops and repeated edges (in either orientation).
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<(Self, EdgeCleanup)> {
        let mut cleanup = EdgeCleanup::default();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            for node in [u, v] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, n });
                }
            }
            if u == v {
                cleanup.self_loops += 1;
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        let mut repeated_halves = 0;
        for list in &mut adj {
            list.sort_unstable();
            let before = list.len();
            list.dedup();
            repeated_halves += before - list.len();
            neighbors.extend_from_slice(list);
            offsets.push(neighbors.len());
        }
        // every duplicate edge was counted once from each endpoint
        cleanup.duplicates = repeated_halves / 2;

        let mut graph = Self { n, offsets, neighbors, degree_regular: None, labels: None };
        graph.degree_regular = graph.uniform_degree();
        Ok((graph, cleanup))
    }

    /// Like [`Graph::from_edges`] but rejects inputs that are not already simple.
    pub fn from_simple_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let (graph, cleanup) = Self::from_edges(n, edges)?;
        if cleanup != EdgeCleanup::default() {
            return Err(Error::InvalidParameter(format!(
                "edge list is not simple ({} duplicates, {} self-loops)",
                cleanup.duplicates, cleanup.self_loops
            )));
        }
        Ok(graph)
    }

    fn uniform_degree(&self) -> Option<usize> {
        let first = self.degree(0);
        (self.n > 0 && first > 0 && (1..self.n).all(|v| self.degree(v) == first)).then_some(first)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Common degree when every node has the same positive degree.
    pub fn degree_regular(&self) -> Option<usize> {
        self.degree_regular
    }

    pub fn min_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).min().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| self.neighbors(u).iter().copied().filter(move |&v| u < v).map(move |v| (u, v)))
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Attaches display labels, one per node. Labels never affect computation.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::InvalidParameter(format!("{} labels for {} nodes", labels.len(), self.n)));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// The same graph with node `v` renamed to `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.n];
        if perm.len() != self.n || perm.iter().any(|&p| p >= self.n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidParameter("relabeling is not a permutation".into()));
        }
        let edges: Vec<_> = self.edges().map(|(u, v)| (perm[u], perm[v])).collect();
        Ok(Self::from_edges(self.n, &edges)?.0)
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node < self.n {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { node, n: self.n })
        }
    }
}

/// Result of reading an edge-list file.
#[derive(Debug, Clone)]
pub struct EdgeListLoad {
    pub graph: Graph,
    pub cleanup: EdgeCleanup,
}

/// Parses edge-list text: one `u v` pair per line, `#` comment lines, blank
/// lines ignored. The node count is one more than the largest id seen.
pub fn parse_edge_list(text: &str, origin: &Path) -> Result<EdgeListLoad> {
    let mut edges = Vec::new();
    let mut max_id = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse { path: origin.to_path_buf(), line: idx + 1, message };
        let mut fields = line.split_whitespace();
        let mut next_id = || -> Result<usize> {
            let token = fields.next().ok_or_else(|| parse_err("expected two node ids".into()))?;
            token.parse::<usize>().map_err(|_| parse_err(format!("invalid node id {token:?}")))
        };
        let u = next_id()?;
        let v = next_id()?;
        if fields.next().is_some() {
            return Err(parse_err("expected exactly two node ids".into()));
        }
        max_id = max_id.max(Some(u.max(v)));
        edges.push((u, v));
    }
    let n = max_id.map(|m| m + 1).ok_or(Error::EmptyGraph)?;
    let (graph, cleanup) = Graph::from_edges(n, &edges)?;
    if graph.edge_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    if cleanup.duplicates > 0 || cleanup.self_loops > 0 {
        log::warn!(
            "{}: dropped {} duplicate edges and {} self-loops",
            origin.display(),
            cleanup.duplicates,
            cleanup.self_loops
        );
    }
    Ok(EdgeListLoad { graph, cleanup })
}

/// Path of the optional label sidecar for an edge-list file (`<file>.labels`).
pub fn label_sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".labels");
    PathBuf::from(name)
}

/// Reads an edge-list file, attaching labels from `<file>.labels` when present.
///
/// Each sidecar line is `id label`; ids without a line keep their number.
pub fn read_edge_list(path: &Path) -> Result<EdgeListLoad> {
    let text = fs::read_to_string(path)?;
    let mut load = parse_edge_list(&text, path)?;
    let sidecar = label_sidecar_path(path);
    if sidecar.is_file() {
        let n = load.graph.node_count();
        let mut labels: Vec<String> = (0..n).map(|v| v.to_string()).collect();
        for (idx, raw) in fs::read_to_string(&sidecar)?.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, label) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let id: usize = id.parse().ok().filter(|&id| id < n).ok_or_else(|| Error::Parse {
                path: sidecar.clone(),
                line: idx + 1,
                message: format!("invalid node id {id:?}"),
            })?;
            labels[id] = label.trim().to_string();
        }
        load.graph = load.graph.with_labels(labels)?;
    }
    Ok(load)
}

pub fn load_edge_list(path: &Path) -> Result<Graph> {
    read_edge_list(path).map(|load| load.graph)
}

/// Writes `g` in edge-list format.
pub fn write_edge_list(g: &Graph, path: &Path) -> Result<()> {
    let mut out = format!("# {} nodes, {} edges\n", g.node_count(), g.edge_count());
    for (u, v) in g.edges() {
        out.push_str(&format!("{u} {v}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Uniform random simple `r`-regular graph on `n` nodes.
///
/// Half-edges are matched uniformly at random; any self-loop or repeated edge
/// discards the whole matching. Conditioned on simplicity, the pairing is
/// uniform over labeled `r`-regular graphs.
pub fn generate_random_regular(n: usize, r: usize, seed: u64) -> Result<Graph> {
    if r < 3 {
        return Err(Error::InvalidParameter(format!("degree must be at least 3, got {r}")));
    }
    if r >= n || (n * r) % 2 == 1 {
        return Err(Error::Infeasible { n, r });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stubs_total = n * r;
    let mut stubs = vec![0usize; stubs_total];
    let mut partners = vec![0usize; stubs_total];
    let mut fill = vec![0usize; n];

    for attempt in 0..REGULAR_RESTART_BUDGET {
        for (i, s) in stubs.iter_mut().enumerate() {
            *s = i / r;
        }
        fill.iter_mut().for_each(|f| *f = 0);
        let mut simple = true;
        let mut i = 0;
        while i < stubs_total {
            // incremental Fisher-Yates: draw both endpoints of the next pair
            let j = rng.random_range(i..stubs_total);
            stubs.swap(i, j);
            let k = rng.random_range(i + 1..stubs_total);
            stubs.swap(i + 1, k);
            let (u, v) = (stubs[i], stubs[i + 1]);
            if u == v || partners[u * r..u * r + fill[u]].contains(&v) {
                simple = false;
                break;
            }
            partners[u * r + fill[u]] = v;
            fill[u] += 1;
            partners[v * r + fill[v]] = u;
            fill[v] += 1;
            i += 2;
        }
        if simple {
            log::debug!("random {r}-regular graph on {n} nodes after {attempt} restarts");
            let edges: Vec<_> = stubs.chunks_exact(2).map(|p| (p[0], p[1])).collect();
            return Graph::from_simple_edges(n, &edges);
        }
    }
    Err(Error::RestartBudgetExhausted(REGULAR_RESTART_BUDGET))
}

/// Random connected graph shaped like a small molecule: a spanning tree with
/// degrees capped at `max_degree`, plus up to `ring_closures` extra edges
/// joining nodes a short hop distance apart (3 to 6).
pub fn generate_molecule_like(n: usize, ring_closures: usize, max_degree: usize, seed: u64) -> Result<Graph> {
    if n < 2 || max_degree < 2 {
        return Err(Error::InvalidParameter("need n >= 2 and max_degree >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut degree = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1 + ring_closures);
    for v in 1..n {
        // attach to a random earlier node with spare valence; the chain
        // predecessor always has room since it has degree at most 1 so far
        let mut parent = rng.random_range(0..v);
        if degree[parent] >= max_degree {
            parent = v - 1;
        }
        degree[parent] += 1;
        degree[v] += 1;
        edges.push((parent, v));
    }
    let mut graph = Graph::from_simple_edges(n, &edges)?;
    let mut added = 0;
    let mut tries = 0;
    while added < ring_closures && tries < 50 * (ring_closures + 1) {
        tries += 1;
        let u = rng.random_range(0..n);
        if degree[u] >= max_degree {
            continue;
        }
        let dist = bfs_distances(&graph, u)?;
        let candidates: Vec<usize> = (0..n).filter(|&v| (3..=6).contains(&dist[v]) && degree[v] < max_degree).collect();
        if candidates.is_empty() {
            continue;
        }
        let v = candidates[rng.random_range(0..candidates.len())];
        degree[u] += 1;
        degree[v] += 1;
        edges.push((u, v));
        graph = Graph::from_simple_edges(n, &edges)?;
        added += 1;
    }
    Ok(graph)
}

/// Hop distances from `source`; nodes in other components get [`UNREACHABLE`].
pub fn bfs_distances(g: &Graph, source: usize) -> Result<Vec<Hop>> {
    g.check_node(source)?;
    let mut dist = vec![UNREACHABLE; g.node_count()];
    let mut queue = VecDeque::with_capacity(g.node_count());
    dist[source] = 0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        let next = dist[u] + 1;
        for &w in g.neighbors(u) {
            if dist[w] == UNREACHABLE {
                dist[w] = next;
                queue.push_back(w);
            }
        }
    }
    Ok(dist)
}

/// Node-by-anchor hop distances, `entry(v, i) = SPD(v, anchors[i])`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Hop>,
}

impl DistanceMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, v: usize, i: usize) -> Hop {
        self.data[v * self.cols + i]
    }

    pub fn row(&self, v: usize) -> &[Hop] {
        &self.data[v * self.cols..(v + 1) * self.cols]
    }

    pub fn column(&self, i: usize) -> impl Iterator<Item = Hop> + '_ {
        (0..self.rows).map(move |v| self.get(v, i))
    }

    pub fn has_unreachable(&self) -> bool {
        self.data.contains(&UNREACHABLE)
    }

    /// All entries in row-major order.
    pub fn entries(&self) -> &[Hop] {
        &self.data
    }
}

/// One BFS per anchor, assembled column-wise.
pub fn node_anchor_distances(g: &Graph, anchors: &[usize]) -> Result<DistanceMatrix> {
    if anchors.is_empty() {
        return Err(Error::EmptyAnchors);
    }
    let n = g.node_count();
    let cols = anchors.len();
    let mut data = vec![0; n * cols];
    for (i, &a) in anchors.iter().enumerate() {
        let dist = bfs_distances(g, a)?;
        for (v, d) in dist.into_iter().enumerate() {
            data[v * cols + i] = d;
        }
    }
    Ok(DistanceMatrix { rows: n, cols, data })
}

/// All-pairs hop distances (an `n x n` node-anchor matrix with every node an anchor).
pub fn all_pairs_distances(g: &Graph) -> Result<DistanceMatrix> {
    let all: Vec<usize> = (0..g.node_count()).collect();
    node_anchor_distances(g, &all)
}

/// Nodes within `radius` hops of `u`, ascending.
pub fn ball(g: &Graph, u: usize, radius: Hop) -> Result<Vec<usize>> {
    let dist = bfs_distances(g, u)?;
    Ok((0..g.node_count()).filter(|&v| dist[v] <= radius).collect())
}

pub fn is_connected(g: &Graph) -> bool {
    g.node_count() > 0 && bfs_distances(g, 0).map(|d| !d.contains(&UNREACHABLE)).unwrap_or(false)
}

/// Endpoint of an approximate diameter: the node farthest from the node
/// farthest from 0 (ties to the smallest id).
pub fn peripheral_node(g: &Graph) -> Result<usize> {
    let farthest = |source: usize| -> Result<usize> {
        let dist = bfs_distances(g, source)?;
        let mut best = source;
        for (v, &d) in dist.iter().enumerate() {
            if d != UNREACHABLE && d > dist[best] {
                best = v;
            }
        }
        Ok(best)
    };
    farthest(farthest(0)?)
}
