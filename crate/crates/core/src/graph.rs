//! Undirected graphs, geometric generation, edge-list ingestion and the
//! exact BFS oracle used as ground truth for every estimate.

use std::collections::{HashMap, VecDeque};
use std::io::{self, BufRead, Write};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::score::{self, Score};

pub type NodeId = u32;

/// Sentinel distance for unreachable nodes in [`bfs_distances`].
pub const UNREACHED: u32 = u32::MAX;

/// Maximum number of resampling attempts made by [`generate_geometric`].
pub const GEOMETRIC_RETRY_BOUND: u32 = 1000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("graph has no edges")]
    Empty,
    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("node {0} does not exist")]
    InvalidNode(NodeId),
    #[error("invalid geometric spec: {0}")]
    InvalidSpec(String),
    #[error(
        "no connected sample for n={n}, range={range} after {attempts} attempts; \
         try a larger range or a smaller n"
    )]
    RetriesExhausted { n: usize, range: f64, attempts: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Simple undirected graph on dense ids `0..n`.
///
/// Adjacency lists are sorted and free of duplicates and self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<NodeId>>,
    edge_count: usize,
}

impl Graph {
    /// Builds a graph from an edge iterator. Self-loops and repeated edges
    /// are dropped. Connectivity is not checked.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut adjacency = vec![Vec::new(); n];
        for (u, v) in edges {
            for x in [u, v] {
                if x as usize >= n {
                    return Err(GraphError::InvalidNode(x));
                }
            }
            if u == v {
                continue;
            }
            adjacency[u as usize].push(v);
            adjacency[v as usize].push(u);
        }
        let mut edge_count = 0;
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
            edge_count += list.len();
        }
        Ok(Graph {
            adjacency,
            edge_count: edge_count / 2,
        })
    }

    /// Geometric graph over explicit lattice points: an edge joins two points
    /// whose Euclidean distance is strictly below `range`.
    pub fn from_points(points: &[(i64, i64)], range: f64) -> Self {
        let cell = range.ceil().max(1.0) as i64;
        let mut buckets: HashMap<(i64, i64), Vec<NodeId>> = HashMap::new();
        for (i, &(x, y)) in points.iter().enumerate() {
            buckets
                .entry((x.div_euclid(cell), y.div_euclid(cell)))
                .or_default()
                .push(i as NodeId);
        }
        let r2 = range * range;
        let mut edges = Vec::new();
        for (i, &(x, y)) in points.iter().enumerate() {
            let (cx, cy) = (x.div_euclid(cell), y.div_euclid(cell));
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let Some(bucket) = buckets.get(&(cx + dx, cy + dy)) else {
                        continue;
                    };
                    for &j in bucket {
                        if (j as usize) <= i {
                            continue;
                        }
                        let (px, py) = points[j as usize];
                        let d2 = ((px - x) * (px - x) + (py - y) * (py - y)) as f64;
                        if d2 < r2 {
                            edges.push((i as NodeId, j));
                        }
                    }
                }
            }
        }
        Graph::from_edges(points.len(), edges).expect("point ids are in range")
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn neighbors(&self, i: NodeId) -> &[NodeId] {
        &self.adjacency[i as usize]
    }

    pub fn degree(&self, i: NodeId) -> usize {
        self.adjacency[i as usize].len()
    }

    pub fn contains(&self, i: NodeId) -> bool {
        (i as usize) < self.adjacency.len()
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(u, list)| {
            let u = u as NodeId;
            list.iter().filter(move |&&v| v > u).map(move |&v| (u, v))
        })
    }

    /// Component label per node plus the number of components. Labels are
    /// assigned in order of each component's smallest node.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.node_count();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            queue.push_back(start as NodeId);
            while let Some(u) = queue.pop_front() {
                for &v in self.neighbors(u) {
                    if label[v as usize] == usize::MAX {
                        label[v as usize] = count;
                        queue.push_back(v);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn is_connected(&self) -> bool {
        self.node_count() > 0 && self.components().1 == 1
    }

    /// Subgraph induced by the largest component (ties: the component holding
    /// the smallest id). Returns the subgraph and, for each new id, the old id.
    pub fn largest_component(&self) -> (Graph, Vec<NodeId>) {
        let (label, count) = self.components();
        let mut sizes = vec![0usize; count];
        for &l in &label {
            sizes[l] += 1;
        }
        let best = (0..count).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)));
        let Some(best) = best else {
            return (self.clone(), Vec::new());
        };
        let kept: Vec<NodeId> = (0..self.node_count() as NodeId)
            .filter(|&i| label[i as usize] == best)
            .collect();
        let mut new_id = vec![NodeId::MAX; self.node_count()];
        for (k, &old) in kept.iter().enumerate() {
            new_id[old as usize] = k as NodeId;
        }
        let edges = self
            .edges()
            .filter(|&(u, _)| label[u as usize] == best)
            .map(|(u, v)| (new_id[u as usize], new_id[v as usize]));
        let sub = Graph::from_edges(kept.len(), edges).expect("remapped ids are dense");
        (sub, kept)
    }

    /// Writes the dump format: a header line `n m`, then one `u v` line per
    /// edge with `u < v`, sorted.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{} {}", self.node_count(), self.edge_count())?;
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    pub fn dump_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_dump(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("dump is ascii")
    }
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentPolicy {
    RejectDisconnected,
    #[default]
    TakeLargestComponent,
}

/// A graph read from an external file together with the original id of each
/// dense node.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: Graph,
    pub original_ids: Vec<u64>,
}

/// Parses a SNAP-style edge list.
///
/// Lines are `u v` pairs of non-negative integers; lines starting with `#`
/// (and blank lines) are skipped. Ids are remapped to `0..n` in order of
/// first appearance.
pub fn load_edge_list<R: BufRead>(
    reader: R,
    policy: ComponentPolicy,
) -> Result<LoadedGraph, GraphError> {
    let mut ids: HashMap<u64, NodeId> = HashMap::new();
    let mut original_ids = Vec::new();
    let mut edges = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(GraphError::Parse {
                line: lineno,
                reason: format!("expected two ids, got {trimmed:?}"),
            });
        };
        let mut pair = [0 as NodeId; 2];
        for (slot, tok) in pair.iter_mut().zip([a, b]) {
            let raw: u64 = tok.parse().map_err(|_| GraphError::Parse {
                line: lineno,
                reason: format!("{tok:?} is not a non-negative integer"),
            })?;
            *slot = *ids.entry(raw).or_insert_with(|| {
                original_ids.push(raw);
                (original_ids.len() - 1) as NodeId
            });
        }
        edges.push((pair[0], pair[1]));
    }
    let graph = Graph::from_edges(original_ids.len(), edges)?;
    finish_loaded(graph, original_ids, policy)
}

fn finish_loaded(
    graph: Graph,
    original_ids: Vec<u64>,
    policy: ComponentPolicy,
) -> Result<LoadedGraph, GraphError> {
    if graph.edge_count() == 0 {
        return Err(GraphError::Empty);
    }
    // isolated ids can only come from dumps; they form their own components
    let (_, components) = graph.components();
    if components == 1 {
        return Ok(LoadedGraph {
            graph,
            original_ids,
        });
    }
    match policy {
        ComponentPolicy::RejectDisconnected => Err(GraphError::Disconnected { components }),
        ComponentPolicy::TakeLargestComponent => {
            let (sub, kept) = graph.largest_component();
            let original_ids = kept.iter().map(|&k| original_ids[k as usize]).collect();
            Ok(LoadedGraph {
                graph: sub,
                original_ids,
            })
        }
    }
}

/// Parses the strict dump format written by [`Graph::write_dump`]. Returns
/// `None` when the text is not a well-formed dump.
pub fn parse_dump(text: &str) -> Option<Graph> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let (n, m) = parse_pair(lines.next()?)?;
    let mut edges = Vec::with_capacity(m as usize);
    let mut prev: Option<(u64, u64)> = None;
    for line in lines {
        let (u, v) = parse_pair(line)?;
        if u >= v || v >= n || prev.is_some_and(|p| p >= (u, v)) {
            return None;
        }
        prev = Some((u, v));
        edges.push((u as NodeId, v as NodeId));
    }
    if edges.len() as u64 != m || n > NodeId::MAX as u64 {
        return None;
    }
    Graph::from_edges(n as usize, edges).ok()
}

fn parse_pair(line: &str) -> Option<(u64, u64)> {
    let mut it = line.split_whitespace();
    let a = it.next()?.parse().ok()?;
    let b = it.next()?.parse().ok()?;
    it.next().is_none().then_some((a, b))
}

/// Loads either a dump (detected by its header and strict layout) or a plain
/// edge list. Dumps keep their ids; edge lists are remapped.
pub fn load_graph_text(text: &str, policy: ComponentPolicy) -> Result<LoadedGraph, GraphError> {
    if let Some(graph) = parse_dump(text) {
        let original_ids = (0..graph.node_count() as u64).collect();
        return finish_loaded(graph, original_ids, policy);
    }
    load_edge_list(text.as_bytes(), policy)
}

pub fn load_graph_file(
    path: &std::path::Path,
    policy: ComponentPolicy,
) -> Result<LoadedGraph, GraphError> {
    let text = std::fs::read_to_string(path)?;
    load_graph_text(&text, policy)
}

// ---------------------------------------------------------------------------
// Geometric generator
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Connectivity {
    /// Redraw all points with the next sub-seed until the graph is connected.
    #[default]
    Resample,
    /// Draw once and keep the largest component.
    LargestComponent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricSpec {
    pub n: usize,
    pub grid_side: u32,
    pub range: f64,
    pub seed: u64,
    #[serde(default)]
    pub connectivity: Connectivity,
}

impl GeometricSpec {
    pub const DEFAULT_GRID: u32 = 250;
    pub const DEFAULT_RANGE: f64 = 10.0;

    pub fn new(n: usize, seed: u64) -> Self {
        GeometricSpec {
            n,
            grid_side: Self::DEFAULT_GRID,
            range: Self::DEFAULT_RANGE,
            seed,
            connectivity: Connectivity::Resample,
        }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let cells = self.grid_side as u64 * self.grid_side as u64;
        if self.n < 2 {
            return Err(GraphError::InvalidSpec("n must be at least 2".into()));
        }
        if self.n as u64 > cells {
            return Err(GraphError::InvalidSpec(format!(
                "n={} exceeds the {} points of a {}x{} grid",
                self.n, cells, self.grid_side, self.grid_side
            )));
        }
        if self.range.is_nan() || self.range <= 0.0 || !self.range.is_finite() {
            return Err(GraphError::InvalidSpec(format!(
                "range must be positive, got {}",
                self.range
            )));
        }
        Ok(())
    }
}

fn sample_points(spec: &GeometricSpec, attempt: u32) -> Vec<(i64, i64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(attempt as u64);
    let side = spec.grid_side as usize;
    index::sample(&mut rng, side * side, spec.n)
        .into_iter()
        .map(|cell| ((cell % side) as i64, (cell / side) as i64))
        .collect()
}

/// Random geometric graph on a `grid_side x grid_side` integer lattice.
///
/// A pure function of `spec`: the same spec always yields the same graph.
pub fn generate_geometric(spec: &GeometricSpec) -> Result<Graph, GraphError> {
    spec.validate()?;
    match spec.connectivity {
        Connectivity::Resample => {
            for attempt in 0..GEOMETRIC_RETRY_BOUND {
                let g = Graph::from_points(&sample_points(spec, attempt), spec.range);
                if g.is_connected() {
                    return Ok(g);
                }
            }
            Err(GraphError::RetriesExhausted {
                n: spec.n,
                range: spec.range,
                attempts: GEOMETRIC_RETRY_BOUND,
            })
        }
        Connectivity::LargestComponent => {
            let g = Graph::from_points(&sample_points(spec, 0), spec.range);
            let (sub, _) = g.largest_component();
            if sub.node_count() < 2 {
                return Err(GraphError::RetriesExhausted {
                    n: spec.n,
                    range: spec.range,
                    attempts: 1,
                });
            }
            Ok(sub)
        }
    }
}

// ---------------------------------------------------------------------------
// Exact oracle
// ---------------------------------------------------------------------------

/// Hop distances from `src`; unreachable nodes get [`UNREACHED`].
pub fn bfs_distances(g: &Graph, src: NodeId) -> Vec<u32> {
    let mut dist = vec![UNREACHED; g.node_count()];
    let mut queue = VecDeque::with_capacity(g.node_count());
    dist[src as usize] = 0;
    queue.push_back(src);
    while let Some(u) = queue.pop_front() {
        let du = dist[u as usize];
        for &v in g.neighbors(u) {
            if dist[v as usize] == UNREACHED {
                dist[v as usize] = du + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Closeness of `i`: `(|V| - 1) / sum_j dist(i, j)` as an exact fraction.
///
/// The graph must be connected; a single-node graph scores zero.
pub fn exact_closeness(g: &Graph, i: NodeId) -> Score {
    let dist = bfs_distances(g, i);
    debug_assert!(dist.iter().all(|&d| d != UNREACHED), "graph must be connected");
    let total: u64 = dist.iter().map(|&d| d as u64).sum();
    if total == 0 {
        return Score::ZERO;
    }
    Score::new(g.node_count() as u64 - 1, total)
}

pub fn all_closeness(g: &Graph) -> Vec<Score> {
    (0..g.node_count() as NodeId)
        .into_par_iter()
        .map(|i| exact_closeness(g, i))
        .collect()
}

/// The most central node under exact closeness (ties: smallest id).
pub fn exact_leader(g: &Graph) -> NodeId {
    score::argmax(&all_closeness(g)).unwrap_or(0) as NodeId
}

pub fn hop_distance(g: &Graph, i: NodeId, j: NodeId) -> Result<u32, GraphError> {
    for x in [i, j] {
        if !g.contains(x) {
            return Err(GraphError::InvalidNode(x));
        }
    }
    if i == j {
        return Ok(0);
    }
    Ok(bfs_distances(g, i)[j as usize])
}

pub fn eccentricity(g: &Graph, i: NodeId) -> u32 {
    bfs_distances(g, i).into_iter().max().unwrap_or(0)
}

pub fn diameter(g: &Graph) -> u32 {
    (0..g.node_count() as NodeId)
        .into_par_iter()
        .map(|i| eccentricity(g, i))
        .max()
        .unwrap_or(0)
}
