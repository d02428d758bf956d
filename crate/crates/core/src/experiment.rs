//! Experiment plans: graph ensembles, parameter sweeps, resumable CSV
//! results, leader-quality sweeps and paired summaries.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    diameter, exact_leader, generate_geometric, hop_distance, load_graph_file, ComponentPolicy,
    Connectivity, GeometricSpec, Graph, GraphError, NodeId,
};
use crate::protocol::Variant;
use crate::simnet::{run_simulation, LossModel, RunMetrics, SimConfig};
use crate::stats::{median, PairedSample};

pub const CSV_HEADER: [&str; 18] = [
    "graph_id",
    "n",
    "edges",
    "diameter",
    "variant",
    "m",
    "D",
    "loss_p",
    "seed",
    "avg_msgs",
    "max_msgs",
    "ticks",
    "wall_s",
    "mem_proxy",
    "loss_frac",
    "leader",
    "leader_dist_exact",
    "errors",
];

/// The packet counts studied for multi-packet messaging.
pub const STANDARD_M_VALUES: [u16; 5] = [1, 10, 20, 30, 50];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("cannot parse plan: {0}")]
    PlanSyntax(#[from] toml::de::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("results file: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

// ---------------------------------------------------------------------------
// Graph sources
// ---------------------------------------------------------------------------

/// Random geometric graphs in the style of the reference study: the number
/// of sampled points is drawn uniformly from `[total_min, total_max]`, the
/// largest component is kept, and candidates are accepted while the
/// component size lies in `[n_min, n_max]` and its diameter is at least
/// `min_diameter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_total_min")]
    pub total_min: usize,
    #[serde(default = "default_total_max")]
    pub total_max: usize,
    #[serde(default = "default_n_min")]
    pub n_min: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub min_diameter: u32,
    #[serde(default = "default_grid")]
    pub grid: u32,
    #[serde(default = "default_range")]
    pub range: f64,
}

fn default_total_min() -> usize {
    100
}
fn default_total_max() -> usize {
    2000
}
fn default_n_min() -> usize {
    2
}
fn default_n_max() -> usize {
    usize::MAX
}
fn default_grid() -> u32 {
    GeometricSpec::DEFAULT_GRID
}
fn default_range() -> f64 {
    GeometricSpec::DEFAULT_RANGE
}

/// Candidates tried per requested graph before giving up.
pub const ENSEMBLE_ATTEMPTS_PER_GRAPH: usize = 1000;

impl EnsembleSpec {
    pub fn new(count: usize, seed: u64) -> Self {
        EnsembleSpec {
            count,
            seed,
            total_min: default_total_min(),
            total_max: default_total_max(),
            n_min: default_n_min(),
            n_max: default_n_max(),
            min_diameter: 0,
            grid: default_grid(),
            range: default_range(),
        }
    }

    fn validate(&self) -> Result<(), GraphError> {
        if self.total_min < 2 || self.total_min > self.total_max {
            return Err(GraphError::InvalidSpec(format!(
                "point count range [{}, {}] is empty",
                self.total_min, self.total_max
            )));
        }
        if self.n_min > self.n_max {
            return Err(GraphError::InvalidSpec("n_min exceeds n_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NamedGraph {
    pub id: String,
    pub graph: Graph,
}

/// Generates the ensemble in order; the same spec always gives the same graphs.
pub fn generate_ensemble(spec: &EnsembleSpec) -> Result<Vec<NamedGraph>, GraphError> {
    spec.validate()?;
    let mut sizes = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.count);
    let budget = spec.count.max(1) * ENSEMBLE_ATTEMPTS_PER_GRAPH;
    for candidate in 0..budget {
        if out.len() == spec.count {
            break;
        }
        let total = sizes.gen_range(spec.total_min..=spec.total_max);
        let geo = GeometricSpec {
            n: total,
            grid_side: spec.grid,
            range: spec.range,
            seed: spec.seed.wrapping_mul(1_000_003).wrapping_add(candidate as u64),
            connectivity: Connectivity::LargestComponent,
        };
        let Ok(g) = generate_geometric(&geo) else { continue };
        if g.node_count() < spec.n_min || g.node_count() > spec.n_max {
            continue;
        }
        if spec.min_diameter > 0 && diameter(&g) < spec.min_diameter {
            continue;
        }
        out.push(NamedGraph {
            id: format!("ens{}-{:03}", spec.seed, out.len()),
            graph: g,
        });
    }
    if out.len() < spec.count {
        return Err(GraphError::InvalidSpec(format!(
            "only {} of {} ensemble graphs satisfied the filters after {budget} candidates",
            out.len(),
            spec.count
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricSource {
    pub n: usize,
    #[serde(default = "default_grid")]
    pub grid: u32,
    #[serde(default = "default_range")]
    pub range: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub connectivity: Connectivity,
}

fn default_count() -> usize {
    1
}

impl GeometricSource {
    fn graphs(&self) -> Result<Vec<NamedGraph>, GraphError> {
        (0..self.count as u64)
            .map(|k| {
                let seed = self.seed.wrapping_add(k);
                let spec = GeometricSpec {
                    n: self.n,
                    grid_side: self.grid,
                    range: self.range,
                    seed,
                    connectivity: self.connectivity,
                };
                Ok(NamedGraph {
                    id: format!("geo-n{}-g{}-s{}", self.n, self.grid, seed),
                    graph: generate_geometric(&spec)?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeListSource {
    pub path: PathBuf,
    /// Defaults to the file stem.
    #[serde(default)]
    pub id: Option<String>,
}

impl EdgeListSource {
    fn graph(&self, base: &Path) -> Result<NamedGraph, GraphError> {
        let path = if self.path.is_absolute() {
            self.path.clone()
        } else {
            base.join(&self.path)
        };
        let loaded = load_graph_file(&path, ComponentPolicy::TakeLargestComponent)?;
        let id = self.id.clone().unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "graph".into())
        });
        Ok(NamedGraph {
            id,
            graph: loaded.graph,
        })
    }
}

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

/// Transport settings shared by every cell of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportSettings {
    pub latency_ticks: u64,
    pub window: Option<u16>,
    pub timeout_ticks: Option<u64>,
    pub max_retries: Option<u32>,
    pub loss_model: LossModel,
    pub symmetric_loss: bool,
    pub payload_bytes: usize,
    pub bandwidth: Option<u64>,
}

impl Default for TransportSettings {
    fn default() -> Self {
        let base = SimConfig::default();
        TransportSettings {
            latency_ticks: base.latency_ticks,
            window: base.window,
            timeout_ticks: base.timeout_ticks,
            max_retries: base.max_retries,
            loss_model: base.loss_model,
            symmetric_loss: base.symmetric_loss,
            payload_bytes: base.payload_bytes,
            bandwidth: base.bandwidth,
        }
    }
}

impl TransportSettings {
    pub fn apply(&self, cfg: &mut SimConfig) {
        cfg.latency_ticks = self.latency_ticks;
        cfg.window = self.window;
        cfg.timeout_ticks = self.timeout_ticks;
        cfg.max_retries = self.max_retries;
        cfg.loss_model = self.loss_model;
        cfg.symmetric_loss = self.symmetric_loss;
        cfg.payload_bytes = self.payload_bytes;
        cfg.bandwidth = self.bandwidth;
    }
}

/// A sweep over graphs x D x m x loss x repetitions x variants, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(default)]
    pub geometric: Vec<GeometricSource>,
    #[serde(default)]
    pub ensemble: Vec<EnsembleSpec>,
    #[serde(default)]
    pub edgelist: Vec<EdgeListSource>,
    pub m: Vec<u16>,
    #[serde(rename = "D")]
    pub d: Vec<u32>,
    #[serde(default = "default_loss")]
    pub loss_p: Vec<f64>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    /// Cell seeds are `seed + repetition`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub transport: TransportSettings,
    /// Directory relative edge-list paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_loss() -> Vec<f64> {
    vec![0.0]
}
fn default_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}
fn default_repetitions() -> u32 {
    1
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let plan: ExperimentPlan = toml::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    /// Reads a plan file; relative paths inside it resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)?;
        let mut plan = Self::from_toml(&text)?;
        plan.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if let Some(out) = plan.output.as_mut() {
            if out.is_relative() {
                *out = plan.base_dir.join(&*out);
            }
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: &str| Err(ExperimentError::InvalidPlan(msg.into()));
        if self.geometric.is_empty() && self.ensemble.is_empty() && self.edgelist.is_empty() {
            return bad("no graph sources");
        }
        if self.m.is_empty() || self.d.is_empty() || self.loss_p.is_empty() || self.variants.is_empty() {
            return bad("m, D, loss_p and variants must all be non-empty");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        for cfg in self.configs() {
            cfg.validate()
                .map_err(|e| ExperimentError::InvalidPlan(e.to_string()))?;
        }
        Ok(())
    }

    fn configs(&self) -> Vec<SimConfig> {
        let mut out = Vec::new();
        for &d in &self.d {
            for &m in &self.m {
                for &loss_p in &self.loss_p {
                    for rep in 0..self.repetitions {
                        for &variant in &self.variants {
                            let mut cfg = SimConfig {
                                m,
                                loss_p,
                                max_iterations: d,
                                variant,
                                seed: self.seed.wrapping_add(rep as u64),
                                ..SimConfig::default()
                            };
                            self.transport.apply(&mut cfg);
                            out.push(cfg);
                        }
                    }
                }
            }
        }
        out
    }

    /// Loads every source in plan order. Failed sources are reported, not fatal.
    pub fn load_graphs(&self) -> (Vec<NamedGraph>, Vec<String>) {
        let mut graphs = Vec::new();
        let mut errors = Vec::new();
        for (k, src) in self.ensemble.iter().enumerate() {
            match generate_ensemble(src) {
                Ok(gs) => graphs.extend(gs),
                Err(e) => errors.push(format!("ensemble #{k}: {e}")),
            }
        }
        for (k, src) in self.geometric.iter().enumerate() {
            match src.graphs() {
                Ok(gs) => graphs.extend(gs),
                Err(e) => errors.push(format!("geometric #{k}: {e}")),
            }
        }
        for src in &self.edgelist {
            match src.graph(&self.base_dir) {
                Ok(g) => graphs.push(g),
                Err(e) => errors.push(format!("{}: {e}", src.path.display())),
            }
        }
        (graphs, errors)
    }
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub graph_id: String,
    pub n: usize,
    pub edges: usize,
    pub diameter: u32,
    pub variant: Variant,
    pub m: u16,
    #[serde(rename = "D")]
    pub d: u32,
    pub loss_p: f64,
    pub seed: u64,
    pub avg_msgs: Option<f64>,
    pub max_msgs: Option<u64>,
    pub ticks: Option<u64>,
    pub wall_s: Option<f64>,
    pub mem_proxy: Option<u64>,
    pub loss_frac: Option<f64>,
    pub leader: Option<NodeId>,
    pub leader_dist_exact: Option<u32>,
    pub errors: String,
}

/// Identifies a cell across reruns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub graph_id: String,
    pub variant: Variant,
    pub m: u16,
    pub d: u32,
    pub loss_bits: u64,
    pub seed: u64,
}

impl ResultRow {
    pub fn key(&self) -> CellKey {
        CellKey {
            graph_id: self.graph_id.clone(),
            variant: self.variant,
            m: self.m,
            d: self.d,
            loss_bits: self.loss_p.to_bits(),
            seed: self.seed,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Graph facts computed once per graph and shared by its cells.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    pub id: String,
    pub graph: Graph,
    pub diameter: u32,
    pub exact_leader: NodeId,
}

impl PreparedGraph {
    pub fn new(named: NamedGraph) -> Self {
        PreparedGraph {
            diameter: diameter(&named.graph),
            exact_leader: exact_leader(&named.graph),
            id: named.id,
            graph: named.graph,
        }
    }
}

/// Runs one cell and turns the outcome (or the fault) into a row.
pub fn run_cell(g: &PreparedGraph, cfg: &SimConfig) -> (ResultRow, Option<RunMetrics>) {
    let mut row = ResultRow {
        graph_id: g.id.clone(),
        n: g.graph.node_count(),
        edges: g.graph.edge_count(),
        diameter: g.diameter,
        variant: cfg.variant,
        m: cfg.m,
        d: cfg.max_iterations,
        loss_p: cfg.loss_p,
        seed: cfg.seed,
        avg_msgs: None,
        max_msgs: None,
        ticks: None,
        wall_s: None,
        mem_proxy: None,
        loss_frac: None,
        leader: None,
        leader_dist_exact: None,
        errors: String::new(),
    };
    match run_simulation(&g.graph, cfg) {
        Ok(metrics) => {
            row.avg_msgs = Some(metrics.avg_msgs);
            row.max_msgs = Some(metrics.max_msgs);
            row.ticks = Some(metrics.ticks);
            row.wall_s = Some(metrics.wall_seconds);
            row.mem_proxy = Some(metrics.mem_proxy);
            row.loss_frac = Some(metrics.loss_fraction);
            row.leader = Some(metrics.leader);
            row.leader_dist_exact = hop_distance(&g.graph, g.exact_leader, metrics.leader).ok();
            (row, Some(metrics))
        }
        Err(e) => {
            row.errors = e.to_string();
            (row, None)
        }
    }
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, ExperimentError> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader.deserialize().collect::<Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<(), ExperimentError> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        if rows.is_empty() {
            w.write_record(CSV_HEADER)?;
        }
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct PlanReport {
    /// Rows in canonical plan order.
    pub rows: Vec<ResultRow>,
    pub source_errors: Vec<String>,
    /// Cells executed by this call (the rest were reused from the output file).
    pub executed: usize,
}

impl PlanReport {
    pub fn cell_errors(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }
}

/// Executes every cell of the plan not already present (error-free) in the
/// output file, appending rows as they finish, then rewrites the file in
/// plan order. `jobs` of zero uses every core.
pub fn run_plan(plan: &ExperimentPlan, jobs: usize) -> Result<PlanReport, ExperimentError> {
    plan.validate()?;
    let (named, source_errors) = plan.load_graphs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let graphs: Vec<PreparedGraph> =
        pool.install(|| named.into_par_iter().map(PreparedGraph::new).collect());

    let configs = plan.configs();
    let cells: Vec<(usize, &SimConfig)> = (0..graphs.len())
        .flat_map(|g| configs.iter().map(move |c| (g, c)))
        .collect();

    let mut done: HashMap<CellKey, ResultRow> = HashMap::new();
    if let Some(path) = plan.output.as_deref().filter(|p| p.exists()) {
        for row in read_results(path)? {
            if row.is_ok() {
                done.insert(row.key(), row);
            }
        }
    }
    let cell_key = |g: &PreparedGraph, c: &SimConfig| CellKey {
        graph_id: g.id.clone(),
        variant: c.variant,
        m: c.m,
        d: c.max_iterations,
        loss_bits: c.loss_p.to_bits(),
        seed: c.seed,
    };
    let pending: Vec<usize> = cells
        .iter()
        .enumerate()
        .filter(|(_, (g, c))| !done.contains_key(&cell_key(&graphs[*g], c)))
        .map(|(i, _)| i)
        .collect();

    let appender = match plan.output.as_deref() {
        Some(path) => {
            let fresh = !path.exists() || fs::metadata(path)?.len() == 0;
            let file = OpenOptions::new().create(true).append(true).open(path)?;
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            if fresh {
                w.write_record(CSV_HEADER)?;
                w.flush()?;
            }
            Some(Mutex::new(w))
        }
        None => None,
    };

    let fresh_rows: Vec<(usize, ResultRow)> = pool.install(|| {
        pending
            .par_iter()
            .map(|&i| {
                let (g, cfg) = cells[i];
                let (row, _) = run_cell(&graphs[g], cfg);
                if let Some(w) = appender.as_ref() {
                    let mut w = w.lock().expect("results writer");
                    // a failed append only costs resumability; the final rewrite still happens
                    let _ = w.serialize(&row).and_then(|_| w.flush().map_err(csv::Error::from));
                }
                (i, row)
            })
            .collect()
    });
    drop(appender);

    let executed = fresh_rows.len();
    let mut fresh: HashMap<usize, ResultRow> = fresh_rows.into_iter().collect();
    let rows: Vec<ResultRow> = cells
        .iter()
        .enumerate()
        .map(|(i, (g, c))| {
            fresh
                .remove(&i)
                .or_else(|| done.remove(&cell_key(&graphs[*g], c)))
                .expect("every cell has a row")
        })
        .collect();
    if let Some(path) = plan.output.as_deref() {
        write_results(path, &rows)?;
    }
    Ok(PlanReport {
        rows,
        source_errors,
        executed,
    })
}

// ---------------------------------------------------------------------------
// Leader quality
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityRecord {
    pub graph_id: String,
    #[serde(rename = "D")]
    pub d: u32,
    pub exact_leader: NodeId,
    pub leader_original: NodeId,
    pub leader_enhanced: NodeId,
    pub dist_original: u32,
    pub dist_enhanced: u32,
}

/// Loss-free runs of both variants per `D`, scored by hop distance from the
/// exact most central node. `base` supplies m and transport settings.
pub fn quality_sweep(
    g: &PreparedGraph,
    ds: &[u32],
    base: &SimConfig,
) -> Result<Vec<QualityRecord>, crate::simnet::SimError> {
    ds.iter()
        .map(|&d| {
            let mut leaders = [0; 2];
            for (slot, variant) in Variant::ALL.into_iter().enumerate() {
                let cfg = SimConfig {
                    max_iterations: d,
                    variant,
                    loss_p: 0.0,
                    ..base.clone()
                };
                leaders[slot] = run_simulation(&g.graph, &cfg)?.leader;
            }
            let dist = |l| hop_distance(&g.graph, g.exact_leader, l).expect("connected graph");
            Ok(QualityRecord {
                graph_id: g.id.clone(),
                d,
                exact_leader: g.exact_leader,
                leader_original: leaders[0],
                leader_enhanced: leaders[1],
                dist_original: dist(leaders[0]),
                dist_enhanced: dist(leaders[1]),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Paired views of a results table
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    AvgMsgs,
    MaxMsgs,
    Ticks,
    WallSeconds,
    MemProxy,
    LossFraction,
    LeaderDistance,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::AvgMsgs,
        Metric::MaxMsgs,
        Metric::Ticks,
        Metric::WallSeconds,
        Metric::MemProxy,
        Metric::LossFraction,
        Metric::LeaderDistance,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::AvgMsgs => "avg_msgs",
            Metric::MaxMsgs => "max_msgs",
            Metric::Ticks => "ticks",
            Metric::WallSeconds => "wall_s",
            Metric::MemProxy => "mem_proxy",
            Metric::LossFraction => "loss_frac",
            Metric::LeaderDistance => "leader_dist_exact",
        }
    }

    pub fn from_name(name: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn value(&self, row: &ResultRow) -> Option<f64> {
        match self {
            Metric::AvgMsgs => row.avg_msgs,
            Metric::MaxMsgs => row.max_msgs.map(|v| v as f64),
            Metric::Ticks => row.ticks.map(|v| v as f64),
            Metric::WallSeconds => row.wall_s,
            Metric::MemProxy => row.mem_proxy.map(|v| v as f64),
            Metric::LossFraction => row.loss_frac,
            Metric::LeaderDistance => row.leader_dist_exact.map(f64::from),
        }
    }
}

type PairKey = (String, u16, u32, u64, u64);

fn pair_key(r: &ResultRow) -> PairKey {
    (r.graph_id.clone(), r.m, r.d, r.loss_p.to_bits(), r.seed)
}

/// Matches original and enhanced rows of the same cell; order follows the
/// first appearance of each cell in `rows`.
pub fn paired_samples(rows: &[ResultRow], metric: Metric) -> Vec<PairedSample> {
    let mut order: Vec<PairKey> = Vec::new();
    let mut values: HashMap<PairKey, [Option<f64>; 2]> = HashMap::new();
    for r in rows.iter().filter(|r| r.is_ok()) {
        let key = pair_key(r);
        let slot = values.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            [None, None]
        });
        let idx = match r.variant {
            Variant::Original => 0,
            Variant::Enhanced => 1,
        };
        slot[idx] = metric.value(r);
    }
    order
        .into_iter()
        .filter_map(|k| match values[&k] {
            [Some(p), Some(i)] => Some(PairedSample::new(k.0.clone(), metric.name(), p, i)),
            _ => None,
        })
        .collect()
}

/// Per graph x m x D x loss: variant means over seeds and the percent
/// reduction `(P - I) / P` of average messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub graph_id: String,
    pub m: u16,
    #[serde(rename = "D")]
    pub d: u32,
    pub loss_p: f64,
    pub avg_p: Option<f64>,
    pub max_p: Option<f64>,
    pub avg_i: Option<f64>,
    pub max_i: Option<f64>,
    pub reduction_pct: Option<f64>,
    pub ticks_p: Option<f64>,
    pub ticks_i: Option<f64>,
    pub loss_frac_p: Option<f64>,
    pub loss_frac_i: Option<f64>,
    pub mem_p: Option<f64>,
    pub mem_i: Option<f64>,
}

fn mean_of(rows: &[&ResultRow], metric: Metric) -> Option<f64> {
    let vals: Vec<f64> = rows.iter().filter_map(|r| metric.value(r)).collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, u16, u32, u64), [Vec<&ResultRow>; 2]> = BTreeMap::new();
    let mut order = Vec::new();
    for r in rows.iter().filter(|r| r.is_ok()) {
        let key = (r.graph_id.clone(), r.m, r.d, r.loss_p.to_bits());
        let slot = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            [Vec::new(), Vec::new()]
        });
        slot[usize::from(r.variant == Variant::Enhanced)].push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let [p, i] = &groups[&key];
            let avg_p = mean_of(p, Metric::AvgMsgs);
            let avg_i = mean_of(i, Metric::AvgMsgs);
            let reduction_pct = match (avg_p, avg_i) {
                (Some(p), Some(i)) if p > 0.0 => Some(100.0 * (p - i) / p),
                _ => None,
            };
            SummaryRow {
                graph_id: key.0,
                m: key.1,
                d: key.2,
                loss_p: f64::from_bits(key.3),
                avg_p,
                max_p: mean_of(p, Metric::MaxMsgs),
                avg_i,
                max_i: mean_of(i, Metric::MaxMsgs),
                reduction_pct,
                ticks_p: mean_of(p, Metric::Ticks),
                ticks_i: mean_of(i, Metric::Ticks),
                loss_frac_p: mean_of(p, Metric::LossFraction),
                loss_frac_i: mean_of(i, Metric::LossFraction),
                mem_p: mean_of(p, Metric::MemProxy),
                mem_i: mean_of(i, Metric::MemProxy),
            }
        })
        .collect()
}

/// Mean percent reduction across summary rows that have both variants.
pub fn mean_reduction(summary: &[SummaryRow]) -> Option<f64> {
    let v: Vec<f64> = summary.iter().filter_map(|s| s.reduction_pct).collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Median of `metric` per (m, loss_p) over the rows of one variant, in
/// ascending (m, loss_p) order.
pub fn curve(rows: &[ResultRow], metric: Metric, variant: Variant) -> Vec<(u16, f64, f64)> {
    let mut groups: BTreeMap<(u16, u64), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.is_ok() && r.variant == variant) {
        if let Some(v) = metric.value(r) {
            groups.entry((r.m, r.loss_p.to_bits())).or_default().push(v);
        }
    }
    let mut out: Vec<(u16, f64, f64)> = groups
        .into_iter()
        .map(|((m, loss), v)| (m, f64::from_bits(loss), median(&v).unwrap_or(f64::NAN)))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out
}

/// Writes `rows` as CSV with a header to `out`.
pub fn write_csv<T: Serialize, W: Write>(out: W, rows: &[T]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn create_file(path: &Path) -> io::Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    File::create(path)
}
