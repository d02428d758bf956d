//! C ABI over the `prunesim` crate.
//!
//! Graphs and run results are opaque handles created by `ps_*` constructors
//! and released with the matching `*_free`. Every fallible call returns a
//! [`PsStatus`]; on failure, [`ps_last_error_message`] describes the error
//! for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use prunesim::graph::{
    diameter, exact_closeness, generate_geometric, hop_distance, load_graph_file, load_graph_text,
    ComponentPolicy, Connectivity, GeometricSpec,
};
use prunesim::simnet::{LossModel, SimError};
use prunesim::stats::{effect_size_of, wilcoxon_exact, wilcoxon_normal, StatsError, EXACT_LIMIT};
use prunesim::{run_simulation, Graph, GraphError, RunMetrics, SimConfig, Variant};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Disconnected = 5,
    Simulation = 6,
    InsufficientData = 7,
    Undefined = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsVariant {
    Original = 0,
    Enhanced = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsLossModel {
    PerPacket = 0,
    PerByte = 1,
}

/// Simulation parameters. Zero `window`, `timeout_ticks` and `bandwidth`
/// select the defaults; a negative `max_retries` means unbounded.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PsSimConfig {
    pub m: u16,
    pub max_iterations: u32,
    pub loss_p: f64,
    pub loss_model: PsLossModel,
    pub symmetric_loss: bool,
    pub latency_ticks: u64,
    pub window: u16,
    pub timeout_ticks: u64,
    pub max_retries: i64,
    pub seed: u64,
    pub variant: PsVariant,
    pub payload_bytes: u64,
    pub bandwidth: u64,
}

/// Aggregate results of one run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PsRunSummary {
    pub node_count: u64,
    pub rounds: u32,
    pub ticks: u64,
    pub avg_msgs: f64,
    pub max_msgs: u64,
    pub app_messages_sent: u64,
    pub app_messages_lost: u64,
    pub loss_fraction: f64,
    pub mem_proxy: u64,
    pub leader: u32,
    pub wall_seconds: f64,
}

/// Opaque graph handle.
pub struct PsGraph(Graph);

/// Opaque run result handle.
pub struct PsRunMetrics(RunMetrics);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let mut s = msg.into();
    s.retain(|c| c != '\0');
    let c = CString::new(s).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next `ps_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ps_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

struct Failure(PsStatus, String);

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        let status = match &e {
            GraphError::Parse { .. } | GraphError::Empty => PsStatus::Parse,
            GraphError::Disconnected { .. } => PsStatus::Disconnected,
            GraphError::Io(_) => PsStatus::Io,
            GraphError::InvalidNode(_) | GraphError::InvalidSpec(_) => PsStatus::InvalidArgument,
            GraphError::RetriesExhausted { .. } => PsStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Graph(g) => g.into(),
            SimError::InvalidConfig(_) => Failure(PsStatus::InvalidArgument, e.to_string()),
            other => Failure(PsStatus::Simulation, other.to_string()),
        }
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        let status = match e {
            StatsError::InsufficientData { .. } => PsStatus::InsufficientData,
            StatsError::UndefinedEffect => PsStatus::Undefined,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PsStatus::NullPointer, format!("{what} is NULL"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(PsStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn graph_ref<'a>(g: *const PsGraph) -> Result<&'a Graph, Failure> {
    g.as_ref().map(|g| &g.0).ok_or_else(|| null("graph"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

fn policy(largest_component: bool) -> ComponentPolicy {
    if largest_component {
        ComponentPolicy::TakeLargestComponent
    } else {
        ComponentPolicy::RejectDisconnected
    }
}

/// Loads a graph dump or edge list from `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_graph_load(
    path: *const c_char,
    largest_component: bool,
    out: *mut *mut PsGraph,
) -> PsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let g = load_graph_file(Path::new(path), policy(largest_component))?.graph;
        write_out(out, Box::into_raw(Box::new(PsGraph(g))))
    })
}

/// Parses a graph dump or edge list held in memory.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_graph_parse(
    text: *const c_char,
    largest_component: bool,
    out: *mut *mut PsGraph,
) -> PsStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let g = load_graph_text(text, policy(largest_component))?.graph;
        write_out(out, Box::into_raw(Box::new(PsGraph(g))))
    })
}

/// Builds a graph on nodes `0..n` from `edge_count` pairs stored flat in
/// `edges` (`2 * edge_count` entries).
///
/// # Safety
/// `edges` must point to `2 * edge_count` readable values.
#[no_mangle]
pub unsafe extern "C" fn ps_graph_from_edges(
    n: usize,
    edges: *const u32,
    edge_count: usize,
    out: *mut *mut PsGraph,
) -> PsStatus {
    guard(|| {
        let flat: &[u32] = if edge_count == 0 {
            &[]
        } else if edges.is_null() {
            return Err(null("edges"));
        } else {
            std::slice::from_raw_parts(edges, 2 * edge_count)
        };
        let g = Graph::from_edges(n, flat.chunks_exact(2).map(|p| (p[0], p[1])))?;
        write_out(out, Box::into_raw(Box::new(PsGraph(g))))
    })
}

/// Generates a random geometric graph on a `grid` x `grid` lattice.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_graph_generate(
    n: usize,
    grid: u32,
    range: f64,
    seed: u64,
    largest_component: bool,
    out: *mut *mut PsGraph,
) -> PsStatus {
    guard(|| {
        let spec = GeometricSpec {
            n,
            grid_side: grid,
            range,
            seed,
            connectivity: if largest_component {
                Connectivity::LargestComponent
            } else {
                Connectivity::Resample
            },
        };
        let g = generate_geometric(&spec)?;
        write_out(out, Box::into_raw(Box::new(PsGraph(g))))
    })
}

/// Releases a graph. NULL is ignored.
///
/// # Safety
/// `g` must come from a `ps_graph_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ps_graph_free(g: *mut PsGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Node count, or 0 for NULL.
///
/// # Safety
/// `g` must be NULL or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn ps_graph_node_count(g: *const PsGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.node_count())
}

/// Edge count, or 0 for NULL.
///
/// # Safety
/// `g` must be NULL or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn ps_graph_edge_count(g: *const PsGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.edge_count())
}

/// # Safety
/// `g` must be a live graph handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_graph_diameter(g: *const PsGraph, out: *mut u32) -> PsStatus {
    guard(|| {
        let g = graph_ref(g)?;
        if !g.is_connected() {
            return Err(GraphError::Disconnected { components: g.components().1 }.into());
        }
        write_out(out, diameter(g))
    })
}

/// Exact closeness of `node` as the fraction `numerator / denominator`.
///
/// # Safety
/// `g` must be a live graph handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ps_exact_closeness(
    g: *const PsGraph,
    node: u32,
    numerator: *mut u64,
    denominator: *mut u64,
) -> PsStatus {
    guard(|| {
        let g = graph_ref(g)?;
        if !g.contains(node) {
            return Err(GraphError::InvalidNode(node).into());
        }
        if !g.is_connected() {
            return Err(GraphError::Disconnected { components: g.components().1 }.into());
        }
        let s = exact_closeness(g, node);
        write_out(numerator, s.numerator)?;
        write_out(denominator, s.denominator)
    })
}

/// # Safety
/// `g` must be a live graph handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_hop_distance(g: *const PsGraph, i: u32, j: u32, out: *mut u32) -> PsStatus {
    guard(|| {
        let g = graph_ref(g)?;
        write_out(out, hop_distance(g, i, j)?)
    })
}

/// Defaults: m = 1, D = 12, no loss, latency 1, unbounded retries, original variant.
#[no_mangle]
pub extern "C" fn ps_sim_config_default() -> PsSimConfig {
    let d = SimConfig::default();
    PsSimConfig {
        m: d.m,
        max_iterations: d.max_iterations,
        loss_p: d.loss_p,
        loss_model: PsLossModel::PerPacket,
        symmetric_loss: d.symmetric_loss,
        latency_ticks: d.latency_ticks,
        window: 0,
        timeout_ticks: 0,
        max_retries: -1,
        seed: d.seed,
        variant: PsVariant::Original,
        payload_bytes: 0,
        bandwidth: 0,
    }
}

impl From<&PsSimConfig> for SimConfig {
    fn from(c: &PsSimConfig) -> Self {
        SimConfig {
            m: c.m,
            loss_p: c.loss_p,
            loss_model: match c.loss_model {
                PsLossModel::PerPacket => LossModel::PerPacket,
                PsLossModel::PerByte => LossModel::PerByte,
            },
            symmetric_loss: c.symmetric_loss,
            latency_ticks: c.latency_ticks,
            window: (c.window > 0).then_some(c.window),
            timeout_ticks: (c.timeout_ticks > 0).then_some(c.timeout_ticks),
            max_retries: u32::try_from(c.max_retries).ok(),
            seed: c.seed,
            max_iterations: c.max_iterations,
            variant: match c.variant {
                PsVariant::Original => Variant::Original,
                PsVariant::Enhanced => Variant::Enhanced,
            },
            payload_bytes: c.payload_bytes as usize,
            bandwidth: (c.bandwidth > 0).then_some(c.bandwidth),
        }
    }
}

/// Runs one simulation. `config` may be NULL for the defaults.
///
/// # Safety
/// `g` must be a live graph handle, `config` NULL or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ps_simulate(
    g: *const PsGraph,
    config: *const PsSimConfig,
    out: *mut *mut PsRunMetrics,
) -> PsStatus {
    guard(|| {
        let g = graph_ref(g)?;
        let cfg = match config.as_ref() {
            Some(c) => SimConfig::from(c),
            None => SimConfig::from(&ps_sim_config_default()),
        };
        let r = run_simulation(g, &cfg)?;
        write_out(out, Box::into_raw(Box::new(PsRunMetrics(r))))
    })
}

/// Releases a run result. NULL is ignored.
///
/// # Safety
/// `m` must come from [`ps_simulate`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ps_metrics_free(m: *mut PsRunMetrics) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live result handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_metrics_summary(m: *const PsRunMetrics, out: *mut PsRunSummary) -> PsStatus {
    guard(|| {
        let r = &m.as_ref().ok_or_else(|| null("metrics"))?.0;
        write_out(
            out,
            PsRunSummary {
                node_count: r.nodes.len() as u64,
                rounds: r.rounds,
                ticks: r.ticks,
                avg_msgs: r.avg_msgs,
                max_msgs: r.max_msgs,
                app_messages_sent: r.app_messages_sent,
                app_messages_lost: r.app_messages_lost,
                loss_fraction: r.loss_fraction,
                mem_proxy: r.mem_proxy,
                leader: r.leader,
                wall_seconds: r.wall_seconds,
            },
        )
    })
}

/// DATA packets sent by `node`, retransmissions included.
///
/// # Safety
/// `m` must be a live result handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_metrics_packets_sent(m: *const PsRunMetrics, node: u32, out: *mut u64) -> PsStatus {
    guard(|| {
        let r = &m.as_ref().ok_or_else(|| null("metrics"))?.0;
        let n = r.nodes.get(node as usize).ok_or(GraphError::InvalidNode(node))?;
        write_out(out, n.packets_sent)
    })
}

/// Final closeness estimate of `node` as a fraction.
///
/// # Safety
/// `m` must be a live result handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ps_metrics_estimate(
    m: *const PsRunMetrics,
    node: u32,
    numerator: *mut u64,
    denominator: *mut u64,
) -> PsStatus {
    guard(|| {
        let r = &m.as_ref().ok_or_else(|| null("metrics"))?.0;
        let n = r.nodes.get(node as usize).ok_or(GraphError::InvalidNode(node))?;
        write_out(numerator, n.estimate.numerator)?;
        write_out(denominator, n.estimate.denominator)
    })
}

unsafe fn diffs_arg<'a>(diffs: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if len == 0 {
        Ok(&[])
    } else if diffs.is_null() {
        Err(null("diffs"))
    } else {
        Ok(std::slice::from_raw_parts(diffs, len))
    }
}

/// Two-sided Wilcoxon signed-rank p-value of paired differences.
///
/// # Safety
/// `diffs` must point to `len` readable values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ps_wilcoxon(diffs: *const f64, len: usize, out: *mut f64) -> PsStatus {
    guard(|| {
        let d = diffs_arg(diffs, len)?;
        let nonzero = d.iter().filter(|x| **x != 0.0).count();
        let p = if nonzero <= EXACT_LIMIT {
            wilcoxon_exact(d)?
        } else {
            wilcoxon_normal(d)?
        };
        write_out(out, p)
    })
}

/// Mean over sample standard deviation of paired differences.
///
/// # Safety
/// `diffs` must point to `len` readable values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ps_effect_size(diffs: *const f64, len: usize, out: *mut f64) -> PsStatus {
    guard(|| {
        let d = diffs_arg(diffs, len)?;
        write_out(out, effect_size_of(d)?)
    })
}
