//! Command-line front end. Every command prints `key=value` lines first and
//! a short human summary after them.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::experiment::{
    curve, mean_reduction, paired_samples, quality_sweep, read_results, run_plan, summarize,
    write_csv, create_file, ExperimentPlan, Metric, NamedGraph, PreparedGraph,
};
use crate::graph::{
    diameter, exact_leader, generate_geometric, hop_distance, load_graph_file, ComponentPolicy,
    Connectivity, GeometricSpec, Graph,
};
use crate::protocol::Variant;
use crate::simnet::{run_simulation, LossModel, RunMetrics, SimConfig};
use crate::stats::{effect_size, wilcoxon_signed_rank};

/// Environment variable naming the default directory for generated files.
pub const OUT_DIR_ENV: &str = "PRUNESIM_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "prunesim", version, about = "Pruned closeness-centrality simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random geometric graph and write its dump.
    Gen(GenArgs),
    /// Simulate one variant on one graph.
    Run(RunArgs),
    /// Simulate both variants on one graph and report paired differences.
    Compare(CompareArgs),
    /// Execute an experiment plan.
    Sweep(SweepArgs),
    /// Hop distance between exact and estimated leaders across D values.
    Quality(QualityArgs),
    /// Wilcoxon tests and effect sizes from a results file.
    Stats(StatsArgs),
    /// Export CSV series for figures.
    Plotdata(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConnectArg {
    Resample,
    LargestComponent,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = GeometricSpec::DEFAULT_GRID)]
    pub grid: u32,
    #[arg(long, default_value_t = GeometricSpec::DEFAULT_RANGE)]
    pub range: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// What to do when the sample is disconnected.
    #[arg(long, value_enum, default_value_t = ConnectArg::Resample)]
    pub connect: ConnectArg,
    /// Output file; defaults to a name derived from n and seed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Original,
    Enhanced,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Original => Variant::Original,
            VariantArg::Enhanced => Variant::Enhanced,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossModelArg {
    PerPacket,
    PerByte,
}

/// Retry budget: a count or `unbounded`.
fn parse_retries(s: &str) -> Result<Option<u32>, String> {
    if s.eq_ignore_ascii_case("unbounded") || s.eq_ignore_ascii_case("inf") {
        return Ok(None);
    }
    s.parse::<u32>()
        .map(Some)
        .map_err(|_| format!("expected a count or 'unbounded', got {s:?}"))
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Graph file (dump or edge list).
    #[arg(long)]
    pub graph: PathBuf,
    /// Packets per message.
    #[arg(long, default_value_t = 1)]
    pub m: u16,
    /// Iteration cap.
    #[arg(long = "D", default_value_t = 12)]
    pub d: u32,
    /// Loss probability (per packet, or per byte with --loss-model per-byte).
    #[arg(long, default_value_t = 0.0)]
    pub loss: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Retransmission rounds before a message is abandoned; defaults to
    /// unbounded when loss is zero and 16 otherwise.
    #[arg(long, value_parser = parse_retries)]
    pub max_retries: Option<Option<u32>>,
    #[arg(long, default_value_t = 1)]
    pub latency: u64,
    #[arg(long)]
    pub window: Option<u16>,
    #[arg(long)]
    pub timeout: Option<u64>,
    #[arg(long, value_enum, default_value_t = LossModelArg::PerPacket)]
    pub loss_model: LossModelArg,
    #[arg(long)]
    pub symmetric_loss: bool,
    /// Pad every serialized message to at least this many bytes.
    #[arg(long, default_value_t = 0)]
    pub payload_bytes: usize,
    /// Link capacity in bytes per tick.
    #[arg(long)]
    pub bandwidth: Option<u64>,
}

/// Retry budget used for lossy runs when none is given.
pub const LOSSY_DEFAULT_RETRIES: u32 = 16;

impl SimArgs {
    pub fn config(&self, variant: Variant) -> SimConfig {
        let max_retries = match self.max_retries {
            Some(r) => r,
            None if self.loss > 0.0 => Some(LOSSY_DEFAULT_RETRIES),
            None => None,
        };
        SimConfig {
            m: self.m,
            loss_p: self.loss,
            loss_model: match self.loss_model {
                LossModelArg::PerPacket => LossModel::PerPacket,
                LossModelArg::PerByte => LossModel::PerByte,
            },
            symmetric_loss: self.symmetric_loss,
            latency_ticks: self.latency,
            window: self.window,
            timeout_ticks: self.timeout,
            max_retries,
            seed: self.seed,
            max_iterations: self.d,
            variant,
            payload_bytes: self.payload_bytes,
            bandwidth: self.bandwidth,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, value_enum, default_value_t = VariantArg::Original)]
    pub variant: VariantArg,
    /// Write per-node JSON detail to this file (`-` for stdout).
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Plan file (TOML).
    #[arg(long)]
    pub plan: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Results file; overrides the plan's `output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QualityArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Comma-separated D values.
    #[arg(long = "D", value_delimiter = ',', default_values_t = vec![2u32, 5, 8, 12, 14, 20, 24, 28])]
    pub d: Vec<u32>,
    #[arg(long, default_value_t = 1)]
    pub m: u16,
    /// Also write the records as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// Restrict to these metrics (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub metric: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// Histogram of paired differences in average messages.
    Histogram,
    /// Per-node packets sent under both variants on one graph.
    Boxplot,
    /// Median ticks, loss and memory per m and loss probability.
    Curves,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(value_enum)]
    pub kind: PlotKind,
    /// Results CSV (histogram, curves).
    #[arg(long)]
    pub results: Option<PathBuf>,
    /// Graph file (boxplot).
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long = "D", default_value_t = 12)]
    pub d: u32,
    #[arg(long, default_value_t = 1)]
    pub m: u16,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Output CSV; defaults to `<kind>.csv` in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

fn fail<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Failure(e.to_string())
}

type CmdResult = Result<(), CliError>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Run(a) => cmd_run(a, out),
        Command::Compare(a) => cmd_compare(a, out),
        Command::Sweep(a) => cmd_sweep(a, out, err),
        Command::Quality(a) => cmd_quality(a, out),
        Command::Stats(a) => cmd_stats(a, out),
        Command::Plotdata(a) => cmd_plotdata(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let (CliError::Usage(msg) | CliError::Failure(msg)) = &e;
            let _ = writeln!(err, "error: {msg}");
            e.code()
        }
    }
}

fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load(path: &Path) -> Result<Graph, CliError> {
    load_graph_file(path, ComponentPolicy::TakeLargestComponent)
        .map(|l| l.graph)
        .map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))
}

macro_rules! kv {
    ($out:expr, $($key:literal => $val:expr),+ $(,)?) => {
        $( writeln!($out, concat!($key, "={}"), $val).map_err(fail)?; )+
    };
}

fn cmd_gen(a: GenArgs, out: &mut dyn Write) -> CmdResult {
    let spec = GeometricSpec {
        n: a.n,
        grid_side: a.grid,
        range: a.range,
        seed: a.seed,
        connectivity: match a.connect {
            ConnectArg::Resample => Connectivity::Resample,
            ConnectArg::LargestComponent => Connectivity::LargestComponent,
        },
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let g = generate_geometric(&spec).map_err(fail)?;
    let path = a
        .out
        .unwrap_or_else(|| out_dir().join(format!("geo-n{}-s{}.txt", a.n, a.seed)));
    let file = create_file(&path).map_err(fail)?;
    g.write_dump(std::io::BufWriter::new(file)).map_err(fail)?;
    let diam = diameter(&g);
    kv!(out,
        "path" => path.display(),
        "n" => g.node_count(),
        "edges" => g.edge_count(),
        "diameter" => diam,
    );
    writeln!(
        out,
        "generated a {}-node geometric graph with {} edges and diameter {}",
        g.node_count(),
        g.edge_count(),
        diam
    )
    .map_err(fail)
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn print_metrics(out: &mut dyn Write, g: &Graph, r: &RunMetrics) -> CmdResult {
    let exact = exact_leader(g);
    kv!(out,
        "variant" => r.variant,
        "n" => g.node_count(),
        "edges" => g.edge_count(),
        "m" => r.m,
        "D" => r.max_iterations,
        "loss_p" => r.loss_p,
        "seed" => r.seed,
        "rounds" => r.rounds,
        "ticks" => r.ticks,
        "avg_msgs" => r.avg_msgs,
        "max_msgs" => r.max_msgs,
        "app_messages_sent" => r.app_messages_sent,
        "app_messages_lost" => r.app_messages_lost,
        "loss_frac" => r.loss_fraction,
        "mem_proxy" => r.mem_proxy,
        "leader" => r.leader,
        "leader_estimate" => r.nodes[r.leader as usize].estimate,
        "exact_leader" => exact,
        "leader_dist_exact" => hop_distance(g, exact, r.leader).map_err(fail)?,
        "packets_sent" => join(r.nodes.iter().map(|n| n.packets_sent)),
        "wall_s" => r.wall_seconds,
    );
    Ok(())
}

fn cmd_run(a: RunArgs, out: &mut dyn Write) -> CmdResult {
    let g = load(&a.sim.graph)?;
    let cfg = a.sim.config(a.variant.into());
    let r = run_simulation(&g, &cfg).map_err(fail)?;
    print_metrics(out, &g, &r)?;
    match a.json.as_deref() {
        Some(p) if p == Path::new("-") => writeln!(out, "{}", r.to_json()).map_err(fail)?,
        Some(p) => {
            let mut f = create_file(p).map_err(fail)?;
            writeln!(f, "{}", r.to_json()).map_err(fail)?;
        }
        None => {}
    }
    writeln!(
        out,
        "{} pruning on {} nodes: leader {}, {:.2} packets per node on average, {:.1}% of messages lost",
        r.variant,
        g.node_count(),
        r.leader,
        r.avg_msgs,
        100.0 * r.loss_fraction
    )
    .map_err(fail)
}

fn cmd_compare(a: CompareArgs, out: &mut dyn Write) -> CmdResult {
    let g = load(&a.sim.graph)?;
    let p = run_simulation(&g, &a.sim.config(Variant::Original)).map_err(fail)?;
    let i = run_simulation(&g, &a.sim.config(Variant::Enhanced)).map_err(fail)?;
    let exact = exact_leader(&g);
    let dist = |l| hop_distance(&g, exact, l).map_err(fail);
    let reduction = if p.avg_msgs > 0.0 {
        100.0 * (p.avg_msgs - i.avg_msgs) / p.avg_msgs
    } else {
        0.0
    };
    kv!(out,
        "n" => g.node_count(),
        "edges" => g.edge_count(),
        "m" => a.sim.m,
        "D" => a.sim.d,
        "loss_p" => a.sim.loss,
        "seed" => a.sim.seed,
        "avg_msgs_P" => p.avg_msgs,
        "avg_msgs_I" => i.avg_msgs,
        "avg_msgs_diff" => p.avg_msgs - i.avg_msgs,
        "max_msgs_P" => p.max_msgs,
        "max_msgs_I" => i.max_msgs,
        "ticks_P" => p.ticks,
        "ticks_I" => i.ticks,
        "mem_proxy_P" => p.mem_proxy,
        "mem_proxy_I" => i.mem_proxy,
        "loss_frac_P" => p.loss_fraction,
        "loss_frac_I" => i.loss_fraction,
        "leader_P" => p.leader,
        "leader_I" => i.leader,
        "leader_match" => p.leader == i.leader,
        "exact_leader" => exact,
        "leader_dist_exact_P" => dist(p.leader)?,
        "leader_dist_exact_I" => dist(i.leader)?,
        "reduction_pct" => reduction,
        "wall_s_P" => p.wall_seconds,
        "wall_s_I" => i.wall_seconds,
    );
    writeln!(
        out,
        "enhanced sends {:.2}% fewer packets per node ({:.2} vs {:.2}); leaders {} and {}",
        reduction, i.avg_msgs, p.avg_msgs, i.leader, p.leader
    )
    .map_err(fail)
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let mut plan = ExperimentPlan::from_file(&a.plan).map_err(fail)?;
    if let Some(o) = a.out {
        plan.output = Some(o);
    }
    if plan.output.is_none() {
        plan.output = Some(out_dir().join("results.csv"));
    }
    let report = run_plan(&plan, a.jobs).map_err(fail)?;
    for e in &report.source_errors {
        writeln!(err, "source error: {e}").map_err(fail)?;
    }
    let summary = summarize(&report.rows);
    kv!(out,
        "output" => plan.output.as_deref().unwrap_or(Path::new("")).display(),
        "rows" => report.rows.len(),
        "executed" => report.executed,
        "source_errors" => report.source_errors.len(),
        "cell_errors" => report.cell_errors(),
    );
    if let Some(r) = mean_reduction(&summary) {
        kv!(out, "mean_reduction_pct" => r);
    }
    writeln!(
        out,
        "ran {} of {} cells over {} graph/m groups",
        report.executed,
        report.rows.len(),
        summary.len()
    )
    .map_err(fail)?;
    if !report.source_errors.is_empty() || report.cell_errors() > 0 {
        return Err(CliError::Failure(format!(
            "{} source errors, {} failed cells",
            report.source_errors.len(),
            report.cell_errors()
        )));
    }
    Ok(())
}

fn cmd_quality(a: QualityArgs, out: &mut dyn Write) -> CmdResult {
    let g = load(&a.graph)?;
    let id = a
        .graph
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let prepared = PreparedGraph::new(NamedGraph { id, graph: g });
    let base = SimConfig {
        m: a.m,
        ..SimConfig::default()
    };
    let records = quality_sweep(&prepared, &a.d, &base).map_err(fail)?;
    kv!(out,
        "n" => prepared.graph.node_count(),
        "diameter" => prepared.diameter,
        "exact_leader" => prepared.exact_leader,
    );
    for r in &records {
        writeln!(
            out,
            "D={} leader_P={} leader_I={} dist_P={} dist_I={}",
            r.d, r.leader_original, r.leader_enhanced, r.dist_original, r.dist_enhanced
        )
        .map_err(fail)?;
    }
    if let Some(p) = a.out.as_deref() {
        write_csv(create_file(p).map_err(fail)?, &records).map_err(fail)?;
    }
    let agree = records.iter().all(|r| r.leader_original == r.leader_enhanced);
    writeln!(
        out,
        "{} D values; variants {} on every leader",
        records.len(),
        if agree { "agree" } else { "disagree" }
    )
    .map_err(fail)
}

fn cmd_stats(a: StatsArgs, out: &mut dyn Write) -> CmdResult {
    let rows = read_results(&a.results).map_err(fail)?;
    let metrics: Vec<Metric> = if a.metric.is_empty() {
        Metric::ALL.to_vec()
    } else {
        a.metric
            .iter()
            .map(|name| {
                Metric::from_name(name).ok_or_else(|| CliError::Usage(format!("unknown metric {name:?}")))
            })
            .collect::<Result<_, _>>()?
    };
    let mut any = false;
    for metric in metrics {
        let pairs = paired_samples(&rows, metric);
        let nonzero = pairs.iter().filter(|p| p.difference != 0.0).count();
        let p = wilcoxon_signed_rank(&pairs);
        let e = effect_size(&pairs);
        write!(out, "metric={} pairs={} nonzero={}", metric.name(), pairs.len(), nonzero).map_err(fail)?;
        match &p {
            Ok(p) => write!(out, " p_value={p}").map_err(fail)?,
            Err(err) => write!(out, " p_value=NA p_error=\"{err}\"").map_err(fail)?,
        }
        match &e {
            Ok(e) => write!(out, " effect_size={e}").map_err(fail)?,
            Err(err) => write!(out, " effect_size=NA effect_error=\"{err}\"").map_err(fail)?,
        }
        writeln!(out).map_err(fail)?;
        any |= p.is_ok() || e.is_ok();
    }
    if !any {
        return Err(CliError::Failure(
            "insufficient data: no metric has enough nonzero paired differences".into(),
        ));
    }
    writeln!(out, "positive differences favour the enhanced variant; significance level 0.01").map_err(fail)
}

#[derive(serde::Serialize)]
struct HistogramBin {
    bin_lo: f64,
    bin_hi: f64,
    count: usize,
}

#[derive(serde::Serialize)]
struct BoxRow {
    node: u32,
    #[serde(rename = "P")]
    p: u64,
    #[serde(rename = "I")]
    i: u64,
}

#[derive(serde::Serialize)]
struct CurveRow {
    variant: Variant,
    m: u16,
    loss_p: f64,
    ticks_median: f64,
    loss_frac_median: f64,
    mem_proxy_median: f64,
}

fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    let bins = bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return Vec::new();
    }
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            bin_lo: lo + k as f64 * width,
            bin_hi: lo + (k + 1) as f64 * width,
            count,
        })
        .collect()
}

fn cmd_plotdata(a: PlotArgs, out: &mut dyn Write) -> CmdResult {
    let name = match a.kind {
        PlotKind::Histogram => "histogram",
        PlotKind::Boxplot => "boxplot",
        PlotKind::Curves => "curves",
    };
    let path = a.out.clone().unwrap_or_else(|| out_dir().join(format!("{name}.csv")));
    let need_results = || {
        a.results
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("{name} needs --results")))
    };
    let lines = match a.kind {
        PlotKind::Histogram => {
            let rows = read_results(need_results()?).map_err(fail)?;
            let diffs: Vec<f64> = paired_samples(&rows, Metric::AvgMsgs)
                .iter()
                .map(|p| p.difference)
                .collect();
            let h = histogram(&diffs, a.bins);
            write_csv(create_file(&path).map_err(fail)?, &h).map_err(fail)?;
            h.len()
        }
        PlotKind::Boxplot => {
            let gpath = a
                .graph
                .as_deref()
                .ok_or_else(|| CliError::Usage("boxplot needs --graph".into()))?;
            let g = load(gpath)?;
            let cfg = |variant| SimConfig {
                m: a.m,
                max_iterations: a.d,
                seed: a.seed,
                variant,
                ..SimConfig::default()
            };
            let p = run_simulation(&g, &cfg(Variant::Original)).map_err(fail)?;
            let i = run_simulation(&g, &cfg(Variant::Enhanced)).map_err(fail)?;
            let rows: Vec<BoxRow> = p
                .nodes
                .iter()
                .zip(&i.nodes)
                .map(|(x, y)| BoxRow {
                    node: x.node,
                    p: x.packets_sent,
                    i: y.packets_sent,
                })
                .collect();
            write_csv(create_file(&path).map_err(fail)?, &rows).map_err(fail)?;
            rows.len()
        }
        PlotKind::Curves => {
            let rows = read_results(need_results()?).map_err(fail)?;
            let mut series = Vec::new();
            for variant in Variant::ALL {
                let ticks = curve(&rows, Metric::Ticks, variant);
                let loss = curve(&rows, Metric::LossFraction, variant);
                let mem = curve(&rows, Metric::MemProxy, variant);
                for ((t, l), mm) in ticks.iter().zip(&loss).zip(&mem) {
                    series.push(CurveRow {
                        variant,
                        m: t.0,
                        loss_p: t.1,
                        ticks_median: t.2,
                        loss_frac_median: l.2,
                        mem_proxy_median: mm.2,
                    });
                }
            }
            write_csv(create_file(&path).map_err(fail)?, &series).map_err(fail)?;
            series.len()
        }
    };
    kv!(out, "kind" => name, "path" => path.display(), "rows" => lines);
    writeln!(out, "wrote {lines} {name} rows").map_err(fail)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("prunesim").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(call(&["run", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(call(&["nothing"]).0, EXIT_USAGE);
    }

    #[test]
    fn gen_capacity_bound() {
        let (code, _, err) = call(&["gen", "--n", "70000", "--grid", "250"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("exceeds"));
    }

    #[test]
    fn gen_defaults() {
        let cli = Cli::try_parse_from(["prunesim", "gen", "--n", "5"]).unwrap();
        let Command::Gen(g) = cli.command else { panic!() };
        assert_eq!(g.grid, 250);
        assert_eq!(g.range, 10.0);
    }

    #[test]
    fn retries_parse() {
        assert_eq!(parse_retries("unbounded"), Ok(None));
        assert_eq!(parse_retries("3"), Ok(Some(3)));
        assert!(parse_retries("x").is_err());
    }

    #[test]
    fn lossy_runs_default_to_bounded_retries() {
        let cli = Cli::try_parse_from(["prunesim", "run", "--graph", "g", "--loss", "0.1"]).unwrap();
        let Command::Run(r) = cli.command else { panic!() };
        assert_eq!(r.sim.config(Variant::Original).max_retries, Some(LOSSY_DEFAULT_RETRIES));
        let cli = Cli::try_parse_from(["prunesim", "run", "--graph", "g"]).unwrap();
        let Command::Run(r) = cli.command else { panic!() };
        assert_eq!(r.sim.config(Variant::Original).max_retries, None);
    }

    #[test]
    fn histogram_bins() {
        let h = histogram(&[0.0, 1.0, 2.0, 2.0], 2);
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), vec![1, 3]);
        assert!(histogram(&[], 4).is_empty());
        assert_eq!(histogram(&[5.0, 5.0], 3)[0].count, 2);
    }
}
