//! Round-based simulation of every node over lossy FIFO links.
//!
//! Rounds are separated by barriers. Inside a round the exchange runs on a
//! tick clock: each directed link has a transmit queue (one DATA packet per
//! tick, or a byte budget per tick when a bandwidth is set) followed by a
//! wire with fixed latency. ACKs skip the transmit queue. Within one tick
//! the order is: deliveries, timer expiries, window refills, transmissions.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::time::Instant;

use bytes::{Bytes, BytesMut};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, NodeId};
use crate::protocol::{AppMessage, Envelope, NodeState, ProtocolError, Status, Variant};
use crate::score::{argmax, Score};
use crate::transport::{
    fragment, GbnReceiver, GbnSender, MsgKey, Packet, PacketBody, SenderEvent, TransportError,
    MAX_PACKETS,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("exchange stalled at tick {tick} with {pending} undelivered messages")]
    Deadlock { tick: u64, pending: usize },
}

/// How `loss_p` is applied to a DATA packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossModel {
    /// Each packet is dropped with probability `loss_p`.
    #[default]
    PerPacket,
    /// Each wire byte is corrupted with probability `loss_p`; a packet of
    /// `L` bytes is dropped with probability `1 - (1 - loss_p)^L`.
    PerByte,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Packets per application message.
    pub m: u16,
    pub loss_p: f64,
    pub loss_model: LossModel,
    /// Apply loss to ACKs as well as DATA.
    pub symmetric_loss: bool,
    pub latency_ticks: u64,
    /// Go-Back-N window; `None` uses `m`.
    pub window: Option<u16>,
    /// Retransmission timeout; `None` uses four times the latency.
    pub timeout_ticks: Option<u64>,
    /// `None` retries forever.
    pub max_retries: Option<u32>,
    pub seed: u64,
    /// Iteration cap D.
    pub max_iterations: u32,
    pub variant: Variant,
    /// Serialized messages shorter than this are zero-padded up to it.
    pub payload_bytes: usize,
    /// Link capacity in bytes per tick; `None` sends one DATA packet per tick.
    pub bandwidth: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            m: 1,
            loss_p: 0.0,
            loss_model: LossModel::PerPacket,
            symmetric_loss: false,
            latency_ticks: 1,
            window: None,
            timeout_ticks: None,
            max_retries: None,
            seed: 0,
            max_iterations: 12,
            variant: Variant::Original,
            payload_bytes: 0,
            bandwidth: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.m == 0 || self.m > MAX_PACKETS {
            return bad(format!("m must be in [1, {MAX_PACKETS}], got {}", self.m));
        }
        if !(0.0..1.0).contains(&self.loss_p) {
            return bad(format!("loss_p must be in [0, 1), got {}", self.loss_p));
        }
        if self.max_iterations == 0 || self.max_iterations > u16::MAX as u32 {
            return bad(format!("D must be in [1, 65535], got {}", self.max_iterations));
        }
        if self.latency_ticks == 0 {
            return bad("latency must be at least one tick".into());
        }
        if self.window == Some(0) {
            return bad("window must be at least 1".into());
        }
        if self.timeout_ticks == Some(0) {
            return bad("timeout must be at least one tick".into());
        }
        if self.bandwidth == Some(0) {
            return bad("bandwidth must be positive".into());
        }
        Ok(())
    }

    pub fn effective_window(&self) -> usize {
        self.window.unwrap_or(self.m) as usize
    }

    pub fn effective_timeout(&self) -> u64 {
        self.timeout_ticks.unwrap_or(4 * self.latency_ticks)
    }
}

// ---------------------------------------------------------------------------
// Channels
// ---------------------------------------------------------------------------

/// Decides which transmitted packets vanish on the wire.
pub trait Channel {
    fn drop_data(&mut self, from: NodeId, to: NodeId, packet: &Packet) -> bool;
    fn drop_ack(&mut self, from: NodeId, to: NodeId, packet: &Packet) -> bool;
}

/// Bernoulli loss with one random stream per directed link, so the n-th
/// DATA packet on a link sees the same draw whatever the variant.
#[derive(Debug, Clone)]
pub struct SeededChannel {
    seed: u64,
    loss_p: f64,
    model: LossModel,
    symmetric: bool,
    data_streams: BTreeMap<(NodeId, NodeId), ChaCha8Rng>,
    ack_streams: BTreeMap<(NodeId, NodeId), ChaCha8Rng>,
}

const ACK_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

impl SeededChannel {
    pub fn new(cfg: &SimConfig) -> Self {
        SeededChannel {
            seed: cfg.seed,
            loss_p: cfg.loss_p,
            model: cfg.loss_model,
            symmetric: cfg.symmetric_loss,
            data_streams: BTreeMap::new(),
            ack_streams: BTreeMap::new(),
        }
    }

    fn drop_probability(&self, packet: &Packet) -> f64 {
        match self.model {
            LossModel::PerPacket => self.loss_p,
            LossModel::PerByte => 1.0 - (1.0 - self.loss_p).powi(packet.wire_len() as i32),
        }
    }

    fn draw(
        streams: &mut BTreeMap<(NodeId, NodeId), ChaCha8Rng>,
        seed: u64,
        from: NodeId,
        to: NodeId,
        p: f64,
    ) -> bool {
        let rng = streams.entry((from, to)).or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((from as u64) << 32) | to as u64);
            rng
        });
        rng.gen::<f64>() < p
    }
}

impl Channel for SeededChannel {
    fn drop_data(&mut self, from: NodeId, to: NodeId, packet: &Packet) -> bool {
        if self.loss_p == 0.0 {
            return false;
        }
        let p = self.drop_probability(packet);
        Self::draw(&mut self.data_streams, self.seed, from, to, p)
    }

    fn drop_ack(&mut self, from: NodeId, to: NodeId, packet: &Packet) -> bool {
        if !self.symmetric || self.loss_p == 0.0 {
            return false;
        }
        let p = self.drop_probability(packet);
        Self::draw(&mut self.ack_streams, self.seed ^ ACK_SEED_SALT, from, to, p)
    }
}

/// Drops the `occurrence`-th transmission (counting from zero) of one DATA packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptedDrop {
    pub key: MsgKey,
    pub seq: u16,
    pub occurrence: u32,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedChannel {
    drops: Vec<ScriptedDrop>,
    seen: HashMap<(MsgKey, u16), u32>,
}

impl ScriptedChannel {
    pub fn new(drops: Vec<ScriptedDrop>) -> Self {
        ScriptedChannel {
            drops,
            seen: HashMap::new(),
        }
    }
}

impl Channel for ScriptedChannel {
    fn drop_data(&mut self, _from: NodeId, _to: NodeId, packet: &Packet) -> bool {
        let count = self.seen.entry((packet.key, packet.seq)).or_insert(0);
        let occurrence = *count;
        *count += 1;
        self.drops
            .iter()
            .any(|d| d.key == packet.key && d.seq == packet.seq && d.occurrence == occurrence)
    }

    fn drop_ack(&mut self, _from: NodeId, _to: NodeId, _packet: &Packet) -> bool {
        false
    }
}

/// One packet put on a wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub tick: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub dropped: bool,
    pub bytes: Bytes,
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub node: NodeId,
    pub degree: usize,
    /// DATA packets put on the wire, retransmissions included.
    pub packets_sent: u64,
    pub packets_received: u64,
    pub retransmissions: u64,
    pub app_messages_sent: u64,
    pub app_messages_lost: u64,
    /// Iterations the node stayed active before stopping.
    pub active_iterations: u32,
    pub view_size: usize,
    pub q_size: usize,
    /// Peak of stored ids plus buffered transport bytes.
    pub buffer_peak: u64,
    pub estimate: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub variant: Variant,
    pub m: u16,
    pub max_iterations: u32,
    pub loss_p: f64,
    pub seed: u64,
    pub nodes: Vec<NodeMetrics>,
    pub rounds: u32,
    pub ticks: u64,
    pub wall_seconds: f64,
    pub avg_msgs: f64,
    pub max_msgs: u64,
    pub app_messages_sent: u64,
    pub app_messages_lost: u64,
    /// Share of application messages never assembled at their receiver.
    pub loss_fraction: f64,
    pub mem_proxy: u64,
    pub leader: NodeId,
}

impl RunMetrics {
    pub fn estimates(&self) -> Vec<Score> {
        self.nodes.iter().map(|n| n.estimate).collect()
    }

    /// Equality on everything except `wall_seconds`.
    pub fn same_outcome(&self, other: &RunMetrics) -> bool {
        let mut a = self.clone();
        a.wall_seconds = other.wall_seconds;
        a == *other
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// Node with the largest estimate; ties go to the smallest id.
pub fn select_most_central(metrics: &RunMetrics) -> NodeId {
    argmax(&metrics.estimates()).unwrap_or(0) as NodeId
}

// ---------------------------------------------------------------------------
// Exchange
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
struct Counters {
    packets_sent: u64,
    packets_received: u64,
    retransmissions: u64,
    app_messages_sent: u64,
    app_messages_lost: u64,
    buffer_peak: u64,
}

#[derive(Debug)]
struct Flow {
    sender: GbnSender,
    receiver: GbnReceiver,
    timer_start: Option<u64>,
    wired_at: Vec<Option<u64>>,
    delivered: bool,
    failed: bool,
}

impl Flow {
    fn sending(&self) -> bool {
        !self.sender.is_complete() && !self.failed
    }

    fn rearm_timer(&mut self) {
        let base = self.sender.base();
        self.timer_start = if base < self.sender.next_seq() {
            self.wired_at[base]
        } else {
            None
        };
    }
}

#[derive(Debug, Default)]
struct Link {
    tx: VecDeque<Packet>,
    credit: u64,
    wire: VecDeque<(u64, Packet)>,
}

impl Link {
    fn idle(&self) -> bool {
        self.tx.is_empty() && self.wire.is_empty()
    }
}

/// Drives exchanges for one run. Owns the clock and the per-node counters.
pub struct Network<'c> {
    cfg: SimConfig,
    channel: &'c mut dyn Channel,
    links: BTreeMap<(NodeId, NodeId), Link>,
    clock: u64,
    counters: Vec<Counters>,
    stored_ids: Vec<u64>,
    trace: Option<Vec<TraceEvent>>,
}

impl<'c> Network<'c> {
    pub fn new(node_count: usize, cfg: SimConfig, channel: &'c mut dyn Channel) -> Self {
        Network {
            cfg,
            channel,
            links: BTreeMap::new(),
            clock: 0,
            counters: vec![Counters::default(); node_count],
            stored_ids: vec![0; node_count],
            trace: None,
        }
    }

    /// Start recording every wire transmission.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.take().unwrap_or_default()
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    fn note_stored_ids(&mut self, node: NodeId, ids: usize) {
        let c = &mut self.counters[node as usize];
        self.stored_ids[node as usize] = ids as u64;
        c.buffer_peak = c.buffer_peak.max(ids as u64);
    }

    fn encode_padded(&self, message: &AppMessage) -> Bytes {
        let bytes = message.encode();
        if bytes.len() >= self.cfg.payload_bytes {
            return bytes;
        }
        let mut buf = BytesMut::from(bytes.as_ref());
        buf.resize(self.cfg.payload_bytes, 0);
        buf.freeze()
    }

    /// Moves every envelope to its receiver. Returns, per receiver, the
    /// messages that were fully assembled, ordered by (sender, iteration).
    pub fn exchange(
        &mut self,
        outgoing: Vec<Envelope>,
    ) -> Result<BTreeMap<NodeId, Vec<AppMessage>>, SimError> {
        let mut delivered: BTreeMap<NodeId, Vec<AppMessage>> = BTreeMap::new();
        if outgoing.is_empty() {
            return Ok(delivered);
        }
        let m = self.cfg.m as usize;
        let window = self.cfg.effective_window();
        let timeout = self.cfg.effective_timeout();
        let latency = self.cfg.latency_ticks;

        let mut flows: Vec<Flow> = Vec::with_capacity(outgoing.len());
        let mut index: HashMap<MsgKey, usize> = HashMap::with_capacity(outgoing.len());
        for env in outgoing {
            let key = MsgKey {
                sender: env.message.sender,
                receiver: env.to,
                iteration: env.message.iteration,
            };
            let packets = fragment(key, &self.encode_padded(&env.message), m)?;
            self.counters[key.sender as usize].app_messages_sent += 1;
            index.insert(key, flows.len());
            flows.push(Flow {
                sender: GbnSender::new(packets, window, timeout, self.cfg.max_retries),
                receiver: GbnReceiver::new(key, m as u16),
                timer_start: None,
                wired_at: vec![None; m],
                delivered: false,
                failed: false,
            });
        }

        let mut unresolved = flows.len();
        let mut tick = self.clock;
        let mut acks: Vec<(NodeId, NodeId, Packet)> = Vec::new();
        loop {
            tick = self.next_tick(tick, &flows, timeout);

            // deliveries
            for (&(from, to), link) in self.links.iter_mut() {
                while link.wire.front().is_some_and(|(at, _)| *at <= tick) {
                    let (_, packet) = link.wire.pop_front().unwrap();
                    let flow = &mut flows[index[&packet.key]];
                    match packet.body {
                        PacketBody::Data(_) => {
                            self.counters[to as usize].packets_received += 1;
                            let out = flow.receiver.receive(&packet)?;
                            if let Some(msg) = out.completed {
                                if flow.failed {
                                    self.counters[from as usize].app_messages_lost -= 1;
                                } else {
                                    unresolved -= 1;
                                }
                                flow.delivered = true;
                                delivered.entry(to).or_default().push(msg);
                            }
                            acks.push((to, from, out.ack));
                        }
                        PacketBody::Ack(k) => {
                            let before = flow.sender.base();
                            if flow.sending() {
                                flow.sender.step(SenderEvent::Ack(k)).ok();
                            }
                            if flow.sender.base() != before {
                                flow.rearm_timer();
                            }
                        }
                    }
                }
            }
            for (from, to, ack) in acks.drain(..) {
                let dropped = self.channel.drop_ack(from, to, &ack);
                if let Some(trace) = self.trace.as_mut() {
                    trace.push(TraceEvent {
                        tick,
                        from,
                        to,
                        dropped,
                        bytes: ack.encode(),
                    });
                }
                if !dropped {
                    let link = self.links.entry((from, to)).or_default();
                    link.wire.push_back((tick + latency, ack));
                }
            }

            // timer expiries
            for flow in flows.iter_mut() {
                if !flow.sending() || !flow.timer_start.is_some_and(|s| s + timeout <= tick) {
                    continue;
                }
                let key = flow.sender.key();
                let link = self.links.entry((key.sender, key.receiver)).or_default();
                link.tx.retain(|p| p.key != key);
                flow.timer_start = None;
                match flow.sender.step(SenderEvent::Timeout) {
                    Ok(packets) => {
                        self.counters[key.sender as usize].retransmissions += packets.len() as u64;
                        for p in packets {
                            flow.wired_at[p.seq as usize] = None;
                            link.tx.push_back(p);
                        }
                    }
                    Err(_) => {
                        flow.failed = true;
                        if !flow.delivered {
                            self.counters[key.sender as usize].app_messages_lost += 1;
                            unresolved -= 1;
                        }
                    }
                }
            }

            // window refills
            for flow in flows.iter_mut().filter(|f| f.sending()) {
                let packets = flow.sender.step(SenderEvent::SendWindow).unwrap_or_default();
                if !packets.is_empty() {
                    let key = flow.sender.key();
                    let link = self.links.entry((key.sender, key.receiver)).or_default();
                    link.tx.extend(packets);
                }
            }

            // transmissions
            for (&(from, to), link) in self.links.iter_mut() {
                if link.tx.is_empty() {
                    link.credit = 0;
                    continue;
                }
                let mut budget_packets = 1usize;
                if let Some(bw) = self.cfg.bandwidth {
                    link.credit += bw;
                }
                while let Some(front) = link.tx.front() {
                    match self.cfg.bandwidth {
                        None if budget_packets == 0 => break,
                        None => budget_packets -= 1,
                        Some(_) => {
                            let len = front.wire_len() as u64;
                            if len > link.credit {
                                break;
                            }
                            link.credit -= len;
                        }
                    }
                    let packet = link.tx.pop_front().unwrap();
                    let dropped = self.channel.drop_data(from, to, &packet);
                    self.counters[from as usize].packets_sent += 1;
                    if let Some(trace) = self.trace.as_mut() {
                        trace.push(TraceEvent {
                            tick,
                            from,
                            to,
                            dropped,
                            bytes: packet.encode(),
                        });
                    }
                    let flow = &mut flows[index[&packet.key]];
                    flow.wired_at[packet.seq as usize] = Some(tick);
                    if packet.seq as usize == flow.sender.base() && flow.timer_start.is_none() {
                        flow.timer_start = Some(tick);
                    }
                    if !dropped {
                        link.wire.push_back((tick + latency, packet));
                    }
                }
                if link.tx.is_empty() {
                    link.credit = 0;
                }
            }

            self.sample_buffers(&flows);

            if unresolved == 0 {
                break;
            }
            let stalled = self.links.values().all(Link::idle)
                && flows.iter().all(|f| !f.sending() || f.timer_start.is_none());
            if stalled {
                return Err(SimError::Deadlock {
                    tick,
                    pending: unresolved,
                });
            }
        }

        self.clock = tick;
        for link in self.links.values_mut() {
            link.tx.clear();
            link.wire.clear();
            link.credit = 0;
        }
        for inbox in delivered.values_mut() {
            inbox.sort_by_key(|msg| (msg.sender, msg.iteration));
        }
        Ok(delivered)
    }

    /// Next tick worth simulating: the following one while anything waits to
    /// be transmitted, otherwise the earliest arrival or timer expiry.
    fn next_tick(&self, tick: u64, flows: &[Flow], timeout: u64) -> u64 {
        if self.links.values().any(|l| !l.tx.is_empty()) {
            return tick + 1;
        }
        let arrival = self
            .links
            .values()
            .filter_map(|l| l.wire.front().map(|(at, _)| *at))
            .min();
        let expiry = flows
            .iter()
            .filter(|f| f.sending())
            .filter_map(|f| f.timer_start.map(|s| s + timeout))
            .min();
        match arrival.into_iter().chain(expiry).min() {
            Some(at) => at.max(tick + 1),
            None => tick + 1,
        }
    }

    fn sample_buffers(&mut self, flows: &[Flow]) {
        let mut buffered = vec![0u64; self.counters.len()];
        for flow in flows {
            let key = flow.sender.key();
            buffered[key.sender as usize] += flow.sender.buffered_bytes() as u64;
            buffered[key.receiver as usize] += flow.receiver.buffered_bytes() as u64;
        }
        for (i, c) in self.counters.iter_mut().enumerate() {
            c.buffer_peak = c.buffer_peak.max(self.stored_ids[i] + buffered[i]);
        }
    }
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

/// Runs the protocol on every node of `g` until all nodes have ended.
pub fn run_simulation(g: &Graph, cfg: &SimConfig) -> Result<RunMetrics, SimError> {
    let mut channel = SeededChannel::new(cfg);
    run_simulation_with(g, cfg, &mut channel)
}

/// [`run_simulation`] over a caller-supplied channel.
pub fn run_simulation_with(
    g: &Graph,
    cfg: &SimConfig,
    channel: &mut dyn Channel,
) -> Result<RunMetrics, SimError> {
    cfg.validate()?;
    if g.node_count() < 2 {
        return Err(GraphError::Empty.into());
    }
    if !g.is_connected() {
        return Err(GraphError::Disconnected {
            components: g.components().1,
        }
        .into());
    }
    let started = Instant::now();
    let n = g.node_count();
    let mut states = (0..n as NodeId)
        .map(|i| {
            NodeState::new(
                i,
                g.neighbors(i).iter().copied(),
                cfg.max_iterations,
                cfg.variant,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut net = Network::new(n, cfg.clone(), channel);

    // round zero
    let mut outgoing = Vec::new();
    for s in states.iter_mut() {
        outgoing.extend(s.initial_one_hop()?);
    }
    for s in &states {
        net.note_stored_ids(s.node_id(), s.stored_ids());
    }
    let mut inboxes = net.exchange(outgoing)?;
    for s in states.iter_mut().filter(|s| s.status() == Status::Running) {
        s.initial_update(inboxes.remove(&s.node_id()).unwrap_or_default())?;
        s.first_pruning_detection();
    }
    let mut rounds = 1u32;

    loop {
        let mut outgoing = Vec::new();
        let mut stepping = Vec::new();
        for s in states.iter_mut().filter(|s| s.status() == Status::Running) {
            if s.is_ended() {
                s.finalize();
            } else {
                outgoing.extend(s.next_one_hop()?);
                stepping.push(s.node_id());
            }
        }
        if stepping.is_empty() {
            break;
        }
        for s in &states {
            net.note_stored_ids(s.node_id(), s.stored_ids());
        }
        let mut inboxes = net.exchange(outgoing)?;
        for id in stepping {
            let s = &mut states[id as usize];
            s.next_update(inboxes.remove(&id).unwrap_or_default())?;
        }
        rounds += 1;
    }
    for s in &states {
        net.note_stored_ids(s.node_id(), s.stored_ids());
    }

    let ticks = net.clock();
    let nodes: Vec<NodeMetrics> = states
        .iter()
        .zip(&net.counters)
        .map(|(s, c)| NodeMetrics {
            node: s.node_id(),
            degree: s.neighbors().len(),
            packets_sent: c.packets_sent,
            packets_received: c.packets_received,
            retransmissions: c.retransmissions,
            app_messages_sent: c.app_messages_sent,
            app_messages_lost: c.app_messages_lost,
            active_iterations: s.final_iteration().unwrap_or(s.iteration()),
            view_size: s.view().len(),
            q_size: s.q_size(),
            buffer_peak: c.buffer_peak,
            estimate: s.estimate().unwrap_or(Score::ZERO),
        })
        .collect();
    let sent: u64 = nodes.iter().map(|x| x.app_messages_sent).sum();
    let lost: u64 = nodes.iter().map(|x| x.app_messages_lost).sum();
    let total_packets: u64 = nodes.iter().map(|x| x.packets_sent).sum();
    let mut metrics = RunMetrics {
        variant: cfg.variant,
        m: cfg.m,
        max_iterations: cfg.max_iterations,
        loss_p: cfg.loss_p,
        seed: cfg.seed,
        rounds,
        ticks,
        wall_seconds: 0.0,
        avg_msgs: total_packets as f64 / n as f64,
        max_msgs: nodes.iter().map(|x| x.packets_sent).max().unwrap_or(0),
        app_messages_sent: sent,
        app_messages_lost: lost,
        loss_fraction: if sent == 0 { 0.0 } else { lost as f64 / sent as f64 },
        mem_proxy: nodes.iter().map(|x| x.buffer_peak).max().unwrap_or(0),
        leader: 0,
        nodes,
    };
    metrics.leader = select_most_central(&metrics);
    metrics.wall_seconds = started.elapsed().as_secs_f64();
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: u32) -> Graph {
        Graph::from_edges(n as usize, (1..n).map(|i| (i - 1, i))).unwrap()
    }

    fn single(m: u16, cfg: SimConfig, channel: &mut dyn Channel) -> (u64, Vec<TraceEvent>, usize) {
        let cfg = SimConfig { m, ..cfg };
        let mut net = Network::new(2, cfg, channel);
        net.enable_trace();
        let env = Envelope {
            to: 1,
            message: AppMessage::new(0, 0, [1, 5, 6]),
        };
        let out = net.exchange(vec![env]).unwrap();
        let count = out.get(&1).map_or(0, Vec::len);
        (net.clock(), net.take_trace(), count)
    }

    #[test]
    fn single_message_takes_m_plus_latency_ticks() {
        for m in [1, 4, 10] {
            let mut ch = ScriptedChannel::default();
            let (ticks, trace, count) = single(m, SimConfig::default(), &mut ch);
            assert_eq!(count, 1);
            assert_eq!(ticks, m as u64 + 1);
            let data = trace.iter().filter(|e| e.bytes[0] == 1).count();
            assert_eq!(data, m as usize);
        }
    }

    #[test]
    fn dropped_first_packet_costs_one_timeout() {
        let key = MsgKey {
            sender: 0,
            receiver: 1,
            iteration: 0,
        };
        for m in [1, 4] {
            let mut ch = ScriptedChannel::new(vec![ScriptedDrop {
                key,
                seq: 0,
                occurrence: 0,
            }]);
            let cfg = SimConfig::default();
            let (ticks, _, count) = single(m, cfg.clone(), &mut ch);
            assert_eq!(count, 1);
            assert_eq!(ticks, m as u64 + 1 + cfg.effective_timeout());
        }
    }

    #[test]
    fn opposite_directions_share_a_link() {
        let mut ch = ScriptedChannel::default();
        let mut net = Network::new(2, SimConfig { m: 3, ..SimConfig::default() }, &mut ch);
        let out = net
            .exchange(vec![
                Envelope {
                    to: 1,
                    message: AppMessage::new(0, 0, [1]),
                },
                Envelope {
                    to: 0,
                    message: AppMessage::new(1, 0, [0]),
                },
            ])
            .unwrap();
        assert_eq!(out[&0][0].sender, 1);
        assert_eq!(out[&1][0].sender, 0);
        assert_eq!(net.clock(), 4);
    }

    #[test]
    fn p3_run() {
        for variant in Variant::ALL {
            let cfg = SimConfig {
                variant,
                ..SimConfig::default()
            };
            let r = run_simulation(&path(3), &cfg).unwrap();
            assert!(r.nodes[0].estimate.is_zero());
            assert!(r.nodes[2].estimate.is_zero());
            assert!(!r.nodes[1].estimate.is_zero());
            assert_eq!(r.leader, 1);
            let leaf_sends = r.nodes[0].packets_sent;
            match variant {
                Variant::Original => assert_eq!(leaf_sends, 1),
                Variant::Enhanced => assert_eq!(leaf_sends, 0),
            }
        }
    }

    #[test]
    fn k3_leader_by_tie_break() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let r = run_simulation(&g, &SimConfig::default()).unwrap();
        assert!(r.nodes.iter().all(|n| n.estimate.is_zero()));
        assert_eq!(r.leader, 0);
    }

    #[test]
    fn rejects_bad_config() {
        let g = path(3);
        let cfg = SimConfig {
            loss_p: 1.0,
            ..SimConfig::default()
        };
        assert!(matches!(run_simulation(&g, &cfg), Err(SimError::InvalidConfig(_))));
        let cfg = SimConfig {
            m: 0,
            ..SimConfig::default()
        };
        assert!(run_simulation(&g, &cfg).is_err());
    }

    #[test]
    fn rejects_disconnected_graph() {
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert!(matches!(
            run_simulation(&g, &SimConfig::default()),
            Err(SimError::Graph(GraphError::Disconnected { components: 2 }))
        ));
    }
}
