//! Per-node pruning state machine.
//!
//! Every node builds a view of the graph by flooding newly discovered ids to
//! its still-active neighbours, one hop per iteration, and stops talking to
//! neighbours it can prove are not central: leaves, degree-two nodes closing
//! a triangle, and neighbours that only ever announce ids the node already
//! knows. The final estimate is `(|view| - 1) / delta` where `delta`
//! accumulates `t * |ids first seen at iteration t|`.
//!
//! [`Variant::Enhanced`] differs only in round zero: leaves stay silent, and
//! a neighbour that sent nothing in round zero is treated as a leaf whose
//! one-hop set is `{self}`. On a loss-free run this reproduces the original
//! state of every non-leaf node exactly while saving the leaves' messages.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use bytes::{BufMut, Bytes, BytesMut};
use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::NodeId;
use crate::score::Score;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Original,
    Enhanced,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Original, Variant::Enhanced];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Enhanced => "enhanced",
        }
    }

    /// Column label used in plot exports (`P` original, `I` enhanced).
    pub fn short_label(&self) -> &'static str {
        match self {
            Variant::Original => "P",
            Variant::Enhanced => "I",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "original" | "p" => Ok(Variant::Original),
            "enhanced" | "i" => Ok(Variant::Enhanced),
            other => Err(format!("unknown variant {other:?} (expected original|enhanced)")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("iteration cap must be at least 1")]
    InvalidHorizon,
    #[error("node {0} has no neighbours")]
    IsolatedNode(NodeId),
    #[error("node {0} lists itself as a neighbour")]
    SelfNeighbor(NodeId),
    #[error("node {node}: {operation} called out of order")]
    OutOfOrder {
        node: NodeId,
        operation: &'static str,
    },
    #[error("node {node}: message from {sender} carries iteration {got}, expected {expected}")]
    IterationMismatch {
        node: NodeId,
        sender: NodeId,
        expected: u32,
        got: u32,
    },
    #[error("node {node}: message from non-neighbour {sender}")]
    UnknownSender { node: NodeId, sender: NodeId },
    #[error("node {node}: two messages from {sender} in one iteration")]
    DuplicateSender { node: NodeId, sender: NodeId },
    #[error("node {0} has not ended")]
    NotEnded(NodeId),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("message truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("payload ids are not strictly increasing")]
    Unsorted,
    #[error("non-zero bytes after the payload")]
    TrailingBytes,
}

// ---------------------------------------------------------------------------
// Application messages
// ---------------------------------------------------------------------------

/// One neighbouring message: the sender's most recent discoveries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppMessage {
    pub sender: NodeId,
    pub iteration: u16,
    /// Sorted, duplicate-free.
    pub payload: Vec<NodeId>,
}

const APP_HEADER_LEN: usize = 4 + 2 + 4;

impl AppMessage {
    pub fn new(sender: NodeId, iteration: u16, payload: impl IntoIterator<Item = NodeId>) -> Self {
        let payload: BTreeSet<NodeId> = payload.into_iter().collect();
        AppMessage {
            sender,
            iteration,
            payload: payload.into_iter().collect(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        APP_HEADER_LEN + 4 * self.payload.len()
    }

    /// Big-endian layout: sender (4), iteration (2), id count (4), ids (4 each).
    pub fn encode(&self) -> Bytes {
        let mut buf = BytesMut::with_capacity(self.encoded_len());
        buf.put_u32(self.sender);
        buf.put_u16(self.iteration);
        buf.put_u32(self.payload.len() as u32);
        for &id in &self.payload {
            buf.put_u32(id);
        }
        buf.freeze()
    }

    /// Inverse of [`encode`](Self::encode). Trailing zero bytes (padding added
    /// by the transport) are accepted; anything else after the ids is not.
    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        if bytes.len() < APP_HEADER_LEN {
            return Err(DecodeError::Truncated {
                need: APP_HEADER_LEN,
                have: bytes.len(),
            });
        }
        let sender = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
        let iteration = u16::from_be_bytes(bytes[4..6].try_into().unwrap());
        let count = u32::from_be_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let need = APP_HEADER_LEN + 4 * count;
        if bytes.len() < need {
            return Err(DecodeError::Truncated {
                need,
                have: bytes.len(),
            });
        }
        let payload: Vec<NodeId> = bytes[APP_HEADER_LEN..need]
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes(c.try_into().unwrap()))
            .collect();
        if payload.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DecodeError::Unsorted);
        }
        if bytes[need..].iter().any(|&b| b != 0) {
            return Err(DecodeError::TrailingBytes);
        }
        Ok(AppMessage {
            sender,
            iteration,
            payload,
        })
    }
}

/// A message addressed to one neighbour.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub to: NodeId,
    pub message: AppMessage,
}

// ---------------------------------------------------------------------------
// View set
// ---------------------------------------------------------------------------

/// Growable bitset of node ids with a cached cardinality.
#[derive(Debug, Clone, Default)]
pub struct ViewSet {
    bits: FixedBitSet,
    len: usize,
}

impl ViewSet {
    pub fn insert(&mut self, id: NodeId) -> bool {
        let idx = id as usize;
        if idx >= self.bits.len() {
            self.bits.grow((idx + 1).next_power_of_two());
        }
        let fresh = !self.bits.put(idx);
        if fresh {
            self.len += 1;
        }
        fresh
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.bits.contains(id as usize)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.bits.ones().map(|i| i as NodeId)
    }
}

impl PartialEq for ViewSet {
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.iter().eq(other.iter())
    }
}

impl Eq for ViewSet {}

impl FromIterator<NodeId> for ViewSet {
    fn from_iter<T: IntoIterator<Item = NodeId>>(iter: T) -> Self {
        let mut set = ViewSet::default();
        for id in iter {
            set.insert(id);
        }
        set
    }
}

// ---------------------------------------------------------------------------
// Node state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Running,
    Ended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Fresh,
    InitialSent,
    Updated,
    NextSent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    node_id: NodeId,
    variant: Variant,
    t: u32,
    max_iterations: u32,
    final_iteration: Option<u32>,
    neighbors: BTreeSet<NodeId>,
    active_neighbors: BTreeSet<NodeId>,
    view: ViewSet,
    new_nodes: BTreeSet<NodeId>,
    q_map: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pruned_now: BTreeSet<NodeId>,
    pruned_all: BTreeSet<NodeId>,
    delta: u64,
    inbox: VecDeque<AppMessage>,
    estimate: Option<Score>,
    status: Status,
    phase: Phase,
}

impl NodeState {
    /// Fresh state for node `id` with iteration cap `max_iterations` (D).
    pub fn new(
        id: NodeId,
        neighbors: impl IntoIterator<Item = NodeId>,
        max_iterations: u32,
        variant: Variant,
    ) -> Result<Self, ProtocolError> {
        if max_iterations == 0 {
            return Err(ProtocolError::InvalidHorizon);
        }
        let neighbors: BTreeSet<NodeId> = neighbors.into_iter().collect();
        if neighbors.is_empty() {
            return Err(ProtocolError::IsolatedNode(id));
        }
        if neighbors.contains(&id) {
            return Err(ProtocolError::SelfNeighbor(id));
        }
        Ok(NodeState {
            node_id: id,
            variant,
            t: 0,
            max_iterations,
            final_iteration: None,
            active_neighbors: neighbors.clone(),
            view: neighbors.iter().copied().collect(),
            new_nodes: neighbors.clone(),
            delta: neighbors.len() as u64,
            neighbors,
            q_map: BTreeMap::new(),
            pruned_now: BTreeSet::new(),
            pruned_all: BTreeSet::new(),
            inbox: VecDeque::new(),
            estimate: None,
            status: Status::Running,
            phase: Phase::Fresh,
        })
    }

    pub fn node_id(&self) -> NodeId {
        self.node_id
    }
    pub fn variant(&self) -> Variant {
        self.variant
    }
    pub fn iteration(&self) -> u32 {
        self.t
    }
    pub fn max_iterations(&self) -> u32 {
        self.max_iterations
    }
    pub fn final_iteration(&self) -> Option<u32> {
        self.final_iteration
    }
    pub fn neighbors(&self) -> &BTreeSet<NodeId> {
        &self.neighbors
    }
    pub fn active_neighbors(&self) -> &BTreeSet<NodeId> {
        &self.active_neighbors
    }
    pub fn view(&self) -> &ViewSet {
        &self.view
    }
    pub fn new_nodes(&self) -> &BTreeSet<NodeId> {
        &self.new_nodes
    }
    pub fn q_map(&self) -> &BTreeMap<NodeId, BTreeSet<NodeId>> {
        &self.q_map
    }
    pub fn pruned_now(&self) -> &BTreeSet<NodeId> {
        &self.pruned_now
    }
    pub fn pruned_all(&self) -> &BTreeSet<NodeId> {
        &self.pruned_all
    }
    pub fn delta(&self) -> u64 {
        self.delta
    }
    pub fn estimate(&self) -> Option<Score> {
        self.estimate
    }
    pub fn status(&self) -> Status {
        self.status
    }
    pub fn is_leaf(&self) -> bool {
        self.neighbors.len() == 1
    }
    pub fn is_self_pruned(&self) -> bool {
        self.pruned_all.contains(&self.node_id)
    }

    /// Number of node ids held in protocol state, a proxy for memory use.
    pub fn stored_ids(&self) -> usize {
        self.neighbors.len()
            + self.active_neighbors.len()
            + self.view.len()
            + self.new_nodes.len()
            + self.q_map.values().map(BTreeSet::len).sum::<usize>()
            + self.pruned_now.len()
            + self.pruned_all.len()
            + self.inbox.iter().map(|m| m.payload.len()).sum::<usize>()
    }

    pub fn q_size(&self) -> usize {
        self.q_map.values().map(BTreeSet::len).sum()
    }

    /// True once the node has nothing left to do: the cap is reached, the
    /// last iteration discovered nothing, or the node pruned itself.
    pub fn is_ended(&self) -> bool {
        self.status == Status::Ended
            || self.t >= self.max_iterations
            || self.new_nodes.is_empty()
            || self.is_self_pruned()
    }

    fn order_error(&self, operation: &'static str) -> ProtocolError {
        ProtocolError::OutOfOrder {
            node: self.node_id,
            operation,
        }
    }

    fn own_message(&self) -> AppMessage {
        AppMessage {
            sender: self.node_id,
            iteration: self.t as u16,
            payload: self.new_nodes.iter().copied().collect(),
        }
    }

    /// Round zero: announce the one-hop neighbourhood to every neighbour.
    ///
    /// Under [`Variant::Enhanced`] a leaf sends nothing and ends immediately
    /// as a pruned node with estimate zero.
    pub fn initial_one_hop(&mut self) -> Result<Vec<Envelope>, ProtocolError> {
        if self.phase != Phase::Fresh || self.status != Status::Running {
            return Err(self.order_error("initial_one_hop"));
        }
        self.phase = Phase::InitialSent;
        if self.variant == Variant::Enhanced && self.is_leaf() {
            self.pruned_now.insert(self.node_id);
            self.pruned_all.insert(self.node_id);
            self.final_iteration = Some(0);
            self.estimate = Some(Score::ZERO);
            self.status = Status::Ended;
            return Ok(Vec::new());
        }
        let message = self.own_message();
        Ok(self
            .neighbors
            .iter()
            .map(|&to| Envelope {
                to,
                message: message.clone(),
            })
            .collect())
    }

    fn accept_batch(
        &mut self,
        delivered: Vec<AppMessage>,
        expected_iteration: u32,
    ) -> Result<(), ProtocolError> {
        let mut seen = BTreeSet::new();
        for msg in &delivered {
            if !self.neighbors.contains(&msg.sender) {
                return Err(ProtocolError::UnknownSender {
                    node: self.node_id,
                    sender: msg.sender,
                });
            }
            if msg.iteration as u32 != expected_iteration {
                return Err(ProtocolError::IterationMismatch {
                    node: self.node_id,
                    sender: msg.sender,
                    expected: expected_iteration,
                    got: msg.iteration as u32,
                });
            }
            if !seen.insert(msg.sender) {
                return Err(ProtocolError::DuplicateSender {
                    node: self.node_id,
                    sender: msg.sender,
                });
            }
        }
        self.inbox.extend(delivered);
        Ok(())
    }

    /// Moves `fused \ view` into the view and returns how many ids were new.
    fn absorb(&mut self, fused: BTreeSet<NodeId>) -> usize {
        self.new_nodes = fused.into_iter().filter(|&id| !self.view.contains(id)).collect();
        for &id in &self.new_nodes {
            self.view.insert(id);
        }
        self.new_nodes.len()
    }

    /// Fuses the round-zero messages and records each neighbour's one-hop set.
    pub fn initial_update(&mut self, delivered: Vec<AppMessage>) -> Result<(), ProtocolError> {
        if self.phase != Phase::InitialSent || self.status != Status::Running {
            return Err(self.order_error("initial_update"));
        }
        self.accept_batch(delivered, 0)?;
        self.t = 1;
        let mut fused = BTreeSet::new();
        while let Some(msg) = self.inbox.pop_front() {
            fused.extend(msg.payload.iter().copied());
            self.q_map.insert(msg.sender, msg.payload.into_iter().collect());
        }
        if self.variant == Variant::Enhanced {
            let silent: Vec<NodeId> = self
                .neighbors
                .iter()
                .copied()
                .filter(|j| !self.q_map.contains_key(j))
                .collect();
            for j in silent {
                self.q_map.insert(j, BTreeSet::from([self.node_id]));
                fused.insert(self.node_id);
            }
        }
        self.q_map.insert(self.node_id, self.neighbors.clone());
        let discovered = self.absorb(fused) as u64;
        self.delta += discovered;
        self.phase = Phase::Updated;
        Ok(())
    }

    /// Leaves and triangle members found from the round-zero one-hop sets.
    pub fn first_pruning_detection(&mut self) {
        self.leaves_detection();
        self.triangle_detection();
        self.pruned_all = self.pruned_now.clone();
    }

    /// Marks every neighbour (and self) whose one-hop set is a singleton.
    pub fn leaves_detection(&mut self) {
        self.pruned_now.clear();
        let candidates = self.neighbors.iter().copied().chain([self.node_id]);
        for j in candidates {
            if self.q_map.get(&j).is_some_and(|q| q.len() == 1) {
                self.pruned_now.insert(j);
            }
        }
    }

    /// Marks every degree-two neighbour (and self) whose two neighbours are
    /// adjacent. The check is skipped when the needed one-hop set is unknown.
    pub fn triangle_detection(&mut self) {
        let candidates: Vec<NodeId> = self
            .active_neighbors
            .iter()
            .copied()
            .chain([self.node_id])
            .collect();
        for j in candidates {
            let Some(q) = self.q_map.get(&j) else { continue };
            if q.len() != 2 {
                continue;
            }
            let mut it = q.iter();
            let (f, g) = (*it.next().unwrap(), *it.next().unwrap());
            if self.q_map.get(&g).is_some_and(|qg| qg.contains(&f)) {
                self.pruned_now.insert(j);
            }
        }
    }

    /// Drops pruned neighbours from the active set and announces the latest
    /// discoveries to the rest.
    pub fn next_one_hop(&mut self) -> Result<Vec<Envelope>, ProtocolError> {
        if self.phase != Phase::Updated || self.is_ended() {
            return Err(self.order_error("next_one_hop"));
        }
        let pruned = &self.pruned_all;
        self.active_neighbors.retain(|j| !pruned.contains(j));
        self.phase = Phase::NextSent;
        let message = self.own_message();
        Ok(self
            .active_neighbors
            .iter()
            .map(|&to| Envelope {
                to,
                message: message.clone(),
            })
            .collect())
    }

    /// Fuses one iteration of announcements, prunes, and advances `delta`.
    /// If the node had already ended on entry it is finalised instead.
    pub fn next_update(&mut self, delivered: Vec<AppMessage>) -> Result<(), ProtocolError> {
        if self.status == Status::Ended {
            return Err(self.order_error("next_update"));
        }
        if self.is_ended() {
            self.finalize();
            return Ok(());
        }
        if self.phase != Phase::NextSent {
            return Err(self.order_error("next_update"));
        }
        self.accept_batch(delivered, self.t)?;
        self.t += 1;
        let mut fused = BTreeSet::new();
        let mut announcements = BTreeMap::new();
        while let Some(msg) = self.inbox.pop_front() {
            fused.extend(msg.payload.iter().copied());
            announcements.insert(msg.sender, msg.payload);
        }
        self.absorb(fused);
        self.further_pruning_detection(&announcements);
        self.pruned_all.extend(self.pruned_now.iter().copied());
        self.delta += self.t as u64 * self.new_nodes.len() as u64;
        self.phase = Phase::Updated;
        Ok(())
    }

    /// Prunes active neighbours whose announcement held nothing new (a
    /// neighbour that sent nothing announced the empty set), and prunes self
    /// when only one neighbour is still active yet ids keep arriving.
    ///
    /// Expects `new_nodes` to already hold this iteration's discoveries; an
    /// announcement is a subset of the previous view exactly when it shares
    /// no id with them.
    pub fn further_pruning_detection(&mut self, announcements: &BTreeMap<NodeId, Vec<NodeId>>) {
        self.pruned_now.clear();
        for &j in &self.active_neighbors {
            let fresh = announcements
                .get(&j)
                .is_some_and(|ids| ids.iter().any(|id| self.new_nodes.contains(id)));
            if !fresh {
                self.pruned_now.insert(j);
            }
        }
        if self.active_neighbors.len() == 1 && !self.new_nodes.is_empty() {
            self.pruned_now.insert(self.node_id);
        }
    }

    /// Fixes the final iteration and the estimate; the node stops.
    pub fn finalize(&mut self) {
        if self.status == Status::Ended {
            return;
        }
        self.final_iteration = Some(self.t.min(self.max_iterations));
        self.estimate = Some(self.compute_estimate());
        self.status = Status::Ended;
    }

    fn compute_estimate(&self) -> Score {
        if self.is_self_pruned() {
            return Score::ZERO;
        }
        Score::new(self.view.len() as u64 - 1, self.delta)
    }

    /// Estimated closeness: zero for a self-pruned node, otherwise
    /// `(|view| - 1) / delta`.
    pub fn closeness_estimate(&self) -> Result<Score, ProtocolError> {
        match self.estimate {
            Some(e) if self.status == Status::Ended => Ok(e),
            _ => Err(ProtocolError::NotEnded(self.node_id)),
        }
    }
}
