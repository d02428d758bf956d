#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use prunesim::graph::Graph;
use prunesim::protocol::{AppMessage, NodeState, Status, Variant};
use prunesim::simnet::TraceEvent;
use prunesim::stats::midranks;
use prunesim::NodeId;

pub fn path(n: usize) -> Graph {
    Graph::from_edges(n, (1..n as NodeId).map(|i| (i - 1, i))).unwrap()
}

pub fn star(k: usize) -> Graph {
    Graph::from_edges(k + 1, (1..=k as NodeId).map(|i| (0, i))).unwrap()
}

pub fn cycle(n: usize) -> Graph {
    Graph::from_edges(n, (0..n as NodeId).map(|i| (i, (i + 1) % n as NodeId))).unwrap()
}

/// Connected graph: a random tree plus extra random edges.
pub fn connected_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n)
        .prop_flat_map(|n| {
            let parents: Vec<_> = (1..n).map(|i| 0..i).collect();
            let extra = proptest::collection::vec((0..n, 0..n), 0..2 * n);
            (Just(n), parents, extra)
        })
        .prop_map(|(n, parents, extra)| {
            let tree = parents.into_iter().enumerate().map(|(i, p)| (i as NodeId + 1, p as NodeId));
            let more = extra
                .into_iter()
                .filter(|(a, b)| a != b)
                .map(|(a, b)| (a as NodeId, b as NodeId));
            Graph::from_edges(n, tree.chain(more)).unwrap()
        })
}

/// Loss-free synchronous execution of the protocol, independent of the
/// network simulator. Returns the state of every node after each round.
pub fn drive(g: &Graph, d: u32, variant: Variant) -> Vec<Vec<NodeState>> {
    let n = g.node_count();
    let mut states: Vec<NodeState> = (0..n as NodeId)
        .map(|i| NodeState::new(i, g.neighbors(i).iter().copied(), d, variant).unwrap())
        .collect();
    let mut inbox: BTreeMap<NodeId, Vec<AppMessage>> = BTreeMap::new();
    for s in states.iter_mut() {
        for e in s.initial_one_hop().unwrap() {
            inbox.entry(e.to).or_default().push(e.message);
        }
    }
    for s in states.iter_mut().filter(|s| s.status() == Status::Running) {
        s.initial_update(inbox.remove(&s.node_id()).unwrap_or_default()).unwrap();
        s.first_pruning_detection();
    }
    inbox.clear();
    let mut history = vec![states.clone()];
    loop {
        let mut stepping = Vec::new();
        for s in states.iter_mut().filter(|s| s.status() == Status::Running) {
            if s.is_ended() {
                s.finalize();
                continue;
            }
            for e in s.next_one_hop().unwrap() {
                inbox.entry(e.to).or_default().push(e.message);
            }
            stepping.push(s.node_id());
        }
        if stepping.is_empty() {
            break;
        }
        for id in stepping {
            let mut batch = inbox.remove(&id).unwrap_or_default();
            batch.sort_by_key(|m| m.sender);
            states[id as usize].next_update(batch).unwrap();
        }
        inbox.clear();
        history.push(states.clone());
        assert!(history.len() <= d as usize + 3, "protocol did not terminate");
    }
    history.push(states);
    history
}

pub fn render_trace(trace: &[TraceEvent]) -> Vec<String> {
    trace
        .iter()
        .map(|e| {
            let hex: String = e.bytes.iter().map(|b| format!("{b:02x}")).collect();
            let fate = if e.dropped { "drop" } else { "ok" };
            format!("{} {}>{} {} {}", e.tick, e.from, e.to, fate, hex)
        })
        .collect()
}

/// Two-sided p-value by listing all 2^n sign patterns of the ranked |d|.
pub fn enumeration_oracle(diffs: &[f64]) -> f64 {
    let d: Vec<f64> = diffs.iter().copied().filter(|x| *x != 0.0).collect();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks = midranks(&abs);
    let observed: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| ranks[k]).sum();
        if w <= observed + 1e-9 {
            le += 1;
        }
        if w >= observed - 1e-9 {
            ge += 1;
        }
    }
    let total = (1u64 << n) as f64;
    (2.0 * (le as f64 / total).min(ge as f64 / total)).min(1.0)
}
