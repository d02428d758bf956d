//! Distributed closeness-centrality estimation with pruning, simulated over
//! lossy links with multi-packet messaging and Go-Back-N retransmission.

pub mod cli;
pub mod experiment;
pub mod graph;
pub mod protocol;
pub mod score;
pub mod simnet;
pub mod stats;
pub mod transport;

pub use graph::{Graph, GraphError, NodeId};
pub use protocol::{NodeState, Variant};
pub use score::Score;
pub use simnet::{run_simulation, RunMetrics, SimConfig};
