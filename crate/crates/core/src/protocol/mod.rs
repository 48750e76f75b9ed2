//! The swapping and purification protocol as seen by a single node.

pub mod config;
pub mod fsm;
pub mod message;
pub mod node;

use std::fmt;

use serde::Serialize;

pub use config::{
    endpoint_ready_rank, purification_roles, ranks_consecutive, ranks_nested, ranks_parallel, validate_config,
    ConfigError, NodePlan, RankError, TunnelConfig, Violation,
};
pub use fsm::{is_fsm_edge, EndpointState, Step};
pub use message::{Message, PurifResponse, PurifSolicit, PurifVerdict, SwapUpdate};
pub use node::{Backend, EndpointRecord, Node, ProtocolError, PurifyReport, SavedSwap};

/// Along the path: upstream is toward higher node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Downstream,
    Upstream,
}

impl Direction {
    pub fn slot(self) -> usize {
        match self {
            Direction::Downstream => 0,
            Direction::Upstream => 1,
        }
    }

    pub fn reverse(self) -> Self {
        match self {
            Direction::Downstream => Direction::Upstream,
            Direction::Upstream => Direction::Downstream,
        }
    }

    /// Direction of travel from `from` toward `to`.
    pub fn toward(from: usize, to: usize) -> Self {
        if to > from {
            Direction::Upstream
        } else {
            Direction::Downstream
        }
    }

    pub fn step(self, node: usize) -> usize {
        match self {
            Direction::Downstream => node - 1,
            Direction::Upstream => node + 1,
        }
    }
}

/// Which end of a segment a holder sits at.
pub type Side = Direction;

/// Names one qubit of one entangled pair, as allocated by its holder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct EndpointId {
    pub tunnel: u32,
    pub node: usize,
    pub seq: u64,
}

impl fmt::Display for EndpointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}#{}", self.tunnel, self.node, self.seq)
    }
}
