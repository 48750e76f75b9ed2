//! Tunnel configuration `(L, R, P, K)`, rank generators and per-node plans.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Direction, Side};

/// Path, ranks, per-rank purification rounds and pair budget of one tunnel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TunnelConfig {
    pub path: Vec<String>,
    pub ranks: Vec<u32>,
    pub purification: Vec<u32>,
    pub pairs: u64,
}

impl TunnelConfig {
    /// Builds a config with generated node names `L0 .. L{n-1}`.
    pub fn new(ranks: Vec<u32>, purification: Vec<u32>, pairs: u64) -> Self {
        let path = (0..ranks.len()).map(|i| format!("L{i}")).collect();
        TunnelConfig { path, ranks, purification, pairs }
    }

    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }

    pub fn max_rank(&self) -> u32 {
        self.ranks.iter().copied().max().unwrap_or(0)
    }

    pub fn rank(&self, node: usize) -> u32 {
        self.ranks[node]
    }

    /// Purification rounds owed by an initiator of rank `rank`.
    pub fn rounds(&self, rank: u32) -> u32 {
        self.purification.get(rank as usize).copied().unwrap_or(0)
    }

    pub fn is_end(&self, node: usize) -> bool {
        node == 0 || node + 1 == self.len()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RankError {
    #[error("a chain needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("nested ranks need 2^k + 1 nodes with k > 0, got {0}")]
    NotNestable(usize),
}

/// `[1, 0, …, 0, 1]`: every repeater swaps at once.
pub fn ranks_parallel(n: usize) -> Result<Vec<u32>, RankError> {
    if n < 3 {
        return Err(RankError::TooFewNodes(n));
    }
    let mut r = vec![0; n];
    r[0] = 1;
    r[n - 1] = 1;
    Ok(r)
}

/// `[n−2, 0, 1, …, n−3, n−2]`: repeaters swap one after another, left to right.
pub fn ranks_consecutive(n: usize) -> Result<Vec<u32>, RankError> {
    if n < 3 {
        return Err(RankError::TooFewNodes(n));
    }
    let top = (n - 2) as u32;
    let mut r: Vec<u32> = (0..n).map(|i| (i as u32).saturating_sub(1)).collect();
    r[0] = top;
    r[n - 1] = top;
    Ok(r)
}

/// Doubling schedule for `n = 2^k + 1`: the rank of node `i` is the largest
/// `r ≤ k` with `2^r` dividing `i`.
pub fn ranks_nested(n: usize) -> Result<Vec<u32>, RankError> {
    if n < 3 {
        return Err(RankError::TooFewNodes(n));
    }
    let span = n - 1;
    if !span.is_power_of_two() {
        return Err(RankError::NotNestable(n));
    }
    let k = span.trailing_zeros();
    Ok((0..n).map(|i| (0..=k).rev().find(|&r| i % (1usize << r) == 0).unwrap_or(0)).collect())
}

/// One invariant of a [`TunnelConfig`] that does not hold.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Violation {
    #[error("path has {0} nodes; at least 3 are required")]
    TooFewNodes(usize),
    #[error("rank vector has {ranks} entries but the path has {nodes} nodes")]
    RankLength { ranks: usize, nodes: usize },
    #[error("purification vector has {got} entries; max rank {max_rank} needs {}", max_rank + 1)]
    PurificationLength { got: usize, max_rank: u32 },
    #[error("pair budget must be at least 1")]
    ZeroPairs,
    #[error("end nodes must both hold the maximum rank {max}, got {first} and {last}")]
    EndRanks { first: u32, last: u32, max: u32 },
    #[error("interior node {node} has the maximum rank {rank}, so it has no swapping destination")]
    InteriorMaxRank { node: usize, rank: u32 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid tunnel configuration: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ConfigError(pub Vec<Violation>);

/// What a node derives from the tunnel configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodePlan {
    pub index: usize,
    pub rank: u32,
    /// Nearest `[downstream, upstream]` node with a strictly higher rank.
    pub destinations: [Option<usize>; 2],
    /// Nearest `[downstream, upstream]` node with an equal or higher rank.
    pub neighbors: [Option<usize>; 2],
    pub generates_downstream_update: bool,
    pub generates_upstream_update: bool,
}

impl NodePlan {
    pub fn destination(&self, dir: Direction) -> Option<usize> {
        self.destinations[dir.slot()]
    }

    pub fn neighbor(&self, dir: Direction) -> Option<usize> {
        self.neighbors[dir.slot()]
    }

    pub fn generates(&self, dir: Direction) -> bool {
        match dir {
            Direction::Upstream => self.generates_upstream_update,
            Direction::Downstream => self.generates_downstream_update,
        }
    }
}

fn nearest(ranks: &[u32], from: usize, dir: Direction, pred: impl Fn(u32) -> bool) -> Option<usize> {
    match dir {
        Direction::Downstream => (0..from).rev().find(|&j| pred(ranks[j])),
        Direction::Upstream => (from + 1..ranks.len()).find(|&j| pred(ranks[j])),
    }
}

/// Checks every tunnel invariant and derives each node's swapping
/// destinations and neighbors.
pub fn validate_config(c: &TunnelConfig) -> Result<Vec<NodePlan>, ConfigError> {
    let mut violations = Vec::new();
    let n = c.path.len();
    if n < 3 {
        violations.push(Violation::TooFewNodes(n));
    }
    if c.ranks.len() != n {
        violations.push(Violation::RankLength { ranks: c.ranks.len(), nodes: n });
    }
    if c.pairs == 0 {
        violations.push(Violation::ZeroPairs);
    }
    if let (Some(&first), Some(&last)) = (c.ranks.first(), c.ranks.last()) {
        let max = c.max_rank();
        if c.purification.len() != max as usize + 1 {
            violations.push(Violation::PurificationLength { got: c.purification.len(), max_rank: max });
        }
        if first != max || last != max {
            violations.push(Violation::EndRanks { first, last, max });
        }
        for (node, &rank) in c.ranks.iter().enumerate().take(c.ranks.len().saturating_sub(1)).skip(1) {
            if rank == max {
                violations.push(Violation::InteriorMaxRank { node, rank });
            }
        }
    }
    if !violations.is_empty() {
        return Err(ConfigError(violations));
    }

    let plans = (0..n)
        .map(|i| {
            let rank = c.ranks[i];
            let dirs = [Direction::Downstream, Direction::Upstream];
            let destinations = dirs.map(|d| nearest(&c.ranks, i, d, |r| r > rank));
            let neighbors = dirs.map(|d| nearest(&c.ranks, i, d, |r| r >= rank));
            let interior = !c.is_end(i);
            NodePlan {
                index: i,
                rank,
                destinations,
                neighbors,
                generates_upstream_update: interior && neighbors[0] == destinations[0],
                generates_downstream_update: interior && neighbors[1] == destinations[1],
            }
        })
        .collect();
    Ok(plans)
}

/// Whether an endpoint in WAIT may start purifying, given what the node knows
/// about the rank of the far end.
pub fn endpoint_ready_rank(own_rank: u32, far_rank: u32) -> bool {
    far_rank >= own_rank
}

/// Initiator and solicited side of a segment: the lower rank initiates and
/// ties go to the downstream holder.
pub fn purification_roles(down_rank: u32, up_rank: u32) -> (Side, Side) {
    if up_rank < down_rank {
        (Side::Upstream, Side::Downstream)
    } else {
        (Side::Downstream, Side::Upstream)
    }
}
