//! Classical control messages. All of them travel hop by hop.

use serde::Serialize;

use super::{Direction, EndpointId};
use crate::belldiag::PauliFrame;

/// Announces a swap at `origin` to the holder of `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SwapUpdate {
    pub tunnel: u32,
    pub origin: usize,
    pub origin_rank: u32,
    pub direction: Direction,
    pub target: EndpointId,
    pub new_far: EndpointId,
    pub frame: PauliFrame,
}

/// Initiator asks the far holders to run one purification round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PurifSolicit {
    pub tunnel: u32,
    /// `(initiator side, solicited side)`.
    pub kept: (EndpointId, EndpointId),
    pub ancilla: (EndpointId, EndpointId),
    pub round: u32,
    pub bit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PurifVerdict {
    Ok,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PurifResponse {
    pub tunnel: u32,
    /// `(initiator side, solicited side)`.
    pub kept: (EndpointId, EndpointId),
    pub round: u32,
    pub verdict: PurifVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    NewTun { tunnel: u32 },
    SwapUpdate(SwapUpdate),
    PurifSolicit(PurifSolicit),
    PurifResponse(PurifResponse),
}

impl Message {
    /// Node this message is ultimately addressed to, if it is point to point.
    pub fn destination(&self) -> Option<usize> {
        match self {
            Message::NewTun { .. } => None,
            Message::SwapUpdate(u) => Some(u.target.node),
            Message::PurifSolicit(s) => Some(s.kept.1.node),
            Message::PurifResponse(r) => Some(r.kept.0.node),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::NewTun { .. } => "NEW_TUN",
            Message::SwapUpdate(_) => "SWAP_UPDATE",
            Message::PurifSolicit(_) => "PURIF_SOLICIT",
            Message::PurifResponse(_) => "PURIF_RESPONSE",
        }
    }
}
