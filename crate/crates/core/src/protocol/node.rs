//! Per-node protocol reactor.
//!
//! A [`Node`] only knows its own records and the tunnel configuration. Every
//! physical operation and every outgoing message goes through a [`Backend`],
//! which in the simulator is the network model plus the event queue.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use super::config::{endpoint_ready_rank, purification_roles, NodePlan, TunnelConfig};
use super::fsm::{is_fsm_edge, EndpointState, Step};
use super::message::{Message, PurifResponse, PurifSolicit, PurifVerdict, SwapUpdate};
use super::{Direction, EndpointId};
use crate::belldiag::PauliFrame;
use crate::engine::SimTime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("endpoint {endpoint}: illegal transition {from:?} -> {to:?}")]
    IllegalTransition { endpoint: EndpointId, from: EndpointState, to: EndpointState },
    #[error("node {node}: message names unknown endpoint {endpoint}")]
    UnknownEndpoint { node: usize, endpoint: EndpointId },
    #[error("endpoint {endpoint} is {state:?} but {context}")]
    UnexpectedState { endpoint: EndpointId, state: EndpointState, context: &'static str },
    #[error("node {node} (rank {rank}) received an update from rank {origin_rank}")]
    UpdateRank { node: usize, rank: u32, origin_rank: u32 },
    #[error("endpoint {endpoint}: purification round {got}, expected {expected}")]
    RoundMismatch { endpoint: EndpointId, got: u32, expected: u32 },
    #[error("endpoint {endpoint} believes its partner is {believed}, but it is {actual}")]
    KnowledgeMismatch { endpoint: EndpointId, believed: EndpointId, actual: EndpointId },
    #[error("endpoint {endpoint} tracks frame {tracked:?}, but the pair carries {actual:?}")]
    FrameMismatch { endpoint: EndpointId, tracked: PauliFrame, actual: PauliFrame },
    #[error("network: {0}")]
    Network(String),
}

/// Local view of one qubit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EndpointRecord {
    pub id: EndpointId,
    pub far: EndpointId,
    pub state: EndpointState,
    pub round: u32,
    pub frame: PauliFrame,
}

/// What a node remembers about a swap so it can merge later updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SavedSwap {
    pub down: EndpointId,
    pub up: EndpointId,
    pub down_far: EndpointId,
    pub up_far: EndpointId,
    pub down_frame: PauliFrame,
    pub up_frame: PauliFrame,
    pub outcome: PauliFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PurifyReport {
    pub verdict: PurifVerdict,
    pub success_prob: f64,
}

/// Protocol-level happenings a backend may trace or count.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Notice {
    Swapped { node: usize, down: EndpointId, up: EndpointId, outcome: PauliFrame },
    UpdateGenerated { node: usize, direction: Direction, target: EndpointId },
    UpdateConsumed { node: usize, origin: usize, target: EndpointId },
    UpdateMerged { node: usize, origin: usize, target: EndpointId, next: EndpointId },
    UpdateHeld { node: usize, target: EndpointId },
    UpdateDropped { node: usize, target: EndpointId },
    Solicited { node: usize, kept: EndpointId, ancilla: EndpointId, round: u32 },
    SolicitDeferred { node: usize, kept: EndpointId },
    Purified { node: usize, kept: EndpointId, verdict: PurifVerdict, round: u32 },
    Warning { node: usize, message: String },
}

/// Services a node needs from the outside world.
pub trait Backend {
    fn now(&self) -> SimTime;
    /// Sends `msg` one hop from `from` in `dir`.
    fn send(&mut self, from: usize, dir: Direction, msg: Message) -> Result<(), ProtocolError>;
    /// Bell measurement on two local qubits; returns the outcome.
    fn swap(&mut self, node: usize, down: EndpointId, up: EndpointId) -> Result<PauliFrame, ProtocolError>;
    /// Runs one purification round on the pairs holding `kept` and `ancilla`.
    /// The ancilla pair is always consumed and the kept pair on failure.
    fn purify(&mut self, kept: EndpointId, ancilla: EndpointId) -> Result<PurifyReport, ProtocolError>;
    /// Discards the pair holding `endpoint` as a failed purification.
    fn discard(&mut self, endpoint: EndpointId) -> Result<(), ProtocolError>;
    /// An end-node qubit became ELIGIBLE.
    fn end_ready(&mut self, endpoint: EndpointId);
    fn observe(&mut self, endpoint: EndpointId, step: Step, round: u32, target: u32);
    fn notice(&mut self, notice: Notice);
    fn random_bit(&mut self) -> bool;
}

pub struct Node {
    plan: NodePlan,
    config: Arc<TunnelConfig>,
    tunnel: u32,
    strict: bool,
    joined: bool,
    issued: u64,
    records: BTreeMap<EndpointId, EndpointRecord>,
    saved: HashMap<EndpointId, SavedSwap>,
    held: BTreeMap<EndpointId, Vec<SwapUpdate>>,
    deferred: Vec<PurifSolicit>,
}

impl Node {
    pub fn new(plan: NodePlan, config: Arc<TunnelConfig>, tunnel: u32, strict: bool) -> Self {
        Node {
            plan,
            config,
            tunnel,
            strict,
            joined: false,
            issued: 0,
            records: BTreeMap::new(),
            saved: HashMap::new(),
            held: BTreeMap::new(),
            deferred: Vec::new(),
        }
    }

    pub fn index(&self) -> usize {
        self.plan.index
    }

    pub fn rank(&self) -> u32 {
        self.plan.rank
    }

    pub fn plan(&self) -> &NodePlan {
        &self.plan
    }

    pub fn joined(&self) -> bool {
        self.joined
    }

    pub fn record(&self, id: &EndpointId) -> Option<&EndpointRecord> {
        self.records.get(id)
    }

    pub fn records(&self) -> impl Iterator<Item = &EndpointRecord> {
        self.records.values()
    }

    pub fn held_updates(&self) -> usize {
        self.held.values().map(Vec::len).sum()
    }

    pub fn deferred_solicits(&self) -> usize {
        self.deferred.len()
    }

    /// Names the next qubit this node stores.
    pub fn allocate(&mut self) -> EndpointId {
        let id = EndpointId { tunnel: self.tunnel, node: self.plan.index, seq: self.issued };
        self.issued += 1;
        id
    }

    fn is_released(&self, id: &EndpointId) -> bool {
        id.node == self.plan.index && id.seq < self.issued && !self.records.contains_key(id)
    }

    fn fault<B: Backend>(&self, b: &mut B, err: ProtocolError) -> Result<(), ProtocolError> {
        if self.strict {
            Err(err)
        } else {
            b.notice(Notice::Warning { node: self.plan.index, message: err.to_string() });
            Ok(())
        }
    }

    fn target_rounds(&self) -> u32 {
        self.config.rounds(self.plan.rank)
    }

    fn far_rank(&self, rec: &EndpointRecord) -> u32 {
        self.config.rank(rec.far.node)
    }

    fn is_initiator(&self, rec: &EndpointRecord) -> bool {
        let (me_down, far_rank) = (self.plan.index < rec.far.node, self.far_rank(rec));
        let (down_rank, up_rank) = if me_down { (self.plan.rank, far_rank) } else { (far_rank, self.plan.rank) };
        let (initiator, _) = purification_roles(down_rank, up_rank);
        initiator == if me_down { Direction::Downstream } else { Direction::Upstream }
    }

    fn observe<B: Backend>(&self, b: &mut B, id: EndpointId, step: Step, round: u32) {
        b.observe(id, step, round, self.target_rounds());
    }

    fn move_to<B: Backend>(&mut self, b: &mut B, id: EndpointId, to: EndpointState) -> Result<(), ProtocolError> {
        let rec =
            self.records.get_mut(&id).ok_or(ProtocolError::UnknownEndpoint { node: self.plan.index, endpoint: id })?;
        let from = rec.state;
        if !is_fsm_edge(from, to) {
            return Err(ProtocolError::IllegalTransition { endpoint: id, from, to });
        }
        rec.state = to;
        let round = rec.round;
        self.observe(b, id, Step::Move { from, to }, round);
        Ok(())
    }

    /// Moves a record to RELEASE and frees its slot.
    fn release<B: Backend>(&mut self, b: &mut B, id: EndpointId) -> Result<(), ProtocolError> {
        self.move_to(b, id, EndpointState::Release)?;
        let rec = self.records.remove(&id).expect("record exists");
        self.observe(b, id, Step::Free, rec.round);
        Ok(())
    }

    fn promote<B: Backend>(&mut self, b: &mut B, id: EndpointId) -> Result<(), ProtocolError> {
        let Some(rec) = self.records.get(&id) else { return Ok(()) };
        match rec.state {
            EndpointState::Wait if endpoint_ready_rank(self.plan.rank, self.far_rank(rec)) => {
                self.records.get_mut(&id).expect("record exists").round = 0;
                self.move_to(b, id, EndpointState::Purif)?;
                self.promote(b, id)
            }
            EndpointState::Purif if rec.round >= self.target_rounds() => {
                self.move_to(b, id, EndpointState::Eligible)?;
                if self.config.is_end(self.plan.index) {
                    b.end_ready(id);
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Handles NEW_TUN: joins the tunnel and forwards it toward the far end.
    pub fn on_new_tun<B: Backend>(&mut self, b: &mut B) -> Result<(), ProtocolError> {
        self.joined = true;
        if self.plan.index + 1 < self.config.len() {
            b.send(self.plan.index, Direction::Upstream, Message::NewTun { tunnel: self.tunnel })?;
        }
        Ok(())
    }

    /// A fresh elementary pair was heralded; `id` must come from [`Node::allocate`].
    pub fn on_link<B: Backend>(&mut self, b: &mut B, id: EndpointId, far: EndpointId) -> Result<(), ProtocolError> {
        let rec = EndpointRecord { id, far, state: EndpointState::Wait, round: 0, frame: PauliFrame::IDENTITY };
        self.records.insert(id, rec);
        self.observe(b, id, Step::Enter, 0);
        self.promote(b, id)?;
        self.progress(b)
    }

    /// The pair holding `id` was discarded by the network (cutoff).
    pub fn on_pair_lost<B: Backend>(&mut self, b: &mut B, id: EndpointId) -> Result<(), ProtocolError> {
        if self.records.contains_key(&id) {
            self.release(b, id)?;
        }
        if let Some(msgs) = self.held.remove(&id) {
            for m in msgs {
                b.notice(Notice::UpdateDropped { node: self.plan.index, target: m.target });
            }
        }
        self.retry_deferred(b)?;
        self.progress(b)
    }

    /// Hands an ELIGIBLE end-node qubit to the application.
    pub fn deliver<B: Backend>(
        &mut self,
        b: &mut B,
        id: EndpointId,
        partner: EndpointId,
        frame: PauliFrame,
    ) -> Result<(), ProtocolError> {
        let rec =
            self.records.get(&id).ok_or(ProtocolError::UnknownEndpoint { node: self.plan.index, endpoint: id })?;
        if rec.state != EndpointState::Eligible {
            return Err(ProtocolError::UnexpectedState {
                endpoint: id,
                state: rec.state,
                context: "delivery needs ELIGIBLE",
            });
        }
        if rec.far != partner {
            return Err(ProtocolError::KnowledgeMismatch { endpoint: id, believed: rec.far, actual: partner });
        }
        if rec.frame != frame {
            return Err(ProtocolError::FrameMismatch { endpoint: id, tracked: rec.frame, actual: frame });
        }
        let round = rec.round;
        self.records.remove(&id);
        self.observe(b, id, Step::Deliver, round);
        Ok(())
    }

    pub fn on_message<B: Backend>(&mut self, b: &mut B, msg: Message) -> Result<(), ProtocolError> {
        if let Some(dest) = msg.destination() {
            if dest != self.plan.index {
                return b.send(self.plan.index, Direction::toward(self.plan.index, dest), msg);
            }
        }
        match msg {
            Message::NewTun { .. } => self.on_new_tun(b),
            Message::SwapUpdate(u) => self.on_update(b, u),
            Message::PurifSolicit(s) => {
                if self.on_solicit(b, s)? {
                    self.retry_deferred(b)?;
                }
                self.progress(b)
            }
            Message::PurifResponse(r) => self.on_response(b, r),
        }
    }

    fn on_update<B: Backend>(&mut self, b: &mut B, u: SwapUpdate) -> Result<(), ProtocolError> {
        let node = self.plan.index;
        if self.plan.rank < u.origin_rank {
            return self.fault(b, ProtocolError::UpdateRank { node, rank: self.plan.rank, origin_rank: u.origin_rank });
        }
        if self.plan.rank == u.origin_rank {
            if let Some(saved) = self.saved.remove(&u.target) {
                return self.forward_merged(b, u, &saved);
            }
            if self.records.contains_key(&u.target) {
                b.notice(Notice::UpdateHeld { node, target: u.target });
                self.held.entry(u.target).or_default().push(u);
                return Ok(());
            }
        } else if let Some(rec) = self.records.get_mut(&u.target) {
            if rec.state != EndpointState::Wait {
                let state = rec.state;
                return self.fault(
                    b,
                    ProtocolError::UnexpectedState {
                        endpoint: u.target,
                        state,
                        context: "only WAIT endpoints consume updates",
                    },
                );
            }
            rec.far = u.new_far;
            rec.frame ^= u.frame;
            b.notice(Notice::UpdateConsumed { node, origin: u.origin, target: u.target });
            self.promote(b, u.target)?;
            self.retry_deferred(b)?;
            return self.progress(b);
        }
        if self.is_released(&u.target) {
            b.notice(Notice::UpdateDropped { node, target: u.target });
            Ok(())
        } else {
            self.fault(b, ProtocolError::UnknownEndpoint { node, endpoint: u.target })
        }
    }

    fn forward_merged<B: Backend>(&mut self, b: &mut B, u: SwapUpdate, s: &SavedSwap) -> Result<(), ProtocolError> {
        let (next, local_frame) = if u.target == s.down { (s.up_far, s.down_frame) } else { (s.down_far, s.up_frame) };
        b.notice(Notice::UpdateMerged { node: self.plan.index, origin: u.origin, target: u.target, next });
        let merged = SwapUpdate { target: next, frame: u.frame ^ local_frame ^ s.outcome, ..u };
        b.send(self.plan.index, u.direction, Message::SwapUpdate(merged))
    }

    /// Returns false if the solicit had to be deferred.
    fn on_solicit<B: Backend>(&mut self, b: &mut B, s: PurifSolicit) -> Result<bool, ProtocolError> {
        let node = self.plan.index;
        let (initiator_kept, kept) = s.kept;
        let (initiator_anc, anc) = s.ancilla;
        for id in [kept, anc] {
            if !self.records.contains_key(&id) && !self.is_released(&id) {
                return self.fault(b, ProtocolError::UnknownEndpoint { node, endpoint: id }).map(|_| true);
            }
        }
        let kept_live = self.records.get(&kept);
        let anc_live = self.records.get(&anc);
        let respond =
            |verdict| Message::PurifResponse(PurifResponse { tunnel: s.tunnel, kept: s.kept, round: s.round, verdict });
        let back = Direction::toward(node, initiator_kept.node);

        if kept_live.is_none() || anc_live.is_none() {
            // One of the two pairs is already gone, so the round fails.
            for id in [kept, anc] {
                if self.records.contains_key(&id) {
                    b.discard(id)?;
                    self.release(b, id)?;
                }
            }
            b.notice(Notice::Purified { node, kept, verdict: PurifVerdict::Fail, round: s.round });
            b.send(node, back, respond(PurifVerdict::Fail))?;
            return Ok(true);
        }
        let (kr, ar) = (kept_live.expect("checked"), anc_live.expect("checked"));
        if kr.far != initiator_kept || ar.far != initiator_anc {
            b.notice(Notice::SolicitDeferred { node, kept });
            self.deferred.push(s);
            return Ok(false);
        }
        for rec in [kr, ar] {
            match rec.state {
                EndpointState::Wait => {}
                EndpointState::Purif if rec.round == s.round => {}
                EndpointState::Purif => {
                    let err = ProtocolError::RoundMismatch { endpoint: rec.id, got: s.round, expected: rec.round };
                    return self.fault(b, err).map(|_| true);
                }
                state => {
                    let err = ProtocolError::UnexpectedState {
                        endpoint: rec.id,
                        state,
                        context: "solicited endpoints must be WAIT or PURIF",
                    };
                    return self.fault(b, err).map(|_| true);
                }
            }
        }
        let kept_state = kr.state;
        let report = b.purify(kept, anc)?;
        self.release(b, anc)?;
        b.notice(Notice::Purified { node, kept, verdict: report.verdict, round: s.round });
        match (report.verdict, kept_state) {
            (PurifVerdict::Ok, EndpointState::Purif) => {
                self.move_to(b, kept, EndpointState::Pending)?;
                self.records.get_mut(&kept).expect("record exists").round += 1;
                self.move_to(b, kept, EndpointState::Purif)?;
                self.promote(b, kept)?;
            }
            (PurifVerdict::Ok, _) => {}
            (PurifVerdict::Fail, EndpointState::Purif) => {
                self.move_to(b, kept, EndpointState::Pending)?;
                self.release(b, kept)?;
            }
            (PurifVerdict::Fail, _) => self.release(b, kept)?,
        }
        b.send(node, back, respond(report.verdict))?;
        Ok(true)
    }

    fn retry_deferred<B: Backend>(&mut self, b: &mut B) -> Result<(), ProtocolError> {
        loop {
            let mut resolved = false;
            for s in std::mem::take(&mut self.deferred) {
                resolved |= self.on_solicit(b, s)?;
            }
            if !resolved {
                return Ok(());
            }
        }
    }

    fn on_response<B: Backend>(&mut self, b: &mut B, r: PurifResponse) -> Result<(), ProtocolError> {
        let id = r.kept.0;
        let Some(rec) = self.records.get(&id) else {
            if self.is_released(&id) {
                return Ok(());
            }
            return self.fault(b, ProtocolError::UnknownEndpoint { node: self.plan.index, endpoint: id });
        };
        if rec.state != EndpointState::Pending {
            let state = rec.state;
            return self.fault(
                b,
                ProtocolError::UnexpectedState { endpoint: id, state, context: "responses go to PENDING endpoints" },
            );
        }
        match r.verdict {
            PurifVerdict::Ok => {
                self.records.get_mut(&id).expect("record exists").round += 1;
                self.move_to(b, id, EndpointState::Purif)?;
                self.promote(b, id)?;
            }
            PurifVerdict::Fail => self.release(b, id)?,
        }
        self.progress(b)
    }

    fn progress<B: Backend>(&mut self, b: &mut B) -> Result<(), ProtocolError> {
        self.try_purify(b)?;
        self.try_swap(b)
    }

    fn try_purify<B: Backend>(&mut self, b: &mut B) -> Result<(), ProtocolError> {
        let rounds = self.target_rounds();
        if rounds == 0 {
            return Ok(());
        }
        let mut groups: BTreeMap<(usize, u32), Vec<EndpointId>> = BTreeMap::new();
        for rec in self.records.values() {
            if rec.state == EndpointState::Purif && rec.round < rounds && self.is_initiator(rec) {
                groups.entry((rec.far.node, rec.round)).or_default().push(rec.id);
            }
        }
        for ((_, round), ids) in groups {
            for pair in ids.chunks_exact(2) {
                let (kept, anc) = (pair[0], pair[1]);
                let kept_far = self.records[&kept].far;
                let anc_far = self.records[&anc].far;
                self.move_to(b, kept, EndpointState::Pending)?;
                self.release(b, anc)?;
                let bit = b.random_bit();
                b.notice(Notice::Solicited { node: self.plan.index, kept, ancilla: anc, round });
                let msg =
                    PurifSolicit { tunnel: self.tunnel, kept: (kept, kept_far), ancilla: (anc, anc_far), round, bit };
                b.send(self.plan.index, Direction::toward(self.plan.index, kept_far.node), Message::PurifSolicit(msg))?;
            }
        }
        Ok(())
    }

    fn try_swap<B: Backend>(&mut self, b: &mut B) -> Result<(), ProtocolError> {
        if self.config.is_end(self.plan.index) {
            return Ok(());
        }
        let me = self.plan.index;
        let eligible = |dir: Direction| -> Vec<EndpointId> {
            self.records
                .values()
                .filter(|r| r.state == EndpointState::Eligible && Direction::toward(me, r.far.node) == dir)
                .map(|r| r.id)
                .collect()
        };
        let downs = eligible(Direction::Downstream);
        let ups = eligible(Direction::Upstream);
        for (&down, &up) in downs.iter().zip(ups.iter()) {
            let (d, u) = (self.records[&down].clone(), self.records[&up].clone());
            let outcome = b.swap(me, down, up)?;
            b.notice(Notice::Swapped { node: me, down, up, outcome });
            self.release(b, down)?;
            self.release(b, up)?;
            let saved =
                SavedSwap { down, up, down_far: d.far, up_far: u.far, down_frame: d.frame, up_frame: u.frame, outcome };
            let base = SwapUpdate {
                tunnel: self.tunnel,
                origin: me,
                origin_rank: self.plan.rank,
                direction: Direction::Upstream,
                target: u.far,
                new_far: d.far,
                frame: d.frame ^ outcome,
            };
            let mut pending_down = true;
            let mut pending_up = true;
            if self.plan.generates_upstream_update {
                b.notice(Notice::UpdateGenerated { node: me, direction: Direction::Upstream, target: u.far });
                b.send(me, Direction::Upstream, Message::SwapUpdate(base.clone()))?;
                pending_down = false;
            }
            if self.plan.generates_downstream_update {
                let msg = SwapUpdate {
                    direction: Direction::Downstream,
                    target: d.far,
                    new_far: u.far,
                    frame: u.frame ^ outcome,
                    ..base
                };
                b.notice(Notice::UpdateGenerated { node: me, direction: Direction::Downstream, target: d.far });
                b.send(me, Direction::Downstream, Message::SwapUpdate(msg))?;
                pending_up = false;
            }
            // The merge target for an upstream-travelling update is the downstream qubit, and vice versa.
            if pending_down {
                self.saved.insert(down, saved);
            }
            if pending_up {
                self.saved.insert(up, saved);
            }
            for id in [down, up] {
                for m in self.held.remove(&id).unwrap_or_default() {
                    self.saved.remove(&id);
                    self.forward_merged(b, m, &saved)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::config::{ranks_nested, validate_config};

    #[derive(Default)]
    struct Stub {
        sent: Vec<(usize, Direction, Message)>,
        notices: Vec<Notice>,
        ready: Vec<EndpointId>,
        outcome: PauliFrame,
    }

    impl Backend for Stub {
        fn now(&self) -> SimTime {
            0.0
        }
        fn send(&mut self, from: usize, dir: Direction, msg: Message) -> Result<(), ProtocolError> {
            self.sent.push((from, dir, msg));
            Ok(())
        }
        fn swap(&mut self, _: usize, _: EndpointId, _: EndpointId) -> Result<PauliFrame, ProtocolError> {
            Ok(self.outcome)
        }
        fn purify(&mut self, _: EndpointId, _: EndpointId) -> Result<PurifyReport, ProtocolError> {
            Ok(PurifyReport { verdict: PurifVerdict::Ok, success_prob: 1.0 })
        }
        fn discard(&mut self, _: EndpointId) -> Result<(), ProtocolError> {
            Ok(())
        }
        fn end_ready(&mut self, endpoint: EndpointId) {
            self.ready.push(endpoint);
        }
        fn observe(&mut self, _: EndpointId, _: Step, _: u32, _: u32) {}
        fn notice(&mut self, notice: Notice) {
            self.notices.push(notice);
        }
        fn random_bit(&mut self) -> bool {
            false
        }
    }

    // Nested chain of five: ranks [2, 0, 1, 0, 2], no purification.
    fn node(index: usize, strict: bool) -> Node {
        let config = Arc::new(TunnelConfig::new(ranks_nested(5).unwrap(), vec![0; 3], 1));
        let plan = validate_config(&config).unwrap().swap_remove(index);
        Node::new(plan, config, 0, strict)
    }

    fn ep(node: usize, seq: u64) -> EndpointId {
        EndpointId { tunnel: 0, node, seq }
    }

    fn update(
        origin: usize,
        origin_rank: u32,
        target: EndpointId,
        new_far: EndpointId,
        frame: PauliFrame,
    ) -> SwapUpdate {
        SwapUpdate { tunnel: 0, origin, origin_rank, direction: Direction::Downstream, target, new_far, frame }
    }

    #[test]
    fn rank_zero_node_swaps_and_notifies_both_sides() {
        let (mut n, mut b) = (node(1, true), Stub { outcome: PauliFrame::new(true, false), ..Stub::default() });
        let (down, up) = (n.allocate(), n.allocate());
        n.on_link(&mut b, down, ep(0, 0)).unwrap();
        assert!(b.sent.is_empty());
        n.on_link(&mut b, up, ep(2, 0)).unwrap();
        assert_eq!(n.records().count(), 0);
        let targets: Vec<(Direction, EndpointId, EndpointId, PauliFrame)> = b
            .sent
            .iter()
            .map(|(_, d, m)| match m {
                Message::SwapUpdate(u) => (*d, u.target, u.new_far, u.frame),
                other => panic!("unexpected {other:?}"),
            })
            .collect();
        let x = PauliFrame::new(true, false);
        assert_eq!(
            targets,
            [(Direction::Upstream, ep(2, 0), ep(0, 0), x), (Direction::Downstream, ep(0, 0), ep(2, 0), x)]
        );
    }

    #[test]
    fn end_node_consumes_and_checks_frame_at_delivery() {
        let (mut n, mut b) = (node(0, true), Stub::default());
        let a = n.allocate();
        n.on_link(&mut b, a, ep(1, 0)).unwrap();
        assert_eq!(n.record(&a).unwrap().state, EndpointState::Wait);
        let z = PauliFrame::new(false, true);
        n.on_message(&mut b, Message::SwapUpdate(update(1, 0, a, ep(4, 0), z))).unwrap();
        assert_eq!(b.ready, [a]);
        let err = n.deliver(&mut b, a, ep(4, 0), PauliFrame::IDENTITY).unwrap_err();
        assert!(matches!(err, ProtocolError::FrameMismatch { .. }));
        let err = n.deliver(&mut b, a, ep(4, 1), z).unwrap_err();
        assert!(matches!(err, ProtocolError::KnowledgeMismatch { .. }));
        n.deliver(&mut b, a, ep(4, 0), z).unwrap();
        assert_eq!(n.records().count(), 0);
    }

    #[test]
    fn strict_mode_rejects_updates_for_unknown_endpoints() {
        let msg = Message::SwapUpdate(update(3, 0, ep(2, 7), ep(4, 0), PauliFrame::IDENTITY));
        let (mut strict, mut b) = (node(2, true), Stub::default());
        let err = strict.on_message(&mut b, msg.clone()).unwrap_err();
        assert!(matches!(err, ProtocolError::UnknownEndpoint { node: 2, .. }));

        let (mut lenient, mut b) = (node(2, false), Stub::default());
        lenient.on_message(&mut b, msg).unwrap();
        assert!(matches!(b.notices.as_slice(), [Notice::Warning { node: 2, .. }]));
    }

    #[test]
    fn updates_from_higher_ranks_are_faults() {
        let (mut n, mut b) = (node(1, true), Stub::default());
        let err = n.on_message(&mut b, Message::SwapUpdate(update(2, 1, ep(1, 0), ep(4, 0), PauliFrame::IDENTITY)));
        assert!(matches!(err, Err(ProtocolError::UpdateRank { node: 1, rank: 0, origin_rank: 1 })));
    }
}
