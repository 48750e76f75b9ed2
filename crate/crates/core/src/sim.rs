//! One tunnel over one linear chain, simulated end to end.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belldiag::{NoiseParams, PauliFrame};
use crate::engine::{EngineError, EventHandle, RandomStream, Scheduler, SimTime};
use crate::netmodel::{
    Bank, Channel, LinkModel, LinkStatus, PairId, Registry, RegistryError, RetireCounts, RetireReason,
};
use crate::protocol::node::Notice;
use crate::protocol::{
    validate_config, Backend, ConfigError, Direction, EndpointId, EndpointState, Message, Node, ProtocolError,
    PurifVerdict, PurifyReport, Step, TunnelConfig,
};

/// Physical and run-control parameters of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub channel: Channel,
    pub link: LinkModel,
    /// Memory slots per bank (per node, per neighbouring link).
    pub modes: usize,
    pub noise: NoiseParams,
    /// Discard pairs once their older qubit has been stored for one coherence time.
    pub cutoff: bool,
    /// Abort on protocol inconsistencies instead of logging and dropping them.
    pub strict: bool,
    /// Give up after this much simulated time.
    pub max_sim_time: SimTime,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            channel: Channel::default(),
            link: LinkModel::default(),
            modes: 16,
            noise: NoiseParams::new(0.01334, Some(5e-3), 0.005).expect("valid defaults"),
            cutoff: true,
            strict: true,
            max_sim_time: 2.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("protocol error at t = {time} s: {source}")]
    Protocol { time: SimTime, source: ProtocolError },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Finish {
    /// All requested pairs were delivered.
    Completed,
    /// The time guard fired first.
    TimeLimit,
    /// Nothing was left to happen.
    Stalled,
}

/// Counters gathered over one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub delivered: u64,
    pub fidelities: Vec<f64>,
    pub delivery_times: Vec<SimTime>,
    pub sim_time: SimTime,
    pub finish: Option<Finish>,
    pub swaps: u64,
    pub purif_ok: u64,
    pub purif_fail: u64,
    pub cutoffs: u64,
    pub links_heralded: u64,
    pub link_blocks: u64,
    pub message_hops: u64,
    pub updates_generated: BTreeMap<(usize, Direction), u64>,
    pub updates_consumed: BTreeMap<(usize, usize), u64>,
    pub updates_merged: u64,
    pub updates_dropped: u64,
    pub solicits_deferred: u64,
    pub warnings: u64,
    pub transitions: BTreeMap<(EndpointState, EndpointState), u64>,
    pub entered: u64,
    pub handed_over: u64,
    pub freed: u64,
    /// ELIGIBLE entries whose round counter differed from the target.
    pub eligible_round_mismatch: u64,
    pub retired: RetireCounts,
    pub pairs_created: u64,
}

impl RunStats {
    pub fn throughput(&self) -> f64 {
        if self.sim_time > 0.0 {
            self.delivered as f64 / self.sim_time
        } else {
            0.0
        }
    }

    pub fn mean_fidelity(&self) -> Option<f64> {
        (!self.fidelities.is_empty()).then(|| self.fidelities.iter().sum::<f64>() / self.fidelities.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEntry {
    Hop { from: usize, to: usize, msg: Message },
    Herald { link: usize, pair: PairId, ends: [EndpointId; 2] },
    Blocked { link: usize },
    Cutoff { pair: PairId, ends: [EndpointId; 2] },
    Transition { endpoint: EndpointId, step: Step, round: u32 },
    Delivered { pair: PairId, ends: [EndpointId; 2], fidelity: f64, frame: PauliFrame },
    Protocol(Notice),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceLine {
    pub t: SimTime,
    #[serde(flatten)]
    pub entry: TraceEntry,
}

#[derive(Debug, Clone, PartialEq)]
enum SimEvent {
    Arrive { to: usize, msg: Message },
    AttemptSuccess { link: usize },
    Herald { link: usize },
    Cutoff { pair: PairId },
    TimeLimit,
}

pub struct RunOutput {
    pub stats: RunStats,
    pub trace: Option<Vec<TraceLine>>,
}

/// Everything the nodes act on except the nodes themselves.
struct World {
    sched: Scheduler<SimEvent>,
    registry: Registry,
    params: ChainParams,
    config: Arc<TunnelConfig>,
    link_rng: RandomStream,
    swap_rng: RandomStream,
    purif_rng: RandomStream,
    links: Vec<LinkStatus>,
    cutoffs: HashMap<PairId, EventHandle>,
    ready: BTreeSet<EndpointId>,
    stats: RunStats,
    trace: Option<Vec<TraceLine>>,
}

fn net(err: RegistryError) -> ProtocolError {
    ProtocolError::Network(err.to_string())
}

fn engine(err: EngineError) -> ProtocolError {
    ProtocolError::Network(err.to_string())
}

impl World {
    fn log(&mut self, entry: TraceEntry) {
        if let Some(trace) = &mut self.trace {
            trace.push(TraceLine { t: self.sched.now(), entry });
        }
    }

    fn arm_cutoff(&mut self, pair: PairId) -> Result<(), ProtocolError> {
        if !self.params.cutoff {
            return Ok(());
        }
        let Some(tc) = self.params.noise.coherence_time else { return Ok(()) };
        let born = self.registry.get(pair).expect("live pair").born();
        let at = (born + tc).max(self.sched.now());
        let handle = self.sched.schedule(at, SimEvent::Cutoff { pair }).map_err(engine)?;
        self.cutoffs.insert(pair, handle);
        Ok(())
    }

    fn disarm_cutoff(&mut self, pair: PairId) {
        if let Some(h) = self.cutoffs.remove(&pair) {
            self.sched.cancel(h);
        }
    }

    fn start_link(&mut self, link: usize) -> Result<(), ProtocolError> {
        self.links[link] = LinkStatus::Running;
        let dt = self.params.link.next_success(self.link_rng.rng());
        self.sched.schedule_in(dt, SimEvent::AttemptSuccess { link }).map_err(engine)?;
        Ok(())
    }

    fn unblock_links(&mut self) -> Result<(), ProtocolError> {
        for link in 0..self.links.len() {
            if self.links[link] == LinkStatus::Blocked && Bank::of_link(link).iter().all(|&b| self.registry.has_room(b))
            {
                self.start_link(link)?;
            }
        }
        Ok(())
    }
}

impl Backend for World {
    fn now(&self) -> SimTime {
        self.sched.now()
    }

    fn send(&mut self, from: usize, dir: Direction, msg: Message) -> Result<(), ProtocolError> {
        let to = match dir {
            Direction::Upstream if from + 1 < self.config.len() => from + 1,
            Direction::Downstream if from > 0 => from - 1,
            _ => {
                return Err(ProtocolError::Network(format!("node {from} has no {dir:?} neighbour for {}", msg.kind())))
            }
        };
        self.stats.message_hops += 1;
        self.log(TraceEntry::Hop { from, to, msg: msg.clone() });
        self.sched.schedule_in(self.params.channel.hop_latency(), SimEvent::Arrive { to, msg }).map_err(engine)?;
        Ok(())
    }

    fn swap(&mut self, _node: usize, down: EndpointId, up: EndpointId) -> Result<PauliFrame, ProtocolError> {
        let now = self.sched.now();
        let out = self.registry.swap(down, up, now, self.swap_rng.rng()).map_err(net)?;
        for p in out.retired {
            self.disarm_cutoff(p);
        }
        self.arm_cutoff(out.pair)?;
        self.stats.swaps += 1;
        Ok(out.outcome)
    }

    fn purify(&mut self, kept: EndpointId, ancilla: EndpointId) -> Result<PurifyReport, ProtocolError> {
        let now = self.sched.now();
        let out = self.registry.purify(kept, ancilla, now, self.purif_rng.rng()).map_err(net)?;
        for p in out.retired.into_iter().flatten() {
            self.disarm_cutoff(p);
        }
        match out.verdict {
            PurifVerdict::Ok => self.stats.purif_ok += 1,
            PurifVerdict::Fail => self.stats.purif_fail += 1,
        }
        Ok(PurifyReport { verdict: out.verdict, success_prob: out.success_prob })
    }

    fn discard(&mut self, endpoint: EndpointId) -> Result<(), ProtocolError> {
        let pair =
            self.registry.pair_of(endpoint).ok_or(ProtocolError::Network(format!("{endpoint} holds no pair")))?;
        self.registry.retire(pair, RetireReason::PurifFailed).map_err(net)?;
        self.disarm_cutoff(pair);
        Ok(())
    }

    fn end_ready(&mut self, endpoint: EndpointId) {
        self.ready.insert(endpoint);
    }

    fn observe(&mut self, endpoint: EndpointId, step: Step, round: u32, target: u32) {
        match step {
            Step::Enter => self.stats.entered += 1,
            Step::Move { from, to } => {
                *self.stats.transitions.entry((from, to)).or_default() += 1;
                if to == EndpointState::Eligible && round != target {
                    self.stats.eligible_round_mismatch += 1;
                }
            }
            Step::Deliver => self.stats.handed_over += 1,
            Step::Free => self.stats.freed += 1,
        }
        self.log(TraceEntry::Transition { endpoint, step, round });
    }

    fn notice(&mut self, notice: Notice) {
        match &notice {
            Notice::UpdateGenerated { node, direction, .. } => {
                *self.stats.updates_generated.entry((*node, *direction)).or_default() += 1
            }
            Notice::UpdateConsumed { node, origin, .. } => {
                *self.stats.updates_consumed.entry((*origin, *node)).or_default() += 1
            }
            Notice::UpdateMerged { .. } => self.stats.updates_merged += 1,
            Notice::UpdateDropped { .. } => self.stats.updates_dropped += 1,
            Notice::SolicitDeferred { .. } => self.stats.solicits_deferred += 1,
            Notice::Warning { .. } => self.stats.warnings += 1,
            _ => {}
        }
        self.log(TraceEntry::Protocol(notice));
    }

    fn random_bit(&mut self) -> bool {
        self.purif_rng.rng().random()
    }
}

/// Simulates one tunnel until `config.pairs` pairs reach the end nodes.
pub struct ChainSim {
    nodes: Vec<Node>,
    world: World,
}

impl ChainSim {
    pub fn new(config: TunnelConfig, params: ChainParams, seed: u64, trace: bool) -> Result<Self, SimError> {
        check_params(&params)?;
        let plans = validate_config(&config)?;
        let config = Arc::new(config);
        let nodes = plans.into_iter().map(|p| Node::new(p, Arc::clone(&config), 0, params.strict)).collect();
        let links = config.len() - 1;
        let world = World {
            sched: Scheduler::new(),
            registry: Registry::new(params.noise, params.modes),
            params,
            config,
            link_rng: RandomStream::new(seed, "link"),
            swap_rng: RandomStream::new(seed, "swap"),
            purif_rng: RandomStream::new(seed, "purif"),
            links: vec![LinkStatus::Idle; links],
            cutoffs: HashMap::new(),
            ready: BTreeSet::new(),
            stats: RunStats::default(),
            trace: trace.then(Vec::new),
        };
        Ok(ChainSim { nodes, world })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn registry(&self) -> &Registry {
        &self.world.registry
    }

    pub fn run(mut self) -> Result<RunOutput, SimError> {
        let time = |w: &World| w.sched.now();
        let wrap = |w: &World, source| SimError::Protocol { time: time(w), source };
        self.world.sched.schedule(self.world.params.max_sim_time, SimEvent::TimeLimit)?;
        self.nodes[0].on_new_tun(&mut self.world).map_err(|e| wrap(&self.world, e))?;

        let finish = loop {
            let Some(event) = self.world.sched.pop() else { break Finish::Stalled };
            match self.dispatch(event.kind) {
                Ok(Some(f)) => break f,
                Ok(None) => {}
                Err(e) => return Err(wrap(&self.world, e)),
            }
        };
        let mut stats = std::mem::take(&mut self.world.stats);
        stats.sim_time = self.world.sched.now();
        stats.finish = Some(finish);
        stats.retired = self.world.registry.retired();
        stats.pairs_created = self.world.registry.created();
        Ok(RunOutput { stats, trace: self.world.trace.take() })
    }

    fn dispatch(&mut self, event: SimEvent) -> Result<Option<Finish>, ProtocolError> {
        let w = &mut self.world;
        match event {
            SimEvent::TimeLimit => return Ok(Some(Finish::TimeLimit)),
            SimEvent::Arrive { to, msg } => {
                let joins = matches!(msg, Message::NewTun { .. });
                self.nodes[to].on_message(w, msg)?;
                if joins && to > 0 {
                    w.start_link(to - 1)?;
                }
            }
            SimEvent::AttemptSuccess { link } => {
                let banks = Bank::of_link(link);
                if w.registry.reserve(banks).is_ok() {
                    w.sched.schedule_in(w.params.channel.herald_delay(), SimEvent::Herald { link }).map_err(engine)?;
                    w.start_link(link)?;
                } else {
                    w.links[link] = LinkStatus::Blocked;
                    w.stats.link_blocks += 1;
                    w.log(TraceEntry::Blocked { link });
                }
            }
            SimEvent::Herald { link } => {
                let banks = Bank::of_link(link);
                let a = self.nodes[link].allocate();
                let b = self.nodes[link + 1].allocate();
                let pair = w.registry.create([(a, banks[0]), (b, banks[1])], w.sched.now()).map_err(net)?;
                w.stats.links_heralded += 1;
                w.log(TraceEntry::Herald { link, pair, ends: [a, b] });
                w.arm_cutoff(pair)?;
                self.nodes[link].on_link(w, a, b)?;
                self.nodes[link + 1].on_link(w, b, a)?;
            }
            SimEvent::Cutoff { pair } => {
                w.cutoffs.remove(&pair);
                let gone = w.registry.retire(pair, RetireReason::Cutoff).map_err(net)?;
                w.stats.cutoffs += 1;
                let ends = gone.qubits.map(|q| q.endpoint);
                w.log(TraceEntry::Cutoff { pair, ends });
                for e in ends {
                    w.ready.remove(&e);
                    self.nodes[e.node].on_pair_lost(w, e)?;
                }
            }
        }
        let done = self.deliver_ready()?;
        self.world.unblock_links()?;
        Ok(done.then_some(Finish::Completed))
    }

    /// Hands over every pair whose two end-node qubits are ELIGIBLE.
    fn deliver_ready(&mut self) -> Result<bool, ProtocolError> {
        let w = &mut self.world;
        let last = self.nodes.len() - 1;
        let candidates: Vec<EndpointId> = w.ready.iter().copied().filter(|e| e.node == 0).collect();
        for a in candidates {
            let Some(b) = w.registry.partner(a) else {
                w.ready.remove(&a);
                continue;
            };
            if !w.ready.contains(&b) {
                continue;
            }
            if b.node != last {
                return Err(ProtocolError::Network(format!("end qubit {a} is paired with interior qubit {b}")));
            }
            let pair_id = w.registry.pair_of(a).expect("partner exists");
            let frame = w.registry.get(pair_id).expect("live").frame;
            let pair = w.registry.deliver(pair_id, w.sched.now()).map_err(net)?;
            w.disarm_cutoff(pair_id);
            w.ready.remove(&a);
            w.ready.remove(&b);
            self.nodes[0].deliver(w, a, b, frame)?;
            self.nodes[last].deliver(w, b, a, frame)?;
            let fidelity = pair.state.fidelity();
            w.stats.delivered += 1;
            w.stats.fidelities.push(fidelity);
            w.stats.delivery_times.push(w.sched.now());
            w.log(TraceEntry::Delivered { pair: pair_id, ends: [a, b], fidelity, frame });
            if w.stats.delivered >= w.config.pairs {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

fn check_params(p: &ChainParams) -> Result<(), SimError> {
    let bad = |what: &str| Err(SimError::Param(what.to_string()));
    if !(p.channel.link_length_m > 0.0 && p.channel.link_length_m.is_finite()) {
        return bad("link length must be positive");
    }
    if !(p.channel.speed_mps > 0.0 && p.channel.speed_mps.is_finite()) {
        return bad("signal speed must be positive");
    }
    if !(p.link.attempt_period > 0.0 && p.link.attempt_period.is_finite()) {
        return bad("attempt period must be positive");
    }
    if !(p.link.success_prob > 0.0 && p.link.success_prob <= 1.0) {
        return bad("link success probability must lie in (0, 1]");
    }
    if p.modes == 0 {
        return bad("memories need at least one mode");
    }
    if !(p.max_sim_time > 0.0 && p.max_sim_time.is_finite()) {
        return bad("time limit must be positive and finite");
    }
    Ok(())
}

/// Convenience wrapper around [`ChainSim`].
pub fn run_chain(config: TunnelConfig, params: ChainParams, seed: u64, trace: bool) -> Result<RunOutput, SimError> {
    ChainSim::new(config, params, seed, trace)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{ranks_consecutive, ranks_nested, ranks_parallel};

    fn ideal() -> ChainParams {
        ChainParams { noise: NoiseParams::noiseless(), ..ChainParams::default() }
    }

    #[test]
    fn noiseless_chain_delivers_perfect_pairs() {
        for ranks in [ranks_parallel(9), ranks_consecutive(9), ranks_nested(9)] {
            let ranks = ranks.unwrap();
            let p = vec![0; *ranks.iter().max().unwrap() as usize + 1];
            let out = run_chain(TunnelConfig::new(ranks, p, 20), ideal(), 1, false).unwrap();
            assert_eq!(out.stats.finish, Some(Finish::Completed));
            assert_eq!(out.stats.delivered, 20);
            assert!(out.stats.fidelities.iter().all(|&f| (f - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn same_seed_same_run() {
        let config = TunnelConfig::new(ranks_nested(9).unwrap(), vec![0, 1, 1, 0], 10);
        let a = run_chain(config.clone(), ChainParams::default(), 42, true).unwrap();
        let b = run_chain(config.clone(), ChainParams::default(), 42, true).unwrap();
        assert_eq!(a.stats, b.stats);
        assert_eq!(a.trace, b.trace);
        let c = run_chain(config, ChainParams::default(), 43, false).unwrap();
        assert_ne!(a.stats.fidelities, c.stats.fidelities);
    }

    #[test]
    fn accounting_balances() {
        let config = TunnelConfig::new(ranks_consecutive(9).unwrap(), vec![0, 0, 1, 0, 1, 0, 0, 0], 30);
        let s = run_chain(config, ChainParams::default(), 7, false).unwrap().stats;
        assert_eq!(s.warnings, 0);
        assert_eq!(s.eligible_round_mismatch, 0);
        assert_eq!(s.retired.delivered, s.delivered);
        assert_eq!(s.retired.swapped, 2 * s.swaps);
        assert_eq!(s.retired.cutoff, s.cutoffs);
        assert_eq!(s.retired.ancilla, s.purif_ok + s.purif_fail);
        assert_eq!(s.entered, 2 * s.links_heralded);
    }

    #[test]
    fn rejects_bad_params() {
        let config = TunnelConfig::new(ranks_parallel(5).unwrap(), vec![0, 0], 1);
        let p = ChainParams { modes: 0, ..ChainParams::default() };
        assert!(matches!(run_chain(config, p, 0, false), Err(SimError::Param(_))));
    }
}
