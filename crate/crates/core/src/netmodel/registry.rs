//! Ground-truth store of every live entangled pair.
//!
//! Nodes never see this; they act on their own records. The registry holds
//! the physical state, applies memory decoherence lazily and enforces
//! per-bank memory capacity.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::belldiag::{convolve, dejmps, dephase, depolarize_one_side, BellCoeffs, BellError, NoiseParams, PauliFrame};
use crate::engine::SimTime;
use crate::protocol::{Direction, EndpointId, PurifVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PairId(pub u64);

/// The memory bank of `node` facing the link on its `side`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Bank {
    pub node: usize,
    pub side: Direction,
}

impl Bank {
    /// Both banks serving link `link` (between `link` and `link + 1`).
    pub fn of_link(link: usize) -> [Bank; 2] {
        [Bank { node: link, side: Direction::Upstream }, Bank { node: link + 1, side: Direction::Downstream }]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Qubit {
    pub endpoint: EndpointId,
    pub bank: Bank,
    pub born: SimTime,
    pub last_touched: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pair {
    pub id: PairId,
    pub qubits: [Qubit; 2],
    pub state: BellCoeffs,
    pub frame: PauliFrame,
}

impl Pair {
    pub fn born(&self) -> SimTime {
        self.qubits[0].born.min(self.qubits[1].born)
    }

    fn slot(&self, endpoint: EndpointId) -> usize {
        if self.qubits[0].endpoint == endpoint {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RetireReason {
    Delivered,
    Swapped,
    Ancilla,
    PurifFailed,
    Cutoff,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RetireCounts {
    pub delivered: u64,
    pub swapped: u64,
    pub ancilla: u64,
    pub purif_failed: u64,
    pub cutoff: u64,
}

impl RetireCounts {
    pub fn total(&self) -> u64 {
        self.delivered + self.swapped + self.ancilla + self.purif_failed + self.cutoff
    }

    fn bump(&mut self, reason: RetireReason) {
        match reason {
            RetireReason::Delivered => self.delivered += 1,
            RetireReason::Swapped => self.swapped += 1,
            RetireReason::Ancilla => self.ancilla += 1,
            RetireReason::PurifFailed => self.purif_failed += 1,
            RetireReason::Cutoff => self.cutoff += 1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("no live pair holds endpoint {0}")]
    UnknownEndpoint(EndpointId),
    #[error("no live pair {0:?}")]
    UnknownPair(PairId),
    #[error("bank {0:?} has no reserved slot")]
    NotReserved(Bank),
    #[error("bank {0:?} is full")]
    Full(Bank),
    #[error("endpoints {0} and {1} belong to the same pair")]
    SamePair(EndpointId, EndpointId),
    #[error("endpoints {0} and {1} are not on the same node")]
    NotColocated(EndpointId, EndpointId),
    #[error("pairs for purification do not span the same nodes")]
    SpanMismatch,
    #[error(transparent)]
    Bell(#[from] BellError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapOutcome {
    pub pair: PairId,
    pub outcome: PauliFrame,
    pub retired: [PairId; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurifyOutcome {
    pub verdict: PurifVerdict,
    pub success_prob: f64,
    pub retired: [Option<PairId>; 2],
}

pub struct Registry {
    noise: NoiseParams,
    modes: usize,
    pairs: BTreeMap<PairId, Pair>,
    by_endpoint: HashMap<EndpointId, PairId>,
    occupied: HashMap<Bank, usize>,
    reserved: HashMap<Bank, usize>,
    next_id: u64,
    retired: RetireCounts,
}

impl Registry {
    pub fn new(noise: NoiseParams, modes: usize) -> Self {
        Registry {
            noise,
            modes,
            pairs: BTreeMap::new(),
            by_endpoint: HashMap::new(),
            occupied: HashMap::new(),
            reserved: HashMap::new(),
            next_id: 0,
            retired: RetireCounts::default(),
        }
    }

    pub fn noise(&self) -> &NoiseParams {
        &self.noise
    }

    pub fn created(&self) -> u64 {
        self.next_id
    }

    pub fn retired(&self) -> RetireCounts {
        self.retired
    }

    pub fn live(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &Pair> {
        self.pairs.values()
    }

    pub fn get(&self, id: PairId) -> Option<&Pair> {
        self.pairs.get(&id)
    }

    pub fn pair_of(&self, endpoint: EndpointId) -> Option<PairId> {
        self.by_endpoint.get(&endpoint).copied()
    }

    pub fn partner(&self, endpoint: EndpointId) -> Option<EndpointId> {
        let pair = &self.pairs[self.by_endpoint.get(&endpoint)?];
        Some(pair.qubits[1 - pair.slot(endpoint)].endpoint)
    }

    pub fn frame_of(&self, endpoint: EndpointId) -> Option<PauliFrame> {
        Some(self.pairs[self.by_endpoint.get(&endpoint)?].frame)
    }

    /// Live qubits plus reservations in `bank`.
    pub fn occupancy(&self, bank: Bank) -> usize {
        self.occupied.get(&bank).copied().unwrap_or(0) + self.reserved.get(&bank).copied().unwrap_or(0)
    }

    pub fn has_room(&self, bank: Bank) -> bool {
        self.occupancy(bank) < self.modes
    }

    /// Holds one slot in each bank for a pair that is still being heralded.
    pub fn reserve(&mut self, banks: [Bank; 2]) -> Result<(), RegistryError> {
        for bank in banks {
            if !self.has_room(bank) {
                return Err(RegistryError::Full(bank));
            }
        }
        for bank in banks {
            *self.reserved.entry(bank).or_default() += 1;
        }
        Ok(())
    }

    /// Stores a freshly heralded pair in slots previously reserved.
    pub fn create(&mut self, ends: [(EndpointId, Bank); 2], now: SimTime) -> Result<PairId, RegistryError> {
        for (_, bank) in ends {
            if self.reserved.get(&bank).copied().unwrap_or(0) == 0 {
                return Err(RegistryError::NotReserved(bank));
            }
        }
        let p0 = self.noise.p0_depol;
        let state = depolarize_one_side(&depolarize_one_side(&BellCoeffs::PHI_PLUS, p0)?, p0)?;
        let id = PairId(self.next_id);
        self.next_id += 1;
        let qubits = ends.map(|(endpoint, bank)| {
            *self.reserved.get_mut(&bank).expect("checked") -= 1;
            *self.occupied.entry(bank).or_default() += 1;
            self.by_endpoint.insert(endpoint, id);
            Qubit { endpoint, bank, born: now, last_touched: now }
        });
        self.pairs.insert(id, Pair { id, qubits, state, frame: PauliFrame::IDENTITY });
        Ok(id)
    }

    /// Applies the memory dephasing each qubit accrued since it was last touched.
    pub fn touch(&mut self, id: PairId, now: SimTime) -> Result<(), RegistryError> {
        let rate = self.noise.dephase_rate;
        let pair = self.pairs.get_mut(&id).ok_or(RegistryError::UnknownPair(id))?;
        for q in &mut pair.qubits {
            let dt = (now - q.last_touched).max(0.0);
            pair.state = dephase(&pair.state, dt, rate)?;
            q.last_touched = now;
        }
        Ok(())
    }

    fn gate_noise(&self, state: &BellCoeffs, times: usize) -> Result<BellCoeffs, BellError> {
        let mut s = *state;
        for _ in 0..times {
            s = depolarize_one_side(&s, self.noise.gate_depol)?;
        }
        Ok(s)
    }

    pub fn retire(&mut self, id: PairId, reason: RetireReason) -> Result<Pair, RegistryError> {
        let pair = self.pairs.remove(&id).ok_or(RegistryError::UnknownPair(id))?;
        for q in &pair.qubits {
            self.by_endpoint.remove(&q.endpoint);
            *self.occupied.get_mut(&q.bank).expect("occupied bank") -= 1;
        }
        self.retired.bump(reason);
        Ok(pair)
    }

    fn lookup(&self, endpoint: EndpointId) -> Result<PairId, RegistryError> {
        self.pair_of(endpoint).ok_or(RegistryError::UnknownEndpoint(endpoint))
    }

    /// Bell measurement on `a` and `b`, two qubits held by the same node.
    pub fn swap<R: Rng>(
        &mut self,
        a: EndpointId,
        b: EndpointId,
        now: SimTime,
        rng: &mut R,
    ) -> Result<SwapOutcome, RegistryError> {
        let (pa, pb) = (self.lookup(a)?, self.lookup(b)?);
        if pa == pb {
            return Err(RegistryError::SamePair(a, b));
        }
        if a.node != b.node {
            return Err(RegistryError::NotColocated(a, b));
        }
        self.touch(pa, now)?;
        self.touch(pb, now)?;
        let outcome = PauliFrame::from_index(rng.random_range(0..4));
        let (sa, sb) = (self.gate_noise(&self.pairs[&pa].state, 2)?, self.gate_noise(&self.pairs[&pb].state, 2)?);
        let left = self.retire(pa, RetireReason::Swapped)?;
        let right = self.retire(pb, RetireReason::Swapped)?;
        let survivors = [left.qubits[1 - left.slot(a)], right.qubits[1 - right.slot(b)]];

        let id = PairId(self.next_id);
        self.next_id += 1;
        for q in &survivors {
            *self.occupied.entry(q.bank).or_default() += 1;
            self.by_endpoint.insert(q.endpoint, id);
        }
        let pair = Pair { id, qubits: survivors, state: convolve(&sa, &sb), frame: left.frame ^ right.frame ^ outcome };
        self.pairs.insert(id, pair);
        Ok(SwapOutcome { pair: id, outcome, retired: [pa, pb] })
    }

    /// One DEJMPS round keeping the pair of `kept` and sacrificing the pair of
    /// `ancilla`. Both pairs must join the same two nodes.
    pub fn purify<R: Rng>(
        &mut self,
        kept: EndpointId,
        ancilla: EndpointId,
        now: SimTime,
        rng: &mut R,
    ) -> Result<PurifyOutcome, RegistryError> {
        let (pk, pa) = (self.lookup(kept)?, self.lookup(ancilla)?);
        if pk == pa {
            return Err(RegistryError::SamePair(kept, ancilla));
        }
        let nodes = |p: &Pair| {
            let mut n = [p.qubits[0].endpoint.node, p.qubits[1].endpoint.node];
            n.sort_unstable();
            n
        };
        if nodes(&self.pairs[&pk]) != nodes(&self.pairs[&pa]) {
            return Err(RegistryError::SpanMismatch);
        }
        self.touch(pk, now)?;
        self.touch(pa, now)?;
        let sk = self.gate_noise(&self.pairs[&pk].state, 2)?;
        let sa = self.gate_noise(&self.pairs[&pa].state, 4)?;
        let result = dejmps(&sk, &sa);
        self.retire(pa, RetireReason::Ancilla)?;
        let ok = result.state.is_some() && rng.random_bool(result.success_prob.clamp(0.0, 1.0));
        if ok {
            let pair = self.pairs.get_mut(&pk).expect("kept pair is live");
            pair.state = result.state.expect("checked");
            Ok(PurifyOutcome {
                verdict: PurifVerdict::Ok,
                success_prob: result.success_prob,
                retired: [Some(pa), None],
            })
        } else {
            self.retire(pk, RetireReason::PurifFailed)?;
            Ok(PurifyOutcome {
                verdict: PurifVerdict::Fail,
                success_prob: result.success_prob,
                retired: [Some(pa), Some(pk)],
            })
        }
    }

    /// Touches, retires and returns the pair handed to the application.
    pub fn deliver(&mut self, id: PairId, now: SimTime) -> Result<Pair, RegistryError> {
        self.touch(id, now)?;
        self.retire(id, RetireReason::Delivered)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belldiag::make_werner;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn ep(node: usize, seq: u64) -> EndpointId {
        EndpointId { tunnel: 0, node, seq }
    }

    fn link(reg: &mut Registry, link: usize, seq: u64, now: SimTime) -> PairId {
        let banks = Bank::of_link(link);
        reg.reserve(banks).unwrap();
        reg.create([(ep(link, seq), banks[0]), (ep(link + 1, seq), banks[1])], now).unwrap()
    }

    #[test]
    fn fresh_pairs_carry_link_noise() {
        let mut reg = Registry::new(NoiseParams::new(0.01334, None, 0.0).unwrap(), 4);
        let id = link(&mut reg, 0, 0, 0.0);
        assert!((reg.get(id).unwrap().state.fidelity() - 0.980_123).abs() < 1e-6);
    }

    #[test]
    fn touch_is_idempotent_at_fixed_time() {
        let mut reg = Registry::new(NoiseParams::new(0.0, Some(1e-3), 0.0).unwrap(), 4);
        let id = link(&mut reg, 0, 0, 0.0);
        reg.touch(id, 5e-4).unwrap();
        let once = reg.get(id).unwrap().state;
        reg.touch(id, 5e-4).unwrap();
        assert_eq!(reg.get(id).unwrap().state, once);
    }

    #[test]
    fn coherence_time_calibration() {
        let tc = 2e-3;
        let mut reg = Registry::new(NoiseParams::new(0.0, Some(tc), 0.0).unwrap(), 4);
        let id = link(&mut reg, 0, 0, 0.0);
        // Only one side elapsed: move the other qubit's clock forward first.
        reg.pairs.get_mut(&id).unwrap().qubits[1].last_touched = tc;
        reg.touch(id, tc).unwrap();
        assert!((reg.get(id).unwrap().state.fidelity() - 0.95).abs() < 1e-12);

        let both = link(&mut reg, 0, 1, 0.0);
        reg.touch(both, tc).unwrap();
        assert!((reg.get(both).unwrap().state.fidelity() - 0.905).abs() < 1e-12);
    }

    #[test]
    fn capacity_counts_reservations_and_frees_on_retire() {
        let mut reg = Registry::new(NoiseParams::noiseless(), 2);
        let banks = Bank::of_link(0);
        let a = link(&mut reg, 0, 0, 0.0);
        reg.reserve(banks).unwrap();
        assert_eq!(reg.occupancy(banks[0]), 2);
        assert_eq!(reg.reserve(banks), Err(RegistryError::Full(banks[0])));
        reg.retire(a, RetireReason::Cutoff).unwrap();
        assert!(reg.has_room(banks[1]));
        assert_eq!(reg.retired().cutoff, 1);
        assert!(reg.create([(ep(0, 9), banks[0]), (ep(5, 9), Bank::of_link(4)[0])], 0.0).is_err());
    }

    #[test]
    fn swap_joins_outer_qubits() {
        let mut reg = Registry::new(NoiseParams::noiseless(), 4);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        link(&mut reg, 0, 0, 0.0);
        link(&mut reg, 1, 1, 1e-4);
        assert_eq!(reg.swap(ep(0, 0), ep(2, 1), 2e-4, &mut rng), Err(RegistryError::NotColocated(ep(0, 0), ep(2, 1))));
        assert!(matches!(reg.swap(ep(0, 0), ep(1, 0), 2e-4, &mut rng), Err(RegistryError::SamePair(..))));

        let out = reg.swap(ep(1, 0), ep(1, 1), 2e-4, &mut rng).unwrap();
        assert_eq!(reg.partner(ep(0, 0)), Some(ep(2, 1)));
        assert_eq!(reg.pair_of(ep(1, 0)), None);
        let pair = reg.get(out.pair).unwrap();
        assert_eq!(pair.born(), 0.0);
        assert_eq!(pair.state, BellCoeffs::PHI_PLUS);
        assert_eq!(reg.occupancy(Bank { node: 1, side: Direction::Upstream }), 0);
        assert_eq!(reg.occupancy(Bank { node: 2, side: Direction::Downstream }), 1);
        assert_eq!(reg.retired().swapped, 2);
    }

    #[test]
    fn swap_outcomes_are_uniform() {
        let mut reg = Registry::new(NoiseParams::noiseless(), 1 << 20);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut counts = [0u64; 4];
        let n = 40_000;
        for i in 0..n {
            let left = [Bank { node: 0, side: Direction::Upstream }, Bank { node: 1, side: Direction::Downstream }];
            let right = [Bank { node: 1, side: Direction::Upstream }, Bank { node: 2, side: Direction::Downstream }];
            reg.reserve(left).unwrap();
            reg.reserve(right).unwrap();
            reg.create([(ep(0, i), left[0]), (ep(1, 2 * i), left[1])], 0.0).unwrap();
            reg.create([(ep(1, 2 * i + 1), right[0]), (ep(2, i), right[1])], 0.0).unwrap();
            let out = reg.swap(ep(1, 2 * i), ep(1, 2 * i + 1), 0.0, &mut rng).unwrap();
            counts[out.outcome.index()] += 1;
            let pair = reg.get(out.pair).unwrap();
            assert_eq!(pair.frame, out.outcome);
            assert_eq!(reg.partner(ep(0, i)), Some(ep(2, i)));
            reg.retire(out.pair, RetireReason::Delivered).unwrap();
        }
        let expected = n as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99.9th percentile of chi-squared with 3 degrees of freedom.
        assert!(chi2 < 16.27, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn purification_success_frequency() {
        let mut reg = Registry::new(NoiseParams::noiseless(), 1 << 20);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let w = make_werner(0.8).unwrap();
        let expected = dejmps(&w, &w).success_prob;
        let n = 20_000u64;
        let mut ok = 0u64;
        for i in 0..n {
            let banks = Bank::of_link(0);
            for j in 0..2 {
                reg.reserve(banks).unwrap();
                let id = reg.create([(ep(0, 2 * i + j), banks[0]), (ep(1, 2 * i + j), banks[1])], 0.0).unwrap();
                reg.pairs.get_mut(&id).unwrap().state = w;
            }
            let out = reg.purify(ep(1, 2 * i), ep(1, 2 * i + 1), 0.0, &mut rng).unwrap();
            assert!((out.success_prob - expected).abs() < 1e-15);
            if out.verdict == PurifVerdict::Ok {
                ok += 1;
                reg.retire(reg.pair_of(ep(0, 2 * i)).unwrap(), RetireReason::Delivered).unwrap();
            }
        }
        let sigma = (n as f64 * expected * (1.0 - expected)).sqrt();
        assert!((ok as f64 - n as f64 * expected).abs() < 3.0 * sigma, "ok = {ok}, p = {expected}");
        assert_eq!(reg.live(), 0);
        let r = reg.retired();
        assert_eq!(r.ancilla, n);
        assert_eq!(r.purif_failed + r.delivered, n);
    }

    #[test]
    fn purification_requires_matching_span() {
        let mut reg = Registry::new(NoiseParams::noiseless(), 4);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        link(&mut reg, 0, 0, 0.0);
        link(&mut reg, 1, 1, 0.0);
        assert_eq!(reg.purify(ep(1, 0), ep(1, 1), 0.0, &mut rng), Err(RegistryError::SpanMismatch));
    }
}
