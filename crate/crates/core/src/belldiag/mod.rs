//! Bell-diagonal two-qubit states and the channels that act on them.
//!
//! A state is a probability vector over the four Bell states, indexed by the
//! Pauli label `(x, z)` such that the state equals `X^x Z^z ⊗ I` applied to
//! `|Φ+⟩`. The index of a label is `x + 2z`, which makes every label
//! composition a plain XOR of indices:
//!
//! | index | label  | state |
//! |-------|--------|-------|
//! | 0     | (0, 0) | Φ+    |
//! | 1     | (1, 0) | Ψ+    |
//! | 2     | (0, 1) | Φ−    |
//! | 3     | (1, 1) | Ψ−    |
//!
//! Every map here is closed on Bell-diagonal states. The [`oracle`] module
//! recomputes the same maps from explicit density matrices.

pub mod oracle;

use std::fmt;
use std::ops::{BitXor, BitXorAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sum-to-one tolerance for a valid probability vector.
pub const PROB_TOLERANCE: f64 = 1e-12;

/// Dephasing probability reached after one coherence time.
pub const COHERENCE_DEPHASING: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BellError {
    #[error("fidelity {0} is outside [0, 1]")]
    FidelityOutOfRange(f64),
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("elapsed time {0} s is negative")]
    NegativeInterval(f64),
    #[error("coherence time {0} s must be positive")]
    NonPositiveCoherenceTime(f64),
    #[error("rate {0} /s is negative")]
    NegativeRate(f64),
    #[error("coefficients {0:?} are not a probability vector")]
    InvalidCoefficients([f64; 4]),
}

/// Index of the Bell state `Φ+`.
pub const PHI_PLUS: usize = 0;
/// Index of the Bell state `Ψ+`.
pub const PSI_PLUS: usize = 1;
/// Index of the Bell state `Φ−`.
pub const PHI_MINUS: usize = 2;
/// Index of the Bell state `Ψ−`.
pub const PSI_MINUS: usize = 3;

/// Bell-diagonal coefficients `[Φ+, Ψ+, Φ−, Ψ−]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellCoeffs([f64; 4]);

impl BellCoeffs {
    pub const PHI_PLUS: BellCoeffs = BellCoeffs([1.0, 0.0, 0.0, 0.0]);
    pub const MAXIMALLY_MIXED: BellCoeffs = BellCoeffs([0.25; 4]);

    /// Checks the probability-vector invariant.
    pub fn new(p: [f64; 4]) -> Result<Self, BellError> {
        let in_range = p.iter().all(|&v| (-PROB_TOLERANCE..=1.0 + PROB_TOLERANCE).contains(&v));
        let sum: f64 = p.iter().sum();
        if !in_range || (sum - 1.0).abs() > PROB_TOLERANCE {
            return Err(BellError::InvalidCoefficients(p));
        }
        Ok(BellCoeffs(p))
    }

    pub fn coeffs(&self) -> [f64; 4] {
        self.0
    }

    pub fn get(&self, label: PauliFrame) -> f64 {
        self.0[label.index()]
    }

    /// Overlap with `Φ+`.
    pub fn fidelity(&self) -> f64 {
        self.0[PHI_PLUS]
    }

    pub fn is_valid(&self) -> bool {
        let sum: f64 = self.0.iter().sum();
        self.0.iter().all(|&v| (-PROB_TOLERANCE..=1.0 + PROB_TOLERANCE).contains(&v))
            && (sum - 1.0).abs() <= PROB_TOLERANCE
    }

    /// Largest componentwise distance to `other`.
    pub fn max_abs_diff(&self, other: &BellCoeffs) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl fmt::Display for BellCoeffs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "[Φ+ {a:.6}, Ψ+ {b:.6}, Φ− {c:.6}, Ψ− {d:.6}]")
    }
}

/// Two-bit Pauli correction `X^x Z^z`, composed by XOR.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PauliFrame {
    pub x: bool,
    pub z: bool,
}

impl PauliFrame {
    pub const IDENTITY: PauliFrame = PauliFrame { x: false, z: false };

    pub fn new(x: bool, z: bool) -> Self {
        PauliFrame { x, z }
    }

    pub fn from_index(index: usize) -> Self {
        PauliFrame { x: index & 1 == 1, z: index & 2 == 2 }
    }

    pub fn index(self) -> usize {
        usize::from(self.x) | (usize::from(self.z) << 1)
    }
}

impl BitXor for PauliFrame {
    type Output = PauliFrame;

    fn bitxor(self, rhs: PauliFrame) -> PauliFrame {
        PauliFrame { x: self.x ^ rhs.x, z: self.z ^ rhs.z }
    }
}

impl BitXorAssign for PauliFrame {
    fn bitxor_assign(&mut self, rhs: PauliFrame) {
        *self = *self ^ rhs;
    }
}

/// A tracked pair: its corrected state and the Pauli frame accumulated by
/// the swaps that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramedPair {
    pub state: BellCoeffs,
    pub frame: PauliFrame,
}

impl FramedPair {
    pub fn new(state: BellCoeffs) -> Self {
        FramedPair { state, frame: PauliFrame::IDENTITY }
    }
}

/// Noise model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Depolarization applied to each side of a freshly generated link.
    pub p0_depol: f64,
    /// Memory dephasing rate in 1/s.
    pub dephase_rate: f64,
    /// Coherence time in seconds; `None` means the memory never dephases.
    pub coherence_time: Option<f64>,
    /// Depolarization applied before each gate and measurement.
    pub gate_depol: f64,
}

impl NoiseParams {
    pub fn new(p0_depol: f64, coherence_time: Option<f64>, gate_depol: f64) -> Result<Self, BellError> {
        check_probability(p0_depol)?;
        check_probability(gate_depol)?;
        let dephase_rate = match coherence_time {
            Some(tc) => rate_from_tc(tc)?,
            None => 0.0,
        };
        Ok(NoiseParams { p0_depol, dephase_rate, coherence_time, gate_depol })
    }

    pub fn noiseless() -> Self {
        NoiseParams { p0_depol: 0.0, dephase_rate: 0.0, coherence_time: None, gate_depol: 0.0 }
    }
}

fn check_probability(p: f64) -> Result<(), BellError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(BellError::ProbabilityOutOfRange(p))
    }
}

/// Werner state: `fidelity` on `Φ+`, the rest spread evenly.
pub fn make_werner(fidelity: f64) -> Result<BellCoeffs, BellError> {
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(BellError::FidelityOutOfRange(fidelity));
    }
    let rest = (1.0 - fidelity) / 3.0;
    Ok(BellCoeffs([fidelity, rest, rest, rest]))
}

/// Single-qubit depolarization on either half: with probability `p` the
/// qubit is replaced by the maximally mixed state.
pub fn depolarize_one_side(s: &BellCoeffs, p: f64) -> Result<BellCoeffs, BellError> {
    check_probability(p)?;
    Ok(BellCoeffs(s.0.map(|v| (1.0 - p) * v + p / 4.0)))
}

/// Probability that a qubit has picked up a `Z` after `dt` seconds.
pub fn dephasing_probability(dt: f64, rate: f64) -> f64 {
    if rate == 0.0 || dt == 0.0 {
        return 0.0;
    }
    -(-rate * dt).exp_m1()
}

/// Memory dephasing of one qubit for a single storage interval.
pub fn dephase(s: &BellCoeffs, dt: f64, rate: f64) -> Result<BellCoeffs, BellError> {
    if dt < 0.0 {
        return Err(BellError::NegativeInterval(dt));
    }
    if rate < 0.0 {
        return Err(BellError::NegativeRate(rate));
    }
    Ok(z_mix(s, dephasing_probability(dt, rate)))
}

/// With probability `q` apply `Z` to one half: mixes labels `(x, z)` and `(x, z⊕1)`.
pub(crate) fn z_mix(s: &BellCoeffs, q: f64) -> BellCoeffs {
    let p = s.0;
    BellCoeffs(std::array::from_fn(|i| (1.0 - q) * p[i] + q * p[i ^ 2]))
}

/// Dephasing rate whose probability reaches 5% after `tc` seconds.
pub fn rate_from_tc(tc: f64) -> Result<f64, BellError> {
    if tc.is_nan() || tc <= 0.0 {
        return Err(BellError::NonPositiveCoherenceTime(tc));
    }
    Ok(-(1.0 - COHERENCE_DEPHASING).ln() / tc)
}

/// Klein-group convolution `p'(u) = Σ_{v⊕w=u} a(v)·b(w)`.
pub fn convolve(a: &BellCoeffs, b: &BellCoeffs) -> BellCoeffs {
    let mut out = [0.0; 4];
    for (v, av) in a.0.iter().enumerate() {
        for (w, bw) in b.0.iter().enumerate() {
            out[v ^ w] += av * bw;
        }
    }
    BellCoeffs(out)
}

/// Entanglement swap of `a` and `b` after the Bell measurement reported
/// `outcome`. The returned state is the corrected one, so it does not depend
/// on the outcome; the returned frame records which correction applies.
pub fn swap_compose(a: &FramedPair, b: &FramedPair, outcome: PauliFrame) -> FramedPair {
    FramedPair { state: convolve(&a.state, &b.state), frame: a.frame ^ b.frame ^ outcome }
}

/// Outcome of one DEJMPS round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Purified {
    pub success_prob: f64,
    /// Kept-pair state conditioned on success. `None` when the round can never
    /// succeed.
    pub state: Option<BellCoeffs>,
}

/// DEJMPS post-selection map.
///
/// The local `∓π/2` X-rotations exchange `Φ−` and `Ψ−` on both pairs; the
/// bilateral CNOT then keeps the round when the two pairs agree on their X
/// bit, and the kept pair's Z bit becomes the XOR of the two Z bits.
pub fn dejmps(kept: &BellCoeffs, ancilla: &BellCoeffs) -> Purified {
    let rotate = |p: [f64; 4]| [p[0], p[1], p[3], p[2]];
    let a = rotate(kept.0);
    let b = rotate(ancilla.0);
    let mut out = [0.0; 4];
    for x in 0..2 {
        for z1 in 0..2 {
            for z2 in 0..2 {
                out[x | ((z1 ^ z2) << 1)] += a[x | (z1 << 1)] * b[x | (z2 << 1)];
            }
        }
    }
    let success_prob: f64 = out.iter().sum();
    if success_prob <= 0.0 {
        return Purified { success_prob: 0.0, state: None };
    }
    Purified { success_prob, state: Some(BellCoeffs(out.map(|v| v / success_prob))) }
}
