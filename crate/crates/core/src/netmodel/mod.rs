//! Physical layer: pair registry, link generation and classical channels.

pub mod channel;
pub mod linkgen;
pub mod registry;

pub use channel::Channel;
pub use linkgen::{LinkModel, LinkStatus};
pub use registry::{Bank, Pair, PairId, Qubit, Registry, RegistryError, RetireCounts, RetireReason};
