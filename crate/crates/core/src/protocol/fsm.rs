//! Endpoint lifecycle.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EndpointState {
    Wait,
    Purif,
    Pending,
    Release,
    Eligible,
}

/// One observable lifecycle step of an endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    /// The link layer handed over a fresh qubit; it always enters WAIT.
    Enter,
    Move {
        from: EndpointState,
        to: EndpointState,
    },
    /// An ELIGIBLE end-node qubit was handed to the application.
    Deliver,
    /// A RELEASE qubit's memory slot was freed.
    Free,
}

/// Allowed state-to-state moves.
///
/// WAIT → RELEASE covers a higher-rank holder whose qubit is consumed as an
/// ancilla or lost in a failed round it was solicited for, and qubits
/// discarded by the cutoff timer before any update arrived.
pub fn is_fsm_edge(from: EndpointState, to: EndpointState) -> bool {
    use EndpointState::*;
    matches!(
        (from, to),
        (Wait, Purif)
            | (Wait, Release)
            | (Purif, Pending)
            | (Purif, Release)
            | (Purif, Eligible)
            | (Pending, Purif)
            | (Pending, Release)
            | (Eligible, Release)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use EndpointState::*;

    #[test]
    fn edge_table() {
        let all = [Wait, Purif, Pending, Release, Eligible];
        let allowed: Vec<_> =
            all.iter().flat_map(|&a| all.iter().map(move |&b| (a, b))).filter(|&(a, b)| is_fsm_edge(a, b)).collect();
        assert_eq!(allowed.len(), 8);
        assert!(!is_fsm_edge(Release, Wait));
        assert!(!is_fsm_edge(Eligible, Purif));
        assert!(!is_fsm_edge(Wait, Eligible));
        assert!(!is_fsm_edge(Pending, Eligible));
        for s in all {
            assert!(!is_fsm_edge(s, s));
        }
    }
}
