// SPDX-License-Identifier: Apache-2.0

use serde::Serialize;

use crate::nodes::NodeId;

/// Fault tolerance of an `n`-authority pBFT group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct QuorumRule {
    pub n: usize,
    /// Maximum number of faulty authorities tolerated.
    pub f: usize,
    /// Distinct matching votes needed to advance a phase.
    pub quorum: usize,
}

impl QuorumRule {
    /// `f + 1`: enough matching replies that at least one is honest.
    pub fn weak(&self) -> usize {
        self.f + 1
    }
}

/// `f = floor((n - 1) / 3)`, `quorum = 2f + 1`.
pub fn quorum_params(n: usize) -> QuorumRule {
    assert!(n >= 1, "quorum needs at least one authority");
    let f = (n - 1) / 3;
    QuorumRule {
        n,
        f,
        quorum: 2 * f + 1,
    }
}

/// `authorities[view mod n]`.
pub fn primary_of(view: u64, authorities: &[NodeId]) -> NodeId {
    assert!(!authorities.is_empty(), "no authorities");
    authorities[(view % authorities.len() as u64) as usize]
}
