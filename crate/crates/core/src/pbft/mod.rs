// SPDX-License-Identifier: Apache-2.0

//! Practical Byzantine fault tolerance: normal-case three-phase commit,
//! timeouts with exponential backoff, view changes and follower finality.

mod follower;
mod quorum;
mod replica;

pub use follower::Follower;
pub use quorum::{primary_of, quorum_params, QuorumRule};
pub use replica::{Replica, ReplicaConfig, ViewChangeState, SYNC_BATCH};
