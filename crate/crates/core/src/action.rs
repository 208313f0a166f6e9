// SPDX-License-Identifier: Apache-2.0

//! Side effects requested by protocol state machines. The state machines
//! never touch the clock or the network directly; the world executes these.

use std::sync::Arc;

use crate::ledger::Block;
use crate::message::Message;
use crate::nodes::NodeId;

/// Recipients of a broadcast. The sender is always excluded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Audience {
    Authorities,
    Followers,
    AllNodes,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Send { to: NodeId, msg: Message },
    Broadcast { audience: Audience, msg: Message },
    /// The node appended `block` to its chain.
    Appended { block: Arc<Block> },
    /// Replaces the node's pending timeout.
    ArmTimer { after: u64 },
    CancelTimer,
    /// Replaces the node's pending proposal.
    ScheduleProposal { view: u64, height: u64, after: u64 },
    ViewAdopted { old: u64, new: u64 },
}
