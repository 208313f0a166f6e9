// SPDX-License-Identifier: Apache-2.0

//! Protocol messages carried by the network model.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::engine::SimTime;
use crate::ledger::{Block, Digest, Transaction, ValidationKind};
use crate::nodes::NodeId;

/// A block some replica holds as prepared, reported during view changes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreparedCert {
    pub view: u64,
    pub height: u64,
    pub digest: Digest,
    pub block: Arc<Block>,
}

/// A committed block with the authorities whose commits finalized it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommittedBlock {
    pub block: Arc<Block>,
    /// Empty when the sender itself caught up without a certificate.
    pub commits: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PbftMessage {
    PrePrepare {
        view: u64,
        height: u64,
        digest: Digest,
        block: Arc<Block>,
    },
    Prepare {
        view: u64,
        height: u64,
        digest: Digest,
    },
    Commit {
        view: u64,
        height: u64,
        digest: Digest,
    },
    ViewChange {
        new_view: u64,
        /// Height the voter is trying to commit.
        next_height: u64,
        prepared: Option<PreparedCert>,
    },
    NewView {
        view: u64,
        voters: Vec<NodeId>,
    },
    /// Committed block pushed from an authority to every follower.
    BlockAnnounce {
        height: u64,
        digest: Digest,
        block: Arc<Block>,
    },
    /// Catch-up request from a replica that fell behind.
    SyncRequest { from_height: u64 },
    SyncResponse { blocks: Vec<CommittedBlock> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Tx(Arc<Transaction>),
    /// PoA/PoET block proposal.
    Block(Arc<Block>),
    Pbft(PbftMessage),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Transaction,
    Block,
    PrePrepare,
    Prepare,
    Commit,
    ViewChange,
    NewView,
    BlockAnnounce,
    SyncRequest,
    SyncResponse,
}

impl MessageKind {
    pub const ALL: [MessageKind; 10] = [
        MessageKind::Transaction,
        MessageKind::Block,
        MessageKind::PrePrepare,
        MessageKind::Prepare,
        MessageKind::Commit,
        MessageKind::ViewChange,
        MessageKind::NewView,
        MessageKind::BlockAnnounce,
        MessageKind::SyncRequest,
        MessageKind::SyncResponse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Transaction => "transaction",
            MessageKind::Block => "block",
            MessageKind::PrePrepare => "pre_prepare",
            MessageKind::Prepare => "prepare",
            MessageKind::Commit => "commit",
            MessageKind::ViewChange => "view_change",
            MessageKind::NewView => "new_view",
            MessageKind::BlockAnnounce => "block_announce",
            MessageKind::SyncRequest => "sync_request",
            MessageKind::SyncResponse => "sync_response",
        }
    }

    /// Everything except transaction gossip counts as consensus traffic.
    pub fn is_consensus(self) -> bool {
        self != MessageKind::Transaction
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Tx(_) => MessageKind::Transaction,
            Message::Block(_) => MessageKind::Block,
            Message::Pbft(m) => match m {
                PbftMessage::PrePrepare { .. } => MessageKind::PrePrepare,
                PbftMessage::Prepare { .. } => MessageKind::Prepare,
                PbftMessage::Commit { .. } => MessageKind::Commit,
                PbftMessage::ViewChange { .. } => MessageKind::ViewChange,
                PbftMessage::NewView { .. } => MessageKind::NewView,
                PbftMessage::BlockAnnounce { .. } => MessageKind::BlockAnnounce,
                PbftMessage::SyncRequest { .. } => MessageKind::SyncRequest,
                PbftMessage::SyncResponse { .. } => MessageKind::SyncResponse,
            },
        }
    }

    pub fn validation_kind(&self) -> ValidationKind {
        match self.kind() {
            MessageKind::Transaction => ValidationKind::Transaction,
            MessageKind::Block | MessageKind::BlockAnnounce | MessageKind::SyncResponse => {
                ValidationKind::Block
            }
            _ => ValidationKind::ConsensusMessage,
        }
    }

    /// Object id used in propagation records: tx id for transactions, block
    /// height for block-carrying messages.
    pub fn propagation_object(&self) -> Option<(PropagationKind, u64)> {
        match self {
            Message::Tx(tx) => Some((PropagationKind::Transaction, tx.id.0)),
            Message::Block(b) => Some((PropagationKind::Block, b.height)),
            Message::Pbft(PbftMessage::PrePrepare { block, .. })
            | Message::Pbft(PbftMessage::BlockAnnounce { block, .. }) => {
                Some((PropagationKind::Block, block.height))
            }
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationKind {
    Transaction,
    Block,
}

/// A message in flight.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub msg_id: u64,
    pub sender: NodeId,
    pub recipient: NodeId,
    pub sent_at: SimTime,
    pub body: Message,
}
