// SPDX-License-Identifier: Apache-2.0

//! Byzantine behaviours: digest tampering (active) and message dropping
//! (passive). Honest nodes pass through untouched.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Block, Digest};
use crate::message::{CommittedBlock, Message, PbftMessage, PreparedCert};
use crate::nodes::{ByzantineType, NodeId};
use crate::rng::{Purpose, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    /// Drop probability for every passive node.
    pub drop_prob: f64,
    /// Per-node drop probability overrides.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub drop_prob_overrides: BTreeMap<NodeId, f64>,
}

impl Default for FaultConfig {
    fn default() -> Self {
        FaultConfig {
            drop_prob: 0.4,
            drop_prob_overrides: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("drop probability {0} outside [0, 1]")]
pub struct BadProbability(pub f64);

impl FaultConfig {
    pub fn validate(&self) -> Result<(), BadProbability> {
        std::iter::once(self.drop_prob)
            .chain(self.drop_prob_overrides.values().copied())
            .try_for_each(|p| {
                if (0.0..=1.0).contains(&p) {
                    Ok(())
                } else {
                    Err(BadProbability(p))
                }
            })
    }

    pub fn drop_prob_for(&self, node: NodeId) -> f64 {
        self.drop_prob_overrides
            .get(&node)
            .copied()
            .unwrap_or(self.drop_prob)
    }
}

fn flip(d: Digest) -> Digest {
    Digest(!d.0)
}

fn flip_block(block: &Arc<Block>) -> Arc<Block> {
    let mut b = Block::clone(block);
    b.digest = flip(b.digest);
    Arc::new(b)
}

/// Returns a copy of `msg` whose carried digest is bitwise-inverted, so no
/// honest verifier accepts it. Messages without a digest are returned as is.
pub fn corrupt(msg: &Message) -> Message {
    match msg {
        Message::Tx(_) => msg.clone(),
        Message::Block(b) => Message::Block(flip_block(b)),
        Message::Pbft(m) => Message::Pbft(match m {
            PbftMessage::PrePrepare {
                view,
                height,
                digest,
                block,
            } => PbftMessage::PrePrepare {
                view: *view,
                height: *height,
                digest: flip(*digest),
                block: block.clone(),
            },
            PbftMessage::Prepare {
                view,
                height,
                digest,
            } => PbftMessage::Prepare {
                view: *view,
                height: *height,
                digest: flip(*digest),
            },
            PbftMessage::Commit {
                view,
                height,
                digest,
            } => PbftMessage::Commit {
                view: *view,
                height: *height,
                digest: flip(*digest),
            },
            PbftMessage::ViewChange {
                new_view,
                next_height,
                prepared,
            } => PbftMessage::ViewChange {
                new_view: *new_view,
                next_height: *next_height,
                prepared: prepared.as_ref().map(|c| PreparedCert {
                    digest: flip(c.digest),
                    ..c.clone()
                }),
            },
            PbftMessage::BlockAnnounce {
                height,
                digest,
                block,
            } => PbftMessage::BlockAnnounce {
                height: *height,
                digest: flip(*digest),
                block: block.clone(),
            },
            PbftMessage::SyncResponse { blocks } => PbftMessage::SyncResponse {
                blocks: blocks
                    .iter()
                    .map(|c| CommittedBlock {
                        block: flip_block(&c.block),
                        commits: c.commits.clone(),
                    })
                    .collect(),
            },
            other @ (PbftMessage::NewView { .. } | PbftMessage::SyncRequest { .. }) => {
                other.clone()
            }
        }),
    }
}

/// Per-node Byzantine behaviour with its own drop stream.
pub struct FaultModel {
    seed: u64,
    config: FaultConfig,
    types: BTreeMap<NodeId, ByzantineType>,
    drop_streams: BTreeMap<NodeId, RngStream>,
    enabled: bool,
}

impl FaultModel {
    pub fn new(
        seed: u64,
        config: FaultConfig,
        types: impl IntoIterator<Item = (NodeId, ByzantineType)>,
    ) -> Self {
        FaultModel {
            seed,
            config,
            types: types.into_iter().collect(),
            drop_streams: BTreeMap::new(),
            enabled: true,
        }
    }

    /// A model under which every node behaves honestly.
    pub fn disabled() -> Self {
        FaultModel {
            seed: 0,
            config: FaultConfig::default(),
            types: BTreeMap::new(),
            drop_streams: BTreeMap::new(),
            enabled: false,
        }
    }

    pub fn type_of(&self, node: NodeId) -> ByzantineType {
        if !self.enabled {
            return ByzantineType::Honest;
        }
        self.types.get(&node).copied().unwrap_or_default()
    }

    /// Passive nodes drop each outbound message independently with their
    /// drop probability; everyone else never drops.
    pub fn should_drop(&mut self, node: NodeId) -> bool {
        if self.type_of(node) != ByzantineType::Passive {
            return false;
        }
        let p = self.config.drop_prob_for(node);
        let seed = self.seed;
        let stream = self
            .drop_streams
            .entry(node)
            .or_insert_with(|| RngStream::new(seed, node, Purpose::Drop));
        stream.unit() < p
    }

    /// Applies the sender's tampering to an outbound message.
    pub fn outbound(&self, sender: NodeId, msg: &Message) -> Option<Message> {
        (self.type_of(sender) == ByzantineType::Active && msg.kind().is_consensus())
            .then(|| corrupt(msg))
    }
}
