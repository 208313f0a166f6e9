// SPDX-License-Identifier: Apache-2.0

//! Non-authority nodes: they take no part in the three phases and append a
//! block once enough authorities announce the same digest.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::action::Action;
use crate::ledger::{Block, Chain, Digest};
use crate::message::PbftMessage;
use crate::nodes::NodeId;

use super::quorum::{quorum_params, QuorumRule};

#[derive(Debug, Default)]
struct Tally {
    block: Option<Arc<Block>>,
    senders: BTreeSet<NodeId>,
}

pub struct Follower {
    id: NodeId,
    authorities: BTreeSet<NodeId>,
    rule: QuorumRule,
    chain: Chain,
    tallies: BTreeMap<(u64, Digest), Tally>,
}

impl Follower {
    pub fn new(id: NodeId, authorities: &[NodeId]) -> Self {
        Follower {
            id,
            authorities: authorities.iter().copied().collect(),
            rule: quorum_params(authorities.len()),
            chain: Chain::new(id),
            tallies: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    /// Distinct authorities that announced `digest` at `height`.
    pub fn tally(&self, height: u64, digest: Digest) -> usize {
        self.tallies
            .get(&(height, digest))
            .map_or(0, |t| t.senders.len())
    }

    pub fn on_message(&mut self, from: NodeId, msg: &PbftMessage) -> Vec<Action> {
        let PbftMessage::BlockAnnounce {
            height,
            digest,
            block,
        } = msg
        else {
            return Vec::new();
        };
        if !self.authorities.contains(&from) || *height <= self.chain.height() {
            return Vec::new();
        }
        let tally = self.tallies.entry((*height, *digest)).or_default();
        tally.senders.insert(from);
        if tally.block.is_none()
            && block.digest == *digest
            && block.height == *height
            && block.verifies()
        {
            tally.block = Some(block.clone());
        }
        self.advance()
    }

    /// Appends strictly in height order while some digest at the next height
    /// has a quorum of announcements.
    fn advance(&mut self) -> Vec<Action> {
        let mut out = Vec::new();
        loop {
            let next = self.chain.height() + 1;
            let tip = self.chain.tip().digest;
            let ready = self
                .tallies
                .range((next, Digest(0))..=(next, Digest(u64::MAX)))
                .filter(|(_, t)| t.senders.len() >= self.rule.quorum)
                .find_map(|(_, t)| t.block.clone().filter(|b| b.parent_digest == tip));
            let Some(block) = ready else { break };
            self.chain
                .append(block.clone())
                .expect("announced block extends the tip");
            self.tallies.retain(|(h, _), _| *h > next);
            out.push(Action::Appended { block });
        }
        out
    }
}
