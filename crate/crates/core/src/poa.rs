// SPDX-License-Identifier: Apache-2.0

//! Simplified proof of authority: one leader per height broadcasts its
//! block and everyone else accepts it without further communication. Proof
//! of elapsed time keeps the same machinery and only changes who leads.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::action::{Action, Audience};
use crate::engine::SimTime;
use crate::ledger::{Block, Chain, Transaction};
use crate::message::Message;
use crate::nodes::NodeId;
use crate::rng::RngStream;
use crate::workload::TxPool;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundRobinSchedule {
    pub authorities: Arc<[NodeId]>,
    pub block_interval_ms: u64,
}

/// `authorities[(h - 1) mod n]`.
pub fn leader_for_height(h: u64, schedule: &RoundRobinSchedule) -> NodeId {
    assert!(h >= 1, "genesis has no leader");
    assert!(!schedule.authorities.is_empty(), "no authorities");
    let n = schedule.authorities.len() as u64;
    schedule.authorities[((h - 1) % n) as usize]
}

/// One authority's lottery ticket.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PoetDraw {
    pub node: NodeId,
    /// Raw exponential wait in milliseconds.
    pub wait: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoetElection {
    pub leader: NodeId,
    /// The winning draw rounded to whole milliseconds, at least 1.
    pub wait_ms: u64,
    pub draws: Vec<PoetDraw>,
}

/// Each authority draws `Exp(rate)` from its own stream; the smallest draw
/// wins, ties going to the lowest node id.
pub fn poet_elect(
    authorities: &[NodeId],
    rate: f64,
    streams: &mut BTreeMap<NodeId, RngStream>,
) -> PoetElection {
    assert!(!authorities.is_empty(), "no authorities");
    let exp = Exp::new(rate).expect("poet rate must be positive and finite");
    let mut sorted = authorities.to_vec();
    sorted.sort();
    let draws: Vec<PoetDraw> = sorted
        .iter()
        .map(|&node| {
            let stream = streams
                .get_mut(&node)
                .unwrap_or_else(|| panic!("no lottery stream for {node}"));
            PoetDraw {
                node,
                wait: exp.sample(stream.inner()),
            }
        })
        .collect();
    let best = draws
        .iter()
        .fold(None::<&PoetDraw>, |best, d| match best {
            Some(b) if b.wait <= d.wait => Some(b),
            _ => Some(d),
        })
        .expect("at least one draw");
    PoetElection {
        leader: best.node,
        wait_ms: crate::dist::round_ms(best.wait).max(1),
        draws,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LeaderSelection {
    RoundRobin(RoundRobinSchedule),
    /// Leaders are chosen externally by [`poet_elect`].
    Lottery,
}

pub struct PoaNode {
    id: NodeId,
    authority: bool,
    selection: LeaderSelection,
    block_capacity: usize,
    block_interval_ms: u64,
    chain: Chain,
    pool: TxPool,
    /// Blocks that arrived before their parent.
    pending: BTreeMap<u64, Vec<Arc<Block>>>,
}

impl PoaNode {
    pub fn new(
        id: NodeId,
        authority: bool,
        selection: LeaderSelection,
        block_capacity: usize,
        block_interval_ms: u64,
    ) -> Self {
        PoaNode {
            id,
            authority,
            selection,
            block_capacity,
            block_interval_ms,
            chain: Chain::new(id),
            pool: TxPool::new(),
            pending: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn pool(&self) -> &TxPool {
        &self.pool
    }

    pub fn add_transaction(&mut self, tx: Arc<Transaction>) -> bool {
        self.pool.insert(tx)
    }

    fn leads(&self, height: u64) -> bool {
        match &self.selection {
            LeaderSelection::RoundRobin(s) => leader_for_height(height, s) == self.id,
            LeaderSelection::Lottery => self.authority,
        }
    }

    /// Day kick: the round-robin leader of the next height schedules its
    /// proposal.
    pub fn start(&self) -> Vec<Action> {
        let next = self.chain.height() + 1;
        match &self.selection {
            LeaderSelection::RoundRobin(_) if self.leads(next) => vec![Action::ScheduleProposal {
                view: 0,
                height: next,
                after: self.block_interval_ms,
            }],
            _ => Vec::new(),
        }
    }

    /// Builds, appends and broadcasts the block for `height`. A no-op if this
    /// node does not lead `height` or is not at `height - 1`.
    pub fn propose(&mut self, now: SimTime, height: u64) -> Vec<Action> {
        if height != self.chain.height() + 1 || !self.leads(height) {
            return Vec::new();
        }
        let block = Arc::new(Block::new(
            height,
            0,
            self.id,
            self.chain.tip().digest,
            self.pool.peek_batch(self.block_capacity),
            now,
        ));
        let mut out = vec![Action::Broadcast {
            audience: Audience::AllNodes,
            msg: Message::Block(block.clone()),
        }];
        self.apply(block, &mut out);
        out
    }

    /// Accepts a block after its validation delay has elapsed.
    pub fn on_block(&mut self, block: &Arc<Block>) -> Vec<Action> {
        let mut out = Vec::new();
        if block.height <= self.chain.height() || !block.verifies() {
            return out;
        }
        self.pending
            .entry(block.height)
            .or_default()
            .push(block.clone());
        loop {
            let next = self.chain.height() + 1;
            let tip = self.chain.tip().digest;
            let found = self
                .pending
                .get(&next)
                .and_then(|c| c.iter().find(|b| b.parent_digest == tip).cloned());
            match found {
                Some(b) => {
                    self.pending.remove(&next);
                    self.apply(b, &mut out);
                }
                None => break,
            }
        }
        out
    }

    fn apply(&mut self, block: Arc<Block>, out: &mut Vec<Action>) {
        self.chain
            .append(block.clone())
            .expect("accepted block extends the tip");
        for tx in &block.txs {
            self.pool.retire(tx);
        }
        out.push(Action::Appended { block });
        let next = self.chain.height() + 1;
        if matches!(self.selection, LeaderSelection::RoundRobin(_)) && self.leads(next) {
            out.push(Action::ScheduleProposal {
                view: 0,
                height: next,
                after: self.block_interval_ms,
            });
        }
    }
}
