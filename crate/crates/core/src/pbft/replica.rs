// SPDX-License-Identifier: Apache-2.0

//! Authority-side pBFT state machine.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::action::{Action, Audience};
use crate::engine::SimTime;
use crate::ledger::{Block, Chain, Digest, Transaction};
use crate::message::{CommittedBlock, Message, PbftMessage, PreparedCert};
use crate::nodes::NodeId;
use crate::workload::TxPool;

use super::quorum::{primary_of, quorum_params, QuorumRule};

/// Upper bound on blocks returned in one catch-up reply.
pub const SYNC_BATCH: u64 = 64;
/// Upper bound on buffered out-of-order messages.
const BUFFER_LIMIT: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReplicaConfig {
    pub block_capacity: usize,
    pub block_interval_ms: u64,
    /// Base view-change timeout; doubled per consecutive failed view.
    pub timeout_ms: u64,
}

/// Votes collected for one proposed view.
#[derive(Clone, Debug, Default)]
pub struct ViewChangeState {
    /// Sender to (voter's next height, verified prepared certificate).
    pub votes: BTreeMap<NodeId, (u64, Option<PreparedCert>)>,
}

type Slot = (u64, u64);
type Vote = (u64, u64, Digest);

pub struct Replica {
    id: NodeId,
    authorities: Arc<[NodeId]>,
    rule: QuorumRule,
    cfg: ReplicaConfig,
    chain: Chain,
    pool: TxPool,
    view: u64,
    /// Highest view this replica voted for. Greater than `view` while a
    /// view change is in progress.
    voted_view: u64,
    next_height: u64,
    failed: u32,
    probed: bool,
    /// Highest height some peer is known to have committed.
    known_ahead: u64,
    accepted: BTreeMap<Slot, Arc<Block>>,
    prepares: BTreeMap<Vote, BTreeSet<NodeId>>,
    commits: BTreeMap<Vote, BTreeSet<NodeId>>,
    commit_sent: BTreeSet<Slot>,
    lock: Option<PreparedCert>,
    view_changes: BTreeMap<u64, ViewChangeState>,
    last_new_view: Option<(u64, Vec<NodeId>)>,
    repropose: Option<PreparedCert>,
    buffer: Vec<(NodeId, PbftMessage)>,
    sync_votes: BTreeMap<(u64, Digest), (Arc<Block>, BTreeSet<NodeId>)>,
    /// Commit senders that finalized each height, where known.
    certs: BTreeMap<u64, Vec<NodeId>>,
}

impl Replica {
    pub fn new(id: NodeId, authorities: Arc<[NodeId]>, cfg: ReplicaConfig) -> Self {
        assert!(authorities.contains(&id), "{id} is not an authority");
        let rule = quorum_params(authorities.len());
        Replica {
            id,
            authorities,
            rule,
            cfg,
            chain: Chain::new(id),
            pool: TxPool::new(),
            view: 0,
            voted_view: 0,
            next_height: 1,
            failed: 0,
            probed: false,
            known_ahead: 0,
            accepted: BTreeMap::new(),
            prepares: BTreeMap::new(),
            commits: BTreeMap::new(),
            commit_sent: BTreeSet::new(),
            lock: None,
            view_changes: BTreeMap::new(),
            last_new_view: None,
            repropose: None,
            buffer: Vec::new(),
            sync_votes: BTreeMap::new(),
            certs: BTreeMap::new(),
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

    pub fn view(&self) -> u64 {
        self.view
    }

    pub fn next_height(&self) -> u64 {
        self.next_height
    }

    pub fn rule(&self) -> QuorumRule {
        self.rule
    }

    pub fn primary(&self) -> NodeId {
        primary_of(self.view, &self.authorities)
    }

    pub fn is_primary(&self) -> bool {
        self.primary() == self.id
    }

    /// Timeout for the current number of consecutive failed views.
    pub fn backoff(&self) -> u64 {
        self.cfg
            .timeout_ms
            .saturating_mul(1u64 << self.failed.min(40))
    }

    fn participating(&self) -> bool {
        self.voted_view == self.view
    }

    pub fn add_transaction(&mut self, tx: Arc<Transaction>) -> bool {
        self.pool.insert(tx)
    }

    /// Starts work on the next height at the beginning of a day.
    pub fn start(&mut self) -> Vec<Action> {
        let mut out = vec![Action::ArmTimer {
            after: self.cfg.block_interval_ms + self.backoff(),
        }];
        if self.is_primary() && self.participating() {
            out.push(Action::ScheduleProposal {
                view: self.view,
                height: self.next_height,
                after: self.cfg.block_interval_ms,
            });
        }
        out
    }

    /// Proposal event. A no-op unless this replica is the primary of `view`
    /// and still working on `height`.
    pub fn on_propose(&mut self, now: SimTime, view: u64, height: u64) -> Vec<Action> {
        let mut out = Vec::new();
        if view == self.view && height == self.next_height {
            self.propose(now, &mut out);
        }
        out
    }

    fn propose(&mut self, now: SimTime, out: &mut Vec<Action>) {
        let slot = (self.view, self.next_height);
        if !self.is_primary() || !self.participating() || self.accepted.contains_key(&slot) {
            return;
        }
        let tip = self.chain.tip().digest;
        let block = match self.repropose.take() {
            Some(cert) if cert.height == self.next_height && cert.block.parent_digest == tip => {
                cert.block
            }
            _ => Arc::new(Block::new(
                self.next_height,
                self.view,
                self.id,
                tip,
                self.pool.peek_batch(self.cfg.block_capacity),
                now,
            )),
        };
        let digest = block.digest;
        self.accepted.insert(slot, block.clone());
        out.push(Action::Broadcast {
            audience: Audience::Authorities,
            msg: Message::Pbft(PbftMessage::PrePrepare {
                view: slot.0,
                height: slot.1,
                digest,
                block,
            }),
        });
        self.check_prepared(now, slot.0, slot.1, digest, out);
    }

    pub fn on_message(&mut self, now: SimTime, from: NodeId, msg: &PbftMessage) -> Vec<Action> {
        let mut out = Vec::new();
        self.dispatch(now, from, msg, &mut out);
        out
    }

    fn dispatch(&mut self, now: SimTime, from: NodeId, msg: &PbftMessage, out: &mut Vec<Action>) {
        if !self.authorities.contains(&from) {
            return;
        }
        match msg {
            PbftMessage::PrePrepare {
                view,
                height,
                digest,
                block,
            } => {
                if self.gate(from, *view, *height, msg) {
                    self.on_pre_prepare(now, from, *view, *height, *digest, block, out);
                }
            }
            PbftMessage::Prepare {
                view,
                height,
                digest,
            } => {
                if self.gate(from, *view, *height, msg) && from != primary_of(*view, &self.authorities)
                {
                    self.prepares
                        .entry((*view, *height, *digest))
                        .or_default()
                        .insert(from);
                    self.check_prepared(now, *view, *height, *digest, out);
                }
            }
            PbftMessage::Commit {
                view,
                height,
                digest,
            } => {
                if self.gate(from, *view, *height, msg) {
                    self.commits
                        .entry((*view, *height, *digest))
                        .or_default()
                        .insert(from);
                    self.check_committed(*view, *height, *digest, now, out);
                }
            }
            PbftMessage::ViewChange {
                new_view,
                next_height,
                prepared,
            } => self.on_view_change(now, from, *new_view, *next_height, prepared.as_ref(), out),
            PbftMessage::NewView { view, voters } => self.on_new_view(now, from, *view, voters, out),
            PbftMessage::SyncRequest { from_height } => self.on_sync_request(from, *from_height, out),
            PbftMessage::SyncResponse { blocks } => self.on_sync_response(now, from, blocks, out),
            PbftMessage::BlockAnnounce { .. } => {}
        }
    }

    /// Common admission for the three normal-case phases. Returns true if
    /// the message is for the current view and height; buffers it if it is
    /// ahead of us.
    fn gate(&mut self, from: NodeId, view: u64, height: u64, msg: &PbftMessage) -> bool {
        if height < self.next_height || view < self.view {
            return false;
        }
        if height > self.next_height {
            // The sender has committed everything below `height`.
            self.known_ahead = self.known_ahead.max(height - 1);
        }
        if height > self.next_height || view > self.view {
            if self.buffer.len() < BUFFER_LIMIT {
                self.buffer.push((from, msg.clone()));
            }
            return false;
        }
        self.participating()
    }

    fn on_pre_prepare(
        &mut self,
        now: SimTime,
        from: NodeId,
        view: u64,
        height: u64,
        digest: Digest,
        block: &Arc<Block>,
        out: &mut Vec<Action>,
    ) {
        if from != primary_of(view, &self.authorities) || self.accepted.contains_key(&(view, height))
        {
            return;
        }
        let valid = digest == block.digest
            && block.height == height
            && block.parent_digest == self.chain.tip().digest
            && block.verifies();
        if !valid {
            return;
        }
        self.accepted.insert((view, height), block.clone());
        out.push(Action::Broadcast {
            audience: Audience::Authorities,
            msg: Message::Pbft(PbftMessage::Prepare {
                view,
                height,
                digest,
            }),
        });
        self.check_prepared(now, view, height, digest, out);
    }

    /// Distinct supporters of `(view, height, digest)` in the prepare phase:
    /// the primary (through its pre-prepare), this replica and every sender
    /// of a matching prepare.
    pub fn prepare_tally(&self, view: u64, height: u64, digest: Digest) -> usize {
        let mut voters: BTreeSet<NodeId> = self
            .prepares
            .get(&(view, height, digest))
            .cloned()
            .unwrap_or_default();
        voters.insert(primary_of(view, &self.authorities));
        voters.insert(self.id);
        voters.len()
    }

    pub fn commit_tally(&self, view: u64, height: u64, digest: Digest) -> usize {
        self.commits
            .get(&(view, height, digest))
            .map_or(0, BTreeSet::len)
    }

    fn holds(&self, view: u64, height: u64, digest: Digest) -> Option<&Arc<Block>> {
        self.accepted
            .get(&(view, height))
            .filter(|b| b.digest == digest)
    }

    fn check_prepared(
        &mut self,
        now: SimTime,
        view: u64,
        height: u64,
        digest: Digest,
        out: &mut Vec<Action>,
    ) {
        if self.commit_sent.contains(&(view, height)) {
            return;
        }
        let Some(block) = self.holds(view, height, digest).cloned() else {
            return;
        };
        if self.prepare_tally(view, height, digest) < self.rule.quorum {
            return;
        }
        self.commit_sent.insert((view, height));
        self.lock = Some(PreparedCert {
            view,
            height,
            digest,
            block,
        });
        out.push(Action::Broadcast {
            audience: Audience::Authorities,
            msg: Message::Pbft(PbftMessage::Commit {
                view,
                height,
                digest,
            }),
        });
        self.commits
            .entry((view, height, digest))
            .or_default()
            .insert(self.id);
        // Commits may have arrived before we prepared.
        self.check_committed(view, height, digest, now, out);
    }

    fn check_committed(
        &mut self,
        view: u64,
        height: u64,
        digest: Digest,
        now: SimTime,
        out: &mut Vec<Action>,
    ) {
        if !self.commit_sent.contains(&(view, height))
            || self.commit_tally(view, height, digest) < self.rule.quorum
        {
            return;
        }
        let Some(block) = self.holds(view, height, digest).cloned() else {
            return;
        };
        let cert = self.commits[&(view, height, digest)].iter().copied().collect();
        self.append(block, cert, now, out);
    }

    fn append(&mut self, block: Arc<Block>, cert: Vec<NodeId>, now: SimTime, out: &mut Vec<Action>) {
        self.chain
            .append(block.clone())
            .expect("committed block extends the tip");
        for tx in &block.txs {
            self.pool.retire(tx);
        }
        if !cert.is_empty() {
            self.certs.insert(block.height, cert);
        }
        self.next_height += 1;
        self.failed = 0;
        self.probed = false;
        self.voted_view = self.view;
        self.lock = None;
        self.repropose = None;
        self.accepted.clear();
        self.prepares.clear();
        self.commits.clear();
        self.commit_sent.clear();
        let next = self.next_height;
        self.sync_votes.retain(|(h, _), _| *h >= next);
        out.push(Action::Appended {
            block: block.clone(),
        });
        out.push(Action::Broadcast {
            audience: Audience::Followers,
            msg: Message::Pbft(PbftMessage::BlockAnnounce {
                height: block.height,
                digest: block.digest,
                block,
            }),
        });
        out.push(Action::ArmTimer {
            after: self.cfg.block_interval_ms + self.backoff(),
        });
        if self.is_primary() {
            out.push(Action::ScheduleProposal {
                view: self.view,
                height: self.next_height,
                after: self.cfg.block_interval_ms,
            });
        }
        self.replay(now, out);
    }

    fn replay(&mut self, now: SimTime, out: &mut Vec<Action>) {
        let pending = std::mem::take(&mut self.buffer);
        for (from, msg) in pending {
            self.dispatch(now, from, &msg, out);
        }
    }

    /// Timer expiry for the current height.
    pub fn on_timeout(&mut self, now: SimTime) -> Vec<Action> {
        let mut out = Vec::new();
        let sync = Action::Broadcast {
            audience: Audience::Authorities,
            msg: Message::Pbft(PbftMessage::SyncRequest {
                from_height: self.next_height,
            }),
        };
        if !self.probed {
            // First expiry at this height: try to catch up before impeaching
            // the leader.
            self.probed = true;
            out.push(sync);
            out.push(Action::ArmTimer {
                after: self.cfg.timeout_ms,
            });
            return out;
        }
        if self.known_ahead >= self.next_height {
            // Fewer than f+1 peers may hold the missing block, so keep asking
            // while voting.
            out.push(sync);
        }
        self.failed += 1;
        let target = self.view.max(self.voted_view) + 1;
        self.vote(now, target, &mut out);
        out
    }

    fn vote(&mut self, now: SimTime, target: u64, out: &mut Vec<Action>) {
        self.voted_view = target;
        let prepared = self
            .lock
            .clone()
            .filter(|c| c.height == self.next_height);
        self.view_changes
            .entry(target)
            .or_default()
            .votes
            .insert(self.id, (self.next_height, prepared.clone()));
        out.push(Action::Broadcast {
            audience: Audience::Authorities,
            msg: Message::Pbft(PbftMessage::ViewChange {
                new_view: target,
                next_height: self.next_height,
                prepared,
            }),
        });
        out.push(Action::ArmTimer {
            after: self.backoff(),
        });
        self.check_view_quorum(now, target, out);
    }

    /// Voters for `view` that are not behind us.
    fn current_votes(&self, view: u64) -> usize {
        self.view_changes.get(&view).map_or(0, |s| {
            s.votes
                .values()
                .filter(|(h, _)| *h >= self.next_height)
                .count()
        })
    }

    fn on_view_change(
        &mut self,
        now: SimTime,
        from: NodeId,
        new_view: u64,
        next_height: u64,
        prepared: Option<&PreparedCert>,
        out: &mut Vec<Action>,
    ) {
        if next_height < self.next_height {
            self.on_sync_request(from, next_height, out);
            return;
        }
        if next_height > self.next_height {
            self.known_ahead = self.known_ahead.max(next_height - 1);
        }
        if new_view <= self.view {
            // A straggler still voting for a view we already run in.
            if let Some((v, voters)) = &self.last_new_view {
                if *v == self.view && self.is_primary() {
                    out.push(Action::Send {
                        to: from,
                        msg: Message::Pbft(PbftMessage::NewView {
                            view: *v,
                            voters: voters.clone(),
                        }),
                    });
                }
            }
            return;
        }
        let cert = prepared
            .filter(|c| c.digest == c.block.digest && c.block.verifies())
            .cloned();
        self.view_changes
            .entry(new_view)
            .or_default()
            .votes
            .insert(from, (next_height, cert));

        // Join a view change once f+1 replicas want to move past us.
        let floor = self.view.max(self.voted_view);
        let mut ahead: BTreeSet<NodeId> = BTreeSet::new();
        let mut lowest = None;
        for (&v, state) in self.view_changes.range(floor + 1..) {
            let before = ahead.len();
            ahead.extend(
                state
                    .votes
                    .iter()
                    .filter(|(_, (h, _))| *h >= self.next_height)
                    .map(|(id, _)| *id),
            );
            if ahead.len() > before && lowest.is_none() {
                lowest = Some(v);
            }
        }
        if ahead.len() >= self.rule.weak() {
            if let Some(v) = lowest {
                self.vote(now, v, out);
            }
        }
        self.check_view_quorum(now, new_view, out);
    }

    fn check_view_quorum(&mut self, now: SimTime, view: u64, out: &mut Vec<Action>) {
        if view > self.view && self.current_votes(view) >= self.rule.quorum {
            self.adopt(now, view, out);
        }
    }

    fn on_new_view(
        &mut self,
        now: SimTime,
        from: NodeId,
        view: u64,
        voters: &[NodeId],
        out: &mut Vec<Action>,
    ) {
        if view <= self.view || from != primary_of(view, &self.authorities) {
            return;
        }
        let distinct: BTreeSet<NodeId> = voters
            .iter()
            .copied()
            .filter(|v| self.authorities.contains(v))
            .collect();
        if distinct.len() >= self.rule.quorum {
            self.adopt(now, view, out);
        }
    }

    fn adopt(&mut self, now: SimTime, view: u64, out: &mut Vec<Action>) {
        let old = self.view;
        self.view = view;
        // An established view supersedes any later view we voted for.
        self.voted_view = view;
        self.accepted.clear();
        self.prepares.clear();
        self.commits.clear();
        self.commit_sent.clear();
        let state = self.view_changes.remove(&view).unwrap_or_default();
        self.view_changes.retain(|v, _| *v > view);
        out.push(Action::ViewAdopted { old, new: view });
        if self.is_primary() && self.participating() {
            let voters: Vec<NodeId> = state.votes.keys().copied().collect();
            self.last_new_view = Some((view, voters.clone()));
            out.push(Action::Broadcast {
                audience: Audience::Authorities,
                msg: Message::Pbft(PbftMessage::NewView { view, voters }),
            });
            let next = self.next_height;
            let own = self.lock.clone();
            self.repropose = state
                .votes
                .into_values()
                .filter_map(|(_, c)| c)
                .chain(own)
                .filter(|c| c.height == next)
                .max_by_key(|c| (c.view, std::cmp::Reverse(c.digest)));
            out.push(Action::ArmTimer {
                after: self.backoff(),
            });
            self.propose(now, out);
        } else {
            out.push(Action::ArmTimer {
                after: self.backoff(),
            });
        }
        self.replay(now, out);
    }

    fn on_sync_request(&mut self, from: NodeId, from_height: u64, out: &mut Vec<Action>) {
        let tip = self.chain.height();
        if from_height == 0 || from_height > tip {
            return;
        }
        let last = tip.min(from_height + SYNC_BATCH - 1);
        let blocks = (from_height..=last)
            .filter_map(|h| {
                self.chain.get(h).map(|b| CommittedBlock {
                    block: b.clone(),
                    commits: self.certs.get(&h).cloned().unwrap_or_default(),
                })
            })
            .collect();
        out.push(Action::Send {
            to: from,
            msg: Message::Pbft(PbftMessage::SyncResponse { blocks }),
        });
    }

    fn on_sync_response(
        &mut self,
        now: SimTime,
        from: NodeId,
        blocks: &[CommittedBlock],
        out: &mut Vec<Action>,
    ) {
        let mut certified = BTreeMap::new();
        for CommittedBlock { block: b, commits } in blocks {
            if b.height < self.next_height || !b.verifies() {
                continue;
            }
            let signers: BTreeSet<NodeId> = commits
                .iter()
                .copied()
                .filter(|c| self.authorities.contains(c))
                .collect();
            if signers.len() >= self.rule.quorum {
                certified.insert(b.height, (b.clone(), commits.clone()));
            }
            self.known_ahead = self.known_ahead.max(b.height);
            self.sync_votes
                .entry((b.height, b.digest))
                .or_insert_with(|| (b.clone(), BTreeSet::new()))
                .1
                .insert(from);
        }
        loop {
            let tip = self.chain.tip().digest;
            let next = self.next_height;
            // A commit certificate is enough on its own; otherwise f+1
            // responders must agree.
            let ready = certified
                .remove(&next)
                .filter(|(b, _)| b.parent_digest == tip)
                .or_else(|| {
                    self.sync_votes
                        .range((next, Digest(0))..=(next, Digest(u64::MAX)))
                        .find(|(_, (b, who))| b.parent_digest == tip && who.len() >= self.rule.weak())
                        .map(|(_, (b, _))| (b.clone(), Vec::new()))
                });
            match ready {
                Some((block, cert)) => self.append(block, cert, now, out),
                None => break,
            }
        }
    }
}
