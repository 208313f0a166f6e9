// SPDX-License-Identifier: Apache-2.0

//! Multi-day runs: owns the engine, the network and every node, feeds the
//! daily load, ends days on runs of empty blocks and fast-forwards the clock.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::action::{Action, Audience};
use crate::config::{ConfigError, Protocol, RunConfig};
use crate::engine::{Engine, EngineError, EventId, Flow, SimTime};
use crate::fault::FaultModel;
use crate::ledger::{Block, Chain, MissingDelay, ProcessingDelays, Transaction, TxId};
use crate::message::{Envelope, Message};
use crate::network::{MessageCounts, Network, NetworkError};
use crate::nodes::{ByzantineType, NodeId, NodeTable};
use crate::pbft::{quorum_params, Follower, Replica, ReplicaConfig};
use crate::poa::{poet_elect, LeaderSelection, PoaNode, RoundRobinSchedule};
use crate::report::{
    DayEnd, DayResult, NodeChainSummary, PoetElectionRecord, PropagationLog, PropagationRecord,
    ResolvedParams, SimReport, TimeseriesRow, Totals, ViewChangeRecord, SCHEMA_VERSION,
};
use crate::rng::{Purpose, RngStream};
use crate::workload::{plan_day, BroadcastPolicy, LoadSchedule, ScheduleError};

/// Catch-up rounds run after a day has drained.
const SETTLE_ROUNDS: usize = 8;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("day {day}: {source}")]
    Engine {
        day: u32,
        #[source]
        source: EngineError,
    },
    #[error("day {day}: {source}")]
    Network {
        day: u32,
        #[source]
        source: NetworkError,
    },
    #[error("day {day}: {source}")]
    Processing {
        day: u32,
        #[source]
        source: MissingDelay,
    },
    #[error("node {0} in the load schedule is not in the node table")]
    UnknownOrigin(NodeId),
}

/// Event payloads.
#[derive(Clone, Debug)]
pub enum Payload {
    /// A message that has crossed the network and finished its validation
    /// delay at the recipient.
    Process {
        envelope: Envelope,
        delivered_at: SimTime,
    },
    CreateTx { day: u32 },
    /// Starts consensus for the day.
    Kick,
    Propose { view: u64, height: u64 },
    Timeout,
}

enum NodeState {
    Replica(Box<Replica>),
    Follower(Follower),
    Poa(PoaNode),
}

impl NodeState {
    fn chain(&self) -> &Chain {
        match self {
            NodeState::Replica(r) => r.chain(),
            NodeState::Follower(f) => f.chain(),
            NodeState::Poa(p) => p.chain(),
        }
    }

    fn view(&self) -> Option<u64> {
        match self {
            NodeState::Replica(r) => Some(r.view()),
            NodeState::Follower(_) => None,
            NodeState::Poa(_) => Some(0),
        }
    }

    fn pending_txs(&self) -> u64 {
        match self {
            NodeState::Replica(r) => r.pool().len() as u64,
            NodeState::Poa(p) => p.pool().len() as u64,
            NodeState::Follower(_) => 0,
        }
    }
}

/// Counts consecutive empty blocks committed on the reference node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopTracker {
    threshold: u32,
    run: u32,
}

impl StopTracker {
    pub fn new(threshold: u32) -> Self {
        assert!(threshold >= 1, "threshold must be at least 1");
        StopTracker { threshold, run: 0 }
    }

    pub fn run(&self) -> u32 {
        self.run
    }

    pub fn reset(&mut self) {
        self.run = 0;
    }

    /// Records a committed block and reports whether the day is over.
    pub fn observe(&mut self, empty: bool) -> bool {
        if empty {
            self.run += 1;
        } else {
            self.run = 0;
        }
        self.stop_condition()
    }

    pub fn stop_condition(&self) -> bool {
        self.run >= self.threshold
    }
}

#[derive(Debug, Default)]
struct DayStats {
    day: u32,
    injections_left: u64,
    draining: bool,
    committed: u64,
    nonempty: u64,
    empty: u64,
    last_nonempty: Option<SimTime>,
    appended: BTreeMap<NodeId, u64>,
    views: BTreeSet<u64>,
}

pub struct SimulationResult {
    pub report: SimReport,
    pub chains: BTreeMap<NodeId, Chain>,
}

pub struct Simulation {
    cfg: RunConfig,
    table: NodeTable,
    schedule: LoadSchedule,
    engine: Engine<Payload>,
    network: Network,
    processing: ProcessingDelays,
    proc_streams: BTreeMap<NodeId, RngStream>,
    poet_streams: BTreeMap<NodeId, RngStream>,
    nodes: BTreeMap<NodeId, NodeState>,
    authorities: Arc<[NodeId]>,
    followers: Vec<NodeId>,
    all: Vec<NodeId>,
    reference: NodeId,
    timers: BTreeMap<NodeId, EventId>,
    proposals: BTreeMap<NodeId, EventId>,
    poet_pending: Option<(u64, NodeId, u64)>,
    next_tx: u64,
    tracker: StopTracker,
    stats: DayStats,
    error: Option<SimError>,
    propagation: PropagationLog,
    view_log: Vec<ViewChangeRecord>,
    elections: Vec<PoetElectionRecord>,
    timeseries: Vec<TimeseriesRow>,
    blocks_per_day: BTreeMap<NodeId, BTreeMap<u32, u64>>,
    days: Vec<DayResult>,
    warnings: Vec<String>,
    txs_created: u64,
}

impl Simulation {
    pub fn new(cfg: RunConfig, table: NodeTable, schedule: LoadSchedule) -> Result<Self, SimError> {
        cfg.validate()?;
        schedule.validate_nodes(&table)?;
        let processing = cfg.processing.resolve()?;
        let authorities: Arc<[NodeId]> = table.authorities().into();
        let followers = table.followers();
        let all = table.ids();
        let mut warnings = Vec::new();

        let faults = match cfg.protocol {
            Protocol::Pbft => FaultModel::new(
                cfg.seed,
                cfg.faults(),
                table.nodes.iter().map(|n| (n.id, n.byzantine)),
            ),
            Protocol::Poa | Protocol::Poet => {
                if table.byzantine_count() > 0 {
                    warnings.push(format!(
                        "{} ignores Byzantine node types; {} node(s) treated as honest",
                        cfg.protocol,
                        table.byzantine_count()
                    ));
                }
                FaultModel::disabled()
            }
        };
        let byzantine_of = |id: NodeId| match cfg.protocol {
            Protocol::Pbft => table.get(id).map_or(ByzantineType::Honest, |n| n.byzantine),
            _ => ByzantineType::Honest,
        };
        let reference = match authorities
            .iter()
            .copied()
            .find(|&a| byzantine_of(a) == ByzantineType::Honest)
        {
            Some(r) => r,
            None => {
                warnings.push("no benign authority; using the first authority as reference".into());
                authorities[0]
            }
        };

        let network = Network::new(
            cfg.seed,
            table.nodes.iter().map(|n| (n.id, n.location.clone())),
            cfg.latency.clone(),
            faults,
        );
        let replica_cfg = ReplicaConfig {
            block_capacity: cfg.block_capacity,
            block_interval_ms: cfg.block_interval_ms,
            timeout_ms: cfg.timeout_ms(),
        };
        let selection = match cfg.protocol {
            Protocol::Poet => LeaderSelection::Lottery,
            _ => LeaderSelection::RoundRobin(RoundRobinSchedule {
                authorities: authorities.clone(),
                block_interval_ms: cfg.block_interval_ms,
            }),
        };
        let mut nodes = BTreeMap::new();
        for n in &table.nodes {
            let state = match (cfg.protocol, n.authority) {
                (Protocol::Pbft, true) => {
                    NodeState::Replica(Box::new(Replica::new(n.id, authorities.clone(), replica_cfg)))
                }
                (Protocol::Pbft, false) => NodeState::Follower(Follower::new(n.id, &authorities)),
                _ => NodeState::Poa(PoaNode::new(
                    n.id,
                    n.authority,
                    selection.clone(),
                    cfg.block_capacity,
                    cfg.block_interval_ms,
                )),
            };
            nodes.insert(n.id, state);
        }
        let proc_streams = all
            .iter()
            .map(|&id| (id, RngStream::new(cfg.seed, id, Purpose::Processing)))
            .collect();
        let poet_streams = authorities
            .iter()
            .map(|&id| (id, RngStream::new(cfg.seed, id, Purpose::PoetDraw)))
            .collect();
        let mut timeseries = Vec::new();
        for (&id, state) in &nodes {
            timeseries.push(TimeseriesRow {
                sim_time_ms: 0,
                node_id: id,
                chain_height: 0,
                current_view: state.view(),
            });
        }
        Ok(Simulation {
            tracker: StopTracker::new(cfg.empty_block_threshold),
            propagation: PropagationLog::new(cfg.record_sampling),
            cfg,
            table,
            schedule,
            engine: Engine::new(),
            network,
            processing,
            proc_streams,
            poet_streams,
            nodes,
            authorities,
            followers,
            all,
            reference,
            timers: BTreeMap::new(),
            proposals: BTreeMap::new(),
            poet_pending: None,
            next_tx: 0,
            stats: DayStats::default(),
            error: None,
            view_log: Vec::new(),
            elections: Vec::new(),
            timeseries,
            blocks_per_day: BTreeMap::new(),
            days: Vec::new(),
            warnings,
            txs_created: 0,
        })
    }

    pub fn reference(&self) -> NodeId {
        self.reference
    }

    pub fn now(&self) -> SimTime {
        self.engine.now()
    }

    pub fn chain(&self, id: NodeId) -> Option<&Chain> {
        self.nodes.get(&id).map(NodeState::chain)
    }

    pub fn day_results(&self) -> &[DayResult] {
        &self.days
    }

    pub fn message_counts(&self) -> &MessageCounts {
        self.network.counts()
    }

    fn fail(&mut self, e: SimError) {
        if self.error.is_none() {
            self.error = Some(e);
        }
    }

    fn day_start(&self, day: u32) -> SimTime {
        SimTime((day as u64 - 1) * self.cfg.day_length_ms)
    }

    /// Runs one day to completion: the empty-block rule on the reference
    /// node, or the day-length guard.
    pub fn run_day(&mut self, day: u32) -> Result<DayResult, SimError> {
        let start = self.day_start(day);
        let horizon = start.after(self.cfg.day_length_ms);
        self.engine
            .advance_to(start)
            .map_err(|source| SimError::Engine { day, source })?;
        let policy = BroadcastPolicy::new(self.cfg.tx_interval_ms(), self.cfg.tx_ticks_per_day);
        let plan = if day <= self.schedule.days() {
            plan_day(day, &self.schedule, &policy)?
        } else {
            Vec::new()
        };
        let carryover = self.nodes[&self.reference].pending_txs();
        self.tracker.reset();
        self.stats = DayStats {
            day,
            injections_left: plan.len() as u64,
            ..DayStats::default()
        };
        let counts_before = self.network.counts().clone();

        let mut engine = std::mem::take(&mut self.engine);
        let scheduled = (|| {
            for inj in &plan {
                engine.schedule_after(inj.offset_ms, inj.node, Payload::CreateTx { day })?;
            }
            engine.schedule_after(policy.tick_offset(0), self.reference, Payload::Kick)
        })();
        if let Err(source) = scheduled {
            self.engine = engine;
            return Err(SimError::Engine { day, source });
        }
        engine.run_until_horizon(horizon, |eng, ev| self.dispatch(eng, ev));
        let ended_by = if self.stats.draining {
            self.settle(&mut engine, horizon);
            DayEnd::EmptyBlocks
        } else {
            DayEnd::Guard
        };
        self.engine = engine;
        self.timers.clear();
        self.proposals.clear();
        if let Some(e) = self.error.take() {
            return Err(e);
        }

        let stats = std::mem::take(&mut self.stats);
        let result = DayResult {
            day,
            start,
            end: self.engine.now(),
            ended_by,
            txs_scheduled: plan.len() as u64,
            carryover,
            txs_committed: stats.committed,
            nonempty_blocks: stats.nonempty,
            empty_blocks: stats.empty,
            completion_ms: stats.last_nonempty.map(|t| t.0 - start.0),
            blocks_appended: self
                .all
                .iter()
                .map(|id| (*id, stats.appended.get(id).copied().unwrap_or(0)))
                .collect(),
            view_changes: stats.views.len() as u64,
            messages: self.network.counts().since(&counts_before),
        };
        self.days.push(result.clone());
        Ok(result)
    }

    /// After a drained day, lets every replica ask its peers for blocks it
    /// missed so that all benign authorities end the day level.
    fn settle(&mut self, engine: &mut Engine<Payload>, horizon: SimTime) {
        if self.cfg.protocol != Protocol::Pbft {
            return;
        }
        for _ in 0..SETTLE_ROUNDS {
            let before: u64 = self.nodes.values().map(|n| n.chain().height()).sum();
            let replicas: Vec<(NodeId, u64)> = self
                .nodes
                .iter()
                .filter_map(|(&id, n)| match n {
                    NodeState::Replica(r) => Some((id, r.next_height())),
                    _ => None,
                })
                .collect();
            for (id, next) in replicas {
                let msg = Message::Pbft(crate::message::PbftMessage::SyncRequest {
                    from_height: next,
                });
                self.execute(
                    engine,
                    id,
                    vec![Action::Broadcast {
                        audience: Audience::Authorities,
                        msg,
                    }],
                );
            }
            engine.run_until_horizon(horizon, |eng, ev| self.dispatch(eng, ev));
            let after: u64 = self.nodes.values().map(|n| n.chain().height()).sum();
            if after == before || self.error.is_some() {
                break;
            }
        }
    }

    /// Runs every day of the schedule and builds the report.
    pub fn run_all(mut self) -> Result<SimulationResult, SimError> {
        let days = self.schedule.days().max(1);
        for day in 1..=days {
            self.run_day(day)?;
        }
        Ok(self.finish())
    }

    fn dispatch(&mut self, eng: &mut Engine<Payload>, ev: crate::engine::Event<Payload>) -> Flow {
        let node = ev.target;
        let now = ev.fire_at;
        let actions = match ev.payload {
            Payload::CreateTx { day } => {
                self.create_tx(eng, node, day);
                Vec::new()
            }
            Payload::Kick => self.kick(eng),
            Payload::Propose { view, height } => {
                self.proposals.remove(&node);
                if self.stats.draining {
                    Vec::new()
                } else {
                    self.propose(node, now, view, height)
                }
            }
            Payload::Timeout => {
                self.timers.remove(&node);
                match self.nodes.get_mut(&node) {
                    Some(NodeState::Replica(r)) if !self.stats.draining => r.on_timeout(now),
                    _ => Vec::new(),
                }
            }
            Payload::Process {
                envelope,
                delivered_at,
            } => self.process(envelope, delivered_at, now),
        };
        self.execute(eng, node, actions);
        if self.error.is_some() {
            Flow::Stop
        } else {
            Flow::Continue
        }
    }

    fn create_tx(&mut self, eng: &mut Engine<Payload>, node: NodeId, day: u32) {
        let id = TxId(self.next_tx);
        self.next_tx += 1;
        self.txs_created += 1;
        self.stats.injections_left = self.stats.injections_left.saturating_sub(1);
        let tx = Arc::new(Transaction {
            id,
            origin: node,
            payload: format!("day{day}/node{node}/tx{}", id.0),
            created_at: eng.now(),
            day,
        });
        match self.nodes.get_mut(&node) {
            Some(NodeState::Replica(r)) => {
                r.add_transaction(tx.clone());
            }
            Some(NodeState::Poa(p)) => {
                p.add_transaction(tx.clone());
            }
            _ => {}
        }
        self.execute(
            eng,
            node,
            vec![Action::Broadcast {
                audience: Audience::AllNodes,
                msg: Message::Tx(tx),
            }],
        );
    }

    fn kick(&mut self, eng: &mut Engine<Payload>) -> Vec<Action> {
        let ids: Vec<NodeId> = self.nodes.keys().copied().collect();
        for id in ids {
            let actions = match self.nodes.get_mut(&id) {
                Some(NodeState::Replica(r)) => r.start(),
                Some(NodeState::Poa(p)) => p.start(),
                _ => Vec::new(),
            };
            self.execute(eng, id, actions);
        }
        if self.cfg.protocol == Protocol::Poet {
            let next = self
                .authorities
                .iter()
                .map(|a| self.nodes[a].chain().height())
                .max()
                .unwrap_or(0)
                + 1;
            self.elect(eng, next);
        }
        Vec::new()
    }

    fn propose(&mut self, node: NodeId, now: SimTime, view: u64, height: u64) -> Vec<Action> {
        match self.nodes.get_mut(&node) {
            Some(NodeState::Replica(r)) => r.on_propose(now, view, height),
            Some(NodeState::Poa(p)) => {
                if self.cfg.protocol == Protocol::Poet {
                    match self.poet_pending {
                        Some((h, w, _)) if h == height && w == node => {
                            self.poet_pending = None;
                        }
                        _ => return Vec::new(),
                    }
                }
                p.propose(now, height)
            }
            _ => Vec::new(),
        }
    }

    /// Runs the lottery for `height`; the winner proposes `wait_ms` after it
    /// holds block `height - 1`.
    fn elect(&mut self, eng: &mut Engine<Payload>, height: u64) {
        let rate = self.cfg.poet_rate();
        let election = poet_elect(&self.authorities, rate, &mut self.poet_streams);
        self.elections.push(PoetElectionRecord {
            time: eng.now(),
            height,
            leader: election.leader,
            wait_ms: election.wait_ms,
            draws: election.draws.clone(),
        });
        self.poet_pending = Some((height, election.leader, election.wait_ms));
        if self.nodes[&election.leader].chain().height() + 1 == height {
            self.schedule_proposal(eng, election.leader, 0, height, election.wait_ms);
        }
    }

    fn process(&mut self, env: Envelope, delivered_at: SimTime, now: SimTime) -> Vec<Action> {
        if let Some((kind, object_id)) = env.body.propagation_object() {
            self.propagation.record_delivery(PropagationRecord {
                kind,
                object_id,
                src: env.sender,
                dst: env.recipient,
                sent_at: env.sent_at,
                delivered_at,
            });
        }
        let Some(state) = self.nodes.get_mut(&env.recipient) else {
            return Vec::new();
        };
        match (&env.body, state) {
            (Message::Tx(tx), NodeState::Replica(r)) => {
                r.add_transaction(tx.clone());
                Vec::new()
            }
            (Message::Tx(tx), NodeState::Poa(p)) => {
                p.add_transaction(tx.clone());
                Vec::new()
            }
            (Message::Block(b), NodeState::Poa(p)) => p.on_block(b),
            (Message::Pbft(m), NodeState::Replica(r)) => r.on_message(now, env.sender, m),
            (Message::Pbft(m), NodeState::Follower(f)) => f.on_message(env.sender, m),
            _ => Vec::new(),
        }
    }

    fn recipients(&self, node: NodeId, audience: Audience) -> Vec<NodeId> {
        let base: &[NodeId] = match audience {
            Audience::Authorities => &self.authorities,
            Audience::Followers => &self.followers,
            Audience::AllNodes => &self.all,
        };
        base.iter().copied().filter(|&n| n != node).collect()
    }

    fn send(&mut self, eng: &mut Engine<Payload>, src: NodeId, dst: NodeId, msg: Message) {
        let day = self.stats.day;
        let kind = msg.validation_kind();
        let sent = match self.network.transmit(eng.now(), src, dst, msg) {
            Ok(s) => s,
            Err(source) => return self.fail(SimError::Network { day, source }),
        };
        let Some((envelope, latency)) = sent else {
            return;
        };
        let stream = self
            .proc_streams
            .get_mut(&dst)
            .expect("every node has a processing stream");
        let proc = match self.processing.validation_delay(kind, stream) {
            Ok(p) => p,
            Err(source) => return self.fail(SimError::Processing { day, source }),
        };
        let delivered_at = eng.now().after(latency);
        if let Err(source) = eng.schedule_after(
            latency + proc,
            dst,
            Payload::Process {
                envelope,
                delivered_at,
            },
        ) {
            self.fail(SimError::Engine { day, source });
        }
    }

    fn schedule_proposal(
        &mut self,
        eng: &mut Engine<Payload>,
        node: NodeId,
        view: u64,
        height: u64,
        after: u64,
    ) {
        if self.stats.draining {
            return;
        }
        if let Some(old) = self.proposals.remove(&node) {
            eng.cancel(old);
        }
        match eng.schedule_after(after, node, Payload::Propose { view, height }) {
            Ok(id) => {
                self.proposals.insert(node, id);
            }
            Err(source) => self.fail(SimError::Engine {
                day: self.stats.day,
                source,
            }),
        }
    }

    fn execute(&mut self, eng: &mut Engine<Payload>, node: NodeId, actions: Vec<Action>) {
        for action in actions {
            match action {
                Action::Send { to, msg } => self.send(eng, node, to, msg),
                Action::Broadcast { audience, msg } => {
                    for dst in self.recipients(node, audience) {
                        self.send(eng, node, dst, msg.clone());
                    }
                }
                Action::Appended { block } => self.on_appended(eng, node, block),
                Action::ArmTimer { after } => {
                    if let Some(old) = self.timers.remove(&node) {
                        eng.cancel(old);
                    }
                    if !self.stats.draining {
                        match eng.schedule_after(after, node, Payload::Timeout) {
                            Ok(id) => {
                                self.timers.insert(node, id);
                            }
                            Err(source) => self.fail(SimError::Engine {
                                day: self.stats.day,
                                source,
                            }),
                        }
                    }
                }
                Action::CancelTimer => {
                    if let Some(old) = self.timers.remove(&node) {
                        eng.cancel(old);
                    }
                }
                Action::ScheduleProposal {
                    view,
                    height,
                    after,
                } => self.schedule_proposal(eng, node, view, height, after),
                Action::ViewAdopted { old, new } => {
                    let now = eng.now();
                    self.view_log.push(ViewChangeRecord {
                        time: now,
                        node,
                        old_view: old,
                        new_view: new,
                    });
                    if node == self.reference {
                        self.stats.views.insert(new);
                    }
                    self.timeseries.push(TimeseriesRow {
                        sim_time_ms: now.0,
                        node_id: node,
                        chain_height: self.nodes[&node].chain().height(),
                        current_view: Some(new),
                    });
                }
            }
        }
    }

    fn on_appended(&mut self, eng: &mut Engine<Payload>, node: NodeId, block: Arc<Block>) {
        let now = eng.now();
        let day = self.stats.day;
        *self.stats.appended.entry(node).or_default() += 1;
        *self
            .blocks_per_day
            .entry(node)
            .or_default()
            .entry(day)
            .or_default() += 1;
        let state = &self.nodes[&node];
        self.timeseries.push(TimeseriesRow {
            sim_time_ms: now.0,
            node_id: node,
            chain_height: block.height,
            current_view: state.view(),
        });

        if self.cfg.protocol == Protocol::Poet && !self.stats.draining {
            if block.proposer == node {
                self.elect(eng, block.height + 1);
            } else if let Some((h, winner, wait)) = self.poet_pending {
                if winner == node && h == block.height + 1 {
                    self.schedule_proposal(eng, node, 0, h, wait);
                }
            }
        }

        if node == self.reference && !self.stats.draining {
            self.stats.committed += block.txs.len() as u64;
            if block.is_empty() {
                self.stats.empty += 1;
            } else {
                self.stats.nonempty += 1;
                self.stats.last_nonempty = Some(now);
            }
            if self.tracker.observe(block.is_empty()) && self.stats.injections_left == 0 {
                self.begin_drain(eng);
            }
        }
    }

    /// Stops new proposals and timeouts; in-flight messages still land.
    fn begin_drain(&mut self, eng: &mut Engine<Payload>) {
        self.stats.draining = true;
        for (_, id) in std::mem::take(&mut self.timers) {
            eng.cancel(id);
        }
        for (_, id) in std::mem::take(&mut self.proposals) {
            eng.cancel(id);
        }
        self.poet_pending = None;
    }

    fn finish(mut self) -> SimulationResult {
        let events = self.engine.finalize();
        let byzantine_of = |id: NodeId| match self.cfg.protocol {
            Protocol::Pbft => self.table.get(id).map_or(ByzantineType::Honest, |n| n.byzantine),
            _ => ByzantineType::Honest,
        };
        let nodes: Vec<NodeChainSummary> = self
            .table
            .nodes
            .iter()
            .map(|n| {
                let chain = self.nodes[&n.id].chain();
                let digests = chain.digests();
                NodeChainSummary {
                    node: n.id,
                    authority: n.authority,
                    byzantine: byzantine_of(n.id),
                    block_count: digests.len() as u64,
                    block_digests: digests,
                    blocks_per_day: self.blocks_per_day.remove(&n.id).unwrap_or_default(),
                    tx_count: chain.blocks().iter().map(|b| b.txs.len() as u64).sum(),
                }
            })
            .collect();
        let ref_chain = self.nodes[&self.reference].chain();
        let committed: BTreeSet<TxId> = ref_chain
            .blocks()
            .iter()
            .flat_map(|b| b.txs.iter().map(|t| t.id))
            .collect();
        let view_changes = self
            .view_log
            .iter()
            .filter(|v| v.node == self.reference)
            .count() as u64;
        let totals = Totals {
            days: self.days.len() as u32,
            txs_scheduled: self.schedule.total(),
            txs_created: self.txs_created,
            txs_committed: committed.len() as u64,
            reference_blocks: ref_chain.height(),
            view_changes,
            final_time: self.engine.now(),
            events,
        };
        let resolved = ResolvedParams {
            reference_node: self.reference,
            authorities: self.authorities.to_vec(),
            followers: self.followers.clone(),
            quorum: (self.cfg.protocol == Protocol::Pbft)
                .then(|| quorum_params(self.authorities.len())),
            pbft_timeout_ms: self.cfg.timeout_ms(),
            poet_rate: self.cfg.poet_rate(),
            tx_broadcast_interval_ms: self.cfg.tx_interval_ms(),
            processing: self.processing.clone(),
        };
        let report = SimReport {
            schema_version: SCHEMA_VERSION,
            config: self.cfg.clone(),
            resolved,
            totals,
            days: std::mem::take(&mut self.days),
            nodes,
            messages: self.network.counts().clone(),
            view_changes: std::mem::take(&mut self.view_log),
            poet_elections: std::mem::take(&mut self.elections),
            propagation: self.propagation.report(),
            warnings: std::mem::take(&mut self.warnings),
            timeseries: std::mem::take(&mut self.timeseries),
        };
        let chains = self
            .nodes
            .into_iter()
            .map(|(id, n)| (id, n.chain().clone()))
            .collect();
        SimulationResult { report, chains }
    }
}
