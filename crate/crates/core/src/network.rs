// SPDX-License-Identifier: Apache-2.0

//! Point-to-point latency and broadcast over the event engine.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{DelayModel, DelayModelError};
use crate::engine::{Engine, EngineError, EventId, SimTime};
use crate::fault::FaultModel;
use crate::message::{Envelope, Message, MessageKind};
use crate::nodes::NodeId;
use crate::rng::{Purpose, RngStream};

/// Latency for one ordered location pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyPair {
    pub from: String,
    pub to: String,
    pub model: DelayModel,
    /// Also use this model for `to -> from`.
    #[serde(default = "yes")]
    pub symmetric: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<DelayModel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<LatencyPair>,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig {
            default: Some(DelayModel::Normal {
                mean: 50.0,
                std: 10.0,
            }),
            pairs: Vec::new(),
        }
    }
}

impl LatencyConfig {
    pub fn constant(ms: f64) -> Self {
        LatencyConfig {
            default: Some(DelayModel::constant(ms)),
            pairs: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), DelayModelError> {
        self.default.iter().try_for_each(DelayModel::validate)?;
        self.pairs.iter().try_for_each(|p| p.model.validate())
    }

    pub fn lookup(&self, from: &str, to: &str) -> Option<&DelayModel> {
        self.pairs
            .iter()
            .find(|p| p.from == from && p.to == to)
            .or_else(|| {
                self.pairs
                    .iter()
                    .find(|p| p.symmetric && p.from == to && p.to == from)
            })
            .map(|p| &p.model)
            .or(self.default.as_ref())
    }

    /// Mean latency of the default model, or of the pair models if there is
    /// no default.
    pub fn mean_ms(&self) -> f64 {
        match &self.default {
            Some(m) => m.mean(),
            None if !self.pairs.is_empty() => {
                self.pairs.iter().map(|p| p.model.mean()).sum::<f64>() / self.pairs.len() as f64
            }
            None => 0.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no latency model for {from} -> {to} and no default")]
    NoLatencyModel { from: String, to: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SendOutcome {
    Scheduled(EventId),
    Dropped,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MessageCounts {
    /// Messages handed to the network, by kind.
    pub sent: BTreeMap<MessageKind, u64>,
    /// Messages dropped at the sender, by kind.
    pub dropped: BTreeMap<MessageKind, u64>,
}

impl MessageCounts {
    pub fn sent(&self, kind: MessageKind) -> u64 {
        self.sent.get(&kind).copied().unwrap_or(0)
    }

    pub fn dropped(&self, kind: MessageKind) -> u64 {
        self.dropped.get(&kind).copied().unwrap_or(0)
    }

    pub fn delivered(&self, kind: MessageKind) -> u64 {
        self.sent(kind) - self.dropped(kind)
    }

    pub fn consensus_sent(&self) -> u64 {
        self.sent
            .iter()
            .filter(|(k, _)| k.is_consensus())
            .map(|(_, v)| v)
            .sum()
    }

    pub fn merge(&mut self, other: &MessageCounts) {
        for (k, v) in &other.sent {
            *self.sent.entry(*k).or_default() += v;
        }
        for (k, v) in &other.dropped {
            *self.dropped.entry(*k).or_default() += v;
        }
    }

    /// `self - earlier`, for per-day deltas.
    pub fn since(&self, earlier: &MessageCounts) -> MessageCounts {
        let diff = |now: &BTreeMap<MessageKind, u64>, then: &BTreeMap<MessageKind, u64>| {
            now.iter()
                .map(|(k, v)| (*k, v - then.get(k).copied().unwrap_or(0)))
                .filter(|(_, v)| *v > 0)
                .collect()
        };
        MessageCounts {
            sent: diff(&self.sent, &earlier.sent),
            dropped: diff(&self.dropped, &earlier.dropped),
        }
    }
}

pub struct Network {
    seed: u64,
    locations: BTreeMap<NodeId, String>,
    latency: LatencyConfig,
    streams: BTreeMap<(NodeId, NodeId), RngStream>,
    faults: FaultModel,
    next_msg_id: u64,
    counts: MessageCounts,
}

impl Network {
    pub fn new(
        seed: u64,
        nodes: impl IntoIterator<Item = (NodeId, String)>,
        latency: LatencyConfig,
        faults: FaultModel,
    ) -> Self {
        Network {
            seed,
            locations: nodes.into_iter().collect(),
            latency,
            streams: BTreeMap::new(),
            faults,
            next_msg_id: 0,
            counts: MessageCounts::default(),
        }
    }

    pub fn faults(&self) -> &FaultModel {
        &self.faults
    }

    pub fn faults_mut(&mut self) -> &mut FaultModel {
        &mut self.faults
    }

    pub fn counts(&self) -> &MessageCounts {
        &self.counts
    }

    pub fn is_registered(&self, node: NodeId) -> bool {
        self.locations.contains_key(&node)
    }

    fn model_for(&self, src: NodeId, dst: NodeId) -> Result<&DelayModel, NetworkError> {
        let from = self
            .locations
            .get(&src)
            .ok_or(NetworkError::UnknownNode(src))?;
        let to = self
            .locations
            .get(&dst)
            .ok_or(NetworkError::UnknownNode(dst))?;
        self.latency
            .lookup(from, to)
            .ok_or_else(|| NetworkError::NoLatencyModel {
                from: from.clone(),
                to: to.clone(),
            })
    }

    /// Draws a latency from the `(src, dst)` stream.
    pub fn sample_latency(&mut self, src: NodeId, dst: NodeId) -> Result<u64, NetworkError> {
        let model = self.model_for(src, dst)?.clone();
        let seed = self.seed;
        let stream = self
            .streams
            .entry((src, dst))
            .or_insert_with(|| RngStream::new(seed, src, Purpose::Latency { dst }));
        Ok(model.sample_ms(stream))
    }

    /// Applies the sender's fault behaviour and draws a latency without
    /// scheduling anything. `None` means the message was dropped. The drop
    /// decision is made first; only surviving messages consume a latency draw.
    pub fn transmit(
        &mut self,
        now: SimTime,
        src: NodeId,
        dst: NodeId,
        body: Message,
    ) -> Result<Option<(Envelope, u64)>, NetworkError> {
        if !self.is_registered(src) {
            return Err(NetworkError::UnknownNode(src));
        }
        if !self.is_registered(dst) {
            return Err(NetworkError::UnknownNode(dst));
        }
        let kind = body.kind();
        *self.counts.sent.entry(kind).or_default() += 1;
        if self.faults.should_drop(src) {
            *self.counts.dropped.entry(kind).or_default() += 1;
            return Ok(None);
        }
        let latency = self.sample_latency(src, dst)?;
        let body = self.faults.outbound(src, &body).unwrap_or(body);
        let msg_id = self.next_msg_id;
        self.next_msg_id += 1;
        let envelope = Envelope {
            msg_id,
            sender: src,
            recipient: dst,
            sent_at: now,
            body,
        };
        Ok(Some((envelope, latency)))
    }

    /// Sends one message, delivering it to `dst` after the sampled latency.
    /// Active senders have their message tampered before it leaves.
    pub fn send<P>(
        &mut self,
        engine: &mut Engine<P>,
        src: NodeId,
        dst: NodeId,
        body: Message,
        wrap: impl FnOnce(Envelope) -> P,
    ) -> Result<SendOutcome, NetworkError> {
        match self.transmit(engine.now(), src, dst, body)? {
            None => Ok(SendOutcome::Dropped),
            Some((envelope, latency)) => {
                let id = engine.schedule_after(latency, dst, wrap(envelope))?;
                Ok(SendOutcome::Scheduled(id))
            }
        }
    }

    /// Sends `body` to each recipient with independent drop and latency
    /// draws. Returns how many were scheduled.
    pub fn broadcast<P>(
        &mut self,
        engine: &mut Engine<P>,
        src: NodeId,
        body: &Message,
        recipients: &[NodeId],
        wrap: impl Fn(Envelope) -> P,
    ) -> Result<usize, NetworkError> {
        let mut scheduled = 0;
        for &dst in recipients {
            if let SendOutcome::Scheduled(_) = self.send(engine, src, dst, body.clone(), &wrap)? {
                scheduled += 1;
            }
        }
        Ok(scheduled)
    }
}
