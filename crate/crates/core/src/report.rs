// SPDX-License-Identifier: Apache-2.0

//! Run report: chain summaries, per-day results, message counts, view
//! changes and propagation delays, serialized as JSON and CSV.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::config::RunConfig;
use crate::engine::{EngineStats, SimTime};
use crate::ledger::{Digest, ProcessingDelays};
use crate::message::PropagationKind;
use crate::network::MessageCounts;
use crate::nodes::{ByzantineType, NodeId};
use crate::pbft::QuorumRule;
use crate::poa::PoetDraw;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PropagationRecord {
    pub kind: PropagationKind,
    pub object_id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub sent_at: SimTime,
    pub delivered_at: SimTime,
}

impl PropagationRecord {
    pub fn delay_ms(&self) -> u64 {
        self.delivered_at.0 - self.sent_at.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Aggregate {
    count: u64,
    sum: u64,
    max: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairAggregate {
    pub kind: PropagationKind,
    pub src: NodeId,
    pub dst: NodeId,
    pub count: u64,
    pub mean_ms: f64,
    pub max_ms: u64,
}

/// Propagation record store. Aggregates are exact; raw records are kept for
/// one delivery in every `sampling`.
#[derive(Clone, Debug)]
pub struct PropagationLog {
    sampling: u64,
    seen: u64,
    records: Vec<PropagationRecord>,
    aggregates: BTreeMap<(PropagationKind, NodeId, NodeId), Aggregate>,
}

impl PropagationLog {
    pub fn new(sampling: u64) -> Self {
        assert!(sampling >= 1, "sampling must be at least 1");
        PropagationLog {
            sampling,
            seen: 0,
            records: Vec::new(),
            aggregates: BTreeMap::new(),
        }
    }

    pub fn record_delivery(&mut self, rec: PropagationRecord) {
        debug_assert!(rec.delivered_at >= rec.sent_at);
        let delay = rec.delay_ms();
        let agg = self
            .aggregates
            .entry((rec.kind, rec.src, rec.dst))
            .or_default();
        agg.count += 1;
        agg.sum += delay;
        agg.max = agg.max.max(delay);
        if self.seen % self.sampling == 0 {
            self.records.push(rec);
        }
        self.seen += 1;
    }

    pub fn records(&self) -> &[PropagationRecord] {
        &self.records
    }

    pub fn total(&self) -> u64 {
        self.seen
    }

    pub fn aggregates(&self) -> Vec<PairAggregate> {
        self.aggregates
            .iter()
            .map(|(&(kind, src, dst), a)| PairAggregate {
                kind,
                src,
                dst,
                count: a.count,
                mean_ms: a.sum as f64 / a.count as f64,
                max_ms: a.max,
            })
            .collect()
    }

    pub fn aggregate(&self, kind: PropagationKind, src: NodeId, dst: NodeId) -> Option<PairAggregate> {
        self.aggregates.get(&(kind, src, dst)).map(|a| PairAggregate {
            kind,
            src,
            dst,
            count: a.count,
            mean_ms: a.sum as f64 / a.count as f64,
            max_ms: a.max,
        })
    }

    pub fn report(&self) -> PropagationReport {
        PropagationReport {
            sampling: self.sampling,
            total_deliveries: self.seen,
            aggregates: self.aggregates(),
            records: self.records.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropagationReport {
    pub sampling: u64,
    pub total_deliveries: u64,
    pub aggregates: Vec<PairAggregate>,
    pub records: Vec<PropagationRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NodeChainSummary {
    pub node: NodeId,
    pub authority: bool,
    pub byzantine: ByzantineType,
    pub block_count: u64,
    pub block_digests: Vec<Digest>,
    pub blocks_per_day: BTreeMap<u32, u64>,
    pub tx_count: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ViewChangeRecord {
    pub time: SimTime,
    pub node: NodeId,
    pub old_view: u64,
    pub new_view: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoetElectionRecord {
    pub time: SimTime,
    pub height: u64,
    pub leader: NodeId,
    pub wait_ms: u64,
    pub draws: Vec<PoetDraw>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DayEnd {
    /// The reference node saw the configured run of empty blocks.
    EmptyBlocks,
    /// The day-length guard was hit first.
    Guard,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DayResult {
    pub day: u32,
    pub start: SimTime,
    /// Clock value when the day's last event was processed.
    pub end: SimTime,
    pub ended_by: DayEnd,
    pub txs_scheduled: u64,
    /// Transactions pending on the reference node when the day started.
    pub carryover: u64,
    /// Transactions committed on the reference node during the day.
    pub txs_committed: u64,
    pub nonempty_blocks: u64,
    pub empty_blocks: u64,
    /// Time from day start to the reference node's last non-empty commit.
    pub completion_ms: Option<u64>,
    pub blocks_appended: BTreeMap<NodeId, u64>,
    /// Distinct views adopted by the reference node during the day.
    pub view_changes: u64,
    pub messages: MessageCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedParams {
    pub reference_node: NodeId,
    pub authorities: Vec<NodeId>,
    pub followers: Vec<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quorum: Option<QuorumRule>,
    pub pbft_timeout_ms: u64,
    pub poet_rate: f64,
    pub tx_broadcast_interval_ms: u64,
    pub processing: ProcessingDelays,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Totals {
    pub days: u32,
    pub txs_scheduled: u64,
    pub txs_created: u64,
    /// Distinct transactions on the reference node's chain.
    pub txs_committed: u64,
    pub reference_blocks: u64,
    pub view_changes: u64,
    pub final_time: SimTime,
    pub events: EngineStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TimeseriesRow {
    pub sim_time_ms: u64,
    pub node_id: NodeId,
    pub chain_height: u64,
    pub current_view: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimReport {
    pub schema_version: u32,
    pub config: RunConfig,
    pub resolved: ResolvedParams,
    pub totals: Totals,
    pub days: Vec<DayResult>,
    pub nodes: Vec<NodeChainSummary>,
    pub messages: MessageCounts,
    pub view_changes: Vec<ViewChangeRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub poet_elections: Vec<PoetElectionRecord>,
    pub propagation: PropagationReport,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub timeseries: Vec<TimeseriesRow>,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serializing report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("consistency violation: nodes {a} and {b} disagree at height {height}")]
    Disagreement { a: NodeId, b: NodeId, height: u64 },
    #[error("consistency violation: follower {follower} holds {len} blocks, more than any benign authority ({max})")]
    FollowerAhead { follower: NodeId, len: u64, max: u64 },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl SimReport {
    pub fn node(&self, id: NodeId) -> Option<&NodeChainSummary> {
        self.nodes.iter().find(|n| n.node == id)
    }

    pub fn benign(&self) -> impl Iterator<Item = &NodeChainSummary> {
        self.nodes
            .iter()
            .filter(|n| n.byzantine == ByzantineType::Honest)
    }

    /// Benign chains agree at every height they share, and no benign
    /// follower is longer than the longest benign authority.
    pub fn check_safety(&self) -> Result<(), ReportError> {
        let benign: Vec<&NodeChainSummary> = self.benign().collect();
        let longest = benign
            .iter()
            .filter(|n| n.authority)
            .max_by_key(|n| (n.block_digests.len(), std::cmp::Reverse(n.node)));
        for (i, a) in benign.iter().enumerate() {
            for b in &benign[i + 1..] {
                if let Some(h) = a
                    .block_digests
                    .iter()
                    .zip(&b.block_digests)
                    .position(|(x, y)| x != y)
                {
                    return Err(ReportError::Disagreement {
                        a: a.node,
                        b: b.node,
                        height: h as u64 + 1,
                    });
                }
            }
        }
        if let Some(longest) = longest {
            let max = longest.block_digests.len() as u64;
            for f in benign.iter().filter(|n| !n.authority) {
                if f.block_count > max {
                    return Err(ReportError::FollowerAhead {
                        follower: f.node,
                        len: f.block_count,
                        max,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        self.check_safety()?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn emit_json(&self, path: &Path) -> Result<(), ReportError> {
        let text = self.to_json()?;
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn timeseries_csv(&self) -> Result<String, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["sim_time_ms", "node_id", "chain_height", "current_view"])?;
        for r in &self.timeseries {
            w.write_record([
                r.sim_time_ms.to_string(),
                r.node_id.to_string(),
                r.chain_height.to_string(),
                r.current_view.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| ReportError::Csv(csv::Error::from(e.into_error())))?;
        Ok(String::from_utf8(bytes).expect("CSV is ASCII"))
    }

    pub fn emit_timeseries_csv(&self, path: &Path) -> Result<(), ReportError> {
        let text = self.timeseries_csv()?;
        let mut f = std::fs::File::create(path).map_err(io_err(path))?;
        f.write_all(text.as_bytes()).map_err(io_err(path))
    }
}
