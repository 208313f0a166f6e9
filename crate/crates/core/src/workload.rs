// SPDX-License-Identifier: Apache-2.0

//! Daily transaction loads and the pending-transaction pool.
//!
//! Load files look like
//!
//! ```json
//! {"days": [{"day": 1, "loads": {"1": 5, "2": 14}}, {"day": 2, "loads": {"1": 8}}]}
//! ```
//!
//! Days are numbered from 1. Days missing from the file have zero load.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::ledger::{Transaction, TxId};
use crate::nodes::{NodeId, NodeTable};

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("day {day}, node {node}: negative transaction count {value}")]
    NegativeCount { day: u32, node: String, value: i64 },
    #[error("day {day}, node {node}: count must be a non-negative integer")]
    BadCount { day: u32, node: String },
    #[error("day {day}: node key {key:?} is not a positive integer")]
    BadNodeKey { day: u32, key: String },
    #[error("day {day}, node {node}: unknown node")]
    UnknownNode { day: u32, node: NodeId },
    #[error("entry {index}: day must be >= 1, got {day}")]
    BadDay { index: usize, day: i64 },
    #[error("day {0} listed twice")]
    DuplicateDay(u32),
    #[error("day {day} outside schedule (1..={days})")]
    DayOutOfRange { day: u32, days: u32 },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    days: Vec<RawDay>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDay {
    day: i64,
    loads: BTreeMap<String, serde_json::Value>,
}

/// Transaction counts per day and origin node.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadSchedule {
    counts: BTreeMap<u32, BTreeMap<NodeId, u64>>,
}

impl LoadSchedule {
    /// Parses and structurally validates a load file. Node ids are checked
    /// against a node table separately, see [`LoadSchedule::validate_nodes`].
    pub fn from_json_str(text: &str) -> Result<Self, ScheduleError> {
        let raw: RawSchedule = serde_json::from_str(text).map_err(|e| ScheduleError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let mut counts = BTreeMap::new();
        for (index, day) in raw.days.into_iter().enumerate() {
            let d = u32::try_from(day.day)
                .ok()
                .filter(|&d| d >= 1)
                .ok_or(ScheduleError::BadDay { index, day: day.day })?;
            let mut loads = BTreeMap::new();
            for (key, value) in day.loads {
                let node = key
                    .trim()
                    .parse::<u32>()
                    .ok()
                    .filter(|&n| n > 0)
                    .map(NodeId)
                    .ok_or_else(|| ScheduleError::BadNodeKey {
                        day: d,
                        key: key.clone(),
                    })?;
                let count = match value.as_i64() {
                    Some(v) if v < 0 => {
                        return Err(ScheduleError::NegativeCount {
                            day: d,
                            node: key,
                            value: v,
                        })
                    }
                    Some(v) => v as u64,
                    None => match value.as_u64() {
                        Some(v) => v,
                        None => return Err(ScheduleError::BadCount { day: d, node: key }),
                    },
                };
                if loads.insert(node, count).is_some() {
                    return Err(ScheduleError::BadNodeKey { day: d, key });
                }
            }
            if counts.insert(d, loads).is_some() {
                return Err(ScheduleError::DuplicateDay(d));
            }
        }
        Ok(LoadSchedule { counts })
    }

    pub fn validate_nodes(&self, table: &NodeTable) -> Result<(), ScheduleError> {
        for (&day, loads) in &self.counts {
            for &node in loads.keys() {
                if !table.contains(node) {
                    return Err(ScheduleError::UnknownNode { day, node });
                }
            }
        }
        Ok(())
    }

    /// Reads a load file and checks every node id against `table`.
    pub fn load(path: &Path, table: &NodeTable) -> Result<Self, ScheduleError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScheduleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let schedule = Self::from_json_str(&text)?;
        schedule.validate_nodes(table)?;
        Ok(schedule)
    }

    pub fn from_counts(counts: BTreeMap<u32, BTreeMap<NodeId, u64>>) -> Self {
        LoadSchedule { counts }
    }

    /// Number of simulated days (the highest day listed).
    pub fn days(&self) -> u32 {
        self.counts.keys().next_back().copied().unwrap_or(0)
    }

    pub fn count(&self, day: u32, node: NodeId) -> u64 {
        self.counts
            .get(&day)
            .and_then(|l| l.get(&node))
            .copied()
            .unwrap_or(0)
    }

    pub fn day_total(&self, day: u32) -> u64 {
        self.counts.get(&day).map(|l| l.values().sum()).unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().flat_map(|l| l.values()).sum()
    }

    pub fn loads(&self, day: u32) -> impl Iterator<Item = (NodeId, u64)> + '_ {
        self.counts
            .get(&day)
            .into_iter()
            .flat_map(|l| l.iter().map(|(&n, &c)| (n, c)))
    }

    pub fn to_json(&self) -> String {
        let days: Vec<serde_json::Value> = self
            .counts
            .iter()
            .map(|(day, loads)| {
                let loads: serde_json::Map<String, serde_json::Value> = loads
                    .iter()
                    .map(|(n, c)| (n.0.to_string(), serde_json::Value::from(*c)))
                    .collect();
                serde_json::json!({"day": day, "loads": loads})
            })
            .collect();
        serde_json::json!({ "days": days }).to_string()
    }
}

/// When, within a day, transactions are injected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BroadcastPolicy {
    /// Spacing between injection ticks; the first tick is one interval after
    /// the day starts.
    pub interval_ms: u64,
    /// Number of ticks a node's daily count is spread over. Each tick gets an
    /// equal share and the remainder goes to the earliest ticks.
    pub ticks: u32,
}

impl BroadcastPolicy {
    pub fn new(interval_ms: u64, ticks: u32) -> Self {
        assert!(interval_ms > 0, "broadcast interval must be positive");
        assert!(ticks > 0, "at least one injection tick");
        BroadcastPolicy { interval_ms, ticks }
    }

    /// Offset of tick `k` (0-based) from the day start.
    pub fn tick_offset(&self, k: u32) -> u64 {
        self.interval_ms * (k as u64 + 1)
    }

    /// Splits `count` over the ticks, remainder front-loaded.
    pub fn spread(&self, count: u64) -> Vec<u64> {
        let ticks = self.ticks as u64;
        let base = count / ticks;
        let extra = count % ticks;
        (0..ticks).map(|k| base + u64::from(k < extra)).collect()
    }
}

/// One transaction creation, relative to the start of its day.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Injection {
    pub offset_ms: u64,
    pub node: NodeId,
}

/// Creation events for one day, ordered by tick and then node id.
pub fn plan_day(
    day: u32,
    schedule: &LoadSchedule,
    policy: &BroadcastPolicy,
) -> Result<Vec<Injection>, ScheduleError> {
    let days = schedule.days();
    if day == 0 || day > days {
        return Err(ScheduleError::DayOutOfRange { day, days });
    }
    let shares: Vec<(NodeId, Vec<u64>)> = schedule
        .loads(day)
        .map(|(node, count)| (node, policy.spread(count)))
        .collect();
    let mut plan = Vec::with_capacity(schedule.day_total(day) as usize);
    for k in 0..policy.ticks {
        let offset_ms = policy.tick_offset(k);
        for (node, share) in &shares {
            for _ in 0..share[k as usize] {
                plan.push(Injection {
                    offset_ms,
                    node: *node,
                });
            }
        }
    }
    Ok(plan)
}

/// Pending transactions ordered by `(created_at, tx_id)`.
#[derive(Clone, Debug, Default)]
pub struct TxPool {
    pending: BTreeMap<(SimTime, TxId), Arc<Transaction>>,
    seen: HashSet<TxId>,
}

impl TxPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a transaction unless it was already seen (pending or removed).
    pub fn insert(&mut self, tx: Arc<Transaction>) -> bool {
        if !self.seen.insert(tx.id) {
            return false;
        }
        self.pending.insert(tx.fifo_key(), tx);
        true
    }

    /// Removes a transaction that was committed elsewhere and remembers it so
    /// a late copy is never re-pooled.
    pub fn retire(&mut self, tx: &Transaction) {
        self.seen.insert(tx.id);
        self.pending.remove(&tx.fifo_key());
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// First `capacity` pending transactions without removing them.
    pub fn peek_batch(&self, capacity: usize) -> Vec<Arc<Transaction>> {
        self.pending.values().take(capacity).cloned().collect()
    }

    /// Removes and returns up to `capacity` transactions in FIFO order.
    pub fn take_batch(&mut self, capacity: usize) -> Vec<Arc<Transaction>> {
        assert!(capacity > 0, "block capacity must be positive");
        let mut out = Vec::with_capacity(capacity.min(self.pending.len()));
        while out.len() < capacity {
            match self.pending.pop_first() {
                Some((_, tx)) => out.push(tx),
                None => break,
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tx(id: u64, at: u64, origin: u32) -> Arc<Transaction> {
        Arc::new(Transaction {
            id: TxId(id),
            origin: NodeId(origin),
            payload: String::new(),
            created_at: SimTime(at),
            day: 1,
        })
    }

    #[test]
    fn negative_count_names_cell() {
        let err = LoadSchedule::from_json_str(r#"{"days":[{"day":3,"loads":{"7":-3}}]}"#)
            .unwrap_err();
        match err {
            ScheduleError::NegativeCount { day, node, value } => {
                assert_eq!((day, node.as_str(), value), (3, "7", -3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_error_has_position() {
        let err = LoadSchedule::from_json_str("{\"days\": [\n  {\"day\": 1, }]}").unwrap_err();
        assert!(matches!(err, ScheduleError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn fractional_count_rejected() {
        assert!(matches!(
            LoadSchedule::from_json_str(r#"{"days":[{"day":1,"loads":{"1":2.5}}]}"#),
            Err(ScheduleError::BadCount { .. })
        ));
    }

    #[test]
    fn missing_days_are_zero() {
        let s = LoadSchedule::from_json_str(r#"{"days":[{"day":3,"loads":{"1":4}}]}"#).unwrap();
        assert_eq!(s.days(), 3);
        assert_eq!(s.day_total(1), 0);
        assert_eq!(s.day_total(3), 4);
    }

    #[test]
    fn spread_front_loads_remainder() {
        let p = BroadcastPolicy::new(1000, 4);
        assert_eq!(p.spread(10), vec![3, 3, 2, 2]);
        assert_eq!(p.spread(2), vec![1, 1, 0, 0]);
        assert_eq!(p.spread(0), vec![0, 0, 0, 0]);
    }

    #[test]
    fn plan_counts_and_offsets() {
        let s =
            LoadSchedule::from_json_str(r#"{"days":[{"day":1,"loads":{"1":5,"2":3}}]}"#).unwrap();
        let plan = plan_day(1, &s, &BroadcastPolicy::new(500, 2)).unwrap();
        assert_eq!(plan.len(), 8);
        assert!(plan.iter().all(|i| i.offset_ms >= 500));
        assert_eq!(plan.iter().filter(|i| i.offset_ms == 500).count(), 3 + 2);
        assert!(matches!(
            plan_day(2, &s, &BroadcastPolicy::new(500, 2)),
            Err(ScheduleError::DayOutOfRange { day: 2, days: 1 })
        ));
    }

    #[test]
    fn take_batch_small_pool() {
        let mut pool = TxPool::new();
        for i in 0..3 {
            pool.insert(tx(i, i, 1));
        }
        assert_eq!(pool.take_batch(10).len(), 3);
        assert!(pool.is_empty());
    }

    #[test]
    fn take_batch_orders_by_creation_then_id() {
        let mut pool = TxPool::new();
        for i in (0..15).rev() {
            pool.insert(tx(i, 100 - (i / 2), 1));
        }
        let batch = pool.take_batch(10);
        let mut all: Vec<(u64, u64)> = (0..15).map(|i| (100 - i / 2, i)).collect();
        all.sort();
        let expected: Vec<u64> = all[..10].iter().map(|&(_, id)| id).collect();
        assert_eq!(batch.iter().map(|t| t.id.0).collect::<Vec<_>>(), expected);
        assert_eq!(pool.len(), 5);
    }

    #[test]
    fn retired_transactions_are_not_repooled() {
        let mut pool = TxPool::new();
        let t = tx(1, 0, 1);
        pool.retire(&t);
        assert!(!pool.insert(t));
        assert!(pool.is_empty());
    }
}
