// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use permachain::config::ProcessingSpec;
use permachain::network::LatencyConfig;
use permachain::nodes::{ByzantineType, NodeConfig, NodeId, NodeTable};
use permachain::{LoadSchedule, Protocol, RunConfig, SimulationResult};

/// `authorities` authority nodes numbered from 1, then `followers` more.
/// `faults` assigns Byzantine types by node id.
pub fn table(authorities: u32, followers: u32, faults: &[(u32, ByzantineType)]) -> NodeTable {
    let kinds: BTreeMap<u32, ByzantineType> = faults.iter().copied().collect();
    let nodes = (1..=authorities + followers)
        .map(|i| NodeConfig {
            id: NodeId(i),
            authority: i <= authorities,
            location: format!("site{}", i % 3),
            data: None,
            byzantine: kinds.get(&i).copied().unwrap_or(ByzantineType::Honest),
        })
        .collect();
    NodeTable { nodes }
}

pub fn range(lo: u32, hi: u32, kind: ByzantineType) -> Vec<(u32, ByzantineType)> {
    (lo..=hi).map(|i| (i, kind)).collect()
}

/// One entry per day: `(node, count)` loads.
pub fn schedule(days: &[&[(u32, u64)]]) -> LoadSchedule {
    LoadSchedule::from_counts(
        days.iter()
            .enumerate()
            .map(|(d, loads)| {
                (
                    d as u32 + 1,
                    loads.iter().map(|&(n, c)| (NodeId(n), c)).collect(),
                )
            })
            .collect(),
    )
}

/// Spreads `total` transactions as evenly as possible over `origins`.
pub fn spread(total: u64, origins: &[u32]) -> Vec<(u32, u64)> {
    let k = origins.len() as u64;
    origins
        .iter()
        .enumerate()
        .map(|(i, &n)| (n, total / k + u64::from((i as u64) < total % k)))
        .collect()
}

pub fn config(protocol: Protocol, seed: u64) -> RunConfig {
    RunConfig {
        protocol,
        seed,
        ..RunConfig::default()
    }
}

/// Constant latency, no processing delay.
pub fn quiet_config(protocol: Protocol, seed: u64) -> RunConfig {
    RunConfig {
        latency: LatencyConfig::constant(10.0),
        processing: ProcessingSpec::Preset("none".into()),
        ..config(protocol, seed)
    }
}

pub fn run(cfg: RunConfig, table: NodeTable, schedule: LoadSchedule) -> SimulationResult {
    permachain::Simulation::new(cfg, table, schedule)
        .expect("valid inputs")
        .run_all()
        .expect("run completes")
}

pub fn benign(result: &SimulationResult) -> Vec<NodeId> {
    result.report.benign().map(|n| n.node).collect()
}

pub fn digests(result: &SimulationResult, node: NodeId) -> Vec<permachain::Digest> {
    result.chains[&node].digests()
}

/// Distinct transaction ids on a node's chain.
pub fn committed(result: &SimulationResult, node: NodeId) -> BTreeSet<u64> {
    result.chains[&node]
        .blocks()
        .iter()
        .flat_map(|b| b.txs.iter().map(|t| t.id.0))
        .collect()
}

pub fn is_prefix<T: PartialEq>(short: &[T], long: &[T]) -> bool {
    short.len() <= long.len() && short.iter().zip(long).all(|(a, b)| a == b)
}
