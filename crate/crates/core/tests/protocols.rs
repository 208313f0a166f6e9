// SPDX-License-Identifier: Apache-2.0

mod common;

use std::sync::Arc;

use common::*;
use permachain::message::MessageKind;
use permachain::nodes::ByzantineType::*;
use permachain::nodes::NodeId;
use permachain::poa::{leader_for_height, RoundRobinSchedule};
use permachain::Protocol;

#[test]
fn poa_leaders_follow_round_robin() {
    let r = run(
        quiet_config(Protocol::Poa, 3),
        table(5, 2, &[]),
        schedule(&[&[(6, 40), (7, 13)]]),
    );
    let schedule = RoundRobinSchedule {
        authorities: (1..=5).map(NodeId).collect::<Arc<[NodeId]>>(),
        block_interval_ms: 1000,
    };
    let chain = &r.chains[&r.report.resolved.reference_node];
    assert!(chain.height() > 10);
    for b in &chain.blocks()[1..] {
        assert_eq!(b.proposer, leader_for_height(b.height, &schedule), "height {}", b.height);
    }
}

#[test]
fn poa_sends_one_message_per_peer_per_block() {
    for (auth, follow) in [(3u32, 0u32), (5, 2), (7, 5)] {
        let r = run(
            config(Protocol::Poa, 1),
            table(auth, follow, &[]),
            schedule(&[&[(1, 30)]]),
        );
        let blocks = r.chains[&NodeId(1)].height();
        let n = u64::from(auth + follow);
        assert_eq!(r.report.messages.sent(MessageKind::Block), (n - 1) * blocks);
        assert_eq!(r.report.messages.consensus_sent(), (n - 1) * blocks);
    }
}

#[test]
fn poa_chains_identical_and_complete() {
    let r = run(
        config(Protocol::Poa, 8),
        table(7, 5, &[]),
        schedule(&[&spread(500, &[8, 9, 10, 11, 12])]),
    );
    let reference = digests(&r, NodeId(1));
    for id in 1..=12 {
        assert_eq!(digests(&r, NodeId(id)), reference);
        assert_eq!(committed(&r, NodeId(id)).len(), 500);
    }
}

#[test]
fn poa_ignores_byzantine_column_with_warning() {
    let r = run(
        config(Protocol::Poa, 2),
        table(4, 1, &[(1, Active), (2, Passive)]),
        schedule(&[&[(5, 20)]]),
    );
    assert!(!r.report.warnings.is_empty());
    assert_eq!(r.report.messages.dropped.values().sum::<u64>(), 0);
    let reference = digests(&r, NodeId(3));
    for id in 1..=5 {
        assert_eq!(digests(&r, NodeId(id)), reference);
    }
}

#[test]
fn poet_blocks_come_from_elected_leaders() {
    let r = run(
        config(Protocol::Poet, 11),
        table(5, 2, &[]),
        schedule(&[&[(6, 120)], &[(7, 40)]]),
    );
    let chain = &r.chains[&NodeId(1)];
    assert!(chain.height() > 0);
    for b in &chain.blocks()[1..] {
        let election = r
            .report
            .poet_elections
            .iter()
            .filter(|e| e.height == b.height)
            .next_back()
            .unwrap_or_else(|| panic!("no election for height {}", b.height));
        assert_eq!(election.leader, b.proposer, "height {}", b.height);
        assert!(election.wait_ms >= 1);
        let min = election
            .draws
            .iter()
            .map(|d| d.wait)
            .fold(f64::INFINITY, f64::min);
        let winner = election.draws.iter().find(|d| d.node == election.leader).unwrap();
        assert_eq!(winner.wait, min);
    }
    let reference = digests(&r, NodeId(1));
    for id in 1..=7 {
        assert_eq!(digests(&r, NodeId(id)), reference);
    }
    assert_eq!(committed(&r, NodeId(7)).len(), 160);
}

#[test]
fn poet_leaders_vary() {
    let r = run(
        config(Protocol::Poet, 4),
        table(5, 0, &[]),
        schedule(&[&[(1, 300)]]),
    );
    let proposers: std::collections::BTreeSet<NodeId> = r.chains[&NodeId(1)].blocks()[1..]
        .iter()
        .map(|b| b.proposer)
        .collect();
    assert!(proposers.len() >= 3, "{proposers:?}");
}

#[test]
fn pbft_fault_free_commits_everything_on_every_node() {
    let r = run(
        config(Protocol::Pbft, 21),
        table(7, 3, &[]),
        schedule(&[&spread(700, &[8, 9, 10])]),
    );
    let reference = digests(&r, NodeId(1));
    for id in 1..=10 {
        assert_eq!(digests(&r, NodeId(id)), reference, "node {id}");
        assert_eq!(committed(&r, NodeId(id)).len(), 700);
    }
    assert_eq!(r.report.totals.view_changes, 0);
}

#[test]
fn pbft_active_primary_is_replaced() {
    let r = run(
        config(Protocol::Pbft, 2),
        table(4, 0, &[(1, Active)]),
        schedule(&[&[(2, 10)]]),
    );
    let chain = &r.chains[&NodeId(2)];
    assert!(chain.height() > 0);
    assert!(chain.blocks()[1..].iter().all(|b| b.proposer != NodeId(1)));
    assert_eq!(committed(&r, NodeId(2)).len(), 10);
}

#[test]
fn pbft_tampering_majority_blocks_all_progress() {
    let r = run(
        config(Protocol::Pbft, 6),
        table(4, 1, &[(1, Active), (2, Active)]),
        schedule(&[&[(5, 10)]]),
    );
    for n in r.report.benign() {
        assert_eq!(n.block_count, 0, "node {}", n.node);
    }
}

#[test]
fn message_law_holds_under_random_latency() {
    for n in [4u32, 7, 10] {
        let mut cfg = config(Protocol::Pbft, 12);
        cfg.empty_block_threshold = 1;
        let r = run(cfg, table(n, 0, &[]), schedule(&[&[]]));
        let m = &r.report.messages;
        let n = u64::from(n);
        assert_eq!(m.sent(MessageKind::PrePrepare), n - 1);
        assert_eq!(m.sent(MessageKind::Prepare), (n - 1) * (n - 1));
        assert_eq!(m.sent(MessageKind::Commit), n * (n - 1));
    }
}
