// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use permachain::message::MessageKind;
use permachain::nodes::ByzantineType::{self, *};
use permachain::nodes::NodeId;
use permachain::pbft::quorum_params;
use permachain::poa::poet_elect;
use permachain::report::DayEnd;
use permachain::rng::{Purpose, RngStream};
use permachain::{Protocol, RunConfig, Scenario, SimulationResult};
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn preset(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../cli/scenarios")
        .join(format!("{name}.json"));
    Scenario::from_json_str(&std::fs::read_to_string(&path).expect("preset file")).expect("preset parses")
}

fn run_scenario(s: &Scenario) -> SimulationResult {
    run(s.config.clone(), s.nodes.clone(), s.schedule.clone())
}

fn situation_load(total: u64) -> Vec<(u32, u64)> {
    spread(total, &(6..=15).collect::<Vec<_>>())
}

fn situation(faults: &[(u32, ByzantineType)], seed: u64, total: u64) -> SimulationResult {
    let mut cfg = preset("situation1").config;
    cfg.seed = seed;
    run(cfg, table(13, 2, faults), schedule(&[&situation_load(total)]))
}

fn benign_authorities(r: &SimulationResult) -> Vec<NodeId> {
    r.report
        .benign()
        .filter(|n| n.authority)
        .map(|n| n.node)
        .collect()
}

fn situation1() -> Outcome {
    let r = run_scenario(&preset("situation1"));
    let counts: BTreeMap<u32, u64> = r.report.benign().map(|n| (n.node.0, n.block_count)).collect();
    ensure!(counts.values().all(|&c| c == 0), "benign block counts {counts:?}");
    let started = Instant::now();
    let small = situation(&range(1, 5, Active), 1, 200);
    let wall = started.elapsed();
    ensure!(
        small.report.benign().all(|n| n.block_count == 0),
        "200-tx variant appended blocks on benign nodes"
    );
    ensure!(wall < Duration::from_secs(60), "200-tx variant took {wall:?}");
    Ok(format!("{} benign nodes at 0 blocks; 200-tx variant {wall:.2?}", counts.len()))
}

fn situation4() -> Outcome {
    let r = run_scenario(&preset("situation4"));
    let benign = benign(&r);
    let reference = digests(&r, benign[0]);
    for &n in &benign {
        ensure!(digests(&r, n) == reference, "node {n} digest list differs");
    }
    let scheduled = r.report.totals.txs_scheduled;
    for &n in &benign {
        let c = committed(&r, n).len() as u64;
        ensure!(c == scheduled, "node {n} committed {c}/{scheduled}");
    }
    Ok(format!(
        "{} benign nodes identical at {} blocks; {scheduled}/{scheduled} committed",
        benign.len(),
        reference.len()
    ))
}

fn situations2_3() -> Outcome {
    let seeds = 1..=10u64;
    let mut complete = 0;
    for seed in seeds.clone() {
        let r = situation(&range(1, 5, Passive), seed, 8868);
        let auths = benign_authorities(&r);
        if auths
            .iter()
            .all(|&n| committed(&r, n).len() as u64 == r.report.totals.txs_scheduled)
        {
            complete += 1;
        }
        let longest = auths
            .iter()
            .map(|&n| digests(&r, n))
            .max_by_key(|d| d.len())
            .unwrap();
        for f in r.report.benign().filter(|n| !n.authority) {
            ensure!(
                is_prefix(&digests(&r, f.node), &longest),
                "seed {seed}: follower {} is not a prefix",
                f.node
            );
        }
    }
    ensure!(complete >= 9, "5 passive: only {complete}/10 seeds committed everything");

    let (mut faulty_sum, mut clean_sum) = (0u64, 0u64);
    for seed in seeds {
        let r = situation(&range(1, 4, Passive), seed, 8868);
        let benign = benign(&r);
        let reference = digests(&r, benign[0]);
        for &n in &benign {
            ensure!(digests(&r, n) == reference, "4 passive, seed {seed}: node {n} differs");
        }
        let clean = situation(&[], seed, 8868);
        let completion = |r: &SimulationResult| r.report.days[0].completion_ms.expect("transactions committed");
        faulty_sum += completion(&r);
        clean_sum += completion(&clean);
    }
    ensure!(
        faulty_sum > clean_sum,
        "mean completion with 4 passive {} ms is not above baseline {} ms",
        faulty_sum / 10,
        clean_sum / 10
    );
    Ok(format!(
        "5 passive: {complete}/10 seeds complete, followers prefixes; 4 passive: mean completion {} ms vs {} ms",
        faulty_sum / 10,
        clean_sum / 10
    ))
}

fn view_changes() -> Outcome {
    let r = run_scenario(&preset("pbft-viewchange"));
    let reference = r.report.resolved.reference_node;
    let first = r.chains[&reference].get(1).cloned().ok_or("nothing committed")?;
    ensure!(first.view == 3, "first block committed in view {}", first.view);
    let mut views: Vec<u64> = r
        .report
        .view_changes
        .iter()
        .filter(|v| v.time <= first.proposed_at)
        .map(|v| v.new_view)
        .collect();
    views.sort();
    views.dedup();
    ensure!(views == [1, 2, 3], "views adopted before the first commit: {views:?}");
    ensure!(
        r.report.totals.view_changes == 3,
        "{} view changes in total",
        r.report.totals.view_changes
    );
    Ok("views 1, 2, 3 adopted; first block in view 3".into())
}

/// Consensus messages of a single fault-free pBFT block.
fn single_block(n: u32, cfg: RunConfig) -> (u64, u64, u64) {
    let mut cfg = cfg;
    cfg.empty_block_threshold = 1;
    let r = run(cfg, table(n, 0, &[]), schedule(&[&[]]));
    assert_eq!(r.report.totals.reference_blocks, 1);
    let m = &r.report.messages;
    (
        m.sent(MessageKind::PrePrepare),
        m.sent(MessageKind::Prepare),
        m.sent(MessageKind::Commit),
    )
}

fn message_law() -> Outcome {
    let mut seen = Vec::new();
    for n in [4u64, 7, 13] {
        let got = single_block(n as u32, quiet_config(Protocol::Pbft, 1));
        let want = (n - 1, (n - 1) * (n - 1), n * (n - 1));
        ensure!(got == want, "n={n}: got {got:?}, want {want:?}");
        seen.push(format!("n={n} {got:?}"));
    }
    Ok(seen.join("; "))
}

fn quorum() -> Outcome {
    let q = quorum_params(13);
    ensure!((q.f, q.quorum) == (4, 9), "n=13 gives {q:?}");
    for n in 1..=200usize {
        let q = quorum_params(n);
        let f = (n - 1) / 3;
        ensure!(q.f == f && q.quorum == 2 * f + 1, "n={n} gives {q:?}");
    }
    Ok("n=13 -> f=4, quorum=9; n in 1..=200 checked".into())
}

fn poa_law() -> Outcome {
    let r = run_scenario(&preset("poa-baseline"));
    let reference = r.report.resolved.reference_node;
    let blocks = r.chains[&reference].height();
    let msgs = r.report.messages.consensus_sent();
    ensure!(blocks > 0, "no blocks");
    ensure!(msgs == 11 * blocks, "{msgs} consensus messages for {blocks} blocks");
    let d = digests(&r, reference);
    for id in 1..=12 {
        ensure!(digests(&r, NodeId(id)) == d, "node {id} differs");
    }
    Ok(format!("{blocks} blocks, {msgs} messages (11 per block); 12 chains identical"))
}

fn poet_fairness() -> Outcome {
    let started = Instant::now();
    let authorities: Vec<NodeId> = (1..=5).map(NodeId).collect();
    let chi = ChiSquared::new(4.0).unwrap();
    let mut detail = Vec::new();
    for seed in [1u64, 2, 3] {
        let mut streams: BTreeMap<NodeId, RngStream> = authorities
            .iter()
            .map(|&n| (n, RngStream::new(seed, n, Purpose::PoetDraw)))
            .collect();
        let mut wins = [0u64; 5];
        for _ in 0..10_000 {
            let e = poet_elect(&authorities, 0.001, &mut streams);
            wins[(e.leader.0 - 1) as usize] += 1;
        }
        for (i, &w) in wins.iter().enumerate() {
            ensure!((1850..=2150).contains(&w), "seed {seed}: node {} won {w}", i + 1);
        }
        let stat: f64 = wins.iter().map(|&w| (w as f64 - 2000.0).powi(2) / 2000.0).sum();
        let p = 1.0 - chi.cdf(stat);
        ensure!(p > 0.01, "seed {seed}: chi-square p = {p:.4}");
        detail.push(format!("seed {seed} {wins:?} p={p:.3}"));
    }
    let wall = started.elapsed();
    ensure!(wall < Duration::from_secs(30), "took {wall:?}");
    Ok(detail.join("; "))
}

fn discontinuous_days() -> Outcome {
    let mut cfg = quiet_config(Protocol::Pbft, 5);
    cfg.block_capacity = 10;
    cfg.empty_block_threshold = 10;
    let r = run(cfg.clone(), table(4, 1, &[]), schedule(&[&[(1, 25)], &[], &[(2, 10)]]));
    let days = &r.report.days;
    ensure!(days.len() == 3, "{} days", days.len());
    let shape: Vec<(u64, u64)> = days.iter().map(|d| (d.nonempty_blocks, d.empty_blocks)).collect();
    ensure!(shape[0] == (3, 10), "day 1 blocks {:?}", shape[0]);
    ensure!(shape[1] == (0, 10), "day 2 blocks {:?}", shape[1]);
    ensure!(shape[2] == (1, 10), "day 3 blocks {:?}", shape[2]);
    for d in days {
        let start = (d.day as u64 - 1) * cfg.day_length_ms;
        ensure!(d.start.0 == start, "day {} starts at {}", d.day, d.start.0);
        ensure!(d.ended_by == DayEnd::EmptyBlocks, "day {} ended by {:?}", d.day, d.ended_by);
        ensure!(d.end.0 < start + cfg.day_length_ms, "day {} overran", d.day);
    }
    Ok(format!("blocks per day {shape:?}; days start at multiples of {} ms", cfg.day_length_ms))
}

fn determinism() -> Outcome {
    let mut checked = Vec::new();
    for name in ["situation2", "pbft-viewchange", "poa-baseline", "poet-baseline"] {
        let s = preset(name);
        let a = run_scenario(&s).report;
        let b = run_scenario(&s).report;
        ensure!(a.to_json().unwrap() == b.to_json().unwrap(), "{name}: JSON differs");
        ensure!(
            a.timeseries_csv().unwrap() == b.timeseries_csv().unwrap(),
            "{name}: CSV differs"
        );
        checked.push(name);
    }
    Ok(format!("byte-identical reruns of {}", checked.join(", ")))
}

fn scaling() -> Outcome {
    let total = |n: u32| -> (u64, Duration) {
        let started = Instant::now();
        let (pp, p, c) = single_block(n, permachain::RunConfig {
            seed: 3,
            ..RunConfig::default()
        });
        (pp + p + c, started.elapsed())
    };
    let law = |n: u64| (n - 1) + (n - 1) * (n - 1) + n * (n - 1);
    let (m13, w13) = total(13);
    let (m22, w22) = total(22);
    let expected = law(22) as f64 / law(13) as f64;
    let measured = m22 as f64 / m13 as f64;
    let err = (measured / expected - 1.0).abs();
    ensure!(err <= 0.10, "ratio {measured:.3} vs {expected:.3}");
    Ok(format!(
        "messages {m22}/{m13} = {measured:.3} vs law {expected:.3}; wall {w22:.2?} vs {w13:.2?}"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("situation 1: no benign blocks under 5 active faults", situation1),
        ("situation 4: identical benign chains, all txs committed", situation4),
        ("situations 2/3: liveness, follower prefixes, slower completion", situations2_3),
        ("view change: three view changes before the first commit", view_changes),
        ("pBFT message-count law", message_law),
        ("quorum arithmetic", quorum),
        ("PoA single-round law and consistency", poa_law),
        ("PoET fairness", poet_fairness),
        ("discontinuous multi-day simulation", discontinuous_days),
        ("determinism", determinism),
        ("message scaling n=22 vs n=13", scaling),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1)
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
