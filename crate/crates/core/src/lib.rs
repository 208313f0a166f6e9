// SPDX-License-Identifier: Apache-2.0

//! Deterministic discrete-event simulator for permissioned blockchains
//! running pBFT, a simplified proof of authority, or proof of elapsed time.
//!
//! A run is configured by a [`RunConfig`], a [`NodeTable`] and a
//! [`LoadSchedule`], executed by a [`Simulation`] and summarized in a
//! [`SimReport`].

pub mod action;
pub mod config;
pub mod dist;
pub mod engine;
pub mod fault;
pub mod ledger;
pub mod message;
pub mod network;
pub mod nodes;
pub mod orchestrator;
pub mod pbft;
pub mod poa;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod workload;

pub use config::{ConfigError, Protocol, RunConfig};
pub use engine::SimTime;
pub use ledger::{Block, Chain, Digest};
pub use nodes::{ByzantineType, NodeConfig, NodeId, NodeTable};
pub use orchestrator::{SimError, Simulation, SimulationResult, StopTracker};
pub use report::{DayResult, SimReport};
pub use scenario::Scenario;
pub use workload::LoadSchedule;
