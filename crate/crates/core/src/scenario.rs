// SPDX-License-Identifier: Apache-2.0

//! Self-contained scenario bundles: a config, a node table and a load
//! schedule in one JSON document.

use serde::Deserialize;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::nodes::{NodeTable, NodeTableError};
use crate::orchestrator::{SimError, Simulation};
use crate::workload::{LoadSchedule, ScheduleError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scenario config: {0}")]
    Config(#[from] ConfigError),
    #[error("scenario nodes: {0}")]
    Nodes(#[from] NodeTableError),
    #[error("scenario transactions: {0}")]
    Schedule(#[from] ScheduleError),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    config: serde_json::Value,
    nodes: serde_json::Value,
    transactions: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub config: RunConfig,
    pub nodes: NodeTable,
    pub schedule: LoadSchedule,
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = serde_json::from_str(text)?;
        let config = if raw.config.is_null() {
            RunConfig::default()
        } else {
            RunConfig::from_json_str(&raw.config.to_string())?
        };
        let nodes = NodeTable::from_json_str(&raw.nodes.to_string(), config.authority_rule)?;
        let schedule = LoadSchedule::from_json_str(&raw.transactions.to_string())?;
        schedule.validate_nodes(&nodes)?;
        Ok(Scenario {
            name: raw.name,
            description: raw.description,
            config,
            nodes,
            schedule,
        })
    }

    pub fn simulation(&self) -> Result<Simulation, SimError> {
        Simulation::new(self.config.clone(), self.nodes.clone(), self.schedule.clone())
    }
}
