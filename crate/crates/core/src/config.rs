// SPDX-License-Identifier: Apache-2.0

//! Run configuration as read from JSON.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{ProcessingDelays, FABRIC_PBFT_PRESET};
use crate::network::LatencyConfig;
use crate::fault::FaultConfig;
use crate::nodes::{AuthorityRule, NodeId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    #[default]
    Pbft,
    Poa,
    Poet,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Pbft => "pbft",
            Protocol::Poa => "poa",
            Protocol::Poet => "poet",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Protocol {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pbft" => Ok(Protocol::Pbft),
            "poa" => Ok(Protocol::Poa),
            "poet" => Ok(Protocol::Poet),
            other => Err(ConfigError::Invalid {
                field: "protocol",
                reason: format!("unknown protocol {other:?} (expected pbft, poa or poet)"),
            }),
        }
    }
}

/// Processing delays, either a named preset or explicit distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProcessingSpec {
    Preset(String),
    Custom(ProcessingDelays),
}

impl Default for ProcessingSpec {
    fn default() -> Self {
        ProcessingSpec::Preset(FABRIC_PBFT_PRESET.to_string())
    }
}

impl ProcessingSpec {
    pub fn resolve(&self) -> Result<ProcessingDelays, ConfigError> {
        match self {
            ProcessingSpec::Preset(name) if name == FABRIC_PBFT_PRESET => {
                Ok(ProcessingDelays::fabric_pbft_preset())
            }
            ProcessingSpec::Preset(name) if name == "none" => Ok(ProcessingDelays::none()),
            ProcessingSpec::Preset(name) => Err(ConfigError::Invalid {
                field: "processing",
                reason: format!("unknown preset {name:?}"),
            }),
            ProcessingSpec::Custom(d) => Ok(d.clone()),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl From<serde_json::Error> for ConfigError {
    fn from(e: serde_json::Error) -> Self {
        ConfigError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

fn d_interval() -> u64 {
    1000
}
fn d_capacity() -> usize {
    100
}
fn d_threshold() -> u32 {
    10
}
fn d_day() -> u64 {
    86_400_000
}
fn d_ticks() -> u32 {
    1
}
fn d_drop() -> f64 {
    0.4
}
fn d_sampling() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_interval")]
    pub block_interval_ms: u64,
    #[serde(default = "d_capacity")]
    pub block_capacity: usize,
    /// Consecutive empty committed blocks that end a day.
    #[serde(default = "d_threshold")]
    pub empty_block_threshold: u32,
    #[serde(default = "d_day")]
    pub day_length_ms: u64,
    /// Spacing of transaction injection ticks. Defaults to the block interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_broadcast_interval_ms: Option<u64>,
    #[serde(default = "d_ticks")]
    pub tx_ticks_per_day: u32,
    /// Base pBFT view-change timeout. Defaults to ten mean network latencies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pbft_timeout_ms: Option<u64>,
    /// PoET lottery rate per millisecond. Defaults to one over the block
    /// interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poet_rate: Option<f64>,
    #[serde(default = "d_drop")]
    pub drop_prob: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub drop_prob_overrides: BTreeMap<NodeId, f64>,
    #[serde(default)]
    pub latency: LatencyConfig,
    #[serde(default)]
    pub processing: ProcessingSpec,
    /// Keep one raw propagation record in every `record_sampling`.
    #[serde(default = "d_sampling")]
    pub record_sampling: u64,
    #[serde(default)]
    pub authority_rule: AuthorityRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transactions: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.block_interval_ms == 0 {
            return Err(invalid("block_interval_ms", "must be positive"));
        }
        if self.block_capacity == 0 {
            return Err(invalid("block_capacity", "must be at least 1"));
        }
        if self.empty_block_threshold == 0 {
            return Err(invalid("empty_block_threshold", "must be at least 1"));
        }
        if self.day_length_ms == 0 {
            return Err(invalid("day_length_ms", "must be positive"));
        }
        if self.tx_ticks_per_day == 0 {
            return Err(invalid("tx_ticks_per_day", "must be at least 1"));
        }
        if self.tx_broadcast_interval_ms == Some(0) {
            return Err(invalid("tx_broadcast_interval_ms", "must be positive"));
        }
        let last_tick = self
            .tx_interval_ms()
            .saturating_mul(self.tx_ticks_per_day as u64);
        if last_tick >= self.day_length_ms {
            return Err(invalid(
                "tx_ticks_per_day",
                format!("last injection at {last_tick} ms does not fit in the day"),
            ));
        }
        if self.pbft_timeout_ms == Some(0) {
            return Err(invalid("pbft_timeout_ms", "must be positive"));
        }
        if let Some(rate) = self.poet_rate {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(invalid("poet_rate", format!("{rate} is not a positive rate")));
            }
        }
        self.faults()
            .validate()
            .map_err(|e| invalid("drop_prob", e.to_string()))?;
        if self.record_sampling == 0 {
            return Err(invalid("record_sampling", "must be at least 1"));
        }
        self.latency
            .validate()
            .map_err(|e| invalid("latency", e.to_string()))?;
        let processing = self.processing.resolve()?;
        for m in processing.models() {
            m.validate().map_err(|e| invalid("processing", e.to_string()))?;
        }
        if let AuthorityRule::LocationIdBelow(0) = self.authority_rule {
            return Err(invalid("authority_rule", "location bound 0 selects no authority"));
        }
        Ok(())
    }

    pub fn faults(&self) -> FaultConfig {
        FaultConfig {
            drop_prob: self.drop_prob,
            drop_prob_overrides: self.drop_prob_overrides.clone(),
        }
    }

    pub fn tx_interval_ms(&self) -> u64 {
        self.tx_broadcast_interval_ms
            .unwrap_or(self.block_interval_ms)
    }

    pub fn timeout_ms(&self) -> u64 {
        self.pbft_timeout_ms.unwrap_or_else(|| {
            crate::dist::round_ms(10.0 * self.latency.mean_ms()).max(1)
        })
    }

    pub fn poet_rate(&self) -> f64 {
        self.poet_rate
            .unwrap_or(1.0 / self.block_interval_ms as f64)
    }
}
