// SPDX-License-Identifier: Apache-2.0

//! Node identities and the node input table.
//!
//! The table has the columns `NodeID, Authority, Location, Data, Byzantine`
//! and is accepted either as CSV (with that header) or as JSON:
//!
//! ```json
//! {"nodes": [{"id": 1, "authority": 1, "location": "Portland", "data": null, "byzantine": 2}]}
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum ByzantineType {
    #[default]
    Honest,
    /// Tampers with the digests of the consensus messages it sends.
    Active,
    /// Drops outbound messages with a fixed probability.
    Passive,
}

impl ByzantineType {
    pub fn code(self) -> u8 {
        match self {
            ByzantineType::Honest => 0,
            ByzantineType::Active => 1,
            ByzantineType::Passive => 2,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(ByzantineType::Honest),
            1 => Some(ByzantineType::Active),
            2 => Some(ByzantineType::Passive),
            _ => None,
        }
    }

    pub fn is_honest(self) -> bool {
        self == ByzantineType::Honest
    }
}

impl Serialize for ByzantineType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for ByzantineType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let code = i64::deserialize(d)?;
        ByzantineType::from_code(code)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid Byzantine code {code}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub id: NodeId,
    #[serde(with = "flag01")]
    pub authority: bool,
    pub location: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    pub byzantine: ByzantineType,
}

mod flag01 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!(
                "authority flag {other} must be 0 or 1"
            ))),
        }
    }
}

/// How the authority set is derived from the table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorityRule {
    /// Use the binary `Authority` column.
    #[default]
    Column,
    /// Nodes whose location id is below the bound are authorities. Location
    /// ids are assigned 1, 2, ... in order of first appearance in the table.
    LocationIdBelow(u32),
}

#[derive(Debug, Error)]
pub enum NodeTableError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("node table JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("node table CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("row {row}: duplicate node id {id}")]
    DuplicateId { row: usize, id: NodeId },
    #[error("node table has no authorities")]
    NoAuthorities,
    #[error("node table is empty")]
    Empty,
    #[error("unsupported node table extension {0:?} (expected .json or .csv)")]
    Extension(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTable {
    pub nodes: Vec<NodeConfig>,
}

/// One row as written in either input format, before validation.
#[derive(Debug, Deserialize)]
struct RawRow {
    #[serde(alias = "NodeID")]
    id: i64,
    #[serde(alias = "Authority")]
    authority: i64,
    #[serde(alias = "Location")]
    location: String,
    #[serde(alias = "Data", default)]
    data: Option<String>,
    #[serde(alias = "Byzantine")]
    byzantine: i64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawJson {
    Wrapped { nodes: Vec<RawRow> },
    Bare(Vec<RawRow>),
}

impl NodeTable {
    pub fn from_json_str(text: &str, rule: AuthorityRule) -> Result<Self, NodeTableError> {
        let rows = match serde_json::from_str::<RawJson>(text)? {
            RawJson::Wrapped { nodes } => nodes,
            RawJson::Bare(nodes) => nodes,
        };
        Self::from_raw(rows, rule)
    }

    pub fn from_csv_str(text: &str, rule: AuthorityRule) -> Result<Self, NodeTableError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (i, record) in reader.deserialize::<RawRow>().enumerate() {
            let row = record.map_err(|e| NodeTableError::Row {
                row: i + 1,
                message: e.to_string(),
            })?;
            rows.push(row);
        }
        Self::from_raw(rows, rule)
    }

    /// Reads a `.json` or `.csv` node table.
    pub fn load(path: &Path, rule: AuthorityRule) -> Result<Self, NodeTableError> {
        let text = std::fs::read_to_string(path).map_err(|source| NodeTableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        match ext.as_str() {
            "json" => Self::from_json_str(&text, rule),
            "csv" => Self::from_csv_str(&text, rule),
            other => Err(NodeTableError::Extension(other.to_string())),
        }
    }

    fn from_raw(rows: Vec<RawRow>, rule: AuthorityRule) -> Result<Self, NodeTableError> {
        if rows.is_empty() {
            return Err(NodeTableError::Empty);
        }
        let mut seen = BTreeSet::new();
        let mut locations: Vec<String> = Vec::new();
        let mut nodes = Vec::with_capacity(rows.len());
        for (i, raw) in rows.into_iter().enumerate() {
            let row = i + 1;
            let id = u32::try_from(raw.id)
                .ok()
                .filter(|&id| id > 0)
                .map(NodeId)
                .ok_or_else(|| NodeTableError::Row {
                    row,
                    message: format!("node id {} must be a positive integer", raw.id),
                })?;
            if !seen.insert(id) {
                return Err(NodeTableError::DuplicateId { row, id });
            }
            let column_authority = match raw.authority {
                0 => false,
                1 => true,
                other => {
                    return Err(NodeTableError::Row {
                        row,
                        message: format!("authority flag {other} must be 0 or 1"),
                    })
                }
            };
            let byzantine =
                ByzantineType::from_code(raw.byzantine).ok_or_else(|| NodeTableError::Row {
                    row,
                    message: format!("invalid Byzantine code {} (expected 0, 1 or 2)", raw.byzantine),
                })?;
            let location_id = match locations.iter().position(|l| *l == raw.location) {
                Some(pos) => pos + 1,
                None => {
                    locations.push(raw.location.clone());
                    locations.len()
                }
            };
            let authority = match rule {
                AuthorityRule::Column => column_authority,
                AuthorityRule::LocationIdBelow(bound) => (location_id as u64) < bound as u64,
            };
            let data = raw.data.filter(|d| !d.is_empty());
            nodes.push(NodeConfig {
                id,
                authority,
                location: raw.location,
                data,
                byzantine,
            });
        }
        let table = NodeTable { nodes };
        if table.authorities().is_empty() {
            return Err(NodeTableError::NoAuthorities);
        }
        Ok(table)
    }

    pub fn get(&self, id: NodeId) -> Option<&NodeConfig> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.get(id).is_some()
    }

    /// Authority ids in ascending order; this order drives leader rotation.
    pub fn authorities(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| n.authority)
            .map(|n| n.id)
            .collect();
        ids.sort();
        ids
    }

    pub fn followers(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| !n.authority)
            .map(|n| n.id)
            .collect();
        ids.sort();
        ids
    }

    pub fn ids(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self.nodes.iter().map(|n| n.id).collect();
        ids.sort();
        ids
    }

    pub fn byzantine_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.byzantine.is_honest()).count()
    }

    /// Serializes the table as CSV with the canonical header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("NodeID,Authority,Location,Data,Byzantine\n");
        for n in &self.nodes {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                n.id,
                u8::from(n.authority),
                n.location,
                n.data.as_deref().unwrap_or(""),
                n.byzantine.code()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAPER_ROWS: &str = "\
NodeID,Authority,Location,Data,Byzantine
1,1,Portland,,2
2,1,Minneapolis,,1
3,1,Honolulu,,0
4,1,Yokohama,,0
5,1,Hanoi,,0
6,1,San Diego,,0
7,1,Philadelphia,,0
8,0,Chicago,,0
9,0,Pittsburgh,,0
10,0,Newark,,0
11,0,Vienna,,0
12,0,Taipei,,0
";

    #[test]
    fn paper_rows_parse() {
        let table = NodeTable::from_csv_str(PAPER_ROWS, AuthorityRule::Column).unwrap();
        let n1 = table.get(NodeId(1)).unwrap();
        assert!(n1.authority);
        assert_eq!(n1.location, "Portland");
        assert_eq!(n1.byzantine, ByzantineType::Passive);
        let n2 = table.get(NodeId(2)).unwrap();
        assert!(n2.authority);
        assert_eq!(n2.byzantine, ByzantineType::Active);
        assert_eq!(table.authorities().len(), 7);
        assert_eq!(table.followers().len(), 5);
        assert_eq!(n1.data, None);
    }

    #[test]
    fn json_and_csv_agree() {
        let csv = NodeTable::from_csv_str(PAPER_ROWS, AuthorityRule::Column).unwrap();
        let json = serde_json::to_string(&csv).unwrap();
        let back = NodeTable::from_json_str(&json, AuthorityRule::Column).unwrap();
        assert_eq!(back, csv);
        let bare = r#"[{"NodeID": 3, "Authority": 1, "Location": "Honolulu", "Byzantine": 0}]"#;
        let t = NodeTable::from_json_str(bare, AuthorityRule::Column).unwrap();
        assert_eq!(t.authorities(), vec![NodeId(3)]);
    }

    #[test]
    fn byzantine_code_3_rejected() {
        let text = "NodeID,Authority,Location,Data,Byzantine\n1,1,Portland,,0\n2,1,Hanoi,,3\n";
        let err = NodeTable::from_csv_str(text, AuthorityRule::Column).unwrap_err();
        match err {
            NodeTableError::Row { row, message } => {
                assert_eq!(row, 2);
                assert!(message.contains("Byzantine"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let text = "NodeID,Authority,Location,Data,Byzantine\n1,1,A,,0\n1,0,B,,0\n";
        assert!(matches!(
            NodeTable::from_csv_str(text, AuthorityRule::Column),
            Err(NodeTableError::DuplicateId { row: 2, id: NodeId(1) })
        ));
    }

    #[test]
    fn zero_authorities_rejected() {
        let text = "NodeID,Authority,Location,Data,Byzantine\n1,0,A,,0\n";
        assert!(matches!(
            NodeTable::from_csv_str(text, AuthorityRule::Column),
            Err(NodeTableError::NoAuthorities)
        ));
    }

    #[test]
    fn location_rule_overrides_column() {
        let table =
            NodeTable::from_csv_str(PAPER_ROWS, AuthorityRule::LocationIdBelow(4)).unwrap();
        assert_eq!(table.authorities(), vec![NodeId(1), NodeId(2), NodeId(3)]);
    }

    #[test]
    fn to_csv_round_trips() {
        let table = NodeTable::from_csv_str(PAPER_ROWS, AuthorityRule::Column).unwrap();
        let again = NodeTable::from_csv_str(&table.to_csv(), AuthorityRule::Column).unwrap();
        assert_eq!(again, table);
    }
}
