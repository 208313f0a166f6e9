// SPDX-License-Identifier: Apache-2.0

//! Transactions, blocks, digests and per-node chains.
//!
//! Digests are FNV-1a 64 over the canonical block encoding documented in
//! `docs/canonical-serialization.md`. There is no cryptography anywhere: the
//! only property that matters is that a tampered digest never verifies.

use std::fmt;
use std::hash::Hasher;
use std::sync::Arc;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::DelayModel;
use crate::engine::SimTime;
use crate::nodes::NodeId;
use crate::rng::RngStream;

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct TxId(pub u64);

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub id: TxId,
    pub origin: NodeId,
    pub payload: String,
    pub created_at: SimTime,
    pub day: u32,
}

impl Transaction {
    /// Ordering key used by transaction pools.
    pub fn fifo_key(&self) -> (SimTime, TxId) {
        (self.created_at, self.id)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub u64);

impl Digest {
    pub const ZERO: Digest = Digest(0);

    pub fn to_hex(self) -> String {
        format!("{:016x}", self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        if s.len() != 16 {
            return None;
        }
        u64::from_str_radix(s, 16).ok().map(Digest)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 16 hex digits"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub view: u64,
    pub proposer: NodeId,
    pub parent_digest: Digest,
    pub txs: Vec<Arc<Transaction>>,
    pub proposed_at: SimTime,
    pub digest: Digest,
}

/// Appends the canonical encoding of every field except `digest`.
pub fn encode_canonical(
    out: &mut Vec<u8>,
    height: u64,
    view: u64,
    proposer: NodeId,
    parent: Digest,
    proposed_at: SimTime,
    txs: &[Arc<Transaction>],
) {
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&view.to_le_bytes());
    out.extend_from_slice(&proposer.0.to_le_bytes());
    out.extend_from_slice(&parent.0.to_le_bytes());
    out.extend_from_slice(&proposed_at.0.to_le_bytes());
    out.extend_from_slice(&(txs.len() as u32).to_le_bytes());
    for tx in txs {
        out.extend_from_slice(&tx.id.0.to_le_bytes());
        out.extend_from_slice(&tx.origin.0.to_le_bytes());
        out.extend_from_slice(&tx.created_at.0.to_le_bytes());
        out.extend_from_slice(&tx.day.to_le_bytes());
        out.extend_from_slice(&(tx.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(tx.payload.as_bytes());
    }
}

pub fn compute_digest(
    height: u64,
    view: u64,
    proposer: NodeId,
    parent: Digest,
    proposed_at: SimTime,
    txs: &[Arc<Transaction>],
) -> Digest {
    let mut buf = Vec::with_capacity(44 + txs.len() * 48);
    encode_canonical(&mut buf, height, view, proposer, parent, proposed_at, txs);
    let mut hasher = FnvHasher::default();
    hasher.write(&buf);
    Digest(hasher.finish())
}

impl Block {
    /// Builds a block and seals it with its digest.
    pub fn new(
        height: u64,
        view: u64,
        proposer: NodeId,
        parent_digest: Digest,
        txs: Vec<Arc<Transaction>>,
        proposed_at: SimTime,
    ) -> Block {
        let digest = compute_digest(height, view, proposer, parent_digest, proposed_at, &txs);
        Block {
            height,
            view,
            proposer,
            parent_digest,
            txs,
            proposed_at,
            digest,
        }
    }

    /// Height 0, view 0, proposer 0, zero parent, no transactions, time 0.
    pub fn genesis() -> Block {
        Block::new(0, 0, NodeId(0), Digest::ZERO, Vec::new(), SimTime::ZERO)
    }

    pub fn recompute_digest(&self) -> Digest {
        compute_digest(
            self.height,
            self.view,
            self.proposer,
            self.parent_digest,
            self.proposed_at,
            &self.txs,
        )
    }

    pub fn verifies(&self) -> bool {
        self.recompute_digest() == self.digest
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("parent digest {got} does not match tip {tip}")]
    ParentMismatch { tip: Digest, got: Digest },
    #[error("height {got} does not follow tip height {tip}")]
    HeightGap { tip: u64, got: u64 },
    #[error("block digest {0} does not verify")]
    DigestInvalid(Digest),
}

#[derive(Clone, Debug)]
pub struct Chain {
    owner: NodeId,
    blocks: Vec<Arc<Block>>,
}

impl Chain {
    pub fn new(owner: NodeId) -> Chain {
        Chain {
            owner,
            blocks: vec![Arc::new(Block::genesis())],
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn tip(&self) -> &Arc<Block> {
        self.blocks.last().expect("chain always holds genesis")
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    /// All blocks from genesis.
    pub fn blocks(&self) -> &[Arc<Block>] {
        &self.blocks
    }

    pub fn get(&self, height: u64) -> Option<&Arc<Block>> {
        self.blocks.get(height as usize)
    }

    /// Checks a candidate block against the tip without appending it.
    pub fn check(&self, block: &Block) -> Result<(), ChainError> {
        let tip = self.tip();
        if block.height != tip.height + 1 {
            return Err(ChainError::HeightGap {
                tip: tip.height,
                got: block.height,
            });
        }
        if block.parent_digest != tip.digest {
            return Err(ChainError::ParentMismatch {
                tip: tip.digest,
                got: block.parent_digest,
            });
        }
        if !block.verifies() {
            return Err(ChainError::DigestInvalid(block.digest));
        }
        Ok(())
    }

    pub fn append(&mut self, block: Arc<Block>) -> Result<(), ChainError> {
        self.check(&block)?;
        self.blocks.push(block);
        Ok(())
    }

    /// Digests of every block after genesis.
    pub fn digests(&self) -> Vec<Digest> {
        self.blocks[1..].iter().map(|b| b.digest).collect()
    }

    /// Checks every chain invariant from genesis.
    pub fn validate(&self) -> Result<(), ChainError> {
        let mut replay = Chain::new(self.owner);
        if self.blocks[0].digest != replay.tip().digest {
            return Err(ChainError::DigestInvalid(self.blocks[0].digest));
        }
        for b in &self.blocks[1..] {
            replay.append(b.clone())?;
        }
        Ok(())
    }
}

/// What a processing delay is charged for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationKind {
    Transaction,
    Block,
    ConsensusMessage,
}

/// Simulated validation/processing delays, one distribution per kind with an
/// optional fallback.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessingDelays {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transaction: Option<DelayModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<DelayModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus_message: Option<DelayModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<DelayModel>,
}

#[derive(Debug, Error, PartialEq)]
#[error("no processing delay configured for {0:?} and no default")]
pub struct MissingDelay(pub ValidationKind);

pub const FABRIC_PBFT_PRESET: &str = "hyperledger-fabric-pbft";

impl ProcessingDelays {
    /// Placeholder values shaped after published Hyperledger Fabric pBFT
    /// measurements. Override them for calibrated studies.
    pub fn fabric_pbft_preset() -> Self {
        ProcessingDelays {
            transaction: Some(DelayModel::Normal { mean: 1.0, std: 0.25 }),
            block: Some(DelayModel::Normal { mean: 5.0, std: 1.0 }),
            consensus_message: Some(DelayModel::Normal { mean: 2.0, std: 0.5 }),
            default: Some(DelayModel::constant(1.0)),
        }
    }

    pub fn none() -> Self {
        ProcessingDelays {
            transaction: None,
            block: None,
            consensus_message: None,
            default: Some(DelayModel::constant(0.0)),
        }
    }

    pub fn model(&self, kind: ValidationKind) -> Result<&DelayModel, MissingDelay> {
        let specific = match kind {
            ValidationKind::Transaction => self.transaction.as_ref(),
            ValidationKind::Block => self.block.as_ref(),
            ValidationKind::ConsensusMessage => self.consensus_message.as_ref(),
        };
        specific.or(self.default.as_ref()).ok_or(MissingDelay(kind))
    }

    pub fn validation_delay(
        &self,
        kind: ValidationKind,
        rng: &mut RngStream,
    ) -> Result<u64, MissingDelay> {
        Ok(self.model(kind)?.sample_ms(rng))
    }

    pub fn models(&self) -> impl Iterator<Item = &DelayModel> {
        [&self.transaction, &self.block, &self.consensus_message, &self.default]
            .into_iter()
            .flatten()
    }
}

impl Default for ProcessingDelays {
    fn default() -> Self {
        Self::fabric_pbft_preset()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;

    pub(crate) fn tx(id: u64, at: u64) -> Arc<Transaction> {
        Arc::new(Transaction {
            id: TxId(id),
            origin: NodeId(1),
            payload: format!("tx-{id}"),
            created_at: SimTime(at),
            day: 1,
        })
    }

    fn child(parent: &Block, txs: Vec<Arc<Transaction>>) -> Block {
        Block::new(parent.height + 1, 0, NodeId(1), parent.digest, txs, SimTime(10))
    }

    #[test]
    fn genesis_digest_is_pinned() {
        // 40 bytes: the header fields and a zero tx count.
        let mut buf = Vec::new();
        encode_canonical(&mut buf, 0, 0, NodeId(0), Digest::ZERO, SimTime(0), &[]);
        assert_eq!(buf.len(), 8 + 8 + 4 + 8 + 8 + 4);
        assert_eq!(Block::genesis().digest.to_hex(), GENESIS_HEX);
    }

    // FNV-1a 64 of 40 zero bytes, computed with a standalone FNV
    // implementation outside this crate.
    const GENESIS_HEX: &str = "40d69e0cf0f65c45";

    #[test]
    fn same_block_same_digest() {
        let g = Block::genesis();
        let a = child(&g, vec![tx(1, 0), tx(2, 0)]);
        let b = child(&g, vec![tx(1, 0), tx(2, 0)]);
        assert_eq!(a.digest, b.digest);
        assert!(a.verifies());
    }

    #[test]
    fn append_valid_child() {
        let mut chain = Chain::new(NodeId(1));
        let b = child(chain.tip(), vec![tx(1, 0)]);
        chain.append(Arc::new(b)).unwrap();
        assert_eq!(chain.blocks().len(), 2);
        assert_eq!(chain.height(), 1);
        chain.validate().unwrap();
    }

    #[test]
    fn tampered_digest_rejected() {
        let mut chain = Chain::new(NodeId(1));
        let mut b = child(chain.tip(), vec![]);
        b.digest = Digest(!b.digest.0);
        assert_eq!(
            chain.append(Arc::new(b.clone())),
            Err(ChainError::DigestInvalid(b.digest))
        );
    }

    #[test]
    fn height_gap_rejected() {
        let mut chain = Chain::new(NodeId(1));
        for _ in 0..5 {
            let b = child(chain.tip(), vec![]);
            chain.append(Arc::new(b)).unwrap();
        }
        let tip = chain.tip().clone();
        let skip = Block::new(7, 0, NodeId(1), tip.digest, vec![], SimTime(0));
        assert_eq!(
            chain.append(Arc::new(skip)),
            Err(ChainError::HeightGap { tip: 5, got: 7 })
        );
    }

    #[test]
    fn parent_mismatch_rejected() {
        let mut chain = Chain::new(NodeId(1));
        let b = Block::new(1, 0, NodeId(1), Digest(42), vec![], SimTime(0));
        assert!(matches!(
            chain.append(Arc::new(b)),
            Err(ChainError::ParentMismatch { .. })
        ));
    }

    #[test]
    fn hex_round_trip() {
        let d = Digest(0x00ab_cdef_0123_4567);
        assert_eq!(d.to_hex(), "00abcdef01234567");
        assert_eq!(Digest::from_hex(&d.to_hex()), Some(d));
        assert_eq!(Digest::from_hex("xyz"), None);
    }

    #[test]
    fn processing_delay_fallbacks() {
        let mut rng = RngStream::new(1, NodeId(1), Purpose::Processing);
        let delays = ProcessingDelays {
            transaction: None,
            block: None,
            consensus_message: Some(DelayModel::constant(2.0)),
            default: None,
        };
        assert_eq!(
            delays.validation_delay(ValidationKind::ConsensusMessage, &mut rng),
            Ok(2)
        );
        assert_eq!(
            delays.validation_delay(ValidationKind::Block, &mut rng),
            Err(MissingDelay(ValidationKind::Block))
        );
        let with_default = ProcessingDelays {
            default: Some(DelayModel::constant(7.0)),
            ..delays
        };
        assert_eq!(
            with_default.validation_delay(ValidationKind::Block, &mut rng),
            Ok(7)
        );
    }
}
