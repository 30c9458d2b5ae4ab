// Copyright 2026 The DDS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Permissioned chain: a fixed handler roster producing signed blocks in
//! scheduled slots, each block committing to the cumulative registry log.

mod schedule;
mod state;
pub mod store;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::hash::{sha256, Digest};
use crate::keys::{PublicKey, Signature};
use crate::merkle::MerkleLog;
use crate::pmd::{PmdTransaction, Rejection};

pub use schedule::{cycle_permutation, schedule, schedule_index};
pub use state::{ChainState, MissedSlot, ProducedBlock, ReplayError};

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid genesis: {0}")]
    InvalidGenesis(String),
    #[error("slot {slot} belongs to {expected}, not {actual}")]
    NotScheduled {
        slot: u64,
        expected: String,
        actual: String,
    },
    #[error("key is not on the handler roster")]
    UnknownHandlerKey,
    #[error("slot {slot} is not after head slot {head_slot}")]
    SlotNotAfterHead { slot: u64, head_slot: u64 },
    #[error("chain store: {0}")]
    Store(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderingMode {
    /// Handlers take slots in roster order.
    Fixed,
    /// Each cycle uses a fresh permutation seeded from the chain.
    Reshuffled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandlerEntry {
    pub handler_id: String,
    pub public_key: PublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenesisConfig {
    pub handlers: Vec<HandlerEntry>,
    /// Milliseconds per slot.
    pub slot_duration: u64,
    pub ordering_mode: OrderingMode,
    /// Nanoseconds since the Unix epoch at the start of slot 0.
    pub genesis_time: u64,
}

impl GenesisConfig {
    pub fn validate(&self) -> Result<(), ChainError> {
        if self.handlers.is_empty() {
            return Err(ChainError::InvalidGenesis("no handlers".into()));
        }
        if self.slot_duration == 0 {
            return Err(ChainError::InvalidGenesis(
                "slot_duration must be positive".into(),
            ));
        }
        let mut ids: Vec<&str> = self
            .handlers
            .iter()
            .map(|h| h.handler_id.as_str())
            .collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(ChainError::InvalidGenesis("duplicate handler_id".into()));
        }
        let mut keys: Vec<_> = self.handlers.iter().map(|h| h.public_key).collect();
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(ChainError::InvalidGenesis("duplicate handler key".into()));
        }
        Ok(())
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(self).expect("genesis has no floats")
    }

    /// Parent hash of block 0 and the seed of the first cycle.
    pub fn hash(&self) -> Digest {
        sha256(&self.canonical_bytes())
    }

    pub fn handler(&self, handler_id: &str) -> Option<&HandlerEntry> {
        self.handlers.iter().find(|h| h.handler_id == handler_id)
    }

    pub fn handler_by_key(&self, key: &PublicKey) -> Option<&HandlerEntry> {
        self.handlers.iter().find(|h| h.public_key == *key)
    }

    pub fn roster_len(&self) -> u64 {
        self.handlers.len() as u64
    }

    pub fn slot_duration_ns(&self) -> u64 {
        self.slot_duration * 1_000_000
    }

    pub fn slot_start(&self, slot: u64) -> u64 {
        self.genesis_time + slot * self.slot_duration_ns()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub height: u64,
    pub slot: u64,
    pub prev_block_hash: Digest,
    pub tx_root: Digest,
    pub registry_root: Digest,
    pub registry_size: u64,
    pub timestamp: u64,
    pub creator: String,
    pub signature: Signature,
}

impl BlockHeader {
    /// Canonical header bytes without the `signature` field.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut value = serde_json::to_value(self).expect("header serializes");
        value
            .as_object_mut()
            .expect("header is an object")
            .remove("signature");
        canonical::to_canonical_bytes(&value).expect("header has no floats")
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(self).expect("header has no floats")
    }

    /// Hash of the full signed header; the next block's `prev_block_hash`.
    pub fn hash(&self) -> Digest {
        sha256(&self.canonical_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<PmdTransaction>,
}

impl Block {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(self).expect("block has no floats")
    }

    pub fn hash(&self) -> Digest {
        self.header.hash()
    }
}

/// Merkle root over the canonical wire bytes of `txs`.
pub fn tx_root(txs: &[PmdTransaction]) -> Digest {
    MerkleLog::from_leaf_hashes(
        txs.iter()
            .map(|tx| crate::merkle::leaf_hash(&tx.to_wire_bytes())),
    )
    .root()
}

/// Why a block was refused.
#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "detail")]
pub enum BlockVerdict {
    #[error("BadLink: {0}")]
    BadLink(String),
    #[error("BadSlot: {0}")]
    BadSlot(String),
    #[error("NotScheduledHandler: slot {slot} belongs to {expected}, header names {claimed}")]
    NotScheduledHandler {
        slot: u64,
        expected: String,
        claimed: String,
    },
    #[error("BadSignature")]
    BadSignature,
    #[error("BadTxRoot")]
    BadTxRoot,
    #[error("InvalidTransaction: #{index}: {rejection}")]
    InvalidTransaction { index: usize, rejection: Rejection },
    #[error("BadRegistryCommitment")]
    BadRegistryCommitment,
}

impl BlockVerdict {
    pub fn name(&self) -> &'static str {
        match self {
            BlockVerdict::BadLink(_) => "BadLink",
            BlockVerdict::BadSlot(_) => "BadSlot",
            BlockVerdict::NotScheduledHandler { .. } => "NotScheduledHandler",
            BlockVerdict::BadSignature => "BadSignature",
            BlockVerdict::BadTxRoot => "BadTxRoot",
            BlockVerdict::InvalidTransaction { .. } => "InvalidTransaction",
            BlockVerdict::BadRegistryCommitment => "BadRegistryCommitment",
        }
    }
}

/// Audit anchor a client keeps to demand consistency proofs later.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub registry_root: Digest,
    pub registry_size: u64,
    /// Height of the head block; `None` before the first block.
    pub height: Option<u64>,
    pub head_hash: Digest,
}

/// Two validly signed, different headers by one handler for one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivocationEvidence {
    pub creator: String,
    pub slot: u64,
    /// Ordered by header hash so every observer produces identical evidence.
    pub headers: [BlockHeader; 2],
}

impl EquivocationEvidence {
    pub fn hashes(&self) -> [Digest; 2] {
        [self.headers[0].hash(), self.headers[1].hash()]
    }
}

pub fn detect_equivocation(
    a: &BlockHeader,
    b: &BlockHeader,
    genesis: &GenesisConfig,
) -> Option<EquivocationEvidence> {
    if a.slot != b.slot || a.creator != b.creator {
        return None;
    }
    let (ha, hb) = (a.hash(), b.hash());
    if ha == hb {
        return None;
    }
    let key = genesis.handler(&a.creator)?.public_key;
    if !key.verify(&a.signing_bytes(), &a.signature)
        || !key.verify(&b.signing_bytes(), &b.signature)
    {
        return None;
    }
    let headers = if ha < hb {
        [a.clone(), b.clone()]
    } else {
        [b.clone(), a.clone()]
    };
    Some(EquivocationEvidence {
        creator: a.creator.clone(),
        slot: a.slot,
        headers,
    })
}
