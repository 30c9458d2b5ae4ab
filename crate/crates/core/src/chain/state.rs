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

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    detect_equivocation, schedule, tx_root, Block, BlockHeader, BlockVerdict, ChainError,
    Checkpoint, EquivocationEvidence, GenesisConfig,
};
use crate::hash::Digest;
use crate::keys::{Keypair, Signature};
use crate::merkle::{ConsistencyProof, MerkleError, MerkleLog};
use crate::pmd::{validate_transaction, PmdTransaction, RegistryState, Rejection};

/// A freshly built block plus the pending transactions it refused.
#[derive(Debug, Clone)]
pub struct ProducedBlock {
    pub block: Block,
    pub rejected: Vec<(Digest, Rejection)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissedSlot {
    pub slot: u64,
    pub handler_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("block at height {height} rejected: {verdict}")]
pub struct ReplayError {
    pub height: u64,
    pub verdict: BlockVerdict,
}

/// One node's view of the chain.
///
/// Owned by a single event loop; readers receive clones.
#[derive(Debug, Clone)]
pub struct ChainState {
    genesis: GenesisConfig,
    genesis_hash: Digest,
    blocks: Vec<Block>,
    header_hashes: Vec<Digest>,
    registry_log: MerkleLog,
    registry: RegistryState,
    pending: BTreeMap<(u64, Digest), PmdTransaction>,
}

impl ChainState {
    pub fn new(genesis: GenesisConfig) -> Result<Self, ChainError> {
        genesis.validate()?;
        Ok(ChainState {
            genesis_hash: genesis.hash(),
            genesis,
            blocks: Vec::new(),
            header_hashes: Vec::new(),
            registry_log: MerkleLog::new(),
            registry: RegistryState::new(),
            pending: BTreeMap::new(),
        })
    }

    /// Rebuilds a state by validating and applying `blocks` in order.
    pub fn replay<I>(genesis: GenesisConfig, blocks: I) -> Result<Self, ReplayError>
    where
        I: IntoIterator<Item = Block>,
    {
        let mut state = Self::new(genesis).map_err(|e| ReplayError {
            height: 0,
            verdict: BlockVerdict::BadLink(e.to_string()),
        })?;
        for block in blocks {
            let height = block.header.height;
            state
                .apply_block(block)
                .map_err(|verdict| ReplayError { height, verdict })?;
        }
        Ok(state)
    }

    /// Builds a state from `blocks` without validating them. Registry and log
    /// follow the stored transactions, so a rewritten history yields the
    /// roots its holder would actually serve.
    pub fn assemble_unchecked(
        genesis: GenesisConfig,
        blocks: Vec<Block>,
    ) -> Result<Self, ChainError> {
        let mut state = Self::new(genesis)?;
        for block in &blocks {
            for tx in &block.transactions {
                state.registry.apply_unchecked(tx);
                state.registry_log.append(&tx.to_wire_bytes());
            }
            state.header_hashes.push(block.header.hash());
        }
        state.blocks = blocks;
        Ok(state)
    }

    pub fn genesis(&self) -> &GenesisConfig {
        &self.genesis
    }

    pub fn genesis_hash(&self) -> Digest {
        self.genesis_hash
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn head(&self) -> Option<&Block> {
        self.blocks.last()
    }

    pub fn head_hash(&self) -> Digest {
        self.header_hashes
            .last()
            .copied()
            .unwrap_or(self.genesis_hash)
    }

    /// Number of blocks, which is also the height of the next block.
    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn registry(&self) -> &RegistryState {
        &self.registry
    }

    pub fn registry_log(&self) -> &MerkleLog {
        &self.registry_log
    }

    pub fn pending(&self) -> impl Iterator<Item = &PmdTransaction> {
        self.pending.values()
    }

    pub fn block_at_slot(&self, slot: u64) -> Option<&Block> {
        self.blocks
            .binary_search_by_key(&slot, |b| b.header.slot)
            .ok()
            .map(|i| &self.blocks[i])
    }

    /// Structural equality of everything committed (ignores the pending pool).
    pub fn committed_eq(&self, other: &ChainState) -> bool {
        self.genesis == other.genesis
            && self.blocks == other.blocks
            && self.registry_log == other.registry_log
            && self.registry == other.registry
    }

    /// Seed for the cycle containing `slot`: hash of the last block before it.
    pub fn cycle_seed(&self, slot: u64) -> Digest {
        let cycle_start = slot / self.genesis.roster_len() * self.genesis.roster_len();
        if cycle_start == 0 {
            return self.genesis_hash;
        }
        let before = self.blocks.partition_point(|b| b.header.slot < cycle_start);
        if before == 0 {
            self.genesis_hash
        } else {
            self.header_hashes[before - 1]
        }
    }

    pub fn scheduled_handler(&self, slot: u64) -> &str {
        schedule(slot, &self.genesis, &self.cycle_seed(slot))
    }

    /// Admits a transaction to the pending pool after checking it against
    /// the confirmed registry.
    pub fn submit(&mut self, tx: PmdTransaction) -> Result<(), Rejection> {
        validate_transaction(&tx, &self.registry)?;
        self.pending.insert((tx.created_at, tx.tx_id), tx);
        Ok(())
    }

    pub fn evict(&mut self, tx_ids: &[Digest]) {
        self.pending.retain(|(_, id), _| !tx_ids.contains(id));
    }

    fn check_slot_after_head(&self, slot: u64) -> Result<(), ChainError> {
        match self.head() {
            Some(head) if slot <= head.header.slot => Err(ChainError::SlotNotAfterHead {
                slot,
                head_slot: head.header.slot,
            }),
            _ => Ok(()),
        }
    }

    /// Builds and signs the block for `slot` from the pending pool.
    ///
    /// Pending transactions are taken in `(created_at, tx_id)` order; each is
    /// validated against the registry as extended by the ones before it.
    pub fn produce_block(
        &self,
        slot: u64,
        key: &Keypair,
        now: u64,
    ) -> Result<ProducedBlock, ChainError> {
        self.check_slot_after_head(slot)?;
        let me = self
            .genesis
            .handler_by_key(&key.public())
            .ok_or(ChainError::UnknownHandlerKey)?;
        let expected = self.scheduled_handler(slot);
        if expected != me.handler_id {
            return Err(ChainError::NotScheduled {
                slot,
                expected: expected.to_string(),
                actual: me.handler_id.clone(),
            });
        }

        let mut scratch = self.registry.clone();
        let mut log = self.registry_log.clone();
        let mut included = Vec::new();
        let mut rejected = Vec::new();
        for tx in self.pending.values() {
            match scratch.confirm(tx) {
                Ok(()) => {
                    log.append(&tx.to_wire_bytes());
                    included.push(tx.clone());
                }
                Err(reason) => rejected.push((tx.tx_id, reason)),
            }
        }

        let mut header = BlockHeader {
            height: self.height(),
            slot,
            prev_block_hash: self.head_hash(),
            tx_root: tx_root(&included),
            registry_root: log.root(),
            registry_size: log.size(),
            timestamp: now,
            creator: me.handler_id.clone(),
            signature: Signature::from_bytes([0; 64]),
        };
        header.signature = key.sign(&header.signing_bytes());
        Ok(ProducedBlock {
            block: Block {
                header,
                transactions: included,
            },
            rejected,
        })
    }

    pub fn validate_block(&self, block: &Block) -> Result<(), BlockVerdict> {
        self.check_block(block).map(|_| ())
    }

    fn check_block(&self, block: &Block) -> Result<(RegistryState, MerkleLog), BlockVerdict> {
        let h = &block.header;
        if h.height != self.height() {
            return Err(BlockVerdict::BadLink(format!(
                "height {} but next height is {}",
                h.height,
                self.height()
            )));
        }
        if h.prev_block_hash != self.head_hash() {
            return Err(BlockVerdict::BadLink(
                "prev_block_hash does not match head".into(),
            ));
        }
        if let Some(head) = self.head() {
            if h.slot <= head.header.slot {
                return Err(BlockVerdict::BadSlot(format!(
                    "slot {} not after parent slot {}",
                    h.slot, head.header.slot
                )));
            }
        }
        let start = self.genesis.slot_start(h.slot);
        let end = start + self.genesis.slot_duration_ns();
        if h.timestamp < start || h.timestamp >= end {
            return Err(BlockVerdict::BadSlot(format!(
                "timestamp {} outside slot {} window",
                h.timestamp, h.slot
            )));
        }
        let expected = self.scheduled_handler(h.slot);
        if h.creator != expected {
            return Err(BlockVerdict::NotScheduledHandler {
                slot: h.slot,
                expected: expected.to_string(),
                claimed: h.creator.clone(),
            });
        }
        let key = self
            .genesis
            .handler(&h.creator)
            .expect("scheduled handler is on the roster")
            .public_key;
        if !key.verify(&h.signing_bytes(), &h.signature) {
            return Err(BlockVerdict::BadSignature);
        }
        if tx_root(&block.transactions) != h.tx_root {
            return Err(BlockVerdict::BadTxRoot);
        }
        let mut registry = self.registry.clone();
        let mut log = self.registry_log.clone();
        for (index, tx) in block.transactions.iter().enumerate() {
            registry
                .confirm(tx)
                .map_err(|rejection| BlockVerdict::InvalidTransaction { index, rejection })?;
            log.append(&tx.to_wire_bytes());
        }
        if log.root() != h.registry_root || log.size() != h.registry_size {
            return Err(BlockVerdict::BadRegistryCommitment);
        }
        Ok((registry, log))
    }

    /// Validates `block` and makes it the new head.
    pub fn apply_block(&mut self, block: Block) -> Result<(), BlockVerdict> {
        let (registry, log) = self.check_block(&block)?;
        self.registry = registry;
        self.registry_log = log;
        let included: Vec<Digest> = block.transactions.iter().map(|t| t.tx_id).collect();
        self.evict(&included);
        self.header_hashes.push(block.header.hash());
        self.blocks.push(block);
        Ok(())
    }

    /// Records that `slot` passed without a block; the chain itself is unchanged.
    pub fn missed_slot_advance(&self, slot: u64) -> Result<MissedSlot, ChainError> {
        self.check_slot_after_head(slot)?;
        Ok(MissedSlot {
            slot,
            handler_id: self.scheduled_handler(slot).to_string(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            registry_root: self.registry_log.root(),
            registry_size: self.registry_log.size(),
            height: self.head().map(|b| b.header.height),
            head_hash: self.head_hash(),
        }
    }

    pub fn prove_consistency(&self, old_size: u64) -> Result<ConsistencyProof, MerkleError> {
        self.registry_log.prove_consistency(old_size)
    }

    /// Evidence if `header` conflicts with the block this chain holds for its slot.
    pub fn conflicting_header(&self, header: &BlockHeader) -> Option<EquivocationEvidence> {
        let ours = self.block_at_slot(header.slot)?;
        detect_equivocation(&ours.header, header, &self.genesis)
    }
}
