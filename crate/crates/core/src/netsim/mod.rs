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

//! Deterministic discrete-event simulation of a handler network.
//!
//! Every handler on the roster runs as one node holding a [`ChainState`].
//! Nodes exchange transactions, blocks, sync traffic, equivocation evidence
//! and consistency audits over a simulated full mesh. Time is virtual
//! milliseconds since genesis and all randomness comes from the config seed,
//! so a config always yields the same trace.

mod engine;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::chain::{
    BlockVerdict, ChainState, Checkpoint, EquivocationEvidence, GenesisConfig, HandlerEntry,
    OrderingMode,
};
use crate::hash::{sha256_parts, Digest};
use crate::keys::Keypair;
use crate::pmd::Rejection;

pub use engine::run;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("ConfigError: {0}")]
    Config(String),
}

/// Uniform per-message latency, inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub min_ms: u64,
    pub max_ms: u64,
}

/// Synthetic client traffic submitted mid-slot to a random online node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    pub txs_per_slot: u32,
}

impl Default for Workload {
    fn default() -> Self {
        Workload { txs_per_slot: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    /// Misses the ticks of slots `from_slot..=to_slot` and reconnects halfway
    /// through `to_slot`.
    Offline { from_slot: u64, to_slot: u64 },
    /// Signs two different blocks for `slot` and sends them to disjoint halves
    /// of its peers.
    Equivocate { slot: u64 },
    /// At `at_slot`, rewrites the first transaction confirmed at `height` and
    /// keeps serving the altered chain. With `resign` the headers from
    /// `height` on are recomputed and signed with the node's own key.
    TamperHistory {
        height: u64,
        at_slot: u64,
        #[serde(default)]
        resign: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub handler_id: String,
    #[serde(flatten)]
    pub kind: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub genesis: GenesisConfig,
    /// Hex secret keys, in roster order.
    pub handler_secrets: Vec<String>,
    pub latency: LatencyModel,
    pub drop_probability: f64,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    pub duration_slots: u64,
    #[serde(default)]
    pub workload: Workload,
    /// Nodes audit every peer after each `audit_every` slots; `0` leaves only
    /// the closing audit.
    #[serde(default = "default_audit_every")]
    pub audit_every: u64,
}

fn default_audit_every() -> u64 {
    5
}

/// Deterministic handler key for generated configs.
pub fn handler_key(seed: u64, index: usize) -> Keypair {
    let d = sha256_parts(&[
        b"dds-sim-handler",
        &seed.to_le_bytes(),
        &(index as u64).to_le_bytes(),
    ]);
    Keypair::from_seed(d.0)
}

impl SimConfig {
    /// A fault-free config with `handlers` nodes named `h0..`, 1 s slots and
    /// 10 to 100 ms latency.
    pub fn generate(seed: u64, handlers: usize, duration_slots: u64, mode: OrderingMode) -> Self {
        let keys: Vec<Keypair> = (0..handlers).map(|i| handler_key(seed, i)).collect();
        SimConfig {
            seed,
            genesis: GenesisConfig {
                handlers: keys
                    .iter()
                    .enumerate()
                    .map(|(i, k)| HandlerEntry {
                        handler_id: format!("h{i}"),
                        public_key: k.public(),
                    })
                    .collect(),
                slot_duration: 1000,
                ordering_mode: mode,
                genesis_time: 1_700_000_000_000_000_000,
            },
            handler_secrets: keys.iter().map(Keypair::secret_hex).collect(),
            latency: LatencyModel {
                min_ms: 10,
                max_ms: 100,
            },
            drop_probability: 0.0,
            faults: Vec::new(),
            duration_slots,
            workload: Workload::default(),
            audit_every: default_audit_every(),
        }
    }

    pub fn keys(&self) -> Result<Vec<Keypair>, SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.handler_secrets.len() != self.genesis.handlers.len() {
            return bad(format!(
                "{} handler secrets for {} handlers",
                self.handler_secrets.len(),
                self.genesis.handlers.len()
            ));
        }
        let mut keys = Vec::new();
        for (secret, entry) in self.handler_secrets.iter().zip(&self.genesis.handlers) {
            let key = Keypair::from_secret_hex(secret)
                .map_err(|e| SimError::Config(format!("{}: {e}", entry.handler_id)))?;
            if key.public() != entry.public_key {
                return bad(format!(
                    "secret for {} does not match its public key",
                    entry.handler_id
                ));
            }
            keys.push(key);
        }
        Ok(keys)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        self.genesis
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        self.keys()?;
        if self.latency.min_ms > self.latency.max_ms {
            return bad("latency min_ms exceeds max_ms".into());
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return bad(format!(
                "drop_probability {} outside [0, 1]",
                self.drop_probability
            ));
        }
        if self.duration_slots == 0 {
            return bad("duration_slots must be positive".into());
        }
        let horizon = self.duration_slots;
        for f in &self.faults {
            if self.genesis.handler(&f.handler_id).is_none() {
                return bad(format!("fault names unknown handler {}", f.handler_id));
            }
            match f.kind {
                FaultKind::Offline { from_slot, to_slot } => {
                    if from_slot > to_slot || to_slot >= horizon {
                        return bad(format!(
                            "offline range {from_slot}..={to_slot} outside horizon"
                        ));
                    }
                }
                FaultKind::Equivocate { slot } => {
                    if slot >= horizon {
                        return bad(format!("equivocation slot {slot} outside horizon"));
                    }
                    if self.genesis.ordering_mode == OrderingMode::Fixed {
                        let idx = (slot % self.genesis.roster_len()) as usize;
                        if self.genesis.handlers[idx].handler_id != f.handler_id {
                            return bad(format!(
                                "{} is not scheduled at slot {slot}",
                                f.handler_id
                            ));
                        }
                    }
                    if self.offline_at(&f.handler_id, slot) {
                        return bad(format!("{} is offline at slot {slot}", f.handler_id));
                    }
                }
                FaultKind::TamperHistory {
                    height, at_slot, ..
                } => {
                    if at_slot >= horizon || height >= at_slot {
                        return bad(format!(
                            "height {height} cannot be confirmed before slot {at_slot}"
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub(crate) fn offline_at(&self, handler_id: &str, slot: u64) -> bool {
        self.faults.iter().any(|f| {
            f.handler_id == handler_id
                && matches!(f.kind, FaultKind::Offline { from_slot, to_slot }
                    if (from_slot..=to_slot).contains(&slot))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceEvent {
    Offline,
    Online,
    SlotMissed {
        slot: u64,
        handler_id: String,
    },
    ProductionSkipped {
        slot: u64,
        reason: String,
    },
    BlockProduced {
        height: u64,
        slot: u64,
        hash: Digest,
        txs: usize,
    },
    EquivocationInjected {
        slot: u64,
        hashes: [Digest; 2],
    },
    TamperInjected {
        height: u64,
        leaf_index: u64,
        resign: bool,
    },
    BlockAccepted {
        height: u64,
        slot: u64,
        hash: Digest,
        from: String,
    },
    BlockRejected {
        height: u64,
        slot: u64,
        from: String,
        verdict: BlockVerdict,
    },
    BlockIgnored {
        height: u64,
        slot: u64,
        from: String,
        reason: String,
    },
    SyncRequested {
        peer: String,
        from_height: u64,
    },
    TxSubmitted {
        tx_id: Digest,
        kind: String,
    },
    TxRejected {
        tx_id: Digest,
        rejection: Rejection,
    },
    Evidence {
        creator: String,
        slot: u64,
        hashes: [Digest; 2],
        from: String,
    },
    EvidenceRejected {
        from: String,
    },
    AuditOk {
        peer: String,
        local_size: u64,
        remote_size: u64,
    },
    AuditFailed {
        peer: String,
        local: Checkpoint,
        remote: Checkpoint,
        reason: String,
    },
    FinalState {
        height: u64,
        head_hash: Digest,
        registry_root: Digest,
        registry_size: u64,
        halted: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Virtual milliseconds since genesis.
    pub time: u64,
    pub node: String,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditFailure {
    pub time: u64,
    pub peer: String,
    pub local: Checkpoint,
    pub remote: Checkpoint,
    pub reason: String,
}

/// End-of-run view of one node.
#[derive(Debug, Clone)]
pub struct NodeReport {
    pub handler_id: String,
    pub state: ChainState,
    /// Distinct checkpoints in the order the node took them, with the slot.
    pub checkpoints: Vec<(u64, Checkpoint)>,
    pub evidence: Vec<EquivocationEvidence>,
    pub audit_failures: Vec<AuditFailure>,
    pub audits_ok: u64,
    pub halted: bool,
    /// True for nodes configured to equivocate or tamper.
    pub faulty: bool,
    /// Log index of the rewritten transaction, for tampering nodes.
    pub tampered_leaf: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct SimTrace {
    pub events: Vec<TraceRecord>,
    pub nodes: Vec<NodeReport>,
}

impl SimTrace {
    /// One canonical JSON event per line.
    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in &self.events {
            out.extend(canonical::to_canonical_bytes(e).expect("trace has no floats"));
            out.push(b'\n');
        }
        out
    }

    pub fn node(&self, handler_id: &str) -> Option<&NodeReport> {
        self.nodes.iter().find(|n| n.handler_id == handler_id)
    }

    pub fn honest(&self) -> impl Iterator<Item = &NodeReport> {
        self.nodes.iter().filter(|n| !n.faulty)
    }

    /// Events emitted by one node.
    pub fn events_of<'a>(&'a self, handler_id: &'a str) -> impl Iterator<Item = &'a TraceEvent> {
        self.events
            .iter()
            .filter(move |r| r.node == handler_id)
            .map(|r| &r.event)
    }

    /// Number of events per type name, for summaries.
    pub fn event_counts(&self) -> BTreeMap<String, u64> {
        let mut counts = BTreeMap::new();
        for r in &self.events {
            let v = serde_json::to_value(&r.event).expect("serializable");
            let name = v["type"].as_str().unwrap_or("unknown").to_string();
            *counts.entry(name).or_default() += 1;
        }
        counts
    }
}
