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

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    AuditFailure, FaultKind, NodeReport, SimConfig, SimError, SimTrace, TraceEvent, TraceRecord,
};
use crate::chain::{
    detect_equivocation, tx_root, Block, ChainState, Checkpoint, EquivocationEvidence,
};
use crate::hash::{sha256, sha256_parts, Digest};
use crate::keys::{Keypair, Signature};
use crate::merkle::{verify_consistency, ConsistencyProof, MerkleLog};
use crate::pmd::{
    sign_transaction, AdapterKind, DatasetDescriptor, DatasetKind, FileRef, PmdTransaction,
    ProgramRef, TimeRange, TxBody,
};

const SIM_STORAGE: &str = "sim-store";
const SIM_PROGRAM: &str = "sim-reco";
const SIM_PROGRAM_VERSION: &str = "1";

#[derive(Debug, Clone)]
enum Message {
    Tx(PmdTransaction),
    Block(Block),
    SyncRequest {
        from_height: u64,
    },
    SyncResponse {
        blocks: Vec<Block>,
        evidence: Vec<EquivocationEvidence>,
    },
    Evidence(EquivocationEvidence),
    AuditRequest(Checkpoint),
    AuditResponse {
        checkpoint: Checkpoint,
        proof: Option<ConsistencyProof>,
    },
}

#[derive(Debug)]
enum Action {
    Tick(u64),
    Reconnect(usize),
    Workload(u64),
    Deliver {
        to: usize,
        from: usize,
        msg: Box<Message>,
    },
    FinalAudit,
}

impl Action {
    fn class(&self) -> u8 {
        match self {
            Action::Tick(_) => 0,
            Action::Reconnect(_) => 1,
            Action::Workload(_) => 2,
            Action::Deliver { .. } => 3,
            Action::FinalAudit => 4,
        }
    }
}

/// Ordered by `(time, class, sender, per-sender sequence)`.
struct Queued {
    key: (u64, u8, usize, u64),
    action: Action,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

struct Node {
    id: String,
    key: Keypair,
    state: ChainState,
    seen_txs: BTreeSet<Digest>,
    orphans: BTreeMap<u64, (Block, usize)>,
    sync_until: u64,
    evidence: Vec<EquivocationEvidence>,
    halted: bool,
    online: bool,
    checkpoints: Vec<(u64, Checkpoint)>,
    audit_failures: Vec<AuditFailure>,
    audits_ok: u64,
    audits_pending: BTreeMap<usize, Checkpoint>,
    faulty: bool,
    tampered_leaf: Option<u64>,
}

struct Sim<'c> {
    config: &'c SimConfig,
    nodes: Vec<Node>,
    queue: BinaryHeap<Reverse<Queued>>,
    seq: Vec<u64>,
    sim_seq: u64,
    rng: ChaCha8Rng,
    events: Vec<TraceRecord>,
    now: u64,
    slot_ms: u64,
    client: Keypair,
    datasets_published: u64,
}

/// Runs the simulation described by `config`.
pub fn run(config: &SimConfig) -> Result<SimTrace, SimError> {
    config.validate()?;
    let keys = config.keys()?;
    let nodes = keys
        .into_iter()
        .zip(&config.genesis.handlers)
        .map(|(key, entry)| Node {
            id: entry.handler_id.clone(),
            key,
            state: ChainState::new(config.genesis.clone()).expect("validated genesis"),
            seen_txs: BTreeSet::new(),
            orphans: BTreeMap::new(),
            sync_until: 0,
            evidence: Vec::new(),
            halted: false,
            online: true,
            checkpoints: Vec::new(),
            audit_failures: Vec::new(),
            audits_ok: 0,
            audits_pending: BTreeMap::new(),
            faulty: config.faults.iter().any(|f| {
                f.handler_id == entry.handler_id && !matches!(f.kind, FaultKind::Offline { .. })
            }),
            tampered_leaf: None,
        })
        .collect::<Vec<_>>();
    let n = nodes.len();
    let mut sim = Sim {
        config,
        nodes,
        queue: BinaryHeap::new(),
        seq: vec![0; n],
        sim_seq: 0,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        events: Vec::new(),
        now: 0,
        slot_ms: config.genesis.slot_duration,
        client: Keypair::from_seed(
            sha256_parts(&[b"dds-sim-client", &config.seed.to_le_bytes()]).0,
        ),
        datasets_published: 0,
    };

    for slot in 0..config.duration_slots {
        sim.schedule(slot * sim.slot_ms, Action::Tick(slot));
        if config.workload.txs_per_slot > 0 {
            sim.schedule(slot * sim.slot_ms + sim.slot_ms / 2, Action::Workload(slot));
        }
    }
    for f in &config.faults {
        if let FaultKind::Offline { to_slot, .. } = f.kind {
            let idx = sim.index_of(&f.handler_id);
            sim.schedule(
                to_slot * sim.slot_ms + sim.slot_ms / 2,
                Action::Reconnect(idx),
            );
        }
    }
    sim.schedule(config.duration_slots * sim.slot_ms, Action::FinalAudit);

    while let Some(Reverse(q)) = sim.queue.pop() {
        sim.now = q.key.0;
        match q.action {
            Action::Tick(slot) => sim.on_tick(slot)?,
            Action::Reconnect(i) => sim.on_reconnect(i),
            Action::Workload(slot) => sim.on_workload(slot),
            Action::Deliver { to, from, msg } => sim.on_deliver(to, from, *msg),
            Action::FinalAudit => {
                for i in 0..sim.nodes.len() {
                    if sim.nodes[i].online {
                        sim.start_audit(i);
                    }
                }
            }
        }
    }

    for i in 0..sim.nodes.len() {
        let node = &sim.nodes[i];
        let cp = node.state.checkpoint();
        let event = TraceEvent::FinalState {
            height: node.state.height(),
            head_hash: cp.head_hash,
            registry_root: cp.registry_root,
            registry_size: cp.registry_size,
            halted: node.halted,
        };
        sim.trace(i, event);
    }
    let nodes = sim
        .nodes
        .into_iter()
        .map(|n| NodeReport {
            handler_id: n.id,
            state: n.state,
            checkpoints: n.checkpoints,
            evidence: n.evidence,
            audit_failures: n.audit_failures,
            audits_ok: n.audits_ok,
            halted: n.halted,
            faulty: n.faulty,
            tampered_leaf: n.tampered_leaf,
        })
        .collect();
    Ok(SimTrace {
        events: sim.events,
        nodes,
    })
}

impl Sim<'_> {
    fn index_of(&self, handler_id: &str) -> usize {
        self.nodes
            .iter()
            .position(|n| n.id == handler_id)
            .expect("validated handler id")
    }

    fn schedule(&mut self, time: u64, action: Action) {
        self.sim_seq += 1;
        let key = (time, action.class(), 0, self.sim_seq);
        self.queue.push(Reverse(Queued { key, action }));
    }

    fn trace(&mut self, node: usize, event: TraceEvent) {
        self.events.push(TraceRecord {
            time: self.now,
            node: self.nodes[node].id.clone(),
            event,
        });
    }

    fn slot_start_ns(&self, slot: u64) -> u64 {
        self.config.genesis.slot_start(slot)
    }

    fn now_ns(&self) -> u64 {
        self.config.genesis.genesis_time + self.now * 1_000_000
    }

    fn send(&mut self, from: usize, to: usize, msg: Message) {
        let p = self.config.drop_probability;
        let dropped = p > 0.0 && self.rng.gen_bool(p);
        let latency = self
            .rng
            .gen_range(self.config.latency.min_ms..=self.config.latency.max_ms);
        if dropped {
            return;
        }
        self.seq[from] += 1;
        let action = Action::Deliver {
            to,
            from,
            msg: Box::new(msg),
        };
        let key = (self.now + latency, action.class(), from, self.seq[from]);
        self.queue.push(Reverse(Queued { key, action }));
    }

    fn broadcast(&mut self, from: usize, msg: Message, except: Option<usize>) {
        for to in 0..self.nodes.len() {
            if to != from && Some(to) != except {
                self.send(from, to, msg.clone());
            }
        }
    }

    fn record_checkpoint(&mut self, i: usize, slot: u64) {
        let cp = self.nodes[i].state.checkpoint();
        if self.nodes[i].checkpoints.last().map(|(_, c)| c) != Some(&cp) {
            self.nodes[i].checkpoints.push((slot, cp));
        }
    }

    fn on_tick(&mut self, slot: u64) -> Result<(), SimError> {
        for i in 0..self.nodes.len() {
            let id = self.nodes[i].id.clone();
            if self.config.offline_at(&id, slot) {
                if self.nodes[i].online {
                    self.nodes[i].online = false;
                    self.trace(i, TraceEvent::Offline);
                }
                continue;
            }
            if slot > 0 && !self.nodes[i].halted {
                let state = &self.nodes[i].state;
                if state.block_at_slot(slot - 1).is_none() {
                    if let Ok(missed) = state.missed_slot_advance(slot - 1) {
                        self.trace(
                            i,
                            TraceEvent::SlotMissed {
                                slot: missed.slot,
                                handler_id: missed.handler_id,
                            },
                        );
                    }
                }
            }
            if self.nodes[i].halted {
                for ev in self.nodes[i].evidence.clone() {
                    self.broadcast(i, Message::Evidence(ev), None);
                }
                continue;
            }
            self.inject_tamper(i, slot)?;
            self.produce(i, slot)?;
            self.record_checkpoint(i, slot);
            let every = self.config.audit_every;
            if every > 0 && (slot + 1).is_multiple_of(every) {
                self.start_audit(i);
            }
        }
        Ok(())
    }

    fn equivocates_at(&self, i: usize, slot: u64) -> bool {
        let id = &self.nodes[i].id;
        self.config.faults.iter().any(|f| {
            &f.handler_id == id && matches!(f.kind, FaultKind::Equivocate { slot: s } if s == slot)
        })
    }

    fn produce(&mut self, i: usize, slot: u64) -> Result<(), SimError> {
        let equivocate = self.equivocates_at(i, slot);
        let node = &self.nodes[i];
        if node.state.scheduled_handler(slot) != node.id {
            if equivocate {
                return Err(SimError::Config(format!(
                    "{} is not scheduled at slot {slot}",
                    node.id
                )));
            }
            return Ok(());
        }
        if !node.orphans.is_empty() || self.now < node.sync_until {
            self.trace(
                i,
                TraceEvent::ProductionSkipped {
                    slot,
                    reason: "awaiting sync".into(),
                },
            );
            return Ok(());
        }
        let now_ns = self.slot_start_ns(slot);
        let produced = node
            .state
            .produce_block(slot, &node.key, now_ns)
            .map_err(|e| SimError::Config(format!("{}: {e}", node.id)))?;
        let rejected: Vec<Digest> = produced.rejected.iter().map(|(id, _)| *id).collect();
        let block = produced.block;
        let alternative = if equivocate {
            Some(
                node.state
                    .produce_block(slot, &node.key, now_ns + 1)
                    .expect("same inputs as the first block")
                    .block,
            )
        } else {
            None
        };

        let node = &mut self.nodes[i];
        node.state.evict(&rejected);
        node.state
            .apply_block(block.clone())
            .expect("own block extends own head");
        let (height, hash, txs) = (
            block.header.height,
            block.header.hash(),
            block.transactions.len(),
        );
        self.trace(
            i,
            TraceEvent::BlockProduced {
                height,
                slot,
                hash,
                txs,
            },
        );

        match alternative {
            None => self.broadcast(i, Message::Block(block), None),
            Some(other) => {
                self.trace(
                    i,
                    TraceEvent::EquivocationInjected {
                        slot,
                        hashes: [hash, other.header.hash()],
                    },
                );
                let peers: Vec<usize> = (0..self.nodes.len()).filter(|&p| p != i).collect();
                let half = peers.len().div_ceil(2);
                for (k, p) in peers.into_iter().enumerate() {
                    let b = if k < half {
                        block.clone()
                    } else {
                        other.clone()
                    };
                    self.send(i, p, Message::Block(b));
                }
            }
        }
        Ok(())
    }

    fn inject_tamper(&mut self, i: usize, slot: u64) -> Result<(), SimError> {
        let id = self.nodes[i].id.clone();
        let Some((height, resign)) = self.config.faults.iter().find_map(|f| match f.kind {
            FaultKind::TamperHistory {
                height,
                at_slot,
                resign,
            } if f.handler_id == id && at_slot == slot => Some((height, resign)),
            _ => None,
        }) else {
            return Ok(());
        };
        let node = &self.nodes[i];
        if height >= node.state.height() {
            return Err(SimError::Config(format!(
                "{id} has no block at height {height} by slot {slot}"
            )));
        }
        let mut blocks = node.state.blocks().to_vec();
        let h = height as usize;
        if blocks[h].transactions.is_empty() {
            return Err(SimError::Config(format!(
                "block {height} holds no transaction"
            )));
        }
        let leaf_index: u64 = blocks[..h]
            .iter()
            .map(|b| b.transactions.len() as u64)
            .sum();
        blocks[h].transactions[0].created_at += 1;

        if resign {
            let mut log = MerkleLog::new();
            for b in &blocks[..h] {
                for tx in &b.transactions {
                    log.append(&tx.to_wire_bytes());
                }
            }
            for k in h..blocks.len() {
                for tx in &blocks[k].transactions {
                    log.append(&tx.to_wire_bytes());
                }
                let prev = if k == 0 {
                    node.state.genesis_hash()
                } else {
                    blocks[k - 1].header.hash()
                };
                let root = tx_root(&blocks[k].transactions);
                let header = &mut blocks[k].header;
                header.prev_block_hash = prev;
                header.tx_root = root;
                header.registry_root = log.root();
                header.registry_size = log.size();
                header.signature = Signature::from_bytes([0; 64]);
                let sig = node.key.sign(&header.signing_bytes());
                header.signature = sig;
            }
        }
        let state = ChainState::assemble_unchecked(self.config.genesis.clone(), blocks)
            .expect("validated genesis");
        let node = &mut self.nodes[i];
        node.state = state;
        node.tampered_leaf = Some(leaf_index);
        self.trace(
            i,
            TraceEvent::TamperInjected {
                height,
                leaf_index,
                resign,
            },
        );
        Ok(())
    }

    fn on_reconnect(&mut self, i: usize) {
        self.nodes[i].online = true;
        self.trace(i, TraceEvent::Online);
        let from_height = self.nodes[i].state.height();
        for p in 0..self.nodes.len() {
            if p != i {
                self.request_sync(i, p, from_height);
            }
        }
    }

    fn request_sync(&mut self, i: usize, peer: usize, from_height: u64) {
        let peer_id = self.nodes[peer].id.clone();
        self.nodes[i].sync_until = self.now + 2 * self.config.latency.max_ms + 1;
        self.trace(
            i,
            TraceEvent::SyncRequested {
                peer: peer_id,
                from_height,
            },
        );
        self.send(i, peer, Message::SyncRequest { from_height });
    }

    fn on_workload(&mut self, slot: u64) {
        for k in 0..self.config.workload.txs_per_slot {
            let candidates: Vec<usize> = (0..self.nodes.len())
                .filter(|&i| self.nodes[i].online && !self.nodes[i].halted)
                .collect();
            if candidates.is_empty() {
                return;
            }
            let entry = candidates[self.rng.gen_range(0..candidates.len())];
            let body = self.next_workload_body(entry, slot);
            let created_at = self.now_ns() + u64::from(k);
            let tx = sign_transaction(body, &self.client, created_at)
                .expect("workload bodies are valid");
            let kind = tx_kind(&tx.body);
            let node = &mut self.nodes[entry];
            node.seen_txs.insert(tx.tx_id);
            match node.state.submit(tx.clone()) {
                Ok(()) => {
                    let tx_id = tx.tx_id;
                    self.trace(entry, TraceEvent::TxSubmitted { tx_id, kind });
                    self.broadcast(entry, Message::Tx(tx), None);
                }
                Err(rejection) => {
                    let tx_id = tx.tx_id;
                    self.trace(entry, TraceEvent::TxRejected { tx_id, rejection });
                }
            }
        }
    }

    /// Picks the next client transaction that is valid against `entry`'s view.
    fn next_workload_body(&mut self, entry: usize, slot: u64) -> TxBody {
        let state = &self.nodes[entry].state;
        let pending_has = |pred: &dyn Fn(&TxBody) -> bool| state.pending().any(|tx| pred(&tx.body));
        let registry = state.registry();
        let program = ProgramRef::new(SIM_PROGRAM, SIM_PROGRAM_VERSION);
        if !registry.storages.contains_key(SIM_STORAGE) {
            if !pending_has(&|b| matches!(b, TxBody::RegisterStorage { .. })) {
                return TxBody::RegisterStorage {
                    storage_id: SIM_STORAGE.into(),
                    adapter_kind: AdapterKind::Jsonl,
                    base_uri: "sim://store".into(),
                    storage_pubkey: self.client.public(),
                };
            }
        } else if !registry.programs.contains_key(&program)
            && !pending_has(&|b| matches!(b, TxBody::RegisterProgram { .. }))
        {
            return TxBody::RegisterProgram {
                program_id: SIM_PROGRAM.into(),
                version: SIM_PROGRAM_VERSION.into(),
                code_hash: sha256(b"sim-reco v1"),
            };
        }

        let d = self.datasets_published;
        self.datasets_published += 1;
        let dataset_id = format!("sim-{d:05}");
        let t0 = self.slot_start_ns(slot);
        let storage_ready = registry.storages.contains_key(SIM_STORAGE);
        let descriptor = |kind| DatasetDescriptor {
            dataset_id: dataset_id.clone(),
            kind,
            storage_id: SIM_STORAGE.into(),
            file_refs: vec![FileRef {
                path: format!("{dataset_id}.jsonl"),
                content_hash: sha256(dataset_id.as_bytes()),
                size: 64 + d,
                format: AdapterKind::Jsonl,
            }],
            facility_id: "SIM".into(),
            time_range: TimeRange {
                start: t0,
                end: t0 + 500_000_000,
            },
            detector_geometry_hash: sha256(b"sim-geometry"),
            extra: BTreeMap::new(),
        };
        let parents: Vec<&String> = registry.datasets.keys().collect();
        if d % 3 == 2
            && storage_ready
            && registry.programs.contains_key(&program)
            && !parents.is_empty()
        {
            let parent = parents[self.rng.gen_range(0..parents.len())].clone();
            return TxBody::DeriveDataset {
                dataset: descriptor(DatasetKind::Secondary),
                parent_dataset_ids: vec![parent],
                program_id: SIM_PROGRAM.into(),
                program_version: SIM_PROGRAM_VERSION.into(),
                parameters_hash: sha256(b"sim-parameters"),
            };
        }
        TxBody::PublishDataset {
            dataset: descriptor(DatasetKind::Primary),
        }
    }

    fn on_deliver(&mut self, to: usize, from: usize, msg: Message) {
        if !self.nodes[to].online {
            return;
        }
        match msg {
            Message::Tx(tx) => self.on_tx(to, tx),
            Message::Block(block) => self.on_block(to, from, block, true),
            Message::SyncRequest { from_height } => {
                let node = &self.nodes[to];
                let blocks = node
                    .state
                    .blocks()
                    .get(from_height as usize..)
                    .map(<[Block]>::to_vec)
                    .unwrap_or_default();
                let evidence = node.evidence.clone();
                self.send(to, from, Message::SyncResponse { blocks, evidence });
            }
            Message::SyncResponse { blocks, evidence } => {
                self.nodes[to].sync_until = 0;
                for ev in evidence {
                    self.on_evidence(to, from, ev);
                }
                for block in blocks {
                    self.on_block(to, from, block, false);
                }
            }
            Message::Evidence(ev) => self.on_evidence(to, from, ev),
            Message::AuditRequest(checkpoint) => {
                let state = &self.nodes[to].state;
                let proof = state.prove_consistency(checkpoint.registry_size).ok();
                let response = Message::AuditResponse {
                    checkpoint: state.checkpoint(),
                    proof,
                };
                self.send(to, from, response);
            }
            Message::AuditResponse { checkpoint, proof } => {
                if let Some(asked) = self.nodes[to].audits_pending.remove(&from) {
                    self.on_audit_response(to, from, asked, checkpoint, proof);
                }
            }
        }
    }

    fn on_tx(&mut self, i: usize, tx: PmdTransaction) {
        let node = &mut self.nodes[i];
        if node.halted || !node.seen_txs.insert(tx.tx_id) {
            return;
        }
        if let Err(rejection) = node.state.submit(tx.clone()) {
            let tx_id = tx.tx_id;
            self.trace(i, TraceEvent::TxRejected { tx_id, rejection });
        }
    }

    fn on_block(&mut self, i: usize, from: usize, block: Block, relay: bool) {
        if self.nodes[i].halted {
            return;
        }
        let from_id = self.nodes[from].id.clone();
        let (height, slot) = (block.header.height, block.header.slot);
        let mine = self.nodes[i].state.height();
        if height < mine {
            self.on_stale_block(i, from, &block);
            return;
        }
        if height > mine {
            let node = &mut self.nodes[i];
            node.orphans.entry(height).or_insert((block, from));
            if relay && self.now >= node.sync_until {
                self.request_sync(i, from, mine);
            }
            return;
        }
        match self.nodes[i].state.apply_block(block.clone()) {
            Ok(()) => {
                let hash = block.header.hash();
                self.trace(
                    i,
                    TraceEvent::BlockAccepted {
                        height,
                        slot,
                        hash,
                        from: from_id,
                    },
                );
                if relay {
                    self.broadcast(i, Message::Block(block), Some(from));
                }
                self.drain_orphans(i);
            }
            Err(verdict) => self.trace(
                i,
                TraceEvent::BlockRejected {
                    height,
                    slot,
                    from: from_id,
                    verdict,
                },
            ),
        }
    }

    fn on_stale_block(&mut self, i: usize, from: usize, block: &Block) {
        let node = &self.nodes[i];
        let (height, slot) = (block.header.height, block.header.slot);
        if let Some(ev) = node.state.conflicting_header(&block.header) {
            self.on_evidence(i, from, ev);
            return;
        }
        let ours = &node.state.blocks()[height as usize];
        if ours.header.hash() != block.header.hash() {
            let from = self.nodes[from].id.clone();
            self.trace(
                i,
                TraceEvent::BlockIgnored {
                    height,
                    slot,
                    from,
                    reason: "conflicts with confirmed history".into(),
                },
            );
        }
    }

    fn drain_orphans(&mut self, i: usize) {
        loop {
            let mine = self.nodes[i].state.height();
            let node = &mut self.nodes[i];
            let stale: Vec<u64> = node.orphans.range(..mine).map(|(h, _)| *h).collect();
            let stale: Vec<(Block, usize)> = stale
                .into_iter()
                .filter_map(|h| node.orphans.remove(&h))
                .collect();
            for (block, from) in stale {
                self.on_stale_block(i, from, &block);
            }
            match self.nodes[i].orphans.remove(&mine) {
                Some((block, from)) => self.on_block(i, from, block, false),
                None => return,
            }
            if self.nodes[i].state.height() == mine {
                return;
            }
        }
    }

    fn on_evidence(&mut self, i: usize, from: usize, ev: EquivocationEvidence) {
        let genesis = &self.config.genesis;
        let checked = detect_equivocation(&ev.headers[0], &ev.headers[1], genesis);
        let from_id = if from == i {
            "self".to_string()
        } else {
            self.nodes[from].id.clone()
        };
        if checked.as_ref() != Some(&ev) {
            self.trace(i, TraceEvent::EvidenceRejected { from: from_id });
            return;
        }
        let node = &mut self.nodes[i];
        if node.evidence.contains(&ev) {
            return;
        }
        node.evidence.push(ev.clone());
        node.halted = true;
        node.orphans.clear();
        self.trace(
            i,
            TraceEvent::Evidence {
                creator: ev.creator.clone(),
                slot: ev.slot,
                hashes: ev.hashes(),
                from: from_id,
            },
        );
        self.broadcast(i, Message::Evidence(ev), None);
    }

    fn start_audit(&mut self, i: usize) {
        let cp = self.nodes[i].state.checkpoint();
        for peer in 0..self.nodes.len() {
            if peer != i {
                self.nodes[i].audits_pending.insert(peer, cp.clone());
            }
        }
        self.broadcast(i, Message::AuditRequest(cp), None);
    }

    fn on_audit_response(
        &mut self,
        i: usize,
        from: usize,
        asked: Checkpoint,
        remote: Checkpoint,
        proof: Option<ConsistencyProof>,
    ) {
        let state = &self.nodes[i].state;
        // Our log may have grown while the request was in flight; the peer's
        // proof is against the checkpoint we sent.
        let local = if remote.registry_size >= asked.registry_size {
            asked
        } else {
            state.checkpoint()
        };
        // The shorter log must be a prefix of the longer one; the peer proves
        // when it is ahead, we prove when it is behind.
        let verdict = if remote.registry_size >= local.registry_size {
            match proof {
                Some(p) => verify_consistency(
                    &local.registry_root,
                    local.registry_size,
                    &remote.registry_root,
                    remote.registry_size,
                    &p,
                )
                .then_some(())
                .ok_or("peer log is not an extension of ours"),
                None => Err("peer sent no proof"),
            }
        } else {
            match state.prove_consistency(remote.registry_size) {
                Ok(p) => verify_consistency(
                    &remote.registry_root,
                    remote.registry_size,
                    &local.registry_root,
                    local.registry_size,
                    &p,
                )
                .then_some(())
                .ok_or("peer log is not a prefix of ours"),
                Err(_) => Err("cannot prove against peer size"),
            }
        };
        let peer = self.nodes[from].id.clone();
        match verdict {
            Ok(()) => {
                self.nodes[i].audits_ok += 1;
                self.trace(
                    i,
                    TraceEvent::AuditOk {
                        peer,
                        local_size: local.registry_size,
                        remote_size: remote.registry_size,
                    },
                );
            }
            Err(reason) => {
                self.nodes[i].audit_failures.push(AuditFailure {
                    time: self.now,
                    peer: peer.clone(),
                    local: local.clone(),
                    remote: remote.clone(),
                    reason: reason.to_string(),
                });
                self.trace(
                    i,
                    TraceEvent::AuditFailed {
                        peer,
                        local,
                        remote,
                        reason: reason.to_string(),
                    },
                );
            }
        }
    }
}

fn tx_kind(body: &TxBody) -> String {
    match body {
        TxBody::RegisterStorage { .. } => "register_storage",
        TxBody::RegisterProgram { .. } => "register_program",
        TxBody::PublishDataset { .. } => "publish_dataset",
        TxBody::DeriveDataset { .. } => "derive_dataset",
    }
    .to_string()
}
