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

//! Shared fixture: a one-handler chain with local storages.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use tempfile::TempDir;

use dds_core::aggregation::StorageSet;
use dds_core::chain::{Block, ChainState, GenesisConfig, HandlerEntry, OrderingMode};
use dds_core::decimal::Decimal;
use dds_core::index::IndexState;
use dds_core::keys::Keypair;
use dds_core::pmd::{
    sign_transaction, AdapterKind, DatasetDescriptor, DatasetKind, EasEvent, EventSummary,
    TimeRange, TxBody,
};
use dds_core::sha256;
use dds_core::storage::{put_events_file, LocalDirAdapter, StorageAdapter, StorageHandle};

pub const PROGRAM: &str = "agg";
pub const PROGRAM_VERSION: &str = "1";

pub struct World {
    pub key: Keypair,
    pub chain: ChainState,
    pub slot: u64,
    pub dirs: Vec<TempDir>,
    pub adapters: Vec<Arc<LocalDirAdapter>>,
}

impl World {
    /// Registers one storage per kind (ids `s0`, `s1`, ...) and the test program.
    pub fn new(kinds: &[AdapterKind]) -> Self {
        let key = Keypair::from_seed([7; 32]);
        let genesis = GenesisConfig {
            handlers: vec![HandlerEntry {
                handler_id: "h0".into(),
                public_key: key.public(),
            }],
            slot_duration: 1000,
            ordering_mode: OrderingMode::Fixed,
            genesis_time: 1_000,
        };
        let mut world = World {
            key,
            chain: ChainState::new(genesis).unwrap(),
            slot: 0,
            dirs: Vec::new(),
            adapters: Vec::new(),
        };
        for (i, kind) in kinds.iter().enumerate() {
            let dir = TempDir::new().unwrap();
            let id = format!("s{i}");
            let handle = StorageHandle::create(dir.path(), &id, *kind).unwrap();
            world.submit(TxBody::RegisterStorage {
                storage_id: id,
                adapter_kind: *kind,
                base_uri: dir.path().to_string_lossy().into_owned(),
                storage_pubkey: Keypair::from_seed([i as u8 + 100; 32]).public(),
            });
            world.adapters.push(Arc::new(LocalDirAdapter::new(handle)));
            world.dirs.push(dir);
        }
        world.submit(TxBody::RegisterProgram {
            program_id: PROGRAM.into(),
            version: PROGRAM_VERSION.into(),
            code_hash: sha256(b"agg v1"),
        });
        world.commit();
        world
    }

    pub fn submit(&mut self, body: TxBody) {
        let tx = sign_transaction(body, &self.key, self.slot).unwrap();
        self.chain.submit(tx).unwrap();
    }

    pub fn commit(&mut self) -> Block {
        let now = self.chain.genesis().slot_start(self.slot);
        let block = self
            .chain
            .produce_block(self.slot, &self.key, now)
            .unwrap()
            .block;
        self.chain.apply_block(block.clone()).unwrap();
        self.slot += 1;
        block
    }

    /// Stores one file per event list and submits a `PublishDataset`.
    pub fn publish_primary(
        &mut self,
        storage: usize,
        dataset_id: &str,
        facility: &str,
        files: &[Vec<EasEvent>],
    ) -> DatasetDescriptor {
        let adapter = self.adapters[storage].clone();
        let ext = adapter.kind().extension();
        let mut refs = Vec::new();
        for (i, events) in files.iter().enumerate() {
            let path = format!("{dataset_id}/part-{i}.{ext}");
            refs.push(put_events_file(adapter.as_ref(), &path, events).unwrap());
        }
        let summary = EventSummary::of(files.iter().flatten());
        let dataset = DatasetDescriptor {
            dataset_id: dataset_id.into(),
            kind: DatasetKind::Primary,
            storage_id: adapter.storage_id().into(),
            file_refs: refs,
            facility_id: facility.into(),
            time_range: summary.time_range.unwrap_or(TimeRange { start: 1, end: 1 }),
            detector_geometry_hash: sha256(facility.as_bytes()),
            extra: summary.energy_extra(),
        };
        self.submit(TxBody::PublishDataset {
            dataset: dataset.clone(),
        });
        dataset
    }

    pub fn index(&self) -> IndexState {
        IndexState::build(self.chain.blocks()).unwrap()
    }

    pub fn storage_set(&self) -> StorageSet {
        self.adapters
            .iter()
            .map(|a| {
                (
                    a.storage_id().to_string(),
                    a.clone() as Arc<dyn StorageAdapter>,
                )
            })
            .collect()
    }
}

pub fn event(id: &str, t: u64, energy: Option<&str>) -> EasEvent {
    EasEvent {
        event_id: id.into(),
        registration_time: t,
        facility_id: "TAIGA".into(),
        detector_id: "hiscore-1".into(),
        signal_histogram: vec![3, 1, 4, 1, 5],
        bin_width: 10,
        energy_estimate: energy.map(|e| Decimal::parse(e).unwrap()),
        service_info: BTreeMap::new(),
    }
}

/// `n` events sorted by time, with occasional duplicate timestamps and
/// energies in milli-PeV steps (some missing).
pub fn random_events<R: Rng>(rng: &mut R, prefix: &str, n: usize, t0: u64) -> Vec<EasEvent> {
    let mut t = t0;
    (0..n)
        .map(|i| {
            t += rng.gen_range(0..4);
            let energy = if rng.gen_bool(0.15) {
                None
            } else {
                Some(Decimal::from_scaled(rng.gen_range(0..5000), 3))
            };
            let mut e = event(&format!("{prefix}-{i:04}"), t, None);
            e.energy_estimate = energy;
            e.signal_histogram = (0..rng.gen_range(0..6)).map(|_| rng.gen()).collect();
            e
        })
        .collect()
}

/// Decimal string to milli-units, independent of the library's comparator.
pub fn milli(s: &str) -> u64 {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    assert!(frac.len() <= 3, "oracle supports three decimals");
    let frac = format!("{frac:0<3}");
    int.parse::<u64>().unwrap() * 1000 + frac.parse::<u64>().unwrap()
}

/// Canonical JSONL of events via `serde_json::Value`, whose maps are sorted.
pub fn oracle_jsonl(events: &[EasEvent]) -> Vec<u8> {
    let mut out = Vec::new();
    for e in events {
        let v = serde_json::to_value(e).unwrap();
        out.extend(serde_json::to_vec(&v).unwrap());
        out.push(b'\n');
    }
    out
}
