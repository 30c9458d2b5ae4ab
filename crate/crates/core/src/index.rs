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

//! Read-only metadata index materialized from confirmed blocks.
//!
//! Index values are immutable: folding a block returns a new [`IndexState`].
//! [`SharedIndex`] hands out snapshots so readers never wait on the folder.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::canonical;
use crate::chain::Block;
use crate::decimal::Decimal;
use crate::hash::Digest;
use crate::pmd::{
    AdapterKind, DatasetDescriptor, DatasetKind, ProgramRef, StorageRecord, TimeRange, TxBody,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IndexError {
    #[error("WatermarkError: expected block at height {expected}, got {got}")]
    Watermark { expected: u64, got: u64 },
    #[error("NotFound: {0}")]
    NotFound(String),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
}

/// Last block folded into an index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Watermark {
    pub height: Option<u64>,
    pub registry_size: u64,
}

impl Watermark {
    pub fn next_height(&self) -> u64 {
        self.height.map_or(0, |h| h + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedDataset {
    pub descriptor: DatasetDescriptor,
    pub parents: Vec<String>,
    pub program: Option<ProgramRef>,
    pub confirmed_height: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IndexState {
    datasets: BTreeMap<String, IndexedDataset>,
    storages: BTreeMap<String, StorageRecord>,
    #[serde(serialize_with = "programs_as_list")]
    programs: BTreeMap<ProgramRef, Digest>,
    children: BTreeMap<String, BTreeSet<String>>,
    by_facility: BTreeMap<String, BTreeSet<String>>,
    by_storage: BTreeMap<String, BTreeSet<String>>,
    by_start: BTreeSet<(u64, String)>,
    built_to: Watermark,
}

fn programs_as_list<S: Serializer>(
    programs: &BTreeMap<ProgramRef, Digest>,
    serializer: S,
) -> Result<S::Ok, S::Error> {
    serializer.collect_seq(programs.iter())
}

/// Conjunction of optional metadata predicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facility_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<DatasetKind>,
    /// Matches datasets whose time range overlaps this one (inclusive).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_range: Option<TimeRange>,
    /// Matches datasets whose `energy_max` extra is at least this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_min: Option<Decimal>,
    /// Matches datasets whose `energy_min` extra is at most this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_max: Option<Decimal>,
    /// Matches strict ancestors of the named dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ancestor_of: Option<String>,
    /// Matches strict descendants of the named dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descendant_of: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage_id: Option<String>,
}

impl QueryFilter {
    pub fn validate(&self) -> Result<(), IndexError> {
        let any = self.facility_id.is_some()
            || self.kind.is_some()
            || self.time_range.is_some()
            || self.energy_min.is_some()
            || self.energy_max.is_some()
            || self.ancestor_of.is_some()
            || self.descendant_of.is_some()
            || self.storage_id.is_some();
        if !any {
            return Err(IndexError::InvalidFilter(
                "at least one predicate is required".into(),
            ));
        }
        if let Some(r) = &self.time_range {
            if r.start > r.end {
                return Err(IndexError::InvalidFilter(
                    "time range start after end".into(),
                ));
            }
        }
        if let (Some(lo), Some(hi)) = (&self.energy_min, &self.energy_max) {
            if !lo.le(hi) {
                return Err(IndexError::InvalidFilter(
                    "energy_min above energy_max".into(),
                ));
            }
        }
        Ok(())
    }

    /// Per-dataset predicates; graph predicates are applied by the caller.
    fn matches_local(&self, d: &DatasetDescriptor) -> bool {
        if self
            .facility_id
            .as_ref()
            .is_some_and(|f| *f != d.facility_id)
        {
            return false;
        }
        if self.kind.is_some_and(|k| k != d.kind) {
            return false;
        }
        if self.storage_id.as_ref().is_some_and(|s| *s != d.storage_id) {
            return false;
        }
        if self.time_range.is_some_and(|r| !r.overlaps(&d.time_range)) {
            return false;
        }
        if let Some(lo) = &self.energy_min {
            if !d.energy_max().is_some_and(|m| m.ge(lo)) {
                return false;
            }
        }
        if let Some(hi) = &self.energy_max {
            if !d.energy_min().is_some_and(|m| m.le(hi)) {
                return false;
            }
        }
        true
    }
}

/// One file to fetch, fully qualified against its storage registration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchEntry {
    pub dataset_id: String,
    pub storage_id: String,
    pub base_uri: String,
    pub path: String,
    pub content_hash: Digest,
    pub size: u64,
    pub format: AdapterKind,
}

/// Files to fetch, in dataset order then file order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchPlan {
    pub entries: Vec<FetchEntry>,
}

impl FetchPlan {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry indices grouped by storage, for one fetch worker per storage.
    pub fn by_storage(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            groups.entry(e.storage_id.as_str()).or_default().push(i);
        }
        groups
    }
}

impl IndexState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds `blocks` from an empty index.
    pub fn build<'a, I: IntoIterator<Item = &'a Block>>(blocks: I) -> Result<Self, IndexError> {
        let mut index = Self::new();
        for block in blocks {
            index = index.apply_block(block)?;
        }
        Ok(index)
    }

    pub fn watermark(&self) -> Watermark {
        self.built_to
    }

    pub fn dataset(&self, id: &str) -> Option<&IndexedDataset> {
        self.datasets.get(id)
    }

    pub fn datasets(&self) -> impl Iterator<Item = &IndexedDataset> {
        self.datasets.values()
    }

    pub fn storage(&self, id: &str) -> Option<&StorageRecord> {
        self.storages.get(id)
    }

    pub fn storages(&self) -> impl Iterator<Item = &StorageRecord> {
        self.storages.values()
    }

    pub fn program(&self, program: &ProgramRef) -> Option<&Digest> {
        self.programs.get(program)
    }

    /// Canonical JSON of the whole index, for bit-level comparisons.
    pub fn snapshot_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(self).expect("index has no floats")
    }

    /// Returns the index extended by the next confirmed block.
    pub fn apply_block(&self, block: &Block) -> Result<IndexState, IndexError> {
        let expected = self.built_to.next_height();
        if block.header.height != expected {
            return Err(IndexError::Watermark {
                expected,
                got: block.header.height,
            });
        }
        let mut next = self.clone();
        for tx in &block.transactions {
            next.fold(&tx.body, block.header.height);
        }
        next.built_to = Watermark {
            height: Some(block.header.height),
            registry_size: block.header.registry_size,
        };
        Ok(next)
    }

    fn fold(&mut self, body: &TxBody, height: u64) {
        match body {
            TxBody::RegisterStorage {
                storage_id,
                adapter_kind,
                base_uri,
                storage_pubkey,
            } => {
                self.storages.insert(
                    storage_id.clone(),
                    StorageRecord {
                        storage_id: storage_id.clone(),
                        adapter_kind: *adapter_kind,
                        base_uri: base_uri.clone(),
                        storage_pubkey: *storage_pubkey,
                    },
                );
            }
            TxBody::RegisterProgram {
                program_id,
                version,
                code_hash,
            } => {
                self.programs
                    .insert(ProgramRef::new(program_id, version), *code_hash);
            }
            TxBody::PublishDataset { dataset } => self.insert_dataset(dataset, &[], None, height),
            TxBody::DeriveDataset {
                dataset,
                parent_dataset_ids,
                program_id,
                program_version,
                ..
            } => self.insert_dataset(
                dataset,
                parent_dataset_ids,
                Some(ProgramRef::new(program_id, program_version)),
                height,
            ),
        }
    }

    fn insert_dataset(
        &mut self,
        d: &DatasetDescriptor,
        parents: &[String],
        program: Option<ProgramRef>,
        height: u64,
    ) {
        let id = d.dataset_id.clone();
        for p in parents {
            self.children
                .entry(p.clone())
                .or_default()
                .insert(id.clone());
        }
        self.by_facility
            .entry(d.facility_id.clone())
            .or_default()
            .insert(id.clone());
        self.by_storage
            .entry(d.storage_id.clone())
            .or_default()
            .insert(id.clone());
        self.by_start.insert((d.time_range.start, id.clone()));
        self.datasets.insert(
            id,
            IndexedDataset {
                descriptor: d.clone(),
                parents: parents.to_vec(),
                program,
                confirmed_height: height,
            },
        );
    }

    fn closure<F>(&self, start: &str, next: F) -> BTreeSet<String>
    where
        F: Fn(&str) -> Vec<String>,
    {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<String> = next(start).into();
        while let Some(id) = queue.pop_front() {
            if seen.insert(id.clone()) {
                queue.extend(next(&id));
            }
        }
        seen
    }

    pub fn ancestors(&self, id: &str) -> BTreeSet<String> {
        self.closure(id, |d| {
            self.datasets
                .get(d)
                .map(|r| r.parents.clone())
                .unwrap_or_default()
        })
    }

    pub fn descendants(&self, id: &str) -> BTreeSet<String> {
        self.closure(id, |d| {
            self.children
                .get(d)
                .map(|c| c.iter().cloned().collect())
                .unwrap_or_default()
        })
    }

    /// Datasets matching every predicate, ordered by `(time_range.start, dataset_id)`.
    pub fn query(&self, filter: &QueryFilter) -> Result<Vec<DatasetDescriptor>, IndexError> {
        filter.validate()?;

        // Narrow with whichever secondary indexes the filter touches.
        let mut candidates: Option<BTreeSet<String>> = None;
        let mut narrow = |set: BTreeSet<String>| {
            candidates = Some(match candidates.take() {
                None => set,
                Some(c) => c.intersection(&set).cloned().collect(),
            });
        };
        if let Some(f) = &filter.facility_id {
            narrow(self.by_facility.get(f).cloned().unwrap_or_default());
        }
        if let Some(s) = &filter.storage_id {
            narrow(self.by_storage.get(s).cloned().unwrap_or_default());
        }
        if let Some(a) = &filter.ancestor_of {
            narrow(self.ancestors(a));
        }
        if let Some(d) = &filter.descendant_of {
            narrow(self.descendants(d));
        }

        let upper = filter.time_range.map(|r| r.end);
        let mut out = Vec::new();
        for (start, id) in &self.by_start {
            if upper.is_some_and(|end| *start > end) {
                break;
            }
            if candidates.as_ref().is_some_and(|c| !c.contains(id)) {
                continue;
            }
            let d = &self.datasets[id].descriptor;
            if filter.matches_local(d) {
                out.push(d.clone());
            }
        }
        Ok(out)
    }

    /// Joins dataset file references with their storage registrations.
    pub fn resolve_files(&self, dataset_ids: &[String]) -> Result<FetchPlan, IndexError> {
        let mut entries = Vec::new();
        for id in dataset_ids {
            let d = &self
                .datasets
                .get(id)
                .ok_or_else(|| IndexError::NotFound(id.clone()))?
                .descriptor;
            let storage = self
                .storages
                .get(&d.storage_id)
                .expect("chain validation guarantees the storage is registered");
            for f in &d.file_refs {
                entries.push(FetchEntry {
                    dataset_id: id.clone(),
                    storage_id: d.storage_id.clone(),
                    base_uri: storage.base_uri.clone(),
                    path: f.path.clone(),
                    content_hash: f.content_hash,
                    size: f.size,
                    format: f.format,
                });
            }
        }
        Ok(FetchPlan { entries })
    }
}

/// Latest index snapshot shared between one folder and many readers.
#[derive(Debug, Default)]
pub struct SharedIndex {
    current: RwLock<Arc<IndexState>>,
}

impl SharedIndex {
    pub fn new(initial: IndexState) -> Self {
        SharedIndex {
            current: RwLock::new(Arc::new(initial)),
        }
    }

    pub fn snapshot(&self) -> Arc<IndexState> {
        Arc::clone(&self.current.read().expect("index lock poisoned"))
    }

    /// Folds `block` off-lock and then swaps the new snapshot in.
    pub fn advance(&self, block: &Block) -> Result<Arc<IndexState>, IndexError> {
        let next = Arc::new(self.snapshot().apply_block(block)?);
        *self.current.write().expect("index lock poisoned") = Arc::clone(&next);
        Ok(next)
    }
}
