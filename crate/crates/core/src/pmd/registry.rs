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

//! Registry state folded from confirmed transactions, admission checks and
//! provenance tracing.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AdapterKind, DatasetDescriptor, PmdError, PmdTransaction, TxBody};
use crate::hash::Digest;
use crate::keys::PublicKey;

/// Why a transaction was refused.
#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail")]
pub enum Rejection {
    #[error("InvalidBody: {0}")]
    InvalidBody(String),
    #[error("BadTxId")]
    BadTxId,
    #[error("BadSignature")]
    BadSignature,
    #[error("UnknownStorage: {0}")]
    UnknownStorage(String),
    #[error("UnknownParent: {0}")]
    UnknownParent(String),
    #[error("UnknownProgram: {0}")]
    UnknownProgram(ProgramRef),
    #[error("DuplicateDataset: {0}")]
    DuplicateDataset(String),
    #[error("DuplicateStorage: {0}")]
    DuplicateStorage(String),
    #[error("DuplicateProgram: {0}")]
    DuplicateProgram(ProgramRef),
}

impl Rejection {
    pub fn name(&self) -> &'static str {
        match self {
            Rejection::InvalidBody(_) => "InvalidBody",
            Rejection::BadTxId => "BadTxId",
            Rejection::BadSignature => "BadSignature",
            Rejection::UnknownStorage(_) => "UnknownStorage",
            Rejection::UnknownParent(_) => "UnknownParent",
            Rejection::UnknownProgram(_) => "UnknownProgram",
            Rejection::DuplicateDataset(_) => "DuplicateDataset",
            Rejection::DuplicateStorage(_) => "DuplicateStorage",
            Rejection::DuplicateProgram(_) => "DuplicateProgram",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProgramRef {
    pub program_id: String,
    pub version: String,
}

impl ProgramRef {
    pub fn new(program_id: impl Into<String>, version: impl Into<String>) -> Self {
        ProgramRef {
            program_id: program_id.into(),
            version: version.into(),
        }
    }
}

impl fmt::Display for ProgramRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.program_id, self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageRecord {
    pub storage_id: String,
    pub adapter_kind: AdapterKind,
    pub base_uri: String,
    pub storage_pubkey: PublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub descriptor: DatasetDescriptor,
    /// Empty for primary datasets.
    pub parents: Vec<String>,
    pub program: Option<ProgramRef>,
    pub parameters_hash: Option<Digest>,
    pub tx_id: Digest,
    pub creator: PublicKey,
}

/// Everything the registry knows after a sequence of confirmed transactions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegistryState {
    pub storages: BTreeMap<String, StorageRecord>,
    pub programs: BTreeMap<ProgramRef, Digest>,
    pub datasets: BTreeMap<String, DatasetRecord>,
}

impl RegistryState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates `tx` and, when accepted, folds it in.
    pub fn confirm(&mut self, tx: &PmdTransaction) -> Result<(), Rejection> {
        validate_transaction(tx, self)?;
        self.apply_unchecked(tx);
        Ok(())
    }

    /// Folds a transaction that has already passed validation.
    pub fn apply_unchecked(&mut self, tx: &PmdTransaction) {
        match &tx.body {
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
            TxBody::PublishDataset { dataset } => {
                self.datasets.insert(
                    dataset.dataset_id.clone(),
                    DatasetRecord {
                        descriptor: dataset.clone(),
                        parents: Vec::new(),
                        program: None,
                        parameters_hash: None,
                        tx_id: tx.tx_id,
                        creator: tx.creator,
                    },
                );
            }
            TxBody::DeriveDataset {
                dataset,
                parent_dataset_ids,
                program_id,
                program_version,
                parameters_hash,
            } => {
                self.datasets.insert(
                    dataset.dataset_id.clone(),
                    DatasetRecord {
                        descriptor: dataset.clone(),
                        parents: parent_dataset_ids.clone(),
                        program: Some(ProgramRef::new(program_id, program_version)),
                        parameters_hash: Some(*parameters_hash),
                        tx_id: tx.tx_id,
                        creator: tx.creator,
                    },
                );
            }
        }
    }
}

/// Admission check against the registry as of the last confirmed transaction.
pub fn validate_transaction(tx: &PmdTransaction, state: &RegistryState) -> Result<(), Rejection> {
    tx.verify_integrity()?;
    match &tx.body {
        TxBody::RegisterStorage { storage_id, .. } => {
            if state.storages.contains_key(storage_id) {
                return Err(Rejection::DuplicateStorage(storage_id.clone()));
            }
        }
        TxBody::RegisterProgram {
            program_id,
            version,
            ..
        } => {
            let key = ProgramRef::new(program_id, version);
            if state.programs.contains_key(&key) {
                return Err(Rejection::DuplicateProgram(key));
            }
        }
        TxBody::PublishDataset { dataset } => {
            check_dataset(dataset, state)?;
        }
        TxBody::DeriveDataset {
            dataset,
            parent_dataset_ids,
            program_id,
            program_version,
            ..
        } => {
            check_dataset(dataset, state)?;
            let program = ProgramRef::new(program_id, program_version);
            if !state.programs.contains_key(&program) {
                return Err(Rejection::UnknownProgram(program));
            }
            if let Some(missing) = parent_dataset_ids
                .iter()
                .find(|p| !state.datasets.contains_key(*p))
            {
                return Err(Rejection::UnknownParent(missing.clone()));
            }
        }
    }
    Ok(())
}

fn check_dataset(dataset: &DatasetDescriptor, state: &RegistryState) -> Result<(), Rejection> {
    if state.datasets.contains_key(&dataset.dataset_id) {
        return Err(Rejection::DuplicateDataset(dataset.dataset_id.clone()));
    }
    if !state.storages.contains_key(&dataset.storage_id) {
        return Err(Rejection::UnknownStorage(dataset.storage_id.clone()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProvenanceEdge {
    pub child: String,
    pub parent: String,
    pub program: ProgramRef,
}

/// Ancestor closure of one dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceDag {
    pub root: String,
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<ProvenanceEdge>,
}

impl ProvenanceDag {
    pub fn parents_of(&self, child: &str) -> Vec<&ProvenanceEdge> {
        self.edges.iter().filter(|e| e.child == child).collect()
    }

    /// Kahn's algorithm over the edge set.
    pub fn is_acyclic(&self) -> bool {
        let mut indegree: BTreeMap<&str, usize> =
            self.nodes.iter().map(|n| (n.as_str(), 0)).collect();
        for e in &self.edges {
            *indegree.entry(e.parent.as_str()).or_default() += 1;
        }
        let mut queue: VecDeque<&str> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(n, _)| *n)
            .collect();
        let mut seen = 0;
        while let Some(n) = queue.pop_front() {
            seen += 1;
            for e in self.edges.iter().filter(|e| e.child == n) {
                let d = indegree.get_mut(e.parent.as_str()).expect("parent indexed");
                *d -= 1;
                if *d == 0 {
                    queue.push_back(&e.parent);
                }
            }
        }
        seen == indegree.len()
    }
}

pub fn provenance_trace(
    dataset_id: &str,
    state: &RegistryState,
) -> Result<ProvenanceDag, PmdError> {
    if !state.datasets.contains_key(dataset_id) {
        return Err(PmdError::NotFound(dataset_id.to_string()));
    }
    let mut nodes = BTreeSet::new();
    let mut edges = BTreeSet::new();
    let mut queue = VecDeque::from([dataset_id.to_string()]);
    while let Some(id) = queue.pop_front() {
        if !nodes.insert(id.clone()) {
            continue;
        }
        let record = &state.datasets[&id];
        if let Some(program) = &record.program {
            for parent in &record.parents {
                edges.insert(ProvenanceEdge {
                    child: id.clone(),
                    parent: parent.clone(),
                    program: program.clone(),
                });
                queue.push_back(parent.clone());
            }
        }
    }
    Ok(ProvenanceDag {
        root: dataset_id.to_string(),
        nodes,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::sha256;
    use crate::keys::Keypair;
    use crate::pmd::{sign_transaction, DatasetKind, FileRef, TimeRange};

    fn key() -> Keypair {
        Keypair::from_seed([4; 32])
    }

    fn descriptor(id: &str, kind: DatasetKind) -> DatasetDescriptor {
        DatasetDescriptor {
            dataset_id: id.into(),
            kind,
            storage_id: "s1".into(),
            file_refs: vec![FileRef {
                path: format!("{id}.jsonl"),
                content_hash: sha256(id.as_bytes()),
                size: 1,
                format: AdapterKind::Jsonl,
            }],
            facility_id: "KASCADE".into(),
            time_range: TimeRange { start: 1, end: 2 },
            detector_geometry_hash: sha256(b"g"),
            extra: Default::default(),
        }
    }

    fn tx(body: TxBody) -> PmdTransaction {
        sign_transaction(body, &key(), 1).unwrap()
    }

    fn storage() -> PmdTransaction {
        tx(TxBody::RegisterStorage {
            storage_id: "s1".into(),
            adapter_kind: AdapterKind::Jsonl,
            base_uri: "/data/s1".into(),
            storage_pubkey: key().public(),
        })
    }

    fn program(version: &str) -> PmdTransaction {
        tx(TxBody::RegisterProgram {
            program_id: "reco".into(),
            version: version.into(),
            code_hash: sha256(version.as_bytes()),
        })
    }

    fn publish(id: &str) -> PmdTransaction {
        tx(TxBody::PublishDataset {
            dataset: descriptor(id, DatasetKind::Primary),
        })
    }

    fn derive(id: &str, parents: &[&str], version: &str) -> PmdTransaction {
        tx(TxBody::DeriveDataset {
            dataset: descriptor(id, DatasetKind::Secondary),
            parent_dataset_ids: parents.iter().map(|s| s.to_string()).collect(),
            program_id: "reco".into(),
            program_version: version.into(),
            parameters_hash: sha256(b"params"),
        })
    }

    fn base_state() -> RegistryState {
        let mut s = RegistryState::new();
        s.confirm(&storage()).unwrap();
        s.confirm(&program("1.0")).unwrap();
        s
    }

    #[test]
    fn publish_to_registered_storage() {
        let mut s = base_state();
        assert_eq!(validate_transaction(&publish("d0"), &s), Ok(()));
        s.confirm(&publish("d0")).unwrap();
        assert!(s.datasets.contains_key("d0"));
    }

    #[test]
    fn rejection_reasons_are_distinct() {
        let mut s = base_state();
        assert_eq!(
            validate_transaction(&derive("d1", &["nope"], "1.0"), &s),
            Err(Rejection::UnknownParent("nope".into()))
        );
        s.confirm(&publish("d0")).unwrap();
        assert_eq!(
            validate_transaction(&derive("d1", &["d0"], "9.9"), &s),
            Err(Rejection::UnknownProgram(ProgramRef::new("reco", "9.9")))
        );
        assert_eq!(
            validate_transaction(&publish("d0"), &s),
            Err(Rejection::DuplicateDataset("d0".into()))
        );
        assert_eq!(
            validate_transaction(&storage(), &s),
            Err(Rejection::DuplicateStorage("s1".into()))
        );
        assert_eq!(
            validate_transaction(&publish("x"), &RegistryState::new()),
            Err(Rejection::UnknownStorage("s1".into()))
        );
        let mut forged = publish("d9");
        forged.signature = key().sign(b"other");
        assert_eq!(
            validate_transaction(&forged, &s),
            Err(Rejection::BadSignature)
        );
    }

    #[test]
    fn shuffled_batch_never_admits_child_first() {
        let batch = [
            publish("d0"),
            derive("d1", &["d0"], "1.0"),
            derive("d2", &["d1"], "1.0"),
        ];
        // All 6 orders: a child is only accepted once its parent is in.
        let orders = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for order in orders {
            let mut s = base_state();
            for &i in &order {
                if s.confirm(&batch[i]).is_ok() {
                    if let Some(rec) = s
                        .datasets
                        .get(batch[i].body.dataset().unwrap().dataset_id.as_str())
                    {
                        for p in &rec.parents {
                            assert!(s.datasets.contains_key(p));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn trace_primary_is_single_node() {
        let mut s = base_state();
        s.confirm(&publish("d0")).unwrap();
        let dag = provenance_trace("d0", &s).unwrap();
        assert_eq!(dag.nodes.len(), 1);
        assert!(dag.edges.is_empty());
        assert!(matches!(
            provenance_trace("zz", &s),
            Err(PmdError::NotFound(_))
        ));
    }

    #[test]
    fn trace_chain_with_program_annotations() {
        let mut s = base_state();
        s.confirm(&program("2.0")).unwrap();
        s.confirm(&publish("p")).unwrap();
        s.confirm(&derive("d1", &["p"], "1.0")).unwrap();
        s.confirm(&derive("d2", &["d1"], "2.0")).unwrap();
        let dag = provenance_trace("d2", &s).unwrap();
        let expected_edges = BTreeSet::from([
            ProvenanceEdge {
                child: "d1".into(),
                parent: "p".into(),
                program: ProgramRef::new("reco", "1.0"),
            },
            ProvenanceEdge {
                child: "d2".into(),
                parent: "d1".into(),
                program: ProgramRef::new("reco", "2.0"),
            },
        ]);
        assert_eq!(
            dag.nodes,
            BTreeSet::from(["p".into(), "d1".into(), "d2".into()])
        );
        assert_eq!(dag.edges, expected_edges);
        assert!(dag.is_acyclic());
    }

    #[test]
    fn trace_diamond() {
        let mut s = base_state();
        s.confirm(&publish("g")).unwrap();
        s.confirm(&derive("a", &["g"], "1.0")).unwrap();
        s.confirm(&derive("b", &["g"], "1.0")).unwrap();
        s.confirm(&derive("c", &["a", "b"], "1.0")).unwrap();
        let dag = provenance_trace("c", &s).unwrap();
        assert_eq!(dag.nodes.len(), 4);
        assert_eq!(dag.edges.len(), 4);
        assert_eq!(dag.parents_of("c").len(), 2);
        assert!(dag.is_acyclic());
    }
}
