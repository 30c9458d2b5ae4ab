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

//! Provenance-metadata records: air-shower events, dataset descriptors and
//! the signed transactions that publish them to the registry.

mod registry;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{self, CanonicalError};
use crate::decimal::Decimal;
use crate::hash::{sha256, Digest};
use crate::keys::{KeyError, Keypair, PublicKey, Signature};

pub use registry::{
    provenance_trace, validate_transaction, DatasetRecord, ProgramRef, ProvenanceDag,
    ProvenanceEdge, RegistryState, Rejection, StorageRecord,
};

/// `extra` key holding the lowest event energy in a dataset (decimal PeV).
pub const EXTRA_ENERGY_MIN: &str = "energy_min";
/// `extra` key holding the highest event energy in a dataset (decimal PeV).
pub const EXTRA_ENERGY_MAX: &str = "energy_max";

#[derive(Debug, Error)]
pub enum PmdError {
    #[error("invalid transaction body: {0}")]
    InvalidBody(String),
    #[error("invalid event {event_id:?}: {reason}")]
    InvalidEvent { event_id: String, reason: String },
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error("dataset not found: {0}")]
    NotFound(String),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

/// One extensive-air-shower record as registered by a detector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EasEvent {
    pub event_id: String,
    /// Nanoseconds since the Unix epoch, UTC.
    pub registration_time: u64,
    pub facility_id: String,
    pub detector_id: String,
    pub signal_histogram: Vec<u32>,
    /// Nanoseconds per histogram bin.
    pub bin_width: u32,
    /// Reconstructed primary energy in PeV, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_estimate: Option<Decimal>,
    #[serde(default)]
    pub service_info: BTreeMap<String, String>,
}

impl EasEvent {
    pub fn validate(&self) -> Result<(), PmdError> {
        let fail = |reason: &str| {
            Err(PmdError::InvalidEvent {
                event_id: self.event_id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.registration_time == 0 {
            return fail("registration_time must be positive");
        }
        if self.bin_width == 0 {
            return fail("bin_width must be positive");
        }
        Ok(())
    }
}

/// Time span, energy bounds and count of a sequence of events.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventSummary {
    pub count: u64,
    pub time_range: Option<TimeRange>,
    pub energy_min: Option<Decimal>,
    pub energy_max: Option<Decimal>,
}

impl EventSummary {
    pub fn of<'a, I: IntoIterator<Item = &'a EasEvent>>(events: I) -> Self {
        let mut s = Self::default();
        for e in events {
            s.observe(e);
        }
        s
    }

    pub fn observe(&mut self, e: &EasEvent) {
        self.count += 1;
        let t = e.registration_time;
        self.time_range = Some(match self.time_range {
            None => TimeRange { start: t, end: t },
            Some(r) => TimeRange {
                start: r.start.min(t),
                end: r.end.max(t),
            },
        });
        if let Some(energy) = &e.energy_estimate {
            if self
                .energy_min
                .as_ref()
                .is_none_or(|m| energy.cmp_value(m).is_lt())
            {
                self.energy_min = Some(energy.clone());
            }
            if self
                .energy_max
                .as_ref()
                .is_none_or(|m| energy.cmp_value(m).is_gt())
            {
                self.energy_max = Some(energy.clone());
            }
        }
    }

    /// `extra` entries recording the energy bounds, if any event had one.
    pub fn energy_extra(&self) -> BTreeMap<String, String> {
        let mut extra = BTreeMap::new();
        if let Some(e) = &self.energy_min {
            extra.insert(EXTRA_ENERGY_MIN.to_string(), e.as_str().to_string());
        }
        if let Some(e) = &self.energy_max {
            extra.insert(EXTRA_ENERGY_MAX.to_string(), e.as_str().to_string());
        }
        extra
    }
}

/// On-disk event encoding, which is also the kind of adapter a storage uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterKind {
    Jsonl,
    Packed,
}

impl AdapterKind {
    pub fn extension(self) -> &'static str {
        match self {
            AdapterKind::Jsonl => "jsonl",
            AdapterKind::Packed => "pack",
        }
    }
}

impl fmt::Display for AdapterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdapterKind::Jsonl => "jsonl",
            AdapterKind::Packed => "packed",
        })
    }
}

impl std::str::FromStr for AdapterKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(AdapterKind::Jsonl),
            "packed" => Ok(AdapterKind::Packed),
            other => Err(format!("unknown adapter kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Primary,
    Secondary,
}

impl std::str::FromStr for DatasetKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "primary" => Ok(DatasetKind::Primary),
            "secondary" => Ok(DatasetKind::Secondary),
            other => Err(format!("unknown dataset kind {other:?}")),
        }
    }
}

/// Inclusive time interval in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: u64,
    pub end: u64,
}

impl TimeRange {
    pub fn overlaps(&self, other: &TimeRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// A file belonging to a dataset, addressed by path within its storage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub content_hash: Digest,
    pub size: u64,
    pub format: AdapterKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub dataset_id: String,
    pub kind: DatasetKind,
    pub storage_id: String,
    pub file_refs: Vec<FileRef>,
    pub facility_id: String,
    pub time_range: TimeRange,
    /// Hash of the off-chain geometry/calibration blob.
    pub detector_geometry_hash: Digest,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

impl DatasetDescriptor {
    pub fn energy_min(&self) -> Option<Decimal> {
        self.extra
            .get(EXTRA_ENERGY_MIN)
            .and_then(|s| Decimal::parse(s).ok())
    }

    pub fn energy_max(&self) -> Option<Decimal> {
        self.extra
            .get(EXTRA_ENERGY_MAX)
            .and_then(|s| Decimal::parse(s).ok())
    }

    fn validate(&self) -> Result<(), PmdError> {
        let bad = |m: String| Err(PmdError::InvalidBody(m));
        if self.dataset_id.is_empty() || self.storage_id.is_empty() {
            return bad("dataset_id and storage_id must be non-empty".into());
        }
        if self.file_refs.is_empty() {
            return bad(format!("dataset {} has no files", self.dataset_id));
        }
        let mut paths = BTreeSet::new();
        for f in &self.file_refs {
            if f.path.is_empty() || !paths.insert(f.path.as_str()) {
                return bad(format!(
                    "dataset {} has an empty or repeated path",
                    self.dataset_id
                ));
            }
        }
        if self.time_range.start > self.time_range.end {
            return bad(format!(
                "dataset {} has an inverted time range",
                self.dataset_id
            ));
        }
        for key in [EXTRA_ENERGY_MIN, EXTRA_ENERGY_MAX] {
            if let Some(v) = self.extra.get(key) {
                if Decimal::parse(v).is_err() {
                    return bad(format!("extra.{key} is not a non-negative decimal: {v:?}"));
                }
            }
        }
        Ok(())
    }
}

/// The signed payload of a registry transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TxBody {
    RegisterStorage {
        storage_id: String,
        adapter_kind: AdapterKind,
        base_uri: String,
        storage_pubkey: PublicKey,
    },
    RegisterProgram {
        program_id: String,
        version: String,
        code_hash: Digest,
    },
    PublishDataset {
        dataset: DatasetDescriptor,
    },
    DeriveDataset {
        dataset: DatasetDescriptor,
        parent_dataset_ids: Vec<String>,
        program_id: String,
        program_version: String,
        parameters_hash: Digest,
    },
}

impl TxBody {
    pub fn validate(&self) -> Result<(), PmdError> {
        let bad = |m: &str| Err(PmdError::InvalidBody(m.to_string()));
        match self {
            TxBody::RegisterStorage {
                storage_id,
                base_uri,
                ..
            } => {
                if storage_id.is_empty() || base_uri.is_empty() {
                    return bad("storage_id and base_uri must be non-empty");
                }
            }
            TxBody::RegisterProgram {
                program_id,
                version,
                ..
            } => {
                if program_id.is_empty() || version.is_empty() {
                    return bad("program_id and version must be non-empty");
                }
            }
            TxBody::PublishDataset { dataset } => {
                dataset.validate()?;
                if dataset.kind != DatasetKind::Primary {
                    return bad("secondary datasets must be published with their parents");
                }
            }
            TxBody::DeriveDataset {
                dataset,
                parent_dataset_ids,
                program_id,
                program_version,
                ..
            } => {
                dataset.validate()?;
                if dataset.kind != DatasetKind::Secondary {
                    return bad("derived datasets must be secondary");
                }
                if parent_dataset_ids.is_empty() {
                    return bad("derived dataset names no parents");
                }
                let unique: BTreeSet<_> = parent_dataset_ids.iter().collect();
                if unique.len() != parent_dataset_ids.len() {
                    return bad("repeated parent dataset");
                }
                if unique.contains(&dataset.dataset_id) {
                    return bad("dataset cannot be its own parent");
                }
                if program_id.is_empty() || program_version.is_empty() {
                    return bad("program_id and program_version must be non-empty");
                }
            }
        }
        Ok(())
    }

    /// The dataset this body publishes, if any.
    pub fn dataset(&self) -> Option<&DatasetDescriptor> {
        match self {
            TxBody::PublishDataset { dataset } | TxBody::DeriveDataset { dataset, .. } => {
                Some(dataset)
            }
            _ => None,
        }
    }
}

/// Deterministic bytes of a transaction body; input to both `tx_id` and the signature.
pub fn canonical_bytes(body: &TxBody) -> Result<Vec<u8>, PmdError> {
    body.validate()?;
    Ok(canonical::to_canonical_bytes(body)?)
}

/// A signed registry record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PmdTransaction {
    pub body: TxBody,
    pub creator: PublicKey,
    pub created_at: u64,
    pub signature: Signature,
    pub tx_id: Digest,
}

impl PmdTransaction {
    /// Canonical wire form; these bytes are what the Merkle log commits to.
    pub fn to_wire_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(self).expect("transactions contain no floats")
    }

    pub fn from_wire_bytes(bytes: &[u8]) -> Result<Self, PmdError> {
        Ok(canonical::from_slice(bytes)?)
    }

    /// Checks the id and signature only, not registry state.
    pub fn verify_integrity(&self) -> Result<(), Rejection> {
        let bytes =
            canonical_bytes(&self.body).map_err(|e| Rejection::InvalidBody(e.to_string()))?;
        if sha256(&bytes) != self.tx_id {
            return Err(Rejection::BadTxId);
        }
        if !self.creator.verify(&bytes, &self.signature) {
            return Err(Rejection::BadSignature);
        }
        Ok(())
    }
}

pub fn sign_transaction(
    body: TxBody,
    key: &Keypair,
    created_at: u64,
) -> Result<PmdTransaction, PmdError> {
    let bytes = canonical_bytes(&body)?;
    Ok(PmdTransaction {
        tx_id: sha256(&bytes),
        signature: key.sign(&bytes),
        creator: key.public(),
        created_at,
        body,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::to_canonical_bytes;

    pub(crate) fn descriptor(id: &str, kind: DatasetKind) -> DatasetDescriptor {
        DatasetDescriptor {
            dataset_id: id.to_string(),
            kind,
            storage_id: "s1".into(),
            file_refs: vec![FileRef {
                path: format!("{id}/events.jsonl"),
                content_hash: sha256(id.as_bytes()),
                size: 10,
                format: AdapterKind::Jsonl,
            }],
            facility_id: "TAIGA".into(),
            time_range: TimeRange { start: 10, end: 20 },
            detector_geometry_hash: sha256(b"geometry"),
            extra: BTreeMap::from([("energy_max".into(), "2.5".into())]),
        }
    }

    fn publish(id: &str) -> TxBody {
        TxBody::PublishDataset {
            dataset: descriptor(id, DatasetKind::Primary),
        }
    }

    #[test]
    fn canonical_fixpoint() {
        let body = publish("d0");
        let bytes = canonical_bytes(&body).unwrap();
        let parsed: TxBody = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(canonical_bytes(&parsed).unwrap(), bytes);
        assert!(canonical::is_canonical(&bytes));
    }

    #[test]
    fn map_value_change_changes_id() {
        let a = publish("d0");
        let mut b = publish("d0");
        if let TxBody::PublishDataset { dataset } = &mut b {
            dataset.extra.insert("energy_max".into(), "2.6".into());
        }
        let key = Keypair::from_seed([1; 32]);
        let ta = sign_transaction(a.clone(), &key, 1).unwrap();
        let tb = sign_transaction(b.clone(), &key, 1).unwrap();
        assert_ne!(canonical_bytes(&a).unwrap(), canonical_bytes(&b).unwrap());
        assert_ne!(ta.tx_id, tb.tx_id);
    }

    #[test]
    fn extra_insertion_order_irrelevant() {
        let keys = ["zeta", "alpha", "mid", "beta", "omega"];
        let mut forward = descriptor("d", DatasetKind::Primary);
        let mut backward = forward.clone();
        forward.extra.clear();
        backward.extra.clear();
        for k in keys {
            forward.extra.insert(k.into(), k.to_uppercase());
        }
        for k in keys.iter().rev() {
            backward.extra.insert((*k).into(), k.to_uppercase());
        }
        assert_eq!(
            to_canonical_bytes(&forward).unwrap(),
            to_canonical_bytes(&backward).unwrap()
        );
    }

    #[test]
    fn sign_and_verify() {
        let key = Keypair::from_seed([9; 32]);
        let tx = sign_transaction(publish("d0"), &key, 5).unwrap();
        assert_eq!(tx.verify_integrity(), Ok(()));
        assert_eq!(tx.tx_id, sha256(&canonical_bytes(&tx.body).unwrap()));

        let mut wrong_key = tx.clone();
        wrong_key.creator = Keypair::from_seed([10; 32]).public();
        assert_eq!(wrong_key.verify_integrity(), Err(Rejection::BadSignature));
    }

    #[test]
    fn body_mutation_after_signing_detected() {
        let key = Keypair::from_seed([9; 32]);
        let tx = sign_transaction(publish("d0"), &key, 5).unwrap();
        let wire = tx.to_wire_bytes();
        // Flip a byte inside the facility string of the serialized body.
        let pos = wire
            .windows(5)
            .position(|w| w == b"TAIGA")
            .expect("facility present");
        let mut tampered = wire.clone();
        tampered[pos] = b'X';
        let parsed = PmdTransaction::from_wire_bytes(&tampered).unwrap();
        assert_eq!(parsed.verify_integrity(), Err(Rejection::BadTxId));

        // Same body change with a recomputed id still fails on the signature.
        let mut reid = parsed.clone();
        reid.tx_id = sha256(&canonical_bytes(&reid.body).unwrap());
        assert_eq!(reid.verify_integrity(), Err(Rejection::BadSignature));
    }

    #[test]
    fn wire_format_keys() {
        let key = Keypair::from_seed([2; 32]);
        let tx = sign_transaction(publish("d0"), &key, 42).unwrap();
        let s = String::from_utf8(tx.to_wire_bytes()).unwrap();
        assert!(s.starts_with("{\"body\":{"));
        let tail = &s[s.rfind("},\"created_at\"").unwrap()..];
        assert!(tail.starts_with("},\"created_at\":42,\"creator\":\""));
        assert!(s.ends_with(&format!("\"tx_id\":\"{}\"}}", tx.tx_id)));
        assert_eq!(PmdTransaction::from_wire_bytes(s.as_bytes()).unwrap(), tx);
    }

    #[test]
    fn structural_validation() {
        let mut d = descriptor("d", DatasetKind::Primary);
        d.file_refs.clear();
        assert!(matches!(
            canonical_bytes(&TxBody::PublishDataset { dataset: d }),
            Err(PmdError::InvalidBody(_))
        ));

        let mut d = descriptor("d", DatasetKind::Primary);
        d.time_range = TimeRange { start: 5, end: 4 };
        assert!(canonical_bytes(&TxBody::PublishDataset { dataset: d }).is_err());

        let mut d = descriptor("d", DatasetKind::Primary);
        d.extra.insert(EXTRA_ENERGY_MIN.into(), "-1".into());
        assert!(canonical_bytes(&TxBody::PublishDataset { dataset: d }).is_err());

        let derive = TxBody::DeriveDataset {
            dataset: descriptor("d1", DatasetKind::Secondary),
            parent_dataset_ids: vec![],
            program_id: "p".into(),
            program_version: "1".into(),
            parameters_hash: sha256(b""),
        };
        assert!(canonical_bytes(&derive).is_err());

        assert!(canonical_bytes(&TxBody::PublishDataset {
            dataset: descriptor("d", DatasetKind::Secondary)
        })
        .is_err());
    }

    #[test]
    fn event_validation() {
        let mut e = EasEvent {
            event_id: "e".into(),
            registration_time: 1,
            facility_id: "KASCADE".into(),
            detector_id: "det".into(),
            signal_histogram: vec![0, 3],
            bin_width: 25,
            energy_estimate: None,
            service_info: BTreeMap::new(),
        };
        assert!(e.validate().is_ok());
        e.bin_width = 0;
        assert!(e.validate().is_err());
        e.bin_width = 1;
        e.registration_time = 0;
        assert!(e.validate().is_err());
    }

    #[test]
    fn malformed_secret_is_key_error() {
        let err: PmdError = Keypair::from_secret_hex("zz").unwrap_err().into();
        assert!(matches!(err, PmdError::Key(KeyError::MalformedSecret)));
    }
}
