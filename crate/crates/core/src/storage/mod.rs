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

//! Storage adapters: one interface over repositories that keep events in
//! different native formats.
//!
//! The reference backend is a local directory with a `storage.json`
//! manifest. Callers only see [`StorageAdapter`], so a network-backed
//! implementation can replace it without touching them.

mod jsonl;
mod local;
mod packed;

use std::sync::Arc;

use thiserror::Error;

use crate::hash::Digest;
use crate::pmd::{AdapterKind, EasEvent, FileRef};

pub use local::{LocalDirAdapter, StorageHandle, StorageManifest, MANIFEST_FILE};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("record {record}: {reason}")]
pub struct DecodeError {
    pub record: usize,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("NotFound: {0}")]
    NotFound(String),
    #[error("PathViolation: {0:?}")]
    PathViolation(String),
    #[error("AlreadyExists: {0}")]
    AlreadyExists(String),
    #[error("DecodeError in {path}: {source}")]
    Decode {
        path: String,
        #[source]
        source: DecodeError,
    },
    #[error("EncodeError: {0}")]
    Encode(String),
    #[error("bad storage manifest: {0}")]
    Manifest(String),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
}

impl StorageError {
    pub fn name(&self) -> &'static str {
        match self {
            StorageError::NotFound(_) => "NotFound",
            StorageError::PathViolation(_) => "PathViolation",
            StorageError::AlreadyExists(_) => "AlreadyExists",
            StorageError::Decode { .. } => "DecodeError",
            StorageError::Encode(_) => "EncodeError",
            StorageError::Manifest(_) => "ManifestError",
            StorageError::Io(_) => "IoError",
        }
    }
}

/// Uniform file and event access to one storage.
pub trait StorageAdapter: Send + Sync {
    fn storage_id(&self) -> &str;

    fn kind(&self) -> AdapterKind;

    /// Exact bytes of `path` and their SHA-256.
    fn get_file(&self, path: &str) -> Result<(Vec<u8>, Digest), StorageError>;

    /// Stores `bytes` at a fresh `path`; existing paths are never overwritten.
    fn put_file(&self, path: &str, bytes: &[u8]) -> Result<Digest, StorageError>;

    fn read_events(&self, path: &str) -> Result<Vec<EasEvent>, StorageError> {
        let (bytes, _) = self.get_file(path)?;
        decode_events(self.kind(), &bytes).map_err(|source| StorageError::Decode {
            path: path.to_string(),
            source,
        })
    }

    fn write_events(&self, path: &str, events: &[EasEvent]) -> Result<Digest, StorageError> {
        let bytes = encode_events(self.kind(), events)?;
        self.put_file(path, &bytes)
    }
}

/// Encodes `events` in the adapter's format, stores them at `path` and
/// returns the matching file reference.
pub fn put_events_file(
    adapter: &dyn StorageAdapter,
    path: &str,
    events: &[EasEvent],
) -> Result<FileRef, StorageError> {
    let bytes = encode_events(adapter.kind(), events)?;
    let content_hash = adapter.put_file(path, &bytes)?;
    Ok(FileRef {
        path: path.to_string(),
        content_hash,
        size: bytes.len() as u64,
        format: adapter.kind(),
    })
}

pub fn encode_events(kind: AdapterKind, events: &[EasEvent]) -> Result<Vec<u8>, StorageError> {
    match kind {
        AdapterKind::Jsonl => Ok(jsonl::encode(events)),
        AdapterKind::Packed => packed::encode(events),
    }
}

pub fn decode_events(kind: AdapterKind, bytes: &[u8]) -> Result<Vec<EasEvent>, DecodeError> {
    EventDecoder::new(kind, Arc::from(bytes)).collect()
}

/// Incremental encoder producing the same bytes as [`encode_events`].
#[derive(Debug)]
pub struct EventEncoder {
    kind: AdapterKind,
    out: Vec<u8>,
    records: usize,
}

impl EventEncoder {
    pub fn new(kind: AdapterKind) -> Self {
        let mut out = Vec::new();
        if kind == AdapterKind::Packed {
            packed::start(&mut out);
        }
        EventEncoder {
            kind,
            out,
            records: 0,
        }
    }

    pub fn push(&mut self, event: &EasEvent) -> Result<(), StorageError> {
        match self.kind {
            AdapterKind::Jsonl => jsonl::encode_record(&mut self.out, event),
            AdapterKind::Packed => packed::encode_record(&mut self.out, event)?,
        }
        self.records += 1;
        Ok(())
    }

    pub fn records(&self) -> usize {
        self.records
    }

    pub fn finish(mut self) -> Result<Vec<u8>, StorageError> {
        if self.kind == AdapterKind::Packed {
            packed::finish(&mut self.out, self.records)?;
        }
        Ok(self.out)
    }
}

/// Lazily decodes events from an in-memory file, one record at a time.
pub struct EventDecoder {
    bytes: Arc<[u8]>,
    inner: DecoderState,
    failed: bool,
}

enum DecoderState {
    Jsonl(jsonl::Cursor),
    Packed(packed::Cursor),
}

impl EventDecoder {
    pub fn new(kind: AdapterKind, bytes: Arc<[u8]>) -> Self {
        let inner = match kind {
            AdapterKind::Jsonl => DecoderState::Jsonl(jsonl::Cursor::default()),
            AdapterKind::Packed => DecoderState::Packed(packed::Cursor::default()),
        };
        EventDecoder {
            bytes,
            inner,
            failed: false,
        }
    }
}

impl Iterator for EventDecoder {
    type Item = Result<EasEvent, DecodeError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        // Cursors number their own errors; `started` covers validation failures.
        let (item, started) = match &mut self.inner {
            DecoderState::Jsonl(c) => (c.next(&self.bytes), c.records_started()),
            DecoderState::Packed(c) => (c.next(&self.bytes), c.records_started()),
        };
        let result = item?.and_then(|event| match event.validate() {
            Ok(()) => Ok(event),
            Err(e) => Err(DecodeError {
                record: started - 1,
                reason: e.to_string(),
            }),
        });
        self.failed = result.is_err();
        Some(result)
    }
}
