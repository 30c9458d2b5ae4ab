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

//! Deterministic uncompressed archive of fetched files.
//!
//! The output is a POSIX ustar stream. Entries are sorted by name and each
//! header has mode `0644`, uid/gid `0`, mtime `0`, empty user/group names,
//! type `'0'` and a checksum written as six octal digits, NUL, space. Data
//! is padded to 512-byte blocks and the stream ends with two zero blocks, so
//! an empty archive is 1024 zero bytes.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::AggregationError;

/// One file to archive; `name` is `storage_id/path`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveEntry {
    pub name: String,
    pub bytes: Arc<[u8]>,
}

pub fn merge_archive(entries: Vec<ArchiveEntry>) -> Result<Vec<u8>, AggregationError> {
    let mut sorted = BTreeMap::new();
    for e in entries {
        if sorted.contains_key(&e.name) {
            return Err(AggregationError::DuplicateEntry(e.name));
        }
        sorted.insert(e.name, e.bytes);
    }
    let mut builder = tar::Builder::new(Vec::new());
    for (name, bytes) in &sorted {
        let mut header = tar::Header::new_ustar();
        header
            .set_path(name)
            .map_err(|e| AggregationError::Archive(format!("{name}: {e}")))?;
        header.set_size(bytes.len() as u64);
        header.set_mode(0o644);
        header.set_uid(0);
        header.set_gid(0);
        header.set_mtime(0);
        header.set_entry_type(tar::EntryType::Regular);
        set_traditional_cksum(&mut header);
        builder
            .append(&header, &bytes[..])
            .map_err(|e| AggregationError::Archive(e.to_string()))?;
    }
    builder
        .into_inner()
        .map_err(|e| AggregationError::Archive(e.to_string()))
}

/// Writes the header checksum as six octal digits, NUL, space.
fn set_traditional_cksum(header: &mut tar::Header) {
    let bytes = header.as_mut_bytes();
    bytes[148..156].fill(b' ');
    let sum: u32 = bytes.iter().map(|&b| u32::from(b)).sum();
    bytes[148..156].copy_from_slice(format!("{sum:06o}\0 ").as_bytes());
}
