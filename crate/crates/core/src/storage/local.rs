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

use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{StorageAdapter, StorageError};
use crate::canonical;
use crate::hash::{sha256, Digest};
use crate::pmd::AdapterKind;

pub const MANIFEST_FILE: &str = "storage.json";

/// Contents of `storage.json` at a storage root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageManifest {
    pub storage_id: String,
    pub kind: AdapterKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageHandle {
    pub storage_id: String,
    pub base_uri: PathBuf,
    pub kind: AdapterKind,
}

impl StorageHandle {
    /// Opens an existing storage by reading its manifest.
    pub fn open(base_uri: impl AsRef<Path>) -> Result<Self, StorageError> {
        let base = base_uri.as_ref();
        let raw = fs::read(base.join(MANIFEST_FILE)).map_err(|e| match e.kind() {
            ErrorKind::NotFound => {
                StorageError::Manifest(format!("{} has no {MANIFEST_FILE}", base.display()))
            }
            _ => StorageError::Io(e),
        })?;
        let manifest: StorageManifest = serde_json::from_slice(&raw)
            .map_err(|e| StorageError::Manifest(format!("{}: {e}", base.display())))?;
        Ok(StorageHandle {
            storage_id: manifest.storage_id,
            base_uri: base.to_path_buf(),
            kind: manifest.kind,
        })
    }

    /// Initializes a storage root, or reopens it if the manifest already matches.
    pub fn create(
        base_uri: impl AsRef<Path>,
        storage_id: &str,
        kind: AdapterKind,
    ) -> Result<Self, StorageError> {
        let base = base_uri.as_ref();
        fs::create_dir_all(base)?;
        let manifest = StorageManifest {
            storage_id: storage_id.to_string(),
            kind,
        };
        let path = base.join(MANIFEST_FILE);
        if path.exists() {
            let existing = Self::open(base)?;
            if existing.storage_id != storage_id || existing.kind != kind {
                return Err(StorageError::Manifest(format!(
                    "{} already holds storage {} ({})",
                    base.display(),
                    existing.storage_id,
                    existing.kind
                )));
            }
            return Ok(existing);
        }
        fs::write(
            &path,
            canonical::to_canonical_bytes(&manifest).expect("no floats"),
        )?;
        Ok(StorageHandle {
            storage_id: manifest.storage_id,
            base_uri: base.to_path_buf(),
            kind,
        })
    }

    /// Maps a storage-relative path to a filesystem path, refusing anything
    /// that could leave the storage root.
    pub fn resolve(&self, path: &str) -> Result<PathBuf, StorageError> {
        let rel = Path::new(path);
        let mut any = false;
        for component in rel.components() {
            match component {
                Component::Normal(_) => any = true,
                _ => return Err(StorageError::PathViolation(path.to_string())),
            }
        }
        if !any || path.contains('\\') || path == MANIFEST_FILE {
            return Err(StorageError::PathViolation(path.to_string()));
        }
        Ok(self.base_uri.join(rel))
    }
}

/// Directory-backed adapter, encoding events per the storage's kind.
#[derive(Debug, Clone)]
pub struct LocalDirAdapter {
    handle: StorageHandle,
}

impl LocalDirAdapter {
    pub fn new(handle: StorageHandle) -> Self {
        LocalDirAdapter { handle }
    }

    pub fn open(base_uri: impl AsRef<Path>) -> Result<Self, StorageError> {
        Ok(Self::new(StorageHandle::open(base_uri)?))
    }

    pub fn handle(&self) -> &StorageHandle {
        &self.handle
    }
}

impl StorageAdapter for LocalDirAdapter {
    fn storage_id(&self) -> &str {
        &self.handle.storage_id
    }

    fn kind(&self) -> AdapterKind {
        self.handle.kind
    }

    fn get_file(&self, path: &str) -> Result<(Vec<u8>, Digest), StorageError> {
        let full = self.handle.resolve(path)?;
        let bytes = fs::read(&full).map_err(|e| match e.kind() {
            ErrorKind::NotFound => StorageError::NotFound(path.to_string()),
            _ => StorageError::Io(e),
        })?;
        let digest = sha256(&bytes);
        Ok((bytes, digest))
    }

    fn put_file(&self, path: &str, bytes: &[u8]) -> Result<Digest, StorageError> {
        let full = self.handle.resolve(path)?;
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&full)
            .map_err(|e| match e.kind() {
                ErrorKind::AlreadyExists => StorageError::AlreadyExists(path.to_string()),
                _ => StorageError::Io(e),
            })?;
        if let Err(e) = file.write_all(bytes).and_then(|_| file.sync_all()) {
            drop(file);
            let _ = fs::remove_file(&full);
            return Err(StorageError::Io(e));
        }
        Ok(sha256(bytes))
    }
}
