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

//! On-disk layout of a home directory.
//!
//! ```text
//! HOME/keys/NAME.secret   hex Ed25519 seed
//! HOME/keys/NAME.pub      hex public key
//! HOME/chain/             genesis.json and block_N.json
//! HOME/pool/TXID.json     pending transactions in wire form
//! HOME/index.json         last index snapshot
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use dds_core::chain::{store, ChainState};
use dds_core::keys::{Keypair, PublicKey};
use dds_core::pmd::{PmdTransaction, Rejection};
use dds_core::Digest;

use crate::error::{Class, CliError, CliResult};

pub struct Home {
    root: PathBuf,
    chain: PathBuf,
}

impl Home {
    pub fn new(root: Option<PathBuf>, chain: Option<PathBuf>) -> CliResult<Self> {
        let root = root.ok_or_else(|| CliError::usage("--home DIR is required"))?;
        let chain = chain.unwrap_or_else(|| root.join("chain"));
        Ok(Home { root, chain })
    }

    pub fn chain_dir(&self) -> &Path {
        &self.chain
    }

    pub fn keys_dir(&self) -> PathBuf {
        self.root.join("keys")
    }

    pub fn pool_dir(&self) -> PathBuf {
        self.root.join("pool")
    }

    pub fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    fn key_path(&self, name: &str, ext: &str) -> CliResult<PathBuf> {
        let ok = !name.is_empty()
            && name
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
        if !ok {
            return Err(CliError::usage(format!("bad key name {name:?}")));
        }
        Ok(self.keys_dir().join(format!("{name}.{ext}")))
    }

    pub fn save_key(&self, name: &str, key: &Keypair) -> CliResult<()> {
        let secret = self.key_path(name, "secret")?;
        if secret.exists() {
            return Err(CliError::invalid(
                "AlreadyExists",
                format!("key {name} already exists"),
            ));
        }
        let dir = self.keys_dir();
        fs::create_dir_all(&dir).map_err(|e| CliError::io(dir.display(), e))?;
        write(&secret, format!("{}\n", key.secret_hex()).as_bytes())?;
        write(
            &self.key_path(name, "pub")?,
            format!("{}\n", key.public().to_hex()).as_bytes(),
        )
    }

    pub fn load_key(&self, name: &str) -> CliResult<Keypair> {
        let path = self.key_path(name, "secret")?;
        let text = read_string(&path)?;
        Ok(Keypair::from_secret_hex(text.trim())?)
    }

    pub fn load_public(&self, name: &str) -> CliResult<PublicKey> {
        let path = self.key_path(name, "pub")?;
        Ok(PublicKey::from_hex(read_string(&path)?.trim())?)
    }

    /// Replays and validates the chain on disk.
    pub fn load_chain(&self) -> CliResult<ChainState> {
        let genesis = self.chain.join(store::GENESIS_FILE);
        if !genesis.exists() {
            return Err(CliError::new(
                Class::Io,
                "IoError",
                format!("{}: no genesis; run genesis-init first", genesis.display()),
            ));
        }
        let (genesis, blocks) = store::load(&self.chain)?;
        Ok(ChainState::replay(genesis, blocks)?)
    }

    /// The validated chain with every pool transaction that still validates
    /// admitted to its pending set.
    pub fn load_state(&self) -> CliResult<ChainState> {
        let mut state = self.load_chain()?;
        self.admit_pool(&mut state)?;
        Ok(state)
    }

    /// Admits pool transactions to `state`, returning the ones refused.
    pub fn admit_pool(&self, state: &mut ChainState) -> CliResult<Vec<(Digest, Rejection)>> {
        let mut refused = Vec::new();
        for tx in self.pool()? {
            let id = tx.tx_id;
            if let Err(r) = state.submit(tx) {
                refused.push((id, r));
            }
        }
        Ok(refused)
    }

    /// Pool transactions in file-name order.
    pub fn pool(&self) -> CliResult<Vec<PmdTransaction>> {
        let dir = self.pool_dir();
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| CliError::io(dir.display(), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| {
                let bytes = read(p)?;
                PmdTransaction::from_wire_bytes(&bytes)
                    .map_err(|e| CliError::invalid("ParseError", format!("{}: {e}", p.display())))
            })
            .collect()
    }

    pub fn add_to_pool(&self, tx: &PmdTransaction) -> CliResult<PathBuf> {
        let dir = self.pool_dir();
        fs::create_dir_all(&dir).map_err(|e| CliError::io(dir.display(), e))?;
        let path = dir.join(format!("{}.json", tx.tx_id));
        write(&path, &tx.to_wire_bytes())?;
        Ok(path)
    }

    pub fn remove_from_pool(&self, tx_id: &Digest) -> CliResult<()> {
        let path = self.pool_dir().join(format!("{tx_id}.json"));
        match fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(CliError::io(path.display(), e)),
        }
    }
}

pub fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path.display(), e))
}

pub fn read_string(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))
}

pub fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path.display(), e))
}

/// Parses a JSON input file, reporting failures under `name`.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path, name: &str) -> CliResult<T> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::invalid(name, format!("{}: {e}", path.display())))
}

pub fn now_ns() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0)
}
