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

//! On-disk chain layout: `genesis.json` plus one `block_<height>.json` per
//! block, each holding canonical JSON exactly as signed.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Block, ChainError, ChainState, GenesisConfig};
use crate::canonical;

pub const GENESIS_FILE: &str = "genesis.json";

pub fn block_path(dir: &Path, height: u64) -> PathBuf {
    dir.join(format!("block_{height}.json"))
}

pub fn write_genesis(dir: &Path, genesis: &GenesisConfig) -> Result<(), ChainError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(GENESIS_FILE), genesis.canonical_bytes())?;
    Ok(())
}

pub fn read_genesis(dir: &Path) -> Result<GenesisConfig, ChainError> {
    let bytes = fs::read(dir.join(GENESIS_FILE))?;
    parse_canonical(&bytes, GENESIS_FILE)
}

pub fn write_block(dir: &Path, block: &Block) -> Result<PathBuf, ChainError> {
    let path = block_path(dir, block.header.height);
    fs::write(&path, block.canonical_bytes())?;
    Ok(path)
}

pub fn read_block(dir: &Path, height: u64) -> Result<Block, ChainError> {
    let path = block_path(dir, height);
    let bytes = fs::read(&path)?;
    parse_canonical(&bytes, &path.display().to_string())
}

/// Reads `block_0.json`, `block_1.json`, ... until the first gap.
pub fn read_blocks(dir: &Path) -> Result<Vec<Block>, ChainError> {
    let mut blocks = Vec::new();
    while block_path(dir, blocks.len() as u64).exists() {
        blocks.push(read_block(dir, blocks.len() as u64)?);
    }
    Ok(blocks)
}

pub fn load(dir: &Path) -> Result<(GenesisConfig, Vec<Block>), ChainError> {
    Ok((read_genesis(dir)?, read_blocks(dir)?))
}

/// Writes genesis and every block of `state` that is not yet on disk.
pub fn save(dir: &Path, state: &ChainState) -> Result<(), ChainError> {
    if !dir.join(GENESIS_FILE).exists() {
        write_genesis(dir, state.genesis())?;
    }
    for block in state.blocks() {
        if !block_path(dir, block.header.height).exists() {
            write_block(dir, block)?;
        }
    }
    Ok(())
}

fn parse_canonical<T: serde::de::DeserializeOwned>(
    bytes: &[u8],
    what: &str,
) -> Result<T, ChainError> {
    if !canonical::is_canonical(bytes) {
        return Err(ChainError::Store(format!("{what} is not canonical JSON")));
    }
    canonical::from_slice(bytes).map_err(|e| ChainError::Store(format!("{what}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{HandlerEntry, OrderingMode};
    use crate::keys::Keypair;

    #[test]
    fn roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let k = Keypair::from_seed([1; 32]);
        let g = GenesisConfig {
            handlers: vec![HandlerEntry {
                handler_id: "h0".into(),
                public_key: k.public(),
            }],
            slot_duration: 500,
            ordering_mode: OrderingMode::Fixed,
            genesis_time: 7,
        };
        let mut s = ChainState::new(g.clone()).unwrap();
        for slot in 0..3 {
            let b = s.produce_block(slot, &k, g.slot_start(slot)).unwrap().block;
            s.apply_block(b).unwrap();
        }
        save(dir.path(), &s).unwrap();
        let (g2, blocks) = load(dir.path()).unwrap();
        assert_eq!(g2, g);
        assert_eq!(blocks, s.blocks());
        let on_disk = fs::read(block_path(dir.path(), 1)).unwrap();
        assert_eq!(on_disk, s.blocks()[1].canonical_bytes());

        fs::write(block_path(dir.path(), 2), b"{ \"x\": 1 }").unwrap();
        assert!(matches!(
            read_block(dir.path(), 2),
            Err(ChainError::Store(_))
        ));
    }
}
