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

//! Keys, genesis, transactions, block production and chain audits.

use std::path::Path;

use serde_json::json;

use dds_core::aggregation::{fetch_verified, open_local_storages, TxSubmitter};
use dds_core::canonical;
use dds_core::chain::{store, ChainState, Checkpoint, GenesisConfig, HandlerEntry, OrderingMode};
use dds_core::hash::sha256_parts;
use dds_core::index::IndexState;
use dds_core::keys::{Keypair, PublicKey};
use dds_core::merkle::{leaf_hash, verify_consistency};
use dds_core::pmd::{sign_transaction, TxBody};
use dds_core::Digest;

use crate::error::{CliError, CliResult};
use crate::home::{now_ns, read_json, Home};
use crate::ProofCommand;

pub fn keygen(home: &Home, name: &str, seed: Option<u64>) -> CliResult {
    let key = match seed {
        Some(seed) => Keypair::from_seed(
            sha256_parts(&[b"dds-keygen", name.as_bytes(), &seed.to_le_bytes()]).0,
        ),
        None => Keypair::generate(&mut rand::rngs::OsRng),
    };
    home.save_key(name, &key)?;
    println!("{}", json!({ "name": name, "public_key": key.public() }));
    Ok(())
}

pub fn genesis_init(
    home: &Home,
    names: &[String],
    handler_keys: &[String],
    slot_ms: u64,
    ordering_mode: OrderingMode,
    genesis_time: Option<u64>,
) -> CliResult {
    let mut handlers = Vec::new();
    for name in names {
        handlers.push(HandlerEntry {
            handler_id: name.clone(),
            public_key: home.load_public(name)?,
        });
    }
    for spec in handler_keys {
        let (id, hex) = spec.split_once('=').ok_or_else(|| {
            CliError::usage(format!("--handler-key expects ID=HEX, got {spec:?}"))
        })?;
        handlers.push(HandlerEntry {
            handler_id: id.to_string(),
            public_key: PublicKey::from_hex(hex)?,
        });
    }
    let genesis = GenesisConfig {
        handlers,
        slot_duration: slot_ms,
        ordering_mode,
        genesis_time: genesis_time.unwrap_or_else(|| now_ns() / 1_000_000 * 1_000_000),
    };
    genesis.validate()?;
    let dir = home.chain_dir();
    if dir.join(store::GENESIS_FILE).exists() {
        return Err(CliError::invalid(
            "AlreadyExists",
            format!("{} already has a genesis", dir.display()),
        ));
    }
    store::write_genesis(dir, &genesis)?;
    println!("{}", json!({ "genesis_hash": genesis.hash() }));
    Ok(())
}

pub fn tx_submit(home: &Home, key: &str, body: &Path, created_at: Option<u64>) -> CliResult {
    let key = home.load_key(key)?;
    let body: TxBody = read_json(body, "InvalidBody")?;
    let tx = sign_transaction(body, &key, created_at.unwrap_or_else(now_ns))?;
    let mut state = home.load_state()?;
    if let Some(d) = tx.body.dataset() {
        if state.dataset_claimed(&d.dataset_id) {
            return Err(CliError::invalid(
                "DuplicateDataset",
                format!("DuplicateDataset: {}", d.dataset_id),
            ));
        }
    }
    state.submit(tx.clone())?;
    home.add_to_pool(&tx)?;
    println!("{}", json!({ "tx_id": tx.tx_id }));
    Ok(())
}

fn next_slot_for(state: &ChainState, handler_id: &str) -> CliResult<u64> {
    let start = state.head().map_or(0, |b| b.header.slot + 1);
    // Any handler appears once per cycle, so two cycles always contain a slot.
    let span = 2 * state.genesis().roster_len();
    (start..start + span)
        .find(|&s| state.scheduled_handler(s) == handler_id)
        .ok_or_else(|| {
            CliError::invalid("NotScheduled", format!("{handler_id} has no upcoming slot"))
        })
}

pub fn produce(home: &Home, key: &str, slot: Option<u64>, timestamp: Option<u64>) -> CliResult {
    let key = home.load_key(key)?;
    let mut state = home.load_chain()?;
    let refused = home.admit_pool(&mut state)?;
    let handler_id = state
        .genesis()
        .handler_by_key(&key.public())
        .map(|h| h.handler_id.clone())
        .ok_or(dds_core::chain::ChainError::UnknownHandlerKey)?;
    let slot = match slot {
        Some(s) => s,
        None => next_slot_for(&state, &handler_id)?,
    };
    let now = timestamp.unwrap_or_else(|| state.genesis().slot_start(slot));
    let produced = state.produce_block(slot, &key, now)?;
    let block = produced.block;
    let header = block.header.clone();
    state.apply_block(block.clone()).map_err(|verdict| {
        CliError::invalid(
            verdict.name(),
            format!("produced block failed validation: {verdict}"),
        )
    })?;
    store::write_block(home.chain_dir(), &block)?;

    let mut rejected = Vec::new();
    for tx in &block.transactions {
        home.remove_from_pool(&tx.tx_id)?;
    }
    for (tx_id, reason) in refused.iter().chain(&produced.rejected) {
        home.remove_from_pool(tx_id)?;
        eprintln!("dropped {tx_id}: {reason}");
        rejected.push(json!({ "tx_id": tx_id, "reason": reason.name() }));
    }
    eprintln!(
        "block {} at slot {} by {} with {} transactions",
        header.height,
        header.slot,
        header.creator,
        block.transactions.len()
    );
    println!(
        "{}",
        json!({
            "height": header.height,
            "slot": header.slot,
            "hash": header.hash(),
            "txs": block.transactions.len(),
            "registry_root": header.registry_root,
            "registry_size": header.registry_size,
            "rejected": rejected,
        })
    );
    Ok(())
}

fn checkpoint_line(cp: &Checkpoint) -> serde_json::Value {
    json!({
        "status": "ok",
        "height": cp.height,
        "head_hash": cp.head_hash,
        "registry_root": cp.registry_root,
        "registry_size": cp.registry_size,
    })
}

/// Checks that the head registry extends the one committed to by `cp` and
/// that the block it names is still part of the chain.
fn check_against(state: &ChainState, cp: &Checkpoint) -> CliResult<serde_json::Value> {
    let fail = |m: String| CliError::invalid("ConsistencyError", m);
    let head = state.checkpoint();
    if cp.registry_size > head.registry_size {
        return Err(fail(format!(
            "checkpoint size {} exceeds head size {}",
            cp.registry_size, head.registry_size
        )));
    }
    let proof = state.prove_consistency(cp.registry_size)?;
    if !verify_consistency(
        &cp.registry_root,
        cp.registry_size,
        &head.registry_root,
        head.registry_size,
        &proof,
    ) {
        return Err(fail(format!(
            "registry at size {} is not a prefix of the head registry",
            cp.registry_size
        )));
    }
    if let Some(h) = cp.height {
        let ours = state.blocks().get(h as usize).map(|b| b.header.hash());
        if ours != Some(cp.head_hash) {
            return Err(fail(format!("block {h} differs from the checkpoint")));
        }
    }
    Ok(json!({
        "checkpoint": "consistent",
        "old_size": cp.registry_size,
        "new_size": head.registry_size,
        "proof": proof,
    }))
}

pub fn chain_verify(home: &Home, checkpoint: Option<&Path>, files: bool) -> CliResult {
    let (genesis, blocks) = store::load(home.chain_dir())?;
    let mut state = ChainState::new(genesis)?;
    for block in blocks {
        let height = block.header.height;
        let hash = block.header.hash();
        let slot = block.header.slot;
        if let Err(verdict) = state.apply_block(block) {
            println!(
                "{}",
                json!({ "height": height, "slot": slot, "hash": hash, "verdict": verdict.name() })
            );
            eprintln!("chain invalid at height {height}: {verdict}");
            return Err(dds_core::chain::ReplayError { height, verdict }.into());
        }
        println!(
            "{}",
            json!({ "height": height, "slot": slot, "hash": hash, "verdict": "ok" })
        );
    }
    if let Some(path) = checkpoint {
        let cp: Checkpoint = read_json(path, "ParseError")?;
        println!("{}", check_against(&state, &cp)?);
    }
    if files {
        let index = IndexState::build(state.blocks())?;
        let ids: Vec<String> = index
            .datasets()
            .map(|d| d.descriptor.dataset_id.clone())
            .collect();
        let plan = index.resolve_files(&ids)?;
        let storages = open_local_storages(&index, plan.by_storage().into_keys())?;
        fetch_verified(&plan, &storages, true)?;
        println!("{}", json!({ "files_verified": plan.entries.len() }));
    }
    let cp = state.checkpoint();
    eprintln!(
        "chain valid: {} blocks, registry size {}, root {}",
        state.height(),
        cp.registry_size,
        cp.registry_root
    );
    println!("{}", checkpoint_line(&cp));
    Ok(())
}

pub fn proof(home: &Home, cmd: ProofCommand) -> CliResult {
    let state = home.load_chain()?;
    let log = state.registry_log();
    match cmd {
        ProofCommand::Checkpoint => {
            let cp = canonical::to_canonical_string(&state.checkpoint()).expect("no floats");
            println!("{cp}");
        }
        ProofCommand::Inclusion { tx } => {
            let tx_id = Digest::from_hex(&tx).map_err(CliError::usage)?;
            let (index, wire) = state
                .blocks()
                .iter()
                .flat_map(|b| &b.transactions)
                .enumerate()
                .find(|(_, t)| t.tx_id == tx_id)
                .map(|(i, t)| (i as u64, t.to_wire_bytes()))
                .ok_or_else(|| {
                    CliError::invalid("NotFound", format!("transaction {tx_id} is not confirmed"))
                })?;
            let proof = log.prove_inclusion(index)?;
            println!(
                "{}",
                json!({
                    "tx_id": tx_id,
                    "leaf_hash": leaf_hash(&wire),
                    "registry_root": log.root(),
                    "proof": proof,
                })
            );
        }
        ProofCommand::Consistency {
            old_size,
            checkpoint,
        } => {
            let old_size = match (old_size, checkpoint) {
                (Some(n), None) => n,
                (None, Some(path)) => read_json::<Checkpoint>(&path, "ParseError")?.registry_size,
                _ => return Err(CliError::usage("give --old-size or --checkpoint")),
            };
            let proof = log.prove_consistency(old_size)?;
            println!(
                "{}",
                json!({
                    "old_root": log.root_at(old_size)?,
                    "new_root": log.root(),
                    "proof": proof,
                })
            );
        }
    }
    Ok(())
}
