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

//! Storages, publication, queries and aggregation.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde_json::json;

use dds_core::aggregation::{
    execute, publish_result, AggregationRequest, ExecuteOptions, Sink, StorageSet, TxSubmitter,
    DEFAULT_WINDOW,
};
use dds_core::canonical;
use dds_core::decimal::Decimal;
use dds_core::index::{IndexState, QueryFilter};
use dds_core::pmd::{
    provenance_trace, sign_transaction, AdapterKind, DatasetDescriptor, DatasetKind, EventSummary,
    FileRef, Rejection, TimeRange, TxBody,
};
use dds_core::sha256;
use dds_core::storage::{
    decode_events, encode_events, LocalDirAdapter, StorageAdapter, StorageHandle,
};

use crate::error::{CliError, CliResult};
use crate::home::{now_ns, read, read_json, write, Home};
use crate::PublishArgs;

pub fn storage_init(
    home: &Home,
    key: &str,
    id: &str,
    kind: AdapterKind,
    dir: &Path,
    created_at: Option<u64>,
) -> CliResult {
    let key = home.load_key(key)?;
    let mut state = home.load_state()?;
    StorageHandle::create(dir, id, kind)?;
    let base = fs::canonicalize(dir).map_err(|e| CliError::io(dir.display(), e))?;
    let base_uri = base
        .to_str()
        .ok_or_else(|| CliError::usage(format!("{} is not valid UTF-8", base.display())))?
        .to_string();
    let body = TxBody::RegisterStorage {
        storage_id: id.to_string(),
        adapter_kind: kind,
        base_uri: base_uri.clone(),
        storage_pubkey: key.public(),
    };
    let tx = sign_transaction(body, &key, created_at.unwrap_or_else(now_ns))?;
    state.submit(tx.clone())?;
    home.add_to_pool(&tx)?;
    println!(
        "{}",
        json!({ "tx_id": tx.tx_id, "storage_id": id, "base_uri": base_uri })
    );
    Ok(())
}

fn open_registered(state: &dds_core::chain::ChainState, id: &str) -> CliResult<LocalDirAdapter> {
    let record = state
        .registry()
        .storages
        .get(id)
        .ok_or_else(|| Rejection::UnknownStorage(id.to_string()))?;
    let adapter = LocalDirAdapter::open(&record.base_uri)
        .map_err(|e| CliError::invalid("StorageUnavailable", format!("{id}: {e}")))?;
    if adapter.storage_id() != id {
        return Err(CliError::invalid(
            "StorageUnavailable",
            format!("{} holds storage {}", record.base_uri, adapter.storage_id()),
        ));
    }
    Ok(adapter)
}

pub fn publish(home: &Home, args: &PublishArgs) -> CliResult {
    let key = home.load_key(&args.key)?;
    let mut state = home.load_state()?;
    let adapter = open_registered(&state, &args.storage)?;

    let raw = read(&args.events)?;
    let events = decode_events(AdapterKind::Jsonl, &raw)
        .map_err(|e| CliError::invalid("DecodeError", format!("{}: {e}", args.events.display())))?;
    if events.is_empty() {
        return Err(CliError::invalid("InvalidBody", "no events to publish"));
    }
    for e in &events {
        e.validate()?;
    }
    if events
        .windows(2)
        .any(|w| w[0].registration_time > w[1].registration_time)
    {
        return Err(CliError::invalid(
            "UnsortedInput",
            format!(
                "{} is not sorted by registration_time",
                args.events.display()
            ),
        ));
    }
    let summary = EventSummary::of(&events);
    let range = summary.time_range.expect("events are non-empty");

    let kind = adapter.kind();
    let path = format!("primary/{}.{}", args.dataset_id, kind.extension());
    let bytes = encode_events(kind, &events)?;
    let descriptor = DatasetDescriptor {
        dataset_id: args.dataset_id.clone(),
        kind: DatasetKind::Primary,
        storage_id: args.storage.clone(),
        file_refs: vec![FileRef {
            path: path.clone(),
            content_hash: sha256(&bytes),
            size: bytes.len() as u64,
            format: kind,
        }],
        facility_id: args.facility.clone(),
        time_range: TimeRange {
            start: range.start,
            end: range.end,
        },
        detector_geometry_hash: sha256(&read(&args.geometry)?),
        extra: summary.energy_extra(),
    };
    let tx = sign_transaction(
        TxBody::PublishDataset {
            dataset: descriptor,
        },
        &key,
        args.created_at.unwrap_or_else(now_ns),
    )?;
    if state.dataset_claimed(&args.dataset_id) {
        return Err(Rejection::DuplicateDataset(args.dataset_id.clone()).into());
    }
    state.submit(tx.clone())?;
    let content_hash = adapter.put_file(&path, &bytes)?;
    home.add_to_pool(&tx)?;
    eprintln!(
        "stored {} events ({} bytes) at {}:{}",
        events.len(),
        bytes.len(),
        args.storage,
        path
    );
    println!(
        "{}",
        json!({
            "tx_id": tx.tx_id,
            "dataset_id": args.dataset_id,
            "path": path,
            "content_hash": content_hash,
            "size": bytes.len(),
        })
    );
    Ok(())
}

pub fn index_build(home: &Home, out: Option<&Path>) -> CliResult {
    let state = home.load_chain()?;
    let index = IndexState::build(state.blocks())?;
    let bytes = index.snapshot_bytes();
    write(&home.index_path(), &bytes)?;
    if let Some(out) = out {
        write(out, &bytes)?;
    }
    println!(
        "{}",
        json!({
            "watermark": index.watermark(),
            "datasets": index.datasets().count(),
            "snapshot_sha256": sha256(&bytes),
        })
    );
    Ok(())
}

fn split_range(key: &str, value: &str) -> CliResult<(String, String)> {
    value
        .split_once("..")
        .map(|(lo, hi)| (lo.to_string(), hi.to_string()))
        .ok_or_else(|| CliError::usage(format!("{key} expects LO..HI, got {value:?}")))
}

fn parse_u64(key: &str, s: &str) -> CliResult<u64> {
    s.parse()
        .map_err(|_| CliError::usage(format!("{key}: {s:?} is not an unsigned integer")))
}

fn parse_decimal(key: &str, s: &str) -> CliResult<Decimal> {
    Decimal::parse(s).map_err(|e| CliError::usage(format!("{key}: {e}")))
}

fn set<T>(slot: &mut Option<T>, key: &str, value: T) -> CliResult {
    if slot.is_some() {
        return Err(CliError::usage(format!("{key} given twice")));
    }
    *slot = Some(value);
    Ok(())
}

/// Parses `--where` predicates into a filter.
///
/// Keys: `facility`, `kind`, `time=LO..HI`, `energy=LO..HI`, `energy_min`,
/// `energy_max`, `ancestor_of`, `descendant_of`, `storage`.
pub fn parse_predicates(predicates: &[String]) -> CliResult<QueryFilter> {
    if predicates.is_empty() {
        return Err(CliError::usage(
            "at least one --where predicate is required",
        ));
    }
    let mut f = QueryFilter::default();
    for p in predicates {
        let (key, value) = p
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("predicate {p:?} is not K=V")))?;
        if value.is_empty() {
            return Err(CliError::usage(format!(
                "predicate {p:?} has an empty value"
            )));
        }
        match key {
            "facility" | "facility_id" => set(&mut f.facility_id, key, value.to_string())?,
            "kind" => set(
                &mut f.kind,
                key,
                value.parse::<DatasetKind>().map_err(CliError::usage)?,
            )?,
            "time" | "time_range" => {
                let (lo, hi) = split_range(key, value)?;
                let range = TimeRange {
                    start: parse_u64(key, &lo)?,
                    end: parse_u64(key, &hi)?,
                };
                set(&mut f.time_range, key, range)?;
            }
            "energy" => {
                let (lo, hi) = split_range(key, value)?;
                set(&mut f.energy_min, key, parse_decimal(key, &lo)?)?;
                set(&mut f.energy_max, key, parse_decimal(key, &hi)?)?;
            }
            "energy_min" => set(&mut f.energy_min, key, parse_decimal(key, value)?)?,
            "energy_max" => set(&mut f.energy_max, key, parse_decimal(key, value)?)?,
            "ancestor_of" => set(&mut f.ancestor_of, key, value.to_string())?,
            "descendant_of" => set(&mut f.descendant_of, key, value.to_string())?,
            "storage" | "storage_id" => set(&mut f.storage_id, key, value.to_string())?,
            other => return Err(CliError::usage(format!("unknown predicate key {other:?}"))),
        }
    }
    f.validate()?;
    Ok(f)
}

pub fn query(home: &Home, predicates: &[String]) -> CliResult {
    let filter = parse_predicates(predicates)?;
    let state = home.load_chain()?;
    let index = IndexState::build(state.blocks())?;
    let found = index.query(&filter)?;
    for d in &found {
        println!(
            "{}",
            canonical::to_canonical_string(d).expect("descriptors have no floats")
        );
    }
    eprintln!("{} datasets", found.len());
    Ok(())
}

pub fn provenance(home: &Home, dataset: &str) -> CliResult {
    let state = home.load_chain()?;
    let dag = provenance_trace(dataset, state.registry())?;
    println!(
        "{}",
        canonical::to_canonical_string(&dag).expect("no floats")
    );
    Ok(())
}

/// Opens every registered storage that is reachable; missing ones surface
/// as `StorageUnavailable` only if a request needs them.
fn reachable_storages(index: &IndexState) -> StorageSet {
    let mut set = StorageSet::new();
    for record in index.storages() {
        if let Ok(adapter) = LocalDirAdapter::open(&record.base_uri) {
            if adapter.storage_id() == record.storage_id {
                set.insert(record.storage_id.clone(), Arc::new(adapter));
            }
        }
    }
    set
}

pub fn aggregate(
    home: &Home,
    request: &Path,
    key: Option<&str>,
    created_at: Option<u64>,
    concurrent_fetch: bool,
    window: Option<usize>,
) -> CliResult {
    let request: AggregationRequest = read_json(request, "InvalidRequest")?;
    let key = match (&request.sink, key) {
        (Sink::Publish { .. }, None) => {
            return Err(CliError::usage("a publish sink needs --key"));
        }
        (Sink::Publish { .. }, Some(name)) => Some(home.load_key(name)?),
        (Sink::LocalPath { .. }, _) => None,
    };
    let mut state = home.load_state()?;
    let index = IndexState::build(state.blocks())?;
    let storages = reachable_storages(&index);
    let options = ExecuteOptions {
        window: window.unwrap_or(DEFAULT_WINDOW),
        concurrent_fetch,
        ..ExecuteOptions::default()
    };
    let execution = execute(&request, &index, &storages, &options)?;
    let r = &execution.result;
    eprintln!(
        "matched {} datasets, fetched {} files ({} bytes), events {} in, {} out",
        r.datasets.len(),
        r.files_fetched,
        r.bytes_fetched,
        r.events_in,
        r.events_out
    );
    for stage in &r.stages {
        let counters: Vec<String> = stage
            .counters
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        eprintln!(
            "  {}: {} in, {} out {}",
            stage.plugin,
            stage.events_in,
            stage.events_out,
            counters.join(" ")
        );
    }
    println!(
        "{}",
        canonical::to_canonical_string(r).expect("results have no floats")
    );

    if let Some(key) = key {
        let tx = publish_result(
            &execution,
            &request,
            &storages,
            &key,
            &mut state,
            created_at.unwrap_or_else(now_ns),
        )?;
        home.add_to_pool(&tx)?;
        let dataset = tx.body.dataset().expect("derivations carry a dataset");
        eprintln!("submitted derivation {}", dataset.dataset_id);
        println!(
            "{}",
            json!({ "tx_id": tx.tx_id, "dataset_id": dataset.dataset_id })
        );
    }
    Ok(())
}
