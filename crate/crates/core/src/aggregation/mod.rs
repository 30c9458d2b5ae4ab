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

//! Query-driven aggregation over files held in several storages.
//!
//! A request names a metadata filter, a plugin pipeline and a sink. Matching
//! files are fetched with one worker per storage, checked against their
//! on-chain digests, decoded lazily and streamed through the pipeline.

pub mod archive;
pub mod plugins;

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::canonical;
use crate::chain::ChainState;
use crate::decimal::Decimal;
use crate::hash::{sha256, sha256_parts, Digest};
use crate::index::{FetchPlan, IndexError, IndexState, QueryFilter};
use crate::keys::Keypair;
use crate::pmd::{
    sign_transaction, AdapterKind, DatasetDescriptor, DatasetKind, EasEvent, EventSummary, FileRef,
    PmdError, PmdTransaction, ProgramRef, RegistryState, Rejection, TimeRange, TxBody,
};
use crate::storage::{
    DecodeError, EventDecoder, EventEncoder, LocalDirAdapter, StorageAdapter, StorageError,
};

pub use archive::{merge_archive, ArchiveEntry};
pub use plugins::{
    EnergyFilter, EventPlugin, FilePlugin, MergeArchive, NamedStream, PluginLibrary, Stage,
    StageContext, Tagged, TimeOrderedMerge,
};

/// Default bound on events held in memory at once.
pub const DEFAULT_WINDOW: usize = 10_000;

#[derive(Debug, Error)]
pub enum AggregationError {
    #[error(transparent)]
    Query(#[from] IndexError),
    #[error("PluginNotFound: {0}")]
    PluginNotFound(String),
    #[error("PluginConfigError: {plugin}: {reason}")]
    PluginConfig { plugin: String, reason: String },
    #[error("IntegrityError: {file}: expected {expected}, got {actual} ({size} bytes)")]
    Integrity {
        file: String,
        expected: Digest,
        actual: Digest,
        size: u64,
    },
    #[error("StorageUnavailable: {0}")]
    StorageUnavailable(String),
    #[error("fetch of {file} failed: {source}")]
    Fetch {
        file: String,
        #[source]
        source: StorageError,
    },
    #[error("DecodeError in {file}: {source}")]
    Decode {
        file: String,
        #[source]
        source: DecodeError,
    },
    #[error("UnsortedInput: {0}")]
    UnsortedInput(String),
    #[error("DuplicateEntry: {0}")]
    DuplicateEntry(String),
    #[error("archive error: {0}")]
    Archive(String),
    #[error("WindowExceeded: {required} concurrent streams exceed window {window}")]
    WindowExceeded { required: usize, window: usize },
    #[error("UnknownProgram: {0}")]
    UnknownProgram(ProgramRef),
    #[error("DuplicateDataset: {0}")]
    DuplicateDataset(String),
    #[error("request sink is not a publish sink")]
    NotPublishable,
    #[error("publish rejected: {0}")]
    Rejected(Rejection),
    #[error("invalid derived dataset: {0}")]
    Invalid(#[from] PmdError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
}

impl AggregationError {
    pub fn name(&self) -> &'static str {
        match self {
            AggregationError::Query(IndexError::NotFound(_)) => "NotFound",
            AggregationError::Query(IndexError::Watermark { .. }) => "WatermarkError",
            AggregationError::Query(IndexError::InvalidFilter(_)) => "InvalidFilter",
            AggregationError::PluginNotFound(_) => "PluginNotFound",
            AggregationError::PluginConfig { .. } => "PluginConfigError",
            AggregationError::Integrity { .. } => "IntegrityError",
            AggregationError::StorageUnavailable(_) => "StorageUnavailable",
            AggregationError::Fetch { source, .. } => source.name(),
            AggregationError::Decode { .. } => "DecodeError",
            AggregationError::UnsortedInput(_) => "UnsortedInput",
            AggregationError::DuplicateEntry(_) => "DuplicateEntry",
            AggregationError::Archive(_) => "ArchiveError",
            AggregationError::WindowExceeded { .. } => "WindowExceeded",
            AggregationError::UnknownProgram(_) => "UnknownProgram",
            AggregationError::DuplicateDataset(_) => "DuplicateDataset",
            AggregationError::NotPublishable => "NotPublishable",
            AggregationError::Rejected(r) => r.name(),
            AggregationError::Invalid(_) => "InvalidBody",
            AggregationError::Storage(e) => e.name(),
            AggregationError::Io(_) => "IoError",
        }
    }

    /// True for failures caused by the environment rather than the data.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            AggregationError::Io(_)
                | AggregationError::StorageUnavailable(_)
                | AggregationError::Storage(StorageError::Io(_))
                | AggregationError::Fetch {
                    source: StorageError::Io(_),
                    ..
                }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PluginSpec {
    pub name: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sink {
    LocalPath {
        path: String,
    },
    Publish {
        storage_id: String,
        dataset_id: String,
        program_id: String,
        program_version: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregationRequest {
    pub filter: QueryFilter,
    #[serde(default)]
    pub pipeline: Vec<PluginSpec>,
    pub sink: Sink,
}

impl AggregationRequest {
    /// SHA-256 of the canonical pipeline, recorded as a derivation's parameters hash.
    pub fn parameters_hash(&self) -> Digest {
        sha256(&canonical::to_canonical_bytes(&self.pipeline).expect("pipeline has no floats"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub plugin: String,
    pub events_in: u64,
    pub events_out: u64,
    /// Plugin-specific tallies such as dropped events.
    pub counters: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationResult {
    /// Matched datasets in query order.
    pub datasets: Vec<String>,
    pub files_fetched: usize,
    pub bytes_fetched: u64,
    pub events_in: u64,
    pub events_out: u64,
    pub stages: Vec<StageReport>,
    pub parameters_hash: Digest,
    pub output_digest: Digest,
    pub output_size: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    pub output_format: OutputFormat,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_time_range: Option<TimeRange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_energy_min: Option<Decimal>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_energy_max: Option<Decimal>,
    pub peak_buffered_events: usize,
    pub window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Jsonl,
    Packed,
    Tar,
}

impl From<AdapterKind> for OutputFormat {
    fn from(kind: AdapterKind) -> Self {
        match kind {
            AdapterKind::Jsonl => OutputFormat::Jsonl,
            AdapterKind::Packed => OutputFormat::Packed,
        }
    }
}

/// A finished request. `output` holds the bytes awaiting publication for
/// publish sinks and is empty for local sinks.
#[derive(Debug, Clone)]
pub struct Execution {
    pub result: AggregationResult,
    pub output: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct ExecuteOptions {
    pub window: usize,
    /// Fetch each storage on its own thread; `false` fetches sequentially in plan order.
    pub concurrent_fetch: bool,
    pub library: PluginLibrary,
}

impl Default for ExecuteOptions {
    fn default() -> Self {
        ExecuteOptions {
            window: DEFAULT_WINDOW,
            concurrent_fetch: true,
            library: PluginLibrary::default(),
        }
    }
}

/// Storage adapters by storage id.
pub type StorageSet = BTreeMap<String, Arc<dyn StorageAdapter>>;

/// Opens local-directory adapters at the registered base URIs of `storage_ids`.
pub fn open_local_storages<'a, I>(
    index: &IndexState,
    storage_ids: I,
) -> Result<StorageSet, AggregationError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut set = StorageSet::new();
    for id in storage_ids {
        let record = index
            .storage(id)
            .ok_or_else(|| AggregationError::StorageUnavailable(id.to_string()))?;
        let adapter = LocalDirAdapter::open(&record.base_uri)
            .map_err(|_| AggregationError::StorageUnavailable(id.to_string()))?;
        if adapter.storage_id() != id {
            return Err(AggregationError::StorageUnavailable(id.to_string()));
        }
        set.insert(id.to_string(), Arc::new(adapter));
    }
    Ok(set)
}

type Fetched = Result<(Vec<u8>, Digest), StorageError>;

fn fetch_group(
    adapter: &dyn StorageAdapter,
    plan: &FetchPlan,
    idx: &[usize],
) -> Vec<(usize, Fetched)> {
    idx.iter()
        .map(|&i| (i, adapter.get_file(&plan.entries[i].path)))
        .collect()
}

/// Fetches every planned file and checks its digest and size. Nothing is
/// returned unless every file verifies; the first failure in plan order wins.
pub fn fetch_verified(
    plan: &FetchPlan,
    storages: &StorageSet,
    concurrent: bool,
) -> Result<Vec<Arc<[u8]>>, AggregationError> {
    let groups = plan.by_storage();
    let mut adapters = Vec::with_capacity(groups.len());
    for (storage, idx) in &groups {
        let adapter = storages
            .get(*storage)
            .ok_or_else(|| AggregationError::StorageUnavailable(storage.to_string()))?;
        adapters.push((adapter.as_ref(), idx.as_slice()));
    }

    let mut slots: Vec<Option<Fetched>> = (0..plan.entries.len()).map(|_| None).collect();
    let results: Vec<Vec<(usize, Fetched)>> = if concurrent {
        std::thread::scope(|scope| {
            let handles: Vec<_> = adapters
                .iter()
                .map(|&(adapter, idx)| scope.spawn(move || fetch_group(adapter, plan, idx)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("fetch worker panicked"))
                .collect()
        })
    } else {
        adapters
            .iter()
            .map(|&(adapter, idx)| fetch_group(adapter, plan, idx))
            .collect()
    };
    for (i, fetched) in results.into_iter().flatten() {
        slots[i] = Some(fetched);
    }

    let mut files = Vec::with_capacity(slots.len());
    for (entry, slot) in plan.entries.iter().zip(slots) {
        let file = format!("{}/{}", entry.storage_id, entry.path);
        let (bytes, actual) =
            slot.expect("every entry is fetched")
                .map_err(|source| AggregationError::Fetch {
                    file: file.clone(),
                    source,
                })?;
        if actual != entry.content_hash || bytes.len() as u64 != entry.size {
            return Err(AggregationError::Integrity {
                file,
                expected: entry.content_hash,
                actual,
                size: bytes.len() as u64,
            });
        }
        files.push(Arc::from(bytes));
    }
    Ok(files)
}

/// Wraps a stream and counts the events passing through.
fn counted<'a>(s: NamedStream<'a>, counter: Rc<Cell<u64>>) -> NamedStream<'a> {
    NamedStream {
        name: s.name,
        events: Box::new(s.events.inspect(move |item| {
            if item.is_ok() {
                counter.set(counter.get() + 1);
            }
        })),
    }
}

enum OutputSink {
    File {
        final_path: PathBuf,
        partial: PathBuf,
        writer: BufWriter<fs::File>,
        hasher: Sha256,
        size: u64,
    },
    Memory(EventEncoder),
}

impl OutputSink {
    fn local(path: &Path) -> Result<Self, AggregationError> {
        let mut name = path
            .file_name()
            .ok_or_else(|| std::io::Error::other("sink path has no file name"))?
            .to_os_string();
        name.push(".partial");
        let partial = path.with_file_name(name);
        let file = fs::File::create(&partial)?;
        Ok(OutputSink::File {
            final_path: path.to_path_buf(),
            partial,
            writer: BufWriter::new(file),
            hasher: Sha256::new(),
            size: 0,
        })
    }

    fn write_bytes(&mut self, bytes: &[u8]) -> Result<(), AggregationError> {
        match self {
            OutputSink::File {
                writer,
                hasher,
                size,
                ..
            } => {
                writer.write_all(bytes)?;
                hasher.update(bytes);
                *size += bytes.len() as u64;
                Ok(())
            }
            OutputSink::Memory(_) => unreachable!("memory sinks take events"),
        }
    }

    fn push(&mut self, event: &EasEvent) -> Result<(), AggregationError> {
        match self {
            OutputSink::Memory(enc) => Ok(enc.push(event)?),
            OutputSink::File { .. } => {
                let mut line = canonical::to_canonical_bytes(event).expect("events have no floats");
                line.push(b'\n');
                self.write_bytes(&line)
            }
        }
    }

    /// Returns `(digest, size, in-memory bytes)`.
    fn finish(self) -> Result<(Digest, u64, Vec<u8>), AggregationError> {
        match self {
            OutputSink::File {
                final_path,
                partial,
                writer,
                hasher,
                size,
            } => {
                let file = writer.into_inner().map_err(|e| e.into_error())?;
                file.sync_all()?;
                fs::rename(&partial, &final_path)?;
                Ok((Digest(hasher.finalize().into()), size, Vec::new()))
            }
            OutputSink::Memory(enc) => {
                let bytes = enc.finish()?;
                Ok((sha256(&bytes), bytes.len() as u64, bytes))
            }
        }
    }

    fn discard(self) {
        if let OutputSink::File {
            partial, writer, ..
        } = self
        {
            drop(writer);
            let _ = fs::remove_file(partial);
        }
    }
}

/// Runs `request` against `index`, reading files through `storages`.
pub fn execute(
    request: &AggregationRequest,
    index: &IndexState,
    storages: &StorageSet,
    options: &ExecuteOptions,
) -> Result<Execution, AggregationError> {
    request.filter.validate()?;
    let stages = options.library.plan(&request.pipeline)?;
    let archive_mode = matches!(stages.first(), Some(Stage::Files(_)));

    let mut sink = match &request.sink {
        Sink::Publish {
            storage_id,
            program_id,
            program_version,
            ..
        } => {
            let program = ProgramRef::new(program_id, program_version);
            if index.program(&program).is_none() {
                return Err(AggregationError::UnknownProgram(program));
            }
            if archive_mode {
                return Err(AggregationError::PluginConfig {
                    plugin: MergeArchive::NAME.into(),
                    reason: "archive output cannot be published as a dataset".into(),
                });
            }
            let adapter = storages
                .get(storage_id)
                .ok_or_else(|| AggregationError::StorageUnavailable(storage_id.clone()))?;
            OutputSink::Memory(EventEncoder::new(adapter.kind()))
        }
        Sink::LocalPath { path } => OutputSink::local(Path::new(path))?,
    };
    let output_format = match &sink {
        OutputSink::Memory(_) if !archive_mode => match &request.sink {
            Sink::Publish { storage_id, .. } => storages[storage_id].kind().into(),
            Sink::LocalPath { .. } => unreachable!(),
        },
        _ if archive_mode => OutputFormat::Tar,
        _ => OutputFormat::Jsonl,
    };

    let mut run = || -> Result<AggregationResult, AggregationError> {
        let matched = index.query(&request.filter)?;
        let datasets: Vec<String> = matched.into_iter().map(|d| d.dataset_id).collect();
        let plan = index.resolve_files(&datasets)?;
        let files = fetch_verified(&plan, storages, options.concurrent_fetch)?;
        let bytes_fetched = files.iter().map(|f| f.len() as u64).sum();

        let mut result = AggregationResult {
            datasets,
            files_fetched: files.len(),
            bytes_fetched,
            events_in: 0,
            events_out: 0,
            stages: Vec::new(),
            parameters_hash: request.parameters_hash(),
            output_digest: Digest::default(),
            output_size: 0,
            output_path: None,
            output_format,
            output_time_range: None,
            output_energy_min: None,
            output_energy_max: None,
            peak_buffered_events: 0,
            window: options.window,
        };

        if let Some(Stage::Files(plugin)) = stages.first() {
            let entries = plan
                .entries
                .iter()
                .zip(&files)
                .map(|(e, bytes)| ArchiveEntry {
                    name: format!("{}/{}", e.storage_id, e.path),
                    bytes: bytes.clone(),
                })
                .collect();
            let archive = plugin.apply(entries)?;
            sink.write_bytes(&archive)?;
            result.stages.push(StageReport {
                plugin: plugin.name().to_string(),
                events_in: 0,
                events_out: 0,
                counters: BTreeMap::from([("entries".to_string(), files.len() as u64)]),
            });
            return Ok(result);
        }

        let peak = Rc::new(Cell::new(0usize));
        let decoded = Rc::new(Cell::new(0u64));
        let mut streams: Vec<NamedStream<'_>> = plan
            .entries
            .iter()
            .zip(&files)
            .map(|(entry, bytes)| {
                let file = format!("{}/{}", entry.storage_id, entry.path);
                let dataset_id: Arc<str> = Arc::from(entry.dataset_id.as_str());
                let name = file.clone();
                let events = EventDecoder::new(entry.format, bytes.clone()).map(move |r| {
                    r.map(|event| Tagged {
                        dataset_id: dataset_id.clone(),
                        event,
                    })
                    .map_err(|source| AggregationError::Decode {
                        file: file.clone(),
                        source,
                    })
                });
                counted(
                    NamedStream {
                        name,
                        events: Box::new(events),
                    },
                    decoded.clone(),
                )
            })
            .collect();

        let mut tallies = Vec::new();
        for stage in &stages {
            let Stage::Events(plugin) = stage else {
                unreachable!("file plugins run alone")
            };
            let ctx = StageContext::new(peak.clone(), options.window);
            let (ins, outs) = (Rc::new(Cell::new(0)), Rc::new(Cell::new(0)));
            let inputs = streams
                .into_iter()
                .map(|s| counted(s, ins.clone()))
                .collect();
            streams = plugin
                .apply(inputs, &ctx)?
                .into_iter()
                .map(|s| counted(s, outs.clone()))
                .collect();
            tallies.push((plugin.name(), ctx, ins, outs));
        }

        let mut stats = EventSummary::default();
        for stream in streams {
            for item in stream.events {
                let tagged = item?;
                stats.observe(&tagged.event);
                sink.push(&tagged.event)?;
            }
        }

        result.events_in = decoded.get();
        result.events_out = stats.count;
        result.stages = tallies
            .into_iter()
            .map(|(name, ctx, ins, outs)| StageReport {
                plugin: name.to_string(),
                events_in: ins.get(),
                events_out: outs.get(),
                counters: ctx.counters(),
            })
            .collect();
        result.output_time_range = stats.time_range;
        result.output_energy_min = stats.energy_min;
        result.output_energy_max = stats.energy_max;
        result.peak_buffered_events = peak.get().max(usize::from(result.events_in > 0));
        Ok(result)
    };

    let mut result = match run() {
        Ok(r) => r,
        Err(e) => {
            sink.discard();
            return Err(e);
        }
    };
    let (digest, size, output) = sink.finish()?;
    result.output_digest = digest;
    result.output_size = size;
    if let Sink::LocalPath { path } = &request.sink {
        result.output_path = Some(path.clone());
    }
    Ok(Execution { result, output })
}

/// Where publish transactions go once the output is stored.
pub trait TxSubmitter {
    fn registry(&self) -> &RegistryState;

    /// True if a dataset id is confirmed or already waiting in the pool.
    fn dataset_claimed(&self, dataset_id: &str) -> bool;

    fn submit_tx(&mut self, tx: PmdTransaction) -> Result<(), Rejection>;
}

impl TxSubmitter for ChainState {
    fn registry(&self) -> &RegistryState {
        ChainState::registry(self)
    }

    fn dataset_claimed(&self, dataset_id: &str) -> bool {
        ChainState::registry(self).datasets.contains_key(dataset_id)
            || self.pending().any(|tx| {
                tx.body
                    .dataset()
                    .is_some_and(|d| d.dataset_id == dataset_id)
            })
    }

    fn submit_tx(&mut self, tx: PmdTransaction) -> Result<(), Rejection> {
        self.submit(tx)
    }
}

/// Storage path of a published derivation.
pub fn derived_path(dataset_id: &str, kind: AdapterKind) -> String {
    format!("derived/{dataset_id}.{}", kind.extension())
}

/// Stores the output of a publish-sink execution and submits a
/// `DeriveDataset` naming every matched dataset as a parent. The file is
/// written before the transaction is built, and nothing is submitted if the
/// write fails.
pub fn publish_result(
    execution: &Execution,
    request: &AggregationRequest,
    storages: &StorageSet,
    key: &Keypair,
    submitter: &mut dyn TxSubmitter,
    created_at: u64,
) -> Result<PmdTransaction, AggregationError> {
    let Sink::Publish {
        storage_id,
        dataset_id,
        program_id,
        program_version,
    } = &request.sink
    else {
        return Err(AggregationError::NotPublishable);
    };
    let program = ProgramRef::new(program_id, program_version);
    let registry = submitter.registry();
    if !registry.programs.contains_key(&program) {
        return Err(AggregationError::UnknownProgram(program));
    }
    if !registry.storages.contains_key(storage_id) {
        return Err(AggregationError::Rejected(Rejection::UnknownStorage(
            storage_id.clone(),
        )));
    }
    if submitter.dataset_claimed(dataset_id) {
        return Err(AggregationError::DuplicateDataset(dataset_id.clone()));
    }
    let result = &execution.result;
    let parents: Vec<&DatasetDescriptor> = result
        .datasets
        .iter()
        .map(|id| {
            registry
                .datasets
                .get(id)
                .map(|r| &r.descriptor)
                .ok_or_else(|| AggregationError::Rejected(Rejection::UnknownParent(id.clone())))
        })
        .collect::<Result<_, _>>()?;
    if parents.is_empty() {
        return Err(PmdError::InvalidBody("a derivation needs at least one parent".into()).into());
    }
    let adapter = storages
        .get(storage_id)
        .ok_or_else(|| AggregationError::StorageUnavailable(storage_id.clone()))?;
    let kind = adapter.kind();
    let path = derived_path(dataset_id, kind);

    let descriptor = derived_descriptor(
        dataset_id, storage_id, &path, kind, result, &parents, execution,
    );
    let body = TxBody::DeriveDataset {
        dataset: descriptor,
        parent_dataset_ids: result.datasets.clone(),
        program_id: program_id.clone(),
        program_version: program_version.clone(),
        parameters_hash: result.parameters_hash,
    };
    body.validate()?;

    let digest = adapter.put_file(&path, &execution.output)?;
    debug_assert_eq!(digest, result.output_digest);
    let tx = sign_transaction(body, key, created_at)?;
    submitter
        .submit_tx(tx.clone())
        .map_err(AggregationError::Rejected)?;
    Ok(tx)
}

fn derived_descriptor(
    dataset_id: &str,
    storage_id: &str,
    path: &str,
    kind: AdapterKind,
    result: &AggregationResult,
    parents: &[&DatasetDescriptor],
    execution: &Execution,
) -> DatasetDescriptor {
    let facilities: BTreeSet<&str> = parents.iter().map(|p| p.facility_id.as_str()).collect();
    let geometries: BTreeSet<Digest> = parents.iter().map(|p| p.detector_geometry_hash).collect();
    let detector_geometry_hash = if geometries.len() == 1 {
        *geometries.first().expect("one element")
    } else {
        let parts: Vec<&[u8]> = geometries.iter().map(|d| &d.0[..]).collect();
        sha256_parts(&parts)
    };
    let time_range = result.output_time_range.unwrap_or_else(|| TimeRange {
        start: parents
            .iter()
            .map(|p| p.time_range.start)
            .min()
            .unwrap_or(0),
        end: parents.iter().map(|p| p.time_range.end).max().unwrap_or(0),
    });
    let summary = EventSummary {
        count: result.events_out,
        time_range: result.output_time_range,
        energy_min: result.output_energy_min.clone(),
        energy_max: result.output_energy_max.clone(),
    };
    let extra = summary.energy_extra();
    DatasetDescriptor {
        dataset_id: dataset_id.to_string(),
        kind: DatasetKind::Secondary,
        storage_id: storage_id.to_string(),
        file_refs: vec![FileRef {
            path: path.to_string(),
            content_hash: result.output_digest,
            size: execution.output.len() as u64,
            format: kind,
        }],
        facility_id: facilities.into_iter().collect::<Vec<_>>().join("+"),
        time_range,
        detector_geometry_hash,
        extra,
    }
}
