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

//! Plugin interface, the built-in plugins, and the name-to-plugin library.

use std::cell::{Cell, RefCell};
use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::rc::Rc;
use std::sync::Arc;

use super::archive::{merge_archive, ArchiveEntry};
use super::{AggregationError, PluginSpec};
use crate::decimal::Decimal;
use crate::pmd::EasEvent;

/// An event together with the dataset it was read from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tagged {
    pub dataset_id: Arc<str>,
    pub event: EasEvent,
}

pub type EventIter<'a> = Box<dyn Iterator<Item = Result<Tagged, AggregationError>> + 'a>;

/// An ordered event stream with a name used in error reports.
pub struct NamedStream<'a> {
    pub name: String,
    pub events: EventIter<'a>,
}

/// Counters and buffer accounting shared between the engine and one stage.
#[derive(Debug, Clone, Default)]
pub struct StageContext {
    counters: Rc<RefCell<BTreeMap<String, u64>>>,
    peak: Rc<Cell<usize>>,
    window: usize,
}

impl StageContext {
    pub(super) fn new(peak: Rc<Cell<usize>>, window: usize) -> Self {
        StageContext {
            counters: Rc::default(),
            peak,
            window,
        }
    }

    pub fn bump(&self, counter: &str) {
        *self
            .counters
            .borrow_mut()
            .entry(counter.to_string())
            .or_default() += 1;
    }

    /// Records that `n` events are held at once.
    pub fn buffered(&self, n: usize) {
        if n > self.peak.get() {
            self.peak.set(n);
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub(super) fn counters(&self) -> BTreeMap<String, u64> {
        self.counters.borrow().clone()
    }
}

/// Transforms ordered event streams. Implementations must be deterministic in
/// their input order and parameters and must only read the streams given.
pub trait EventPlugin {
    fn name(&self) -> &'static str;

    fn apply<'a>(
        &self,
        streams: Vec<NamedStream<'a>>,
        ctx: &StageContext,
    ) -> Result<Vec<NamedStream<'a>>, AggregationError>;
}

/// Transforms whole files into one output blob.
pub trait FilePlugin {
    fn name(&self) -> &'static str;

    fn apply(&self, files: Vec<ArchiveEntry>) -> Result<Vec<u8>, AggregationError>;
}

pub enum Stage {
    Events(Box<dyn EventPlugin>),
    Files(Box<dyn FilePlugin>),
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Events(p) => p.name(),
            Stage::Files(p) => p.name(),
        }
    }
}

pub type PluginFactory = fn(&BTreeMap<String, String>) -> Result<Stage, AggregationError>;

/// Registered plugins by name.
#[derive(Clone)]
pub struct PluginLibrary {
    factories: BTreeMap<String, PluginFactory>,
}

impl Default for PluginLibrary {
    fn default() -> Self {
        let mut lib = PluginLibrary {
            factories: BTreeMap::new(),
        };
        lib.register(TimeOrderedMerge::NAME, |p| {
            no_parameters(TimeOrderedMerge::NAME, p)?;
            Ok(Stage::Events(Box::new(TimeOrderedMerge)))
        });
        lib.register(EnergyFilter::NAME, |p| {
            Ok(Stage::Events(Box::new(EnergyFilter::from_parameters(p)?)))
        });
        lib.register(MergeArchive::NAME, |p| {
            no_parameters(MergeArchive::NAME, p)?;
            Ok(Stage::Files(Box::new(MergeArchive)))
        });
        lib
    }
}

impl std::fmt::Debug for PluginLibrary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

impl PluginLibrary {
    pub fn register(&mut self, name: &str, factory: PluginFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    /// Instantiates every stage, validating parameters before any data moves.
    pub fn plan(&self, pipeline: &[PluginSpec]) -> Result<Vec<Stage>, AggregationError> {
        let stages = pipeline
            .iter()
            .map(|spec| {
                let factory = self
                    .factories
                    .get(&spec.name)
                    .ok_or_else(|| AggregationError::PluginNotFound(spec.name.clone()))?;
                factory(&spec.parameters)
            })
            .collect::<Result<Vec<_>, _>>()?;
        if stages.len() > 1 {
            if let Some(s) = stages.iter().find(|s| matches!(s, Stage::Files(_))) {
                return Err(config_error(
                    s.name(),
                    "file plugins must be the only stage",
                ));
            }
        }
        Ok(stages)
    }
}

fn config_error(plugin: &str, reason: impl Into<String>) -> AggregationError {
    AggregationError::PluginConfig {
        plugin: plugin.to_string(),
        reason: reason.into(),
    }
}

fn no_parameters(plugin: &str, p: &BTreeMap<String, String>) -> Result<(), AggregationError> {
    match p.keys().next() {
        Some(k) => Err(config_error(plugin, format!("unknown parameter {k:?}"))),
        None => Ok(()),
    }
}

/// K-way merge of per-file streams into one stream ordered by
/// `(registration_time, dataset_id, event_id)`.
#[derive(Debug, Clone, Copy)]
pub struct TimeOrderedMerge;

impl TimeOrderedMerge {
    pub const NAME: &'static str = "time_ordered_merge";
}

struct Head {
    item: Tagged,
    stream: usize,
}

impl Head {
    fn key(&self) -> (u64, &str, &str, usize) {
        (
            self.item.event.registration_time,
            &self.item.dataset_id,
            &self.item.event.event_id,
            self.stream,
        )
    }
}

impl PartialEq for Head {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Head {}

impl PartialOrd for Head {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Head {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// The heap holds, for every stream, all events sharing that stream's
/// earliest pending timestamp, so equal-time events are ordered by key even
/// within one stream. `lookahead` keeps the first event of the next run.
struct MergeIter<'a> {
    streams: Vec<NamedStream<'a>>,
    last: Vec<Option<u64>>,
    lookahead: Vec<Option<Tagged>>,
    in_heap: Vec<usize>,
    heap: BinaryHeap<Reverse<Head>>,
    held: usize,
    primed: bool,
    done: bool,
    ctx: StageContext,
}

impl MergeIter<'_> {
    fn pull(&mut self, stream: usize) -> Result<Option<Tagged>, AggregationError> {
        let Some(next) = self.streams[stream].events.next() else {
            return Ok(None);
        };
        let item = next?;
        let t = item.event.registration_time;
        if self.last[stream].is_some_and(|prev| t < prev) {
            return Err(AggregationError::UnsortedInput(
                self.streams[stream].name.clone(),
            ));
        }
        self.last[stream] = Some(t);
        Ok(Some(item))
    }

    fn hold(&mut self, delta: isize) -> Result<(), AggregationError> {
        self.held = self
            .held
            .checked_add_signed(delta)
            .expect("held count underflow");
        if self.held > self.ctx.window() {
            return Err(AggregationError::WindowExceeded {
                required: self.held,
                window: self.ctx.window(),
            });
        }
        self.ctx.buffered(self.held);
        Ok(())
    }

    /// Loads the next equal-time run of `stream` into the heap.
    fn fill(&mut self, stream: usize) -> Result<(), AggregationError> {
        let first = match self.lookahead[stream].take() {
            Some(item) => item,
            None => match self.pull(stream)? {
                Some(item) => {
                    self.hold(1)?;
                    item
                }
                None => return Ok(()),
            },
        };
        let t = first.event.registration_time;
        self.heap.push(Reverse(Head {
            item: first,
            stream,
        }));
        self.in_heap[stream] = 1;
        while let Some(item) = self.pull(stream)? {
            self.hold(1)?;
            if item.event.registration_time == t {
                self.heap.push(Reverse(Head { item, stream }));
                self.in_heap[stream] += 1;
            } else {
                self.lookahead[stream] = Some(item);
                break;
            }
        }
        Ok(())
    }

    fn step(&mut self) -> Result<Option<Tagged>, AggregationError> {
        if !self.primed {
            self.primed = true;
            for i in 0..self.streams.len() {
                self.fill(i)?;
            }
        }
        let Some(Reverse(head)) = self.heap.pop() else {
            return Ok(None);
        };
        self.hold(-1)?;
        self.in_heap[head.stream] -= 1;
        if self.in_heap[head.stream] == 0 {
            self.fill(head.stream)?;
        }
        Ok(Some(head.item))
    }
}

impl Iterator for MergeIter<'_> {
    type Item = Result<Tagged, AggregationError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let out = self.step().transpose();
        self.done = !matches!(out, Some(Ok(_)));
        out
    }
}

impl EventPlugin for TimeOrderedMerge {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn apply<'a>(
        &self,
        streams: Vec<NamedStream<'a>>,
        ctx: &StageContext,
    ) -> Result<Vec<NamedStream<'a>>, AggregationError> {
        if streams.len() > ctx.window() {
            return Err(AggregationError::WindowExceeded {
                required: streams.len(),
                window: ctx.window(),
            });
        }
        let n = streams.len();
        let merged = MergeIter {
            streams,
            last: vec![None; n],
            lookahead: (0..n).map(|_| None).collect(),
            in_heap: vec![0; n],
            heap: BinaryHeap::with_capacity(n),
            held: 0,
            primed: false,
            done: false,
            ctx: ctx.clone(),
        };
        Ok(vec![NamedStream {
            name: Self::NAME.to_string(),
            events: Box::new(merged),
        }])
    }
}

/// Keeps events whose `energy_estimate` is present and at least `threshold` PeV.
#[derive(Debug, Clone)]
pub struct EnergyFilter {
    threshold: Decimal,
}

impl EnergyFilter {
    pub const NAME: &'static str = "energy_filter";
    pub const DROPPED_MISSING: &'static str = "dropped_missing_energy";
    pub const DROPPED_BELOW: &'static str = "dropped_below_threshold";

    pub fn new(threshold: Decimal) -> Self {
        EnergyFilter { threshold }
    }

    pub fn from_parameters(p: &BTreeMap<String, String>) -> Result<Self, AggregationError> {
        if let Some(k) = p.keys().find(|k| *k != "threshold") {
            return Err(config_error(Self::NAME, format!("unknown parameter {k:?}")));
        }
        let raw = p
            .get("threshold")
            .ok_or_else(|| config_error(Self::NAME, "missing parameter \"threshold\""))?;
        if raw.trim_start().starts_with('-') {
            return Err(config_error(
                Self::NAME,
                format!("negative threshold {raw}"),
            ));
        }
        let threshold = Decimal::parse(raw)
            .map_err(|e| config_error(Self::NAME, format!("threshold {raw:?}: {e}")))?;
        Ok(Self::new(threshold))
    }

    pub fn keeps(&self, event: &EasEvent) -> bool {
        event
            .energy_estimate
            .as_ref()
            .is_some_and(|e| e.ge(&self.threshold))
    }
}

impl EventPlugin for EnergyFilter {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn apply<'a>(
        &self,
        streams: Vec<NamedStream<'a>>,
        ctx: &StageContext,
    ) -> Result<Vec<NamedStream<'a>>, AggregationError> {
        Ok(streams
            .into_iter()
            .map(|s| {
                let filter = self.clone();
                let ctx = ctx.clone();
                let events = s.events.filter(move |item| match item {
                    Err(_) => true,
                    Ok(t) if filter.keeps(&t.event) => true,
                    Ok(t) => {
                        ctx.bump(if t.event.energy_estimate.is_none() {
                            Self::DROPPED_MISSING
                        } else {
                            Self::DROPPED_BELOW
                        });
                        false
                    }
                });
                NamedStream {
                    name: s.name,
                    events: Box::new(events),
                }
            })
            .collect())
    }
}

/// Packs the fetched files into one deterministic tar archive.
#[derive(Debug, Clone, Copy)]
pub struct MergeArchive;

impl MergeArchive {
    pub const NAME: &'static str = "merge_archive";
}

impl FilePlugin for MergeArchive {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn apply(&self, files: Vec<ArchiveEntry>) -> Result<Vec<u8>, AggregationError> {
        merge_archive(files)
    }
}
