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

//! Tamper-evident provenance registry and federated data access for
//! astroparticle event storages.
//!
//! The registry is a permissioned chain of handler-signed blocks committing
//! to an append-only Merkle log of provenance transactions. Around it sit a
//! deterministic handler-network simulator, a read-only metadata index,
//! storage adapters for heterogeneous event formats, and an aggregation
//! service that streams query results through a plugin pipeline.

pub mod aggregation;
pub mod canonical;
pub mod chain;
pub mod decimal;
pub mod hash;
pub mod index;
pub mod keys;
pub mod merkle;
pub mod netsim;
pub mod pmd;
pub mod storage;

pub use hash::{sha256, Digest};
