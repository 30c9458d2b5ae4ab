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

//! Error reporting and exit codes.

use std::fmt::Display;
use std::process::ExitCode;

use dds_core::aggregation::AggregationError;
use dds_core::chain::{ChainError, ReplayError};
use dds_core::index::IndexError;
use dds_core::keys::KeyError;
use dds_core::merkle::MerkleError;
use dds_core::netsim::SimError;
use dds_core::pmd::{PmdError, Rejection};
use dds_core::storage::StorageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Usage,
    Invalid,
    Io,
}

impl Class {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Class::Usage => 2,
            Class::Invalid => 3,
            Class::Io => 4,
        })
    }
}

/// A failure reported as `{"error": name, "message": message}` on the last
/// line of standard error.
#[derive(Debug)]
pub struct CliError {
    pub class: Class,
    pub name: String,
    pub message: String,
}

pub type CliResult<T = ()> = Result<T, CliError>;

impl CliError {
    pub fn new(class: Class, name: &str, message: impl Display) -> Self {
        CliError {
            class,
            name: name.to_string(),
            message: message.to_string(),
        }
    }

    pub fn usage(message: impl Display) -> Self {
        Self::new(Class::Usage, "UsageError", message)
    }

    pub fn invalid(name: &str, message: impl Display) -> Self {
        Self::new(Class::Invalid, name, message)
    }

    pub fn io(context: impl Display, err: std::io::Error) -> Self {
        Self::new(Class::Io, "IoError", format!("{context}: {err}"))
    }

    pub fn json_line(&self) -> String {
        serde_json::json!({ "error": self.name, "message": self.message }).to_string()
    }
}

impl From<ChainError> for CliError {
    fn from(e: ChainError) -> Self {
        let name = match &e {
            ChainError::InvalidGenesis(_) => "InvalidGenesis",
            ChainError::NotScheduled { .. } => "NotScheduled",
            ChainError::UnknownHandlerKey => "UnknownHandlerKey",
            ChainError::SlotNotAfterHead { .. } => "SlotNotAfterHead",
            ChainError::Store(_) => "StoreError",
            ChainError::Io(_) => return CliError::new(Class::Io, "IoError", e),
        };
        CliError::invalid(name, e)
    }
}

impl From<ReplayError> for CliError {
    fn from(e: ReplayError) -> Self {
        CliError::invalid(e.verdict.name(), e)
    }
}

impl From<StorageError> for CliError {
    fn from(e: StorageError) -> Self {
        let class = match e {
            StorageError::Io(_) | StorageError::NotFound(_) => Class::Io,
            _ => Class::Invalid,
        };
        CliError::new(class, e.name(), e)
    }
}

impl From<AggregationError> for CliError {
    fn from(e: AggregationError) -> Self {
        let class = if e.is_io() { Class::Io } else { Class::Invalid };
        CliError::new(class, e.name(), e)
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::InvalidFilter(_) => CliError::new(Class::Usage, "InvalidFilter", e),
            IndexError::NotFound(_) => CliError::invalid("NotFound", e),
            IndexError::Watermark { .. } => CliError::invalid("WatermarkError", e),
        }
    }
}

impl From<Rejection> for CliError {
    fn from(e: Rejection) -> Self {
        CliError::invalid(e.name(), e)
    }
}

impl From<PmdError> for CliError {
    fn from(e: PmdError) -> Self {
        let name = match e {
            PmdError::InvalidEvent { .. } => "InvalidEvent",
            PmdError::NotFound(_) => "NotFound",
            PmdError::Key(_) => "KeyError",
            PmdError::Canonical(_) => "ParseError",
            PmdError::InvalidBody(_) => "InvalidBody",
        };
        CliError::invalid(name, e)
    }
}

impl From<KeyError> for CliError {
    fn from(e: KeyError) -> Self {
        CliError::invalid("KeyError", e)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::invalid("ConfigError", e)
    }
}

impl From<MerkleError> for CliError {
    fn from(e: MerkleError) -> Self {
        CliError::invalid("ProofError", e)
    }
}
