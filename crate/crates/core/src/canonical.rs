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

//! Canonical JSON encoding used for everything that gets hashed or signed.
//!
//! Objects have their keys sorted by byte order, there is no insignificant
//! whitespace, and only integers are allowed as numbers.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("value is not representable as canonical JSON: {0}")]
    NotCanonical(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Serializes `value` to canonical JSON bytes.
pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    // serde_json's default map is a BTreeMap, which gives sorted keys.
    let tree = serde_json::to_value(value)?;
    reject_floats(&tree)?;
    Ok(serde_json::to_vec(&tree)?)
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    let bytes = to_canonical_bytes(value)?;
    Ok(String::from_utf8(bytes).expect("serde_json emits UTF-8"))
}

pub fn from_slice<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CanonicalError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// True when `bytes` is exactly the canonical rendering of its own parse.
pub fn is_canonical(bytes: &[u8]) -> bool {
    match serde_json::from_slice::<Value>(bytes) {
        Ok(v) => reject_floats(&v).is_ok() && serde_json::to_vec(&v).ok().as_deref() == Some(bytes),
        Err(_) => false,
    }
}

fn reject_floats(value: &Value) -> Result<(), CanonicalError> {
    match value {
        Value::Number(n) if !(n.is_u64() || n.is_i64()) => Err(CanonicalError::NotCanonical(
            format!("non-integer number {n}"),
        )),
        Value::Array(items) => items.iter().try_for_each(reject_floats),
        Value::Object(map) => map.values().try_for_each(reject_floats),
        _ => Ok(()),
    }
}
