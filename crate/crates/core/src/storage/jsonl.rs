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

//! One canonical-JSON event per `\n`-terminated line. An empty file holds
//! zero events.

use super::DecodeError;
use crate::canonical;
use crate::pmd::EasEvent;

pub(super) fn encode(events: &[EasEvent]) -> Vec<u8> {
    let mut out = Vec::new();
    for event in events {
        encode_record(&mut out, event);
    }
    out
}

pub(super) fn encode_record(out: &mut Vec<u8>, event: &EasEvent) {
    out.extend(canonical::to_canonical_bytes(event).expect("events contain no floats"));
    out.push(b'\n');
}

#[derive(Debug, Default)]
pub(super) struct Cursor {
    pos: usize,
    records: usize,
}

impl Cursor {
    pub(super) fn records_started(&self) -> usize {
        self.records
    }

    pub(super) fn next(&mut self, bytes: &[u8]) -> Option<Result<EasEvent, DecodeError>> {
        if self.pos >= bytes.len() {
            return None;
        }
        let record = self.records;
        self.records += 1;
        let rest = &bytes[self.pos..];
        let Some(newline) = rest.iter().position(|&b| b == b'\n') else {
            self.pos = bytes.len();
            return Some(Err(DecodeError {
                record,
                reason: "unterminated line".into(),
            }));
        };
        self.pos += newline + 1;
        Some(
            serde_json::from_slice(&rest[..newline]).map_err(|e| DecodeError {
                record,
                reason: e.to_string(),
            }),
        )
    }
}
