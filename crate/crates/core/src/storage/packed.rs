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

//! Little-endian binary event stream.
//!
//! ```text
//! file    := magic "EASP" | version u16 (=1) | record_count u32 | record*
//! record  := str16 event_id | str16 facility_id | str16 detector_id
//!            | u64 registration_time | u32 bin_width
//!            | u32 bins | u32 count * bins
//!            | u8 has_energy | [str16 energy_decimal]
//!            | u16 pairs | (str16 key | str16 value) * pairs
//! str16   := u16 byte_length | UTF-8 bytes
//! ```

use std::collections::BTreeMap;

use super::{DecodeError, StorageError};
use crate::decimal::Decimal;
use crate::pmd::EasEvent;

const MAGIC: &[u8; 4] = b"EASP";
const VERSION: u16 = 1;
pub(super) const HEADER_LEN: usize = 4 + 2 + 4;

pub(super) fn encode(events: &[EasEvent]) -> Result<Vec<u8>, StorageError> {
    let mut out = Vec::with_capacity(HEADER_LEN + events.len() * 64);
    start(&mut out);
    for e in events {
        encode_record(&mut out, e)?;
    }
    finish(&mut out, events.len())?;
    Ok(out)
}

/// Writes a file header with a zero record count.
pub(super) fn start(out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
}

/// Patches the record count into a header written by [`start`].
pub(super) fn finish(out: &mut [u8], records: usize) -> Result<(), StorageError> {
    let count =
        u32::try_from(records).map_err(|_| StorageError::Encode("too many records".into()))?;
    out[6..HEADER_LEN].copy_from_slice(&count.to_le_bytes());
    Ok(())
}

pub(super) fn encode_record(out: &mut Vec<u8>, e: &EasEvent) -> Result<(), StorageError> {
    put_str(out, &e.event_id)?;
    put_str(out, &e.facility_id)?;
    put_str(out, &e.detector_id)?;
    out.extend_from_slice(&e.registration_time.to_le_bytes());
    out.extend_from_slice(&e.bin_width.to_le_bytes());
    let bins = u32::try_from(e.signal_histogram.len())
        .map_err(|_| StorageError::Encode("histogram too long".into()))?;
    out.extend_from_slice(&bins.to_le_bytes());
    for c in &e.signal_histogram {
        out.extend_from_slice(&c.to_le_bytes());
    }
    match &e.energy_estimate {
        Some(energy) => {
            out.push(1);
            put_str(out, energy.as_str())?;
        }
        None => out.push(0),
    }
    let pairs = u16::try_from(e.service_info.len())
        .map_err(|_| StorageError::Encode("too many service_info entries".into()))?;
    out.extend_from_slice(&pairs.to_le_bytes());
    for (k, v) in &e.service_info {
        put_str(out, k)?;
        put_str(out, v)?;
    }
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), StorageError> {
    let len = u16::try_from(s.len())
        .map_err(|_| StorageError::Encode(format!("string of {} bytes exceeds u16", s.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

#[derive(Debug, Default)]
pub(super) struct Cursor {
    pos: usize,
    expected: Option<u32>,
    records: usize,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format!("truncated while reading {what}"))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8, String> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn str16(&mut self, what: &str) -> Result<String, String> {
        let len = self.u16(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| format!("{what} is not UTF-8"))
    }

    fn record(&mut self) -> Result<EasEvent, String> {
        let event_id = self.str16("event_id")?;
        let facility_id = self.str16("facility_id")?;
        let detector_id = self.str16("detector_id")?;
        let registration_time = self.u64("registration_time")?;
        let bin_width = self.u32("bin_width")?;
        let bins = self.u32("histogram length")? as usize;
        // Bound the allocation by what the remaining bytes can hold.
        let raw = self.take(
            bins.checked_mul(4).ok_or("histogram overflow")?,
            "histogram",
        )?;
        let signal_histogram = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let energy_estimate = match self.u8("energy flag")? {
            0 => None,
            1 => {
                let s = self.str16("energy")?;
                Some(Decimal::parse(&s).map_err(|e| e.to_string())?)
            }
            other => return Err(format!("bad energy flag {other}")),
        };
        let pairs = self.u16("service_info count")?;
        let mut service_info = BTreeMap::new();
        for _ in 0..pairs {
            let k = self.str16("service_info key")?;
            let v = self.str16("service_info value")?;
            if service_info.insert(k, v).is_some() {
                return Err("repeated service_info key".into());
            }
        }
        Ok(EasEvent {
            event_id,
            registration_time,
            facility_id,
            detector_id,
            signal_histogram,
            bin_width,
            energy_estimate,
            service_info,
        })
    }
}

impl Cursor {
    pub(super) fn records_started(&self) -> usize {
        self.records
    }

    fn header(&mut self, bytes: &[u8]) -> Result<u32, DecodeError> {
        let err = |reason: &str| DecodeError {
            record: 0,
            reason: reason.to_string(),
        };
        if bytes.len() < HEADER_LEN {
            return Err(err("truncated file header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(err("bad magic"));
        }
        if u16::from_le_bytes([bytes[4], bytes[5]]) != VERSION {
            return Err(err("unsupported version"));
        }
        self.pos = HEADER_LEN;
        Ok(u32::from_le_bytes(bytes[6..10].try_into().unwrap()))
    }

    pub(super) fn next(&mut self, bytes: &[u8]) -> Option<Result<EasEvent, DecodeError>> {
        let expected = match self.expected {
            Some(n) => n,
            None => match self.header(bytes) {
                Ok(n) => {
                    self.expected = Some(n);
                    n
                }
                Err(e) => {
                    self.expected = Some(0);
                    self.records = 1;
                    return Some(Err(e));
                }
            },
        };
        let record = self.records;
        if record as u64 >= expected as u64 {
            if self.pos != bytes.len() {
                self.pos = bytes.len();
                self.records += 1;
                return Some(Err(DecodeError {
                    record,
                    reason: "trailing bytes after last record".into(),
                }));
            }
            return None;
        }
        self.records += 1;
        let mut reader = Reader {
            bytes,
            pos: self.pos,
        };
        let result = reader.record();
        self.pos = reader.pos;
        Some(result.map_err(|reason| DecodeError { record, reason }))
    }
}
