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

//! Non-negative fixed-point decimals kept in their textual form.
//!
//! Energies travel through signed records as strings so no float
//! formatting can change the signed bytes. Comparison is by numeric value.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid decimal {0:?}: expected digits with an optional fractional part")]
pub struct DecimalError(pub String);

/// A decimal literal such as `1.25` or `3`. Negative values are not representable.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Decimal(String);

impl Decimal {
    pub fn parse(s: &str) -> Result<Self, DecimalError> {
        let (int, frac) = match s.split_once('.') {
            Some((i, f)) => (i, Some(f)),
            None => (s, None),
        };
        let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
        if !digits(int) || frac.is_some_and(|f| !digits(f)) {
            return Err(DecimalError(s.to_string()));
        }
        Ok(Decimal(s.to_string()))
    }

    /// Builds `units / 10^scale`, e.g. `from_scaled(1250, 3)` is `1.250`.
    pub fn from_scaled(units: u64, scale: u32) -> Self {
        if scale == 0 {
            return Decimal(units.to_string());
        }
        let raw = format!("{:0>width$}", units, width = scale as usize + 1);
        let (int, frac) = raw.split_at(raw.len() - scale as usize);
        Decimal(format!("{int}.{frac}"))
    }

    pub fn zero() -> Self {
        Decimal("0".to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn parts(&self) -> (&str, &str) {
        let (int, frac) = self.0.split_once('.').unwrap_or((&self.0, ""));
        let int = int.trim_start_matches('0');
        let frac = frac.trim_end_matches('0');
        (int, frac)
    }

    /// Numeric comparison: `1.50` and `1.5` compare equal.
    pub fn cmp_value(&self, other: &Decimal) -> Ordering {
        let (ai, af) = self.parts();
        let (bi, bf) = other.parts();
        ai.len()
            .cmp(&bi.len())
            .then_with(|| ai.cmp(bi))
            .then_with(|| af.cmp(bf))
    }

    pub fn ge(&self, other: &Decimal) -> bool {
        self.cmp_value(other) != Ordering::Less
    }

    pub fn le(&self, other: &Decimal) -> bool {
        self.cmp_value(other) != Ordering::Greater
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Decimal({})", self.0)
    }
}

impl FromStr for Decimal {
    type Err = DecimalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Decimal::parse(s)
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Decimal::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(s: &str) -> Decimal {
        Decimal::parse(s).unwrap()
    }

    #[test]
    fn parse_rules() {
        for ok in ["0", "1", "1.0", "0012.500", "3.14159"] {
            assert!(Decimal::parse(ok).is_ok(), "{ok}");
        }
        for bad in ["", "-1", "1.", ".5", "1e3", "1.2.3", " 1", "NaN", "+1"] {
            assert!(Decimal::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn value_ordering() {
        assert_eq!(dec("1.50").cmp_value(&dec("1.5")), Ordering::Equal);
        assert_eq!(dec("001").cmp_value(&dec("1.000")), Ordering::Equal);
        assert_eq!(dec("0.5").cmp_value(&dec("1.0")), Ordering::Less);
        assert_eq!(dec("10").cmp_value(&dec("9.99")), Ordering::Greater);
        assert_eq!(dec("1.2").cmp_value(&dec("1.19")), Ordering::Greater);
        assert!(dec("3.4").ge(&dec("1.0")));
        assert!(dec("0").le(&dec("0.000")));
    }

    #[test]
    fn scaled_construction() {
        assert_eq!(Decimal::from_scaled(1250, 3).as_str(), "1.250");
        assert_eq!(Decimal::from_scaled(5, 3).as_str(), "0.005");
        assert_eq!(Decimal::from_scaled(42, 0).as_str(), "42");
    }

    proptest::proptest! {
        #[test]
        fn ordering_matches_integer_arithmetic(a in 0u64..1_000_000, b in 0u64..1_000_000, sa in 0u32..4, sb in 0u32..4) {
            let da = Decimal::from_scaled(a, sa);
            let db = Decimal::from_scaled(b, sb);
            let scale = 10u128.pow(4);
            let va = a as u128 * scale / 10u128.pow(sa);
            let vb = b as u128 * scale / 10u128.pow(sb);
            proptest::prop_assert_eq!(da.cmp_value(&db), va.cmp(&vb));
        }
    }
}
