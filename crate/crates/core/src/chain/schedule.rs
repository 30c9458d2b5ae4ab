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

//! Slot-to-handler assignment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{GenesisConfig, OrderingMode};
use crate::hash::Digest;

/// Fisher-Yates permutation of `0..n` driven by ChaCha20 seeded with `seed`.
pub fn cycle_permutation(n: usize, seed: &Digest) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::from_seed(*seed.as_bytes());
    for i in (1..n).rev() {
        // u32 draws keep the sequence identical on 32- and 64-bit targets.
        let j = rng.gen_range(0..=i as u32) as usize;
        order.swap(i, j);
    }
    order
}

/// Roster index of the handler owning `slot`.
///
/// `prev_cycle_seed` is only consulted in reshuffled mode, where it must be
/// the header hash of the last block before the slot's cycle (the genesis
/// hash for cycle 0).
pub fn schedule_index(slot: u64, config: &GenesisConfig, prev_cycle_seed: &Digest) -> usize {
    let n = config.roster_len();
    let position = (slot % n) as usize;
    match config.ordering_mode {
        OrderingMode::Fixed => position,
        OrderingMode::Reshuffled => cycle_permutation(n as usize, prev_cycle_seed)[position],
    }
}

pub fn schedule<'a>(slot: u64, config: &'a GenesisConfig, prev_cycle_seed: &Digest) -> &'a str {
    &config.handlers[schedule_index(slot, config, prev_cycle_seed)].handler_id
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::HandlerEntry;
    use crate::hash::sha256;
    use crate::keys::Keypair;
    use rand::seq::SliceRandom;

    fn config(n: usize, mode: OrderingMode) -> GenesisConfig {
        GenesisConfig {
            handlers: (0..n)
                .map(|i| HandlerEntry {
                    handler_id: format!("h{i}"),
                    public_key: Keypair::from_seed([i as u8; 32]).public(),
                })
                .collect(),
            slot_duration: 1000,
            ordering_mode: mode,
            genesis_time: 1,
        }
    }

    #[test]
    fn fixed_mode_round_robin() {
        let c = config(3, OrderingMode::Fixed);
        let seed = sha256(b"ignored");
        assert_eq!(schedule(7, &c, &seed), "h1");
        assert_eq!(schedule(0, &c, &seed), "h0");
        assert_eq!(schedule(5, &c, &seed), "h2");
    }

    #[test]
    fn reshuffle_matches_reference_shuffle() {
        for n in 1..=9 {
            for s in 0..20u8 {
                let seed = sha256(&[s, n as u8]);
                let mut reference: Vec<usize> = (0..n).collect();
                reference.shuffle(&mut ChaCha20Rng::from_seed(*seed.as_bytes()));
                assert_eq!(cycle_permutation(n, &seed), reference, "n={n} s={s}");
            }
        }
    }

    #[test]
    fn reshuffled_cycle_is_a_permutation() {
        let c = config(5, OrderingMode::Reshuffled);
        let seed = sha256(b"cycle");
        let mut owners: Vec<_> = (10..15).map(|s| schedule_index(s, &c, &seed)).collect();
        owners.sort();
        assert_eq!(owners, vec![0, 1, 2, 3, 4]);
    }
}
