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

//! Append-only Merkle log with inclusion and consistency proofs.
//!
//! The tree shape follows RFC 6962: leaves are hashed as `SHA-256(0x00 || data)`,
//! interior nodes as `SHA-256(0x01 || left || right)`, and a tree of `n > 1`
//! leaves splits at the largest power of two strictly less than `n`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{sha256, sha256_parts, Digest};

const LEAF_PREFIX: u8 = 0x00;
const NODE_PREFIX: u8 = 0x01;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MerkleError {
    #[error("index {index} out of range for log of size {size}")]
    IndexOutOfRange { index: u64, size: u64 },
}

/// Hash of a single log entry.
pub fn leaf_hash(data: &[u8]) -> Digest {
    sha256_parts(&[&[LEAF_PREFIX], data])
}

/// Hash of an interior node from its two children.
pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    sha256_parts(&[&[NODE_PREFIX], left.as_bytes(), right.as_bytes()])
}

/// Root of the empty log: SHA-256 of the empty string.
pub fn empty_root() -> Digest {
    sha256(&[])
}

/// Largest power of two strictly less than `n` (`n >= 2`).
fn split_point(n: usize) -> usize {
    debug_assert!(n >= 2);
    1 << (usize::BITS - 1 - (n - 1).leading_zeros())
}

/// Root over a slice of leaf hashes, computed recursively.
pub fn root_of(leaves: &[Digest]) -> Digest {
    match leaves.len() {
        0 => empty_root(),
        1 => leaves[0],
        n => {
            let k = split_point(n);
            node_hash(&root_of(&leaves[..k]), &root_of(&leaves[k..]))
        }
    }
}

/// Proof that a leaf sits at `leaf_index` in a log of `tree_size` leaves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionProof {
    pub leaf_index: u64,
    pub tree_size: u64,
    /// Sibling hashes, leaf-to-root.
    pub path: Vec<Digest>,
}

/// Proof that the log at `new_size` extends the log at `old_size` unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyProof {
    pub old_size: u64,
    pub new_size: u64,
    pub path: Vec<Digest>,
}

/// An append-only Merkle log.
///
/// Keeps every leaf hash (proofs need them) plus a frontier of perfect subtree
/// roots so the current root is available in `O(log n)` after each append.
#[derive(Debug, Clone, Default)]
pub struct MerkleLog {
    leaves: Vec<Digest>,
    frontier: Vec<(u32, Digest)>,
}

impl PartialEq for MerkleLog {
    fn eq(&self, other: &Self) -> bool {
        self.leaves == other.leaves
    }
}

impl Eq for MerkleLog {}

impl MerkleLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_leaf_hashes<I: IntoIterator<Item = Digest>>(leaves: I) -> Self {
        let mut log = Self::new();
        for leaf in leaves {
            log.append_leaf(leaf);
        }
        log
    }

    /// Appends raw entry bytes, returning the new leaf's index.
    pub fn append(&mut self, data: &[u8]) -> u64 {
        self.append_leaf(leaf_hash(data))
    }

    /// Appends an already-hashed leaf, returning its index.
    pub fn append_leaf(&mut self, leaf: Digest) -> u64 {
        self.leaves.push(leaf);
        let mut node = (0u32, leaf);
        while let Some(&(height, top)) = self.frontier.last() {
            if height != node.0 {
                break;
            }
            self.frontier.pop();
            node = (height + 1, node_hash(&top, &node.1));
        }
        self.frontier.push(node);
        self.leaves.len() as u64 - 1
    }

    pub fn size(&self) -> u64 {
        self.leaves.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn leaves(&self) -> &[Digest] {
        &self.leaves
    }

    pub fn leaf(&self, index: u64) -> Option<Digest> {
        self.leaves.get(index as usize).copied()
    }

    /// Current root, folded from the frontier.
    pub fn root(&self) -> Digest {
        let mut iter = self.frontier.iter().rev();
        match iter.next() {
            None => empty_root(),
            Some(&(_, last)) => iter.fold(last, |acc, (_, left)| node_hash(left, &acc)),
        }
    }

    /// Root of the first `size` leaves.
    pub fn root_at(&self, size: u64) -> Result<Digest, MerkleError> {
        self.check_size(size)?;
        Ok(root_of(&self.leaves[..size as usize]))
    }

    /// The first `size` leaves as a log of their own.
    pub fn prefix(&self, size: u64) -> Result<MerkleLog, MerkleError> {
        self.check_size(size)?;
        Ok(MerkleLog::from_leaf_hashes(
            self.leaves[..size as usize].iter().copied(),
        ))
    }

    pub fn prove_inclusion(&self, index: u64) -> Result<InclusionProof, MerkleError> {
        self.prove_inclusion_at(index, self.size())
    }

    /// Inclusion proof for `index` against the log's state at `tree_size`.
    pub fn prove_inclusion_at(
        &self,
        index: u64,
        tree_size: u64,
    ) -> Result<InclusionProof, MerkleError> {
        self.check_size(tree_size)?;
        if index >= tree_size {
            return Err(MerkleError::IndexOutOfRange {
                index,
                size: tree_size,
            });
        }
        let mut path = Vec::new();
        inclusion_path(
            index as usize,
            &self.leaves[..tree_size as usize],
            &mut path,
        );
        Ok(InclusionProof {
            leaf_index: index,
            tree_size,
            path,
        })
    }

    pub fn prove_consistency(&self, old_size: u64) -> Result<ConsistencyProof, MerkleError> {
        self.prove_consistency_between(old_size, self.size())
    }

    /// Consistency proof between two historical sizes of this log.
    pub fn prove_consistency_between(
        &self,
        old_size: u64,
        new_size: u64,
    ) -> Result<ConsistencyProof, MerkleError> {
        self.check_size(new_size)?;
        if old_size > new_size {
            return Err(MerkleError::IndexOutOfRange {
                index: old_size,
                size: new_size,
            });
        }
        let mut path = Vec::new();
        if old_size > 0 && old_size < new_size {
            subproof(
                old_size as usize,
                &self.leaves[..new_size as usize],
                true,
                &mut path,
            );
        }
        Ok(ConsistencyProof {
            old_size,
            new_size,
            path,
        })
    }

    fn check_size(&self, size: u64) -> Result<(), MerkleError> {
        if size > self.size() {
            return Err(MerkleError::IndexOutOfRange {
                index: size,
                size: self.size(),
            });
        }
        Ok(())
    }
}

// Sibling hashes are pushed bottom-up: the recursion descends first, then
// appends the sibling at its own level.
fn inclusion_path(index: usize, leaves: &[Digest], out: &mut Vec<Digest>) {
    let n = leaves.len();
    if n <= 1 {
        return;
    }
    let k = split_point(n);
    if index < k {
        inclusion_path(index, &leaves[..k], out);
        out.push(root_of(&leaves[k..]));
    } else {
        inclusion_path(index - k, &leaves[k..], out);
        out.push(root_of(&leaves[..k]));
    }
}

fn subproof(m: usize, leaves: &[Digest], complete: bool, out: &mut Vec<Digest>) {
    let n = leaves.len();
    if m == n {
        if !complete {
            out.push(root_of(leaves));
        }
        return;
    }
    let k = split_point(n);
    if m <= k {
        subproof(m, &leaves[..k], complete, out);
        out.push(root_of(&leaves[k..]));
    } else {
        subproof(m - k, &leaves[k..], false, out);
        out.push(root_of(&leaves[..k]));
    }
}

/// Checks an inclusion proof. Malformed proofs yield `false`.
pub fn verify_inclusion(root: &Digest, leaf: &Digest, proof: &InclusionProof) -> bool {
    if proof.leaf_index >= proof.tree_size {
        return false;
    }
    let mut fnode = proof.leaf_index;
    let mut snode = proof.tree_size - 1;
    let mut acc = *leaf;
    for sibling in &proof.path {
        if snode == 0 {
            return false;
        }
        if fnode & 1 == 1 || fnode == snode {
            acc = node_hash(sibling, &acc);
            if fnode & 1 == 0 {
                while fnode & 1 == 0 && fnode != 0 {
                    fnode >>= 1;
                    snode >>= 1;
                }
            }
        } else {
            acc = node_hash(&acc, sibling);
        }
        fnode >>= 1;
        snode >>= 1;
    }
    snode == 0 && acc == *root
}

/// Checks that `new_root` at `new_size` extends `old_root` at `old_size`.
///
/// The sizes in `proof` must agree with the claimed sizes. An empty old log is
/// consistent with anything, provided `old_root` is the empty root.
pub fn verify_consistency(
    old_root: &Digest,
    old_size: u64,
    new_root: &Digest,
    new_size: u64,
    proof: &ConsistencyProof,
) -> bool {
    if proof.old_size != old_size || proof.new_size != new_size || old_size > new_size {
        return false;
    }
    if old_size == new_size {
        return proof.path.is_empty() && old_root == new_root;
    }
    if old_size == 0 {
        return proof.path.is_empty() && *old_root == empty_root();
    }
    if proof.path.is_empty() {
        return false;
    }

    let mut path: Vec<Digest> = Vec::with_capacity(proof.path.len() + 1);
    if old_size.is_power_of_two() {
        path.push(*old_root);
    }
    path.extend_from_slice(&proof.path);

    let mut fnode = old_size - 1;
    let mut snode = new_size - 1;
    while fnode & 1 == 1 {
        fnode >>= 1;
        snode >>= 1;
    }
    let mut old_acc = path[0];
    let mut new_acc = path[0];
    for c in &path[1..] {
        if snode == 0 {
            return false;
        }
        if fnode & 1 == 1 || fnode == snode {
            old_acc = node_hash(c, &old_acc);
            new_acc = node_hash(c, &new_acc);
            if fnode & 1 == 0 {
                while fnode & 1 == 0 && fnode != 0 {
                    fnode >>= 1;
                    snode >>= 1;
                }
            }
        } else {
            new_acc = node_hash(&new_acc, c);
        }
        fnode >>= 1;
        snode >>= 1;
    }
    snode == 0 && old_acc == *old_root && new_acc == *new_root
}
