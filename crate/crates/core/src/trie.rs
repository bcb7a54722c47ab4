//! Sparse binary Merkle trie over 256-bit keys.
//!
//! The authenticated structure is the full-depth binary tree with one leaf
//! slot per possible key:
//!
//! - leaf: `H(0x00 ‖ key ‖ H(value))`
//! - internal: `H(0x01 ‖ left ‖ right)`
//! - empty subtree of height `h`: `E_0 = H(0x02)`, `E_{h+1} = H(0x01 ‖ E_h ‖ E_h)`
//!
//! Bit 0 of the key (the most significant bit of byte 0) selects the branch
//! directly under the root; bit 255 selects between two leaves. The empty
//! trie's root is `E_256`.
//!
//! In memory only branching points are stored. A subtree holding one key, or
//! a chain of single-child levels, is "lifted" through its empty siblings on
//! demand, so memory is O(n) while every digest matches the full-depth tree.
//!
//! Inclusion proofs list only the non-default siblings, flagged in a 256-bit
//! bitmap indexed by the same bit positions as the key.

use std::sync::OnceLock;

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::{hash, hash_parts, Digest};

pub type Key = [u8; 32];

/// Height of the tree; also the number of key bits.
pub const DEPTH: usize = 256;

const LEAF_TAG: u8 = 0x00;
const NODE_TAG: u8 = 0x01;
const EMPTY_TAG: u8 = 0x02;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrieError {
    #[error("key not present in trie")]
    KeyAbsent,
}

fn bit(key: &Key, i: usize) -> bool {
    (key[i / 8] >> (7 - i % 8)) & 1 == 1
}

fn set_bit(bitmap: &mut [u8; 32], i: usize) {
    bitmap[i / 8] |= 1 << (7 - i % 8);
}

fn first_diff(a: &Key, b: &Key) -> Option<usize> {
    a.iter()
        .zip(b.iter())
        .enumerate()
        .find(|(_, (x, y))| x != y)
        .map(|(i, (x, y))| i * 8 + (x ^ y).leading_zeros() as usize)
}

/// Digest of an empty subtree of the given height (0 = leaf level).
pub fn empty_digest(height: usize) -> Digest {
    static TABLE: OnceLock<Vec<Digest>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(DEPTH + 1);
        t.push(hash(&[EMPTY_TAG]));
        for h in 0..DEPTH {
            t.push(node_digest(&t[h], &t[h]));
        }
        t
    })[height]
}

pub fn leaf_digest(key: &Key, value: &[u8]) -> Digest {
    hash_parts(&[&[LEAF_TAG], key, hash(value).as_bytes()])
}

pub fn node_digest(left: &Digest, right: &Digest) -> Digest {
    hash_parts(&[&[NODE_TAG], left.as_bytes(), right.as_bytes()])
}

/// Carries the digest of a subtree at height `from` up to height `to` along
/// `key`'s path, where every sibling on the way is empty.
fn lift(mut d: Digest, key: &Key, from: usize, to: usize) -> Digest {
    for h in from..to {
        let sib = empty_digest(h);
        d = if bit(key, DEPTH - 1 - h) {
            node_digest(&sib, &d)
        } else {
            node_digest(&d, &sib)
        };
    }
    d
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { key: Key, value: Vec<u8>, digest: Digest },
    Branch(Box<Branch>),
}

#[derive(Clone, Debug)]
struct Branch {
    /// Bit index at which the two children diverge.
    split: usize,
    /// Any key below this branch; bits before `split` are shared by all.
    key: Key,
    left: Node,
    right: Node,
    /// Children digests lifted to height `DEPTH - 1 - split`.
    left_up: Digest,
    right_up: Digest,
    digest: Digest,
}

impl Node {
    fn leaf(key: Key, value: Vec<u8>) -> Node {
        let digest = leaf_digest(&key, &value);
        Node::Leaf { key, value, digest }
    }

    fn height(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Branch(b) => DEPTH - b.split,
        }
    }

    fn key(&self) -> &Key {
        match self {
            Node::Leaf { key, .. } => key,
            Node::Branch(b) => &b.key,
        }
    }

    fn digest(&self) -> Digest {
        match self {
            Node::Leaf { digest, .. } => *digest,
            Node::Branch(b) => b.digest,
        }
    }

    fn lifted(&self, to: usize) -> Digest {
        lift(self.digest(), self.key(), self.height(), to)
    }

    fn insert(self, key: Key, value: Vec<u8>) -> (Node, Option<Vec<u8>>) {
        match self {
            Node::Leaf { key: k, value: old, .. } if k == key => (Node::leaf(key, value), Some(old)),
            leaf @ Node::Leaf { .. } => {
                let split = first_diff(leaf.key(), &key).expect("keys differ");
                let new = Node::leaf(key, value);
                let node = if bit(&key, split) {
                    Branch::build(split, leaf, new)
                } else {
                    Branch::build(split, new, leaf)
                };
                (node, None)
            }
            Node::Branch(b) => match first_diff(&b.key, &key) {
                Some(j) if j < b.split => {
                    let new = Node::leaf(key, value);
                    let node = if bit(&key, j) {
                        Branch::build(j, Node::Branch(b), new)
                    } else {
                        Branch::build(j, new, Node::Branch(b))
                    };
                    (node, None)
                }
                _ => {
                    let mut b = *b;
                    let old;
                    if bit(&key, b.split) {
                        let (child, o) = b.right.insert(key, value);
                        b.right = child;
                        b.right_up = b.right.lifted(DEPTH - 1 - b.split);
                        old = o;
                    } else {
                        let (child, o) = b.left.insert(key, value);
                        b.left = child;
                        b.left_up = b.left.lifted(DEPTH - 1 - b.split);
                        b.key = *b.left.key();
                        old = o;
                    }
                    b.digest = node_digest(&b.left_up, &b.right_up);
                    (Node::Branch(Box::new(b)), old)
                }
            },
        }
    }

    fn remove(self, key: &Key) -> (Option<Node>, Option<Vec<u8>>) {
        match self {
            Node::Leaf { key: k, value, .. } if &k == key => (None, Some(value)),
            leaf @ Node::Leaf { .. } => (Some(leaf), None),
            Node::Branch(b) => {
                if matches!(first_diff(&b.key, key), Some(j) if j < b.split) {
                    return (Some(Node::Branch(b)), None);
                }
                let mut b = *b;
                let go_right = bit(key, b.split);
                let child = if go_right {
                    std::mem::replace(&mut b.right, Node::leaf([0; 32], Vec::new()))
                } else {
                    std::mem::replace(&mut b.left, Node::leaf([0; 32], Vec::new()))
                };
                let (child, removed) = child.remove(key);
                match child {
                    None => {
                        let other = if go_right { b.left } else { b.right };
                        (Some(other), removed)
                    }
                    Some(c) => {
                        let h = DEPTH - 1 - b.split;
                        if go_right {
                            b.right = c;
                            if removed.is_some() {
                                b.right_up = b.right.lifted(h);
                            }
                        } else {
                            b.left = c;
                            if removed.is_some() {
                                b.left_up = b.left.lifted(h);
                                b.key = *b.left.key();
                            }
                        }
                        b.digest = node_digest(&b.left_up, &b.right_up);
                        (Some(Node::Branch(Box::new(b))), removed)
                    }
                }
            }
        }
    }

    fn collect<'a>(&'a self, out: &mut Vec<(&'a Key, &'a [u8])>) {
        match self {
            Node::Leaf { key, value, .. } => out.push((key, value)),
            Node::Branch(b) => {
                b.left.collect(out);
                b.right.collect(out);
            }
        }
    }
}

impl Branch {
    fn build(split: usize, left: Node, right: Node) -> Node {
        let h = DEPTH - 1 - split;
        let left_up = left.lifted(h);
        let right_up = right.lifted(h);
        Node::Branch(Box::new(Branch {
            split,
            key: *left.key(),
            digest: node_digest(&left_up, &right_up),
            left,
            right,
            left_up,
            right_up,
        }))
    }
}

/// Authenticated key-value map with a cached root.
#[derive(Clone, Debug)]
pub struct Trie {
    top: Option<Node>,
    root: Digest,
    len: usize,
}

impl Default for Trie {
    fn default() -> Self {
        Self {
            top: None,
            root: empty_digest(DEPTH),
            len: 0,
        }
    }
}

impl Trie {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn root(&self) -> Digest {
        self.root
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, key: &Key) -> Option<&[u8]> {
        let mut node = self.top.as_ref()?;
        loop {
            match node {
                Node::Leaf { key: k, value, .. } => {
                    return (k == key).then_some(value.as_slice());
                }
                Node::Branch(b) => {
                    node = if bit(key, b.split) { &b.right } else { &b.left };
                }
            }
        }
    }

    /// Inserts or replaces `key`. An empty value deletes the key.
    pub fn put(&mut self, key: Key, value: Vec<u8>) -> Option<Vec<u8>> {
        if value.is_empty() {
            return self.delete(&key);
        }
        let (top, old) = match self.top.take() {
            None => (Node::leaf(key, value), None),
            Some(n) => n.insert(key, value),
        };
        if old.is_none() {
            self.len += 1;
        }
        self.top = Some(top);
        self.refresh_root();
        old
    }

    pub fn delete(&mut self, key: &Key) -> Option<Vec<u8>> {
        let top = self.top.take()?;
        let (top, removed) = top.remove(key);
        self.top = top;
        if removed.is_some() {
            self.len -= 1;
            self.refresh_root();
        }
        removed
    }

    fn refresh_root(&mut self) {
        self.root = match &self.top {
            None => empty_digest(DEPTH),
            Some(n) => n.lifted(DEPTH),
        };
    }

    pub fn prove(&self, key: &Key) -> Result<InclusionProof, TrieError> {
        let mut node = self.top.as_ref().ok_or(TrieError::KeyAbsent)?;
        let mut bitmap = [0u8; 32];
        let mut siblings = Vec::new();
        loop {
            match node {
                Node::Leaf { key: k, value, .. } => {
                    if k != key {
                        return Err(TrieError::KeyAbsent);
                    }
                    return Ok(InclusionProof {
                        key: *key,
                        value: value.clone(),
                        bitmap,
                        siblings,
                    });
                }
                Node::Branch(b) => {
                    if matches!(first_diff(&b.key, key), Some(j) if j < b.split) {
                        return Err(TrieError::KeyAbsent);
                    }
                    set_bit(&mut bitmap, b.split);
                    if bit(key, b.split) {
                        siblings.push(b.left_up);
                        node = &b.right;
                    } else {
                        siblings.push(b.right_up);
                        node = &b.left;
                    }
                }
            }
        }
    }

    /// Entries in ascending key order.
    pub fn entries(&self) -> Vec<(&Key, &[u8])> {
        let mut out = Vec::with_capacity(self.len);
        if let Some(n) = &self.top {
            n.collect(&mut out);
        }
        out
    }
}

/// Sibling path authenticating one (key, value) pair under a root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InclusionProof {
    pub key: Key,
    pub value: Vec<u8>,
    /// Bit `i` set iff the sibling hanging off the branch at key bit `i` is non-default.
    pub bitmap: [u8; 32],
    /// Non-default siblings in root-to-leaf order.
    pub siblings: Vec<Digest>,
}

impl InclusionProof {
    /// Root implied by this proof, or `None` if the proof is malformed.
    pub fn computed_root(&self) -> Option<Digest> {
        let popcount: u32 = self.bitmap.iter().map(|b| b.count_ones()).sum();
        if popcount as usize != self.siblings.len() || self.value.is_empty() {
            return None;
        }
        let mut cur = leaf_digest(&self.key, &self.value);
        let mut next = self.siblings.len();
        for h in 0..DEPTH {
            let i = DEPTH - 1 - h;
            let default = empty_digest(h);
            let sib = if (self.bitmap[i / 8] >> (7 - i % 8)) & 1 == 1 {
                next -= 1;
                let s = self.siblings[next];
                // A flagged sibling must actually differ from the default.
                if s == default {
                    return None;
                }
                s
            } else {
                default
            };
            cur = if bit(&self.key, i) {
                node_digest(&sib, &cur)
            } else {
                node_digest(&cur, &sib)
            };
        }
        Some(cur)
    }

    pub fn encoded_len(&self) -> usize {
        32 + 4 + self.value.len() + 32 + 32 * self.siblings.len()
    }

    /// `key ‖ len(value) as u32 BE ‖ value ‖ bitmap ‖ siblings`.
    pub fn encode_into(&self, w: &mut Writer) {
        w.raw(&self.key).var32(&self.value).raw(&self.bitmap);
        for s in &self.siblings {
            w.raw(s.as_bytes());
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_into(&mut w);
        w.finish()
    }

    /// Reads one proof; the sibling count is implied by the bitmap.
    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let key = r.array::<32>()?;
        let value = r.var32()?.to_vec();
        let bitmap = r.array::<32>()?;
        let count: u32 = bitmap.iter().map(|b| b.count_ones()).sum();
        let mut siblings = Vec::with_capacity(count as usize);
        for _ in 0..count {
            siblings.push(Digest(r.array::<32>()?));
        }
        Ok(Self {
            key,
            value,
            bitmap,
            siblings,
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let p = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(p)
    }
}

/// True iff `proof` rebuilds exactly `root`. Malformed proofs yield false.
pub fn verify(root: &Digest, proof: &InclusionProof) -> bool {
    proof.computed_root().as_ref() == Some(root)
}
