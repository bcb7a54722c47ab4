//! What a contract handler sees while a transaction executes.

use std::cell::Cell;
use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::types::{Address, BlockHeader, ChainConfig, Event, Revert};
use crate::hash::{hash, hash_parts, Digest};
use crate::trie::{Key, Trie};

/// Storage key of a named slot.
pub fn slot_key(label: &str) -> Key {
    hash(label.as_bytes()).0
}

/// `H(template id ‖ version as u32 BE)`.
pub fn code_hash(template_id: &str, version: u32) -> Digest {
    hash_parts(&[template_id.as_bytes(), &version.to_be_bytes()])
}

/// Read access to a contract's named storage slots.
pub trait SlotSource {
    fn slot(&self, label: &str) -> Option<Vec<u8>>;
}

impl SlotSource for Trie {
    fn slot(&self, label: &str) -> Option<Vec<u8>> {
        self.get(&slot_key(label)).map(<[u8]>::to_vec)
    }
}

impl SlotSource for HashMap<String, Vec<u8>> {
    fn slot(&self, label: &str) -> Option<Vec<u8>> {
        self.get(label).cloned()
    }
}

impl SlotSource for BTreeMap<String, Vec<u8>> {
    fn slot(&self, label: &str) -> Option<Vec<u8>> {
        self.get(label).cloned()
    }
}

/// Native contract code registered under a template code hash.
pub trait Contract: Send + Sync {
    fn template_id(&self) -> &'static str;

    fn version(&self) -> u32;

    fn code_hash(&self) -> Digest {
        code_hash(self.template_id(), self.version())
    }

    /// Runs once in the CREATE transaction.
    fn init(&self, ctx: &mut ExecContext<'_>, args: &[u8]) -> Result<(), Revert>;

    fn call(&self, ctx: &mut ExecContext<'_>, method: &str, args: &[u8]) -> Result<(), Revert>;
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("block {requested} back is outside the readable window")]
pub struct OutOfWindow {
    pub requested: u64,
}

/// Sealed-block view available during execution of the next block.
#[derive(Clone, Copy)]
pub struct BlockContext<'a> {
    /// Timestamp of the block being mined.
    pub now: u64,
    pub number: u64,
    pub config: &'a ChainConfig,
    pub(crate) headers: &'a [BlockHeader],
    pub(crate) hashes: &'a [Digest],
}

impl<'a> BlockContext<'a> {
    fn index_back(&self, i: u64) -> Result<usize, OutOfWindow> {
        let sealed = self.headers.len() as u64;
        if i == 0 || i > self.config.hash_window || i > sealed {
            return Err(OutOfWindow { requested: i });
        }
        Ok((sealed - i) as usize)
    }

    /// Hash of the `i`-th most recent sealed block (`i = 1` is the parent).
    pub fn last_block_hash(&self, i: u64) -> Result<Digest, OutOfWindow> {
        Ok(self.hashes[self.index_back(i)?])
    }

    pub fn last_block_time(&self, i: u64) -> Result<u64, OutOfWindow> {
        Ok(self.headers[self.index_back(i)?].timestamp)
    }
}

/// Execution state for one transaction. Writes are buffered and only
/// committed by the engine when the handler returns `Ok`.
pub struct ExecContext<'a> {
    pub sender: Address,
    pub this: Address,
    pub block: BlockContext<'a>,
    pub(crate) policy_contract: Address,
    base: &'a Trie,
    foreign: &'a HashMap<Address, Trie>,
    writes: BTreeMap<Key, Vec<u8>>,
    events: Vec<Event>,
    ops: Cell<u64>,
}

impl<'a> ExecContext<'a> {
    pub(crate) fn new(
        sender: Address,
        this: Address,
        block: BlockContext<'a>,
        policy_contract: Address,
        base: &'a Trie,
        foreign: &'a HashMap<Address, Trie>,
    ) -> Self {
        Self {
            sender,
            this,
            block,
            policy_contract,
            base,
            foreign,
            writes: BTreeMap::new(),
            events: Vec::new(),
            ops: Cell::new(0),
        }
    }

    pub fn now(&self) -> u64 {
        self.block.now
    }

    pub fn config(&self) -> &ChainConfig {
        self.block.config
    }

    pub fn policy_contract(&self) -> Address {
        self.policy_contract
    }

    pub fn count_op(&self) {
        self.ops.set(self.ops.get() + 1);
    }

    pub fn load(&self, label: &str) -> Option<Vec<u8>> {
        self.count_op();
        let key = slot_key(label);
        match self.writes.get(&key) {
            Some(v) if v.is_empty() => None,
            Some(v) => Some(v.clone()),
            None => self.base.get(&key).map(<[u8]>::to_vec),
        }
    }

    /// Buffers a write; an empty value clears the slot.
    pub fn store(&mut self, label: &str, value: Vec<u8>) {
        self.count_op();
        self.writes.insert(slot_key(label), value);
    }

    /// Reads another contract's committed storage.
    pub fn load_foreign(&self, addr: &Address, label: &str) -> Option<Vec<u8>> {
        self.count_op();
        self.foreign.get(addr)?.get(&slot_key(label)).map(<[u8]>::to_vec)
    }

    /// Slot view of another contract's committed storage.
    pub fn foreign(&self, addr: Address) -> ForeignSlots<'_, 'a> {
        ForeignSlots { ctx: self, addr }
    }

    pub fn emit(&mut self, name: &str, attrs: impl IntoIterator<Item = (&'static str, String)>) {
        self.events.push(Event {
            contract: self.this,
            name: name.to_owned(),
            attrs: attrs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
        });
    }

    pub(crate) fn into_effects(self) -> (BTreeMap<Key, Vec<u8>>, Vec<Event>, u64) {
        (self.writes, self.events, self.ops.get())
    }

    pub(crate) fn ops(&self) -> u64 {
        self.ops.get()
    }
}

impl SlotSource for ExecContext<'_> {
    fn slot(&self, label: &str) -> Option<Vec<u8>> {
        self.load(label)
    }
}

pub struct ForeignSlots<'c, 'a> {
    ctx: &'c ExecContext<'a>,
    addr: Address,
}

impl SlotSource for ForeignSlots<'_, '_> {
    fn slot(&self, label: &str) -> Option<Vec<u8>> {
        self.ctx.load_foreign(&self.addr, label)
    }
}
