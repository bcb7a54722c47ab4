use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::exec::{slot_key, BlockContext, Contract, ExecContext, SlotSource};
use super::types::{
    Account, Address, BlockHeader, ChainConfig, ConfigError, Receipt, Revert, Transaction, TxId, TxStatus, TxTarget,
};
use crate::codec::DecodeError;
use crate::contracts::{self, Registry};
use crate::hash::Digest;
use crate::trie::{InclusionProof, Trie, TrieError};

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("transaction signature does not verify")]
    BadSignature,
    #[error("block timestamp {requested} not after head timestamp {head}")]
    NonMonotonicTimestamp { head: u64, requested: u64 },
    #[error("unknown block {0}")]
    UnknownBlock(u64),
    #[error("unknown account {0}")]
    UnknownAccount(Address),
    #[error("unknown storage slot {0}")]
    UnknownSlot(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("malformed chain log: {0}")]
    Decode(#[from] DecodeError),
    #[error("replayed block {0} does not match the recorded header")]
    ReplayMismatch(u64),
}

/// Initial chain state: the trusted CA set installed in the policy contract.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Genesis {
    pub timestamp: u64,
    pub trusted_cas: Vec<Address>,
}

/// Account and storage proofs for one contract against the head state root.
#[derive(Clone, Debug)]
pub struct StorageProof {
    pub account: Account,
    pub account_proof: InclusionProof,
    pub slots: Vec<(String, InclusionProof)>,
}

/// Single-writer deterministic chain. Every sealed block is final.
pub struct Chain {
    config: ChainConfig,
    genesis: Genesis,
    registry: Arc<Registry>,
    policy: Address,
    headers: Vec<BlockHeader>,
    hashes: Vec<Digest>,
    bodies: Vec<Vec<Transaction>>,
    receipts: Vec<Vec<Receipt>>,
    receipt_index: HashMap<TxId, (u64, u32)>,
    state: Trie,
    accounts: BTreeMap<Address, Account>,
    storage: HashMap<Address, Trie>,
    pending: Vec<Transaction>,
}

impl Chain {
    pub fn new(config: ChainConfig, genesis: Genesis) -> Result<Self, ChainError> {
        Self::with_registry(config, genesis, Registry::shared())
    }

    pub fn with_registry(config: ChainConfig, genesis: Genesis, registry: Arc<Registry>) -> Result<Self, ChainError> {
        config.validate()?;
        let policy = contracts::policy_contract_address();
        let policy_storage = contracts::policy::genesis_storage(&genesis.trusted_cas);
        let policy_account = Account {
            nonce: 0,
            code_hash: contracts::policy_code_hash(),
            storage_root: policy_storage.root(),
        };
        let mut state = Trie::new();
        state.put(policy.state_key(), policy_account.encode().to_vec());
        let header = BlockHeader {
            parent_hash: Digest::ZERO,
            number: 0,
            timestamp: genesis.timestamp,
            state_root: state.root(),
            tx_root: Trie::new().root(),
        };
        Ok(Self {
            config,
            genesis,
            registry,
            policy,
            hashes: vec![header.hash()],
            headers: vec![header],
            bodies: vec![Vec::new()],
            receipts: vec![Vec::new()],
            receipt_index: HashMap::new(),
            state,
            accounts: BTreeMap::from([(policy, policy_account)]),
            storage: HashMap::from([(policy, policy_storage)]),
            pending: Vec::new(),
        })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn genesis(&self) -> &Genesis {
        &self.genesis
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn policy_contract(&self) -> Address {
        self.policy
    }

    pub fn head(&self) -> &BlockHeader {
        self.headers.last().expect("genesis always present")
    }

    pub fn head_hash(&self) -> Digest {
        *self.hashes.last().expect("genesis always present")
    }

    pub fn height(&self) -> u64 {
        self.head().number
    }

    pub fn header_at(&self, n: u64) -> Result<&BlockHeader, ChainError> {
        self.headers.get(n as usize).ok_or(ChainError::UnknownBlock(n))
    }

    pub fn headers(&self) -> &[BlockHeader] {
        &self.headers
    }

    /// All headers with `timestamp >= from_time`, oldest first.
    pub fn head_range(&self, from_time: u64) -> Vec<BlockHeader> {
        let start = self.headers.partition_point(|h| h.timestamp < from_time);
        self.headers[start..].to_vec()
    }

    pub fn block_transactions(&self, n: u64) -> Result<&[Transaction], ChainError> {
        self.bodies
            .get(n as usize)
            .map(Vec::as_slice)
            .ok_or(ChainError::UnknownBlock(n))
    }

    pub fn block_receipts(&self, n: u64) -> Result<&[Receipt], ChainError> {
        self.receipts
            .get(n as usize)
            .map(Vec::as_slice)
            .ok_or(ChainError::UnknownBlock(n))
    }

    pub fn receipts(&self) -> impl Iterator<Item = &Receipt> {
        self.receipts.iter().flatten()
    }

    pub fn receipt(&self, id: &TxId) -> Option<&Receipt> {
        let (b, i) = self.receipt_index.get(id)?;
        self.receipts.get(*b as usize)?.get(*i as usize)
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.pending
    }

    pub fn account(&self, addr: &Address) -> Option<&Account> {
        self.accounts.get(addr)
    }

    pub fn storage(&self, addr: &Address) -> Option<&Trie> {
        self.storage.get(addr)
    }

    pub fn state_root(&self) -> Digest {
        self.state.root()
    }

    /// Nonce the next transaction from `addr` should carry, counting queued ones.
    pub fn next_nonce(&self, addr: &Address) -> u64 {
        let base = self.accounts.get(addr).map_or(0, |a| a.nonce);
        base + self.pending.iter().filter(|t| &t.sender_address() == addr).count() as u64
    }

    /// Queues a transaction for the next block. Nonces are checked at mine time.
    pub fn submit_tx(&mut self, tx: Transaction) -> Result<TxId, ChainError> {
        if !tx.signature_valid() {
            return Err(ChainError::BadSignature);
        }
        let id = tx.id();
        self.pending.push(tx);
        Ok(id)
    }

    /// Executes every queued transaction and seals a block at `timestamp`.
    pub fn mine_block(&mut self, timestamp: u64) -> Result<BlockHeader, ChainError> {
        let head_ts = self.head().timestamp;
        if timestamp <= head_ts {
            return Err(ChainError::NonMonotonicTimestamp {
                head: head_ts,
                requested: timestamp,
            });
        }
        let number = self.height() + 1;
        let txs = nonce_ordered(std::mem::take(&mut self.pending));
        let mut receipts = Vec::with_capacity(txs.len());
        let mut tx_trie = Trie::new();
        for (i, tx) in txs.iter().enumerate() {
            let receipt = self.execute(tx, number, timestamp, i as u32);
            self.receipt_index.insert(receipt.tx_id, (number, i as u32));
            receipts.push(receipt);
            tx_trie.put(crate::hash::hash(&(i as u64).to_be_bytes()).0, tx.encode());
        }
        let header = BlockHeader {
            parent_hash: self.head_hash(),
            number,
            timestamp,
            state_root: self.state.root(),
            tx_root: tx_trie.root(),
        };
        self.hashes.push(header.hash());
        self.headers.push(header);
        self.bodies.push(txs);
        self.receipts.push(receipts);
        Ok(header)
    }

    fn execute(&mut self, tx: &Transaction, number: u64, now: u64, index: u32) -> Receipt {
        let sender = tx.sender_address();
        let mut receipt = Receipt {
            tx_id: tx.id(),
            block: number,
            index,
            sender,
            method: tx.method.clone(),
            status: TxStatus::Success,
            created: None,
            events: Vec::new(),
            op_count: 0,
        };
        let sender_account = self.accounts.get(&sender).copied().unwrap_or_else(Account::user);
        if tx.nonce != sender_account.nonce {
            receipt.status = TxStatus::RejectedNonce;
            return receipt;
        }

        let (target, code): (Address, Arc<dyn Contract>) = match &tx.target {
            TxTarget::Create { template } => match self.registry.by_template(template) {
                Some(code) => (Address::contract(&sender, tx.nonce), code),
                None => {
                    receipt.status = TxStatus::Reverted(Revert::UnknownTemplate);
                    return receipt;
                }
            },
            TxTarget::Call(addr) => {
                let code = self
                    .accounts
                    .get(addr)
                    .filter(|a| a.is_contract())
                    .and_then(|a| self.registry.by_code_hash(&a.code_hash));
                match code {
                    Some(code) => (*addr, code),
                    None => {
                        receipt.status = TxStatus::Reverted(Revert::NoContract);
                        return receipt;
                    }
                }
            }
        };
        let creating = matches!(tx.target, TxTarget::Create { .. });
        if creating && self.accounts.contains_key(&target) {
            receipt.status = TxStatus::Reverted(Revert::NoContract);
            return receipt;
        }

        let empty = Trie::new();
        let block = BlockContext {
            now,
            number,
            config: &self.config,
            headers: &self.headers,
            hashes: &self.hashes,
        };
        let base = if creating {
            &empty
        } else {
            self.storage.get(&target).unwrap_or(&empty)
        };
        let mut ctx = ExecContext::new(sender, target, block, self.policy, base, &self.storage);
        let outcome = if creating {
            code.init(&mut ctx, &tx.args)
        } else {
            code.call(&mut ctx, &tx.method, &tx.args)
        };
        if let Err(revert) = outcome {
            receipt.op_count = ctx.ops();
            receipt.status = TxStatus::Reverted(revert);
            return receipt;
        }
        let (writes, events, ops) = ctx.into_effects();
        receipt.events = events;
        receipt.op_count = ops;

        let trie = self.storage.entry(target).or_default();
        for (k, v) in writes {
            trie.put(k, v);
        }
        let storage_root = trie.root();
        let account = if creating {
            receipt.created = Some(target);
            Account {
                nonce: 0,
                code_hash: code.code_hash(),
                storage_root,
            }
        } else {
            Account {
                storage_root,
                ..self.accounts[&target]
            }
        };
        self.put_account(target, account);
        self.put_account(
            sender,
            Account {
                nonce: sender_account.nonce + 1,
                ..sender_account
            },
        );
        receipt
    }

    fn put_account(&mut self, addr: Address, account: Account) {
        self.state.put(addr.state_key(), account.encode().to_vec());
        self.accounts.insert(addr, account);
    }

    /// Reads a named slot of a contract's current storage.
    pub fn read_slot(&self, addr: &Address, label: &str) -> Option<Vec<u8>> {
        self.storage.get(addr)?.slot(label)
    }

    /// Account proof under the head state root plus one proof per slot under
    /// the account's storage root.
    pub fn storage_proof(&self, addr: &Address, labels: &[String]) -> Result<StorageProof, ChainError> {
        let account = *self.accounts.get(addr).ok_or(ChainError::UnknownAccount(*addr))?;
        let account_proof = self
            .state
            .prove(&addr.state_key())
            .map_err(|TrieError::KeyAbsent| ChainError::UnknownAccount(*addr))?;
        let storage = self.storage.get(addr).ok_or(ChainError::UnknownAccount(*addr))?;
        let slots = labels
            .iter()
            .map(|l| {
                storage
                    .prove(&slot_key(l))
                    .map(|p| (l.clone(), p))
                    .map_err(|_| ChainError::UnknownSlot(l.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(StorageProof {
            account,
            account_proof,
            slots,
        })
    }
}

/// Keeps submission order, but each sender's transactions are re-sorted by
/// nonce within the positions that sender occupies.
fn nonce_ordered(txs: Vec<Transaction>) -> Vec<Transaction> {
    let mut positions: BTreeMap<Address, Vec<usize>> = BTreeMap::new();
    for (i, tx) in txs.iter().enumerate() {
        positions.entry(tx.sender_address()).or_default().push(i);
    }
    let mut slots: Vec<Option<Transaction>> = txs.into_iter().map(Some).collect();
    let mut out: Vec<Option<Transaction>> = vec![None; slots.len()];
    for idxs in positions.values() {
        let mut group: Vec<Transaction> = idxs
            .iter()
            .map(|&i| slots[i].take().expect("each index once"))
            .collect();
        group.sort_by_key(|t| t.nonce);
        for (&i, tx) in idxs.iter().zip(group) {
            out[i] = Some(tx);
        }
    }
    out.into_iter().map(|t| t.expect("all positions filled")).collect()
}
