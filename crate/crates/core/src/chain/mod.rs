//! Deterministic simulated blockchain: accounts, transactions, block
//! production, native contract dispatch and light-client proofs.

mod engine;
mod exec;
pub mod log;
mod types;

pub use engine::{Chain, ChainError, Genesis, StorageProof};
pub use exec::{code_hash, slot_key, BlockContext, Contract, ExecContext, ForeignSlots, OutOfWindow, SlotSource};
pub use types::{
    Account, Address, BlockHeader, ChainConfig, ConfigError, Event, Receipt, Revert, RevokeMode, Transaction, TxId,
    TxStatus, TxTarget, ACCOUNT_LEN, HEADER_LEN,
};
