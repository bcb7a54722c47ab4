//! SmartCert: certificates whose validation state is managed by smart
//! contracts on a deterministic simulated chain.

pub mod bench;
pub mod ca;
pub mod chain;
pub mod client;
pub mod codec;
pub mod contracts;
pub mod crypto;
pub mod domain;
pub mod handshake;
pub mod hash;
pub mod scenario;
pub mod trie;
