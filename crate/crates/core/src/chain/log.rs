//! Append-only chain log: a preamble with the chain configuration and
//! genesis, followed by one record per sealed block.
//!
//! ```text
//! "SCCHAIN1"
//! block_interval u64 ‖ hash_window u64 ‖ epoch u64 ‖ max_stale u64 ‖ revoke_mode u8
//! genesis_timestamp u64 ‖ trusted_count u16 ‖ trusted addresses (20B each)
//! repeated: record_len u32 ‖ header (112B) ‖ tx_count u32 ‖ (tx_len u32 ‖ tx)*
//! ```
//!
//! Loading replays every transaction and checks that each resulting header
//! matches the recorded one bit for bit.

use std::io::{self, Write};

use super::engine::{Chain, ChainError, Genesis};
use super::types::{Address, BlockHeader, ChainConfig, RevokeMode, Transaction};
use crate::codec::{DecodeError, Reader, Writer};

pub const LOG_MAGIC: &[u8; 8] = b"SCCHAIN1";

fn encode_preamble(config: &ChainConfig, genesis: &Genesis) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(LOG_MAGIC)
        .u64(config.block_interval)
        .u64(config.hash_window)
        .u64(config.epoch)
        .u64(config.max_stale)
        .u8(match config.revoke_mode {
            RevokeMode::Literal => 0,
            RevokeMode::Quorum => 1,
        })
        .u64(genesis.timestamp)
        .u16(genesis.trusted_cas.len() as u16);
    for a in &genesis.trusted_cas {
        w.raw(&a.0);
    }
    w.finish()
}

fn decode_preamble(r: &mut Reader<'_>) -> Result<(ChainConfig, Genesis), DecodeError> {
    if r.take(8)? != LOG_MAGIC {
        return Err(DecodeError::Invalid("chain log magic"));
    }
    let config = ChainConfig {
        block_interval: r.u64()?,
        hash_window: r.u64()?,
        epoch: r.u64()?,
        max_stale: r.u64()?,
        revoke_mode: match r.u8()? {
            0 => RevokeMode::Literal,
            1 => RevokeMode::Quorum,
            _ => return Err(DecodeError::Invalid("revoke mode")),
        },
    };
    let timestamp = r.u64()?;
    let n = r.u16()?;
    let trusted_cas = (0..n).map(|_| r.array().map(Address)).collect::<Result<_, _>>()?;
    Ok((config, Genesis { timestamp, trusted_cas }))
}

/// One block record, including its leading length.
pub fn encode_block_record(header: &BlockHeader, txs: &[Transaction]) -> Vec<u8> {
    let mut body = Writer::new();
    body.raw(&header.encode()).u32(txs.len() as u32);
    for tx in txs {
        body.var32(&tx.encode());
    }
    let mut w = Writer::new();
    w.var32(&body.finish());
    w.finish()
}

fn decode_block_record(bytes: &[u8]) -> Result<(BlockHeader, Vec<Transaction>), DecodeError> {
    let mut r = Reader::new(bytes);
    let header = BlockHeader::decode_from(&mut r)?;
    let n = r.u32()?;
    let txs = (0..n)
        .map(|_| Transaction::decode(r.var32()?))
        .collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    Ok((header, txs))
}

/// The whole log for `chain`, genesis preamble first.
pub fn encode_log(chain: &Chain) -> Vec<u8> {
    let mut out = encode_preamble(chain.config(), chain.genesis());
    for n in 1..=chain.height() {
        let header = chain.header_at(n).expect("within height");
        let txs = chain.block_transactions(n).expect("within height");
        out.extend(encode_block_record(header, txs));
    }
    out
}

pub fn write_log<W: Write>(chain: &Chain, mut w: W) -> io::Result<()> {
    w.write_all(&encode_log(chain))
}

/// Rebuilds a chain by replaying the log.
pub fn replay_log(bytes: &[u8]) -> Result<Chain, ChainError> {
    let mut r = Reader::new(bytes);
    let (config, genesis) = decode_preamble(&mut r)?;
    let mut chain = Chain::new(config, genesis)?;
    while r.remaining() > 0 {
        let (recorded, txs) = decode_block_record(r.var32()?)?;
        for tx in txs {
            chain.submit_tx(tx)?;
        }
        let mined = chain.mine_block(recorded.timestamp)?;
        if mined != recorded {
            return Err(ChainError::ReplayMismatch(recorded.number));
        }
    }
    Ok(chain)
}

/// Header-only view of a log, as a light client would consume it.
#[derive(Clone, Debug)]
pub struct LogHeaders {
    pub config: ChainConfig,
    pub genesis: BlockHeader,
    /// Headers after genesis, in log order. Not checked for linkage here.
    pub headers: Vec<BlockHeader>,
}

pub fn read_log_headers(bytes: &[u8]) -> Result<LogHeaders, ChainError> {
    let mut r = Reader::new(bytes);
    let (config, genesis) = decode_preamble(&mut r)?;
    let genesis_header = *Chain::new(config.clone(), genesis)?.head();
    let mut headers = Vec::new();
    while r.remaining() > 0 {
        let record = r.var32()?;
        headers.push(BlockHeader::decode_from(&mut Reader::new(record))?);
    }
    Ok(LogHeaders {
        config,
        genesis: genesis_header,
        headers,
    })
}
