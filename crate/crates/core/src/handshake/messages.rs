//! Wire messages. Every message is framed as
//! `length u32 BE ‖ type u8 ‖ body`, where the length covers type and body.

use std::io::{self, Read, Write};

use crate::codec::{DecodeError, Reader, Writer};

pub const TYPE_CLIENT_HELLO: u8 = 0x01;
pub const TYPE_SERVER_HELLO: u8 = 0x02;
pub const TYPE_CERTIFICATE: u8 = 0x03;
pub const TYPE_SERVER_KEY_EXCHANGE: u8 = 0x04;
pub const TYPE_SERVER_HELLO_DONE: u8 = 0x05;

/// Named group id carried in key exchange parameters (x25519).
pub const GROUP_ID: u16 = 0x001d;

/// Largest frame either side accepts.
pub const MAX_FRAME: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClientHello {
    pub random: [u8; 32],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ServerHello {
    /// `timestamp u32 BE ‖ 28 random bytes`.
    pub random: [u8; 32],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerKeyExchange {
    /// `group u16 ‖ ephemeral public value (u16 len)`.
    pub params: Vec<u8>,
    /// Signature over `cliRnd ‖ srvRnd ‖ params`.
    pub signature: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    ClientHello(ClientHello),
    ServerHello(ServerHello),
    /// Stapled SmartCert certificate bytes.
    Certificate(Vec<u8>),
    ServerKeyExchange(ServerKeyExchange),
    ServerHelloDone,
}

pub fn key_exchange_params(public_value: &[u8]) -> Vec<u8> {
    let mut w = Writer::new();
    w.u16(GROUP_ID).var16(public_value);
    w.finish()
}

/// Message signed in the key exchange.
pub fn signed_message(cli_rnd: &[u8; 32], srv_rnd: &[u8; 32], params: &[u8]) -> Vec<u8> {
    let mut m = Vec::with_capacity(64 + params.len());
    m.extend_from_slice(cli_rnd);
    m.extend_from_slice(srv_rnd);
    m.extend_from_slice(params);
    m
}

impl Message {
    pub fn type_byte(&self) -> u8 {
        match self {
            Message::ClientHello(_) => TYPE_CLIENT_HELLO,
            Message::ServerHello(_) => TYPE_SERVER_HELLO,
            Message::Certificate(_) => TYPE_CERTIFICATE,
            Message::ServerKeyExchange(_) => TYPE_SERVER_KEY_EXCHANGE,
            Message::ServerHelloDone => TYPE_SERVER_HELLO_DONE,
        }
    }

    fn body(&self) -> Vec<u8> {
        match self {
            Message::ClientHello(ch) => ch.random.to_vec(),
            Message::ServerHello(sh) => sh.random.to_vec(),
            Message::Certificate(c) => c.clone(),
            Message::ServerKeyExchange(ske) => {
                let mut w = Writer::new();
                w.var16(&ske.params).var16(&ske.signature);
                w.finish()
            }
            Message::ServerHelloDone => Vec::new(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let body = self.body();
        let mut w = Writer::new();
        w.u32(body.len() as u32 + 1).u8(self.type_byte()).raw(&body);
        w.finish()
    }

    /// Decodes `type ‖ body` (the frame without its length prefix).
    pub fn decode_payload(payload: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(payload);
        let msg = match r.u8()? {
            TYPE_CLIENT_HELLO => Message::ClientHello(ClientHello { random: r.array()? }),
            TYPE_SERVER_HELLO => Message::ServerHello(ServerHello { random: r.array()? }),
            TYPE_CERTIFICATE => Message::Certificate(r.take(r.remaining())?.to_vec()),
            TYPE_SERVER_KEY_EXCHANGE => {
                let params = r.var16()?.to_vec();
                let signature = r.var16()?.to_vec();
                Message::ServerKeyExchange(ServerKeyExchange { params, signature })
            }
            TYPE_SERVER_HELLO_DONE => Message::ServerHelloDone,
            _ => return Err(DecodeError::Invalid("message type")),
        };
        r.finish()?;
        Ok(msg)
    }

    /// Splits a byte string holding whole frames.
    pub fn decode_frames(mut bytes: &[u8]) -> Result<Vec<Self>, DecodeError> {
        let mut out = Vec::new();
        while !bytes.is_empty() {
            let mut r = Reader::new(bytes);
            let payload = r.var32()?;
            if payload.len() > MAX_FRAME {
                return Err(DecodeError::Invalid("frame too large"));
            }
            out.push(Self::decode_payload(payload)?);
            bytes = &bytes[4 + payload.len()..];
        }
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.encode())
    }

    pub fn read_from<R: Read>(r: &mut R) -> io::Result<Self> {
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let len = u32::from_be_bytes(len) as usize;
        if len == 0 || len > MAX_FRAME {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "bad frame length"));
        }
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload)?;
        Self::decode_payload(&payload).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}
