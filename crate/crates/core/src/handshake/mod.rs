//! Minimal handshake head (hello, server hello, stapled certificate, signed
//! key exchange, hello done). Enough to extract validation proofs and to
//! deliver certificates; no session keys are derived.

mod messages;
mod server;

use std::io::{self, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

pub use messages::{
    key_exchange_params, signed_message, ClientHello, Message, ServerHello, ServerKeyExchange, GROUP_ID, MAX_FRAME,
    TYPE_CERTIFICATE, TYPE_CLIENT_HELLO, TYPE_SERVER_HELLO, TYPE_SERVER_HELLO_DONE, TYPE_SERVER_KEY_EXCHANGE,
};
pub use server::{serve_tcp, server_respond, Clock, HandshakeServer, ServerFlight, TcpServerHandle};

use crate::chain::Address;
use crate::client::{RejectReason, Validator, Verdict};
use crate::codec::{DecodeError, Reader, Writer};
use crate::contracts::{probe_random, update_args, CertSnapshot};
use crate::crypto::PublicKey;
use crate::hash::Digest;

#[derive(Debug, Error)]
pub enum HandshakeError {
    #[error("connect failed: {0}")]
    ConnectFailed(#[source] io::Error),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

/// Something a client hello can be sent to.
pub trait Endpoint: Send + Sync {
    fn exchange(&self, ch: &ClientHello) -> Result<ServerFlight, HandshakeError>;
}

fn flight_from_bytes(bytes: &[u8]) -> Result<ServerFlight, HandshakeError> {
    let msgs = Message::decode_frames(bytes).map_err(|e| HandshakeError::MalformedResponse(e.to_string()))?;
    ServerFlight::from_messages(msgs)
        .ok_or_else(|| HandshakeError::MalformedResponse("unexpected message order".into()))
}

/// Calls a server in the same process, still going through the wire encoding.
#[derive(Clone)]
pub struct InProcessEndpoint {
    server: Arc<HandshakeServer>,
}

impl InProcessEndpoint {
    pub fn new(server: Arc<HandshakeServer>) -> Self {
        Self { server }
    }
}

impl Endpoint for InProcessEndpoint {
    fn exchange(&self, ch: &ClientHello) -> Result<ServerFlight, HandshakeError> {
        let request = Message::ClientHello(*ch).encode();
        let response = self
            .server
            .respond_bytes(&request)
            .map_err(HandshakeError::ConnectFailed)?;
        flight_from_bytes(&response)
    }
}

#[derive(Clone, Debug)]
pub struct TcpEndpoint {
    pub addr: SocketAddr,
    pub timeout: Duration,
}

impl TcpEndpoint {
    pub fn new(addr: SocketAddr) -> Self {
        Self {
            addr,
            timeout: Duration::from_secs(5),
        }
    }
}

impl Endpoint for TcpEndpoint {
    fn exchange(&self, ch: &ClientHello) -> Result<ServerFlight, HandshakeError> {
        let mut stream = TcpStream::connect_timeout(&self.addr, self.timeout).map_err(HandshakeError::ConnectFailed)?;
        stream.set_nodelay(true).map_err(HandshakeError::ConnectFailed)?;
        stream
            .set_read_timeout(Some(self.timeout))
            .map_err(HandshakeError::ConnectFailed)?;
        stream
            .write_all(&Message::ClientHello(*ch).encode())
            .map_err(HandshakeError::ConnectFailed)?;
        let mut reader = BufReader::new(stream);
        let mut msgs = Vec::new();
        loop {
            let m = Message::read_from(&mut reader).map_err(|e| HandshakeError::MalformedResponse(e.to_string()))?;
            let done = m == Message::ServerHelloDone;
            msgs.push(m);
            if done || msgs.len() > 4 {
                break;
            }
        }
        ServerFlight::from_messages(msgs)
            .ok_or_else(|| HandshakeError::MalformedResponse("unexpected message order".into()))
    }
}

/// `(cliRnd, srvRnd, params, σ)` taken from one handshake.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationProof {
    pub cli_rnd: [u8; 32],
    pub srv_rnd: [u8; 32],
    pub params: Vec<u8>,
    pub signature: Vec<u8>,
}

impl ValidationProof {
    pub fn from_flight(ch: &ClientHello, flight: &ServerFlight) -> Self {
        Self {
            cli_rnd: ch.random,
            srv_rnd: flight.server_hello.random,
            params: flight.key_exchange.params.clone(),
            signature: flight.key_exchange.signature.clone(),
        }
    }

    pub fn signed_message(&self) -> Vec<u8> {
        signed_message(&self.cli_rnd, &self.srv_rnd, &self.params)
    }

    /// True if the signature verifies under any of `keys`.
    pub fn verifies_under<'k>(&self, keys: impl IntoIterator<Item = &'k PublicKey>) -> bool {
        let msg = self.signed_message();
        keys.into_iter().any(|k| k.verify(&msg, &self.signature))
    }

    /// Arguments for the contract's `update` method.
    pub fn update_args(&self) -> Vec<u8> {
        update_args(&self.cli_rnd, &self.srv_rnd, &self.params, &self.signature)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.cli_rnd)
            .raw(&self.srv_rnd)
            .var16(&self.params)
            .var16(&self.signature);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let p = Self {
            cli_rnd: r.array()?,
            srv_rnd: r.array()?,
            params: r.var16()?.to_vec(),
            signature: r.var16()?.to_vec(),
        };
        r.finish()?;
        Ok(p)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.encode())
    }

    pub fn from_hex(s: &str) -> Result<Self, DecodeError> {
        Self::decode(&hex::decode(s.trim()).map_err(|_| DecodeError::Invalid("hex"))?)
    }
}

/// A CA's probe: the hello carries the CA tag and the anchor block hash.
pub fn ca_probe(endpoint: &dyn Endpoint, ca: &Address, block_hash: &Digest) -> Result<ValidationProof, HandshakeError> {
    let ch = ClientHello {
        random: probe_random(ca, block_hash),
    };
    let flight = endpoint.exchange(&ch)?;
    Ok(ValidationProof::from_flight(&ch, &flight))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SessionOutcome {
    Accept(Box<CertSnapshot>),
    Reject(RejectReason),
}

impl SessionOutcome {
    pub fn code(&self) -> &'static str {
        match self {
            SessionOutcome::Accept(_) => "ACCEPT",
            SessionOutcome::Reject(r) => r.code(),
        }
    }
}

/// Client side: handshake, verify the stapled certificate, then check the
/// key exchange signature under the certified keys.
pub fn client_connect<R: rand::RngCore>(
    endpoint: &dyn Endpoint,
    name: &str,
    validator: &Validator<'_>,
    now: u64,
    rng: &mut R,
) -> Result<SessionOutcome, HandshakeError> {
    let mut ch = ClientHello { random: [0; 32] };
    ch.random[..4].copy_from_slice(&(now as u32).to_be_bytes());
    rng.fill_bytes(&mut ch.random[4..]);
    let flight = endpoint.exchange(&ch)?;
    let Some(cert) = &flight.certificate else {
        return Ok(SessionOutcome::Reject(RejectReason::NoCert));
    };
    let st = match validator.verify_bytes(name, cert, now) {
        Verdict::Ok(st) => st,
        Verdict::Fail(r) => return Ok(SessionOutcome::Reject(r)),
    };
    if !ValidationProof::from_flight(&ch, &flight).verifies_under(&st.pks) {
        return Ok(SessionOutcome::Reject(RejectReason::BadSkeSig));
    }
    Ok(SessionOutcome::Accept(st))
}
