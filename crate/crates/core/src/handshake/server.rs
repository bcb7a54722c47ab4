//! Handshake responder and its TCP listener.

use std::io::{self, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::{self, JoinHandle};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::messages::{key_exchange_params, signed_message, ClientHello, Message, ServerHello, ServerKeyExchange};
use crate::crypto::KeyPair;

/// What a server sends back for one client hello.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerFlight {
    pub server_hello: ServerHello,
    pub certificate: Option<Vec<u8>>,
    pub key_exchange: ServerKeyExchange,
}

impl ServerFlight {
    pub fn messages(&self) -> Vec<Message> {
        let mut m = vec![Message::ServerHello(self.server_hello)];
        if let Some(c) = &self.certificate {
            m.push(Message::Certificate(c.clone()));
        }
        m.push(Message::ServerKeyExchange(self.key_exchange.clone()));
        m.push(Message::ServerHelloDone);
        m
    }

    pub fn encode(&self) -> Vec<u8> {
        self.messages().iter().flat_map(Message::encode).collect()
    }

    /// Expects `SH ‖ [certificate] ‖ SKE ‖ SHD`, in that order.
    pub fn from_messages(msgs: Vec<Message>) -> Option<Self> {
        let mut it = msgs.into_iter();
        let Some(Message::ServerHello(server_hello)) = it.next() else {
            return None;
        };
        let (certificate, key_exchange) = match it.next()? {
            Message::Certificate(c) => match it.next()? {
                Message::ServerKeyExchange(ske) => (Some(c), ske),
                _ => return None,
            },
            Message::ServerKeyExchange(ske) => (None, ske),
            _ => return None,
        };
        match (it.next(), it.next()) {
            (Some(Message::ServerHelloDone), None) => Some(Self {
                server_hello,
                certificate,
                key_exchange,
            }),
            _ => None,
        }
    }
}

/// Builds the server's response. The ephemeral value is random bytes since
/// no session key is ever derived.
pub fn server_respond<R: RngCore>(
    ch: &ClientHello,
    identity: &KeyPair,
    stapled: Option<&[u8]>,
    now: u64,
    rng: &mut R,
) -> ServerFlight {
    let mut random = [0u8; 32];
    random[..4].copy_from_slice(&(now as u32).to_be_bytes());
    rng.fill_bytes(&mut random[4..]);
    let mut ephemeral = [0u8; 32];
    rng.fill_bytes(&mut ephemeral);
    let params = key_exchange_params(&ephemeral);
    let signature = identity.sign(&signed_message(&ch.random, &random, &params));
    ServerFlight {
        server_hello: ServerHello { random },
        certificate: stapled.map(<[u8]>::to_vec),
        key_exchange: ServerKeyExchange { params, signature },
    }
}

#[derive(Debug)]
pub enum Clock {
    Wall,
    /// Simulated seconds, set by the owner.
    Manual(AtomicU64),
}

impl Clock {
    pub fn manual(now: u64) -> Self {
        Clock::Manual(AtomicU64::new(now))
    }

    pub fn now(&self) -> u64 {
        match self {
            Clock::Wall => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            Clock::Manual(t) => t.load(Ordering::Relaxed),
        }
    }
}

/// A domain's handshake endpoint. Shared between connections; the stapled
/// certificate can be swapped at any time.
pub struct HandshakeServer {
    identity: KeyPair,
    staple: RwLock<Option<Arc<Vec<u8>>>>,
    clock: Clock,
    rng: Mutex<ChaCha20Rng>,
}

impl HandshakeServer {
    pub fn new(identity: KeyPair, clock: Clock, rng_seed: u64) -> Self {
        Self {
            identity,
            staple: RwLock::new(None),
            clock,
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(rng_seed)),
        }
    }

    pub fn identity(&self) -> &KeyPair {
        &self.identity
    }

    pub fn set_staple(&self, cert: Option<Vec<u8>>) {
        *self.staple.write().expect("staple lock") = cert.map(Arc::new);
    }

    pub fn staple(&self) -> Option<Arc<Vec<u8>>> {
        self.staple.read().expect("staple lock").clone()
    }

    /// Sets the simulated time; no effect on a wall-clock server.
    pub fn set_time(&self, now: u64) {
        if let Clock::Manual(t) = &self.clock {
            t.store(now, Ordering::Relaxed);
        }
    }

    pub fn respond(&self, ch: &ClientHello) -> ServerFlight {
        let staple = self.staple();
        let mut rng = self.rng.lock().expect("server rng");
        server_respond(
            ch,
            &self.identity,
            staple.as_deref().map(Vec::as_slice),
            self.clock.now(),
            &mut *rng,
        )
    }

    /// Wire-level handler: one client hello frame in, the response frames out.
    pub fn respond_bytes(&self, request: &[u8]) -> io::Result<Vec<u8>> {
        match Message::decode_frames(request).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?[..] {
            [Message::ClientHello(ch)] => Ok(self.respond(&ch).encode()),
            _ => Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "expected a single client hello",
            )),
        }
    }

    pub fn serve_connection(&self, stream: TcpStream) -> io::Result<()> {
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(Duration::from_secs(10)))?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let Message::ClientHello(ch) = Message::read_from(&mut reader)? else {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "expected a client hello"));
        };
        let mut w = BufWriter::new(stream);
        w.write_all(&self.respond(&ch).encode())?;
        w.flush()
    }
}

/// A running TCP listener. Dropping it stops accepting.
pub struct TcpServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl TcpServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        // Wake the blocking accept.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for TcpServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Serves `server` on `addr`, one thread per connection.
pub fn serve_tcp(server: Arc<HandshakeServer>, addr: impl ToSocketAddrs) -> io::Result<TcpServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let thread = thread::Builder::new()
        .name(format!("handshake-{local}"))
        .spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let server = server.clone();
                thread::spawn(move || {
                    if let Err(e) = server.serve_connection(stream) {
                        log::debug!("handshake connection failed: {e}");
                    }
                });
            }
        })?;
    Ok(TcpServerHandle {
        addr: local,
        stop,
        thread: Some(thread),
    })
}
