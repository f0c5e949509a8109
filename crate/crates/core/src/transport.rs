//! Twin-server wire protocol: framed messages over either an in-process
//! channel pair (tests, benchmarks) or TCP (real deployments).
//!
//! Frame layout, all integers big-endian:
//!
//! ```text
//! magic 0x53 0x2B | version 0x01 | msg_type | session_id (8) | payload_len (4) | payload
//! ```
//!
//! Integer values inside payloads are length-prefixed minimal big-endian
//! magnitudes. Every endpoint counts bytes, frames, and ciphertexts both
//! ways; the ciphertext count is derived from the message type.

use crate::fastpai::PublicKey;
use num_bigint::BigUint;
use num_traits::Zero;
use sha2::{Digest, Sha256};
use std::collections::VecDeque;
use std::io::{BufReader, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use thiserror::Error;

pub const MAGIC: [u8; 2] = [0x53, 0x2B];
pub const WIRE_VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 16;
pub const MAX_PAYLOAD: u32 = 1 << 24;

/// Message type bytes. Unknown values still decode; the serve loop answers
/// them with an error frame.
pub mod msg {
    pub const SMUL_REQ: u8 = 0x01;
    pub const SMUL_RESP: u8 = 0x02;
    pub const SCMP_REQ: u8 = 0x03;
    pub const SCMP_RESP: u8 = 0x04;
    pub const ERROR: u8 = 0x0E;
    pub const HELLO: u8 = 0x0F;
}

/// Ciphertexts carried by a frame of the given type. Division and sign-bit
/// runs reuse the multiplication/comparison frames, so this table is total.
pub fn ciphertexts_in(msg_type: u8) -> u64 {
    match msg_type {
        msg::SMUL_REQ | msg::SCMP_REQ => 2,
        msg::SMUL_RESP | msg::SCMP_RESP => 1,
        _ => 0,
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("bad frame magic at byte {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported wire version {found:#04x} at byte {offset}")]
    BadVersion { offset: usize, found: u8 },
    #[error("frame truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("{extra} unexpected bytes after frame payload")]
    TrailingBytes { extra: usize },
    #[error("payload length {len} exceeds the {MAX_PAYLOAD}-byte limit")]
    Oversize { len: u64 },
    #[error("integer encoding has a leading zero byte at byte {offset}")]
    NonMinimal { offset: usize },
    #[error("channel closed")]
    Closed,
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("peer reported an error: {0}")]
    Remote(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: u8,
    pub session_id: u64,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: u8, session_id: u64, payload: Vec<u8>) -> Self {
        Frame {
            msg_type,
            session_id,
            payload,
        }
    }

    /// Error frame carrying a human-readable reason.
    pub fn error(session_id: u64, reason: &str) -> Self {
        Frame::new(msg::ERROR, session_id, reason.as_bytes().to_vec())
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }
}

pub fn encode_frame(f: &Frame) -> Result<Vec<u8>, TransportError> {
    if f.payload.len() as u64 > u64::from(MAX_PAYLOAD) {
        return Err(TransportError::Oversize {
            len: f.payload.len() as u64,
        });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + f.payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(WIRE_VERSION);
    out.push(f.msg_type);
    out.extend_from_slice(&f.session_id.to_be_bytes());
    out.extend_from_slice(&(f.payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&f.payload);
    Ok(out)
}

/// Parses a validated header, returning (msg_type, session_id, payload_len).
fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(u8, u64, u32), TransportError> {
    if h[0] != MAGIC[0] {
        return Err(TransportError::BadMagic { offset: 0 });
    }
    if h[1] != MAGIC[1] {
        return Err(TransportError::BadMagic { offset: 1 });
    }
    if h[2] != WIRE_VERSION {
        return Err(TransportError::BadVersion {
            offset: 2,
            found: h[2],
        });
    }
    let session_id = u64::from_be_bytes(h[4..12].try_into().unwrap());
    let payload_len = u32::from_be_bytes(h[12..16].try_into().unwrap());
    if payload_len > MAX_PAYLOAD {
        return Err(TransportError::Oversize {
            len: u64::from(payload_len),
        });
    }
    Ok((h[3], session_id, payload_len))
}

/// Decodes exactly one frame occupying the whole buffer.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, TransportError> {
    if bytes.len() < HEADER_LEN {
        return Err(TransportError::Truncated {
            offset: bytes.len(),
        });
    }
    let header: &[u8; HEADER_LEN] = bytes[..HEADER_LEN].try_into().unwrap();
    let (msg_type, session_id, payload_len) = parse_header(header)?;
    let total = HEADER_LEN + payload_len as usize;
    if bytes.len() < total {
        return Err(TransportError::Truncated {
            offset: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(TransportError::TrailingBytes {
            extra: bytes.len() - total,
        });
    }
    Ok(Frame {
        msg_type,
        session_id,
        payload: bytes[HEADER_LEN..].to_vec(),
    })
}

/// Appends a length-prefixed minimal big-endian magnitude. Zero encodes as
/// a bare zero length.
pub fn encode_nat(buf: &mut Vec<u8>, v: &BigUint) {
    if v.is_zero() {
        buf.extend_from_slice(&0u32.to_be_bytes());
        return;
    }
    let mag = v.to_bytes_be();
    buf.extend_from_slice(&(mag.len() as u32).to_be_bytes());
    buf.extend_from_slice(&mag);
}

/// Reads one length-prefixed magnitude starting at `*pos`, advancing it.
pub fn decode_nat(buf: &[u8], pos: &mut usize) -> Result<BigUint, TransportError> {
    let at = *pos;
    if buf.len() < at + 4 {
        return Err(TransportError::Truncated { offset: buf.len() });
    }
    let len = u32::from_be_bytes(buf[at..at + 4].try_into().unwrap()) as usize;
    let end = at + 4 + len;
    if buf.len() < end {
        return Err(TransportError::Truncated { offset: buf.len() });
    }
    if len > 0 && buf[at + 4] == 0 {
        return Err(TransportError::NonMinimal { offset: at + 4 });
    }
    let v = BigUint::from_bytes_be(&buf[at + 4..end]);
    *pos = end;
    Ok(v)
}

/// Bytes `encode_nat` will emit for this value.
pub fn nat_wire_len(v: &BigUint) -> usize {
    if v.is_zero() {
        4
    } else {
        4 + v.to_bytes_be().len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct ChannelStats {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub frames_sent: u64,
    pub frames_received: u64,
    pub ciphertexts_sent: u64,
    pub ciphertexts_received: u64,
}

#[derive(Default)]
struct StatCells {
    bytes_sent: AtomicU64,
    bytes_received: AtomicU64,
    frames_sent: AtomicU64,
    frames_received: AtomicU64,
    ciphertexts_sent: AtomicU64,
    ciphertexts_received: AtomicU64,
}

impl StatCells {
    fn on_send(&self, msg_type: u8, bytes: usize) {
        self.bytes_sent.fetch_add(bytes as u64, Ordering::Relaxed);
        self.frames_sent.fetch_add(1, Ordering::Relaxed);
        self.ciphertexts_sent
            .fetch_add(ciphertexts_in(msg_type), Ordering::Relaxed);
    }

    fn on_recv(&self, msg_type: u8, bytes: usize) {
        self.bytes_received.fetch_add(bytes as u64, Ordering::Relaxed);
        self.frames_received.fetch_add(1, Ordering::Relaxed);
        self.ciphertexts_received
            .fetch_add(ciphertexts_in(msg_type), Ordering::Relaxed);
    }

    fn snapshot(&self) -> ChannelStats {
        ChannelStats {
            bytes_sent: self.bytes_sent.load(Ordering::Relaxed),
            bytes_received: self.bytes_received.load(Ordering::Relaxed),
            frames_sent: self.frames_sent.load(Ordering::Relaxed),
            frames_received: self.frames_received.load(Ordering::Relaxed),
            ciphertexts_sent: self.ciphertexts_sent.load(Ordering::Relaxed),
            ciphertexts_received: self.ciphertexts_received.load(Ordering::Relaxed),
        }
    }
}

/// One endpoint of a twin-server link. Endpoints tolerate one concurrent
/// reader plus one concurrent writer.
pub trait Channel: Send + Sync {
    fn send(&self, f: &Frame) -> Result<(), TransportError>;
    fn recv(&self) -> Result<Frame, TransportError>;
    fn stats(&self) -> ChannelStats;
    fn close(&self);
}

struct Pipe {
    state: Mutex<PipeState>,
    ready: Condvar,
}

#[derive(Default)]
struct PipeState {
    frames: VecDeque<Vec<u8>>,
    closed: bool,
}

impl Pipe {
    fn new() -> Arc<Self> {
        Arc::new(Pipe {
            state: Mutex::new(PipeState::default()),
            ready: Condvar::new(),
        })
    }

    fn shut(&self) {
        self.state.lock().unwrap().closed = true;
        self.ready.notify_all();
    }
}

/// In-process channel endpoint; frames still pass through the byte codec so
/// accounting matches the TCP path exactly.
pub struct InMemoryChannel {
    outgoing: Arc<Pipe>,
    incoming: Arc<Pipe>,
    closed: AtomicBool,
    stats: StatCells,
}

/// Connected endpoint pair: frames sent on one side arrive on the other in
/// order.
pub fn pair_inmemory() -> (InMemoryChannel, InMemoryChannel) {
    let ab = Pipe::new();
    let ba = Pipe::new();
    let a = InMemoryChannel {
        outgoing: Arc::clone(&ab),
        incoming: Arc::clone(&ba),
        closed: AtomicBool::new(false),
        stats: StatCells::default(),
    };
    let b = InMemoryChannel {
        outgoing: ba,
        incoming: ab,
        closed: AtomicBool::new(false),
        stats: StatCells::default(),
    };
    (a, b)
}

impl Channel for InMemoryChannel {
    fn send(&self, f: &Frame) -> Result<(), TransportError> {
        if self.closed.load(Ordering::SeqCst) {
            return Err(TransportError::Closed);
        }
        let bytes = encode_frame(f)?;
        let mut st = self.outgoing.state.lock().unwrap();
        if st.closed {
            return Err(TransportError::Closed);
        }
        self.stats.on_send(f.msg_type, bytes.len());
        st.frames.push_back(bytes);
        drop(st);
        self.outgoing.ready.notify_one();
        Ok(())
    }

    fn recv(&self) -> Result<Frame, TransportError> {
        if self.closed.load(Ordering::SeqCst) {
            return Err(TransportError::Closed);
        }
        let mut st = self.incoming.state.lock().unwrap();
        loop {
            if let Some(bytes) = st.frames.pop_front() {
                drop(st);
                let f = decode_frame(&bytes)?;
                self.stats.on_recv(f.msg_type, bytes.len());
                return Ok(f);
            }
            if st.closed {
                return Err(TransportError::Closed);
            }
            st = self.incoming.ready.wait(st).unwrap();
        }
    }

    fn stats(&self) -> ChannelStats {
        self.stats.snapshot()
    }

    fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
        self.outgoing.shut();
        self.incoming.shut();
    }
}

/// TCP endpoint speaking the same frames. Partial reads are reassembled;
/// an oversize header poisons the connection.
pub struct TcpChannel {
    reader: Mutex<BufReader<TcpStream>>,
    writer: Mutex<TcpStream>,
    stream: TcpStream,
    closed: AtomicBool,
    stats: StatCells,
}

impl TcpChannel {
    pub fn from_stream(stream: TcpStream) -> Result<Self, TransportError> {
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        let writer = stream.try_clone()?;
        Ok(TcpChannel {
            reader: Mutex::new(reader),
            writer: Mutex::new(writer),
            stream,
            closed: AtomicBool::new(false),
            stats: StatCells::default(),
        })
    }
}

impl Channel for TcpChannel {
    fn send(&self, f: &Frame) -> Result<(), TransportError> {
        if self.closed.load(Ordering::SeqCst) {
            return Err(TransportError::Closed);
        }
        let bytes = encode_frame(f)?;
        let mut w = self.writer.lock().unwrap();
        w.write_all(&bytes)?;
        w.flush()?;
        self.stats.on_send(f.msg_type, bytes.len());
        Ok(())
    }

    fn recv(&self) -> Result<Frame, TransportError> {
        if self.closed.load(Ordering::SeqCst) {
            return Err(TransportError::Closed);
        }
        let mut r = self.reader.lock().unwrap();
        let mut header = [0u8; HEADER_LEN];
        if let Err(e) = r.read_exact(&mut header) {
            return Err(if e.kind() == std::io::ErrorKind::UnexpectedEof {
                TransportError::Closed
            } else {
                TransportError::Io(e)
            });
        }
        let (msg_type, session_id, payload_len) = match parse_header(&header) {
            Ok(parts) => parts,
            Err(e) => {
                // The stream is out of sync; nothing after this is trustworthy.
                drop(r);
                self.close();
                return Err(e);
            }
        };
        let mut payload = vec![0u8; payload_len as usize];
        r.read_exact(&mut payload)?;
        self.stats
            .on_recv(msg_type, HEADER_LEN + payload_len as usize);
        Ok(Frame {
            msg_type,
            session_id,
            payload,
        })
    }

    fn stats(&self) -> ChannelStats {
        self.stats.snapshot()
    }

    fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }
}

/// Accepts twin-server connections.
pub struct Acceptor {
    listener: TcpListener,
}

pub fn listen_tcp(addr: impl ToSocketAddrs) -> Result<Acceptor, TransportError> {
    Ok(Acceptor {
        listener: TcpListener::bind(addr)?,
    })
}

impl Acceptor {
    pub fn accept(&self) -> Result<TcpChannel, TransportError> {
        let (stream, _) = self.listener.accept()?;
        TcpChannel::from_stream(stream)
    }

    pub fn local_addr(&self) -> Result<std::net::SocketAddr, TransportError> {
        Ok(self.listener.local_addr()?)
    }
}

/// Digest binding a connection to one key pair: SHA-256 over the wire
/// encodings of N and h.
pub fn pk_digest(pk: &PublicKey) -> [u8; 32] {
    let mut buf = Vec::new();
    encode_nat(&mut buf, &pk.n);
    encode_nat(&mut buf, &pk.h);
    let mut hasher = Sha256::new();
    hasher.update(&buf);
    hasher.finalize().into()
}

fn hello_payload(pk: &PublicKey) -> Vec<u8> {
    let mut p = Vec::with_capacity(33);
    p.push(WIRE_VERSION);
    p.extend_from_slice(&pk_digest(pk));
    p
}

fn check_hello_payload(payload: &[u8], pk: &PublicKey) -> Result<(), String> {
    if payload.len() != 33 {
        return Err(format!("hello payload is {} bytes, want 33", payload.len()));
    }
    if payload[0] != WIRE_VERSION {
        return Err(format!("peer speaks wire version {:#04x}", payload[0]));
    }
    if payload[1..] != pk_digest(pk) {
        return Err("peer key digest does not match ours".into());
    }
    Ok(())
}

/// Connect-side handshake: announce our key digest, expect a matching echo.
pub fn client_hello(ch: &dyn Channel, pk: &PublicKey) -> Result<(), TransportError> {
    ch.send(&Frame::new(msg::HELLO, 0, hello_payload(pk)))?;
    let reply = ch.recv()?;
    match reply.msg_type {
        msg::HELLO => check_hello_payload(&reply.payload, pk).map_err(TransportError::Handshake),
        msg::ERROR => Err(TransportError::Remote(
            String::from_utf8_lossy(&reply.payload).into_owned(),
        )),
        other => Err(TransportError::Handshake(format!(
            "expected hello reply, got message type {other:#04x}"
        ))),
    }
}

/// Accept-side handshake: require a hello for our key before any traffic.
pub fn server_hello(ch: &dyn Channel, pk: &PublicKey) -> Result<(), TransportError> {
    let first = ch.recv()?;
    if first.msg_type != msg::HELLO {
        let reason = format!(
            "expected hello as first frame, got message type {:#04x}",
            first.msg_type
        );
        let _ = ch.send(&Frame::error(first.session_id, &reason));
        ch.close();
        return Err(TransportError::Handshake(reason));
    }
    if let Err(reason) = check_hello_payload(&first.payload, pk) {
        let _ = ch.send(&Frame::error(first.session_id, &reason));
        ch.close();
        return Err(TransportError::Handshake(reason));
    }
    ch.send(&Frame::new(msg::HELLO, 0, hello_payload(pk)))?;
    Ok(())
}

pub fn connect_tcp(
    addr: impl ToSocketAddrs,
    pk: &PublicKey,
) -> Result<TcpChannel, TransportError> {
    let ch = TcpChannel::from_stream(TcpStream::connect(addr)?)?;
    client_hello(&ch, pk)?;
    Ok(ch)
}
