use std::collections::HashMap;
use std::io::Write;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError};

use super::node::Node;
use super::wire::{plain_body, read_unit, write_plain, ErrorCode, Message, WireError, MAX_HEADERS_PER_RESP};
use super::ServiceError;
use crate::chain::BlockSource;
use crate::enclave::attest::{measure, BUILD_IDENTITY};
use crate::enclave::{Attestor, EnclaveError, Session};
use crate::oram::OramError;
use crate::store::{Evictor, ReadRequest, StoreError, StoreStats};
use crate::utxo::UtxoError;

const POLL: Duration = Duration::from_millis(50);

pub fn error_code(e: &StoreError) -> ErrorCode {
    match e {
        StoreError::BadProof => ErrorCode::BadProof,
        StoreError::Unavailable => ErrorCode::Unavailable,
        StoreError::DuplicateRead { .. } => ErrorCode::DuplicateRead,
        StoreError::Oram(OramError::IntegrityViolation { .. }) => ErrorCode::IntegrityViolation,
        StoreError::Utxo(UtxoError::DeltaOutOfRange { .. }) => ErrorCode::BadDelta,
        _ => ErrorCode::Internal,
    }
}

fn channel_code(e: &EnclaveError) -> ErrorCode {
    match e {
        EnclaveError::ReplayDetected => ErrorCode::ReplayDetected,
        EnclaveError::Reordered => ErrorCode::Reordered,
        _ => ErrorCode::AuthFail,
    }
}

struct Shared {
    node: Arc<Node>,
    attestor: Attestor,
    stop: AtomicBool,
    conns: Mutex<HashMap<u64, TcpStream>>,
    next_conn: AtomicU64,
}

/// A running daemon: acceptor, reader pool, evictor and (optionally) ingest.
pub struct RunningServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
    _evictor: Evictor,
}

impl RunningServer {
    /// Starts serving on `listener` with `readers` connection workers. With a
    /// block source, a writer thread polls it for new blocks.
    pub fn start(
        node: Arc<Node>,
        attest_root: Vec<u8>,
        listener: TcpListener,
        readers: usize,
        source: Option<Box<dyn BlockSource>>,
    ) -> Result<Self, ServiceError> {
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let evictor = node.store.spawn_evictor();
        let shared = Arc::new(Shared {
            attestor: Attestor::new(attest_root, measure(BUILD_IDENTITY)),
            node,
            stop: AtomicBool::new(false),
            conns: Mutex::new(HashMap::new()),
            next_conn: AtomicU64::new(0),
        });
        let (tx, rx) = unbounded::<TcpStream>();
        let mut threads = Vec::new();

        let sh = Arc::clone(&shared);
        threads.push(spawn("t3-accept", move || {
            while !sh.stop.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        log::debug!("connection from {peer}");
                        if tx.send(stream).is_err() {
                            break;
                        }
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(POLL),
                    Err(e) => {
                        log::warn!("accept failed: {e}");
                        std::thread::sleep(POLL);
                    }
                }
            }
        }));

        for i in 0..readers.max(1) {
            let sh = Arc::clone(&shared);
            let rx: Receiver<TcpStream> = rx.clone();
            threads.push(spawn(&format!("t3-reader-{i}"), move || loop {
                match rx.recv_timeout(POLL) {
                    Ok(stream) => sh.serve_connection(stream),
                    Err(RecvTimeoutError::Timeout) if !sh.stop.load(Ordering::Relaxed) => {}
                    Err(_) => break,
                }
            }));
        }

        if let Some(source) = source {
            let sh = Arc::clone(&shared);
            threads.push(spawn("t3-ingest", move || sh.ingest_loop(source.as_ref())));
        }
        Ok(RunningServer { addr, shared, threads, _evictor: evictor })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn node(&self) -> &Arc<Node> {
        &self.shared.node
    }

    pub fn stats(&self) -> StoreStats {
        self.shared.node.store.stats()
    }

    /// Stops all threads and closes open connections.
    pub fn shutdown(mut self) {
        self.stop_threads();
    }

    fn stop_threads(&mut self) {
        self.shared.stop.store(true, Ordering::Relaxed);
        for (_, c) in self.shared.conns.lock().unwrap().drain() {
            let _ = c.shutdown(std::net::Shutdown::Both);
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

fn spawn(name: &str, f: impl FnOnce() + Send + 'static) -> JoinHandle<()> {
    std::thread::Builder::new().name(name.into()).spawn(f).expect("spawn thread")
}

impl Shared {
    fn serve_connection(&self, stream: TcpStream) {
        let id = self.next_conn.fetch_add(1, Ordering::Relaxed);
        if let Ok(c) = stream.try_clone() {
            self.conns.lock().unwrap().insert(id, c);
        }
        if self.stop.load(Ordering::Relaxed) {
            let _ = stream.shutdown(std::net::Shutdown::Both);
        }
        if let Err(e) = self.connection(stream) {
            log::debug!("connection {id} closed: {e}");
        }
        self.conns.lock().unwrap().remove(&id);
    }

    fn connection(&self, mut stream: TcpStream) -> Result<(), ServiceError> {
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        let Some(unit) = read_unit(&mut stream)? else {
            return Ok(());
        };
        let mut session = match Message::decode(plain_body(&unit)) {
            Ok(Message::AttestReq(req)) => match self.attestor.attest(&req, &mut rand::thread_rng()) {
                Ok((quote, session)) => {
                    write_plain(&mut stream, &Message::AttestResp(quote))?;
                    session
                }
                Err(e) => {
                    write_plain(&mut stream, &Message::Error(ErrorCode::AuthFail))?;
                    return Err(e.into());
                }
            },
            Ok(_) => {
                write_plain(&mut stream, &Message::Error(ErrorCode::Unexpected))?;
                return Ok(());
            }
            Err(e) => {
                write_plain(&mut stream, &Message::Error(ErrorCode::BadEncoding))?;
                return Err(e.into());
            }
        };
        loop {
            let unit = match read_unit(&mut stream) {
                Ok(Some(u)) => u,
                Ok(None) => return Ok(()),
                Err(WireError::Malformed(_)) => {
                    // Unframeable input: the stream cannot be resynchronized.
                    let frame = session.seal(&Message::Error(ErrorCode::BadEncoding).encode());
                    stream.write_all(&frame)?;
                    return Ok(());
                }
                Err(e) => return Err(e.into()),
            };
            let reply = match session.unseal(&unit) {
                Ok(pt) => self.dispatch(&pt, &session),
                Err(e) => {
                    log::debug!("rejected frame: {e}");
                    Message::Error(channel_code(&e))
                }
            };
            stream.write_all(&session.seal(&reply.encode()))?;
        }
    }

    fn dispatch(&self, plaintext: &[u8], session: &Session) -> Message {
        match Message::decode(plaintext) {
            Ok(Message::Query { delta, proof }) => {
                let req = ReadRequest { proof, delta: (delta != 0).then_some(delta as u32) };
                match self.node.store.serve_read(&req, session) {
                    Ok(resp) => Message::QueryResp { interval: resp.interval, records: resp.records },
                    Err(e) => {
                        if !matches!(e, StoreError::BadProof) {
                            log::warn!("query failed: {e}");
                        }
                        Message::Error(error_code(&e))
                    }
                }
            }
            Ok(Message::HeadersReq { start, count }) => {
                let headers = self
                    .node
                    .with_chain(|c| c.range(start, count.min(MAX_HEADERS_PER_RESP) as usize).to_vec());
                Message::HeadersResp { headers }
            }
            Ok(_) => Message::Error(ErrorCode::Unexpected),
            Err(_) => Message::Error(ErrorCode::BadEncoding),
        }
    }

    fn ingest_loop(&self, source: &dyn BlockSource) {
        let poll = Duration::from_millis(self.node.cfg.poll_interval_ms.max(1));
        let mut last_error: Option<String> = None;
        while !self.stop.load(Ordering::Relaxed) {
            match self.node.ingest_next(source) {
                Ok(Some(s)) => {
                    last_error = None;
                    let st = self.node.store.stats();
                    println!(
                        "stats height={} interval={} creates={} spends={} block_full={} reads={} evictions={} parked={}",
                        s.height, s.interval, s.creates, s.spends, st.block_full, st.reads_served, st.evictions, st.reads_parked
                    );
                    continue;
                }
                Ok(None) => {}
                Err(e) => {
                    let msg = e.to_string();
                    if last_error.as_deref() != Some(&msg) {
                        log::error!("ingest: {msg}");
                        last_error = Some(msg);
                    }
                }
            }
            let mut waited = Duration::ZERO;
            while waited < poll && !self.stop.load(Ordering::Relaxed) {
                std::thread::sleep(POLL.min(poll));
                waited += POLL.min(poll);
            }
        }
    }
}
