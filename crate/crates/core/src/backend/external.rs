//! Client side of `maple-backend/1`.
//!
//! One connection carries many requests. A reader thread routes replies to
//! waiting callers by id, so replies may arrive in any order. Callers block
//! on their own reply with a timeout; the number of unanswered requests is
//! capped by an in-flight window.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use super::wire::{self, Reply, RequestFrame};
use super::{BackendError, Candidate, GenerationRequest, Predictor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientOptions {
    pub timeout: Duration,
    /// Maximum unanswered requests on the connection.
    pub in_flight: usize,
    /// Extra connection attempts for TCP, with doubling back-off.
    pub connect_retries: u32,
    pub handshake_timeout: Duration,
}

impl Default for ClientOptions {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            in_flight: 32,
            connect_retries: 3,
            handshake_timeout: Duration::from_secs(30),
        }
    }
}

type ReplySender = mpsc::Sender<Result<Vec<Candidate>, BackendError>>;

#[derive(Default)]
struct Pending {
    waiters: HashMap<u64, ReplySender>,
    /// Ids whose callers gave up; a late reply for these is dropped.
    abandoned: HashSet<u64>,
    /// Set once the connection is unusable; every later call fails with it.
    fault: Option<BackendError>,
}

impl Pending {
    fn fail_all(&mut self, err: BackendError) {
        for (_, tx) in self.waiters.drain() {
            let _ = tx.send(Err(err.clone()));
        }
        self.fault.get_or_insert(err);
    }
}

/// Counting semaphore for the in-flight window.
struct Window {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Window {
    fn acquire(&self) -> WindowSlot<'_> {
        let mut free = self.free.lock().expect("window lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("window lock");
        }
        *free -= 1;
        WindowSlot(self)
    }
}

struct WindowSlot<'a>(&'a Window);

impl Drop for WindowSlot<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("window lock") += 1;
        self.0.cv.notify_one();
    }
}

enum Transport {
    Streams,
    Child(Mutex<Child>),
    Tcp(TcpStream),
}

pub struct ExternalClient {
    name: String,
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Arc<Mutex<Pending>>,
    next_id: AtomicU64,
    window: Window,
    timeout: Duration,
    _transport: Transport,
}

impl ExternalClient {
    /// Wraps an already-connected pair of streams. Waits for the handshake.
    pub fn from_streams<R, W>(reader: R, writer: W, options: ClientOptions) -> Result<Self, BackendError>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        Self::start(reader, Box::new(writer), Transport::Streams, options)
    }

    /// Runs `command` through `sh -c` and talks to it over stdin/stdout.
    /// The child's stderr is inherited. The child is killed on drop.
    pub fn spawn(command: &str, options: ClientOptions) -> Result<Self, BackendError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::Transport(format!("cannot start {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let transport = Transport::Child(Mutex::new(child));
        Self::start(stdout, Box::new(stdin), transport, options)
    }

    pub fn connect_tcp(addr: &str, options: ClientOptions) -> Result<Self, BackendError> {
        let mut delay = Duration::from_millis(100);
        let mut attempt = 0;
        let stream = loop {
            match TcpStream::connect(addr) {
                Ok(s) => break s,
                Err(e) if attempt < options.connect_retries => {
                    attempt += 1;
                    log::warn!("connect {addr}: {e}; retry {attempt}/{}", options.connect_retries);
                    thread::sleep(delay);
                    delay *= 2;
                }
                Err(e) => {
                    return Err(BackendError::Transport(format!(
                        "cannot connect to {addr} after {} attempts: {e}",
                        attempt + 1
                    )))
                }
            }
        };
        let _ = stream.set_nodelay(true);
        let clone = |s: &TcpStream| s.try_clone().map_err(|e| BackendError::Transport(e.to_string()));
        let reader = clone(&stream)?;
        let writer = clone(&stream)?;
        Self::start(reader, Box::new(writer), Transport::Tcp(stream), options)
    }

    fn start<R: Read + Send + 'static>(
        reader: R,
        writer: Box<dyn Write + Send>,
        transport: Transport,
        options: ClientOptions,
    ) -> Result<Self, BackendError> {
        let pending = Arc::new(Mutex::new(Pending::default()));
        let (hs_tx, hs_rx) = mpsc::channel();
        let shared = Arc::clone(&pending);
        thread::Builder::new()
            .name("maple-backend-reader".into())
            .spawn(move || read_loop(BufReader::new(reader), shared, hs_tx))
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let client_name = match hs_rx.recv_timeout(options.handshake_timeout) {
            Ok(Ok(hs)) => hs.name,
            Ok(Err(e)) => return Err(e),
            Err(_) => {
                return Err(BackendError::Transport(format!(
                    "no handshake within {:.1}s",
                    options.handshake_timeout.as_secs_f64()
                )))
            }
        };
        let client = Self {
            name: client_name,
            writer: Mutex::new(writer),
            pending,
            next_id: AtomicU64::new(1),
            window: Window {
                free: Mutex::new(options.in_flight.max(1)),
                cv: Condvar::new(),
            },
            timeout: options.timeout,
            _transport: transport,
        };
        log::info!("connected to backend {:?}", client.name);
        Ok(client)
    }

    /// Sends one request and waits for its reply. The wire id is assigned
    /// by the client; the caller's `request_id` is only used in logs.
    pub fn round_trip(&self, request: &GenerationRequest) -> Result<Vec<Candidate>, BackendError> {
        request.validate()?;
        let _slot = self.window.acquire();
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::channel();
        {
            let mut p = self.pending.lock().expect("pending lock");
            if let Some(fault) = &p.fault {
                return Err(fault.clone());
            }
            p.waiters.insert(id, tx);
        }
        let frame = wire::encode(&RequestFrame {
            id,
            stage: request.stage,
            prompt: request.prompt.clone(),
            n: request.num_candidates,
        });
        let sent = {
            let mut w = self.writer.lock().expect("writer lock");
            w.write_all(frame.as_bytes())
                .and_then(|_| w.write_all(b"\n"))
                .and_then(|_| w.flush())
        };
        if let Err(e) = sent {
            self.pending.lock().expect("pending lock").waiters.remove(&id);
            return Err(BackendError::Transport(format!("write failed: {e}")));
        }
        match rx.recv_timeout(self.timeout) {
            Ok(result) => result,
            Err(RecvTimeoutError::Timeout) => {
                let mut p = self.pending.lock().expect("pending lock");
                if p.waiters.remove(&id).is_some() {
                    p.abandoned.insert(id);
                } else if let Ok(result) = rx.try_recv() {
                    // The reply raced the timeout.
                    return result;
                }
                log::debug!("request {} (wire id {id}) timed out", request.request_id);
                Err(BackendError::Timeout {
                    id,
                    secs: self.timeout.as_secs_f64(),
                })
            }
            Err(RecvTimeoutError::Disconnected) => Err(self
                .pending
                .lock()
                .expect("pending lock")
                .fault
                .clone()
                .unwrap_or_else(|| BackendError::Transport("connection closed".into()))),
        }
    }
}

fn read_loop<R: BufRead>(
    mut reader: R,
    pending: Arc<Mutex<Pending>>,
    handshake: mpsc::Sender<Result<wire::Handshake, BackendError>>,
) {
    let mut line = String::new();
    let mut greeted = false;
    loop {
        line.clear();
        let eof = match reader.read_line(&mut line) {
            Ok(0) => Some(BackendError::Transport("backend closed the connection".into())),
            Ok(_) => None,
            Err(e) => Some(BackendError::Transport(format!("read failed: {e}"))),
        };
        if let Some(err) = eof {
            if !greeted {
                let _ = handshake.send(Err(err.clone()));
            }
            pending.lock().expect("pending lock").fail_all(err);
            return;
        }
        let frame = line.trim_end_matches(['\n', '\r']);
        if !greeted {
            let hs = wire::parse_handshake(frame);
            let ok = hs.is_ok();
            let _ = handshake.send(hs);
            if !ok {
                return;
            }
            greeted = true;
            continue;
        }
        let reply = match wire::parse_reply(frame) {
            Ok(r) => r,
            Err(e) => {
                log::error!("{e}");
                pending.lock().expect("pending lock").fail_all(e);
                return;
            }
        };
        let id = reply.id();
        let mut p = pending.lock().expect("pending lock");
        if let Some(tx) = p.waiters.remove(&id) {
            let result = match reply {
                Reply::Candidates(r) => Ok(r.candidates),
                Reply::Error(e) => Err(BackendError::Remote { id, message: e.error }),
            };
            let _ = tx.send(result);
        } else if p.abandoned.remove(&id) {
            log::debug!("dropping late reply for abandoned request {id}");
        } else {
            let err = BackendError::Protocol {
                message: format!("reply for unknown request id {id}"),
                frame: frame.to_string(),
            };
            log::error!("{err}");
            p.fail_all(err);
            return;
        }
    }
}

impl Predictor for ExternalClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<Candidate>, BackendError> {
        let mut candidates = self.round_trip(request)?;
        candidates.truncate(request.num_candidates);
        Ok(candidates)
    }
}

impl Drop for Transport {
    fn drop(&mut self) {
        match self {
            Transport::Child(child) => {
                let child = child.get_mut().expect("child lock");
                let _ = child.kill();
                let _ = child.wait();
            }
            Transport::Tcp(stream) => {
                let _ = stream.shutdown(std::net::Shutdown::Both);
            }
            Transport::Streams => {}
        }
    }
}
