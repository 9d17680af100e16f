use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use kineverse::artmodel::{Constraint, Definition, Operation, Path, Placement};
use thiserror::Error;

use crate::protocol::{ErrorCode, Update, WireMessage, WirePlacement, PROTOCOL_VERSION};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClientError {
    #[error("io error: {0}")]
    Io(String),
    #[error("server speaks protocol version {server}, client {client}")]
    VersionMismatch { server: u32, client: u32 },
    #[error("disconnected from server")]
    Disconnected,
    #[error("server rejected request ({code}): {message}")]
    Rejected { code: ErrorCode, message: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("timed out")]
    Timeout,
}

impl From<io::Error> for ClientError {
    fn from(e: io::Error) -> Self {
        ClientError::Io(e.to_string())
    }
}

/// What an on-change hook receives.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientEvent {
    Update(Update),
    /// The connection ended; no further events follow.
    Disconnected,
}

type Hook = Box<dyn FnMut(&ClientEvent) + Send>;

#[derive(Default)]
struct Shared {
    mirror: BTreeMap<Path, Definition>,
    constraints: BTreeMap<String, Constraint>,
    revision: u64,
    replies: HashMap<u64, Result<u64, ClientError>>,
    errors: Vec<(ErrorCode, String)>,
    disconnected: bool,
}

struct Inner {
    shared: Mutex<Shared>,
    signal: Condvar,
    hooks: Mutex<Vec<Hook>>,
}

impl Inner {
    fn lock(&self) -> MutexGuard<'_, Shared> {
        self.shared.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Connection to a model server with a local mirror of the subscribed
/// definitions.
///
/// Hooks run on the client's reader thread, one update at a time in
/// revision order. A hook must not wait on [`Client::apply`] of the same
/// client, since the acknowledgement is read by that thread.
pub struct Client {
    writer: Mutex<TcpStream>,
    inner: Arc<Inner>,
    next_request: Mutex<u64>,
    timeout: Duration,
}

impl Client {
    pub fn connect(endpoint: impl ToSocketAddrs) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(endpoint)?;
        stream.set_nodelay(true)?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut first = String::new();
        if reader.read_line(&mut first)? == 0 {
            return Err(ClientError::Disconnected);
        }
        match WireMessage::from_line(first.trim_end()) {
            Ok(WireMessage::Hello { version }) if version == PROTOCOL_VERSION => {}
            Ok(WireMessage::Hello { version }) => {
                return Err(ClientError::VersionMismatch {
                    server: version,
                    client: PROTOCOL_VERSION,
                })
            }
            Ok(other) => return Err(ClientError::Protocol(format!("expected hello, got {other:?}"))),
            Err(e) => return Err(ClientError::Protocol(e.to_string())),
        }
        let mut writer = stream;
        writeln!(writer, "{}", WireMessage::Hello { version: PROTOCOL_VERSION }.to_line())?;
        let inner = Arc::new(Inner {
            shared: Mutex::new(Shared::default()),
            signal: Condvar::new(),
            hooks: Mutex::new(Vec::new()),
        });
        {
            let inner = inner.clone();
            thread::spawn(move || read_loop(reader, &inner));
        }
        Ok(Self {
            writer: Mutex::new(writer),
            inner,
            next_request: Mutex::new(1),
            timeout: Duration::from_secs(10),
        })
    }

    /// How long [`apply`](Self::apply) waits for its acknowledgement.
    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    fn send(&self, msg: &WireMessage) -> Result<(), ClientError> {
        let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(w, "{}", msg.to_line()).map_err(|_| ClientError::Disconnected)
    }

    /// Sends a raw line, for exercising the server's error handling.
    pub fn send_raw(&self, line: &str) -> Result<(), ClientError> {
        let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(w, "{line}").map_err(|_| ClientError::Disconnected)
    }

    /// Subscribes to `paths` and everything below them. The server answers
    /// with a snapshot update of the already existing definitions.
    pub fn subscribe(&self, paths: &[Path], hook: impl FnMut(&ClientEvent) + Send + 'static) -> Result<(), ClientError> {
        self.inner.hooks.lock().unwrap_or_else(|e| e.into_inner()).push(Box::new(hook));
        self.send(&WireMessage::Subscribe { paths: paths.to_vec() })
    }

    /// Submits an operation and waits for its revision.
    pub fn apply(&self, placement: Placement, tag: impl Into<String>, op: Operation) -> Result<u64, ClientError> {
        let request_id = {
            let mut n = self.next_request.lock().unwrap_or_else(|e| e.into_inner());
            *n += 1;
            *n - 1
        };
        self.send(&WireMessage::Apply {
            request_id,
            placement: WirePlacement::from(placement),
            tag: tag.into(),
            op,
        })?;
        let deadline = Instant::now() + self.timeout;
        let mut sh = self.inner.lock();
        loop {
            if let Some(r) = sh.replies.remove(&request_id) {
                return r;
            }
            if sh.disconnected {
                return Err(ClientError::Disconnected);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(ClientError::Timeout);
            }
            sh = self
                .inner
                .signal
                .wait_timeout(sh, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    /// Waits until an update with at least `revision` has been mirrored.
    pub fn wait_for_revision(&self, revision: u64, timeout: Duration) -> Result<(), ClientError> {
        let deadline = Instant::now() + timeout;
        let mut sh = self.inner.lock();
        while sh.revision < revision {
            if sh.disconnected {
                return Err(ClientError::Disconnected);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(ClientError::Timeout);
            }
            sh = self
                .inner
                .signal
                .wait_timeout(sh, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        Ok(())
    }

    /// Revision of the latest mirrored update.
    pub fn revision(&self) -> u64 {
        self.inner.lock().revision
    }

    pub fn mirror(&self) -> BTreeMap<Path, Definition> {
        self.inner.lock().mirror.clone()
    }

    pub fn constraints(&self) -> BTreeMap<String, Constraint> {
        self.inner.lock().constraints.clone()
    }

    /// Errors the server sent that answered no apply request.
    pub fn unsolicited_errors(&self) -> Vec<(ErrorCode, String)> {
        self.inner.lock().errors.clone()
    }

    pub fn is_connected(&self) -> bool {
        !self.inner.lock().disconnected
    }
}

impl Drop for Client {
    fn drop(&mut self) {
        let w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let _ = w.shutdown(Shutdown::Both);
    }
}

fn dispatch(inner: &Inner, event: &ClientEvent) {
    let mut hooks = inner.hooks.lock().unwrap_or_else(|e| e.into_inner());
    for h in hooks.iter_mut() {
        h(event);
    }
}

fn read_loop(reader: BufReader<TcpStream>, inner: &Inner) {
    for line in reader.lines() {
        let Ok(line) = line else { break };
        let msg = match WireMessage::from_line(&line) {
            Ok(m) => m,
            Err(e) => {
                inner.lock().errors.push((ErrorCode::BadMessage, e.to_string()));
                continue;
            }
        };
        match msg {
            WireMessage::Update(u) => {
                {
                    let mut sh = inner.lock();
                    for (p, d) in &u.defs {
                        match d {
                            Some(d) => sh.mirror.insert(p.clone(), d.clone()),
                            None => sh.mirror.remove(p),
                        };
                    }
                    for (n, c) in &u.constraints_changed {
                        match c {
                            Some(c) => sh.constraints.insert(n.clone(), c.clone()),
                            None => sh.constraints.remove(n),
                        };
                    }
                    sh.revision = sh.revision.max(u.revision);
                }
                dispatch(inner, &ClientEvent::Update(u));
                inner.signal.notify_all();
            }
            WireMessage::Ack { request_id, revision } => {
                inner.lock().replies.insert(request_id, Ok(revision));
                inner.signal.notify_all();
            }
            WireMessage::Error {
                request_id: Some(id),
                code,
                message,
            } => {
                inner
                    .lock()
                    .replies
                    .insert(id, Err(ClientError::Rejected { code, message }));
                inner.signal.notify_all();
            }
            WireMessage::Error {
                request_id: None,
                code,
                message,
            } => inner.lock().errors.push((code, message)),
            other => inner.lock().errors.push((ErrorCode::BadMessage, format!("unexpected {other:?}"))),
        }
    }
    inner.lock().disconnected = true;
    inner.signal.notify_all();
    dispatch(inner, &ClientEvent::Disconnected);
}
