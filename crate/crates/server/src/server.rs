use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path as FsPath, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};

use kineverse::artmodel::{ArticulationModel, ChangeSet, OperationHistory, Path, TaggedModel};
use kineverse::loaders::{load_kmodel, save_kmodel, LoadError};
use log::{debug, info, warn};
use thiserror::Error;

use crate::protocol::{covers, ErrorCode, Update, WireMessage, PROTOCOL_VERSION};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("stored history is unreadable: {0}")]
    Store(#[from] LoadError),
    #[error("stored history does not replay: {0}")]
    Replay(#[from] kineverse::artmodel::ModelError),
}

struct Peer {
    subs: Vec<Path>,
    tx: Sender<String>,
    stream: TcpStream,
}

struct State {
    model: TaggedModel,
    revision: u64,
    peers: BTreeMap<u64, Peer>,
    next_peer: u64,
    store: Option<PathBuf>,
}

/// A running model server. Dropping the handle shuts it down.
pub struct ServerHandle {
    addr: SocketAddr,
    state: Arc<Mutex<State>>,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

fn lock(state: &Mutex<State>) -> MutexGuard<'_, State> {
    state.lock().unwrap_or_else(|e| e.into_inner())
}

/// Loads the persisted history at `store` if the file exists, otherwise
/// `initial`.
pub fn initial_history(initial: OperationHistory, store: Option<&FsPath>) -> Result<OperationHistory, ServerError> {
    match store {
        Some(p) if p.exists() => Ok(load_kmodel(&fs::read_to_string(p)?)?),
        _ => Ok(initial),
    }
}

fn persist(path: &FsPath, history: &OperationHistory) -> io::Result<()> {
    let tmp = path.with_extension("kmodel.tmp");
    fs::write(&tmp, save_kmodel(history))?;
    fs::rename(&tmp, path)
}

/// Starts serving `history` on `endpoint`.
///
/// With a `store` path, a history already persisted there takes precedence
/// over `history`, and the history is rewritten after every successful
/// apply.
pub fn serve(history: OperationHistory, endpoint: impl ToSocketAddrs, store: Option<PathBuf>) -> Result<ServerHandle, ServerError> {
    let history = initial_history(history, store.as_deref())?;
    let model = TaggedModel::from_history(&history)?;
    if let Some(p) = &store {
        persist(p, model.history())?;
    }
    let listener = TcpListener::bind(endpoint)?;
    let addr = listener.local_addr()?;
    let state = Arc::new(Mutex::new(State {
        model,
        revision: 0,
        peers: BTreeMap::new(),
        next_peer: 0,
        store,
    }));
    let stop = Arc::new(AtomicBool::new(false));
    let acceptor = {
        let state = state.clone();
        let stop = stop.clone();
        thread::spawn(move || accept_loop(listener, state, stop))
    };
    info!("serving on {addr}");
    Ok(ServerHandle {
        addr,
        state,
        stop,
        acceptor: Some(acceptor),
    })
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn revision(&self) -> u64 {
        lock(&self.state).revision
    }

    pub fn model(&self) -> ArticulationModel {
        lock(&self.state).model.model().clone()
    }

    pub fn history(&self) -> OperationHistory {
        lock(&self.state).model.history().clone()
    }

    /// Blocks until the server is shut down from elsewhere.
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }

    /// Stops accepting, disconnects every client and joins the acceptor.
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        let mut st = lock(&self.state);
        for (_, p) in std::mem::take(&mut st.peers) {
            let _ = p.stream.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}

fn accept_loop(listener: TcpListener, state: Arc<Mutex<State>>, stop: Arc<AtomicBool>) {
    for conn in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        match conn {
            Ok(stream) => {
                if let Err(e) = start_peer(stream, &state) {
                    warn!("dropping client: {e}");
                }
            }
            Err(e) => warn!("accept failed: {e}"),
        }
    }
}

fn start_peer(stream: TcpStream, state: &Arc<Mutex<State>>) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let (tx, rx) = mpsc::channel::<String>();
    let mut writer = stream.try_clone()?;
    let reader = stream.try_clone()?;
    let id = {
        let mut st = lock(state);
        let id = st.next_peer;
        st.next_peer += 1;
        st.peers.insert(
            id,
            Peer {
                subs: Vec::new(),
                tx: tx.clone(),
                stream,
            },
        );
        id
    };
    let _ = tx.send(WireMessage::Hello { version: PROTOCOL_VERSION }.to_line());
    thread::spawn(move || {
        for line in rx {
            if writer.write_all(line.as_bytes()).and_then(|_| writer.write_all(b"\n")).is_err() {
                break;
            }
        }
        let _ = writer.shutdown(Shutdown::Both);
    });
    let state = state.clone();
    thread::spawn(move || {
        read_loop(reader, id, &state);
        // dropping the sender lets the writer flush and close
        lock(&state).peers.remove(&id);
        debug!("client {id} left");
    });
    Ok(())
}

fn read_loop(stream: TcpStream, id: u64, state: &Mutex<State>) {
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let Ok(line) = line else { return };
        if line.trim().is_empty() {
            continue;
        }
        let msg = match WireMessage::from_line(&line) {
            Ok(m) => m,
            Err(e) => {
                reply(state, id, error(None, ErrorCode::BadMessage, e.to_string()));
                continue;
            }
        };
        match msg {
            WireMessage::Hello { version } if version == PROTOCOL_VERSION => {}
            WireMessage::Hello { version } => {
                let msg = format!("server speaks version {PROTOCOL_VERSION}, client {version}");
                reply(state, id, error(None, ErrorCode::VersionMismatch, msg));
                return;
            }
            WireMessage::Subscribe { paths } => subscribe(state, id, paths),
            WireMessage::Apply {
                request_id,
                placement,
                tag,
                op,
            } => apply(state, id, request_id, placement.into(), tag, op),
            other => {
                let msg = format!("clients may not send {}", kind(&other));
                reply(state, id, error(None, ErrorCode::BadMessage, msg));
            }
        }
    }
}

fn kind(m: &WireMessage) -> &'static str {
    match m {
        WireMessage::Hello { .. } => "hello",
        WireMessage::Subscribe { .. } => "subscribe",
        WireMessage::Apply { .. } => "apply",
        WireMessage::Update(_) => "update",
        WireMessage::Ack { .. } => "ack",
        WireMessage::Error { .. } => "error",
    }
}

fn error(request_id: Option<u64>, code: ErrorCode, message: String) -> WireMessage {
    WireMessage::Error {
        request_id,
        code,
        message,
    }
}

fn reply(state: &Mutex<State>, id: u64, msg: WireMessage) {
    if let Some(p) = lock(state).peers.get(&id) {
        let _ = p.tx.send(msg.to_line());
    }
}

/// Update for `subs` covering `paths`, or `None` if nothing is covered.
fn update_for(
    model: &ArticulationModel,
    revision: u64,
    subs: &[Path],
    paths: &BTreeSet<Path>,
    constraints: &BTreeSet<String>,
) -> Option<Update> {
    let changed: Vec<Path> = paths.iter().filter(|p| covers(subs, p)).cloned().collect();
    if changed.is_empty() {
        return None;
    }
    let defs = changed.iter().map(|p| (p.clone(), model.get(p).ok().cloned())).collect();
    let constraints_changed = constraints
        .iter()
        .map(|n| (n.clone(), model.constraint(n).cloned()))
        .collect();
    Some(Update {
        revision,
        changed_paths: changed,
        defs,
        constraints_changed,
    })
}

fn subscribe(state: &Mutex<State>, id: u64, paths: Vec<Path>) {
    let mut st = lock(state);
    let revision = st.revision;
    let existing: BTreeSet<Path> = st.model.model().definitions().keys().cloned().collect();
    let Some(peer) = st.peers.get_mut(&id) else { return };
    let fresh: Vec<Path> = paths.into_iter().filter(|p| !peer.subs.contains(p)).collect();
    let newly: BTreeSet<Path> = existing
        .into_iter()
        .filter(|p| covers(&fresh, p) && !covers(&peer.subs, p))
        .collect();
    peer.subs.extend(fresh);
    let tx = peer.tx.clone();
    if let Some(u) = update_for(st.model.model(), revision, &st.peers[&id].subs, &newly, &BTreeSet::new()) {
        let _ = tx.send(WireMessage::Update(u).to_line());
    }
}

fn apply(
    state: &Mutex<State>,
    id: u64,
    request_id: u64,
    placement: kineverse::artmodel::Placement,
    tag: String,
    op: kineverse::artmodel::Operation,
) {
    let mut st = lock(state);
    let changes: ChangeSet = match st.model.apply(tag, op, placement) {
        Ok(c) => c,
        Err(e) => {
            let msg = error(Some(request_id), ErrorCode::from(&e), e.to_string());
            if let Some(p) = st.peers.get(&id) {
                let _ = p.tx.send(msg.to_line());
            }
            return;
        }
    };
    st.revision += 1;
    let revision = st.revision;
    if let Some(store) = st.store.clone() {
        if let Err(e) = persist(&store, st.model.history()) {
            warn!("could not persist history to {}: {e}", store.display());
        }
    }
    if let Some(p) = st.peers.get(&id) {
        let _ = p.tx.send(WireMessage::Ack { request_id, revision }.to_line());
    }
    let st = &*st;
    for peer in st.peers.values() {
        if let Some(u) = update_for(st.model.model(), revision, &peer.subs, &changes.paths, &changes.constraints) {
            let _ = peer.tx.send(WireMessage::Update(u).to_line());
        }
    }
}
