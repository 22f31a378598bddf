//! WebSocket bridge between the control loop and one operator console.
//!
//! The loop and the bridge share two things: the input mailbox (console
//! writes, loop reads the latest value each tick) and the snapshot slot
//! (loop writes every few ticks, the session thread forwards it).

use std::io::{self, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use flexinst_core::control::Snapshot;
use flexinst_core::input::{InputMailbox, LinkStatus};
use flexinst_core::protocol::{
    self, ClientMessage, ProtocolError, ServerMessage, StateMessage, PROTOCOL_VERSION,
};
use log::{debug, info, warn};
use tungstenite::{Message, WebSocket};

const POLL_INTERVAL: Duration = Duration::from_millis(5);

/// Latest published snapshot with a sequence number.
#[derive(Default)]
pub struct SnapshotSlot {
    inner: Mutex<(u64, Option<Arc<Snapshot>>)>,
}

impl SnapshotSlot {
    pub fn new() -> Arc<Self> {
        Arc::new(SnapshotSlot::default())
    }

    pub fn publish(&self, snapshot: Snapshot) {
        let mut g = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        g.0 += 1;
        g.1 = Some(Arc::new(snapshot));
    }

    /// Latest snapshot if it is newer than `seen`.
    pub fn newer_than(&self, seen: u64) -> Option<(u64, Arc<Snapshot>)> {
        let g = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        match &g.1 {
            Some(s) if g.0 > seen => Some((g.0, Arc::clone(s))),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BridgeOptions {
    pub axis_range: f64,
    pub loop_rate_hz: f64,
    pub snapshot_rate_hz: f64,
    pub allow_fault_inject: bool,
}

impl BridgeOptions {
    pub fn from_config(cfg: &flexinst_core::SystemConfig) -> Self {
        BridgeOptions {
            axis_range: cfg.pipeline.axis_range,
            loop_rate_hz: cfg.control.loop_rate_hz,
            snapshot_rate_hz: cfg.control.loop_rate_hz / cfg.control.snapshot_decimation as f64,
            allow_fault_inject: cfg!(debug_assertions) || cfg.console.allow_fault_inject,
        }
    }
}

struct Shared {
    mailbox: Arc<InputMailbox>,
    snapshots: Arc<SnapshotSlot>,
    opts: BridgeOptions,
    session_active: AtomicBool,
    shutdown: AtomicBool,
}

/// Running bridge. Dropping it stops accepting connections.
pub struct Bridge {
    addr: SocketAddr,
    shared: Arc<Shared>,
    acceptor: Option<JoinHandle<()>>,
}

impl Bridge {
    /// Bind `addr` and start accepting console sessions.
    pub fn serve(
        addr: &str,
        mailbox: Arc<InputMailbox>,
        snapshots: Arc<SnapshotSlot>,
        opts: BridgeOptions,
    ) -> io::Result<Bridge> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let local = listener.local_addr()?;
        let shared = Arc::new(Shared {
            mailbox,
            snapshots,
            opts,
            session_active: AtomicBool::new(false),
            shutdown: AtomicBool::new(false),
        });
        let s = Arc::clone(&shared);
        let acceptor = thread::Builder::new()
            .name("console-accept".into())
            .spawn(move || accept_loop(listener, s))?;
        info!("console bridge listening on ws://{local}");
        Ok(Bridge {
            addr: local,
            shared,
            acceptor: Some(acceptor),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn session_active(&self) -> bool {
        self.shared.session_active.load(Ordering::SeqCst)
    }
}

impl Drop for Bridge {
    fn drop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    while !shared.shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                if let Err(e) = stream.set_nonblocking(false) {
                    warn!("dropping {peer}: {e}");
                    continue;
                }
                if shared.session_active.swap(true, Ordering::SeqCst) {
                    thread::spawn(move || reject(stream, peer));
                    continue;
                }
                let s = Arc::clone(&shared);
                let spawned =
                    thread::Builder::new()
                        .name("console-session".into())
                        .spawn(move || {
                            run_session(stream, peer, &s);
                            s.session_active.store(false, Ordering::SeqCst);
                        });
                if let Err(e) = spawned {
                    warn!("cannot start session for {peer}: {e}");
                    shared.session_active.store(false, Ordering::SeqCst);
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL_INTERVAL),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(POLL_INTERVAL);
            }
        }
    }
}

fn reject(stream: TcpStream, peer: SocketAddr) {
    info!("rejecting {peer}: a session is already active");
    if let Ok(mut ws) = tungstenite::accept(stream) {
        let msg = ServerMessage::Rejected {
            reason: "another operator session is active".into(),
        };
        let _ = ws.send(Message::text(protocol::encode(&msg)));
        let _ = ws.close(None);
        let _ = ws.flush();
    }
}

fn send(ws: &mut WebSocket<TcpStream>, msg: &ServerMessage) -> tungstenite::Result<()> {
    ws.send(Message::text(protocol::encode(msg)))
}

fn run_session(stream: TcpStream, peer: SocketAddr, shared: &Shared) {
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            warn!("handshake with {peer} failed: {e}");
            return;
        }
    };
    if let Err(e) = ws.get_ref().set_read_timeout(Some(POLL_INTERVAL)) {
        warn!("cannot configure session socket: {e}");
        return;
    }
    info!("operator session from {peer}");
    shared.mailbox.set_link(LinkStatus::Connected);

    let hello = ServerMessage::Hello {
        server: format!("flexinst {}", env!("CARGO_PKG_VERSION")),
        version: PROTOCOL_VERSION,
        loop_rate_hz: shared.opts.loop_rate_hz,
        snapshot_rate_hz: shared.opts.snapshot_rate_hz,
        fault_inject_enabled: shared.opts.allow_fault_inject,
    };
    let mut seen = 0;
    let result = send(&mut ws, &hello).and_then(|_| loop {
        if shared.shutdown.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            break Ok(());
        }
        match ws.read() {
            Ok(Message::Text(text)) => handle_text(&mut ws, shared, text.as_str())?,
            Ok(Message::Binary(_)) => warn_client(&mut ws, &ProtocolError::Binary)?,
            Ok(Message::Close(_)) => break Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => break Err(e),
        }
        if let Some((seq, snap)) = shared.snapshots.newer_than(seen) {
            seen = seq;
            send(
                &mut ws,
                &ServerMessage::State(StateMessage::from(snap.as_ref())),
            )?;
        }
    });
    match result {
        Ok(()) | Err(tungstenite::Error::ConnectionClosed) => info!("session {peer} closed"),
        Err(e) => info!("session {peer} dropped: {e}"),
    }
    shared.mailbox.set_link(LinkStatus::Lost);
}

fn warn_client(ws: &mut WebSocket<TcpStream>, err: &ProtocolError) -> tungstenite::Result<()> {
    debug!("rejected client message: {err}");
    send(
        ws,
        &ServerMessage::Warning {
            message: err.to_string(),
        },
    )
}

fn handle_text(
    ws: &mut WebSocket<TcpStream>,
    shared: &Shared,
    text: &str,
) -> tungstenite::Result<()> {
    let msg = match protocol::decode_client(text) {
        Ok(m) => m,
        Err(e) => return warn_client(ws, &e),
    };
    match &msg {
        ClientMessage::Hello { client, version } => {
            info!("console says hello: {client:?} v{version}");
            if *version != PROTOCOL_VERSION {
                let message =
                    format!("protocol version {version} requested, serving {PROTOCOL_VERSION}");
                send(ws, &ServerMessage::Warning { message })?;
            }
        }
        ClientMessage::Axes(a) => shared
            .mailbox
            .publish_axes(a.to_raw(shared.opts.axis_range)),
        ClientMessage::FaultInject { .. } if !shared.opts.allow_fault_inject => {
            let message = "faultInject is disabled in this build".to_string();
            send(ws, &ServerMessage::Warning { message })?;
        }
        other => {
            if let Some(req) = other.request() {
                shared.mailbox.request(req);
            }
        }
    }
    Ok(())
}
