//! WebSocket bridge for one live session.
//!
//! The simulation runs on the calling thread against a virtual clock. Each
//! client gets a thread and a bounded outbox; when an outbox is full the frame
//! is dropped for that client, so a slow reader never stalls the simulation.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use super::batch::load_scenario;
use super::protocol::{parse_client, ClientCommand, ErrorCode, ServerMessage};
use super::{ServiceError, Session};

/// Frames buffered per client before new ones are dropped.
pub const CLIENT_QUEUE: usize = 256;
const HEARTBEAT: Duration = Duration::from_secs(1);
const POLL: Duration = Duration::from_millis(2);
/// Upper bound on steps per loop pass, so commands stay responsive at any time scale.
const MAX_STEPS_PER_PASS: usize = 2_000;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub bind: String,
    pub port: u16,
    /// Virtual milliseconds per wall-clock millisecond; infinity runs flat out.
    pub time_scale: f64,
    pub max_runtime: Option<Duration>,
    pub autopilot: bool,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            config: None,
            seed: None,
            bind: "127.0.0.1".into(),
            port: 8765,
            time_scale: 1.0,
            max_runtime: None,
            autopilot: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ServeReport {
    pub clients: u64,
    pub frames_sent: u64,
    pub frames_dropped: u64,
    pub virtual_ms: f64,
}

enum Inbound {
    Connected(u64),
    Command(u64, ClientCommand),
}

struct Client {
    id: u64,
    tx: SyncSender<String>,
}

#[derive(Default)]
struct Hub {
    clients: Mutex<Vec<Client>>,
    sent: AtomicU64,
    dropped: AtomicU64,
}

impl Hub {
    fn broadcast(&self, msg: &ServerMessage) {
        let text = msg.to_json();
        let mut clients = self.clients.lock().expect("hub lock");
        clients.retain(|c| match c.tx.try_send(text.clone()) {
            Ok(()) => {
                self.sent.fetch_add(1, Ordering::Relaxed);
                true
            }
            Err(TrySendError::Full(_)) => {
                self.dropped.fetch_add(1, Ordering::Relaxed);
                true
            }
            Err(TrySendError::Disconnected(_)) => false,
        });
    }

    fn send_to(&self, id: u64, msg: &ServerMessage) {
        let clients = self.clients.lock().expect("hub lock");
        if let Some(c) = clients.iter().find(|c| c.id == id) {
            match c.tx.try_send(msg.to_json()) {
                Ok(()) => self.sent.fetch_add(1, Ordering::Relaxed),
                Err(_) => self.dropped.fetch_add(1, Ordering::Relaxed),
            };
        }
    }
}

/// Runs the bridge until `max_runtime` elapses. `on_ready` gets the bound address.
pub fn serve(
    opts: &ServeOptions,
    on_ready: impl FnOnce(SocketAddr),
) -> Result<ServeReport, ServiceError> {
    if !(opts.time_scale > 0.0) {
        return Err(ServiceError::Usage(format!(
            "time scale must be positive, got {}",
            opts.time_scale
        )));
    }
    let scenario = load_scenario(opts.config.as_deref(), opts.seed, None)?;
    let listener = TcpListener::bind((opts.bind.as_str(), opts.port)).map_err(|e| {
        ServiceError::Config(format!("cannot listen on {}:{}: {e}", opts.bind, opts.port))
    })?;
    let addr = listener
        .local_addr()
        .map_err(|e| ServiceError::Runtime(e.to_string()))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| ServiceError::Runtime(e.to_string()))?;

    let hub = Arc::new(Hub::default());
    let stop = Arc::new(AtomicBool::new(false));
    let (in_tx, in_rx) = mpsc::channel();
    let accept = {
        let (hub, stop) = (hub.clone(), stop.clone());
        thread::spawn(move || accept_loop(listener, hub, stop, in_tx))
    };
    on_ready(addr);

    let mut session = Session::new(scenario);
    if opts.autopilot {
        session.handle(ClientCommand::new(
            super::protocol::CommandKind::AutopilotOn,
        ));
    }
    run_loop(&mut session, opts, &hub, &in_rx);

    stop.store(true, Ordering::SeqCst);
    let clients = accept.join().unwrap_or(0);
    Ok(ServeReport {
        clients,
        frames_sent: hub.sent.load(Ordering::Relaxed),
        frames_dropped: hub.dropped.load(Ordering::Relaxed),
        virtual_ms: session.now_ms(),
    })
}

fn run_loop(session: &mut Session, opts: &ServeOptions, hub: &Hub, inbound: &Receiver<Inbound>) {
    let started = Instant::now();
    let mut last = started;
    let mut next_heartbeat = started + HEARTBEAT;
    let mut clock_ms = session.now_ms();
    loop {
        let now = Instant::now();
        if opts.max_runtime.is_some_and(|m| now - started >= m) {
            break;
        }
        while let Ok(msg) = inbound.try_recv() {
            match msg {
                Inbound::Connected(id) => hub.send_to(id, &session.hello(opts.time_scale)),
                Inbound::Command(id, cmd) => {
                    let reset = cmd.kind == super::protocol::CommandKind::Reset;
                    for reply in session.handle(cmd) {
                        match reply {
                            ServerMessage::Error { .. } => hub.send_to(id, &reply),
                            _ => hub.broadcast(&reply),
                        }
                    }
                    if reset {
                        clock_ms = session.now_ms();
                        hub.broadcast(&session.hello(opts.time_scale));
                    }
                }
            }
        }

        let wall_ms = (now - last).as_secs_f64() * 1000.0;
        last = now;
        if !session.paused() {
            clock_ms += wall_ms * opts.time_scale;
            for m in session.advance_to(clock_ms, MAX_STEPS_PER_PASS) {
                hub.broadcast(&m);
            }
            // Never run ahead of what the simulation managed to cover.
            clock_ms = clock_ms.min(session.now_ms() + session.dt_ms());
        }
        if now >= next_heartbeat {
            hub.broadcast(&session.heartbeat());
            next_heartbeat += HEARTBEAT;
        }
        if opts.time_scale.is_finite() || session.paused() {
            thread::sleep(POLL);
        }
    }
}

fn accept_loop(
    listener: TcpListener,
    hub: Arc<Hub>,
    stop: Arc<AtomicBool>,
    inbound: Sender<Inbound>,
) -> u64 {
    let mut next_id = 0;
    let mut workers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                next_id += 1;
                let (hub, stop, inbound) = (hub.clone(), stop.clone(), inbound.clone());
                let id = next_id;
                workers.push(thread::spawn(move || {
                    client_loop(id, stream, &hub, &stop, &inbound)
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(_) => thread::sleep(Duration::from_millis(5)),
        }
    }
    for w in workers {
        let _ = w.join();
    }
    next_id
}

fn client_loop(
    id: u64,
    stream: TcpStream,
    hub: &Hub,
    stop: &AtomicBool,
    inbound: &Sender<Inbound>,
) {
    let setup = stream
        .set_nonblocking(false)
        .and_then(|_| stream.set_read_timeout(Some(Duration::from_millis(5))))
        .and_then(|_| stream.set_write_timeout(Some(Duration::from_secs(1))));
    if setup.is_err() {
        return;
    }
    let Ok(mut ws) = tungstenite::accept(stream) else {
        return;
    };
    let (tx, rx) = mpsc::sync_channel(CLIENT_QUEUE);
    hub.clients
        .lock()
        .expect("hub lock")
        .push(Client { id, tx });
    if inbound.send(Inbound::Connected(id)).is_err() {
        return;
    }
    while !stop.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(Message::Text(text)) => match parse_client(&text) {
                Ok(cmd) => {
                    if inbound.send(Inbound::Command(id, cmd)).is_err() {
                        break;
                    }
                }
                Err(reply) => {
                    if write_now(&mut ws, &reply.to_json()).is_err() {
                        break;
                    }
                }
            },
            Ok(Message::Binary(_)) => {
                let reply = ServerMessage::error(
                    ErrorCode::Binary,
                    "binary frames are not part of the schema; send JSON text",
                );
                if write_now(&mut ws, &reply.to_json()).is_err() {
                    break;
                }
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
        let mut wrote = false;
        let mut failed = false;
        for text in rx.try_iter() {
            if ws.write(Message::Text(text)).is_err() {
                failed = true;
                break;
            }
            wrote = true;
        }
        if failed || (wrote && ws.flush().is_err()) {
            break;
        }
    }
    hub.clients.lock().expect("hub lock").retain(|c| c.id != id);
    let _ = ws.close(None);
    let _ = ws.flush();
}

fn write_now(ws: &mut WebSocket<TcpStream>, text: &str) -> tungstenite::Result<()> {
    ws.send(Message::Text(text.to_string()))
}
