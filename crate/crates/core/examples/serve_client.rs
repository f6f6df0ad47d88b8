//! Starts the live bridge on a free port and drives it as a client would:
//! manual stimuli, then the autopilot until the goal event arrives.

use std::net::TcpStream;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use cyborg_core::service::protocol::{ClientCommand, CommandKind, Event, ServerMessage};
use cyborg_core::service::{serve, ServeOptions};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

type Ws = WebSocket<MaybeTlsStream<TcpStream>>;

fn send(ws: &mut Ws, cmd: ClientCommand) {
    ws.send(Message::Text(serde_json::to_string(&cmd).unwrap()))
        .unwrap();
}

fn main() {
    let opts = ServeOptions {
        port: 0,
        time_scale: 10.0,
        max_runtime: Some(Duration::from_secs(12)),
        ..Default::default()
    };
    let (tx, rx) = mpsc::channel();
    let server = thread::spawn(move || serve(&opts, |addr| tx.send(addr).unwrap()));
    let addr = rx.recv().unwrap();

    let (mut ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_millis(50))).unwrap();
    }
    send(&mut ws, ClientCommand::new(CommandKind::Cerci));
    send(&mut ws, ClientCommand::new(CommandKind::Right));
    send(&mut ws, ClientCommand::new(CommandKind::AutopilotOn));

    let started = Instant::now();
    let mut telemetry = 0;
    while started.elapsed() < Duration::from_secs(10) {
        let Ok(Message::Text(text)) = ws.read() else {
            continue;
        };
        match serde_json::from_str::<ServerMessage>(&text).unwrap() {
            ServerMessage::Telemetry {
                t_ms,
                x,
                y,
                heading,
                ..
            } => {
                telemetry += 1;
                if telemetry % 60 == 0 {
                    println!(
                        "t {:7.0} ms  ({x:7.1}, {y:7.1})  heading {heading:6.1}",
                        t_ms
                    );
                }
            }
            ServerMessage::Event {
                event: Event::Heartbeat { .. },
                ..
            } => {}
            m @ ServerMessage::Event {
                event: Event::GoalReached { .. },
                ..
            } => {
                println!("{}", m.to_json());
                break;
            }
            other => println!("{}", other.to_json()),
        }
    }
    let _ = ws.close(None);
    drop(ws);
    let report = server.join().unwrap().unwrap();
    println!(
        "{telemetry} telemetry frames; server sent {} frames, dropped {}",
        report.frames_sent, report.frames_dropped
    );
}
