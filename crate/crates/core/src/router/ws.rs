//! WebSocket bridge between the engine and any number of control surfaces.
//!
//! Each connection gets its own thread. Inbound messages are parsed and
//! forwarded on one channel; outbound messages are broadcast to every
//! client. A malformed or invalid message closes that connection with a
//! protocol-error close frame (1002).

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use tungstenite::protocol::frame::coding::CloseCode;
use tungstenite::protocol::CloseFrame;
use tungstenite::{Message, WebSocket};

use crate::error::{Error, Result};

use super::protocol::{parse_message, Command};

const POLL: Duration = Duration::from_millis(5);

type Clients = Arc<Mutex<Vec<Sender<String>>>>;

pub struct Bridge {
    local_addr: SocketAddr,
    inbound: Receiver<Command>,
    clients: Clients,
    shutdown: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
    protocol_errors: Arc<Mutex<Vec<String>>>,
}

impl Bridge {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self> {
        let listener = TcpListener::bind(addr).map_err(|e| Error::io("websocket bind", e))?;
        listener
            .set_nonblocking(true)
            .map_err(|e| Error::io("websocket bind", e))?;
        let local_addr = listener
            .local_addr()
            .map_err(|e| Error::io("websocket bind", e))?;
        let (tx, inbound) = mpsc::channel();
        let clients: Clients = Arc::default();
        let shutdown = Arc::new(AtomicBool::new(false));
        let protocol_errors: Arc<Mutex<Vec<String>>> = Arc::default();

        let acceptor = {
            let clients = clients.clone();
            let shutdown = shutdown.clone();
            let errors = protocol_errors.clone();
            thread::Builder::new()
                .name("ws-accept".into())
                .spawn(move || accept_loop(listener, tx, clients, shutdown, errors))
                .map_err(|e| Error::io("websocket thread", e))?
        };
        Ok(Self {
            local_addr,
            inbound,
            clients,
            shutdown,
            acceptor: Some(acceptor),
            protocol_errors,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn try_recv(&self) -> Option<Command> {
        self.inbound.try_recv().ok()
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<Command> {
        self.inbound.recv_timeout(timeout).ok()
    }

    /// Send to every connected client; disconnected clients are dropped.
    pub fn broadcast(&self, cmd: &Command) {
        let text = cmd.to_json();
        let mut clients = self.clients.lock().expect("client list poisoned");
        clients.retain(|c| c.send(text.clone()).is_ok());
    }

    pub fn client_count(&self) -> usize {
        self.clients.lock().map(|c| c.len()).unwrap_or(0)
    }

    /// Descriptions of messages that caused a connection to be closed.
    pub fn protocol_errors(&self) -> Vec<String> {
        self.protocol_errors.lock().map(|e| e.clone()).unwrap_or_default()
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Bridge {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(
    listener: TcpListener,
    tx: Sender<Command>,
    clients: Clients,
    shutdown: Arc<AtomicBool>,
    errors: Arc<Mutex<Vec<String>>>,
) {
    let mut workers = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let (out_tx, out_rx) = mpsc::channel();
                let tx = tx.clone();
                let shutdown = shutdown.clone();
                let errors = errors.clone();
                let clients = clients.clone();
                workers.push(thread::spawn(move || {
                    let Ok(ws) = handshake(stream) else { return };
                    clients.lock().expect("client list poisoned").push(out_tx);
                    serve(ws, tx, out_rx, shutdown, errors);
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(_) => thread::sleep(POLL),
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

fn handshake(stream: TcpStream) -> std::result::Result<WebSocket<TcpStream>, ()> {
    stream.set_nonblocking(false).map_err(|_| ())?;
    let ws = tungstenite::accept(stream).map_err(|_| ())?;
    ws.get_ref().set_read_timeout(Some(POLL)).map_err(|_| ())?;
    Ok(ws)
}

fn serve(
    mut ws: WebSocket<TcpStream>,
    tx: Sender<Command>,
    outbound: Receiver<String>,
    shutdown: Arc<AtomicBool>,
    errors: Arc<Mutex<Vec<String>>>,
) {
    loop {
        if shutdown.load(Ordering::SeqCst) {
            let _ = ws.close(Some(CloseFrame {
                code: CloseCode::Away,
                reason: "engine shutting down".into(),
            }));
            let _ = ws.flush();
            return;
        }
        while let Ok(text) = outbound.try_recv() {
            if ws.send(Message::text(text)).is_err() {
                return;
            }
        }
        match ws.read() {
            Ok(Message::Text(text)) => match parse_message(text.as_str()) {
                Ok(cmd) => {
                    if tx.send(cmd).is_err() {
                        return;
                    }
                }
                Err(e) => {
                    let reason = e.to_string();
                    errors.lock().expect("error list poisoned").push(reason.clone());
                    let mut reason = reason;
                    let mut cut = reason.len().min(120);
                    while !reason.is_char_boundary(cut) {
                        cut -= 1;
                    }
                    reason.truncate(cut);
                    let _ = ws.close(Some(CloseFrame {
                        code: CloseCode::Protocol,
                        reason: reason.into(),
                    }));
                    drain_close(&mut ws);
                    return;
                }
            },
            Ok(Message::Close(_)) => {
                drain_close(&mut ws);
                return;
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(_) => return,
        }
    }
}

fn drain_close(ws: &mut WebSocket<TcpStream>) {
    for _ in 0..200 {
        match ws.read() {
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) =>
            {
                let _ = ws.flush();
            }
            Err(_) => return,
        }
    }
}
