//! Virtual MIDI ports. Every port carries the same raw 3-byte stream a
//! hardware port would, backed by a file or a TCP socket.
//!
//! Port specs, as written in the config file:
//!
//! - `none`
//! - `file:PATH` (out: append bytes; in: replay the file's bytes once)
//! - `tcp:HOST:PORT` (connect)
//! - `tcp-listen:HOST:PORT` (accept connections)

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::error::{Error, Result};

use super::midi::{MidiFramer, MidiMessage};

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PortSpec {
    #[default]
    None,
    File(PathBuf),
    Tcp(String),
    TcpListen(String),
}

impl FromStr for PortSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(PortSpec::None);
        }
        if let Some(p) = s.strip_prefix("file:") {
            return Ok(PortSpec::File(p.into()));
        }
        if let Some(a) = s.strip_prefix("tcp-listen:") {
            return Ok(PortSpec::TcpListen(a.into()));
        }
        if let Some(a) = s.strip_prefix("tcp:") {
            return Ok(PortSpec::Tcp(a.into()));
        }
        Err(Error::config(format!("unrecognized port spec `{s}`")))
    }
}

impl TryFrom<String> for PortSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PortSpec> for String {
    fn from(p: PortSpec) -> String {
        p.to_string()
    }
}

impl fmt::Display for PortSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortSpec::None => write!(f, "none"),
            PortSpec::File(p) => write!(f, "file:{}", p.display()),
            PortSpec::Tcp(a) => write!(f, "tcp:{a}"),
            PortSpec::TcpListen(a) => write!(f, "tcp-listen:{a}"),
        }
    }
}

/// In-memory byte sink shared between a port and a test harness.
#[derive(Debug, Clone, Default)]
pub struct SharedBuffer(Arc<Mutex<Vec<u8>>>);

impl SharedBuffer {
    pub fn contents(&self) -> Vec<u8> {
        self.0.lock().map(|b| b.clone()).unwrap_or_default()
    }
}

impl Write for SharedBuffer {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0
            .lock()
            .map_err(|_| io::Error::other("buffer poisoned"))?
            .extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

pub struct MidiOut {
    sink: Box<dyn Write + Send>,
    label: String,
    sent: usize,
}

impl MidiOut {
    /// `Ok(None)` for `PortSpec::None`.
    pub fn open(spec: &PortSpec) -> Result<Option<Self>> {
        let label = spec.to_string();
        let sink: Box<dyn Write + Send> = match spec {
            PortSpec::None => return Ok(None),
            PortSpec::File(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
            PortSpec::Tcp(addr) => Box::new(TcpStream::connect(addr).map_err(|e| Error::io(addr, e))?),
            PortSpec::TcpListen(addr) => {
                let listener = TcpListener::bind(addr).map_err(|e| Error::io(addr, e))?;
                let (stream, _) = listener.accept().map_err(|e| Error::io(addr, e))?;
                Box::new(stream)
            }
        };
        Ok(Some(Self {
            sink,
            label,
            sent: 0,
        }))
    }

    pub fn memory(buffer: SharedBuffer) -> Self {
        Self {
            sink: Box::new(buffer),
            label: "memory".into(),
            sent: 0,
        }
    }

    pub fn send(&mut self, msg: &MidiMessage) -> Result<()> {
        self.sink
            .write_all(&msg.encode())
            .map_err(|e| Error::io(&self.label, e))?;
        self.sent += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.sink.flush().map_err(|e| Error::io(&self.label, e))
    }

    pub fn sent(&self) -> usize {
        self.sent
    }
}

/// Input port read on its own thread; decoded messages arrive on a channel.
/// Undecodable messages are skipped and counted.
pub struct MidiIn {
    rx: Receiver<MidiMessage>,
    rejected: Arc<Mutex<usize>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MidiIn {
    pub fn open(spec: &PortSpec) -> Result<Option<Self>> {
        let (tx, rx) = mpsc::channel();
        let rejected = Arc::new(Mutex::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = match spec {
            PortSpec::None => return Ok(None),
            PortSpec::File(p) => {
                let file = File::open(p).map_err(|e| Error::io(p, e))?;
                spawn_reader(file, tx, rejected.clone(), stop.clone())
            }
            PortSpec::Tcp(addr) => {
                let stream = TcpStream::connect(addr).map_err(|e| Error::io(addr, e))?;
                stream
                    .set_read_timeout(Some(Duration::from_millis(20)))
                    .map_err(|e| Error::io(addr, e))?;
                spawn_reader(stream, tx, rejected.clone(), stop.clone())
            }
            PortSpec::TcpListen(addr) => {
                let listener = TcpListener::bind(addr).map_err(|e| Error::io(addr, e))?;
                listener
                    .set_nonblocking(true)
                    .map_err(|e| Error::io(addr, e))?;
                let (rejected, stop) = (rejected.clone(), stop.clone());
                thread::spawn(move || {
                    while !stop.load(Ordering::SeqCst) {
                        match listener.accept() {
                            Ok((stream, _)) => {
                                let _ = stream.set_nonblocking(false);
                                let _ = stream.set_read_timeout(Some(Duration::from_millis(20)));
                                read_stream(stream, &tx, &rejected, &stop);
                            }
                            Err(_) => thread::sleep(Duration::from_millis(5)),
                        }
                    }
                })
            }
        };
        Ok(Some(Self {
            rx,
            rejected,
            stop,
            handle: Some(handle),
        }))
    }

    pub fn try_recv(&self) -> Option<MidiMessage> {
        self.rx.try_recv().ok()
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<MidiMessage> {
        self.rx.recv_timeout(timeout).ok()
    }

    pub fn rejected(&self) -> usize {
        self.rejected.lock().map(|r| *r).unwrap_or(0)
    }
}

impl Drop for MidiIn {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn spawn_reader<R: Read + Send + 'static>(
    reader: R,
    tx: Sender<MidiMessage>,
    rejected: Arc<Mutex<usize>>,
    stop: Arc<AtomicBool>,
) -> JoinHandle<()> {
    thread::spawn(move || read_stream(reader, &tx, &rejected, &stop))
}

fn read_stream<R: Read>(mut reader: R, tx: &Sender<MidiMessage>, rejected: &Mutex<usize>, stop: &AtomicBool) {
    let mut framer = MidiFramer::new();
    let mut buf = [0u8; 256];
    while !stop.load(Ordering::SeqCst) {
        match reader.read(&mut buf) {
            Ok(0) => return,
            Ok(n) => {
                for msg in framer.push(&buf[..n]) {
                    match msg {
                        Ok(m) => {
                            if tx.send(m).is_err() {
                                return;
                            }
                        }
                        Err(_) => {
                            if let Ok(mut r) = rejected.lock() {
                                *r += 1;
                            }
                        }
                    }
                }
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(_) => return,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_specs() {
        assert_eq!("none".parse::<PortSpec>().unwrap(), PortSpec::None);
        assert_eq!(
            "file:/tmp/x.midi".parse::<PortSpec>().unwrap(),
            PortSpec::File("/tmp/x.midi".into())
        );
        assert_eq!(
            "tcp-listen:127.0.0.1:0".parse::<PortSpec>().unwrap(),
            PortSpec::TcpListen("127.0.0.1:0".into())
        );
        assert!("serial:/dev/tty".parse::<PortSpec>().is_err());
        let s = PortSpec::Tcp("localhost:9000".into());
        assert_eq!(s.to_string().parse::<PortSpec>().unwrap(), s);
    }

    #[test]
    fn file_ports_carry_raw_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("port.midi");
        let spec = PortSpec::File(path.clone());
        let msgs = [
            MidiMessage::note_on(0, 64, 100).unwrap(),
            MidiMessage::control_change(1, 22, 5).unwrap(),
        ];
        {
            let mut out = MidiOut::open(&spec).unwrap().unwrap();
            for m in &msgs {
                out.send(m).unwrap();
            }
            out.flush().unwrap();
            assert_eq!(out.sent(), 2);
        }
        assert_eq!(
            std::fs::read(&path).unwrap(),
            vec![0x90, 64, 100, 0xB1, 22, 5]
        );
        let input = MidiIn::open(&spec).unwrap().unwrap();
        let got: Vec<_> = (0..2)
            .map(|_| input.recv_timeout(Duration::from_secs(2)).unwrap())
            .collect();
        assert_eq!(got, msgs);
    }

    #[test]
    fn tcp_input_skips_unsupported() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let writer = thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            s.write_all(&[0xC0, 1, 2, 0xB0, 7, 100]).unwrap();
        });
        let input = MidiIn::open(&PortSpec::Tcp(addr)).unwrap().unwrap();
        let m = input.recv_timeout(Duration::from_secs(2)).unwrap();
        assert_eq!(m, MidiMessage::control_change(0, 7, 100).unwrap());
        writer.join().unwrap();
        thread::sleep(Duration::from_millis(50));
        assert_eq!(input.rejected(), 1);
    }

    #[test]
    fn memory_port() {
        let buf = SharedBuffer::default();
        let mut out = MidiOut::memory(buf.clone());
        out.send(&MidiMessage::control_change(0, 7, 100).unwrap()).unwrap();
        assert_eq!(buf.contents(), vec![0xB0, 0x07, 0x64]);
    }
}
