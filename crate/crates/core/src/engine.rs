//! Live engine: both instrument paths under a wall-clock tick.
//!
//! Threads:
//!
//! - audio: one latent-feedback window per `hop / sample_rate` seconds
//! - interaction: the call-and-response machine, one tick per `tick` seconds
//! - midi-out: owns the output port
//! - log: appends the session log and flushes after every batch
//!
//! The calling thread owns the WebSocket bridge and the MIDI input, stamps
//! inbound events with engine time and dispatches them. Everything else
//! travels over channels. Shutdown stops the producers, lets each consumer
//! drain its queue, then writes the output WAV and the log.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::clock::Clock;
use crate::codec::CodecModel;
use crate::config::EngineConfig;
use crate::domain::{AudioWindow, ControlEvent, Source};
use crate::error::{Error, Result};
use crate::feedback::{trace_csv_header, trace_csv_row, LatentFeedbackLoop};
use crate::interaction::{InteractionState, LoopMode};
use crate::mdrnn::MdrnnModel;
use crate::render::apply_command;
use crate::rng::{Rng, ALGORITHM};
use crate::router::ports::{MidiIn, MidiOut};
use crate::router::protocol::Command;
use crate::router::wav::write_samples;
use crate::router::ws::Bridge;
use crate::router::{MappingTable, MidiMessage};
use crate::session::{output_entry, LogEntry, LogWriter};

const ROUTER_POLL: Duration = Duration::from_millis(2);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub seconds: f64,
    pub windows: usize,
    pub human_events: usize,
    pub model_events: usize,
    pub bridge_address: Option<String>,
}

enum ControlMsg {
    Event(ControlEvent),
    Mode(LoopMode),
}

/// Engine time shared by every thread.
#[derive(Clone, Copy)]
struct Epoch(Instant);

impl Epoch {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }

    fn sleep_until(&self, seconds: f64) {
        let target = self.0 + Duration::from_secs_f64(seconds.max(0.0));
        let now = Instant::now();
        if target > now {
            thread::sleep(target - now);
        }
    }
}

struct Shared {
    stop: Arc<AtomicBool>,
    log: Sender<LogEntry>,
    broadcast: Sender<Command>,
    epoch: Epoch,
    model_events: Arc<AtomicUsize>,
}

/// Run until `stop` is set or `config.run.duration` elapses.
/// `on_ready` receives the bridge address once everything is bound.
pub fn run(
    config: &EngineConfig,
    seed: u64,
    stop: Arc<AtomicBool>,
    on_ready: impl FnOnce(Option<std::net::SocketAddr>),
) -> Result<RunSummary> {
    let mut rng = Rng::seeded(seed);
    let codec = config.run.audio.then(|| config.codec_model(&mut rng)).transpose()?;
    let mdrnn = config.run.control.then(|| config.mdrnn_model(&mut rng)).transpose()?;
    let audio_rng = rng.fork();
    let control_rng = rng.fork();

    let log_path = config.resolve(&config.run.session_log);
    let log_file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let (log_tx, log_rx) = mpsc::channel();
    log_tx
        .send(LogEntry::Seed {
            seed,
            algorithm: ALGORITHM.into(),
        })
        .expect("log receiver alive");
    let halt = Arc::new(AtomicBool::new(false));
    let log_thread = spawn("log", &halt, move || log_loop(LogWriter::new(BufWriter::new(log_file)), log_rx))?;

    let bridge = if config.server.enabled {
        Some(Bridge::bind(config.server.bind.as_str())?)
    } else {
        None
    };
    let midi_in = MidiIn::open(&config.router.midi_in)?;

    let (broadcast_tx, broadcast_rx) = mpsc::channel::<Command>();
    let epoch = Epoch(Instant::now());
    let model_events = Arc::new(AtomicUsize::new(0));
    let shared = || Shared {
        stop: halt.clone(),
        log: log_tx.clone(),
        broadcast: broadcast_tx.clone(),
        epoch,
        model_events: model_events.clone(),
    };

    let (midi_tx, midi_rx) = mpsc::channel::<MidiMessage>();
    let midi_spec = config.router.midi_out.clone();
    let midi_thread = spawn("midi-out", &halt, move || midi_out_loop(MidiOut::open(&midi_spec)?, midi_rx))?;

    let mut audio_tx = None;
    let mut audio_thread = None;
    if let Some(codec) = codec {
        let (tx, rx) = mpsc::channel();
        audio_tx = Some(tx);
        let input = match &config.run.input_wav {
            Some(p) => Some(crate::router::wav::read_samples(config.resolve(p))?),
            None => None,
        };
        let output = config.run.output_wav.as_ref().map(|p| config.resolve(p));
        let trace = config.run.trace_csv.as_ref().map(|p| config.resolve(p));
        let fb = LatentFeedbackLoop::new(codec.clone(), &config.feedback)?;
        let s = shared();
        audio_thread = Some(spawn("audio", &halt, move || {
            audio_loop(AudioPath { fb, codec, input, output, trace }, rx, audio_rng, s)
        })?);
    }

    let mut control_tx = None;
    let mut control_thread = None;
    if let Some(model) = mdrnn {
        let (tx, rx) = mpsc::channel();
        control_tx = Some(tx);
        let state = InteractionState::new(config.interaction.clone(), &model)?;
        let mapping = config.router.mapping.clone();
        let (s, midi) = (shared(), midi_tx.clone());
        control_thread = Some(spawn("interaction", &halt, move || {
            control_loop(state, model, mapping, rx, midi, control_rng, s)
        })?);
    }
    drop(midi_tx);

    let bridge_address = bridge.as_ref().map(Bridge::local_addr);
    on_ready(bridge_address);

    let mut human_events = 0;
    let deadline = config.run.duration;
    loop {
        let mut idle = true;
        if let Some(midi) = &midi_in {
            while let Some(msg) = midi.try_recv() {
                idle = false;
                if let Some(mut ev) = config.router.mapping.route_in(&msg, &Clock::default()) {
                    ev.time = epoch.now();
                    human_events += 1;
                    if let Some(tx) = &control_tx {
                        let _ = tx.send(ControlMsg::Event(ev));
                    }
                }
            }
        }
        if let Some(b) = &bridge {
            while let Some(cmd) = b.try_recv() {
                idle = false;
                let now = epoch.now();
                match cmd {
                    Command::Control(ev) => {
                        human_events += 1;
                        let ev = ControlEvent {
                            time: now,
                            source: Source::Human,
                            ..ev
                        };
                        if let Some(tx) = &control_tx {
                            let _ = tx.send(ControlMsg::Event(ev));
                        }
                    }
                    Command::Mode { mode, .. } => {
                        if let Some(tx) = &control_tx {
                            let _ = tx.send(ControlMsg::Mode(mode));
                        }
                    }
                    Command::Trace { .. } => {}
                    other => {
                        if let Some(tx) = &audio_tx {
                            let _ = tx.send(other);
                        }
                    }
                }
            }
            while let Ok(cmd) = broadcast_rx.try_recv() {
                b.broadcast(&cmd);
            }
        } else {
            while broadcast_rx.try_recv().is_ok() {}
        }
        let finished = stop.load(Ordering::SeqCst)
            || halt.load(Ordering::SeqCst)
            || deadline.is_some_and(|d| epoch.now() >= d);
        if finished {
            break;
        }
        if idle {
            thread::sleep(ROUTER_POLL);
        }
    }

    halt.store(true, Ordering::SeqCst);
    drop(audio_tx);
    drop(control_tx);
    let mut first_error = None;
    let windows = join(audio_thread, &mut first_error).unwrap_or(0);
    join(control_thread, &mut first_error);
    join(Some(midi_thread), &mut first_error);
    let seconds = epoch.now();
    drop(log_tx);
    join(Some(log_thread), &mut first_error);
    if let Some(b) = bridge {
        b.shutdown();
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    Ok(RunSummary {
        seed,
        seconds,
        windows,
        human_events,
        model_events: model_events.load(Ordering::SeqCst),
        bridge_address: bridge_address.map(|a| a.to_string()),
    })
}

/// Spawn a worker; an error in it stops the whole engine.
fn spawn<T: Send + 'static>(
    name: &str,
    halt: &Arc<AtomicBool>,
    f: impl FnOnce() -> Result<T> + Send + 'static,
) -> Result<JoinHandle<Result<T>>> {
    let halt = halt.clone();
    thread::Builder::new()
        .name(name.into())
        .spawn(move || {
            let out = f();
            if out.is_err() {
                halt.store(true, Ordering::SeqCst);
            }
            out
        })
        .map_err(|e| Error::io(format!("{name} thread"), e))
}

fn join<T>(handle: Option<JoinHandle<Result<T>>>, first_error: &mut Option<Error>) -> Option<T> {
    match handle?.join() {
        Ok(Ok(v)) => Some(v),
        Ok(Err(e)) => {
            first_error.get_or_insert(e);
            None
        }
        Err(_) => {
            first_error.get_or_insert(Error::Numerical {
                block: "engine".into(),
                detail: "worker thread panicked".into(),
            });
            None
        }
    }
}

fn log_loop<W: Write>(mut writer: LogWriter<W>, rx: Receiver<LogEntry>) -> Result<()> {
    let io = |e| Error::io("session log", e);
    while let Ok(entry) = rx.recv() {
        writer.write(&entry).map_err(io)?;
        while let Ok(more) = rx.try_recv() {
            writer.write(&more).map_err(io)?;
        }
        writer.flush().map_err(io)?;
    }
    writer.flush().map_err(io)
}

fn midi_out_loop(port: Option<MidiOut>, rx: Receiver<MidiMessage>) -> Result<()> {
    let Some(mut port) = port else {
        while rx.recv().is_ok() {}
        return Ok(());
    };
    while let Ok(msg) = rx.recv() {
        port.send(&msg)?;
        while let Ok(more) = rx.try_recv() {
            port.send(&more)?;
        }
        port.flush()?;
    }
    port.flush()
}

struct AudioPath {
    fb: LatentFeedbackLoop,
    codec: CodecModel,
    input: Option<(Vec<f64>, u32)>,
    output: Option<std::path::PathBuf>,
    trace: Option<std::path::PathBuf>,
}

fn audio_loop(mut path: AudioPath, rx: Receiver<Command>, mut rng: Rng, shared: Shared) -> Result<usize> {
    let config = path.codec.config.clone();
    let (size, hop, rate) = (config.window_size, config.hop, config.sample_rate);
    let period = hop as f64 / f64::from(rate);
    let mut trace = match &path.trace {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?);
            writeln!(w, "{}", trace_csv_header(config.latent_dims)).map_err(|e| Error::io(p, e))?;
            Some(w)
        }
        None => None,
    };
    let mut produced = Vec::new();
    let mut cursor = 0usize;
    let mut index = 0u64;
    while !shared.stop.load(Ordering::SeqCst) {
        let start = index as f64 * period;
        shared.epoch.sleep_until(start);
        while let Ok(cmd) = rx.try_recv() {
            if let Err(e) = apply_command(&mut path.fb, &cmd) {
                eprintln!("dualloop: ignoring {}: {e}", cmd.to_json());
                continue;
            }
            let _ = shared.log.send(LogEntry::Param {
                t: start,
                message: cmd.to_wire(),
            });
        }
        let dry = match &path.input {
            Some((samples, _)) if !samples.is_empty() => {
                let w = (0..size).map(|i| samples[(cursor + i) % samples.len()]).collect();
                cursor = (cursor + hop) % samples.len();
                AudioWindow::new(w, rate, index)
            }
            _ => AudioWindow::silent(size, rate, index),
        };
        let (out, params) = path.fb.process(&dry, &mut rng)?;
        produced.extend_from_slice(&out.samples[..hop]);
        if let (Some(w), Some(p)) = (trace.as_mut(), path.trace.as_ref()) {
            writeln!(w, "{}", trace_csv_row(index, &params)).map_err(|e| Error::io(p, e))?;
        }
        let _ = shared.broadcast.send(Command::Trace {
            t: start,
            means: params.mean.clone(),
        });
        index += 1;
    }
    if let (Some(mut w), Some(p)) = (trace, path.trace.as_ref()) {
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    if let Some(p) = &path.output {
        write_samples(p, &produced, rate)?;
    }
    Ok(index as usize)
}

fn control_loop(
    mut state: InteractionState,
    model: MdrnnModel,
    mapping: MappingTable,
    rx: Receiver<ControlMsg>,
    midi: Sender<MidiMessage>,
    mut rng: Rng,
    shared: Shared,
) -> Result<()> {
    let mut clock = Clock::new(state.config().tick);
    let mut last_time = 0.0f64;
    let emit = |events: &[ControlEvent], shared: &Shared| {
        for ev in events {
            for msg in mapping.route_out(ev) {
                let _ = midi.send(msg);
            }
            let _ = shared.log.send(output_entry(&mapping, ev));
            let _ = shared.broadcast.send(Command::Control(*ev));
            if ev.source == Source::Model {
                shared.model_events.fetch_add(1, Ordering::SeqCst);
            }
        }
    };
    let note_mode = |before: LoopMode, t: f64, state: &InteractionState, shared: &Shared| {
        if state.mode() != before {
            let _ = shared.log.send(LogEntry::Mode { t, mode: state.mode() });
            let _ = shared.broadcast.send(Command::Mode { t, mode: state.mode() });
        }
    };
    while !shared.stop.load(Ordering::SeqCst) {
        shared.epoch.sleep_until(clock.now() + clock.tick_len());
        clock.advance();
        let now = clock.now();
        while let Ok(msg) = rx.try_recv() {
            let before = state.mode();
            match msg {
                ControlMsg::Event(mut ev) => {
                    ev.time = ev.time.clamp(last_time, now);
                    last_time = ev.time;
                    let _ = shared.log.send(LogEntry::Input {
                        t: ev.time,
                        channel: ev.channel,
                        value: ev.value,
                    });
                    let out = state.on_user_event(&ev, &model)?;
                    note_mode(before, ev.time, &state, &shared);
                    emit(&out, &shared);
                }
                ControlMsg::Mode(mode) => {
                    state.set_mode(mode, now, &model, &mut rng)?;
                    note_mode(before, now, &state, &shared);
                }
            }
        }
        let before = state.mode();
        let out = state.tick(&clock, &model, &mut rng)?;
        note_mode(before, now, &state, &shared);
        if !out.is_empty() {
            last_time = now;
        }
        emit(&out, &shared);
    }
    Ok(())
}
