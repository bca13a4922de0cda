//! Replayable session logs and the scripted call-and-response driver.
//!
//! Logs are JSONL, one entry per line, tagged by `kind`:
//!
//! ```text
//! {"kind":"seed","seed":7,"algorithm":"chacha8"}
//! {"kind":"input","t":0.0,"channel":0,"value":0.5}
//! {"kind":"mode","t":0.1,"mode":"model"}
//! {"kind":"output","t":0.12,"channel":3,"value":0.41,"source":"model","midi":[176,72,52]}
//! {"kind":"param","t":0.5,"message":{...}}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::domain::{ControlEvent, Source};
use crate::error::{Error, Result};
use crate::interaction::{InteractionConfig, InteractionState, LoopMode};
use crate::mdrnn::MdrnnModel;
use crate::rng::{Rng, ALGORITHM};
use crate::router::protocol::{parse_message, Command, WireMessage};
use crate::router::MappingTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Seed {
        seed: u64,
        algorithm: String,
    },
    Input {
        t: f64,
        channel: usize,
        value: f64,
    },
    Mode {
        t: f64,
        mode: LoopMode,
    },
    Output {
        t: f64,
        channel: usize,
        value: f64,
        source: Source,
        /// Raw bytes sent to the devices, synth message first.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        midi: Vec<u8>,
    },
    Param {
        t: f64,
        message: WireMessage,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionLog {
    pub entries: Vec<LogEntry>,
}

impl SessionLog {
    pub fn push(&mut self, entry: LogEntry) {
        self.entries.push(entry);
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&entry_line(e));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::parse(format!("session log line {}", n + 1), e)))
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn mode_changes(&self) -> Vec<(f64, LoopMode)> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                LogEntry::Mode { t, mode } => Some((*t, *mode)),
                _ => None,
            })
            .collect()
    }

    pub fn outputs(&self) -> impl Iterator<Item = ControlEvent> + '_ {
        self.entries.iter().filter_map(|e| match e {
            LogEntry::Output {
                t,
                channel,
                value,
                source,
                ..
            } => Some(ControlEvent {
                time: *t,
                channel: *channel,
                value: *value,
                source: *source,
            }),
            _ => None,
        })
    }
}

pub fn entry_line(entry: &LogEntry) -> String {
    serde_json::to_string(entry).expect("log entries always serialize")
}

/// Streaming log sink used by the live engine.
pub struct LogWriter<W: Write> {
    out: W,
}

impl<W: Write> LogWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, entry: &LogEntry) -> std::io::Result<()> {
        writeln!(self.out, "{}", entry_line(entry))
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

/// Read a user script: JSONL of `control` protocol messages in time order.
pub fn read_user_script(path: impl AsRef<Path>) -> Result<Vec<ControlEvent>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_message(&line).map_err(|e| Error::parse(format!("user script line {}", n + 1), e))? {
            Command::Control(ev) if ev.source == Source::Human => events.push(ev),
            _ => {
                return Err(Error::parse(
                    format!("user script line {}", n + 1),
                    "only human `control` messages are allowed",
                ))
            }
        }
    }
    Ok(events)
}

/// Drive the interaction machine from a script under the simulated clock.
///
/// Each tick first delivers every scripted event due by then, then ticks
/// the state machine, so a human event always beats a model event due on
/// the same tick. The run lasts until the later of the last scripted event
/// and `config.simulation_seconds`.
pub fn simulate(
    model: &MdrnnModel,
    config: &InteractionConfig,
    mapping: &MappingTable,
    script: &[ControlEvent],
    seed: u64,
) -> Result<SessionLog> {
    let mut rng = Rng::seeded(seed);
    let mut log = SessionLog::default();
    log.push(LogEntry::Seed {
        seed,
        algorithm: ALGORITHM.into(),
    });
    let mut state = InteractionState::new(config.clone(), model)?;
    let mut clock = Clock::new(config.tick);
    let end = script
        .iter()
        .map(|e| e.time)
        .fold(config.simulation_seconds, f64::max);
    let last_tick = (end / config.tick).ceil() as u64;

    let mut next = 0;
    for k in 0..=last_tick {
        if k > 0 {
            clock.advance();
        }
        let now = clock.now();
        while next < script.len() && script[next].time <= now + 1e-12 {
            let ev = &script[next];
            log.push(LogEntry::Input {
                t: ev.time,
                channel: ev.channel,
                value: ev.value,
            });
            let before = state.mode();
            let out = state.on_user_event(ev, model)?;
            if state.mode() != before {
                log.push(LogEntry::Mode {
                    t: ev.time,
                    mode: state.mode(),
                });
            }
            push_outputs(&mut log, mapping, &out);
            next += 1;
        }
        let before = state.mode();
        let out = state.tick(&clock, model, &mut rng)?;
        if state.mode() != before {
            log.push(LogEntry::Mode {
                t: now,
                mode: state.mode(),
            });
        }
        push_outputs(&mut log, mapping, &out);
    }
    Ok(log)
}

pub(crate) fn output_entry(mapping: &MappingTable, ev: &ControlEvent) -> LogEntry {
    LogEntry::Output {
        t: ev.time,
        channel: ev.channel,
        value: ev.value,
        source: ev.source,
        midi: mapping.route_out(ev).iter().flat_map(|m| m.encode()).collect(),
    }
}

fn push_outputs(log: &mut SessionLog, mapping: &MappingTable, events: &[ControlEvent]) {
    for ev in events {
        log.push(output_entry(mapping, ev));
    }
}
