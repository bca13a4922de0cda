//! Three-byte MIDI 1.0 channel messages: note on/off and control change.
//! No running status, no SysEx.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NOTE_OFF: u8 = 0x8;
pub const NOTE_ON: u8 = 0x9;
pub const CONTROL_CHANGE: u8 = 0xB;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MidiKind {
    NoteOn,
    NoteOff,
    ControlChange,
}

impl MidiKind {
    fn nibble(self) -> u8 {
        match self {
            MidiKind::NoteOn => NOTE_ON,
            MidiKind::NoteOff => NOTE_OFF,
            MidiKind::ControlChange => CONTROL_CHANGE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MidiMessage {
    pub kind: MidiKind,
    pub channel: u8,
    pub data1: u8,
    pub data2: u8,
}

impl MidiMessage {
    pub fn new(kind: MidiKind, channel: u8, data1: u8, data2: u8) -> Result<Self> {
        if channel > 15 {
            return Err(Error::Range {
                what: "MIDI channel",
                index: channel.into(),
                limit: 16,
            });
        }
        if data1 > 127 || data2 > 127 {
            return Err(Error::Range {
                what: "MIDI data byte",
                index: data1.max(data2).into(),
                limit: 128,
            });
        }
        Ok(Self {
            kind,
            channel,
            data1,
            data2,
        })
    }

    pub fn note_on(channel: u8, note: u8, velocity: u8) -> Result<Self> {
        Self::new(MidiKind::NoteOn, channel, note, velocity)
    }

    pub fn control_change(channel: u8, cc: u8, value: u8) -> Result<Self> {
        Self::new(MidiKind::ControlChange, channel, cc, value)
    }

    pub fn encode(&self) -> [u8; 3] {
        [(self.kind.nibble() << 4) | (self.channel & 0x0F), self.data1, self.data2]
    }

    /// Decode the first three bytes of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 3 {
            return Err(Error::MidiFraming(bytes.len()));
        }
        let status = bytes[0];
        let kind = match status >> 4 {
            NOTE_ON => MidiKind::NoteOn,
            NOTE_OFF => MidiKind::NoteOff,
            CONTROL_CHANGE => MidiKind::ControlChange,
            _ => return Err(Error::UnsupportedMidi(status)),
        };
        if bytes[1] > 127 || bytes[2] > 127 {
            return Err(Error::MidiFraming(if bytes[1] > 127 { 1 } else { 2 }));
        }
        Ok(Self {
            kind,
            channel: status & 0x0F,
            data1: bytes[1],
            data2: bytes[2],
        })
    }
}

/// Incremental framer for a byte stream of 3-byte messages. Stray data
/// bytes before a status byte are dropped so the stream resynchronizes.
#[derive(Debug, Default)]
pub struct MidiFramer {
    buf: Vec<u8>,
}

impl MidiFramer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) -> Vec<Result<MidiMessage>> {
        let mut out = Vec::new();
        for &b in bytes {
            if b & 0x80 != 0 {
                self.buf.clear();
            } else if self.buf.is_empty() {
                continue;
            }
            self.buf.push(b);
            if self.buf.len() == 3 {
                out.push(MidiMessage::decode(&self.buf));
                self.buf.clear();
            }
        }
        out
    }

    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}
