//! Mapping between the eight model channels and the two devices: a synth
//! (channel 0 plays notes, channels 1..7 drive timbre CCs) and a pad
//! controller whose eight LED sliders mirror every channel.

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::domain::{ControlEvent, Source, CONTROL_CHANNELS};
use crate::error::{Error, Result};

use super::midi::{MidiKind, MidiMessage};

/// Fixed velocity for generated notes.
pub const NOTE_VELOCITY: u8 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum Target {
    SynthNote,
    SynthTimbre { cc: u8 },
    PadSlider { index: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingTable {
    /// MIDI channel of the synthesiser.
    pub synth_channel: u8,
    /// CC numbers driven by model channels 1..7.
    pub timbre_ccs: [u8; CONTROL_CHANNELS - 1],
    /// MIDI channel of the pad controller.
    pub pad_channel: u8,
    /// Slider `i` is CC `pad_cc_base + i` on the pad channel.
    pub pad_cc_base: u8,
}

impl Default for MappingTable {
    fn default() -> Self {
        Self {
            synth_channel: 0,
            timbre_ccs: [74, 71, 73, 72, 75, 76, 77],
            pad_channel: 1,
            pad_cc_base: 20,
        }
    }
}

/// 0..=1 to 0..=127, rounding halves up.
pub fn quantize(value: f64) -> u8 {
    (value.clamp(0.0, 1.0) * 127.0 + 0.5).floor().min(127.0) as u8
}

impl MappingTable {
    pub fn validate(&self) -> Result<()> {
        if self.synth_channel > 15 || self.pad_channel > 15 {
            return Err(Error::config("mapping MIDI channels must be 0..=15"));
        }
        if self.timbre_ccs.iter().any(|cc| *cc > 127) {
            return Err(Error::config("timbre CC numbers must be 0..=127"));
        }
        if usize::from(self.pad_cc_base) + CONTROL_CHANNELS > 128 {
            return Err(Error::config("pad_cc_base leaves no room for eight sliders"));
        }
        let mut seen = self.timbre_ccs.to_vec();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.timbre_ccs.len() {
            return Err(Error::config("timbre CC numbers must be distinct"));
        }
        if self.synth_channel == self.pad_channel {
            let pads = self.pad_cc_base..self.pad_cc_base + CONTROL_CHANNELS as u8;
            if self.timbre_ccs.iter().any(|cc| pads.contains(cc)) {
                return Err(Error::config("timbre CCs collide with pad sliders on a shared channel"));
            }
        }
        Ok(())
    }

    /// Synth-side target of a model channel.
    pub fn synth_target(&self, channel: usize) -> Target {
        match channel {
            0 => Target::SynthNote,
            c => Target::SynthTimbre {
                cc: self.timbre_ccs[c - 1],
            },
        }
    }

    /// Both targets of a model channel: synth first, then the pad mirror.
    pub fn targets(&self, channel: usize) -> [Target; 2] {
        [
            self.synth_target(channel),
            Target::PadSlider {
                index: channel as u8,
            },
        ]
    }

    fn message(&self, target: Target, value: u8) -> MidiMessage {
        let (kind, ch, d1, d2) = match target {
            Target::SynthNote => (MidiKind::NoteOn, self.synth_channel, value, NOTE_VELOCITY),
            Target::SynthTimbre { cc } => (MidiKind::ControlChange, self.synth_channel, cc, value),
            Target::PadSlider { index } => (MidiKind::ControlChange, self.pad_channel, self.pad_cc_base + index, value),
        };
        MidiMessage {
            kind,
            channel: ch,
            data1: d1,
            data2: d2,
        }
    }

    /// One message for the synth, one for the mirrored pad slider.
    pub fn route_out(&self, ev: &ControlEvent) -> Vec<MidiMessage> {
        let value = quantize(ev.value);
        self.targets(ev.channel)
            .into_iter()
            .map(|t| self.message(t, value))
            .collect()
    }

    /// Map an incoming device message to a human control event, if mapped.
    /// Note-ons with velocity 0 are note-offs by convention and ignored.
    pub fn route_in(&self, msg: &MidiMessage, clock: &Clock) -> Option<ControlEvent> {
        let channel = self.channel_for(msg)?;
        let raw = match msg.kind {
            MidiKind::NoteOn => msg.data1,
            _ => msg.data2,
        };
        Some(ControlEvent {
            time: clock.now(),
            channel,
            value: f64::from(raw) / 127.0,
            source: Source::Human,
        })
    }

    fn channel_for(&self, msg: &MidiMessage) -> Option<usize> {
        match msg.kind {
            MidiKind::NoteOn if msg.channel == self.synth_channel && msg.data2 > 0 => Some(0),
            MidiKind::ControlChange => {
                if msg.channel == self.pad_channel
                    && (self.pad_cc_base..self.pad_cc_base + CONTROL_CHANNELS as u8).contains(&msg.data1)
                {
                    return Some(usize::from(msg.data1 - self.pad_cc_base));
                }
                if msg.channel == self.synth_channel {
                    return self
                        .timbre_ccs
                        .iter()
                        .position(|cc| *cc == msg.data1)
                        .map(|i| i + 1);
                }
                None
            }
            _ => None,
        }
    }
}
