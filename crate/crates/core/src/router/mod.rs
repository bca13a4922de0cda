//! Device-facing edges: MIDI, the controller mapping, WAV files, virtual
//! ports and the WebSocket bridge.

pub mod mapping;
pub mod midi;
pub mod ports;
pub mod protocol;
pub mod wav;
pub mod ws;

pub use mapping::{MappingTable, Target};
pub use midi::{MidiKind, MidiMessage};
pub use protocol::{parse_message, Command, WireMessage};
