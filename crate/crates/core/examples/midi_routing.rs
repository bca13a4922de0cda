//! Map model output onto the synth and pad controller, put it on the wire
//! and read it back as performer input.

use dualloop::clock::Clock;
use dualloop::domain::{ControlEvent, Source};
use dualloop::router::midi::MidiFramer;
use dualloop::router::{MappingTable, MidiMessage};

fn main() -> dualloop::Result<()> {
    let table = MappingTable::default();
    let events = [
        ControlEvent::new(0.0, 0, 0.5, Source::Model)?,
        ControlEvent::new(0.0, 3, 1.0, Source::Model)?,
        ControlEvent::new(0.0, 7, 0.25, Source::Model)?,
    ];
    let mut wire = Vec::new();
    for ev in &events {
        for msg in table.route_out(ev) {
            let bytes = msg.encode();
            println!("ch{} {:.2} -> {:?} {:02X?}", ev.channel, ev.value, msg.kind, bytes);
            wire.extend_from_slice(&bytes);
        }
    }

    // Bytes can arrive in arbitrary chunks; the framer reassembles them.
    let mut framer = MidiFramer::new();
    let mut clock = Clock::default();
    clock.advance();
    for chunk in wire.chunks(4) {
        for msg in framer.push(chunk) {
            let msg: MidiMessage = msg?;
            if let Some(ev) = table.route_in(&msg, &clock) {
                println!("in  {:02X?} -> ch{} {:.3} at {}s", msg.encode(), ev.channel, ev.value, ev.time);
            }
        }
    }
    Ok(())
}
