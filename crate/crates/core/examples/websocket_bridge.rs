//! Start the control-surface bridge, connect a client, exchange messages
//! both ways and show that a malformed message closes the connection.

use std::time::Duration;

use dualloop::domain::{ControlEvent, Source};
use dualloop::interaction::LoopMode;
use dualloop::router::protocol::Command;
use dualloop::router::ws::Bridge;
use tungstenite::Message;

fn main() -> dualloop::Result<()> {
    let bridge = Bridge::bind("127.0.0.1:0")?;
    let url = format!("ws://{}", bridge.local_addr());
    let (mut client, _) = tungstenite::connect(&url).expect("connect");
    println!("connected to {url}");

    client
        .send(Message::text(r#"{"t":0.0,"type":"control","channel":3,"value":1.0,"extra":"ignored"}"#))
        .expect("send");
    client
        .send(Message::text(r#"{"t":0.0,"type":"latent","dim":2,"value":1.5,"op":"override"}"#))
        .expect("send");
    for _ in 0..2 {
        let cmd = bridge.recv_timeout(Duration::from_secs(2)).expect("message");
        println!("engine received {cmd:?}");
    }

    while bridge.client_count() == 0 {
        std::thread::sleep(Duration::from_millis(5));
    }
    bridge.broadcast(&Command::Mode { t: 0.1, mode: LoopMode::ModelLead });
    bridge.broadcast(&Command::Control(ControlEvent::new(0.12, 0, 0.5, Source::Model)?));
    for _ in 0..2 {
        println!("client received {}", client.read().expect("read"));
    }

    client.send(Message::text("{not json")).expect("send");
    loop {
        match client.read() {
            Ok(Message::Close(frame)) => {
                println!("closed by engine: {frame:?}");
                break;
            }
            Ok(_) => continue,
            Err(e) => {
                println!("connection ended: {e}");
                break;
            }
        }
    }
    bridge.shutdown();
    Ok(())
}
