use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Duration;

use dualloop::config::EngineConfig;
use dualloop::interaction::LoopMode;
use dualloop::session::{LogEntry, SessionLog};
use tungstenite::Message;

#[test]
fn websocket_client_steers_a_live_session() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = EngineConfig::from_toml(
        r#"
[codec]
window_size = 64
hop = 64
latent_dims = 4
hidden_units = 8
[server]
bind = "127.0.0.1:0"
[run]
output_wav = "live.wav"
trace_csv = "trace.csv"
"#,
    )
    .unwrap();
    config.base_dir = dir.path().to_path_buf();

    let stop = Arc::new(AtomicBool::new(false));
    let (addr_tx, addr_rx) = mpsc::channel();
    let engine = {
        let stop = stop.clone();
        std::thread::spawn(move || {
            dualloop::engine::run(&config, 11, stop, |addr| addr_tx.send(addr).unwrap())
        })
    };
    let addr = addr_rx.recv_timeout(Duration::from_secs(10)).unwrap().unwrap();
    let (mut client, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    client
        .send(Message::text(r#"{"t":0.0,"type":"control","channel":2,"value":0.75}"#))
        .unwrap();
    client
        .send(Message::text(r#"{"t":0.0,"type":"gain","value":0.3}"#))
        .unwrap();

    // The engine broadcasts latent traces every audio window.
    let mut traces = 0;
    while traces < 3 {
        let msg = client.read().unwrap();
        assert!(!msg.is_close(), "{msg:?}");
        if let Message::Text(t) = msg {
            let v: serde_json::Value = serde_json::from_str(&t).unwrap();
            if v["type"] == "latent" && v["trace"].as_array().is_some_and(|a| a.len() == 4) {
                traces += 1;
            }
        }
    }
    std::thread::sleep(Duration::from_millis(300));
    stop.store(true, Ordering::SeqCst);
    let summary = engine.join().unwrap().unwrap();
    assert_eq!(summary.seed, 11);
    assert_eq!(summary.human_events, 1);
    assert!(summary.windows > 3);

    let text = std::fs::read_to_string(dir.path().join("session.jsonl")).unwrap();
    let log = SessionLog::from_jsonl(&text).unwrap();
    assert!(log
        .entries
        .iter()
        .any(|e| matches!(e, LogEntry::Input { channel: 2, value, .. } if *value == 0.75)));
    assert!(log.entries.iter().any(|e| matches!(e, LogEntry::Param { .. })));
    let modes = log.mode_changes();
    assert!(modes.iter().any(|(_, m)| *m == LoopMode::ModelLead), "{modes:?}");
    assert!(dir.path().join("live.wav").exists());
}
