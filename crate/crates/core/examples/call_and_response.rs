//! A performer plays a short phrase and stops; the model takes over after
//! the idle threshold and hands back on the next gesture.

use dualloop::domain::{ControlEvent, Source};
use dualloop::interaction::InteractionConfig;
use dualloop::mdrnn::{MdrnnConfig, MdrnnModel};
use dualloop::rng::Rng;
use dualloop::router::MappingTable;
use dualloop::session::{simulate, LogEntry};

fn main() -> dualloop::Result<()> {
    let model = MdrnnModel::init(
        MdrnnConfig {
            hidden_units: 16,
            mixtures: 3,
            ..MdrnnConfig::default()
        },
        &mut Rng::seeded(31),
    )?;
    let mut script = Vec::new();
    for i in 0..5 {
        script.push(ControlEvent::human(i as f64 * 0.04, i % 8, 0.2 * i as f64)?);
    }
    script.push(ControlEvent::human(1.0, 0, 0.9)?);

    let config = InteractionConfig {
        simulation_seconds: 1.5,
        sigma_temperature: 0.3,
        ..InteractionConfig::default()
    };
    let log = simulate(&model, &config, &MappingTable::default(), &script, 7)?;
    for entry in &log.entries {
        match entry {
            LogEntry::Mode { t, mode } => println!("{t:6.3}s  -- {mode:?} --"),
            LogEntry::Output {
                t,
                channel,
                value,
                source,
                ..
            } if *source == Source::Human || *channel == 0 => {
                println!("{t:6.3}s  {source:?} ch{channel} {value:.3}")
            }
            _ => {}
        }
    }
    let model_steps = log.outputs().filter(|e| e.source == Source::Model).count() / 8;
    println!("{model_steps} model steps, {} log lines", log.entries.len());
    Ok(())
}
