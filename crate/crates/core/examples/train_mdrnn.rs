//! Train the gesture model on synthetic controller data, then let it
//! continue a primed sequence on its own.

use dualloop::corpus::gesture_corpus;
use dualloop::mdrnn::{train_mdrnn, MdrnnConfig};
use dualloop::rng::Rng;

fn main() -> dualloop::Result<()> {
    let config = MdrnnConfig {
        hidden_units: 16,
        mixtures: 3,
        ..MdrnnConfig::default()
    };
    let mut rng = Rng::seeded(21);
    let corpus = gesture_corpus(8, 32, 0.05, config.dt_min, &mut rng);
    let (model, report) = train_mdrnn(config, &corpus, 80, 5e-3, &mut rng)?;
    println!(
        "NLL per step: {:.3} after the first epoch, {:.3} after the last",
        report.epoch_losses[0],
        report.epoch_losses.last().unwrap()
    );

    let mut state = model.initial_state();
    let mut params = None;
    for sample in &corpus[0][..8] {
        let (p, s) = model.step(&sample.input_vector(), &state)?;
        state = s;
        params = Some(p);
    }
    let mut t = 0.0;
    for _ in 0..6 {
        let sample = model.sample(params.as_ref().unwrap(), 1.0, 0.5, &mut rng);
        t += sample.dt;
        let controls: Vec<String> = sample.controls().iter().map(|c| format!("{c:.2}")).collect();
        println!("t={t:.3}s  [{}]", controls.join(" "));
        let (p, s) = model.step(&sample.input_vector(), &state)?;
        state = s;
        params = Some(p);
    }
    Ok(())
}
