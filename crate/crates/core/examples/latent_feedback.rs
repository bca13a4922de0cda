//! Stream white noise through the latent-feedback loop and compare how much
//! the latent means jump between windows with and without feedback, then
//! pin one dimension with an override.

use dualloop::codec::{CodecConfig, CodecModel};
use dualloop::domain::AudioWindow;
use dualloop::feedback::{mean_abs_change, FeedbackConfig, LatentFeedbackLoop, ManipEntry};
use dualloop::rng::Rng;

fn noise(rng: &mut Rng, size: usize, index: u64) -> AudioWindow {
    let samples = (0..size).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    AudioWindow::new(samples, 16_000, index)
}

fn main() -> dualloop::Result<()> {
    let config = CodecConfig {
        window_size: 128,
        hop: 128,
        hidden_units: 32,
        ..CodecConfig::default()
    };
    let model = CodecModel::init(config, &mut Rng::seeded(1))?;

    for alpha in [0.0, 0.5, 0.8, 0.95] {
        let fb_config = FeedbackConfig {
            deterministic_latent: true,
            ..FeedbackConfig::uniform(model.latent_dims(), alpha)
        };
        let mut fb = LatentFeedbackLoop::new(model.clone(), &fb_config)?;
        let mut input_rng = Rng::seeded(2);
        let mut rng = Rng::seeded(3);
        let mut trace = Vec::new();
        for i in 0..200 {
            let (_, params) = fb.process(&noise(&mut input_rng, 128, i), &mut rng)?;
            trace.push(params);
        }
        println!("alpha {alpha:.2}: mean |change| of latent means = {:.5}", mean_abs_change(&trace));
    }

    let mut fb = LatentFeedbackLoop::new(model, &FeedbackConfig::uniform(8, 0.8))?;
    fb.set_gain(0.5)?;
    fb.manipulation_mut().set(3, ManipEntry::Override(2.5));
    let (mut input_rng, mut rng) = (Rng::seeded(4), Rng::seeded(5));
    for i in 0..4 {
        let (out, params) = fb.process(&noise(&mut input_rng, 128, i), &mut rng)?;
        let peak = out.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        println!("window {i}: mean[3] = {:.3}, output peak {peak:.3}", params.mean[3]);
    }
    Ok(())
}
