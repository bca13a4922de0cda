//! Finite-difference verification of both models' hand-written gradients
//! on small random instances.

use crate::codec::{CodecConfig, CodecModel};
use crate::domain::AudioWindow;
use crate::error::Result;
use crate::mdrnn::{sequence_loss, GestureVector, MdrnnConfig, MdrnnModel, INPUT_DIM};
use crate::nn::{finite_difference_check, GradCheck};
use crate::rng::Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// ELBO gradient check: 16-sample windows, 3 latent dims, 4 hidden units,
/// fixed reparameterisation noise.
pub fn check_codec(seed: u64) -> Result<GradCheck> {
    let mut rng = Rng::seeded(seed);
    let config = CodecConfig {
        window_size: 16,
        hop: 16,
        latent_dims: 3,
        hidden_units: 4,
        sample_rate: 16_000,
        beta: 0.5,
    };
    let model = CodecModel::init(config, &mut rng)?;
    let samples = (0..16).map(|_| rng.uniform_range(-0.9, 0.9)).collect();
    let window = AudioWindow::new(samples, 16_000, 0);
    let noise: Vec<f64> = (0..3).map(|_| rng.standard_normal()).collect();
    let (_, grads) = model.elbo_with_noise(&window, &noise)?;
    Ok(finite_difference_check(&model, &grads, STEP, |m| {
        m.elbo_with_noise(&window, &noise).map(|(t, _)| t.loss).unwrap_or(f64::NAN)
    }))
}

/// Sequence NLL gradient check through time: 4 hidden units, 2 mixtures,
/// three steps.
pub fn check_mdrnn(seed: u64) -> Result<GradCheck> {
    let mut rng = Rng::seeded(seed);
    let config = MdrnnConfig {
        hidden_units: 4,
        mixtures: 2,
        ..MdrnnConfig::default()
    };
    let model = MdrnnModel::init(config, &mut rng)?;
    let seq: Vec<GestureVector> = (0..3)
        .map(|_| {
            let mut v = [0.0; INPUT_DIM];
            v[0] = rng.uniform_range(0.01, 0.2);
            v[1..].iter_mut().for_each(|c| *c = rng.uniform());
            v
        })
        .collect();
    let (_, grads) = sequence_loss(&model, &seq)?;
    Ok(finite_difference_check(&model, &grads, STEP, |m| {
        sequence_loss(m, &seq).map(|(l, _)| l).unwrap_or(f64::NAN)
    }))
}
