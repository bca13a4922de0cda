//! Small variational audio autoencoder.
//!
//! ```text
//! window[W] -> tanh(H) -> mean[D], log_scale[D]      (encoder)
//! z[D]      -> tanh(H) -> tanh -> window[W]           (decoder)
//! ```
//!
//! The feedback pipeline only relies on `encode` and `decode`, so any model
//! honouring those shapes can be dropped in.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{AudioWindow, LatentParams, LatentVector};
use crate::error::{Error, Result};
use crate::nn::{Adam, Linear, Parameters};
use crate::rng::Rng;

pub const LOG_SCALE_MIN: f64 = -10.0;
pub const LOG_SCALE_MAX: f64 = 4.0;
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    pub window_size: usize,
    pub hop: usize,
    pub latent_dims: usize,
    pub hidden_units: usize,
    pub sample_rate: u32,
    /// Weight of the KL term in the training objective.
    pub beta: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            window_size: 512,
            hop: 512,
            latent_dims: 8,
            hidden_units: 64,
            sample_rate: 16_000,
            beta: 0.01,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 {
            return Err(Error::config("codec window_size must be > 0"));
        }
        if self.latent_dims == 0 {
            return Err(Error::config("codec latent_dims must be >= 1"));
        }
        if self.hidden_units == 0 {
            return Err(Error::config("codec hidden_units must be >= 1"));
        }
        if self.hop == 0 || self.hop > self.window_size {
            return Err(Error::config("codec hop must be in 1..=window_size"));
        }
        if self.sample_rate == 0 {
            return Err(Error::config("codec sample_rate must be > 0"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::config("codec beta must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecModel {
    pub config: CodecConfig,
    enc_hidden: Linear,
    enc_mean: Linear,
    enc_log_scale: Linear,
    dec_hidden: Linear,
    dec_out: Linear,
}

impl Parameters for CodecModel {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(10);
        for (name, layer) in self.layers() {
            out.push((format!("{name}.weight"), layer.weight.as_slice()));
            out.push((format!("{name}.bias"), layer.bias.as_slice()));
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(10);
        for layer in [
            &mut self.enc_hidden,
            &mut self.enc_mean,
            &mut self.enc_log_scale,
            &mut self.dec_hidden,
            &mut self.dec_out,
        ] {
            out.push(&mut layer.weight);
            out.push(&mut layer.bias);
        }
        out
    }
}

/// Values of the training objective for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    pub loss: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingReport {
    pub epoch_losses: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    config: CodecConfig,
    weights: Weights,
}

#[derive(Serialize, Deserialize)]
struct Weights {
    enc_hidden: Linear,
    enc_mean: Linear,
    enc_log_scale: Linear,
    dec_hidden: Linear,
    dec_out: Linear,
}

impl CodecModel {
    /// Every weight and bias drawn uniformly from `[-0.1, 0.1]`.
    pub fn init(config: CodecConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (w, h, d) = (config.window_size, config.hidden_units, config.latent_dims);
        Ok(Self {
            enc_hidden: Linear::uniform(w, h, rng),
            enc_mean: Linear::uniform(h, d, rng),
            enc_log_scale: Linear::uniform(h, d, rng),
            dec_hidden: Linear::uniform(d, h, rng),
            dec_out: Linear::uniform(h, w, rng),
            config,
        })
    }

    pub fn zeros(config: CodecConfig) -> Result<Self> {
        let mut rng = Rng::seeded(0);
        let mut m = Self::init(config, &mut rng)?;
        m.fill(0.0);
        Ok(m)
    }

    fn layers(&self) -> [(&'static str, &Linear); 5] {
        [
            ("enc_hidden", &self.enc_hidden),
            ("enc_mean", &self.enc_mean),
            ("enc_log_scale", &self.enc_log_scale),
            ("dec_hidden", &self.dec_hidden),
            ("dec_out", &self.dec_out),
        ]
    }

    pub fn window_size(&self) -> usize {
        self.config.window_size
    }

    pub fn latent_dims(&self) -> usize {
        self.config.latent_dims
    }

    pub fn encode(&self, window: &AudioWindow) -> Result<LatentParams> {
        Error::check_len("codec input window", self.config.window_size, window.len())?;
        let (_, params) = self.encode_inner(&window.samples);
        Ok(params)
    }

    fn encode_inner(&self, x: &[f64]) -> (Vec<f64>, LatentParams) {
        let hidden: Vec<f64> = self.enc_hidden.forward(x).into_iter().map(f64::tanh).collect();
        let mean = self.enc_mean.forward(&hidden);
        let log_scale = self
            .enc_log_scale
            .forward(&hidden)
            .into_iter()
            .map(|v| v.clamp(LOG_SCALE_MIN, LOG_SCALE_MAX))
            .collect();
        (hidden, LatentParams { mean, log_scale })
    }

    /// Decoded window carries `index` 0; callers streaming windows re-stamp it.
    pub fn decode(&self, z: &LatentVector) -> Result<AudioWindow> {
        Error::check_len("codec latent", self.config.latent_dims, z.len())?;
        let (_, samples) = self.decode_inner(z.as_slice());
        Ok(AudioWindow::new(samples, self.config.sample_rate, 0))
    }

    fn decode_inner(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hidden: Vec<f64> = self.dec_hidden.forward(z).into_iter().map(f64::tanh).collect();
        let out = self.dec_out.forward(&hidden).into_iter().map(f64::tanh).collect();
        (hidden, out)
    }

    /// Training objective with fresh reparameterization noise from `rng`.
    pub fn elbo_loss(&self, window: &AudioWindow, rng: &mut Rng) -> Result<(f64, CodecModel)> {
        let noise: Vec<f64> = (0..self.config.latent_dims)
            .map(|_| rng.standard_normal())
            .collect();
        let (terms, grads) = self.elbo_with_noise(window, &noise)?;
        Ok((terms.loss, grads))
    }

    /// Reconstruction MSE plus `beta` times the closed-form KL to a standard
    /// normal, with `z = mean + exp(log_scale) * noise`. Returns the loss
    /// terms and gradients shaped like the model.
    pub fn elbo_with_noise(&self, window: &AudioWindow, noise: &[f64]) -> Result<(ElboTerms, CodecModel)> {
        let d = self.config.latent_dims;
        let w = self.config.window_size;
        Error::check_len("codec input window", w, window.len())?;
        Error::check_len("codec noise", d, noise.len())?;
        let beta = self.config.beta;
        let x = &window.samples;

        let (enc_h, params) = self.encode_inner(x);
        let raw_log_scale = self.enc_log_scale.forward(&enc_h);
        let scale: Vec<f64> = params.log_scale.iter().map(|l| l.exp()).collect();
        let z: Vec<f64> = (0..d).map(|i| params.mean[i] + scale[i] * noise[i]).collect();
        let (dec_h, y) = self.decode_inner(&z);

        let reconstruction = y.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / w as f64;
        let kl = (0..d)
            .map(|i| 0.5 * (params.mean[i].powi(2) + scale[i].powi(2) - 1.0 - 2.0 * params.log_scale[i]))
            .sum::<f64>();
        let loss = reconstruction + beta * kl;
        if !loss.is_finite() {
            let block = self.first_non_finite().unwrap_or_else(|| "loss".to_string());
            return Err(Error::Numerical {
                block,
                detail: format!("ELBO evaluated to {loss}"),
            });
        }

        let mut g = self.clone();
        g.fill(0.0);

        let d_pre_out: Vec<f64> = y
            .iter()
            .zip(x)
            .map(|(yi, xi)| 2.0 * (yi - xi) / w as f64 * (1.0 - yi * yi))
            .collect();
        let mut d_dec_h = vec![0.0; self.config.hidden_units];
        self.dec_out.backward(&dec_h, &d_pre_out, &mut g.dec_out, Some(&mut d_dec_h));
        let d_pre_dec: Vec<f64> = d_dec_h
            .iter()
            .zip(&dec_h)
            .map(|(g, h)| g * (1.0 - h * h))
            .collect();
        let mut dz = vec![0.0; d];
        self.dec_hidden.backward(&z, &d_pre_dec, &mut g.dec_hidden, Some(&mut dz));

        let d_mean: Vec<f64> = (0..d).map(|i| dz[i] + beta * params.mean[i]).collect();
        let d_raw_log_scale: Vec<f64> = (0..d)
            .map(|i| {
                if raw_log_scale[i] < LOG_SCALE_MIN || raw_log_scale[i] > LOG_SCALE_MAX {
                    0.0
                } else {
                    dz[i] * noise[i] * scale[i] + beta * (scale[i] * scale[i] - 1.0)
                }
            })
            .collect();
        let mut d_enc_h = vec![0.0; self.config.hidden_units];
        self.enc_mean.backward(&enc_h, &d_mean, &mut g.enc_mean, Some(&mut d_enc_h));
        self.enc_log_scale
            .backward(&enc_h, &d_raw_log_scale, &mut g.enc_log_scale, Some(&mut d_enc_h));
        let d_pre_enc: Vec<f64> = d_enc_h
            .iter()
            .zip(&enc_h)
            .map(|(g, h)| g * (1.0 - h * h))
            .collect();
        self.enc_hidden.backward(x, &d_pre_enc, &mut g.enc_hidden, None);

        Ok((
            ElboTerms {
                loss,
                reconstruction,
                kl,
            },
            g,
        ))
    }

    /// Mean squared error of `decode(encode(x).mean)` against `x`.
    pub fn reconstruction_mse(&self, window: &AudioWindow) -> Result<f64> {
        let params = self.encode(window)?;
        let y = self.decode(&LatentVector(params.mean))?;
        Ok(y.samples
            .iter()
            .zip(&window.samples)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / window.len() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            weights: Weights {
                enc_hidden: self.enc_hidden.clone(),
                enc_mean: self.enc_mean.clone(),
                enc_log_scale: self.enc_log_scale.clone(),
                dec_hidden: self.dec_hidden.clone(),
                dec_out: self.dec_out.clone(),
            },
        };
        serde_json::to_string(&file).map_err(|e| Error::parse("codec model", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::parse("codec model", e))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::parse(
                "codec model",
                format!("unsupported format_version {}", file.format_version),
            ));
        }
        file.config.validate()?;
        let c = &file.config;
        let wts = file.weights;
        let expected = [
            (&wts.enc_hidden, c.window_size, c.hidden_units),
            (&wts.enc_mean, c.hidden_units, c.latent_dims),
            (&wts.enc_log_scale, c.hidden_units, c.latent_dims),
            (&wts.dec_hidden, c.latent_dims, c.hidden_units),
            (&wts.dec_out, c.hidden_units, c.window_size),
        ];
        for (layer, inputs, outputs) in expected {
            if !layer.is_well_formed() || layer.inputs() != inputs || layer.outputs() != outputs {
                return Err(Error::parse("codec model", "weight shape does not match config"));
            }
        }
        let model = Self {
            config: file.config,
            enc_hidden: wts.enc_hidden,
            enc_mean: wts.enc_mean,
            enc_log_scale: wts.enc_log_scale,
            dec_hidden: wts.dec_hidden,
            dec_out: wts.dec_out,
        };
        if let Some(block) = model.first_non_finite() {
            return Err(Error::Numerical {
                block,
                detail: "non-finite weight in model file".into(),
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Train from a fresh initialization drawn from `rng`. One Adam step per
/// window; windows are visited in a seeded shuffled order each epoch.
pub fn train_codec(
    config: CodecConfig,
    corpus: &[AudioWindow],
    epochs: usize,
    learning_rate: f64,
    rng: &mut Rng,
) -> Result<(CodecModel, TrainingReport)> {
    if corpus.is_empty() {
        return Err(Error::config("codec training corpus is empty"));
    }
    if let Some(w) = corpus.iter().find(|w| w.len() != config.window_size) {
        return Err(Error::SizeMismatch {
            what: "codec training window",
            expected: config.window_size,
            actual: w.len(),
        });
    }
    let mut model = CodecModel::init(config, rng)?;
    let mut opt = Adam::new(learning_rate);
    let mut report = TrainingReport::default();
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    for _ in 0..epochs {
        shuffle(&mut order, rng);
        let mut total = 0.0;
        for &i in &order {
            let (loss, grads) = model.elbo_loss(&corpus[i], rng)?;
            total += loss;
            opt.step(&mut model, &grads);
        }
        if let Some(block) = model.first_non_finite() {
            return Err(Error::Numerical {
                block,
                detail: "weights diverged during training".into(),
            });
        }
        report.epoch_losses.push(total / corpus.len() as f64);
    }
    Ok((model, report))
}

pub(crate) fn shuffle(order: &mut [usize], rng: &mut Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.below(i + 1);
        order.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CodecConfig {
        CodecConfig {
            window_size: 16,
            hop: 16,
            latent_dims: 3,
            hidden_units: 4,
            sample_rate: 16_000,
            beta: 0.01,
        }
    }

    fn ramp(w: usize) -> AudioWindow {
        AudioWindow::new((0..w).map(|i| (i as f64 * 0.37).sin() * 0.6).collect(), 16_000, 0)
    }

    #[test]
    fn zero_model_zero_window_encodes_to_zero() {
        let m = CodecModel::zeros(CodecConfig::default()).unwrap();
        let p = m.encode(&AudioWindow::silent(512, 16_000, 0)).unwrap();
        assert_eq!(p, LatentParams::zeros(8));
        let y = m.decode(&LatentVector::zeros(8)).unwrap();
        assert!(y.samples.iter().all(|s| *s == 0.0));
        assert_eq!(y.len(), 512);
    }

    #[test]
    fn zero_biases_zero_window_encodes_to_zero() {
        let mut rng = Rng::seeded(5);
        let mut m = CodecModel::init(small(), &mut rng).unwrap();
        m.enc_hidden.bias.fill(0.0);
        m.enc_mean.bias.fill(0.0);
        m.enc_log_scale.bias.fill(0.0);
        let p = m.encode(&AudioWindow::silent(16, 16_000, 0)).unwrap();
        assert_eq!(p, LatentParams::zeros(3));
    }

    #[test]
    fn wrong_sizes_are_rejected() {
        let m = CodecModel::zeros(small()).unwrap();
        assert!(matches!(
            m.encode(&AudioWindow::silent(15, 16_000, 0)),
            Err(Error::SizeMismatch { expected: 16, actual: 15, .. })
        ));
        assert!(matches!(
            m.decode(&LatentVector::zeros(4)),
            Err(Error::SizeMismatch { expected: 3, actual: 4, .. })
        ));
    }

    #[test]
    fn decode_is_bounded() {
        let mut rng = Rng::seeded(9);
        let m = CodecModel::init(small(), &mut rng).unwrap();
        let z = LatentVector(vec![1e6, -1e6, 3.0]);
        let y = m.decode(&z).unwrap();
        assert!(y.samples.iter().all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn encode_is_deterministic_and_clamped() {
        let mut rng = Rng::seeded(2);
        let mut m = CodecModel::init(small(), &mut rng).unwrap();
        let w = ramp(16);
        assert_eq!(m.encode(&w).unwrap(), m.encode(&w).unwrap());
        m.enc_log_scale.bias.fill(100.0);
        assert!(m.encode(&w).unwrap().log_scale.iter().all(|l| *l == LOG_SCALE_MAX));
        m.enc_log_scale.bias.fill(-100.0);
        assert!(m.encode(&w).unwrap().log_scale.iter().all(|l| *l == LOG_SCALE_MIN));
    }

    #[test]
    fn perfect_reconstruction_without_kl_is_zero_loss() {
        let mut rng = Rng::seeded(11);
        let mut cfg = small();
        cfg.beta = 0.0;
        let mut m = CodecModel::init(cfg, &mut rng).unwrap();
        // Decoder ignores z, so its output is a fixed window we can target.
        m.dec_hidden.weight.fill(0.0);
        let target = m.decode(&LatentVector::zeros(3)).unwrap();
        let (terms, _) = m.elbo_with_noise(&target, &[0.4, -1.2, 2.0]).unwrap();
        assert_eq!(terms.loss, 0.0);
    }

    #[test]
    fn kl_of_standard_normal_is_zero() {
        let mut m = CodecModel::zeros(small()).unwrap();
        m.dec_out.bias.fill(0.25);
        let (terms, _) = m.elbo_with_noise(&ramp(16), &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(terms.kl, 0.0);
        assert!(terms.loss >= 0.0);
    }

    #[test]
    fn non_finite_weights_are_named() {
        let mut m = CodecModel::zeros(small()).unwrap();
        m.dec_out.weight[3] = f64::NAN;
        m.dec_hidden.bias.fill(1.0);
        let err = m.elbo_with_noise(&ramp(16), &[0.0; 3]).unwrap_err();
        match err {
            Error::Numerical { block, .. } => assert_eq!(block, "dec_out.weight"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_corpus_is_a_config_error() {
        let mut rng = Rng::seeded(0);
        assert!(matches!(
            train_codec(small(), &[], 1, 1e-3, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let corpus = vec![ramp(16)];
        let (trained, report) = train_codec(small(), &corpus, 0, 1e-3, &mut Rng::seeded(4)).unwrap();
        let fresh = CodecModel::init(small(), &mut Rng::seeded(4)).unwrap();
        assert_eq!(trained, fresh);
        assert!(report.epoch_losses.is_empty());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = CodecModel::init(small(), &mut Rng::seeded(8)).unwrap();
        let back = CodecModel::from_json(&m.to_json().unwrap()).unwrap();
        let w = ramp(16);
        let a = m.encode(&w).unwrap();
        let b = back.encode(&w).unwrap();
        for (x, y) in a.mean.iter().chain(&a.log_scale).zip(b.mean.iter().chain(&b.log_scale)) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(m, back);
    }

    #[test]
    fn model_file_rejects_wrong_version_and_shape() {
        let m = CodecModel::zeros(small()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        v["format_version"] = 2.into();
        assert!(CodecModel::from_json(&v.to_string()).is_err());
        v["format_version"] = 1.into();
        v["config"]["latent_dims"] = 5.into();
        assert!(CodecModel::from_json(&v.to_string()).is_err());
    }
}
