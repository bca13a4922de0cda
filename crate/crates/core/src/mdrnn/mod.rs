//! Autoregressive mixture density recurrent network over gesture steps.
//!
//! Each step consumes `[dt, c1..c8]` and predicts a Gaussian mixture over
//! the next step's nine values, so the model generates both *what* the
//! controls do next and *when*.

mod lstm;
mod mixture;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use lstm::{LayerState, LstmLayer};
pub use mixture::{GestureSample, GestureVector, MixtureParams};
pub use train::{sequence_loss, train_mdrnn, MdrnnTrainingReport};

use crate::domain::CONTROL_CHANNELS;
use crate::error::{Error, Result};
use crate::nn::{softmax, Linear, Parameters};
use crate::rng::Rng;

/// `dt` plus one value per controller.
pub const INPUT_DIM: usize = 1 + CONTROL_CHANNELS;
pub const LOG_SCALE_MIN: f64 = -10.0;
pub const LOG_SCALE_MAX: f64 = 4.0;
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdrnnConfig {
    pub input_dim: usize,
    pub hidden_units: usize,
    pub layers: usize,
    pub mixtures: usize,
    pub dt_min: f64,
}

impl Default for MdrnnConfig {
    fn default() -> Self {
        Self {
            input_dim: INPUT_DIM,
            hidden_units: 32,
            layers: 1,
            mixtures: 5,
            dt_min: 0.001,
        }
    }
}

impl MdrnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim != INPUT_DIM {
            return Err(Error::config(format!(
                "mdrnn input_dim must be {INPUT_DIM} (dt + {CONTROL_CHANNELS} controls), got {}",
                self.input_dim
            )));
        }
        if self.hidden_units == 0 || self.layers == 0 || self.mixtures == 0 {
            return Err(Error::config("mdrnn hidden_units, layers and mixtures must be >= 1"));
        }
        if !(self.dt_min.is_finite() && self.dt_min > 0.0) {
            return Err(Error::config("mdrnn dt_min must be > 0"));
        }
        Ok(())
    }

    /// Width of the mixture head: K logits, K*9 means, K*9 log-scales.
    pub fn head_outputs(&self) -> usize {
        self.mixtures * (1 + 2 * INPUT_DIM)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenState {
    pub layers: Vec<LayerState>,
}

impl HiddenState {
    pub fn zeros(config: &MdrnnConfig) -> Self {
        Self {
            layers: (0..config.layers)
                .map(|_| LayerState::zeros(config.hidden_units))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.h.iter().chain(&l.c).all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdrnnModel {
    pub config: MdrnnConfig,
    layers: Vec<LstmLayer>,
    head: Linear,
}

impl Parameters for MdrnnModel {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("lstm[{i}].weight"), layer.gates.weight.as_slice()));
            out.push((format!("lstm[{i}].bias"), layer.gates.bias.as_slice()));
        }
        out.push(("head.weight".into(), self.head.weight.as_slice()));
        out.push(("head.bias".into(), self.head.bias.as_slice()));
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.gates.weight);
            out.push(&mut layer.gates.bias);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    config: MdrnnConfig,
    weights: Weights,
}

#[derive(Serialize, Deserialize)]
struct Weights {
    layers: Vec<LstmLayer>,
    head: Linear,
}

/// Head outputs split into their three groups, log-scales already clamped.
pub(crate) struct HeadOutput {
    pub logits: Vec<f64>,
    pub means: Vec<GestureVector>,
    pub log_scales: Vec<GestureVector>,
    pub clamped: Vec<[bool; INPUT_DIM]>,
}

impl MdrnnModel {
    pub fn init(config: MdrnnConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_units;
        let layers = (0..config.layers)
            .map(|i| LstmLayer::uniform(if i == 0 { INPUT_DIM } else { h }, h, rng))
            .collect();
        let head = Linear::uniform(h, config.head_outputs(), rng);
        Ok(Self {
            config,
            layers,
            head,
        })
    }

    pub fn zeros(config: MdrnnConfig) -> Result<Self> {
        let mut m = Self::init(config, &mut Rng::seeded(0))?;
        m.fill(0.0);
        Ok(m)
    }

    pub fn initial_state(&self) -> HiddenState {
        HiddenState::zeros(&self.config)
    }

    pub(crate) fn layers(&self) -> &[LstmLayer] {
        &self.layers
    }

    pub(crate) fn head(&self) -> &Linear {
        &self.head
    }

    pub(crate) fn split_head(&self, raw: &[f64]) -> HeadOutput {
        let k = self.config.mixtures;
        let logits = raw[..k].to_vec();
        let mut means = vec![[0.0; INPUT_DIM]; k];
        let mut log_scales = vec![[0.0; INPUT_DIM]; k];
        let mut clamped = vec![[false; INPUT_DIM]; k];
        for c in 0..k {
            for j in 0..INPUT_DIM {
                means[c][j] = raw[k + c * INPUT_DIM + j];
                let ls = raw[k + k * INPUT_DIM + c * INPUT_DIM + j];
                clamped[c][j] = !(LOG_SCALE_MIN..=LOG_SCALE_MAX).contains(&ls);
                log_scales[c][j] = ls.clamp(LOG_SCALE_MIN, LOG_SCALE_MAX);
            }
        }
        HeadOutput {
            logits,
            means,
            log_scales,
            clamped,
        }
    }

    /// Advance the recurrence by one input and predict the next step.
    pub fn step(&self, input: &GestureVector, state: &HiddenState) -> Result<(MixtureParams, HiddenState)> {
        if let Some(v) = input.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                block: "mdrnn input".into(),
                detail: format!("non-finite value {v}"),
            });
        }
        Error::check_len("mdrnn hidden state layers", self.layers.len(), state.layers.len())?;
        let mut x: Vec<f64> = input.to_vec();
        let mut next = Vec::with_capacity(self.layers.len());
        for (layer, prev) in self.layers.iter().zip(&state.layers) {
            let s = layer.forward(&x, prev);
            x = s.h.clone();
            next.push(s);
        }
        let head = self.split_head(&self.head.forward(&x));
        let params = MixtureParams {
            weights: softmax(&head.logits),
            means: head.means,
            log_scales: head.log_scales,
        };
        Ok((params, HiddenState { layers: next }))
    }

    pub fn sample(&self, params: &MixtureParams, pi_temperature: f64, sigma_temperature: f64, rng: &mut Rng) -> GestureSample {
        params.sample(pi_temperature, sigma_temperature, self.config.dt_min, rng)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            weights: Weights {
                layers: self.layers.clone(),
                head: self.head.clone(),
            },
        };
        serde_json::to_string(&file).map_err(|e| Error::parse("mdrnn model", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::parse("mdrnn model", e))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::parse(
                "mdrnn model",
                format!("unsupported format_version {}", file.format_version),
            ));
        }
        file.config.validate()?;
        let c = &file.config;
        let h = c.hidden_units;
        let shapes_ok = file.weights.layers.len() == c.layers
            && file
                .weights
                .layers
                .iter()
                .enumerate()
                .all(|(i, l)| l.is_well_formed(if i == 0 { INPUT_DIM } else { h }, h))
            && file.weights.head.is_well_formed()
            && file.weights.head.inputs() == h
            && file.weights.head.outputs() == c.head_outputs();
        if !shapes_ok {
            return Err(Error::parse("mdrnn model", "weight shape does not match config"));
        }
        let model = Self {
            config: file.config,
            layers: file.weights.layers,
            head: file.weights.head,
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

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> MdrnnConfig {
        MdrnnConfig {
            hidden_units: 6,
            mixtures: 3,
            ..MdrnnConfig::default()
        }
    }

    #[test]
    fn config_enforces_nine_inputs() {
        let mut c = MdrnnConfig::default();
        assert_eq!(c.input_dim, 9);
        c.input_dim = 8;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_model_gives_uniform_weights() {
        let m = MdrnnModel::zeros(small()).unwrap();
        let (p, s) = m.step(&[0.0; INPUT_DIM], &m.initial_state()).unwrap();
        assert!(p.weights.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));
        assert!(s.is_finite());
    }

    #[test]
    fn step_is_deterministic_and_normalized() {
        let m = MdrnnModel::init(small(), &mut Rng::seeded(1)).unwrap();
        let mut state = m.initial_state();
        let mut rng = Rng::seeded(2);
        for _ in 0..50 {
            let mut x = [0.0; INPUT_DIM];
            x.iter_mut().for_each(|v| *v = rng.uniform_range(-2.0, 2.0));
            let (a, sa) = m.step(&x, &state).unwrap();
            let (b, sb) = m.step(&x, &state).unwrap();
            assert_eq!(a, b);
            assert_eq!(sa, sb);
            assert!((a.weight_sum() - 1.0).abs() < 1e-9);
            assert!(a.weights.iter().all(|w| *w > 0.0));
            assert!(a
                .log_scales
                .iter()
                .flatten()
                .all(|l| (LOG_SCALE_MIN..=LOG_SCALE_MAX).contains(l)));
            state = sa;
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let m = MdrnnModel::zeros(small()).unwrap();
        let mut x = [0.0; INPUT_DIM];
        x[3] = f64::NAN;
        assert!(matches!(
            m.step(&x, &m.initial_state()),
            Err(Error::Numerical { .. })
        ));
    }

    #[test]
    fn autoregressive_closure() {
        let m = MdrnnModel::init(small(), &mut Rng::seeded(3)).unwrap();
        let mut rng = Rng::seeded(4);
        let mut state = m.initial_state();
        let mut x = [0.0; INPUT_DIM];
        for _ in 0..100 {
            let (p, s) = m.step(&x, &state).unwrap();
            let sample = m.sample(&p, 1.0, 1.0, &mut rng);
            assert!(sample.dt >= m.config.dt_min);
            x = sample.input_vector();
            state = s;
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let cfg = MdrnnConfig {
            layers: 2,
            ..small()
        };
        let m = MdrnnModel::init(cfg, &mut Rng::seeded(5)).unwrap();
        let back = MdrnnModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let x = [0.3; INPUT_DIM];
        let (a, _) = m.step(&x, &m.initial_state()).unwrap();
        let (b, _) = back.step(&x, &back.initial_state()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn model_file_shape_mismatch() {
        let m = MdrnnModel::zeros(small()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        v["config"]["mixtures"] = 4.into();
        assert!(MdrnnModel::from_json(&v.to_string()).is_err());
    }
}
