//! Gaussian-mixture output head: parameters, likelihood and sampling.

use serde::{Deserialize, Serialize};

use crate::nn::{log_sum_exp, softmax};
use crate::rng::Rng;

use super::INPUT_DIM;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub type GestureVector = [f64; INPUT_DIM];

/// K-component diagonal Gaussian mixture over `[dt, c1..c8]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub weights: Vec<f64>,
    pub means: Vec<GestureVector>,
    pub log_scales: Vec<GestureVector>,
}

/// One generated step: `dt` is the clamped time until the update, `values`
/// holds the raw dt followed by the eight clamped controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GestureSample {
    pub dt: f64,
    pub values: GestureVector,
}

impl GestureSample {
    /// From a corpus row `[dt, c1..c8]`, taken as-is.
    pub fn from_vector(values: GestureVector) -> Self {
        Self {
            dt: values[0],
            values,
        }
    }

    pub fn controls(&self) -> &[f64] {
        &self.values[1..]
    }

    /// The vector fed back into the network: effective dt, then the controls.
    pub fn input_vector(&self) -> GestureVector {
        let mut v = self.values;
        v[0] = self.dt;
        v
    }
}

/// Gradients of the negative log-likelihood w.r.t. the head's raw outputs.
pub(crate) struct NllGrad {
    pub logits: Vec<f64>,
    pub means: Vec<GestureVector>,
    pub log_scales: Vec<GestureVector>,
}

fn component_log_density(mean: &GestureVector, log_scale: &GestureVector, target: &GestureVector) -> f64 {
    (0..INPUT_DIM)
        .map(|j| {
            let u = (target[j] - mean[j]) * (-log_scale[j]).exp();
            -HALF_LN_2PI - log_scale[j] - 0.5 * u * u
        })
        .sum()
}

impl MixtureParams {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `-log sum_k w_k prod_j N(target_j; mean_kj, scale_kj)`, via log-sum-exp.
    pub fn nll(&self, target: &GestureVector) -> f64 {
        let terms: Vec<f64> = (0..self.components())
            .map(|k| self.weights[k].ln() + component_log_density(&self.means[k], &self.log_scales[k], target))
            .collect();
        -log_sum_exp(&terms)
    }

    /// Draw a component from the weights sharpened by `pi_temperature`, then
    /// each coordinate with its scale multiplied by `sigma_temperature`.
    /// Always consumes one uniform and nine normals from `rng`.
    pub fn sample(&self, pi_temperature: f64, sigma_temperature: f64, dt_min: f64, rng: &mut Rng) -> GestureSample {
        let logits: Vec<f64> = self.weights.iter().map(|w| w.ln() / pi_temperature).collect();
        let probs = softmax(&logits);
        let u = rng.uniform();
        let mut k = probs.len() - 1;
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                k = i;
                break;
            }
        }
        let mut values = [0.0; INPUT_DIM];
        for (j, v) in values.iter_mut().enumerate() {
            let scale = self.log_scales[k][j].exp() * sigma_temperature;
            *v = self.means[k][j] + scale * rng.standard_normal();
        }
        let dt = values[0].max(dt_min);
        for v in &mut values[1..] {
            *v = v.clamp(0.0, 1.0);
        }
        GestureSample { dt, values }
    }
}

/// NLL and its gradient given unnormalized logits and clamped log-scales.
/// `clamped[k][j]` marks log-scales pinned at a clamp bound (zero gradient).
pub(crate) fn nll_with_grad(
    logits: &[f64],
    means: &[GestureVector],
    log_scales: &[GestureVector],
    clamped: &[[bool; INPUT_DIM]],
    target: &GestureVector,
) -> (f64, NllGrad) {
    let k_count = logits.len();
    let log_norm = log_sum_exp(logits);
    let joint: Vec<f64> = (0..k_count)
        .map(|k| logits[k] - log_norm + component_log_density(&means[k], &log_scales[k], target))
        .collect();
    let total = log_sum_exp(&joint);
    let resp: Vec<f64> = joint.iter().map(|a| (a - total).exp()).collect();
    let weights = softmax(logits);

    let mut grad = NllGrad {
        logits: (0..k_count).map(|k| weights[k] - resp[k]).collect(),
        means: vec![[0.0; INPUT_DIM]; k_count],
        log_scales: vec![[0.0; INPUT_DIM]; k_count],
    };
    for k in 0..k_count {
        for j in 0..INPUT_DIM {
            let inv_var = (-2.0 * log_scales[k][j]).exp();
            let diff = target[j] - means[k][j];
            grad.means[k][j] = -resp[k] * diff * inv_var;
            if !clamped[k][j] {
                grad.log_scales[k][j] = resp[k] * (1.0 - diff * diff * inv_var);
            }
        }
    }
    (-total, grad)
}
