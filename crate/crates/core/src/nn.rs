//! Minimal dense-network building blocks with hand-written gradients.
//!
//! Models expose their weights as named flat blocks through [`Parameters`];
//! the optimizer and the finite-difference checker only ever see that view.

use serde::{Deserialize, Serialize};

use crate::rng::Rng;

/// Uniform initialization half-width for every weight and bias.
pub const INIT_RANGE: f64 = 0.1;

pub trait Parameters {
    /// Named weight blocks in a fixed order.
    fn blocks(&self) -> Vec<(String, &[f64])>;
    /// Same blocks, same order, mutable.
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }

    /// Name of the first block holding a non-finite value.
    fn first_non_finite(&self) -> Option<String> {
        self.blocks()
            .into_iter()
            .find(|(_, b)| b.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }

    fn fill(&mut self, value: f64) {
        for b in self.blocks_mut() {
            b.fill(value);
        }
    }
}

/// `y = W x + b`, with `W` stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "LinearRepr", into = "LinearRepr")]
pub struct Linear {
    inputs: usize,
    outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LinearRepr {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl From<LinearRepr> for Linear {
    fn from(r: LinearRepr) -> Self {
        let outputs = r.weight.len();
        let inputs = r.weight.first().map_or(0, Vec::len);
        Linear {
            inputs,
            outputs,
            weight: r.weight.into_iter().flatten().collect(),
            bias: r.bias,
        }
    }
}

impl From<Linear> for LinearRepr {
    fn from(l: Linear) -> Self {
        let weight = if l.inputs == 0 {
            vec![Vec::new(); l.outputs]
        } else {
            l.weight.chunks(l.inputs).map(<[f64]>::to_vec).collect()
        };
        LinearRepr {
            weight,
            bias: l.bias,
        }
    }
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn uniform(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let mut l = Self::zeros(inputs, outputs);
        for w in l.weight.iter_mut().chain(l.bias.iter_mut()) {
            *w = rng.uniform_range(-INIT_RANGE, INIT_RANGE);
        }
        l
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// Shape sanity after deserialization.
    pub fn is_well_formed(&self) -> bool {
        self.weight.len() == self.inputs * self.outputs && self.bias.len() == self.outputs
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weight
            .chunks_exact(self.inputs.max(1))
            .zip(&self.bias)
            .map(|(row, b)| b + dot(row, x))
            .take(self.outputs)
            .collect()
    }

    /// Accumulate `dL/dW`, `dL/db` into `grad` and add `dL/dx` into `dx` if given.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear, dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = &mut grad.weight[o * self.inputs..(o + 1) * self.inputs];
            for (w, &xi) in row.iter_mut().zip(x) {
                *w += g * xi;
            }
        }
        if let Some(dx) = dx {
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                for (d, &w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|l| (l - lse).exp()).collect()
}

/// Adam with bias correction; moment buffers are created on the first step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        let grad_blocks: Vec<&[f64]> = grads.blocks().into_iter().map(|(_, b)| b).collect();
        if self.m.is_empty() {
            self.m = grad_blocks.iter().map(|b| vec![0.0; b.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .blocks_mut()
            .into_iter()
            .zip(grad_blocks)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub worst_block: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// Relative errors use `max(|analytic|, |numeric|, GRADCHECK_FLOOR)` as the
/// denominator. Central differences at step 1e-5 carry round-off of order
/// `1e-16 * |loss| / 1e-5`, so gradients below the floor are compared on an
/// absolute scale instead.
pub const GRADCHECK_FLOOR: f64 = 1e-5;

/// Compare `analytic` against central finite differences of `loss` around
/// `params`, perturbing every scalar by `step`.
pub fn finite_difference_check<P, F>(params: &P, analytic: &P, step: f64, mut loss: F) -> GradCheck
where
    P: Parameters + Clone,
    F: FnMut(&P) -> f64,
{
    let names: Vec<String> = params.blocks().into_iter().map(|(n, _)| n).collect();
    let grads: Vec<Vec<f64>> = analytic
        .blocks()
        .into_iter()
        .map(|(_, b)| b.to_vec())
        .collect();
    let mut probe = params.clone();
    let mut report = GradCheck {
        max_relative_error: 0.0,
        worst_block: String::new(),
        worst_index: 0,
        checked: 0,
    };
    for (bi, name) in names.iter().enumerate() {
        for (i, &a) in grads[bi].iter().enumerate() {
            let original = probe.blocks_mut()[bi][i];
            probe.blocks_mut()[bi][i] = original + step;
            let plus = loss(&probe);
            probe.blocks_mut()[bi][i] = original - step;
            let minus = loss(&probe);
            probe.blocks_mut()[bi][i] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let denom = a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_relative_error || !rel.is_finite() {
                report.max_relative_error = rel;
                report.worst_block = name.clone();
                report.worst_index = i;
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct One(Linear);

    impl Parameters for One {
        fn blocks(&self) -> Vec<(String, &[f64])> {
            vec![("w".into(), &self.0.weight), ("b".into(), &self.0.bias)]
        }
        fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0.weight, &mut self.0.bias]
        }
    }

    #[test]
    fn linear_forward_matches_hand_computation() {
        let mut l = Linear::zeros(2, 2);
        l.weight = vec![1.0, 2.0, 3.0, 4.0];
        l.bias = vec![0.5, -0.5];
        assert_eq!(l.forward(&[1.0, -1.0]), vec![-0.5, -1.5]);
    }

    #[test]
    fn linear_serializes_as_nested_rows() {
        let mut l = Linear::zeros(3, 2);
        l.weight = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let json = serde_json::to_string(&l).unwrap();
        assert_eq!(json, r#"{"weight":[[1.0,2.0,3.0],[4.0,5.0,6.0]],"bias":[0.0,0.0]}"#);
        let back: Linear = serde_json::from_str(&json).unwrap();
        assert_eq!(back, l);
    }

    #[test]
    fn linear_backward_passes_gradcheck() {
        let mut rng = Rng::seeded(3);
        let model = One(Linear::uniform(4, 3, &mut rng));
        let x = [0.3, -0.1, 0.7, 0.2];
        let target = [0.1, 0.2, -0.3];
        let loss = |m: &One| {
            m.0.forward(&x)
                .iter()
                .zip(&target)
                .map(|(y, t)| (y - t).powi(2))
                .sum::<f64>()
        };
        let y = model.0.forward(&x);
        let dy: Vec<f64> = y.iter().zip(&target).map(|(y, t)| 2.0 * (y - t)).collect();
        let mut grad = One(Linear::zeros(4, 3));
        model.0.backward(&x, &dy, &mut grad.0, None);
        let report = finite_difference_check(&model, &grad, 1e-5, loss);
        assert!(report.max_relative_error < 1e-6, "{report:?}");
        assert_eq!(report.checked, 15);
    }

    #[test]
    fn softmax_normalizes() {
        let w = softmax(&[1000.0, 999.0, -5.0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut p = One(Linear::zeros(1, 1));
        let mut g = One(Linear::zeros(1, 1));
        g.0.weight[0] = 2.0;
        g.0.bias[0] = -3.0;
        let mut opt = Adam::new(0.1);
        opt.step(&mut p, &g);
        // First bias-corrected Adam step has magnitude ~lr.
        assert!((p.0.weight[0] + 0.1).abs() < 1e-6);
        assert!((p.0.bias[0] - 0.1).abs() < 1e-6);
    }
}
