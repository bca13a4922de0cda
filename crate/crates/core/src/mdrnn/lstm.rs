//! Single LSTM layer (input, forget, cell, output gates; no peepholes).
//!
//! All four gates share one affine map over the concatenation `[x; h_prev]`,
//! laid out as `[i | f | g | o]`, each `hidden` wide.

use serde::{Deserialize, Serialize};

use crate::nn::{sigmoid, Linear};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub gates: Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LayerState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    x_cat: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmLayer {
    pub fn uniform(inputs: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            gates: Linear::uniform(inputs + hidden, 4 * hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.gates.outputs() / 4
    }

    pub fn inputs(&self) -> usize {
        self.gates.inputs() - self.hidden()
    }

    pub fn is_well_formed(&self, inputs: usize, hidden: usize) -> bool {
        self.gates.is_well_formed()
            && self.gates.outputs() == 4 * hidden
            && self.gates.inputs() == inputs + hidden
    }

    pub fn forward(&self, x: &[f64], prev: &LayerState) -> LayerState {
        self.forward_cached(x, prev).0
    }

    pub(crate) fn forward_cached(&self, x: &[f64], prev: &LayerState) -> (LayerState, StepCache) {
        let hsz = self.hidden();
        let x_cat: Vec<f64> = x.iter().chain(&prev.h).copied().collect();
        let a = self.gates.forward(&x_cat);
        let i: Vec<f64> = a[..hsz].iter().map(|v| sigmoid(*v)).collect();
        let f: Vec<f64> = a[hsz..2 * hsz].iter().map(|v| sigmoid(*v)).collect();
        let g: Vec<f64> = a[2 * hsz..3 * hsz].iter().map(|v| v.tanh()).collect();
        let o: Vec<f64> = a[3 * hsz..].iter().map(|v| sigmoid(*v)).collect();
        let c: Vec<f64> = (0..hsz).map(|k| f[k] * prev.c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..hsz).map(|k| o[k] * tanh_c[k]).collect();
        let cache = StepCache {
            x_cat,
            i,
            f,
            g,
            o,
            c_prev: prev.c.clone(),
            tanh_c,
        };
        (LayerState { h, c }, cache)
    }

    /// Backpropagate one time step. `dh` and `dc` are the gradients flowing
    /// into this step's outputs; returns `(dx, dh_prev, dc_prev)`.
    pub(crate) fn backward(
        &self,
        cache: &StepCache,
        dh: &[f64],
        dc: &[f64],
        grad: &mut LstmLayer,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hsz = self.hidden();
        let mut da = vec![0.0; 4 * hsz];
        let mut dc_prev = vec![0.0; hsz];
        for k in 0..hsz {
            let (i, f, g, o, tc) = (cache.i[k], cache.f[k], cache.g[k], cache.o[k], cache.tanh_c[k]);
            let d_o = dh[k] * tc;
            let dc_total = dc[k] + dh[k] * o * (1.0 - tc * tc);
            let d_i = dc_total * g;
            let d_g = dc_total * i;
            let d_f = dc_total * cache.c_prev[k];
            dc_prev[k] = dc_total * f;
            da[k] = d_i * i * (1.0 - i);
            da[hsz + k] = d_f * f * (1.0 - f);
            da[2 * hsz + k] = d_g * (1.0 - g * g);
            da[3 * hsz + k] = d_o * o * (1.0 - o);
        }
        let mut dx_cat = vec![0.0; cache.x_cat.len()];
        self.gates
            .backward(&cache.x_cat, &da, &mut grad.gates, Some(&mut dx_cat));
        let dh_prev = dx_cat.split_off(self.inputs());
        (dx_cat, dh_prev, dc_prev)
    }
}
