//! Teacher-forced training with full backpropagation through time.

use crate::codec::shuffle;
use crate::error::{Error, Result};
use crate::nn::{Adam, Parameters};
use crate::rng::Rng;

use super::lstm::{LayerState, StepCache};
use super::mixture::{nll_with_grad, GestureSample, GestureVector};
use super::{HiddenState, MdrnnConfig, MdrnnModel, INPUT_DIM};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MdrnnTrainingReport {
    pub epoch_losses: Vec<f64>,
}

/// Mean next-step NLL over one sequence and its gradient. Step `t` reads
/// `sequence[t]` and is scored against `sequence[t + 1]`; the recurrence
/// starts from zeros.
pub fn sequence_loss(model: &MdrnnModel, sequence: &[GestureVector]) -> Result<(f64, MdrnnModel)> {
    if sequence.len() < 2 {
        return Err(Error::config("training sequences need at least two steps"));
    }
    let steps = sequence.len() - 1;
    let n_layers = model.layers().len();
    let hidden = model.config.hidden_units;
    let scale = 1.0 / steps as f64;

    let mut state = HiddenState::zeros(&model.config);
    let mut caches: Vec<Vec<StepCache>> = Vec::with_capacity(steps);
    let mut tops: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut head_grads: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut total = 0.0;

    for t in 0..steps {
        let mut x = sequence[t].to_vec();
        let mut step_caches = Vec::with_capacity(n_layers);
        let mut next: Vec<LayerState> = Vec::with_capacity(n_layers);
        for (layer, prev) in model.layers().iter().zip(&state.layers) {
            let (s, cache) = layer.forward_cached(&x, prev);
            x = s.h.clone();
            step_caches.push(cache);
            next.push(s);
        }
        state = HiddenState { layers: next };

        let raw = model.head().forward(&x);
        let head = model.split_head(&raw);
        let (nll, g) = nll_with_grad(&head.logits, &head.means, &head.log_scales, &head.clamped, &sequence[t + 1]);
        if !nll.is_finite() {
            return Err(Error::Numerical {
                block: model.first_non_finite().unwrap_or_else(|| "mixture head".into()),
                detail: format!("NLL evaluated to {nll} at step {t}"),
            });
        }
        total += nll;

        let mut d_raw = Vec::with_capacity(raw.len());
        d_raw.extend(g.logits.iter().map(|v| v * scale));
        d_raw.extend(g.means.iter().flatten().map(|v| v * scale));
        d_raw.extend(g.log_scales.iter().flatten().map(|v| v * scale));

        caches.push(step_caches);
        tops.push(x);
        head_grads.push(d_raw);
    }

    let mut grads = model.clone();
    grads.fill(0.0);
    let mut dh_next = vec![vec![0.0; hidden]; n_layers];
    let mut dc_next = vec![vec![0.0; hidden]; n_layers];
    for t in (0..steps).rev() {
        let mut d_above = vec![0.0; hidden];
        model
            .head()
            .backward(&tops[t], &head_grads[t], &mut grads.head, Some(&mut d_above));
        for l in (0..n_layers).rev() {
            let dh: Vec<f64> = d_above.iter().zip(&dh_next[l]).map(|(a, b)| a + b).collect();
            let (dx, dh_prev, dc_prev) =
                model.layers()[l].backward(&caches[t][l], &dh, &dc_next[l], &mut grads.layers[l]);
            dh_next[l] = dh_prev;
            dc_next[l] = dc_prev;
            d_above = dx;
        }
    }
    Ok((total * scale, grads))
}

/// Train from a fresh initialization drawn from `rng`: one Adam step per
/// sequence, sequences visited in a seeded shuffled order each epoch.
pub fn train_mdrnn(
    config: MdrnnConfig,
    corpus: &[Vec<GestureSample>],
    epochs: usize,
    learning_rate: f64,
    rng: &mut Rng,
) -> Result<(MdrnnModel, MdrnnTrainingReport)> {
    if corpus.is_empty() {
        return Err(Error::config("mdrnn training corpus is empty"));
    }
    if let Some(i) = corpus.iter().position(|s| s.len() < 2) {
        return Err(Error::config(format!(
            "mdrnn training sequence {i} has fewer than two steps"
        )));
    }
    let sequences: Vec<Vec<GestureVector>> = corpus
        .iter()
        .map(|s| s.iter().map(GestureSample::input_vector).collect())
        .collect();
    if sequences.iter().flatten().flatten().any(|v| !v.is_finite()) {
        return Err(Error::config("mdrnn training corpus contains non-finite values"));
    }
    debug_assert!(sequences.iter().flatten().all(|v| v.len() == INPUT_DIM));

    let mut model = MdrnnModel::init(config, rng)?;
    let mut opt = Adam::new(learning_rate);
    let mut report = MdrnnTrainingReport::default();
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    for _ in 0..epochs {
        shuffle(&mut order, rng);
        let mut total = 0.0;
        for &i in &order {
            let (loss, grads) = sequence_loss(&model, &sequences[i])?;
            total += loss;
            opt.step(&mut model, &grads);
        }
        if let Some(block) = model.first_non_finite() {
            return Err(Error::Numerical {
                block,
                detail: "weights diverged during training".into(),
            });
        }
        report.epoch_losses.push(total / sequences.len() as f64);
    }
    Ok((model, report))
}
