//! Latent-feedback synthesis loop.
//!
//! Each window runs a fixed pipeline:
//!
//! 1. mix the dry input with `gain * previous output`, then limit;
//! 2. encode the mix into latent parameters;
//! 3. blend with the previous window's parameters, per dimension;
//! 4. apply performer manipulation to the blended means;
//! 5. sample a latent (or take the mean when `deterministic_latent`);
//! 6. decode.
//!
//! The post-manipulation parameters become the next window's "previous"
//! state, so a manipulation keeps circulating through later blends.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::codec::CodecModel;
use crate::domain::{AudioWindow, LatentParams, LatentVector};
use crate::error::{Error, Result};
use crate::rng::{gaussian_sample, Rng};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limiter {
    #[default]
    Tanh,
    HardClip,
}

impl Limiter {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Limiter::Tanh => x.tanh(),
            Limiter::HardClip => x.clamp(-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    /// Per-dimension latent feedback coefficient in [0, 1]. An empty vector
    /// means "all zero" and is expanded by [`FeedbackConfig::resolved`].
    pub alpha: Vec<f64>,
    pub audio_gain: f64,
    pub limiter: Limiter,
    /// Use the blended mean instead of sampling the latent distribution.
    pub deterministic_latent: bool,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            alpha: Vec::new(),
            audio_gain: 0.0,
            limiter: Limiter::Tanh,
            deterministic_latent: false,
        }
    }
}

impl FeedbackConfig {
    pub fn uniform(dims: usize, alpha: f64) -> Self {
        Self {
            alpha: vec![alpha; dims],
            ..Self::default()
        }
    }

    /// Copy with `alpha` expanded to `dims` entries (a single entry is broadcast).
    pub fn resolved(&self, dims: usize) -> Result<Self> {
        let mut out = self.clone();
        match self.alpha.len() {
            0 => out.alpha = vec![0.0; dims],
            1 => out.alpha = vec![self.alpha[0]; dims],
            n => Error::check_len("feedback alpha", dims, n)?,
        }
        out.validate(dims)?;
        Ok(out)
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        Error::check_len("feedback alpha", dims, self.alpha.len())?;
        if let Some(a) = self.alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::config(format!("alpha {a} outside [0, 1]")));
        }
        if !(self.audio_gain.is_finite() && self.audio_gain >= 0.0) {
            return Err(Error::config(format!(
                "audio gain {} must be finite and >= 0",
                self.audio_gain
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "value", rename_all = "snake_case")]
pub enum ManipEntry {
    Offset(f64),
    Override(f64),
}

/// Per-dimension mean adjustments; at most one entry per dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manipulation {
    entries: BTreeMap<usize, ManipEntry>,
}

impl Manipulation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, dim: usize, entry: ManipEntry) -> &mut Self {
        self.entries.insert(dim, entry);
        self
    }

    pub fn with(mut self, dim: usize, entry: ManipEntry) -> Self {
        self.set(dim, entry);
        self
    }

    pub fn clear(&mut self, dim: usize) {
        self.entries.remove(&dim);
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, dim: usize) -> Option<ManipEntry> {
        self.entries.get(&dim).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, ManipEntry)> + '_ {
        self.entries.iter().map(|(d, e)| (*d, *e))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeedbackState {
    pub prev_params: Option<LatentParams>,
    pub prev_output: Option<AudioWindow>,
}

/// Result of one pass through the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutput {
    pub output: AudioWindow,
    pub state: FeedbackState,
    /// Post-manipulation latent parameters.
    pub trace: LatentParams,
}

/// `limit(dry[i] + gain * prev[i])`; the previous output counts as silence
/// before the first window.
pub fn mix_input(dry: &AudioWindow, state: &FeedbackState, gain: f64, limiter: Limiter) -> AudioWindow {
    let prev = state
        .prev_output
        .as_ref()
        .map(|w| w.samples.as_slice())
        .unwrap_or(&[]);
    let samples = dry
        .samples
        .iter()
        .enumerate()
        .map(|(i, &x)| limiter.apply(x + gain * prev.get(i).copied().unwrap_or(0.0)))
        .collect();
    AudioWindow::new(samples, dry.sample_rate, dry.index)
}

/// Convex per-dimension blend toward the previous window's parameters,
/// applied to means and log-scales alike.
pub fn blend(current: &LatentParams, state: &FeedbackState, alpha: &[f64]) -> Result<LatentParams> {
    let dims = current.dims();
    Error::check_len("latent log_scale", dims, current.log_scale.len())?;
    Error::check_len("feedback alpha", dims, alpha.len())?;
    let Some(prev) = &state.prev_params else {
        return Ok(current.clone());
    };
    Error::check_len("previous latent mean", dims, prev.mean.len())?;
    Error::check_len("previous latent log_scale", dims, prev.log_scale.len())?;
    let mix = |p: f64, c: f64, a: f64| a * p + (1.0 - a) * c;
    Ok(LatentParams {
        mean: (0..dims).map(|d| mix(prev.mean[d], current.mean[d], alpha[d])).collect(),
        log_scale: (0..dims)
            .map(|d| mix(prev.log_scale[d], current.log_scale[d], alpha[d]))
            .collect(),
    })
}

pub fn apply_manipulation(params: &LatentParams, manip: &Manipulation) -> Result<LatentParams> {
    let mut out = params.clone();
    for (dim, entry) in manip.iter() {
        if dim >= out.dims() {
            return Err(Error::Range {
                what: "latent dimension",
                index: dim,
                limit: out.dims(),
            });
        }
        match entry {
            ManipEntry::Offset(delta) => out.mean[dim] += delta,
            ManipEntry::Override(value) => out.mean[dim] = value,
        }
    }
    Ok(out)
}

/// One window through the full pipeline. `config` must already be resolved
/// to the model's latent dimensionality.
pub fn process_window(
    model: &CodecModel,
    config: &FeedbackConfig,
    state: &FeedbackState,
    dry: &AudioWindow,
    manip: &Manipulation,
    rng: &mut Rng,
) -> Result<WindowOutput> {
    Error::check_len("dry input window", model.window_size(), dry.len())?;
    let mixed = mix_input(dry, state, config.audio_gain, config.limiter);
    let current = model.encode(&mixed)?;
    let blended = blend(&current, state, &config.alpha)?;
    let manipulated = apply_manipulation(&blended, manip)?;
    let z = if config.deterministic_latent {
        manipulated.mean.clone()
    } else {
        manipulated
            .mean
            .iter()
            .zip(&manipulated.log_scale)
            .map(|(m, l)| gaussian_sample(*m, *l, rng))
            .collect()
    };
    let mut output = model.decode(&LatentVector(z))?;
    output.index = dry.index;
    Ok(WindowOutput {
        state: FeedbackState {
            prev_params: Some(manipulated.clone()),
            prev_output: Some(output.clone()),
        },
        output,
        trace: manipulated,
    })
}

/// Stateful wrapper used by the renderer and the live engine. Parameter
/// changes are only taken between windows.
#[derive(Debug, Clone)]
pub struct LatentFeedbackLoop {
    model: CodecModel,
    config: FeedbackConfig,
    state: FeedbackState,
    manipulation: Manipulation,
}

impl LatentFeedbackLoop {
    pub fn new(model: CodecModel, config: &FeedbackConfig) -> Result<Self> {
        let config = config.resolved(model.latent_dims())?;
        Ok(Self {
            model,
            config,
            state: FeedbackState::default(),
            manipulation: Manipulation::new(),
        })
    }

    pub fn model(&self) -> &CodecModel {
        &self.model
    }

    pub fn config(&self) -> &FeedbackConfig {
        &self.config
    }

    pub fn state(&self) -> &FeedbackState {
        &self.state
    }

    pub fn manipulation(&self) -> &Manipulation {
        &self.manipulation
    }

    pub fn manipulation_mut(&mut self) -> &mut Manipulation {
        &mut self.manipulation
    }

    pub fn set_gain(&mut self, gain: f64) -> Result<()> {
        if !(gain.is_finite() && gain >= 0.0) {
            return Err(Error::config(format!("audio gain {gain} must be finite and >= 0")));
        }
        self.config.audio_gain = gain;
        Ok(())
    }

    /// Set one dimension's coefficient, or all of them when `dim` is `None`.
    pub fn set_alpha(&mut self, dim: Option<usize>, value: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::config(format!("alpha {value} outside [0, 1]")));
        }
        match dim {
            Some(d) if d >= self.config.alpha.len() => Err(Error::Range {
                what: "latent dimension",
                index: d,
                limit: self.config.alpha.len(),
            }),
            Some(d) => {
                self.config.alpha[d] = value;
                Ok(())
            }
            None => {
                self.config.alpha.fill(value);
                Ok(())
            }
        }
    }

    pub fn process(&mut self, dry: &AudioWindow, rng: &mut Rng) -> Result<(AudioWindow, LatentParams)> {
        let step = process_window(&self.model, &self.config, &self.state, dry, &self.manipulation, rng)?;
        self.state = step.state;
        Ok((step.output, step.trace))
    }
}

/// Header line of the latent trace CSV.
pub fn trace_csv_header(dims: usize) -> String {
    let mut line = String::from("index");
    for d in 0..dims {
        let _ = write!(line, ",mean_{d}");
    }
    for d in 0..dims {
        let _ = write!(line, ",log_scale_{d}");
    }
    line
}

/// One trace row: window index, then the means, then the log-scales.
pub fn trace_csv_row(index: u64, params: &LatentParams) -> String {
    let mut line = index.to_string();
    for v in params.mean.iter().chain(&params.log_scale) {
        let _ = write!(line, ",{v}");
    }
    line
}

/// Mean absolute change of the latent means between consecutive windows.
pub fn mean_abs_change(trace: &[LatentParams]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for pair in trace.windows(2) {
        for (a, b) in pair[0].mean.iter().zip(&pair[1].mean) {
            total += (b - a).abs();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodecConfig;

    fn cfg() -> CodecConfig {
        CodecConfig {
            window_size: 32,
            hop: 32,
            latent_dims: 4,
            hidden_units: 8,
            sample_rate: 8_000,
            beta: 0.01,
        }
    }

    fn noise_window(rng: &mut Rng, w: usize, index: u64) -> AudioWindow {
        AudioWindow::new((0..w).map(|_| rng.uniform_range(-1.0, 1.0)).collect(), 8_000, index)
    }

    fn params(mean: Vec<f64>, log_scale: Vec<f64>) -> LatentParams {
        LatentParams::new(mean, log_scale).unwrap()
    }

    #[test]
    fn mix_without_gain_is_limited_dry() {
        let dry = AudioWindow::new(vec![0.5, -1.0, 1.0, 0.0], 8_000, 0);
        let state = FeedbackState {
            prev_params: None,
            prev_output: Some(AudioWindow::new(vec![0.9; 4], 8_000, 0)),
        };
        assert_eq!(mix_input(&dry, &state, 0.0, Limiter::HardClip), dry);
        let tanh = mix_input(&dry, &state, 0.0, Limiter::Tanh);
        assert_eq!(tanh.samples[0], 0.5f64.tanh());
    }

    #[test]
    fn mix_first_window_ignores_gain() {
        let dry = AudioWindow::new(vec![0.2, 0.3], 8_000, 0);
        let out = mix_input(&dry, &FeedbackState::default(), 5.0, Limiter::HardClip);
        assert_eq!(out, dry);
    }

    #[test]
    fn mix_tanh_of_two() {
        let dry = AudioWindow::new(vec![1.0], 8_000, 0);
        let state = FeedbackState {
            prev_params: None,
            prev_output: Some(AudioWindow::new(vec![1.0], 8_000, 0)),
        };
        let out = mix_input(&dry, &state, 1.0, Limiter::Tanh);
        assert!((out.samples[0] - 0.964_027_580_075_816_9).abs() < 1e-12);
        let clip = mix_input(&dry, &state, 1.0, Limiter::HardClip);
        assert_eq!(clip.samples[0], 1.0);
    }

    #[test]
    fn blend_identities() {
        let cur = params(vec![1.0, 2.0], vec![0.0, -1.0]);
        let prev = params(vec![0.0, 5.0], vec![1.0, 1.0]);
        let state = FeedbackState {
            prev_params: Some(prev.clone()),
            prev_output: None,
        };
        assert_eq!(blend(&cur, &state, &[0.0, 0.0]).unwrap(), cur);
        assert_eq!(blend(&cur, &state, &[1.0, 1.0]).unwrap(), prev);
        let half = blend(&cur, &state, &[0.5, 0.5]).unwrap();
        assert_eq!(half.mean[0], 0.5);
        assert_eq!(blend(&cur, &FeedbackState::default(), &[0.7, 0.2]).unwrap(), cur);
        assert!(matches!(
            blend(&cur, &state, &[0.5]),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn manipulation_rules() {
        let p = params(vec![0.25, 1.0, 1.0, -4.0], vec![0.1; 4]);
        assert_eq!(apply_manipulation(&p, &Manipulation::new()).unwrap(), p);
        let m = Manipulation::new()
            .with(3, ManipEntry::Override(2.5))
            .with(0, ManipEntry::Offset(-1.0));
        let out = apply_manipulation(&p, &m).unwrap();
        assert_eq!(out.mean, vec![-0.75, 1.0, 1.0, 2.5]);
        assert_eq!(out.log_scale, p.log_scale);
        let bad = Manipulation::new().with(4, ManipEntry::Offset(1.0));
        assert!(matches!(
            apply_manipulation(&p, &bad),
            Err(Error::Range { index: 4, limit: 4, .. })
        ));
    }

    #[test]
    fn one_entry_per_dimension() {
        let mut m = Manipulation::new();
        m.set(1, ManipEntry::Offset(1.0));
        m.set(1, ManipEntry::Override(3.0));
        assert_eq!(m.iter().count(), 1);
        assert_eq!(m.get(1), Some(ManipEntry::Override(3.0)));
    }

    #[test]
    fn collapsed_pipeline_is_plain_autoencoding() {
        let mut rng = Rng::seeded(1);
        let model = CodecModel::init(cfg(), &mut rng).unwrap();
        let config = FeedbackConfig {
            limiter: Limiter::HardClip,
            deterministic_latent: true,
            ..FeedbackConfig::uniform(4, 0.0)
        };
        let mut state = FeedbackState::default();
        for i in 0..5 {
            let dry = noise_window(&mut rng, 32, i);
            let step = process_window(&model, &config, &state, &dry, &Manipulation::new(), &mut rng).unwrap();
            let plain = model
                .decode(&LatentVector(model.encode(&dry).unwrap().mean))
                .unwrap();
            for (a, b) in step.output.samples.iter().zip(&plain.samples) {
                assert!((a - b).abs() < 1e-6);
            }
            assert_eq!(step.output.index, i);
            state = step.state;
        }
    }

    #[test]
    fn frozen_latent_with_alpha_one() {
        let mut rng = Rng::seeded(3);
        let model = CodecModel::init(cfg(), &mut rng).unwrap();
        let mut lp = LatentFeedbackLoop::new(model, &FeedbackConfig::uniform(4, 1.0)).unwrap();
        let (_, first) = lp.process(&noise_window(&mut rng, 32, 0), &mut rng).unwrap();
        for i in 1..20 {
            let (_, trace) = lp.process(&noise_window(&mut rng, 32, i), &mut rng).unwrap();
            assert_eq!(trace, first);
        }
    }

    #[test]
    fn override_circulates_under_full_feedback() {
        let mut rng = Rng::seeded(4);
        let model = CodecModel::init(cfg(), &mut rng).unwrap();
        let mut config = FeedbackConfig::uniform(4, 0.3);
        config.alpha[2] = 1.0;
        config.audio_gain = 0.5;
        let mut lp = LatentFeedbackLoop::new(model, &config).unwrap();
        for i in 0..3 {
            lp.process(&noise_window(&mut rng, 32, i), &mut rng).unwrap();
        }
        lp.manipulation_mut().set(2, ManipEntry::Override(-1.75));
        let (_, t) = lp.process(&noise_window(&mut rng, 32, 3), &mut rng).unwrap();
        assert_eq!(t.mean[2], -1.75);
        lp.manipulation_mut().clear(2);
        for i in 4..30 {
            let (_, t) = lp.process(&noise_window(&mut rng, 32, i), &mut rng).unwrap();
            assert_eq!(t.mean[2], -1.75);
        }
    }

    #[test]
    fn loop_parameter_updates_are_validated() {
        let model = CodecModel::zeros(cfg()).unwrap();
        let mut lp = LatentFeedbackLoop::new(model, &FeedbackConfig::default()).unwrap();
        assert_eq!(lp.config().alpha, vec![0.0; 4]);
        assert!(lp.set_alpha(Some(4), 0.5).is_err());
        assert!(lp.set_alpha(None, 1.5).is_err());
        lp.set_alpha(None, 0.25).unwrap();
        lp.set_alpha(Some(1), 0.75).unwrap();
        assert_eq!(lp.config().alpha, vec![0.25, 0.75, 0.25, 0.25]);
        assert!(lp.set_gain(-0.1).is_err());
        assert!(lp.set_gain(f64::INFINITY).is_err());
    }

    #[test]
    fn config_resolution() {
        assert_eq!(
            FeedbackConfig { alpha: vec![0.4], ..Default::default() }.resolved(3).unwrap().alpha,
            vec![0.4; 3]
        );
        assert!(FeedbackConfig { alpha: vec![0.4, 0.1], ..Default::default() }.resolved(3).is_err());
        assert!(FeedbackConfig { alpha: vec![1.2], ..Default::default() }.resolved(3).is_err());
        assert!(FeedbackConfig { audio_gain: -1.0, ..Default::default() }.resolved(3).is_err());
    }

    #[test]
    fn trace_rows() {
        let p = params(vec![0.5, -1.0], vec![0.0, 2.0]);
        assert_eq!(trace_csv_header(2), "index,mean_0,mean_1,log_scale_0,log_scale_1");
        assert_eq!(trace_csv_row(7, &p), "7,0.5,-1,0,2");
    }

    proptest::proptest! {
        #[test]
        fn limiter_bounds(dry in proptest::collection::vec(-3.0f64..3.0, 8),
                          prev in proptest::collection::vec(-1.0f64..1.0, 8),
                          gain in 0.0f64..4.0) {
            let state = FeedbackState {
                prev_params: None,
                prev_output: Some(AudioWindow::new(prev, 8_000, 0)),
            };
            let dry = AudioWindow::new(dry, 8_000, 1);
            let clip = mix_input(&dry, &state, gain, Limiter::HardClip);
            proptest::prop_assert!(clip.samples.iter().all(|s| (-1.0..=1.0).contains(s)));
            let soft = mix_input(&dry, &state, gain, Limiter::Tanh);
            proptest::prop_assert!(soft.samples.iter().all(|s| s.abs() < 1.0));
        }
    }
}
