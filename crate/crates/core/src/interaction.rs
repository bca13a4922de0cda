//! Call-and-response between a performer and the MDRNN.
//!
//! The performer leads while active. Once no human event has arrived for
//! `switchover` seconds the model takes the lead: it samples a full
//! eight-channel step plus the delay before it, emits it when due, feeds
//! that step back into itself and schedules the next one. Any human event
//! hands the lead straight back and cancels whatever the model had queued.
//! Human events always advance the network state, so the model continues
//! from where the performer left off.

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::domain::{ControlEvent, Source, CONTROL_CHANNELS};
use crate::error::{Error, Result};
use crate::mdrnn::{GestureSample, GestureVector, HiddenState, MdrnnModel, MixtureParams, INPUT_DIM};
use crate::rng::Rng;

/// Slack for comparing simulated times built from different products of
/// the tick length.
const TIME_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LoopMode {
    #[serde(rename = "user")]
    UserLead,
    #[serde(rename = "model")]
    ModelLead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractionConfig {
    /// Idle time after the last human event before the model takes over.
    pub switchover: f64,
    pub pi_temperature: f64,
    pub sigma_temperature: f64,
    /// Cap on model emissions per second.
    pub max_model_rate: f64,
    /// Engine tick in seconds.
    pub tick: f64,
    /// Minimum simulated length for scripted sessions.
    pub simulation_seconds: f64,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        Self {
            switchover: 0.1,
            pi_temperature: 1.0,
            sigma_temperature: 1.0,
            max_model_rate: 100.0,
            tick: crate::clock::DEFAULT_TICK,
            simulation_seconds: 2.0,
        }
    }
}

impl InteractionConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.switchover) {
            return Err(Error::config("switchover must be > 0"));
        }
        if !positive(self.pi_temperature) || !positive(self.sigma_temperature) {
            return Err(Error::config("temperatures must be > 0"));
        }
        if !positive(self.max_model_rate) {
            return Err(Error::config("max_model_rate must be > 0"));
        }
        if !positive(self.tick) {
            return Err(Error::config("tick must be > 0"));
        }
        if !(self.simulation_seconds.is_finite() && self.simulation_seconds >= 0.0) {
            return Err(Error::config("simulation_seconds must be >= 0"));
        }
        Ok(())
    }

    pub fn min_model_interval(&self) -> f64 {
        1.0 / self.max_model_rate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendingEvent {
    pub due: f64,
    pub sample: GestureSample,
}

#[derive(Debug, Clone)]
pub struct InteractionState {
    config: InteractionConfig,
    mode: LoopMode,
    last_user_time: f64,
    last_input_time: f64,
    rnn_state: HiddenState,
    last_vector: GestureVector,
    controls: [f64; CONTROL_CHANNELS],
    pending: Option<PendingEvent>,
    prediction: Option<MixtureParams>,
    last_model_time: Option<f64>,
}

impl InteractionState {
    pub fn new(config: InteractionConfig, model: &MdrnnModel) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            mode: LoopMode::UserLead,
            last_user_time: 0.0,
            last_input_time: 0.0,
            rnn_state: model.initial_state(),
            last_vector: [0.0; INPUT_DIM],
            controls: [0.0; CONTROL_CHANNELS],
            pending: None,
            prediction: None,
            last_model_time: None,
        })
    }

    pub fn config(&self) -> &InteractionConfig {
        &self.config
    }

    pub fn mode(&self) -> LoopMode {
        self.mode
    }

    pub fn pending(&self) -> Option<&PendingEvent> {
        self.pending.as_ref()
    }

    pub fn controls(&self) -> &[f64; CONTROL_CHANNELS] {
        &self.controls
    }

    pub fn last_vector(&self) -> &GestureVector {
        &self.last_vector
    }

    pub fn last_user_time(&self) -> f64 {
        self.last_user_time
    }

    /// Take the lead back for the performer and pass the event through.
    pub fn on_user_event(&mut self, ev: &ControlEvent, model: &MdrnnModel) -> Result<Vec<ControlEvent>> {
        if ev.source != Source::Human {
            return Err(Error::config("on_user_event only accepts human events"));
        }
        ev.validate()?;
        if ev.time < self.last_input_time {
            return Err(Error::Ordering {
                time: ev.time,
                previous: self.last_input_time,
            });
        }
        self.controls[ev.channel] = ev.value;
        let dt = ev.time - self.last_input_time;
        self.feed(dt, model)?;
        self.mode = LoopMode::UserLead;
        self.pending = None;
        self.last_user_time = ev.time;
        self.last_input_time = ev.time;
        Ok(vec![*ev])
    }

    /// Advance to `clock.now()`: hand over after the idle threshold, emit a
    /// due model step, schedule the next one.
    pub fn tick(&mut self, clock: &Clock, model: &MdrnnModel, rng: &mut Rng) -> Result<Vec<ControlEvent>> {
        let now = clock.now();
        match self.mode {
            LoopMode::UserLead => {
                if now - self.last_user_time + TIME_EPSILON >= self.config.switchover {
                    self.mode = LoopMode::ModelLead;
                    self.schedule(now, model, rng)?;
                }
                Ok(Vec::new())
            }
            LoopMode::ModelLead => {
                let due = match &self.pending {
                    Some(p) => p.due <= now + TIME_EPSILON,
                    None => {
                        self.schedule(now, model, rng)?;
                        false
                    }
                };
                if !due {
                    return Ok(Vec::new());
                }
                let pending = self.pending.take().expect("pending checked above");
                let out = self.emit(now, &pending.sample, model)?;
                self.schedule(now, model, rng)?;
                Ok(out)
            }
        }
    }

    /// Force a mode, e.g. from the control surface.
    pub fn set_mode(&mut self, mode: LoopMode, now: f64, model: &MdrnnModel, rng: &mut Rng) -> Result<()> {
        match mode {
            LoopMode::UserLead => {
                self.mode = LoopMode::UserLead;
                self.pending = None;
                self.last_user_time = self.last_user_time.max(now);
            }
            LoopMode::ModelLead if self.mode != LoopMode::ModelLead => {
                self.mode = LoopMode::ModelLead;
                self.schedule(now, model, rng)?;
            }
            LoopMode::ModelLead => {}
        }
        Ok(())
    }

    fn feed(&mut self, dt: f64, model: &MdrnnModel) -> Result<()> {
        let mut v = [0.0; INPUT_DIM];
        v[0] = dt;
        v[1..].copy_from_slice(&self.controls);
        let (params, state) = model.step(&v, &self.rnn_state)?;
        self.rnn_state = state;
        self.last_vector = v;
        self.prediction = Some(params);
        Ok(())
    }

    fn schedule(&mut self, now: f64, model: &MdrnnModel, rng: &mut Rng) -> Result<()> {
        let params = match self.prediction.take() {
            Some(p) => p,
            None => {
                let (p, s) = model.step(&self.last_vector, &self.rnn_state)?;
                self.rnn_state = s;
                p
            }
        };
        let mut sample = model.sample(&params, self.config.pi_temperature, self.config.sigma_temperature, rng);
        sample.dt = sample.dt.max(self.config.min_model_interval());
        self.prediction = Some(params);
        self.pending = Some(PendingEvent {
            due: now + sample.dt,
            sample,
        });
        Ok(())
    }

    fn emit(&mut self, now: f64, sample: &GestureSample, model: &MdrnnModel) -> Result<Vec<ControlEvent>> {
        debug_assert!(self.last_model_time.is_none_or(|t| now > t));
        let events = sample
            .controls()
            .iter()
            .enumerate()
            .map(|(channel, &value)| ControlEvent {
                time: now,
                channel,
                value,
                source: Source::Model,
            })
            .collect();
        self.controls.copy_from_slice(sample.controls());
        self.feed(sample.dt, model)?;
        self.last_input_time = now;
        self.last_model_time = Some(now);
        Ok(events)
    }
}
