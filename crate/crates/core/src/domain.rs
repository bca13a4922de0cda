//! Plain value types shared by the audio and control paths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of continuous controllers the control-space instrument listens to.
pub const CONTROL_CHANNELS: usize = 8;

/// One block of mono audio, `samples.len()` equal to the configured window size.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioWindow {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub index: u64,
}

impl AudioWindow {
    pub fn new(samples: Vec<f64>, sample_rate: u32, index: u64) -> Self {
        Self {
            samples,
            sample_rate,
            index,
        }
    }

    pub fn silent(len: usize, sample_rate: u32, index: u64) -> Self {
        Self::new(vec![0.0; len], sample_rate, index)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Start time of the window in seconds, assuming hops of `hop` samples.
    pub fn start_time(&self, hop: usize) -> f64 {
        (self.index as f64 * hop as f64) / f64::from(self.sample_rate)
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.is_finite())
    }
}

/// A concrete point in latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVector(pub Vec<f64>);

impl LatentVector {
    pub fn zeros(dims: usize) -> Self {
        Self(vec![0.0; dims])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Diagonal Gaussian over the latent space. Scales are kept as natural logs,
/// so `exp(log_scale)` is positive for every finite entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentParams {
    pub mean: Vec<f64>,
    pub log_scale: Vec<f64>,
}

impl LatentParams {
    pub fn new(mean: Vec<f64>, log_scale: Vec<f64>) -> Result<Self> {
        Error::check_len("latent log_scale", mean.len(), log_scale.len())?;
        Ok(Self { mean, log_scale })
    }

    pub fn zeros(dims: usize) -> Self {
        Self {
            mean: vec![0.0; dims],
            log_scale: vec![0.0; dims],
        }
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn scale(&self, dim: usize) -> f64 {
        self.log_scale[dim].exp()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().chain(&self.log_scale).all(|v| v.is_finite())
    }
}

/// Who produced a control event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Model,
}

/// A normalized controller update on one of the eight channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlEvent {
    pub time: f64,
    pub channel: usize,
    pub value: f64,
    pub source: Source,
}

impl ControlEvent {
    pub fn new(time: f64, channel: usize, value: f64, source: Source) -> Result<Self> {
        let ev = Self {
            time,
            channel,
            value,
            source,
        };
        ev.validate()?;
        Ok(ev)
    }

    pub fn human(time: f64, channel: usize, value: f64) -> Result<Self> {
        Self::new(time, channel, value, Source::Human)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel >= CONTROL_CHANNELS {
            return Err(Error::Range {
                what: "control channel",
                index: self.channel,
                limit: CONTROL_CHANNELS,
            });
        }
        if !(0.0..=1.0).contains(&self.value) {
            return Err(Error::config(format!(
                "control value {} outside [0, 1]",
                self.value
            )));
        }
        if !(self.time.is_finite() && self.time >= 0.0) {
            return Err(Error::config(format!("invalid event time {}", self.time)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_event_bounds() {
        assert!(ControlEvent::human(0.0, 7, 1.0).is_ok());
        assert!(matches!(
            ControlEvent::human(0.0, 8, 0.5),
            Err(Error::Range { index: 8, .. })
        ));
        assert!(ControlEvent::human(0.0, 0, 1.01).is_err());
        assert!(ControlEvent::human(-1.0, 0, 0.5).is_err());
    }

    #[test]
    fn latent_params_length_check() {
        assert!(LatentParams::new(vec![0.0; 3], vec![0.0; 2]).is_err());
        let p = LatentParams::new(vec![1.0], vec![0.0]).unwrap();
        assert_eq!(p.scale(0), 1.0);
    }

    #[test]
    fn window_start_time() {
        let w = AudioWindow::silent(512, 16000, 3);
        assert_eq!(w.start_time(512), 3.0 * 512.0 / 16000.0);
    }
}
