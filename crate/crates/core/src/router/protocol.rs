//! JSON messages exchanged with the control surface over WebSocket.
//!
//! One JSON object per message:
//!
//! | field     | type                     | used by                         |
//! |-----------|--------------------------|---------------------------------|
//! | `t`       | seconds                  | all                             |
//! | `type`    | `control` `latent` `mode` `gain` `alpha` | all            |
//! | `channel` | int 0..7                 | `control`                       |
//! | `dim`     | int                      | `latent`, `alpha` (optional)    |
//! | `value`   | number                   | `control`, `latent`, `gain`, `alpha` |
//! | `mode`    | `user` or `model`        | `mode`                          |
//! | `op`      | `offset` or `override`   | `latent` (default `offset`)     |
//! | `source`  | `human` or `model`       | outbound `control` only         |
//! | `trace`   | array of numbers         | outbound `latent` only          |
//!
//! A `latent` message adds `value` to the latent mean on `dim` (`offset`)
//! or replaces it (`override`); without `value` it clears that dimension.
//! An `alpha` message without `dim` sets every dimension.
//! Once per audio window the engine sends a `latent`
//! message whose `trace` holds the latent means it just decoded.
//! Unknown fields are ignored.

use serde::{Deserialize, Serialize};

use crate::domain::{ControlEvent, Source, CONTROL_CHANNELS};
use crate::error::{Error, Result};
use crate::feedback::ManipEntry;
use crate::interaction::LoopMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageType {
    Control,
    Latent,
    Mode,
    Gain,
    Alpha,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentOp {
    #[default]
    Offset,
    Override,
}

impl LatentOp {
    pub fn entry(self, value: f64) -> ManipEntry {
        match self {
            LatentOp::Offset => ManipEntry::Offset(value),
            LatentOp::Override => ManipEntry::Override(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub t: f64,
    #[serde(rename = "type")]
    pub kind: MessageType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<LoopMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<LatentOp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Source>,
}

/// Validated form of a [`WireMessage`].
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Control(ControlEvent),
    /// `entry: None` clears the dimension.
    Latent { t: f64, dim: usize, entry: Option<ManipEntry> },
    /// Latent means of one processed window.
    Trace { t: f64, means: Vec<f64> },
    Mode { t: f64, mode: LoopMode },
    Gain { t: f64, value: f64 },
    Alpha { t: f64, dim: Option<usize>, value: f64 },
}

fn require<T>(field: Option<T>, name: &str, kind: MessageType) -> Result<T> {
    field.ok_or_else(|| Error::Protocol(format!("{kind:?} message missing `{name}`")))
}

fn finite(v: f64, name: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Protocol(format!("`{name}` must be finite")))
    }
}

impl Command {
    pub fn time(&self) -> f64 {
        match self {
            Command::Control(ev) => ev.time,
            Command::Latent { t, .. }
            | Command::Mode { t, .. }
            | Command::Gain { t, .. }
            | Command::Alpha { t, .. }
            | Command::Trace { t, .. } => *t,
        }
    }

    pub fn from_wire(msg: &WireMessage) -> Result<Self> {
        let t = finite(msg.t, "t")?;
        if t < 0.0 {
            return Err(Error::Protocol("`t` must be >= 0".into()));
        }
        let kind = msg.kind;
        Ok(match kind {
            MessageType::Control => {
                let channel = require(msg.channel, "channel", kind)?;
                let value = finite(require(msg.value, "value", kind)?, "value")?;
                if channel >= CONTROL_CHANNELS || !(0.0..=1.0).contains(&value) {
                    return Err(Error::Protocol(format!(
                        "control channel {channel} / value {value} out of range"
                    )));
                }
                Command::Control(ControlEvent {
                    time: t,
                    channel,
                    value,
                    source: msg.source.unwrap_or(Source::Human),
                })
            }
            MessageType::Latent if msg.trace.is_some() => {
                let means = msg.trace.clone().unwrap_or_default();
                for v in &means {
                    finite(*v, "trace")?;
                }
                Command::Trace { t, means }
            }
            MessageType::Latent => Command::Latent {
                t,
                dim: require(msg.dim, "dim", kind)?,
                entry: msg
                    .value
                    .map(|v| finite(v, "value"))
                    .transpose()?
                    .map(|v| msg.op.unwrap_or_default().entry(v)),
            },
            MessageType::Mode => Command::Mode {
                t,
                mode: require(msg.mode, "mode", kind)?,
            },
            MessageType::Gain => {
                let value = finite(require(msg.value, "value", kind)?, "value")?;
                if value < 0.0 {
                    return Err(Error::Protocol("gain must be >= 0".into()));
                }
                Command::Gain { t, value }
            }
            MessageType::Alpha => {
                let value = finite(require(msg.value, "value", kind)?, "value")?;
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::Protocol("alpha must be in [0, 1]".into()));
                }
                Command::Alpha {
                    t,
                    dim: msg.dim,
                    value,
                }
            }
        })
    }

    pub fn to_wire(&self) -> WireMessage {
        let base = |t, kind| WireMessage {
            t,
            kind,
            channel: None,
            dim: None,
            value: None,
            mode: None,
            op: None,
            trace: None,
            source: None,
        };
        match self.clone() {
            Command::Control(ev) => WireMessage {
                channel: Some(ev.channel),
                value: Some(ev.value),
                source: Some(ev.source),
                ..base(ev.time, MessageType::Control)
            },
            Command::Latent { t, dim, entry } => WireMessage {
                dim: Some(dim),
                value: entry.map(|e| match e {
                    ManipEntry::Offset(v) | ManipEntry::Override(v) => v,
                }),
                op: entry.map(|e| match e {
                    ManipEntry::Offset(_) => LatentOp::Offset,
                    ManipEntry::Override(_) => LatentOp::Override,
                }),
                ..base(t, MessageType::Latent)
            },
            Command::Mode { t, mode } => WireMessage {
                mode: Some(mode),
                ..base(t, MessageType::Mode)
            },
            Command::Gain { t, value } => WireMessage {
                value: Some(value),
                ..base(t, MessageType::Gain)
            },
            Command::Alpha { t, dim, value } => WireMessage {
                dim,
                value: Some(value),
                ..base(t, MessageType::Alpha)
            },
            Command::Trace { t, means } => WireMessage {
                trace: Some(means),
                ..base(t, MessageType::Latent)
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_wire()).expect("wire message always serializes")
    }
}

/// Parse and validate one message. Malformed JSON and schema violations
/// are both protocol errors.
pub fn parse_message(text: &str) -> Result<Command> {
    let wire: WireMessage =
        serde_json::from_str(text).map_err(|e| Error::Protocol(format!("malformed message: {e}")))?;
    Command::from_wire(&wire)
}
