//! Engine configuration: one TOML file with a section per subsystem.
//! Every key is optional; `configs/dualloop.toml` lists all defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{CodecConfig, CodecModel};
use crate::error::{Error, Result};
use crate::feedback::FeedbackConfig;
use crate::interaction::InteractionConfig;
use crate::mdrnn::{MdrnnConfig, MdrnnModel};
use crate::rng::Rng;
use crate::router::ports::PortSpec;
use crate::router::MappingTable;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Used when no `--seed` is given. Absent means pick one from OS entropy.
    pub seed: Option<u64>,
    pub codec: CodecSection,
    pub feedback: FeedbackConfig,
    pub mdrnn: MdrnnSection,
    pub interaction: InteractionConfig,
    pub router: RouterConfig,
    pub server: ServerConfig,
    pub run: RunConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecSection {
    #[serde(flatten)]
    pub model: CodecConfig,
    /// Trained model JSON. Absent means a freshly initialised model.
    pub model_path: Option<PathBuf>,
    pub training: CodecTraining,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecTraining {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Corpus size when training without a corpus file.
    pub synthetic_windows: usize,
}

impl Default for CodecTraining {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-3,
            synthetic_windows: 64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdrnnSection {
    #[serde(flatten)]
    pub model: MdrnnConfig,
    pub model_path: Option<PathBuf>,
    pub training: MdrnnTraining,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdrnnTraining {
    pub epochs: usize,
    pub learning_rate: f64,
    pub synthetic_sequences: usize,
    pub sequence_length: usize,
    /// Mean gap between synthetic gesture steps, in seconds.
    pub mean_dt: f64,
}

impl Default for MdrnnTraining {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 5e-3,
            synthetic_sequences: 16,
            sequence_length: 64,
            mean_dt: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterConfig {
    pub midi_in: PortSpec,
    pub midi_out: PortSpec,
    pub mapping: MappingTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub enabled: bool,
    pub bind: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            bind: "127.0.0.1:9010".into(),
        }
    }
}

/// Live engine settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Run the latent-feedback audio path.
    pub audio: bool,
    /// Run the call-and-response control path.
    pub control: bool,
    /// Dry input for the audio path, looped. Absent means silence.
    pub input_wav: Option<PathBuf>,
    /// Where the audio path's output is written on shutdown.
    pub output_wav: Option<PathBuf>,
    pub trace_csv: Option<PathBuf>,
    pub session_log: PathBuf,
    /// Stop after this many seconds. Absent means run until interrupted.
    pub duration: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            audio: true,
            control: true,
            input_wav: None,
            output_wav: Some("out.wav".into()),
            trace_csv: None,
            session_log: "session.jsonl".into(),
            duration: None,
        }
    }
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        reject_unknown_keys(&table, "codec", &CodecSection::default())?;
        reject_unknown_keys(&table, "mdrnn", &MdrnnSection::default())?;
        let config: EngineConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    /// Load `path`, or use defaults when none is given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.codec.model.validate()?;
        self.feedback.resolved(self.codec.model.latent_dims)?;
        self.mdrnn.model.validate()?;
        self.interaction.validate()?;
        self.router.mapping.validate()?;
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.codec.training.learning_rate) || !positive(self.mdrnn.training.learning_rate) {
            return Err(Error::config("learning rates must be > 0"));
        }
        if !positive(self.mdrnn.training.mean_dt) || self.mdrnn.training.sequence_length < 2 {
            return Err(Error::config("mdrnn training needs mean_dt > 0 and sequence_length >= 2"));
        }
        if let Some(d) = self.run.duration {
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::config("run.duration must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// The configured codec, or a fresh one drawn from `rng`. A loaded
    /// model must agree with the `[codec]` section.
    pub fn codec_model(&self, rng: &mut Rng) -> Result<CodecModel> {
        match &self.codec.model_path {
            Some(p) => {
                let model = CodecModel::load(self.resolve(p))?;
                if model.config != self.codec.model {
                    return Err(Error::config(format!(
                        "codec model {} does not match the [codec] section",
                        p.display()
                    )));
                }
                Ok(model)
            }
            None => CodecModel::init(self.codec.model.clone(), rng),
        }
    }

    pub fn mdrnn_model(&self, rng: &mut Rng) -> Result<MdrnnModel> {
        match &self.mdrnn.model_path {
            Some(p) => {
                let model = MdrnnModel::load(self.resolve(p))?;
                if model.config != self.mdrnn.model {
                    return Err(Error::config(format!(
                        "mdrnn model {} does not match the [mdrnn] section",
                        p.display()
                    )));
                }
                Ok(model)
            }
            None => MdrnnModel::init(self.mdrnn.model.clone(), rng),
        }
    }
}

/// Flattened sections cannot use `deny_unknown_fields`; check by hand.
fn reject_unknown_keys<S: Serialize>(table: &toml::Table, name: &str, defaults: &S) -> Result<()> {
    let Some(section) = table.get(name).and_then(toml::Value::as_table) else {
        return Ok(());
    };
    let known = toml::Table::try_from(defaults).expect("section defaults serialize");
    match section
        .keys()
        .find(|k| !known.contains_key(*k) && k.as_str() != "model_path")
    {
        Some(k) => Err(Error::config(format!("unknown key `{k}` in [{name}]"))),
        None => Ok(()),
    }
}
