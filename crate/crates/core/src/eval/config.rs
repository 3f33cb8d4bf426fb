use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{MlpBaselineConfig, MlpInput};
use crate::error::{Error, Result};
use crate::numeric::AdamConfig;
use crate::rcn::RcnConfig;
use crate::synth::DatasetConfig;

/// Optimisation schedule shared by every trainable model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Share of the train split held out for checkpoint selection.
    pub validation_fraction: f64,
    /// Score both test splits after every epoch.
    pub evaluate_each_epoch: bool,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 40, batch_size: 64, validation_fraction: 0.05, evaluate_each_epoch: true, adam: AdamConfig::default() }
    }
}

/// Widths shared by the Q-Only, I-Only and Q+I baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSettings {
    pub embedding_width: usize,
    pub question_width: usize,
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        let d = MlpBaselineConfig::default();
        Self { embedding_width: d.embedding_width, question_width: d.question_width, hidden: d.hidden, dropout: d.dropout }
    }
}

/// Everything a `train` run depends on besides the seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub rcn: RcnConfig,
    pub baseline: BaselineSettings,
    pub train: TrainConfig,
}

/// The defaults, with a comment on every key.
pub const DEFAULT_CONFIG_TOML: &str = r#"# Synthetic data.
[dataset]
scenes = 8000                          # total scenes over all splits
split_ratios = [0.625, 0.125, 0.25]    # train, test-simple, test-complex
# train template weights: simple, attribute, background, positional, negation, absurd
train_mix = [0.4, 0.12, 0.12, 0.12, 0.12, 0.12]
informative_probability = 0.8          # prefer slot fillers with answers strictly between 0 and the class total

[dataset.scene]
image_width = 256.0
image_height = 256.0
grid = 4                               # background grid is grid x grid patches
feature_width = 32                     # K, must equal rcn.feature_width
max_count = 15                         # largest answer, must equal rcn.max_count
count_ratio = 0.85                     # P(k) ~ count_ratio^(k-1) for the focus class
zero_count_probability = 0.05
max_extra_objects = 4                  # objects of other classes
max_distractors = 2                    # proposals carrying background features
duplicate_probability = 0.3            # chance an object gets a second, overlapping proposal
noise = 0.2                            # feature noise norm
context_weight = 0.3                   # weight of the global scene gist in object features
min_box = 20.0
max_box = 52.0
max_overlap = 0.15                     # IoU ceiling between distinct objects
placement_retries = 200
dictionary_seed = 7                    # seed of the word-to-feature dictionary

[rcn]
feature_width = 32
embedding_width = 32
question_width = 32                    # GRU hidden width
relation_hidden = [64, 64, 64]         # pair network g hidden layers
relation_output = 64
readout_hidden = [64]                  # readout f hidden layers
readout_output = 64
head_hidden = 64
max_count = 15
use_background = true
use_location = true
dropout = 0.3                          # on the question vector

# Q-Only, I-Only and Q+I.
[baseline]
embedding_width = 32
question_width = 32
hidden = 64
dropout = 0.3

[train]
epochs = 40
batch_size = 64
validation_fraction = 0.05
evaluate_each_epoch = true

[train.adam]
learning_rate = 0.0007
beta1 = 0.9
beta2 = 0.999
epsilon = 1e-8
"#;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.rcn.validate()?;
        let scene = &self.dataset.scene;
        if scene.feature_width != self.rcn.feature_width {
            return Err(Error::Shape { context: "rcn vs dataset feature width".into(), expected: scene.feature_width, actual: self.rcn.feature_width });
        }
        if scene.max_count != self.rcn.max_count {
            return Err(Error::Shape { context: "rcn vs dataset max_count".into(), expected: scene.max_count, actual: self.rcn.max_count });
        }
        let t = &self.train;
        if t.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&t.validation_fraction) {
            return Err(Error::InvalidArgument("validation_fraction must lie in [0, 1)".into()));
        }
        if !(t.adam.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn mlp_config(&self, input: MlpInput) -> MlpBaselineConfig {
        let b = &self.baseline;
        MlpBaselineConfig {
            input,
            feature_width: self.dataset.scene.feature_width,
            embedding_width: b.embedding_width,
            question_width: b.question_width,
            hidden: b.hidden,
            max_count: self.dataset.scene.max_count,
            dropout: b.dropout,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_defaults_match_code() {
        assert_eq!(ExperimentConfig::from_toml(DEFAULT_CONFIG_TOML).unwrap(), ExperimentConfig::default());
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn toml_round_trip_and_overrides() {
        let cfg = ExperimentConfig::from_toml("[train]\nepochs = 2\n[rcn]\nuse_location = false\n").unwrap();
        assert_eq!(cfg.train.epochs, 2);
        assert!(!cfg.rcn.use_location);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn inconsistent_widths_are_rejected() {
        assert!(ExperimentConfig::from_toml("[rcn]\nfeature_width = 8\n").is_err());
        assert!(ExperimentConfig::from_toml("[train]\nbatch_size = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("[train]\nbogus = 1\n").is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
        b.train.epochs += 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
