use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SPATIAL_WIDTH;

/// Architecture and ablation switches for the relational counting network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RcnConfig {
    /// Width `K` of proposal and patch features.
    pub feature_width: usize,
    /// Word-embedding width fed to the question GRU.
    pub embedding_width: usize,
    /// GRU hidden width, i.e. the question vector width.
    pub question_width: usize,
    /// Hidden widths of both pair networks (three layers by default).
    pub relation_hidden: Vec<usize>,
    /// Output width of both pair networks.
    pub relation_output: usize,
    /// Hidden widths of both readout networks (one layer by default).
    pub readout_hidden: Vec<usize>,
    pub readout_output: usize,
    /// Hidden width of the count head.
    pub head_hidden: usize,
    /// Largest count class; logits cover `0..=max_count`.
    pub max_count: usize,
    pub use_background: bool,
    pub use_location: bool,
    pub dropout: f64,
}

impl Default for RcnConfig {
    fn default() -> Self {
        Self {
            feature_width: 32,
            embedding_width: 32,
            question_width: 32,
            relation_hidden: vec![64, 64, 64],
            relation_output: 64,
            readout_hidden: vec![64],
            readout_output: 64,
            head_hidden: 64,
            max_count: 15,
            use_background: true,
            use_location: true,
            dropout: 0.3,
        }
    }
}

impl RcnConfig {
    /// Width of one pair input: both feature vectors, the spatial relation and the question.
    pub fn pair_input_width(&self) -> usize {
        2 * self.feature_width + SPATIAL_WIDTH + self.question_width
    }

    pub fn classes(&self) -> usize {
        self.max_count + 1
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("feature_width", self.feature_width),
            ("embedding_width", self.embedding_width),
            ("question_width", self.question_width),
            ("relation_output", self.relation_output),
            ("readout_output", self.readout_output),
            ("head_hidden", self.head_hidden),
        ];
        for (name, w) in widths {
            if w == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if self.relation_hidden.iter().chain(&self.readout_hidden).any(|&w| w == 0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".into()));
        }
        if self.max_count < 1 {
            return Err(Error::InvalidArgument("max_count must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}
