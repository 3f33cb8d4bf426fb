//! Versioned text container for trained models: architecture config, vocabulary and every
//! parameter block with its shape.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Parameterized;
use crate::question::Vocabulary;

pub const FORMAT: &str = "tally-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Architecture tag, e.g. `rcn` or `qi`.
    pub kind: String,
    pub config: serde_json::Value,
    pub vocabulary: Vocabulary,
    pub blocks: Vec<BlockRecord>,
}

impl Checkpoint {
    pub fn capture<C: Serialize, P: Parameterized>(kind: &str, config: &C, vocabulary: &Vocabulary, params: &P) -> Result<Self> {
        let blocks = params
            .blocks()
            .into_iter()
            .map(|b| BlockRecord { name: b.name, rows: b.rows, cols: b.cols, data: b.data.to_vec() })
            .collect();
        Ok(Self {
            format: FORMAT.into(),
            version: VERSION,
            kind: kind.into(),
            config: serde_json::to_value(config)?,
            vocabulary: vocabulary.clone(),
            blocks,
        })
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }

    pub fn config<C: DeserializeOwned>(&self) -> Result<C> {
        Ok(serde_json::from_value(self.config.clone())?)
    }

    /// Copy stored blocks into `params`, which must have identical names and shapes.
    pub fn restore_into<P: Parameterized>(&self, params: &mut P) -> Result<()> {
        let mut targets = params.blocks_mut();
        if targets.len() != self.blocks.len() {
            return Err(Error::Checkpoint(format!(
                "block count mismatch: model has {}, checkpoint has {}",
                targets.len(),
                self.blocks.len()
            )));
        }
        for (t, s) in targets.iter_mut().zip(&self.blocks) {
            if t.name != s.name || t.rows != s.rows || t.cols != s.cols || s.data.len() != s.rows * s.cols {
                return Err(Error::Checkpoint(format!(
                    "block {} ({}x{}) does not match stored {} ({}x{}, {} values)",
                    t.name,
                    t.rows,
                    t.cols,
                    s.name,
                    s.rows,
                    s.cols,
                    s.data.len()
                )));
            }
            t.data.copy_from_slice(&s.data);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text)?;
        if ckpt.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", ckpt.format)));
        }
        if ckpt.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ckpt.version)));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
