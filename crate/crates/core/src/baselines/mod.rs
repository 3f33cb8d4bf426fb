//! Baseline counters: constant guesses, MLPs over question and/or image features, and DETECT.

pub mod detect;
pub mod mlp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use detect::{detect_count, LabelMatcher, SynonymMatcher};
pub use mlp::{mean_patch_features, MlpBaseline, MlpBaselineConfig, MlpBaselineParams, MlpInput};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Guess(usize),
    QOnly,
    IOnly,
    QI,
    Detect,
}

impl BaselineKind {
    pub fn mlp_input(self) -> Option<MlpInput> {
        match self {
            BaselineKind::QOnly => Some(MlpInput::QuestionOnly),
            BaselineKind::IOnly => Some(MlpInput::ImageOnly),
            BaselineKind::QI => Some(MlpInput::QuestionImage),
            _ => None,
        }
    }

    pub fn validate(self, max_count: usize) -> Result<()> {
        match self {
            BaselineKind::Guess(k) if k > max_count => {
                Err(Error::OutOfRange { value: k as i64, lo: 0, hi: max_count as i64 })
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineKind::Guess(k) => write!(f, "guess-{k}"),
            BaselineKind::QOnly => f.write_str("q-only"),
            BaselineKind::IOnly => f.write_str("i-only"),
            BaselineKind::QI => f.write_str("q+i"),
            BaselineKind::Detect => f.write_str("detect"),
        }
    }
}

impl FromStr for BaselineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Ok(match lower.as_str() {
            "q-only" | "qonly" => BaselineKind::QOnly,
            "i-only" | "ionly" => BaselineKind::IOnly,
            "q+i" | "qi" => BaselineKind::QI,
            "detect" => BaselineKind::Detect,
            other => match other.strip_prefix("guess-") {
                Some(k) => BaselineKind::Guess(k.parse().map_err(|_| Error::Parse(format!("bad guess value in `{s}`")))?),
                None => return Err(Error::Parse(format!("unknown baseline `{s}`"))),
            },
        })
    }
}

/// Guess-k: the same answer for every question.
pub fn guess(k: usize) -> usize {
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in [BaselineKind::Guess(1), BaselineKind::Guess(2), BaselineKind::QOnly, BaselineKind::IOnly, BaselineKind::QI, BaselineKind::Detect] {
            assert_eq!(k.to_string().parse::<BaselineKind>().unwrap(), k);
        }
        assert!("guess-x".parse::<BaselineKind>().is_err());
        assert!("rcn".parse::<BaselineKind>().is_err());
    }

    #[test]
    fn guess_is_constant() {
        assert_eq!(guess(1), 1);
        assert_eq!(guess(2), 2);
        assert!(BaselineKind::Guess(16).validate(15).is_err());
        assert!(BaselineKind::Guess(15).validate(15).is_ok());
    }
}
