//! Relational counting network for open-ended counting questions, with rule-based question
//! tools, baseline counters, a synthetic scene-graph generator and an evaluation harness.

pub mod baselines;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod numeric;
pub mod question;
pub mod rcn;
pub mod synth;

pub use error::{Error, Result};
