//! Relational counting network: question GRU, object–object and object–background relation
//! branches, and a softmax count head.

pub mod config;
pub mod model;
pub mod pool;

pub use config::RcnConfig;
pub use model::{
    canonical_order, min_max_scale, predict_count, Forward, Prediction, RcnInput, RcnModel, RcnParams, RcnTrace,
};
pub use pool::{rn_pool, RnPool};
