//! Synthetic scene graphs with templated counting questions and exact ground truth.

pub mod dataset;
pub mod scene;
pub mod template;

pub use dataset::{emit_dataset, generate_record, read_jsonl, write_jsonl, DatasetConfig, SceneRecord, Split};
pub use scene::{
    generate_scene, sample_count, FeatureDictionary, ProposalSource, Scene, SceneObject, SynthConfig, BACKGROUNDS,
    CLASSES, COLORS, STATES,
};
pub use template::{choose_template, oracle_count, plural, Relation, Template, TemplateKind};
