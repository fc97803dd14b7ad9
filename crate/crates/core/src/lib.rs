//! A multi-stage human-AI decision pipeline for settings where unseen
//! classes show up at inference time.
//!
//! A rejector decides whether a sample looks like the classes the
//! classifier was trained on. Accepted samples are labelled by the
//! classifier; deferred ones go to a (simulated) expert of a given
//! competence tier, and anything the expert cannot label is escalated to
//! collaborative exploration with an AI assistant.

pub mod classifier;
pub mod coex;
pub mod config;
pub mod data;
pub mod decision;
pub mod error;
pub mod expert;
pub mod metrics;
pub mod persist;
pub mod persona;
pub mod pipeline;
pub mod rejector;
pub mod synth;

pub use classifier::{fit_classifier, ClassifierConfig, ClassifierKind, ClassifierModel, PredictionDistribution};
pub use coex::{bayes_update, resolve_coex, run_belief_loop, BeliefState, CoExConfig, DrawTable, RateLevel};
pub use data::{
    load_dataset, partition_dataset, split_known, ClassAssignment, ClassLabel, ClassRegistry, Dataset, DatasetPartition,
    Group, Sample,
};
pub use decision::{Decision, Prediction, Stage};
pub use error::{Error, Result};
pub use expert::{build_expert, expert_decide, ExpertProfile, Tier};
pub use metrics::{expected_grid_oracle, micro_f1, run_grid, ComponentRates, GridResult};
pub use pipeline::{route_sample, run_mode, Mode, PipelineComponents, RunReport};
pub use rejector::{fit_rejector, RejectorModel, ScorerKind};
