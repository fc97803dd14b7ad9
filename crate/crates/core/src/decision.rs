//! Per-sample outcome records shared by the pipeline stages.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::expert::ExpertContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Prediction {
    Label(usize),
    Caution,
}

impl Prediction {
    pub fn is_correct(&self, truth: usize) -> bool {
        matches!(self, Prediction::Label(l) if *l == truth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Classifier,
    Expert,
    CoExResolved,
    CoExUnresolved,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Classifier, Stage::Expert, Stage::CoExResolved, Stage::CoExUnresolved];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Classifier => "classifier",
            Stage::Expert => "expert",
            Stage::CoExResolved => "coex-resolved",
            Stage::CoExUnresolved => "coex-unresolved",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub sample_id: u64,
    pub truth: usize,
    pub predicted: Prediction,
    pub stage: Stage,
    /// 1 for a correct outcome, 0 otherwise (0.5 only arises for persona
    /// triage outcomes).
    pub score: f64,
    pub context: Option<ExpertContext>,
}

impl Decision {
    pub fn new(sample_id: u64, truth: usize, predicted: Prediction, stage: Stage) -> Self {
        let score = if predicted.is_correct(truth) { 1.0 } else { 0.0 };
        Decision {
            sample_id,
            truth,
            predicted,
            stage,
            score,
            context: None,
        }
    }

    pub fn is_correct(&self) -> bool {
        self.predicted.is_correct(self.truth)
    }
}
