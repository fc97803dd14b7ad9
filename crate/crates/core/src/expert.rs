//! Simulated human expert with a fixed competence tier.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::classifier::PredictionDistribution;
use crate::data::{DatasetPartition, ResolvedAssignment, Sample};
use crate::error::{Error, Result};
use crate::rejector::RejectDecision;

/// Which class groups the expert labels perfectly: `T1` knows `A`, `T2`
/// knows `B`, `T3` knows both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    T1,
    T2,
    T3,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::T1, Tier::T2, Tier::T3];

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Tier::T1),
            2 => Ok(Tier::T2),
            3 => Ok(Tier::T3),
            _ => Err(Error::InvalidParameter(format!("competence tier must be 1, 2 or 3, got {n}"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Tier::T1 => 1,
            Tier::T2 => 2,
            Tier::T3 => 3,
        }
    }

    pub fn knows_a(self) -> bool {
        matches!(self, Tier::T1 | Tier::T3)
    }

    pub fn knows_b(self) -> bool {
        matches!(self, Tier::T2 | Tier::T3)
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertProfile {
    pub tier: Tier,
    pub known_classes: BTreeSet<usize>,
}

impl ExpertProfile {
    pub fn from_assignment(tier: Tier, assignment: &ResolvedAssignment) -> Self {
        let mut known_classes = BTreeSet::new();
        if tier.knows_a() {
            known_classes.extend(assignment.c_a.iter().copied());
        }
        if tier.knows_b() {
            known_classes.extend(assignment.c_b.iter().copied());
        }
        ExpertProfile { tier, known_classes }
    }

    pub fn knows(&self, class: usize) -> bool {
        self.known_classes.contains(&class)
    }
}

pub fn build_expert(tier: Tier, partition: &DatasetPartition) -> ExpertProfile {
    ExpertProfile::from_assignment(tier, &partition.resolved)
}

/// Everything handed to the expert alongside a deferred sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertContext {
    pub reject_score: f64,
    pub reject_decision: RejectDecision,
    pub classifier_probs: PredictionDistribution,
    /// Contextual information, e.g. historical labelled cases.
    pub contextual_info: Vec<String>,
    /// Side information, e.g. threat-intelligence notes.
    pub side_info: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpertOutcome {
    Label(usize),
    Escalate,
}

/// Labels the sample correctly when its class is within competence and
/// escalates otherwise. The context does not influence the simulated expert.
pub fn expert_decide(profile: &ExpertProfile, sample: &Sample, _context: &ExpertContext) -> Result<ExpertOutcome> {
    let truth = sample.label()?;
    Ok(if profile.knows(truth) {
        ExpertOutcome::Label(truth)
    } else {
        ExpertOutcome::Escalate
    })
}
