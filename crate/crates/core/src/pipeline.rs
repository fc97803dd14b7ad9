//! End-to-end routing: full automation, selective deferral and
//! collaborative exploration.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::coex::{resolve_coex, CoExConfig, DrawTable, RateLevel};
use crate::data::{ClassRegistry, Group, ResolvedAssignment, Sample};
use crate::decision::{Decision, Prediction, Stage};
use crate::error::{Error, Result};
use crate::expert::{expert_decide, ExpertContext, ExpertOutcome, ExpertProfile, Tier};
use crate::metrics::micro_f1;
use crate::rejector::RejectorModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Automation,
    Deferral,
    Collaborative,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "automation" => Ok(Mode::Automation),
            "deferral" => Ok(Mode::Deferral),
            "collaborative" => Ok(Mode::Collaborative),
            other => Err(Error::InvalidParameter(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Automation => "automation",
            Mode::Deferral => "deferral",
            Mode::Collaborative => "collaborative",
        })
    }
}

#[derive(Debug, Clone)]
pub struct PipelineComponents {
    pub rejector: RejectorModel,
    pub classifier: ClassifierModel,
    pub expert: ExpertProfile,
    pub coex: CoExConfig,
    pub assignment: ResolvedAssignment,
}

impl PipelineComponents {
    /// Checks that the parts were built for the same class assignment.
    pub fn new(
        rejector: RejectorModel,
        classifier: ClassifierModel,
        expert: ExpertProfile,
        coex: CoExConfig,
        assignment: ResolvedAssignment,
    ) -> Result<Self> {
        if !rejector.is_calibrated() {
            return Err(Error::Uncalibrated);
        }
        let mut model_classes: Vec<usize> = classifier.class_set.iter().map(|c| c.id).collect();
        let mut known: Vec<usize> = assignment.c_a.clone();
        model_classes.sort_unstable();
        known.sort_unstable();
        if model_classes != known {
            return Err(Error::Config("classifier class set differs from the assignment's group A".into()));
        }
        if expert != ExpertProfile::from_assignment(expert.tier, &assignment) {
            return Err(Error::Config("expert profile was built from a different assignment".into()));
        }
        if rejector.dimension != classifier.dimension {
            return Err(Error::DimensionMismatch {
                expected: rejector.dimension,
                actual: classifier.dimension,
            });
        }
        Ok(PipelineComponents {
            rejector,
            classifier,
            expert,
            coex,
            assignment,
        })
    }

    pub fn with_tier(&self, tier: Tier) -> Self {
        let mut c = self.clone();
        c.expert = ExpertProfile::from_assignment(tier, &self.assignment);
        c
    }

    pub fn with_rate(&self, rate_level: RateLevel) -> Self {
        let mut c = self.clone();
        c.coex.rate_level = rate_level;
        c
    }

    fn classifier_decision(&self, sample: &Sample, truth: usize) -> Result<Decision> {
        let label = self.classifier.predict(&sample.features)?;
        Ok(Decision::new(sample.id, truth, Prediction::Label(label), Stage::Classifier))
    }
}

pub fn route_sample(components: &PipelineComponents, mode: Mode, sample: &Sample, draw: Option<f64>) -> Result<Decision> {
    let truth = sample.label()?;
    if mode == Mode::Automation {
        return components.classifier_decision(sample, truth);
    }
    if mode == Mode::Collaborative && components.coex.rate_level == RateLevel::None {
        return Err(Error::Config("collaborative mode needs a resolution rate other than `none`".into()));
    }
    let verdict = components.rejector.decide(&sample.features)?;
    if verdict.accepted() {
        return components.classifier_decision(sample, truth);
    }
    let context = ExpertContext {
        reject_score: verdict.score,
        reject_decision: verdict,
        classifier_probs: components.classifier.predict_proba(&sample.features)?,
        contextual_info: Vec::new(),
        side_info: Vec::new(),
    };
    let mut decision = match expert_decide(&components.expert, sample, &context)? {
        ExpertOutcome::Label(l) => Decision::new(sample.id, truth, Prediction::Label(l), Stage::Expert),
        ExpertOutcome::Escalate => match mode {
            // no collaborator: the escalation stands as a failure
            Mode::Deferral => Decision::new(sample.id, truth, Prediction::Caution, Stage::Expert),
            _ => {
                let draw = draw.ok_or_else(|| {
                    Error::InvalidParameter(format!("collaborative routing of sample {} needs a draw", sample.id))
                })?;
                resolve_coex(sample, &components.coex, draw)?
            }
        },
    };
    decision.context = Some(context);
    Ok(decision)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub total: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub tier: Tier,
    pub rate_level: RateLevel,
    /// Sorted by sample id.
    pub decisions: Vec<Decision>,
    pub micro_f1: f64,
    pub stages: BTreeMap<Stage, StageCount>,
    /// Evaluated samples per class group.
    pub composition: BTreeMap<Group, usize>,
    /// Decisions per group, then stage.
    pub confusion: BTreeMap<Group, BTreeMap<Stage, StageCount>>,
}

/// Routes every sample, using `draws` for collaborative escalations.
pub fn run_mode(components: &PipelineComponents, mode: Mode, samples: &[&Sample], draws: &DrawTable) -> Result<RunReport> {
    if samples.is_empty() {
        return Err(Error::Empty("run-mode sample set"));
    }
    let mut decisions = samples
        .iter()
        .map(|s| route_sample(components, mode, s, draws.get(s.id)))
        .collect::<Result<Vec<_>>>()?;
    decisions.sort_by_key(|d| d.sample_id);

    let mut stages: BTreeMap<Stage, StageCount> = BTreeMap::new();
    let mut composition: BTreeMap<Group, usize> = BTreeMap::new();
    let mut confusion: BTreeMap<Group, BTreeMap<Stage, StageCount>> = BTreeMap::new();
    for d in &decisions {
        let group = components.assignment.group_of(d.truth);
        let bump = |c: &mut StageCount| {
            c.total += 1;
            c.correct += d.is_correct() as usize;
        };
        bump(stages.entry(d.stage).or_default());
        if let Some(g) = group {
            *composition.entry(g).or_insert(0) += 1;
            bump(confusion.entry(g).or_default().entry(d.stage).or_default());
        }
    }
    let pairs: Vec<(usize, Prediction)> = decisions.iter().map(|d| (d.truth, d.predicted)).collect();
    Ok(RunReport {
        mode,
        tier: components.expert.tier,
        rate_level: components.coex.rate_level,
        micro_f1: micro_f1(&pairs)?,
        decisions,
        stages,
        composition,
        confusion,
    })
}

/// `run_mode` with draws derived from `seed` and each sample id.
pub fn run_mode_seeded(components: &PipelineComponents, mode: Mode, samples: &[&Sample], seed: u64) -> Result<RunReport> {
    let draws = DrawTable::seeded(seed, samples.iter().map(|s| s.id));
    run_mode(components, mode, samples, &draws)
}

impl RunReport {
    /// Header `sample_id,true,predicted,stage,s_i`.
    pub fn to_csv(&self, classes: &ClassRegistry) -> String {
        let name = |id: usize| classes.name(id).map_or_else(|| id.to_string(), str::to_string);
        let mut out = String::from("sample_id,true,predicted,stage,s_i\n");
        for d in &self.decisions {
            let predicted = match d.predicted {
                Prediction::Label(l) => name(l),
                Prediction::Caution => "caution".into(),
            };
            let _ = writeln!(out, "{},{},{},{},{}", d.sample_id, name(d.truth), predicted, d.stage, d.score);
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mode = {}", self.mode);
        let _ = writeln!(out, "tier = {}", self.tier);
        let _ = writeln!(out, "rate_level = {}", self.rate_level);
        let _ = writeln!(out, "micro_f1 = {:.6}", self.micro_f1);
        let _ = writeln!(out, "n_eval = {}", self.decisions.len());
        let _ = writeln!(out, "evaluation_set = A-test + B + C");
        for (g, n) in &self.composition {
            let _ = writeln!(out, "composition.{g} = {n}");
        }
        for (stage, c) in &self.stages {
            let _ = writeln!(out, "stage.{stage} = {} ({} correct)", c.total, c.correct);
        }
        for (g, stages) in &self.confusion {
            for (stage, c) in stages {
                let _ = writeln!(out, "confusion.{g}.{stage} = {}/{}", c.correct, c.total);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{ClassifierKind, ClassifierModel};
    use crate::data::ClassLabel;
    use crate::rejector::{fit_rejector, ScorerHyper, ScorerKind};

    // Classes 0 (A) at x=0, 1 (B) at x=10, 2 (C) at x=20, one dimension.
    fn components(tier: Tier, rate: RateLevel) -> PipelineComponents {
        let assignment = ResolvedAssignment {
            c_a: vec![0],
            c_b: vec![1],
            c_c: vec![2],
        };
        let rejector = fit_rejector(&[&[0.0][..], &[0.0][..]], ScorerKind::Centroid, &ScorerHyper::default())
            .unwrap()
            .with_threshold(-1.0);
        // single known class: any classifier predicts it
        let mut classifier = ClassifierModel::zeros(
            ClassifierKind::SoftmaxLinear,
            1,
            vec![ClassLabel { id: 0, name: "a".into() }],
        );
        classifier.params = vec![0.0, 0.0];
        PipelineComponents::new(
            rejector,
            classifier,
            ExpertProfile::from_assignment(tier, &assignment),
            CoExConfig::new(rate),
            assignment,
        )
        .unwrap()
    }

    fn s(id: u64, x: f64, label: usize) -> Sample {
        Sample {
            id,
            features: vec![x],
            label: Some(label),
        }
    }

    #[test]
    fn known_sample_goes_through_classifier_in_every_mode() {
        let c = components(Tier::T3, RateLevel::R4);
        for mode in [Mode::Automation, Mode::Deferral, Mode::Collaborative] {
            let d = route_sample(&c, mode, &s(0, 0.1, 0), Some(0.5)).unwrap();
            assert_eq!((d.stage, d.predicted), (Stage::Classifier, Prediction::Label(0)));
        }
    }

    #[test]
    fn group_c_in_deferral_fails_and_collaborative_resolves() {
        let c = components(Tier::T3, RateLevel::R4);
        let d = route_sample(&c, Mode::Deferral, &s(1, 20.0, 2), None).unwrap();
        assert_eq!((d.stage, d.predicted, d.score), (Stage::Expert, Prediction::Caution, 0.0));
        assert!(d.context.is_some());
        let d = route_sample(&c, Mode::Collaborative, &s(1, 20.0, 2), Some(0.99)).unwrap();
        assert_eq!((d.stage, d.score), (Stage::CoExResolved, 1.0));
    }

    #[test]
    fn collaborative_without_rate_is_a_config_error() {
        let c = components(Tier::T3, RateLevel::None);
        assert!(matches!(
            route_sample(&c, Mode::Collaborative, &s(1, 20.0, 2), Some(0.1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn inconsistent_components_are_rejected() {
        let c = components(Tier::T2, RateLevel::R1);
        let other = ResolvedAssignment {
            c_a: vec![0],
            c_b: vec![2],
            c_c: vec![1],
        };
        assert!(PipelineComponents::new(
            c.rejector.clone(),
            c.classifier.clone(),
            c.expert.clone(),
            c.coex,
            other
        )
        .is_err());
        let mut uncal = c.rejector.clone();
        uncal.theta_r = None;
        assert!(matches!(
            PipelineComponents::new(uncal, c.classifier, c.expert, c.coex, c.assignment),
            Err(Error::Uncalibrated)
        ));
    }

    #[test]
    fn perfect_components_give_perfect_score() {
        let c = components(Tier::T3, RateLevel::R4);
        let samples: Vec<Sample> = (0..30).map(|i| s(i, (i % 3) as f64 * 10.0, (i % 3) as usize)).collect();
        let refs: Vec<&Sample> = samples.iter().collect();
        let r = run_mode_seeded(&c, Mode::Collaborative, &refs, 4).unwrap();
        assert_eq!(r.micro_f1, 1.0);
        assert_eq!(r.decisions.len(), 30);
        assert_eq!(r.composition[&Group::B], 10);
        let again = run_mode_seeded(&c, Mode::Collaborative, &refs, 4).unwrap();
        assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());

        let auto = run_mode_seeded(&c, Mode::Automation, &refs, 4).unwrap();
        assert!(auto.stages.keys().all(|&st| st == Stage::Classifier));
        assert!((auto.micro_f1 - 1.0 / 3.0).abs() < 1e-12);
        assert!(run_mode_seeded(&c, Mode::Automation, &[], 4).is_err());
    }

    #[test]
    fn csv_and_summary() {
        let c = components(Tier::T1, RateLevel::R1);
        let samples = [s(3, 0.0, 0), s(1, 20.0, 2)];
        let refs: Vec<&Sample> = samples.iter().collect();
        let r = run_mode(&c, Mode::Collaborative, &refs, &DrawTable::constant(0.9, [1, 3])).unwrap();
        let reg = ClassRegistry::from_names(["a", "b", "c"]);
        let csv = r.to_csv(&reg);
        assert_eq!(
            csv,
            "sample_id,true,predicted,stage,s_i\n1,c,caution,coex-unresolved,0\n3,a,a,classifier,1\n"
        );
        assert!(r.summary().contains("micro_f1 = 0.500000"));
    }
}
