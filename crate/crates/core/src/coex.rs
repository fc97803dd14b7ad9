//! Collaborative exploration: the resolution-rate simulation used by the
//! experiments, and the expert/collaborator Bayesian belief loop.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::decision::{Decision, Prediction, Stage};
use crate::error::{Error, Result};

/// Probability that an escalated sample is resolved: none, 50%, 75%, 90%, 100%.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RateLevel {
    None,
    R1,
    R2,
    R3,
    R4,
}

impl RateLevel {
    pub const ALL: [RateLevel; 5] = [RateLevel::None, RateLevel::R1, RateLevel::R2, RateLevel::R3, RateLevel::R4];

    pub fn resolve_prob(self) -> f64 {
        match self {
            RateLevel::None => 0.0,
            RateLevel::R1 => 0.50,
            RateLevel::R2 => 0.75,
            RateLevel::R3 => 0.90,
            RateLevel::R4 => 1.00,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RateLevel::None => "none",
            RateLevel::R1 => "1",
            RateLevel::R2 => "2",
            RateLevel::R3 => "3",
            RateLevel::R4 => "4",
        }
    }
}

impl FromStr for RateLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" | "0" | "∅" => Ok(RateLevel::None),
            "1" => Ok(RateLevel::R1),
            "2" => Ok(RateLevel::R2),
            "3" => Ok(RateLevel::R3),
            "4" => Ok(RateLevel::R4),
            other => Err(Error::InvalidParameter(format!("rate level must be none or 1..4, got `{other}`"))),
        }
    }
}

impl fmt::Display for RateLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoExConfig {
    pub rate_level: RateLevel,
    pub seed: u64,
}

impl CoExConfig {
    pub fn new(rate_level: RateLevel) -> Self {
        CoExConfig { rate_level, seed: 0 }
    }

    pub fn resolve_prob(&self) -> f64 {
        self.rate_level.resolve_prob()
    }
}

/// Resolves an escalated sample when `draw < resolve_prob`. Unresolved
/// samples come back as `Caution` and score 0.
pub fn resolve_coex(sample: &Sample, config: &CoExConfig, draw: f64) -> Result<Decision> {
    if config.rate_level == RateLevel::None {
        return Err(Error::CoExDisabled);
    }
    if !(0.0..1.0).contains(&draw) {
        return Err(Error::InvalidParameter(format!("draw must be in [0, 1), got {draw}")));
    }
    let truth = sample.label()?;
    Ok(if draw < config.resolve_prob() {
        Decision::new(sample.id, truth, Prediction::Label(truth), Stage::CoExResolved)
    } else {
        Decision::new(sample.id, truth, Prediction::Caution, Stage::CoExUnresolved)
    })
}

/// One uniform draw per sample id, shared by every mode, tier and rate level.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DrawTable {
    draws: BTreeMap<u64, f64>,
}

impl DrawTable {
    /// Each id gets the first output of a generator on its own stream, so a
    /// draw depends only on `(seed, id)`.
    pub fn seeded(seed: u64, ids: impl IntoIterator<Item = u64>) -> Self {
        let draws = ids
            .into_iter()
            .map(|id| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(id);
                (id, rng.random::<f64>())
            })
            .collect();
        DrawTable { draws }
    }

    /// Equispaced draws `(j + 1/2)/m` within each id list (ids sorted first),
    /// so exactly `round(ρ·m)` members of a list fall below `ρ`, ties
    /// rounding down.
    pub fn stratified(groups: &[Vec<u64>]) -> Self {
        let mut draws = BTreeMap::new();
        for ids in groups {
            let mut ids = ids.clone();
            ids.sort_unstable();
            let m = ids.len() as f64;
            for (j, id) in ids.into_iter().enumerate() {
                draws.insert(id, (j as f64 + 0.5) / m);
            }
        }
        DrawTable { draws }
    }

    pub fn constant(value: f64, ids: impl IntoIterator<Item = u64>) -> Self {
        DrawTable {
            draws: ids.into_iter().map(|id| (id, value)).collect(),
        }
    }

    pub fn get(&self, id: u64) -> Option<f64> {
        self.draws.get(&id).copied()
    }

    pub fn insert(&mut self, id: u64, draw: f64) {
        self.draws.insert(id, draw);
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub id: usize,
    pub likelihood_expert: Vec<f64>,
    pub likelihood_collaborator: Vec<f64>,
}

/// Beliefs of the expert (`P(E)`) and the collaborator (`P(A)`) over the
/// same candidate labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub candidates: Vec<usize>,
    pub expert: Vec<f64>,
    pub collaborator: Vec<f64>,
    pub evidence_log: Vec<Evidence>,
}

const NORM_TOL: f64 = 1e-9;

fn validate_distribution(v: &[f64], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: v.len(),
        });
    }
    if v.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidParameter(format!("{what} has negative or non-finite entries")));
    }
    Ok(())
}

impl BeliefState {
    pub fn new(candidates: Vec<usize>, expert: Vec<f64>, collaborator: Vec<f64>) -> Result<Self> {
        let n = candidates.len();
        if n == 0 {
            return Err(Error::Empty("belief candidates"));
        }
        validate_distribution(&expert, n, "expert prior")?;
        validate_distribution(&collaborator, n, "collaborator prior")?;
        for (v, what) in [(&expert, "expert prior"), (&collaborator, "collaborator prior")] {
            let s: f64 = v.iter().sum();
            if (s - 1.0).abs() > NORM_TOL {
                return Err(Error::InvalidParameter(format!("{what} sums to {s}, not 1")));
            }
        }
        Ok(BeliefState {
            candidates,
            expert,
            collaborator,
            evidence_log: Vec::new(),
        })
    }

    pub fn uniform(candidates: Vec<usize>) -> Result<Self> {
        let n = candidates.len().max(1);
        let u = vec![1.0 / n as f64; candidates.len()];
        BeliefState::new(candidates, u.clone(), u)
    }

    /// Candidate with the highest expert belief; ties go to the lowest id.
    pub fn expert_argmax(&self) -> usize {
        argmax_lowest_id(&self.candidates, &self.expert)
    }

    pub fn collaborator_argmax(&self) -> usize {
        argmax_lowest_id(&self.candidates, &self.collaborator)
    }

    /// The candidate on which both nodes place at least `tau`, if any.
    pub fn consensus(&self, tau: f64) -> Option<usize> {
        let reach = tau - 1e-12;
        self.candidates
            .iter()
            .enumerate()
            .filter(|(i, _)| self.expert[*i] >= reach && self.collaborator[*i] >= reach)
            .map(|(_, &c)| c)
            .min()
    }
}

fn argmax_lowest_id(candidates: &[usize], probs: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..candidates.len() {
        if probs[i] > probs[best] || (probs[i] == probs[best] && candidates[i] < candidates[best]) {
            best = i;
        }
    }
    candidates[best]
}

fn posterior(prior: &[f64], likelihood: &[f64], node: &'static str) -> Result<Vec<f64>> {
    // a flat likelihood carries no information; skipping the renormalisation
    // keeps the prior bit-identical instead of within rounding of it
    if likelihood[0] > 0.0 && likelihood.iter().all(|&l| l == likelihood[0]) {
        return Ok(prior.to_vec());
    }
    let joint: Vec<f64> = prior.iter().zip(likelihood).map(|(p, l)| p * l).collect();
    let evidence: f64 = joint.iter().sum();
    if !(evidence > 0.0) || !evidence.is_finite() {
        return Err(Error::ContradictoryEvidence { node });
    }
    Ok(joint.into_iter().map(|j| j / evidence).collect())
}

/// Bayes' rule on both nodes: posterior ∝ likelihood ⊙ prior.
pub fn bayes_update(state: &BeliefState, likelihood_expert: &[f64], likelihood_collaborator: &[f64]) -> Result<BeliefState> {
    let n = state.candidates.len();
    validate_distribution(likelihood_expert, n, "expert likelihood")?;
    validate_distribution(likelihood_collaborator, n, "collaborator likelihood")?;
    let expert = posterior(&state.expert, likelihood_expert, "expert")?;
    let collaborator = posterior(&state.collaborator, likelihood_collaborator, "collaborator")?;
    let mut evidence_log = state.evidence_log.clone();
    evidence_log.push(Evidence {
        id: evidence_log.len(),
        likelihood_expert: likelihood_expert.to_vec(),
        likelihood_collaborator: likelihood_collaborator.to_vec(),
    });
    Ok(BeliefState {
        candidates: state.candidates.clone(),
        expert,
        collaborator,
        evidence_log,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub label: usize,
    pub consensus: bool,
    /// Updates applied before stopping.
    pub iterations: usize,
    pub final_state: BeliefState,
    /// Belief snapshots, starting with the priors.
    pub trace: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Applies evidence until both nodes agree with at least `tau` on one
/// candidate, or evidence or the iteration budget runs out, in which case the
/// expert's most probable candidate is taken.
pub fn run_belief_loop(
    priors: &BeliefState,
    evidence: &[(Vec<f64>, Vec<f64>)],
    tau: f64,
    max_iters: usize,
) -> Result<ConsensusResult> {
    if !(tau > 0.5 && tau <= 1.0) {
        return Err(Error::InvalidParameter(format!("consensus threshold must be in (0.5, 1], got {tau}")));
    }
    let mut state = priors.clone();
    let mut trace = vec![(state.expert.clone(), state.collaborator.clone())];
    let mut iterations = 0;
    if let Some(label) = state.consensus(tau) {
        return Ok(ConsensusResult {
            label,
            consensus: true,
            iterations,
            final_state: state,
            trace,
        });
    }
    for (le, la) in evidence.iter().take(max_iters) {
        state = bayes_update(&state, le, la)?;
        iterations += 1;
        trace.push((state.expert.clone(), state.collaborator.clone()));
        if let Some(label) = state.consensus(tau) {
            return Ok(ConsensusResult {
                label,
                consensus: true,
                iterations,
                final_state: state,
                trace,
            });
        }
    }
    Ok(ConsensusResult {
        label: state.expert_argmax(),
        consensus: false,
        iterations,
        final_state: state,
        trace,
    })
}

/// Trace as CSV with header `iteration,candidate,expert_prob,collaborator_prob`.
pub fn belief_trace_csv(result: &ConsensusResult) -> String {
    let mut out = String::from("iteration,candidate,expert_prob,collaborator_prob\n");
    for (it, (e, a)) in result.trace.iter().enumerate() {
        for (i, c) in result.final_state.candidates.iter().enumerate() {
            out.push_str(&format!("{it},{c},{},{}\n", e[i], a[i]));
        }
    }
    out
}
