//! Browser bindings: the expected-grid oracle, a rejector explorer on
//! synthetic clusters, and the two-agent belief loop.

use a2c_core::classifier::{fit_classifier, ClassifierConfig};
use a2c_core::coex::{belief_trace_csv, run_belief_loop, BeliefState, CoExConfig, RateLevel};
use a2c_core::data::{partition_dataset, split_known, ClassAssignment, PartitionOptions};
use a2c_core::expert::{build_expert, Tier};
use a2c_core::metrics::{expected_grid_oracle, ComponentRates, GroupSizes};
use a2c_core::pipeline::PipelineComponents;
use a2c_core::rejector::{evaluate_rejector, fit_rejector, ScorerHyper, ScorerKind};
use a2c_core::synth::separated_clusters;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn oracle_rows(rates: &ComponentRates, sizes: GroupSizes) -> a2c_core::Result<Vec<Vec<f64>>> {
    Tier::ALL
        .iter()
        .map(|&t| RateLevel::ALL.iter().map(|&r| expected_grid_oracle(rates, sizes, t, r)).collect())
        .collect()
}

/// Expected micro-F1 for every tier × rate cell given the component rates
/// and group sizes.
pub fn oracle_grid_json(
    p_acc_a: f64,
    p_def_b: f64,
    p_def_c: f64,
    a_known: f64,
    n_a: usize,
    n_b: usize,
    n_c: usize,
) -> Result<String, String> {
    let rates = ComponentRates {
        p_acc_A: p_acc_a,
        p_def_B: p_def_b,
        p_def_C: p_def_c,
        a_known,
    };
    let rows = oracle_rows(&rates, GroupSizes { n_a, n_b, n_c }).map_err(|e| e.to_string())?;
    Ok(json!({ "rows": rows }).to_string())
}

fn histogram(known: &[f64], unknown: &[f64], bins: usize) -> Value {
    let all = known.iter().chain(unknown);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
    let count = |xs: &[f64]| {
        let mut h = vec![0usize; bins];
        for &x in xs {
            h[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        }
        h
    };
    json!({ "lo": lo, "hi": hi, "known": count(known), "unknown": count(unknown) })
}

/// Five Gaussian classes (three known, one per unknown group), a rejector
/// fitted on even training rows and calibrated on odd ones, a softmax
/// classifier, and the oracle grid for the measured rates.
pub fn rejector_explorer_json(scorer: &str, separation: f64, q: f64, seed: u64) -> Result<String, String> {
    let run = || -> a2c_core::Result<Value> {
        let kind: ScorerKind = scorer.parse()?;
        if !(separation > 0.0 && separation.is_finite()) {
            return Err(a2c_core::Error::InvalidParameter(format!("separation must be positive, got {separation}")));
        }
        let names = ["k0", "k1", "k2", "b0", "c0"];
        let ds = separated_clusters(&names, 150, names.len(), separation, seed);
        let assignment = ClassAssignment::new(["k0", "k1", "k2"], ["b0"], ["c0"]);
        let p = split_known(partition_dataset(&ds, &assignment, &PartitionOptions::default())?, 0.8, seed)?;

        let train = p.train_samples();
        let fit: Vec<&[f64]> = train.iter().step_by(2).map(|s| s.features.as_slice()).collect();
        let calib: Vec<&[f64]> = train.iter().skip(1).step_by(2).map(|s| s.features.as_slice()).collect();
        let hyper = ScorerHyper {
            components: 2,
            ..ScorerHyper::default()
        };
        let rejector = fit_rejector(&fit, kind, &hyper)?.calibrate(&calib, q)?;
        let eval = evaluate_rejector(&rejector, &p)?;

        let score = |s: &&a2c_core::Sample| rejector.acceptance_score(&s.features);
        let known: Vec<f64> = p.test_samples().iter().map(score).collect::<a2c_core::Result<_>>()?;
        let unknown: Vec<f64> = p.d_b.iter().chain(&p.d_c).map(|s| rejector.acceptance_score(&s.features)).collect::<a2c_core::Result<_>>()?;

        let classifier = fit_classifier(&train, &p.known_classes(), &ClassifierConfig { seed, ..ClassifierConfig::default() })?;
        let theta = rejector.theta_r;
        let comps = PipelineComponents::new(rejector, classifier, build_expert(Tier::T3, &p), CoExConfig::new(RateLevel::R4), p.resolved.clone())?;
        let (rates, sizes) = ComponentRates::measure(&comps, &p)?;
        Ok(json!({
            "theta": theta,
            "accuracy": eval.accuracy,
            "accepted_known": eval.accepted_known,
            "n_known": eval.n_known,
            "deferred_unknown": eval.deferred_unknown,
            "n_unknown": eval.n_unknown,
            "histogram": histogram(&known, &unknown, 24),
            "rates": rates,
            "sizes": sizes,
            "oracle": oracle_rows(&rates, sizes)?,
        }))
    };
    run().map(|v| v.to_string()).map_err(|e| e.to_string())
}

fn parse_probs(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", t.trim())))
        .collect()
}

/// Runs the belief loop. Priors are comma-separated; each evidence line is
/// `expert likelihoods | collaborator likelihoods`.
pub fn belief_loop_json(expert_prior: &str, collaborator_prior: &str, evidence: &str, tau: f64) -> Result<String, String> {
    let e = parse_probs(expert_prior)?;
    let a = parse_probs(collaborator_prior)?;
    let steps = evidence
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let (le, la) = line.split_once('|').ok_or_else(|| format!("evidence line `{line}` needs a `|`"))?;
            Ok((parse_probs(le)?, parse_probs(la)?))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let state = BeliefState::new((0..e.len()).collect(), e, a).map_err(|err| err.to_string())?;
    let r = run_belief_loop(&state, &steps, tau, steps.len()).map_err(|err| err.to_string())?;
    Ok(json!({
        "label": r.label,
        "consensus": r.consensus,
        "iterations": r.iterations,
        "trace": r.trace,
        "csv": belief_trace_csv(&r),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn oracle_grid(p_acc_a: f64, p_def_b: f64, p_def_c: f64, a_known: f64, n_a: usize, n_b: usize, n_c: usize) -> Result<String, JsError> {
    oracle_grid_json(p_acc_a, p_def_b, p_def_c, a_known, n_a, n_b, n_c).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn rejector_explorer(scorer: &str, separation: f64, q: f64, seed: u32) -> Result<String, JsError> {
    rejector_explorer_json(scorer, separation, q, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn belief_loop(expert_prior: &str, collaborator_prior: &str, evidence: &str, tau: f64) -> Result<String, JsError> {
    belief_loop_json(expert_prior, collaborator_prior, evidence, tau).map_err(|e| JsError::new(&e))
}
