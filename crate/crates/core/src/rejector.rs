//! One-class acceptance scoring and the accept/defer gate.
//!
//! Every scorer is an anomaly measure negated at the boundary, so a higher
//! score always means "more like the known classes". A sample is accepted
//! only when its score is strictly above the calibrated threshold.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetPartition, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    Centroid,
    KnnDistance,
    PcaReconstruction,
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centroid" => Ok(ScorerKind::Centroid),
            "knn-distance" => Ok(ScorerKind::KnnDistance),
            "pca-reconstruction" => Ok(ScorerKind::PcaReconstruction),
            other => Err(Error::InvalidParameter(format!("unknown rejector kind `{other}`"))),
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScorerKind::Centroid => "centroid",
            ScorerKind::KnnDistance => "knn-distance",
            ScorerKind::PcaReconstruction => "pca-reconstruction",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerHyper {
    /// Neighbours averaged by the k-NN scorer.
    pub k: usize,
    /// Principal components kept by the PCA scorer.
    pub components: usize,
    /// Reference-set size limit for k-NN; larger training sets are
    /// subsampled with `seed`.
    pub max_reference: Option<usize>,
    pub seed: u64,
}

impl Default for ScorerHyper {
    fn default() -> Self {
        ScorerHyper {
            k: 5,
            components: 2,
            max_reference: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScorerParams {
    Centroid {
        centroid: Vec<f64>,
    },
    KnnDistance {
        k: usize,
        reference: Vec<Vec<f64>>,
    },
    PcaReconstruction {
        mean: Vec<f64>,
        /// Orthonormal rows spanning the retained subspace.
        basis: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectorModel {
    pub params: ScorerParams,
    pub dimension: usize,
    pub theta_r: Option<f64>,
    pub calibration_quantile: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Defer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectDecision {
    pub value: Verdict,
    pub score: f64,
}

impl RejectDecision {
    pub fn accepted(&self) -> bool {
        self.value == Verdict::Accept
    }
}

pub fn fit_rejector(train: &[&[f64]], kind: ScorerKind, hyper: &ScorerHyper) -> Result<RejectorModel> {
    let Some(first) = train.first() else {
        return Err(Error::Empty("rejector training set"));
    };
    let dim = first.len();
    if let Some(bad) = train.iter().find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    let params = match kind {
        ScorerKind::Centroid => ScorerParams::Centroid {
            centroid: mean_vector(train, dim),
        },
        ScorerKind::KnnDistance => {
            if hyper.k == 0 || hyper.k >= train.len() {
                return Err(Error::InvalidParameter(format!(
                    "k = {} must be in 1..{} (training size)",
                    hyper.k,
                    train.len()
                )));
            }
            let reference: Vec<Vec<f64>> = match hyper.max_reference {
                Some(limit) if limit < train.len() => {
                    let limit = limit.max(hyper.k + 1);
                    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
                    let mut idx = rand::seq::index::sample(&mut rng, train.len(), limit).into_vec();
                    idx.sort_unstable();
                    idx.into_iter().map(|i| train[i].to_vec()).collect()
                }
                _ => train.iter().map(|x| x.to_vec()).collect(),
            };
            ScorerParams::KnnDistance { k: hyper.k, reference }
        }
        ScorerKind::PcaReconstruction => {
            let m = hyper.components;
            if m == 0 || m > dim {
                return Err(Error::InvalidParameter(format!(
                    "component count {m} must be in 1..={dim} (feature dimension)"
                )));
            }
            let mean = mean_vector(train, dim);
            ScorerParams::PcaReconstruction {
                basis: principal_basis(train, &mean, m),
                mean,
            }
        }
    };
    Ok(RejectorModel {
        params,
        dimension: dim,
        theta_r: None,
        calibration_quantile: None,
    })
}

fn mean_vector(rows: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    let n = rows.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Top-`m` eigenvectors of the sample covariance, largest eigenvalue first.
fn principal_basis(rows: &[&[f64]], mean: &[f64], m: usize) -> Vec<Vec<f64>> {
    let dim = mean.len();
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for r in rows {
        let centered: Vec<f64> = r.iter().zip(mean).map(|(x, m)| x - m).collect();
        for i in 0..dim {
            if centered[i] == 0.0 {
                continue;
            }
            for j in i..dim {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    cov /= rows.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .take(m)
        .map(|c| eig.eigenvectors.column(c).iter().copied().collect())
        .collect()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl RejectorModel {
    pub fn kind(&self) -> ScorerKind {
        match self.params {
            ScorerParams::Centroid { .. } => ScorerKind::Centroid,
            ScorerParams::KnnDistance { .. } => ScorerKind::KnnDistance,
            ScorerParams::PcaReconstruction { .. } => ScorerKind::PcaReconstruction,
        }
    }

    pub fn is_calibrated(&self) -> bool {
        self.theta_r.is_some()
    }

    /// Compatibility with the known classes; higher is more compatible and
    /// the maximum is 0.
    pub fn acceptance_score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: x.len(),
            });
        }
        let anomaly = match &self.params {
            ScorerParams::Centroid { centroid } => euclidean(x, centroid),
            ScorerParams::KnnDistance { k, reference } => {
                // keep the k smallest distances in a sorted buffer
                let mut best: Vec<f64> = Vec::with_capacity(k + 1);
                for r in reference {
                    let d2: f64 = x.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum();
                    if best.len() < *k || d2 < best[best.len() - 1] {
                        let pos = best.partition_point(|&v| v <= d2);
                        best.insert(pos, d2);
                        best.truncate(*k);
                    }
                }
                best.iter().map(|d2| d2.sqrt()).sum::<f64>() / best.len() as f64
            }
            ScorerParams::PcaReconstruction { mean, basis } => reconstruction_error(x, mean, basis),
        };
        Ok(-anomaly)
    }

    /// Sets `theta_r` to the `q`-quantile (linear interpolation between order
    /// statistics) of the scores on `calib`.
    pub fn calibrate(mut self, calib: &[&[f64]], q: f64) -> Result<Self> {
        if calib.is_empty() {
            return Err(Error::Empty("calibration set"));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidParameter(format!("calibration quantile must be in (0, 1), got {q}")));
        }
        let mut scores = calib
            .iter()
            .map(|x| self.acceptance_score(x))
            .collect::<Result<Vec<_>>>()?;
        scores.sort_by(f64::total_cmp);
        self.theta_r = Some(interpolated_quantile(&scores, q));
        self.calibration_quantile = Some(q);
        Ok(self)
    }

    pub fn with_threshold(mut self, theta_r: f64) -> Self {
        self.theta_r = Some(theta_r);
        self
    }

    pub fn decide(&self, x: &[f64]) -> Result<RejectDecision> {
        let theta = self.theta_r.ok_or(Error::Uncalibrated)?;
        let score = self.acceptance_score(x)?;
        let value = if score > theta {
            Verdict::Accept
        } else {
            Verdict::Defer
        };
        Ok(RejectDecision { value, score })
    }
}

/// Distance from `x` to its projection on the affine subspace `mean + span(basis)`.
pub fn reconstruction_error(x: &[f64], mean: &[f64], basis: &[Vec<f64>]) -> f64 {
    let centered: Vec<f64> = x.iter().zip(mean).map(|(a, m)| a - m).collect();
    let mut residual = centered.clone();
    for b in basis {
        let coef: f64 = centered.iter().zip(b).map(|(c, v)| c * v).sum();
        for (r, v) in residual.iter_mut().zip(b) {
            *r -= coef * v;
        }
    }
    residual.iter().map(|r| r * r).sum::<f64>().sqrt()
}

/// Type-7 quantile of ascending `sorted`.
pub fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn calibrate_threshold(model: RejectorModel, calib: &[&[f64]], q: f64) -> Result<RejectorModel> {
    model.calibrate(calib, q)
}

pub fn acceptance_score(model: &RejectorModel, x: &[f64]) -> Result<f64> {
    model.acceptance_score(x)
}

pub fn reject_decide(model: &RejectorModel, x: &[f64]) -> Result<RejectDecision> {
    model.decide(x)
}

/// Known-vs-unknown accuracy: accepted known test samples plus deferred
/// samples from `B` and `C`, over everything evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectorEvaluation {
    pub accuracy: f64,
    pub n_known: usize,
    pub n_unknown: usize,
    pub accepted_known: usize,
    pub deferred_unknown: usize,
}

pub fn evaluate_rejector(model: &RejectorModel, partition: &DatasetPartition) -> Result<RejectorEvaluation> {
    let known = partition.test_samples();
    let unknown: Vec<&Sample> = partition.d_b.iter().chain(partition.d_c.iter()).collect();
    evaluate_on(model, &known, &unknown)
}

pub fn evaluate_on(model: &RejectorModel, known: &[&Sample], unknown: &[&Sample]) -> Result<RejectorEvaluation> {
    if !model.is_calibrated() {
        return Err(Error::Uncalibrated);
    }
    let total = known.len() + unknown.len();
    if total == 0 {
        return Err(Error::Empty("rejector evaluation set"));
    }
    let mut accepted_known = 0;
    for s in known {
        if model.decide(&s.features)?.accepted() {
            accepted_known += 1;
        }
    }
    let mut deferred_unknown = 0;
    for s in unknown {
        if !model.decide(&s.features)?.accepted() {
            deferred_unknown += 1;
        }
    }
    Ok(RejectorEvaluation {
        accuracy: (accepted_known + deferred_unknown) as f64 / total as f64,
        n_known: known.len(),
        n_unknown: unknown.len(),
        accepted_known,
        deferred_unknown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rows(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn centroid_fit_and_score() {
        let data = vec![vec![0.0, 0.0], vec![2.0, 2.0]];
        let m = fit_rejector(&rows(&data), ScorerKind::Centroid, &ScorerHyper::default()).unwrap();
        assert_eq!(m.params, ScorerParams::Centroid { centroid: vec![1.0, 1.0] });
        assert_eq!(m.acceptance_score(&[1.0, 1.0]).unwrap(), 0.0);
        // √(3² + 4²)
        assert_relative_eq!(m.acceptance_score(&[4.0, 5.0]).unwrap(), -5.0);
        assert!(matches!(
            m.acceptance_score(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn pca_recovers_a_line() {
        let data: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0, -(i as f64)]).collect();
        let hyper = ScorerHyper {
            components: 1,
            ..Default::default()
        };
        let m = fit_rejector(&rows(&data), ScorerKind::PcaReconstruction, &hyper).unwrap();
        let ScorerParams::PcaReconstruction { basis, .. } = &m.params else {
            unreachable!()
        };
        let dir = [1.0, 2.0, -1.0];
        let norm = 6f64.sqrt();
        let cos: f64 = basis[0].iter().zip(dir).map(|(a, b)| a * b / norm).sum();
        assert_relative_eq!(cos.abs(), 1.0, epsilon = 1e-9);
        for x in &data {
            assert!(m.acceptance_score(x).unwrap().abs() < 1e-9);
        }
        assert!(m.acceptance_score(&[0.0, 0.0, 5.0]).unwrap() < -1.0);
    }

    #[test]
    fn fit_errors() {
        let data = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let knn = ScorerHyper {
            k: 2,
            ..Default::default()
        };
        assert!(matches!(
            fit_rejector(&rows(&data), ScorerKind::KnnDistance, &knn),
            Err(Error::InvalidParameter(_))
        ));
        let pca = ScorerHyper {
            components: 3,
            ..Default::default()
        };
        assert!(matches!(
            fit_rejector(&rows(&data), ScorerKind::PcaReconstruction, &pca),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            fit_rejector(&[], ScorerKind::Centroid, &ScorerHyper::default()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn knn_stores_reference_set() {
        let ds = crate::synth::separated_clusters(&["a", "b"], 50, 2, 4.0, 1);
        let data: Vec<&[f64]> = ds.samples.iter().map(|s| s.features.as_slice()).collect();
        let hyper = ScorerHyper {
            k: 1,
            ..Default::default()
        };
        let m = fit_rejector(&data, ScorerKind::KnnDistance, &hyper).unwrap();
        match &m.params {
            ScorerParams::KnnDistance { k, reference } => {
                assert_eq!(*k, 1);
                assert_eq!(reference.len(), 100);
            }
            _ => unreachable!(),
        }
        // a stored point is its own nearest neighbour
        assert_eq!(m.acceptance_score(data[7]).unwrap(), 0.0);
    }

    #[test]
    fn quantile_interpolates() {
        assert_relative_eq!(interpolated_quantile(&[-4.0, -3.0, -2.0, -1.0], 0.25), -3.25);
        assert_relative_eq!(interpolated_quantile(&[-4.0, -3.0, -2.0, -1.0], 0.5), -2.5);
        assert_eq!(interpolated_quantile(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn calibration_on_known_scores() {
        // a centroid at the origin in 1-D scores x as -|x|
        let model = fit_rejector(&[&[-1.0][..], &[1.0][..]], ScorerKind::Centroid, &ScorerHyper::default()).unwrap();
        let calib = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let model = model.calibrate(&rows(&calib), 0.25).unwrap();
        assert_relative_eq!(model.theta_r.unwrap(), -3.25);
        let accepted = calib.iter().filter(|x| model.decide(x).unwrap().accepted()).count();
        assert_eq!(accepted, 3);

        // constant scores: threshold equals the constant and ties defer
        let flat = vec![vec![2.0], vec![-2.0], vec![2.0]];
        let m2 = fit_rejector(&[&[-1.0][..], &[1.0][..]], ScorerKind::Centroid, &ScorerHyper::default())
            .unwrap()
            .calibrate(&rows(&flat), 0.4)
            .unwrap();
        assert_eq!(m2.theta_r, Some(-2.0));
        assert!(flat.iter().all(|x| !m2.decide(x).unwrap().accepted()));

        // tiny q with distinct scores accepts all but the minimum, which sits
        // exactly on the threshold
        let m3 = fit_rejector(&[&[-1.0][..], &[1.0][..]], ScorerKind::Centroid, &ScorerHyper::default())
            .unwrap()
            .calibrate(&rows(&calib), 1e-9)
            .unwrap();
        let accepted = calib.iter().filter(|x| m3.decide(x).unwrap().accepted()).count();
        assert_eq!(accepted, 3);
        assert!(m3.theta_r.unwrap() > -4.0);
    }

    #[test]
    fn calibration_preconditions() {
        let model = fit_rejector(&[&[0.0][..], &[1.0][..]], ScorerKind::Centroid, &ScorerHyper::default()).unwrap();
        assert!(matches!(model.clone().calibrate(&[], 0.05), Err(Error::Empty(_))));
        assert!(matches!(model.clone().calibrate(&[&[0.0][..]], 1.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(model.decide(&[0.0]), Err(Error::Uncalibrated)));
    }

    #[test]
    fn strict_threshold() {
        let model = fit_rejector(&[&[0.0][..], &[0.0][..]], ScorerKind::Centroid, &ScorerHyper::default()).unwrap();
        let m = model.clone().with_threshold(-0.5);
        assert_eq!(m.decide(&[0.0]).unwrap().value, Verdict::Accept);
        assert_eq!(m.decide(&[0.5]).unwrap().value, Verdict::Defer);
        assert_eq!(model.with_threshold(0.0).decide(&[0.0]).unwrap().value, Verdict::Defer);
    }

    fn brute_force_best_line_error(points: &[Vec<f64>]) -> f64 {
        // sum of squared residuals for the best 1-D direction through the
        // mean, searched over a dense grid of directions in the plane
        let mean = mean_vector(&rows(points), 2);
        let mut best = f64::INFINITY;
        for step in 0..20_000 {
            let t = std::f64::consts::PI * step as f64 / 20_000.0;
            let dir = vec![t.cos(), t.sin()];
            let total: f64 = points
                .iter()
                .map(|p| reconstruction_error(p, &mean, std::slice::from_ref(&dir)).powi(2))
                .sum();
            best = best.min(total);
        }
        best
    }

    proptest! {
        #[test]
        fn raising_threshold_never_accepts_more(
            xs in prop::collection::vec(-10.0f64..10.0, 1..30),
            t1 in -10.0f64..0.0,
            dt in 0.0f64..5.0,
        ) {
            let model = fit_rejector(&[&[0.0][..], &[0.0][..]], ScorerKind::Centroid, &ScorerHyper::default()).unwrap();
            let low = model.clone().with_threshold(t1);
            let high = model.with_threshold(t1 + dt);
            for x in xs {
                let a_low = low.decide(&[x]).unwrap().accepted();
                let a_high = high.decide(&[x]).unwrap().accepted();
                prop_assert!(!a_high || a_low);
            }
        }

        #[test]
        fn centroid_scores_are_translation_invariant(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..20),
            q in prop::collection::vec(-5.0f64..5.0, 3),
            shift in prop::collection::vec(-100.0f64..100.0, 3),
        ) {
            let moved: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().zip(&shift).map(|(a, s)| a + s).collect()).collect();
            let qm: Vec<f64> = q.iter().zip(&shift).map(|(a, s)| a + s).collect();
            let m1 = fit_rejector(&rows(&pts), ScorerKind::Centroid, &ScorerHyper::default()).unwrap();
            let m2 = fit_rejector(&rows(&moved), ScorerKind::Centroid, &ScorerHyper::default()).unwrap();
            let s1 = m1.acceptance_score(&q).unwrap();
            let s2 = m2.acceptance_score(&qm).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-9);
        }

        #[test]
        fn calibration_accepts_about_one_minus_q(
            scores in prop::collection::vec(-100.0f64..0.0, 20..200),
            q in 0.01f64..0.5,
        ) {
            let calib: Vec<Vec<f64>> = scores.iter().map(|s| vec![-s]).collect();
            let model = fit_rejector(&[&[0.0][..], &[0.0][..]], ScorerKind::Centroid, &ScorerHyper::default())
                .unwrap()
                .calibrate(&rows(&calib), q)
                .unwrap();
            let n = calib.len() as f64;
            let rate = calib.iter().filter(|x| model.decide(x).unwrap().accepted()).count() as f64 / n;
            let slack = 2.0 / n.sqrt();
            prop_assert!(rate >= 1.0 - q - slack && rate <= 1.0 - q + slack);
        }

        #[test]
        fn pca_total_error_is_minimal_among_lines(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 3..12),
        ) {
            let hyper = ScorerHyper { components: 1, ..Default::default() };
            let m = fit_rejector(&rows(&pts), ScorerKind::PcaReconstruction, &hyper).unwrap();
            let pca_total: f64 = pts.iter().map(|p| m.acceptance_score(p).unwrap().powi(2)).sum();
            let brute = brute_force_best_line_error(&pts);
            prop_assert!(pca_total <= brute + 1e-6 * (1.0 + brute));
        }
    }
}
