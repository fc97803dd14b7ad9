//! Multiclass classifier over the known classes, trained by full-batch
//! gradient descent on mean cross-entropy.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{ClassLabel, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ClassifierKind {
    SoftmaxLinear,
    OneHiddenLayer { hidden: usize },
}

impl ClassifierKind {
    pub fn parse(name: &str, hidden: usize) -> Result<Self> {
        match name {
            "softmax-linear" => Ok(ClassifierKind::SoftmaxLinear),
            "one-hidden-layer" => Ok(ClassifierKind::OneHiddenLayer { hidden }),
            other => Err(Error::InvalidParameter(format!("unknown classifier kind `{other}`"))),
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassifierKind::SoftmaxLinear => f.write_str("softmax-linear"),
            ClassifierKind::OneHiddenLayer { hidden } => write!(f, "one-hidden-layer({hidden})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            kind: ClassifierKind::SoftmaxLinear,
            epochs: 200,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub final_loss: f64,
    /// Training loss at the start of each epoch.
    pub curve: Vec<f64>,
}

/// Parameters flattened in a fixed order so gradients line up with them:
/// softmax-linear is `W (K×d), b (K)`; one-hidden-layer is
/// `W1 (h×d), b1 (h), W2 (K×h), b2 (K)`. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub kind: ClassifierKind,
    pub dimension: usize,
    pub class_set: Vec<ClassLabel>,
    pub params: Vec<f64>,
    pub meta: TrainingMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    pub probs: Vec<f64>,
}

impl PredictionDistribution {
    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

pub fn param_count(kind: ClassifierKind, dim: usize, classes: usize) -> usize {
    match kind {
        ClassifierKind::SoftmaxLinear => classes * dim + classes,
        ClassifierKind::OneHiddenLayer { hidden } => hidden * dim + hidden + classes * hidden + classes,
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

impl ClassifierModel {
    /// A model with every weight zero; its predictions are uniform.
    pub fn zeros(kind: ClassifierKind, dimension: usize, class_set: Vec<ClassLabel>) -> Self {
        let n = param_count(kind, dimension, class_set.len());
        ClassifierModel {
            kind,
            dimension,
            class_set,
            params: vec![0.0; n],
            meta: TrainingMeta {
                epochs: 0,
                learning_rate: 0.0,
                seed: 0,
                final_loss: f64::NAN,
                curve: Vec::new(),
            },
        }
    }

    pub fn n_classes(&self) -> usize {
        self.class_set.len()
    }

    /// Output-layer activations and, for the hidden model, the hidden
    /// activations they were computed from.
    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.n_classes();
        let d = self.dimension;
        let p = &self.params;
        match self.kind {
            ClassifierKind::SoftmaxLinear => {
                let (w, b) = p.split_at(k * d);
                let z = (0..k)
                    .map(|c| b[c] + w[c * d..(c + 1) * d].iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
                    .collect();
                (z, Vec::new())
            }
            ClassifierKind::OneHiddenLayer { hidden: h } => {
                let (w1, rest) = p.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(k * h);
                let a: Vec<f64> = (0..h)
                    .map(|j| (b1[j] + w1[j * d..(j + 1) * d].iter().zip(x).map(|(a, v)| a * v).sum::<f64>()).tanh())
                    .collect();
                let z = (0..k)
                    .map(|c| b2[c] + w2[c * h..(c + 1) * h].iter().zip(&a).map(|(w, v)| w * v).sum::<f64>())
                    .collect();
                (z, a)
            }
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<PredictionDistribution> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: x.len(),
            });
        }
        let (mut z, _) = self.forward(x);
        softmax_in_place(&mut z);
        Ok(PredictionDistribution { probs: z })
    }

    /// Predicted class id (dataset registry id, not output index).
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.class_set[self.predict_proba(x)?.argmax()].id)
    }

    pub fn output_index(&self, class_id: usize) -> Option<usize> {
        self.class_set.iter().position(|c| c.id == class_id)
    }

    /// Mean cross-entropy over `(x, target output index)` pairs and its
    /// gradient with respect to `params`.
    pub fn loss_and_gradient(&self, xs: &[&[f64]], targets: &[usize]) -> (f64, Vec<f64>) {
        let k = self.n_classes();
        let d = self.dimension;
        let n = xs.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (x, &t) in xs.iter().zip(targets) {
            let (mut z, a) = self.forward(x);
            softmax_in_place(&mut z);
            loss -= z[t].max(f64::MIN_POSITIVE).ln();
            // dL/dz = p - onehot(t)
            let mut delta = z;
            delta[t] -= 1.0;
            match self.kind {
                ClassifierKind::SoftmaxLinear => {
                    let (gw, gb) = grad.split_at_mut(k * d);
                    for c in 0..k {
                        let row = &mut gw[c * d..(c + 1) * d];
                        for (g, v) in row.iter_mut().zip(x.iter()) {
                            *g += delta[c] * v;
                        }
                        gb[c] += delta[c];
                    }
                }
                ClassifierKind::OneHiddenLayer { hidden: h } => {
                    let w2 = &self.params[h * d + h..h * d + h + k * h];
                    let (gw1, rest) = grad.split_at_mut(h * d);
                    let (gb1, rest) = rest.split_at_mut(h);
                    let (gw2, gb2) = rest.split_at_mut(k * h);
                    for c in 0..k {
                        for j in 0..h {
                            gw2[c * h + j] += delta[c] * a[j];
                        }
                        gb2[c] += delta[c];
                    }
                    for j in 0..h {
                        let back: f64 = (0..k).map(|c| delta[c] * w2[c * h + j]).sum();
                        let dpre = back * (1.0 - a[j] * a[j]);
                        if dpre == 0.0 {
                            continue;
                        }
                        for (g, v) in gw1[j * d..(j + 1) * d].iter_mut().zip(x.iter()) {
                            *g += dpre * v;
                        }
                        gb1[j] += dpre;
                    }
                }
            }
        }
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }

    pub fn loss(&self, xs: &[&[f64]], targets: &[usize]) -> f64 {
        let n = xs.len() as f64;
        xs.iter()
            .zip(targets)
            .map(|(x, &t)| {
                let (mut z, _) = self.forward(x);
                softmax_in_place(&mut z);
                -z[t].max(f64::MIN_POSITIVE).ln()
            })
            .sum::<f64>()
            / n
    }
}

/// Trains on `train`, whose labels must all belong to `class_set`.
pub fn fit_classifier(train: &[&Sample], class_set: &[ClassLabel], config: &ClassifierConfig) -> Result<ClassifierModel> {
    let Some(first) = train.first() else {
        return Err(Error::Empty("classifier training set"));
    };
    let dim = first.features.len();
    let mut xs = Vec::with_capacity(train.len());
    let mut targets = Vec::with_capacity(train.len());
    let mut present = vec![false; class_set.len()];
    for s in train {
        if s.features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: s.features.len(),
            });
        }
        let label = s.label()?;
        let idx = class_set.iter().position(|c| c.id == label).ok_or_else(|| {
            Error::InvalidParameter(format!("sample {} has label {label} outside the known class set", s.id))
        })?;
        present[idx] = true;
        xs.push(s.features.as_slice());
        targets.push(idx);
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::InvalidParameter("classifier needs at least two classes in the training set".into()));
    }
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) && config.epochs > 0 {
        return Err(Error::InvalidParameter(format!("learning rate must be positive, got {}", config.learning_rate)));
    }

    let mut model = ClassifierModel::zeros(config.kind, dim, class_set.to_vec());
    if let ClassifierKind::OneHiddenLayer { hidden } = config.kind {
        if hidden == 0 {
            return Err(Error::InvalidParameter("hidden width must be positive".into()));
        }
        let k = class_set.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let n1 = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("finite sd");
        let n2 = Normal::new(0.0, 1.0 / (hidden as f64).sqrt()).expect("finite sd");
        for w in &mut model.params[..hidden * dim] {
            *w = n1.sample(&mut rng);
        }
        let w2_start = hidden * dim + hidden;
        for w in &mut model.params[w2_start..w2_start + k * hidden] {
            *w = n2.sample(&mut rng);
        }
    }

    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (loss, grad) = model.loss_and_gradient(&xs, &targets);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, loss });
        }
        curve.push(loss);
        for (p, g) in model.params.iter_mut().zip(&grad) {
            *p -= config.learning_rate * g;
        }
    }
    let final_loss = model.loss(&xs, &targets);
    if !final_loss.is_finite() || model.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFiniteLoss {
            epoch: config.epochs,
            loss: final_loss,
        });
    }
    model.meta = TrainingMeta {
        epochs: config.epochs,
        learning_rate: config.learning_rate,
        seed: config.seed,
        final_loss,
        curve,
    };
    Ok(model)
}

pub fn predict_proba(model: &ClassifierModel, x: &[f64]) -> Result<PredictionDistribution> {
    model.predict_proba(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalScope {
    /// Only samples whose label is in the model's class set.
    KnownOnly,
    Full,
}

/// Micro-F1 of the classifier's argmax. Out-of-set labels count as errors
/// under `Full` and are excluded under `KnownOnly`.
pub fn evaluate_classifier(model: &ClassifierModel, eval_set: &[&Sample], scope: EvalScope) -> Result<f64> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for s in eval_set {
        let label = s.label()?;
        let known = model.output_index(label).is_some();
        if scope == EvalScope::KnownOnly && !known {
            continue;
        }
        total += 1;
        if known && model.predict(&s.features)? == label {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(Error::Empty("classifier evaluation set"));
    }
    Ok(correct as f64 / total as f64)
}

/// Training curve as CSV with header `epoch,loss`.
pub fn training_curve_csv(model: &ClassifierModel) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in model.meta.curve.iter().enumerate() {
        out.push_str(&format!("{e},{l}\n"));
    }
    out.push_str(&format!("{},{}\n", model.meta.curve.len(), model.meta.final_loss));
    out
}
