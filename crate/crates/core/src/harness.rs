//! Desk-scale targeted-selection experiment.
//!
//! Per seed: draw class-conditional Gaussian data in which two target
//! classes are rare in the labeled train split, train a softmax-regression
//! model, embed the unlabeled lake (hypothesized labels) and the target set
//! (true labels) by their last-layer loss gradients, select a budget of lake
//! points with each method, reveal their labels, retrain from scratch and
//! report test-accuracy gains on the target classes and overall.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::{FeatureMatrix, LabelVector, ProbabilityMatrix};
use crate::kernel::{KernelConfig, Metric, Transform};
use crate::objectives::{ObjectiveKind, ObjectiveParams};
use crate::optimizer::Algorithm;
use crate::pipeline::{select_method, BaselineKind, KernelBank, Method, SelectionSettings};
use crate::{Error, Result};

/// Seed for the fixed class-mean directions used when `feature_dim` is
/// smaller than `num_classes`.
const MEAN_DIRECTION_SEED: u64 = 0x5EED_C1A5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Fixed target classes; drawn per seed when absent.
    pub target_classes: Option<Vec<usize>>,
    /// Train rows per target class.
    pub rare_per_class: usize,
    /// Train rows per other class.
    pub common_per_class: usize,
    pub lake_size: usize,
    /// Restrict the lake to the target classes.
    pub lake_target_only: bool,
    pub target_set_size: usize,
    pub test_per_class: usize,
    pub budget: usize,
    /// Distance of each class mean from the origin.
    pub mean_scale: f64,
    /// Per-coordinate noise standard deviation.
    pub noise_scale: f64,
    pub learn_rate: f64,
    pub max_epochs: usize,
    pub train_acc_threshold: f64,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub eta: f64,
    pub gamma: f64,
    pub lambda_gc: f64,
    pub ridge: f64,
    pub metric: Metric,
    pub transform: Transform,
    pub algorithm: Algorithm,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            feature_dim: 16,
            target_classes: None,
            rare_per_class: 30,
            common_per_class: 100,
            lake_size: 2000,
            lake_target_only: false,
            target_set_size: 10,
            test_per_class: 100,
            budget: 100,
            mean_scale: 2.5,
            noise_scale: 1.0,
            learn_rate: 0.1,
            max_epochs: 300,
            train_acc_threshold: 0.99,
            seeds: (0..10).collect(),
            methods: default_methods(),
            eta: 1.0,
            gamma: 1.0,
            lambda_gc: 0.5,
            ridge: 1e-6,
            metric: Metric::Cosine,
            transform: Transform::ShiftScale,
            algorithm: Algorithm::Lazy,
        }
    }
}

pub fn default_methods() -> Vec<Method> {
    let mut methods: Vec<Method> = ObjectiveKind::ALL.into_iter().map(Method::Objective).collect();
    methods.extend(BaselineKind::ALL.into_iter().map(Method::Baseline));
    methods
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Configuration(m));
        if self.num_classes < 2 {
            return cfg_err("num_classes must be at least 2".into());
        }
        if self.feature_dim == 0 {
            return cfg_err("feature_dim must be positive".into());
        }
        if let Some(t) = &self.target_classes {
            if t.len() != 2 || t[0] == t[1] || t.iter().any(|&c| c >= self.num_classes) {
                return cfg_err(format!("target_classes must be two distinct ids below {}", self.num_classes));
            }
        }
        if self.target_set_size == 0 {
            return cfg_err("target_set_size must be positive".into());
        }
        if self.budget > 0 && self.target_set_size >= self.budget {
            return cfg_err(format!(
                "target_set_size ({}) must be smaller than the budget ({})",
                self.target_set_size, self.budget
            ));
        }
        if !(self.noise_scale >= 0.0) || !(self.mean_scale > 0.0) || !(self.learn_rate > 0.0) {
            return cfg_err("mean_scale and learn_rate must be positive, noise_scale nonnegative".into());
        }
        if self.test_per_class == 0 || self.lake_size == 0 {
            return Err(Error::Size("lake and test splits must be nonempty".into()));
        }
        if self.budget > self.lake_size {
            return Err(Error::Size(format!("budget {} exceeds lake size {}", self.budget, self.lake_size)));
        }
        Ok(())
    }

    fn selection_settings(&self, seed: u64) -> SelectionSettings {
        SelectionSettings {
            params: ObjectiveParams {
                eta: self.eta,
                gamma: self.gamma,
                lambda_gc: self.lambda_gc,
                ridge: self.ridge,
            },
            budget: self.budget,
            algorithm: self.algorithm,
            seed,
        }
    }
}

/// Features with their true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSplit {
    pub features: FeatureMatrix<f64>,
    pub labels: LabelVector,
}

impl LabeledSplit {
    fn from_parts(rows: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize, name: &str) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Size(format!("{name} split is empty")));
        }
        Ok(Self {
            features: FeatureMatrix::from_rows(&rows)?,
            labels: LabelVector::new(labels, num_classes)?,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `self` followed by the chosen rows of `other`.
    pub fn augmented(&self, other: &LabeledSplit, rows: &[usize]) -> Result<LabeledSplit> {
        let mut feats: Vec<Vec<f64>> = self.features.iter_rows().map(<[f64]>::to_vec).collect();
        let mut labels = self.labels.labels().to_vec();
        for &r in rows {
            feats.push(other.features.row(r).to_vec());
            labels.push(other.labels.labels()[r]);
        }
        LabeledSplit::from_parts(feats, labels, self.labels.num_classes(), "augmented")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub target_classes: Vec<usize>,
    pub train: LabeledSplit,
    pub lake: LabeledSplit,
    pub target: LabeledSplit,
    pub test: LabeledSplit,
}

fn class_means(cfg: &ExperimentConfig) -> Vec<Vec<f64>> {
    let (c, d) = (cfg.num_classes, cfg.feature_dim);
    if d >= c {
        return (0..c)
            .map(|k| (0..d).map(|j| if j == k { cfg.mean_scale } else { 0.0 }).collect())
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(MEAN_DIRECTION_SEED);
    (0..c)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.iter().map(|x| cfg.mean_scale * x / norm).collect()
        })
        .collect()
}

/// Generates the four splits for one seed.
pub fn synthetic_generate(cfg: &ExperimentConfig, seed: u64) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = cfg.num_classes;
    let target_classes = match &cfg.target_classes {
        Some(t) => t.clone(),
        None => {
            let mut t = sample(&mut rng, c, 2).into_vec();
            t.sort_unstable();
            t
        }
    };
    let means = class_means(cfg);
    let mut draw = |class: usize, rows: &mut Vec<Vec<f64>>, labels: &mut Vec<usize>| {
        let point: Vec<f64> = means[class]
            .iter()
            .map(|&m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + cfg.noise_scale * z
            })
            .collect();
        rows.push(point);
        labels.push(class);
    };

    let is_target = |k: usize| target_classes.contains(&k);
    let (mut rows, mut labels) = (Vec::new(), Vec::new());
    for k in 0..c {
        let count = if is_target(k) { cfg.rare_per_class } else { cfg.common_per_class };
        for _ in 0..count {
            draw(k, &mut rows, &mut labels);
        }
    }
    let train = LabeledSplit::from_parts(rows, labels, c, "train")?;

    let lake_classes: Vec<usize> = if cfg.lake_target_only { target_classes.clone() } else { (0..c).collect() };
    let (mut rows, mut labels) = (Vec::new(), Vec::new());
    for i in 0..cfg.lake_size {
        draw(lake_classes[i % lake_classes.len()], &mut rows, &mut labels);
    }
    let lake = LabeledSplit::from_parts(rows, labels, c, "lake")?;

    let (mut rows, mut labels) = (Vec::new(), Vec::new());
    for i in 0..cfg.target_set_size {
        draw(target_classes[i % target_classes.len()], &mut rows, &mut labels);
    }
    let target = LabeledSplit::from_parts(rows, labels, c, "target")?;

    let (mut rows, mut labels) = (Vec::new(), Vec::new());
    for k in 0..c {
        for _ in 0..cfg.test_per_class {
            draw(k, &mut rows, &mut labels);
        }
    }
    let test = LabeledSplit::from_parts(rows, labels, c, "test")?;

    Ok(SyntheticData { target_classes, train, lake, target, test })
}

/// Multinomial logistic regression, weights `C × (d + 1)` with the bias in
/// the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    classes: usize,
    dims: usize,
    weights: Vec<f64>,
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

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

impl ToyModel {
    pub fn zeros(classes: usize, dims: usize) -> Self {
        Self { classes, dims, weights: vec![0.0; classes * (dims + 1)] }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check_dims(&self, x: &FeatureMatrix<f64>) -> Result<()> {
        if x.dims() != self.dims {
            return Err(Error::Shape(format!("model expects {} features, data has {}", self.dims, x.dims())));
        }
        Ok(())
    }

    /// Class probabilities for one input.
    pub fn predict_row(&self, x: &[f64]) -> Vec<f64> {
        let w = self.dims + 1;
        let mut z: Vec<f64> = (0..self.classes)
            .map(|c| {
                let row = &self.weights[c * w..(c + 1) * w];
                row[..self.dims].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + row[self.dims]
            })
            .collect();
        softmax_in_place(&mut z);
        z
    }

    pub fn predict(&self, x: &FeatureMatrix<f64>) -> Result<ProbabilityMatrix<f64>> {
        self.check_dims(x)?;
        let values: Vec<f64> = x.iter_rows().flat_map(|r| self.predict_row(r)).collect();
        ProbabilityMatrix::new(x.rows(), self.classes, values)
    }

    pub fn accuracy(&self, data: &LabeledSplit) -> Result<f64> {
        self.accuracy_where(data, |_| true)
    }

    /// Accuracy over rows whose true label satisfies `keep`; 0 if none do.
    pub fn accuracy_where(&self, data: &LabeledSplit, keep: impl Fn(usize) -> bool) -> Result<f64> {
        self.check_dims(&data.features)?;
        let (mut hit, mut total) = (0usize, 0usize);
        for (x, &y) in data.features.iter_rows().zip(data.labels.labels()) {
            if keep(y) {
                total += 1;
                if argmax(&self.predict_row(x)) == y {
                    hit += 1;
                }
            }
        }
        Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learn_rate: f64,
    pub max_epochs: usize,
    pub train_acc_threshold: f64,
}

impl From<&ExperimentConfig> for TrainConfig {
    fn from(cfg: &ExperimentConfig) -> Self {
        Self {
            learn_rate: cfg.learn_rate,
            max_epochs: cfg.max_epochs,
            train_acc_threshold: cfg.train_acc_threshold,
        }
    }
}

/// Full-batch gradient descent on mean cross-entropy from zero weights,
/// stopping once train accuracy reaches the threshold or after
/// `max_epochs` steps.
pub fn train_softmax(data: &LabeledSplit, cfg: &TrainConfig) -> Result<ToyModel> {
    if data.is_empty() {
        return Err(Error::Size("cannot train on an empty split".into()));
    }
    let classes = data.labels.num_classes();
    let dims = data.features.dims();
    let width = dims + 1;
    let n = data.len() as f64;
    let mut model = ToyModel::zeros(classes, dims);
    let mut grad = vec![0.0; classes * width];
    for epoch in 0..cfg.max_epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        let mut hits = 0usize;
        for (x, &y) in data.features.iter_rows().zip(data.labels.labels()) {
            let p = model.predict_row(x);
            if argmax(&p) == y {
                hits += 1;
            }
            loss -= p[y].ln();
            for c in 0..classes {
                let r = p[c] - if c == y { 1.0 } else { 0.0 };
                let g = &mut grad[c * width..(c + 1) * width];
                for (gj, &xj) in g[..dims].iter_mut().zip(x) {
                    *gj += r * xj;
                }
                g[dims] += r;
            }
        }
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        if hits as f64 / n >= cfg.train_acc_threshold {
            break;
        }
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= cfg.learn_rate * g / n;
        }
    }
    if model.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Divergence { epoch: cfg.max_epochs });
    }
    Ok(model)
}

/// Which label enters the loss gradient of each row.
#[derive(Debug, Clone, Copy)]
pub enum GradientLabels<'a> {
    Given(&'a LabelVector),
    /// The model's argmax prediction.
    Hypothesized,
}

/// Gradient of the cross-entropy loss w.r.t. the weights of a linear
/// softmax layer: `(p − e_y) ⊗ x`, flattened class-major.
pub fn outer_gradient(p: &[f64], y: usize, x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(p.len() * x.len());
    for (c, &pc) in p.iter().enumerate() {
        let r = pc - if c == y { 1.0 } else { 0.0 };
        out.extend(x.iter().map(|&xj| r * xj));
    }
    out
}

/// Per-row last-layer gradient embeddings, `C·(d+1)` columns each.
pub fn gradient_embeddings(
    model: &ToyModel,
    data: &FeatureMatrix<f64>,
    labels: GradientLabels<'_>,
) -> Result<FeatureMatrix<f64>> {
    model.check_dims(data)?;
    if let GradientLabels::Given(l) = labels {
        if l.len() != data.rows() {
            return Err(Error::Shape(format!("{} labels for {} rows", l.len(), data.rows())));
        }
    }
    let mut values = Vec::with_capacity(data.rows() * model.classes * (model.dims + 1));
    let mut augmented = vec![1.0; model.dims + 1];
    for (i, x) in data.iter_rows().enumerate() {
        let p = model.predict_row(x);
        let y = match labels {
            GradientLabels::Given(l) => l.labels()[i],
            GradientLabels::Hypothesized => argmax(&p),
        };
        augmented[..model.dims].copy_from_slice(x);
        values.extend(outer_gradient(&p, y, &augmented));
    }
    FeatureMatrix::new(data.rows(), model.classes * (model.dims + 1), values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentEntry {
    pub method: Method,
    pub seed: u64,
    pub target_classes: Vec<usize>,
    pub base_target_accuracy: f64,
    pub base_overall_accuracy: f64,
    pub post_target_accuracy: f64,
    pub post_overall_accuracy: f64,
    pub target_gain: f64,
    pub overall_gain: f64,
    /// Selected lake rows whose true label is a target class.
    pub selected_target_count: usize,
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub median_target_gain: f64,
    pub mean_target_gain: f64,
    pub median_overall_gain: f64,
    pub mean_overall_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub entries: Vec<ExperimentEntry>,
    pub summaries: Vec<MethodSummary>,
}

impl ExperimentReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn entries_for(&self, method: Method) -> impl Iterator<Item = &ExperimentEntry> {
        self.entries.iter().filter(move |e| e.method == method)
    }

    /// Pretty JSON with sorted keys.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::to_value(self)?)?)
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

fn mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

fn run_seed(cfg: &ExperimentConfig, methods: &[Method], seed: u64) -> Result<Vec<ExperimentEntry>> {
    let data = synthetic_generate(cfg, seed)?;
    let train_cfg = TrainConfig::from(cfg);
    let base = train_softmax(&data.train, &train_cfg)?;
    let is_target = |y: usize| data.target_classes.contains(&y);
    let base_target = base.accuracy_where(&data.test, is_target)?;
    let base_overall = base.accuracy(&data.test)?;

    let lake_probs = base.predict(&data.lake.features)?;
    let lake_emb = gradient_embeddings(&base, &data.lake.features, GradientLabels::Hypothesized)?;
    let target_emb = gradient_embeddings(&base, &data.target.features, GradientLabels::Given(&data.target.labels))?;
    let kernel_cfg = KernelConfig::new(cfg.metric, cfg.transform);
    let bank = KernelBank::new(&lake_emb, Some(&target_emb), kernel_cfg);
    let settings = cfg.selection_settings(seed);

    methods
        .iter()
        .map(|&method| {
            let selection = select_method(method, &bank, Some(&lake_probs), &settings)?;
            let augmented = data.train.augmented(&data.lake, &selection.selected)?;
            let model = train_softmax(&augmented, &train_cfg)?;
            let post_target = model.accuracy_where(&data.test, is_target)?;
            let post_overall = model.accuracy(&data.test)?;
            let selected_target_count = selection
                .selected
                .iter()
                .filter(|&&i| is_target(data.lake.labels.labels()[i]))
                .count();
            Ok(ExperimentEntry {
                method,
                seed,
                target_classes: data.target_classes.clone(),
                base_target_accuracy: base_target,
                base_overall_accuracy: base_overall,
                post_target_accuracy: post_target,
                post_overall_accuracy: post_overall,
                target_gain: post_target - base_target,
                overall_gain: post_overall - base_overall,
                selected_target_count,
                selected: selection.selected,
            })
        })
        .collect()
}

/// Runs every `(seed, method)` cell; seeds run in parallel.
pub fn run_experiment(cfg: &ExperimentConfig, methods: &[Method]) -> Result<ExperimentReport> {
    cfg.validate()?;
    let per_seed: Vec<Vec<ExperimentEntry>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, methods, seed))
        .collect::<Result<_>>()?;
    let entries: Vec<ExperimentEntry> = per_seed.into_iter().flatten().collect();
    let summaries = methods
        .iter()
        .map(|&method| {
            let target: Vec<f64> = entries.iter().filter(|e| e.method == method).map(|e| e.target_gain).collect();
            let overall: Vec<f64> = entries.iter().filter(|e| e.method == method).map(|e| e.overall_gain).collect();
            MethodSummary {
                method,
                median_target_gain: median(&target),
                mean_target_gain: mean(&target),
                median_overall_gain: median(&overall),
                mean_overall_gain: mean(&overall),
            }
        })
        .collect();
    Ok(ExperimentReport { config: cfg.clone(), entries, summaries })
}
