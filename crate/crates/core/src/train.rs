//! End-to-end training of a scoring model from ordering supervision.
//!
//! Each group of `n` items is scored independently, the scores are pushed
//! through the relaxed sorting network, and the loss compares the resulting
//! soft permutation with the group's ground-truth permutation. Gradients flow
//! back through the network into the model and are applied with Adam.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, RankingGroup};
use crate::error::{Error, Result};
use crate::objective::{
    elementwise_fraction, em_k_counts, ranking_loss, top_k_loss, CrossEntropy, MetricReport,
};
use crate::relax::{default_steepness, Mode, RelaxConfig, DEFAULT_ART_LAMBDA, DEFAULT_EPSILON};
use crate::schedule::{ComparatorSchedule, NetworkKind};
use crate::softsort::{backward, forward, hard_ranks};

/// Learning rate `10^-3.5`.
pub const DEFAULT_LEARNING_RATE: f64 = 0.000_316_227_766_016_837_94;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    /// `w . x + b`
    Linear,
    /// Fully connected with rectifier hidden layers and a scalar output.
    Mlp { hidden: Vec<usize> },
}

impl Architecture {
    fn widths(&self, d: usize) -> Vec<usize> {
        let mut w = vec![d];
        if let Architecture::Mlp { hidden } = self {
            w.extend(hidden);
        }
        w.push(1);
        w
    }

    pub fn param_count(&self, d: usize) -> usize {
        self.widths(d).windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Maps a `d`-vector to a scalar score. Parameters are stored flat, layer by
/// layer: an `out x in` row-major weight block followed by `out` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoringModel {
    pub architecture: Architecture,
    pub d: usize,
    pub params: Vec<f64>,
}

impl ScoringModel {
    pub fn new(architecture: Architecture, d: usize, params: Vec<f64>) -> Result<Self> {
        let expected = architecture.param_count(d);
        if d == 0 {
            return Err(Error::InvalidSize(
                "feature dimension must be positive".into(),
            ));
        }
        if params.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: params.len(),
            });
        }
        if let Architecture::Mlp { hidden } = &architecture {
            if hidden.contains(&0) {
                return Err(Error::InvalidSize("hidden layers must be non-empty".into()));
            }
        }
        Ok(Self {
            architecture,
            d,
            params,
        })
    }

    pub fn zeros(architecture: Architecture, d: usize) -> Result<Self> {
        let count = architecture.param_count(d);
        Self::new(architecture, d, vec![0.0; count])
    }

    /// Weights drawn from `N(0, 2 / fan_in)` (`N(0, 1 / d)` for the linear
    /// model), zero biases.
    pub fn init(architecture: Architecture, d: usize, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(architecture, d)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = if model.architecture == Architecture::Linear {
            1.0
        } else {
            2.0
        };
        let widths = model.architecture.widths(d);
        let mut offset = 0;
        for w in widths.windows(2) {
            let std = (gain / w[0] as f64).sqrt();
            for p in &mut model.params[offset..offset + w[0] * w[1]] {
                *p = std * rng.sample::<f64, _>(StandardNormal);
            }
            offset += w[0] * w[1] + w[1];
        }
        Ok(model)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_features(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::ShapeMismatch {
                expected: self.d,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Per-layer activations, starting with the input itself.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let widths = self.architecture.widths(self.d);
        let last = widths.len() - 2;
        let mut acts = vec![x.to_vec()];
        let mut offset = 0;
        for (l, w) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let bias = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            let input = &acts[l];
            let out: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let z = weights[o * fan_in..(o + 1) * fan_in]
                        .iter()
                        .zip(input)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        + bias[o];
                    if l < last {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
            offset += fan_in * fan_out + fan_out;
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_features(x)?;
        Ok(self.activations(x).last().expect("output layer")[0])
    }

    /// `dL/dparams` given `dL/dscore`.
    pub fn backward(&self, x: &[f64], grad_score: f64) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        self.accumulate_grad(x, grad_score, &mut grad)?;
        Ok(grad)
    }

    /// Adds `dL/dparams` into `grad`.
    pub fn accumulate_grad(&self, x: &[f64], grad_score: f64, grad: &mut [f64]) -> Result<()> {
        self.check_features(x)?;
        if grad.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                found: grad.len(),
            });
        }
        let widths = self.architecture.widths(self.d);
        let acts = self.activations(x);
        let mut offsets = Vec::with_capacity(widths.len() - 1);
        let mut offset = 0;
        for w in widths.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut upstream = vec![grad_score];
        for l in (0..widths.len() - 1).rev() {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let off = offsets[l];
            let input = &acts[l];
            let mut down = vec![0.0; fan_in];
            for o in 0..fan_out {
                let g = upstream[o];
                if g == 0.0 {
                    continue;
                }
                let row = off + o * fan_in;
                for i in 0..fan_in {
                    grad[row + i] += g * input[i];
                    down[i] += g * self.params[row + i];
                }
                grad[off + fan_in * fan_out + o] += g;
            }
            // rectifier gate of the layer that produced `input`
            if l > 0 {
                for (d, &a) in down.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            upstream = down;
        }
        Ok(())
    }
}

/// Adam optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self::with_settings(
            len,
            &AdamSettings {
                lr,
                ..AdamSettings::default()
            },
        )
    }

    pub fn with_settings(len: usize, s: &AdamSettings) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: s.beta1,
            beta2: s.beta2,
            epsilon: s.epsilon,
            lr: s.lr,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        for len in [params.len(), grads.len()] {
            if len != self.m.len() {
                return Err(Error::ShapeMismatch {
                    expected: self.m.len(),
                    found: len,
                });
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        Self {
            lr: DEFAULT_LEARNING_RATE,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    RankingCe {
        cross_entropy: CrossEntropy,
    },
    /// The supervised element is the group's largest.
    TopK {
        k: usize,
    },
}

impl Default for LossKind {
    fn default() -> Self {
        LossKind::RankingCe {
            cross_entropy: CrossEntropy::Binary,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: NetworkKind,
    pub n: usize,
    pub relax: RelaxConfig<f64>,
    pub steps: usize,
    /// Groups per step.
    pub batch: usize,
    pub adam: AdamSettings,
    pub seed: u64,
    /// Global L2 norm limit on the averaged gradient.
    pub grad_clip: Option<f64>,
    pub loss: LossKind,
    pub architecture: Architecture,
}

impl TrainConfig {
    /// Defaults: steepness twice the layer count, ART lambda 0.25, learning
    /// rate `10^-3.5`, batch 100, linear scorer.
    pub fn new(kind: NetworkKind, n: usize) -> Result<Self> {
        let schedule = ComparatorSchedule::new(kind, n)?;
        let steepness = default_steepness::<f64>(&schedule).max(1.0);
        Ok(Self {
            kind,
            n,
            relax: RelaxConfig::with_params(
                steepness,
                DEFAULT_ART_LAMBDA,
                DEFAULT_EPSILON,
                Mode::Soft,
            )?,
            steps: 1000,
            batch: 100,
            adam: AdamSettings::default(),
            seed: 0,
            grad_clip: None,
            loss: LossKind::default(),
            architecture: Architecture::Linear,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidConfig("batch must be at least 1".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.adam.lr
            )));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "gradient clip must be positive, got {c}"
                )));
            }
        }
        if let LossKind::TopK { k } = self.loss {
            if k == 0 || k > self.n {
                return Err(Error::InvalidConfig(format!(
                    "top-k needs 1 <= k <= n, got k = {k}"
                )));
            }
        }
        self.relax.validate()
    }
}

/// Loss of one group and its gradient with respect to the model parameters.
pub fn group_loss_and_grad(
    model: &ScoringModel,
    group: &RankingGroup,
    schedule: &ComparatorSchedule,
    config: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    let scores = group
        .items
        .iter()
        .map(|x| model.forward(x))
        .collect::<Result<Vec<_>>>()?;
    let out = forward(&scores, schedule, &config.relax)?;
    let (loss, grad_p) = match config.loss {
        LossKind::RankingCe { cross_entropy } => {
            ranking_loss(&out.perm, &group.true_perm, cross_entropy)?
        }
        LossKind::TopK { k } => {
            let top = group.true_perm.element_at(group.n() - 1);
            top_k_loss(&out.perm, top, k)?
        }
    };
    let grad_scores = backward(&out.trace, None, Some(&grad_p))?;
    let mut grad = vec![0.0; model.param_count()];
    for (x, &g) in group.items.iter().zip(&grad_scores) {
        model.accumulate_grad(x, g, &mut grad)?;
    }
    Ok((loss, grad))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ScoringModel,
    /// Mean batch loss of every step.
    pub history: Vec<f64>,
    pub optimizer: AdamState,
}

/// Seed offset separating model initialization from batch sampling.
const INIT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// Deterministic training loop. Per step: sample `batch` groups (with
/// replacement), compute per-group gradients concurrently, sum them in batch
/// order, average, optionally clip, and take one Adam step.
pub fn train_loop(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    let model = ScoringModel::init(
        config.architecture.clone(),
        dataset.d(),
        config.seed ^ INIT_STREAM,
    )?;
    train_from(model, dataset, config)
}

/// [`train_loop`] starting from an existing model.
pub fn train_from(
    mut model: ScoringModel,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidSize("dataset is empty".into()));
    }
    if dataset.n() != config.n {
        return Err(Error::ShapeMismatch {
            expected: config.n,
            found: dataset.n(),
        });
    }
    if dataset.d() != model.d {
        return Err(Error::ShapeMismatch {
            expected: model.d,
            found: dataset.d(),
        });
    }
    let schedule = ComparatorSchedule::new(config.kind, config.n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::with_settings(model.param_count(), &config.adam);
    let mut history = Vec::with_capacity(config.steps);
    let scale = 1.0 / config.batch as f64;
    for _ in 0..config.steps {
        let picks: Vec<usize> = (0..config.batch)
            .map(|_| rng.random_range(0..dataset.len()))
            .collect();
        let results = picks
            .par_iter()
            .map(|&g| group_loss_and_grad(&model, &dataset.groups()[g], &schedule, config))
            .collect::<Result<Vec<_>>>()?;
        let mut grad = vec![0.0; model.param_count()];
        let mut loss = 0.0;
        for (l, g) in &results {
            loss += l;
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
        grad.iter_mut().for_each(|g| *g *= scale);
        if let Some(limit) = config.grad_clip {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > limit {
                let shrink = limit / norm;
                grad.iter_mut().for_each(|g| *g *= shrink);
            }
        }
        adam.step(&mut model.params, &grad)?;
        history.push(loss * scale);
    }
    Ok(TrainOutcome {
        model,
        history,
        optimizer: adam,
    })
}

/// Scores every item of the dataset independently, group-major.
pub fn score_dataset(model: &ScoringModel, dataset: &Dataset) -> Result<Vec<f64>> {
    dataset.items().map(|x| model.forward(x)).collect()
}

/// EM and EW over the dataset's groups, and EM-k over groups of size `k`.
///
/// With latent `keys` (aligned with [`Dataset::items`]) EM-k groups are drawn
/// from the whole item pool. Without them only within-group order is known,
/// so EM-k groups are drawn inside each ground-truth group.
pub fn evaluate(
    model: &ScoringModel,
    dataset: &Dataset,
    keys: Option<&[f64]>,
    k: usize,
    seed: u64,
) -> Result<MetricReport> {
    if dataset.is_empty() {
        return Err(Error::InvalidSize("dataset is empty".into()));
    }
    let scores = score_dataset(model, dataset)?;
    let n = dataset.n();
    let mut em_hits = 0usize;
    let mut ew_sum = 0.0;
    for (g, group) in dataset.groups().iter().enumerate() {
        let pred = hard_ranks(&scores[g * n..(g + 1) * n]);
        if pred == group.true_perm.ranks() {
            em_hits += 1;
        }
        ew_sum += elementwise_fraction(&pred, group.true_perm.ranks())?;
    }
    let em_k = match keys {
        Some(keys) => {
            if keys.len() != scores.len() {
                return Err(Error::ShapeMismatch {
                    expected: scores.len(),
                    found: keys.len(),
                });
            }
            crate::objective::em_k_eval(&scores, keys, k, seed)?
        }
        None => {
            if k == 0 || k > n {
                return Err(Error::InvalidSize(format!(
                    "EM-{k} without latent keys needs groups of at least {k} items, have {n}"
                )));
            }
            let (mut hits, mut groups) = (0, 0);
            for (g, group) in dataset.groups().iter().enumerate() {
                let truth: Vec<f64> = group.true_perm.ranks().iter().map(|&r| r as f64).collect();
                let (h, c) = em_k_counts(
                    &scores[g * n..(g + 1) * n],
                    &truth,
                    k,
                    seed.wrapping_add(g as u64),
                );
                hits += h;
                groups += c;
            }
            hits as f64 / groups as f64
        }
    };
    let count = dataset.len();
    Ok(MetricReport {
        em: em_hits as f64 / count as f64,
        ew: ew_sum / count as f64,
        em_k,
        k,
        count,
    })
}

/// Serialized model plus the configuration that produced it (`.ckpt.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub d: usize,
    pub params: Vec<f64>,
    pub config: TrainConfig,
    pub seed: u64,
    pub step: usize,
}

impl Checkpoint {
    pub fn new(model: &ScoringModel, config: &TrainConfig, step: usize) -> Self {
        Self {
            architecture: model.architecture.clone(),
            d: model.d,
            params: model.params.clone(),
            config: config.clone(),
            seed: config.seed,
            step,
        }
    }

    pub fn model(&self) -> Result<ScoringModel> {
        ScoringModel::new(self.architecture.clone(), self.d, self.params.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text)?;
        ckpt.model()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
