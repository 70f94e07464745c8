//! Per-metric feedback predictors: a frozen featurizer followed by a trainable
//! two-layer regressor fit with squared error on the annotated control set.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, FigureCaptionRecord};
use crate::embedding::{build_featurizer, EmbeddingVector, Featurizer, FeaturizerConfig};
use crate::error::{Error, Result};
use crate::feedback::{FeedbackMetric, SCORE_MAX, SCORE_MIN};
use crate::gradcheck::{check_gradients, GradCheckReport};
use crate::optim::{AdamConfig, AdamW};
use crate::scalar::Scalar;
use crate::tensor::{matvec_acc, ParamSet, Tensor};

pub use crate::feedback::FeedbackScores;
pub use crate::stats::{feedback_stats, ScoreStats};

pub const MIN_CONTROL: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn grad_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardHyper {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub val_fraction: f64,
    pub seed: u64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_patience() -> usize {
    20
}
fn default_batch() -> usize {
    32
}
fn default_activation() -> Activation {
    Activation::Relu
}

impl Default for RewardHyper {
    fn default() -> Self {
        RewardHyper {
            hidden: 64,
            lr: 1e-3,
            epochs: 200,
            val_fraction: 0.2,
            seed: 0,
            patience: default_patience(),
            batch_size: default_batch(),
            activation: default_activation(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLogEntry {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

const W1: usize = 0;
const B1: usize = 1;
const W2: usize = 2;
const B2: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RewardModel<T> {
    pub scalar: String,
    pub metric: FeedbackMetric,
    pub featurizer: FeaturizerConfig,
    pub input_dim: usize,
    pub hidden: usize,
    pub activation: Activation,
    /// `w1` (H×D row-major), `b1` (H), `w2` (H), `b2` (1).
    pub params: ParamSet<T>,
    pub training_log: Vec<TrainingLogEntry>,
}

impl<T: Scalar> RewardModel<T> {
    pub fn new(
        metric: FeedbackMetric,
        featurizer: FeaturizerConfig,
        hidden: usize,
        activation: Activation,
        seed: u64,
    ) -> Self {
        let d = featurizer.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w1 = Tensor::zeros("w1", &[hidden, d]);
        let s1 = (2.0 / d as f64).sqrt();
        for v in &mut w1.data {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = T::lit(z * s1);
        }
        // Zero output layer: an untrained model predicts exactly its bias.
        let w2 = Tensor::zeros("w2", &[hidden]);
        RewardModel {
            scalar: T::NAME.to_string(),
            metric,
            featurizer,
            input_dim: d,
            hidden,
            activation,
            params: ParamSet::new(vec![
                w1,
                Tensor::zeros("b1", &[hidden]),
                w2,
                Tensor::zeros("b2", &[1]),
            ]),
            training_log: Vec::new(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    fn hidden_layer(&self, params: &ParamSet<T>, x: &[T]) -> Vec<T> {
        let mut h = params.tensors[B1].data.clone();
        matvec_acc(&params.tensors[W1].data, self.hidden, self.input_dim, x, &mut h);
        for v in &mut h {
            *v = self.activation.apply(*v);
        }
        h
    }

    fn raw_with(&self, params: &ParamSet<T>, x: &[T]) -> (T, Vec<T>) {
        let h = self.hidden_layer(params, x);
        let mut y = params.tensors[B2].data[0];
        for (a, b) in params.tensors[W2].data.iter().zip(&h) {
            y += *a * *b;
        }
        (y, h)
    }

    /// Unclipped regressor output; training fits this value.
    pub fn raw_output(&self, e: &EmbeddingVector<T>) -> Result<T> {
        self.check_dim(e)?;
        Ok(self.raw_with(&self.params, &e.values).0)
    }

    fn check_dim(&self, e: &EmbeddingVector<T>) -> Result<()> {
        if e.dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: e.dim(),
            });
        }
        Ok(())
    }

    /// Predicted score clipped to the rating scale.
    pub fn predict_score(&self, e: &EmbeddingVector<T>) -> Result<T> {
        let y = self.raw_output(e)?;
        Ok(y.max(T::lit(SCORE_MIN)).min(T::lit(SCORE_MAX)))
    }

    pub fn predict_batch(&self, es: &[EmbeddingVector<T>]) -> Result<Vec<T>> {
        es.iter().map(|e| self.predict_score(e)).collect()
    }

    /// Sum of squared errors over `batch` and its gradient.
    pub fn sse_loss_and_grad(&self, batch: &[(EmbeddingVector<T>, T)]) -> Result<(T, ParamSet<T>)> {
        let mut grads = self.params.zeros_like();
        let mut loss = T::zero();
        for (e, y) in batch {
            self.check_dim(e)?;
            loss += self.accumulate_sample(&e.values, *y, &mut grads);
        }
        Ok((loss, grads))
    }

    fn accumulate_sample(&self, x: &[T], target: T, grads: &mut ParamSet<T>) -> T {
        let (out, h) = self.raw_with(&self.params, x);
        let err = out - target;
        let dout = err + err;
        grads.tensors[B2].data[0] += dout;
        let d = self.input_dim;
        for j in 0..self.hidden {
            grads.tensors[W2].data[j] += dout * h[j];
            let dh = dout * self.params.tensors[W2].data[j] * self.activation.grad_from_output(h[j]);
            if dh == T::zero() {
                continue;
            }
            grads.tensors[B1].data[j] += dh;
            let row = &mut grads.tensors[W1].data[j * d..(j + 1) * d];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += dh * *xi;
            }
        }
        err * err
    }

    fn sse_with(&self, params: &ParamSet<T>, batch: &[(EmbeddingVector<T>, T)]) -> T {
        batch
            .iter()
            .map(|(e, y)| {
                let d = self.raw_with(params, &e.values).0 - *y;
                d * d
            })
            .sum()
    }

    /// Finite-difference check of the squared-error gradient on `batch`.
    pub fn gradient_check(
        &self,
        batch: &[(EmbeddingVector<T>, T)],
        eps: f64,
        probes: usize,
        seed: u64,
    ) -> Result<GradCheckReport> {
        let (_, grads) = self.sse_loss_and_grad(batch)?;
        let mut params = self.params.clone();
        Ok(check_gradients(
            &mut params,
            &grads,
            |p| self.sse_with(p, batch),
            eps,
            probes,
            seed,
        ))
    }

    pub fn mse(&self, data: &[(EmbeddingVector<T>, T)]) -> Result<f64> {
        if data.is_empty() {
            return Ok(f64::NAN);
        }
        let mut s = 0.0;
        for (e, y) in data {
            let d = self.predict_score(e)?.as_f64() - y.as_f64();
            s += d * d;
        }
        Ok(s / data.len() as f64)
    }

    pub fn training_log_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,val_mse\n");
        for e in &self.training_log {
            let _ = writeln!(out, "{},{:.6},{:.6}", e.epoch, e.train_mse, e.val_mse);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.scalar != T::NAME {
            return Err(Error::config(format!(
                "model stored as {} cannot be loaded as {}",
                m.scalar,
                T::NAME
            )));
        }
        let expected = (m.input_dim + 1) * m.hidden + m.hidden + 1;
        if m.params.num_params() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: m.params.num_params(),
            });
        }
        Ok(m)
    }
}

/// Fits one regressor on `(embedding, score)` pairs; returns the best-validation parameters.
pub fn train_reward_model<T: Scalar>(
    control: &[(EmbeddingVector<T>, T)],
    metric: FeedbackMetric,
    featurizer: &FeaturizerConfig,
    hyper: &RewardHyper,
) -> Result<RewardModel<T>> {
    if control.is_empty() {
        return Err(Error::Empty("reward training needs a non-empty control set".into()));
    }
    if control.len() < MIN_CONTROL {
        return Err(Error::config(format!(
            "control set has {} items, at least {MIN_CONTROL} are required",
            control.len()
        )));
    }
    if let Some((_, y)) = control
        .iter()
        .find(|(_, y)| !(SCORE_MIN..=SCORE_MAX).contains(&y.as_f64()))
    {
        return Err(Error::config(format!("control score {y} outside [1, 5]")));
    }
    if !(0.0..1.0).contains(&hyper.val_fraction) || hyper.hidden == 0 || hyper.batch_size == 0 {
        return Err(Error::config("invalid reward hyperparameters"));
    }
    for (e, _) in control {
        if e.dim() != featurizer.dim {
            return Err(Error::DimensionMismatch {
                expected: featurizer.dim,
                got: e.dim(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..control.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((control.len() as f64) * hyper.val_fraction).round() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let train: Vec<(EmbeddingVector<T>, T)> = train_idx.iter().map(|&i| control[i].clone()).collect();
    let val: Vec<(EmbeddingVector<T>, T)> = val_idx.iter().map(|&i| control[i].clone()).collect();

    let mut model = RewardModel::new(
        metric,
        featurizer.clone(),
        hyper.hidden,
        hyper.activation,
        hyper.seed.wrapping_add(1),
    );
    let mean_target = train.iter().map(|(_, y)| y.as_f64()).sum::<f64>() / train.len() as f64;
    model.params.tensors[B2].data[0] = T::lit(mean_target);

    let mut opt = AdamW::new(
        &model.params,
        AdamConfig {
            lr: hyper.lr,
            ..AdamConfig::default()
        },
    );
    let monitor = if val.is_empty() { &train } else { &val };
    let mut best = (model.mse(monitor)?, model.params.clone());
    let mut since_best = 0;
    let mut batch_order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=hyper.epochs {
        batch_order.shuffle(&mut rng);
        for chunk in batch_order.chunks(hyper.batch_size) {
            let batch: Vec<(EmbeddingVector<T>, T)> = chunk.iter().map(|&i| train[i].clone()).collect();
            let (loss, mut grads) = model.sse_loss_and_grad(&batch)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::NonFinite {
                    stage: format!("reward training ({metric})"),
                    detail: format!("epoch {epoch}, batch loss {loss}"),
                });
            }
            grads.scale(T::one() / T::lit(chunk.len() as f64));
            opt.step(&mut model.params, &grads);
        }
        let train_mse = model.mse(&train)?;
        let val_mse = model.mse(monitor)?;
        model.training_log.push(TrainingLogEntry {
            epoch,
            train_mse,
            val_mse,
        });
        if val_mse < best.0 {
            best = (val_mse, model.params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= hyper.patience {
                break;
            }
        }
    }
    model.params = best.1;
    log::info!(
        "reward model {metric}: best val mse {:.4} after {} epochs",
        best.0,
        model.training_log.len()
    );
    Ok(model)
}

/// Embeds the control set and trains one model per requested metric.
pub fn train_reward_models<T: Scalar>(
    control: &[FigureCaptionRecord],
    featurizer: &Featurizer,
    metrics: &[FeedbackMetric],
    hyper: &RewardHyper,
) -> Result<Vec<RewardModel<T>>> {
    let embeddings: Vec<EmbeddingVector<T>> =
        control.iter().map(|r| featurizer.embed(&r.caption_tokens)).collect();
    metrics
        .iter()
        .map(|&metric| {
            let pairs = control
                .iter()
                .zip(&embeddings)
                .map(|(r, e)| {
                    let y = r
                        .actual_feedback
                        .as_ref()
                        .ok_or_else(|| {
                            Error::config(format!("control record `{}` has no annotation", r.figure_id))
                        })?
                        .get(metric);
                    Ok((e.clone(), T::lit(y)))
                })
                .collect::<Result<Vec<_>>>()?;
            train_reward_model(&pairs, metric, featurizer.config(), hyper)
        })
        .collect()
}

/// Featurizer shared by every model, or an error if they disagree.
pub fn shared_featurizer<T: Scalar>(models: &[RewardModel<T>]) -> Result<Featurizer> {
    let first = models
        .first()
        .ok_or_else(|| Error::Empty("no reward models supplied".into()))?;
    if let Some(m) = models.iter().find(|m| m.featurizer != first.featurizer) {
        return Err(Error::config(format!(
            "featurizer mismatch: {} model uses {} but {} model uses {}",
            first.metric,
            first.featurizer.fingerprint(),
            m.metric,
            m.featurizer.fingerprint()
        )));
    }
    build_featurizer(&first.featurizer)
}

/// Attaches predicted scores to every record; ground-truth annotations are left untouched.
pub fn score_dataset<T: Scalar>(models: &[RewardModel<T>], ds: &Dataset) -> Result<Dataset> {
    let featurizer = shared_featurizer(models)?;
    let mut out = ds.clone();
    let score_all = |records: &mut Vec<FigureCaptionRecord>| -> Result<()> {
        for r in records.iter_mut() {
            let e: EmbeddingVector<T> = featurizer.embed(&r.caption_tokens);
            for m in models {
                let s = m.predict_score(&e)?.as_f64();
                r.set_score(m.metric, s);
            }
        }
        Ok(())
    };
    score_all(&mut out.train)?;
    score_all(&mut out.val)?;
    score_all(&mut out.test)?;
    score_all(&mut out.control_set)?;
    Ok(out)
}
