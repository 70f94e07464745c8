use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::encode_record;
use super::network::{self, Sequence};
use super::CaptionerModel;
use crate::corpus::{Dataset, FigureCaptionRecord, Split};
use crate::error::{Error, Result};
use crate::optim::{AdamConfig, AdamW};
use crate::scalar::Scalar;
use crate::udrl::{dataset_scheme, recorded_augmentation, ControlToken, QuantizerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Lm,
    Hf,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lm" => Ok(Objective::Lm),
            "hf" => Ok(Objective::Hf),
            _ => Err(Error::config(format!("unknown objective `{s}`"))),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Lm => "lm",
            Objective::Hf => "hf",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub objective: Objective,
    #[serde(default)]
    pub quantizer: Option<QuantizerConfig>,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSchedule {
    pub phases: Vec<Phase>,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default = "default_betas")]
    pub betas: [f64; 2],
    /// Global gradient-norm clip; `None` disables clipping.
    #[serde(default = "default_clip")]
    pub clip_norm: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_betas() -> [f64; 2] {
    [0.9, 0.99]
}

fn default_clip() -> Option<f64> {
    Some(5.0)
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        TrainingSchedule {
            phases: vec![Phase {
                objective: Objective::Lm,
                quantizer: None,
                epochs: 10,
            }],
            batch_size: 32,
            lr: 3e-3,
            betas: default_betas(),
            clip_norm: default_clip(),
            seed: 0,
        }
    }
}

impl TrainingSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::config("training schedule needs at least one phase"));
        }
        for (i, p) in self.phases.iter().enumerate() {
            match (p.objective, &p.quantizer) {
                (Objective::Hf, None) => {
                    return Err(Error::config(format!("hf phase {i} requires a quantizer")))
                }
                (_, Some(q)) => q.validate()?,
                _ => {}
            }
        }
        if self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::config("batch_size and lr must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: usize,
    pub objective: Objective,
    /// Epoch within the phase; 0 is the evaluation before any update.
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub val_loss: f64,
}

type Example<T> = (Vec<T>, Sequence);

/// Encodes `records` for `objective`; hf sequences carry the recorded control token.
pub fn encode_split<T: Scalar>(
    model: &CaptionerModel<T>,
    records: &[FigureCaptionRecord],
    objective: Objective,
    quantizer: Option<&QuantizerConfig>,
) -> Result<Vec<Example<T>>> {
    records
        .iter()
        .map(|r| {
            let feats = model.features_of(&encode_record(r, &model.hyper.features))?;
            let seq = match (objective, quantizer) {
                (Objective::Lm, _) => model.sequence(&model.vocab.encode(&r.caption_tokens), None),
                (Objective::Hf, Some(q)) => {
                    let aug = recorded_augmentation(r, q.metric)?.ok_or_else(|| {
                        Error::SchemeMismatch(format!(
                            "record `{}` has no {} control token",
                            r.figure_id, q.metric
                        ))
                    })?;
                    let control = model.control_id(aug.control.text())?;
                    model.sequence(&model.vocab.encode(&aug.strip()), Some((control, aug.placement)))
                }
                (Objective::Hf, None) => return Err(Error::config("hf encoding requires a quantizer")),
            };
            Ok((feats, seq))
        })
        .collect()
}

/// Token-weighted mean loss over examples.
pub fn corpus_loss<T: Scalar>(model: &CaptionerModel<T>, examples: &[Example<T>]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (f, s) in examples {
        sum += model.loss_with(&model.params, f, s).as_f64();
        n += s.num_targets();
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// The dataset whose recorded augmentation matches the phase quantizer.
fn dataset_for_phase<'a>(data: &'a [Dataset], phase: &Phase) -> Result<&'a Dataset> {
    let q = match (phase.objective, &phase.quantizer) {
        (Objective::Hf, Some(q)) => q,
        _ => {
            return data
                .first()
                .ok_or_else(|| Error::Empty("no training data supplied".into()))
        }
    };
    let mut seen = Vec::new();
    for ds in data {
        match dataset_scheme(ds, q.metric)? {
            Some((scheme, placement)) if scheme == q.scheme && placement == q.placement => return Ok(ds),
            Some(found) => seen.push(format!("{}/{}", found.0, found.1)),
            None => seen.push("unaugmented".into()),
        }
    }
    Err(Error::SchemeMismatch(format!(
        "hf phase expects {}/{} tokens for {}, training data provides [{}]",
        q.scheme,
        q.placement,
        q.metric,
        seen.join(", ")
    )))
}

fn clip_global_norm<T: Scalar>(grads: &mut crate::tensor::ParamSet<T>, max_norm: f64) {
    let sq: f64 = grads
        .tensors
        .iter()
        .flat_map(|t| t.data.iter())
        .map(|v| {
            let x = v.as_f64();
            x * x
        })
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        grads.scale(T::lit(max_norm / norm));
    }
}

/// Runs every phase in order. `data` holds the plain dataset and any augmented
/// copies; each hf phase trains on the copy whose tokens match its quantizer.
pub fn train<T: Scalar>(
    model: &mut CaptionerModel<T>,
    data: &[Dataset],
    schedule: &TrainingSchedule,
) -> Result<Vec<EpochRecord>> {
    schedule.validate()?;
    let phase_data = schedule
        .phases
        .iter()
        .map(|p| dataset_for_phase(data, p))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut opt = AdamW::new(
        &model.params,
        AdamConfig {
            lr: schedule.lr,
            beta1: schedule.betas[0],
            beta2: schedule.betas[1],
            ..AdamConfig::default()
        },
    );
    let mut history = Vec::new();

    for (pi, (phase, ds)) in schedule.phases.iter().zip(phase_data).enumerate() {
        let q = phase.quantizer.as_ref();
        let train_set = encode_split(model, ds.split(Split::Train), phase.objective, q)?;
        if train_set.is_empty() {
            return Err(Error::Empty("training split is empty".into()));
        }
        let val_set = encode_split(model, ds.split(Split::Val), phase.objective, q)?;
        let monitor = if val_set.is_empty() { &train_set } else { &val_set };
        if phase.objective == Objective::Hf {
            if let Some(q) = q {
                model.desired_token = ControlToken::best(q.scheme).text().to_string();
            }
        }

        history.push(EpochRecord {
            phase: pi,
            objective: phase.objective,
            epoch: 0,
            train_loss: None,
            val_loss: corpus_loss(model, monitor),
        });
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let dims = model.dims();
        for epoch in 1..=phase.epochs {
            order.shuffle(&mut rng);
            let (mut epoch_loss, mut epoch_tokens) = (0.0, 0usize);
            for chunk in order.chunks(schedule.batch_size) {
                let n_tok: usize = chunk.iter().map(|&i| train_set[i].1.num_targets()).sum();
                if n_tok == 0 {
                    continue;
                }
                let w = T::one() / T::lit(n_tok as f64);
                let mut grads = model.params.zeros_like();
                let mut batch_loss = T::zero();
                for &i in chunk {
                    let (f, s) = &train_set[i];
                    batch_loss += network::run(dims, &model.params, f, s, Some((&mut grads, w)));
                }
                if !batch_loss.is_finite() || !grads.all_finite() {
                    return Err(Error::NonFinite {
                        stage: format!("captioner training phase {pi}"),
                        detail: format!("epoch {epoch}, batch loss {batch_loss}"),
                    });
                }
                if let Some(c) = schedule.clip_norm {
                    clip_global_norm(&mut grads, c);
                }
                opt.step(&mut model.params, &grads);
                epoch_loss += batch_loss.as_f64();
                epoch_tokens += n_tok;
            }
            let val_loss = corpus_loss(model, monitor);
            log::info!(
                "captioner phase {pi} ({}) epoch {epoch}: train {:.4} val {:.4}",
                phase.objective,
                epoch_loss / epoch_tokens.max(1) as f64,
                val_loss
            );
            history.push(EpochRecord {
                phase: pi,
                objective: phase.objective,
                epoch,
                train_loss: Some(epoch_loss / epoch_tokens.max(1) as f64),
                val_loss,
            });
        }
    }
    model.history.extend(history.iter().cloned());
    Ok(history)
}
