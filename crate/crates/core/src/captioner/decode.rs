use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::encode_record;
use super::network;
use super::CaptionerModel;
use crate::corpus::FigureCaptionRecord;
use crate::error::{Error, Result};
use crate::scalar::{softmax_in_place, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeStrategy {
    Greedy,
    Nucleus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    None,
    ForceGood,
    ForceToken(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    pub strategy: DecodeStrategy,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    pub condition: Condition,
    /// Overrides the model's `max_len` when set.
    #[serde(default)]
    pub max_len: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_top_p() -> f64 {
    0.9
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            strategy: DecodeStrategy::Greedy,
            top_p: default_top_p(),
            condition: Condition::ForceGood,
            max_len: None,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.strategy == DecodeStrategy::Nucleus && !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::config(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if matches!(self.max_len, Some(m) if m < 2) {
            return Err(Error::config("decode max_len must be at least 2"));
        }
        Ok(())
    }
}

fn pick_greedy<T: Scalar>(probs: &[T]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

fn pick_nucleus<T: Scalar>(probs: &[T], top_p: f64, rng: &mut ChaCha8Rng) -> usize {
    let mut order: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > T::zero()).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut kept = 0;
    let mut mass = 0.0;
    for &i in &order {
        mass += probs[i].as_f64();
        kept += 1;
        if mass >= top_p {
            break;
        }
    }
    let mut u = rng.random_range(0.0..mass);
    for &i in &order[..kept] {
        u -= probs[i].as_f64();
        if u < 0.0 {
            return i;
        }
    }
    order[kept - 1]
}

/// Decodes a caption for one feature vector. Control and structural tokens are
/// masked out of every next-token distribution.
pub fn generate<T: Scalar>(model: &CaptionerModel<T>, features: &[f64], cfg: &DecodeConfig) -> Result<Vec<String>> {
    cfg.validate()?;
    let feats = model.features_of(features)?;
    let d = model.dims();
    let vocab = &model.vocab;
    let prefix_token = match &cfg.condition {
        Condition::None => None,
        Condition::ForceGood => Some(model.control_id(&model.desired_token)?),
        Condition::ForceToken(t) => Some(
            vocab
                .id(t)
                .ok_or_else(|| Error::Vocab(format!("forced token `{t}` is not in the vocabulary")))?,
        ),
    };
    let blocked = vocab.non_content_ids();
    let max_content = cfg.max_len.unwrap_or(model.hyper.max_len).saturating_sub(2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let ctx = network::context(d, &model.params, &feats);
    let mut h = network::cell(d, &model.params, &ctx, vocab.bos(), &ctx.h0).h;
    if let Some(c) = prefix_token {
        h = network::cell(d, &model.params, &ctx, c, &h).h;
    }
    let mut out = Vec::new();
    while out.len() < max_content {
        let mut logits = network::logits(d, &model.params, &h);
        for &b in &blocked {
            logits[b] = T::neg_infinity();
        }
        softmax_in_place(&mut logits);
        debug_assert!((logits.iter().map(|p| p.as_f64()).sum::<f64>() - 1.0).abs() < 1e-6);
        let next = match cfg.strategy {
            DecodeStrategy::Greedy => pick_greedy(&logits),
            DecodeStrategy::Nucleus => pick_nucleus(&logits, cfg.top_p, &mut rng),
        };
        if next == vocab.eos() {
            break;
        }
        out.push(next);
        h = network::cell(d, &model.params, &ctx, next, &h).h;
    }
    Ok(vocab.decode(&out))
}

/// `(figure_id, caption)` for each record; nucleus seeds are offset per record.
pub fn generate_captions<T: Scalar>(
    model: &CaptionerModel<T>,
    records: &[FigureCaptionRecord],
    cfg: &DecodeConfig,
) -> Result<Vec<(String, Vec<String>)>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let per = DecodeConfig {
                seed: cfg.seed.wrapping_add(i as u64),
                ..cfg.clone()
            };
            let tokens = generate(model, &encode_record(r, &model.hyper.features), &per)?;
            Ok((r.figure_id.clone(), tokens))
        })
        .collect()
}
