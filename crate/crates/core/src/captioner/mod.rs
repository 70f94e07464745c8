//! From-scratch figure-to-caption model: a projected figure context seeds a GRU
//! decoder trained by teacher forcing, optionally conditioned on a control token.

mod decode;
mod features;
mod network;
mod train;
mod vocab;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcheck::{check_gradients, GradCheckReport};
use crate::scalar::{softmax_in_place, Scalar};
use crate::tensor::{ParamSet, Tensor};
use crate::udrl::{ControlToken, Placement};

pub use decode::{generate, generate_captions, Condition, DecodeConfig, DecodeStrategy};
pub use features::{encode_figure, encode_record, FigureFeatureConfig, TREND_FEATURE};
pub use network::Sequence;
pub use train::{corpus_loss, encode_split, train, EpochRecord, Objective, Phase, TrainingSchedule};
pub use vocab::{build_vocab, build_vocab_from, default_specials, Vocabulary, BOS, DEFAULT_VOCAB_CAP, EOS, PAD, UNK};

use network::{Dims, B_ENC, B_H, B_OUT, B_X, EMB, W_C, W_ENC, W_H, W_OUT, W_X};

pub const MIN_MAX_LEN: usize = 4;
pub const MIN_GRADCHECK_PROBES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionerHyper {
    pub embed_dim: usize,
    pub hidden: usize,
    /// Longest sequence including BOS and EOS; a control token is extra.
    pub max_len: usize,
    pub seed: u64,
    #[serde(default)]
    pub features: FigureFeatureConfig,
}

impl Default for CaptionerHyper {
    fn default() -> Self {
        CaptionerHyper {
            embed_dim: 64,
            hidden: 128,
            max_len: 32,
            seed: 0,
            features: FigureFeatureConfig::default(),
        }
    }
}

impl CaptionerHyper {
    pub fn validate(&self) -> Result<()> {
        if self.max_len < MIN_MAX_LEN {
            return Err(Error::config(format!("max_len must be at least {MIN_MAX_LEN}")));
        }
        if self.embed_dim == 0 || self.hidden == 0 {
            return Err(Error::config("embed_dim and hidden must be positive"));
        }
        self.features.validate()
    }
}

/// Control token and where it sits relative to the caption.
pub type Conditioning = (ControlToken, Placement);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CaptionerModel<T> {
    pub scalar: String,
    pub hyper: CaptionerHyper,
    pub vocab: Vocabulary,
    /// Token fed by `Condition::ForceGood`.
    pub desired_token: String,
    pub params: ParamSet<T>,
    pub history: Vec<EpochRecord>,
}

impl<T: Scalar> CaptionerModel<T> {
    pub fn new(vocab: Vocabulary, hyper: CaptionerHyper) -> Result<Self> {
        hyper.validate()?;
        let (v, e, h) = (vocab.len(), hyper.embed_dim, hyper.hidden);
        let f = hyper.features.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let mut uniform = |name: &str, shape: &[usize], bound: f64| {
            let mut t = Tensor::zeros(name, shape);
            for x in &mut t.data {
                *x = T::lit(rng.random_range(-bound..bound));
            }
            t
        };
        let kh = 1.0 / (h as f64).sqrt();
        let w_enc = uniform("w_enc", &[h, f], 1.0 / (f as f64).sqrt());
        let w_x = uniform("w_x", &[3 * h, e], kh);
        let b_x = uniform("b_x", &[3 * h], kh);
        let w_h = uniform("w_h", &[3 * h, h], kh);
        let b_h = uniform("b_h", &[3 * h], kh);
        let w_c = uniform("w_c", &[3 * h, h], kh);
        let w_out = uniform("w_out", &[v, h], kh);
        let mut emb = Tensor::zeros("embedding", &[v, e]);
        for x in &mut emb.data {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = T::lit(0.1 * z);
        }
        let tensors = vec![
            emb,
            w_enc,
            Tensor::zeros("b_enc", &[h]),
            w_x,
            b_x,
            w_h,
            b_h,
            w_c,
            w_out,
            Tensor::zeros("b_out", &[v]),
        ];
        Ok(CaptionerModel {
            scalar: T::NAME.to_string(),
            hyper,
            vocab,
            desired_token: ControlToken::Good.text().to_string(),
            params: ParamSet::new(tensors),
            history: Vec::new(),
        })
    }

    pub(crate) fn dims(&self) -> Dims {
        Dims {
            vocab: self.vocab.len(),
            embed: self.hyper.embed_dim,
            hidden: self.hyper.hidden,
            features: self.hyper.features.dim(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    fn expected_shapes(&self) -> Vec<Vec<usize>> {
        let d = self.dims();
        let (v, e, h, f) = (d.vocab, d.embed, d.hidden, d.features);
        let mut shapes = vec![Vec::new(); B_OUT + 1];
        shapes[EMB] = vec![v, e];
        shapes[W_ENC] = vec![h, f];
        shapes[B_ENC] = vec![h];
        shapes[W_X] = vec![3 * h, e];
        shapes[B_X] = vec![3 * h];
        shapes[W_H] = vec![3 * h, h];
        shapes[B_H] = vec![3 * h];
        shapes[W_C] = vec![3 * h, h];
        shapes[W_OUT] = vec![v, h];
        shapes[B_OUT] = vec![v];
        shapes
    }

    pub fn features_of(&self, feats: &[f64]) -> Result<Vec<T>> {
        let want = self.hyper.features.dim();
        if feats.len() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                got: feats.len(),
            });
        }
        Ok(feats.iter().map(|&x| T::lit(x)).collect())
    }

    /// Teacher-forcing sequence for `caption` (content ids, no BOS/EOS).
    /// Content beyond `max_len - 2` tokens is truncated.
    pub fn sequence(&self, caption: &[usize], conditioning: Option<(usize, Placement)>) -> Sequence {
        let (bos, eos) = (self.vocab.bos(), self.vocab.eos());
        let content = &caption[..caption.len().min(self.hyper.max_len - 2)];
        let mut inputs = vec![bos];
        let mut targets = Vec::with_capacity(content.len() + 2);
        match conditioning {
            Some((c, Placement::Prepend)) => {
                targets.push(None);
                inputs.push(c);
                targets.extend(content.iter().map(|&t| Some(t)));
                inputs.extend_from_slice(content);
                targets.push(Some(eos));
            }
            Some((c, Placement::Append)) => {
                targets.extend(content.iter().map(|&t| Some(t)));
                inputs.extend_from_slice(content);
                targets.push(Some(c));
                inputs.push(c);
                targets.push(Some(eos));
            }
            None => {
                targets.extend(content.iter().map(|&t| Some(t)));
                inputs.extend_from_slice(content);
                targets.push(Some(eos));
            }
        }
        Sequence { inputs, targets }
    }

    /// Sequence from a BOS…EOS id list; anything after EOS (padding) is ignored.
    pub fn sequence_from_target(&self, target: &[usize], conditioning: Option<Conditioning>) -> Result<Sequence> {
        let v = self.vocab.len();
        if let Some(&bad) = target.iter().find(|&&t| t >= v) {
            return Err(Error::Vocab(format!("token id {bad} outside vocabulary of size {v}")));
        }
        if target.first() != Some(&self.vocab.bos()) {
            return Err(Error::config("target sequence must start with BOS"));
        }
        let eos_at = target
            .iter()
            .position(|&t| t == self.vocab.eos())
            .ok_or_else(|| Error::config("target sequence must contain EOS"))?;
        if eos_at + 1 > self.hyper.max_len {
            return Err(Error::config(format!(
                "target length {} exceeds max_len {}",
                eos_at + 1,
                self.hyper.max_len
            )));
        }
        let cond = match conditioning {
            Some((tok, placement)) => Some((self.control_id(tok.text())?, placement)),
            None => None,
        };
        Ok(self.sequence(&target[1..eos_at], cond))
    }

    pub(crate) fn control_id(&self, token: &str) -> Result<usize> {
        self.vocab
            .id(token)
            .ok_or_else(|| Error::Vocab(format!("control token `{token}` is not in the vocabulary")))
    }

    pub(crate) fn loss_with(&self, params: &ParamSet<T>, feats: &[T], seq: &Sequence) -> T {
        network::run(self.dims(), params, feats, seq, None)
    }

    /// Mean next-token cross-entropy and its gradient for one caption.
    pub fn lm_loss(
        &self,
        features: &[f64],
        target: &[usize],
        conditioning: Option<Conditioning>,
    ) -> Result<(T, ParamSet<T>)> {
        let feats = self.features_of(features)?;
        let seq = self.sequence_from_target(target, conditioning)?;
        let n = T::lit(seq.num_targets() as f64);
        let mut grads = self.params.zeros_like();
        let sum = network::run(self.dims(), &self.params, &feats, &seq, Some((&mut grads, T::one() / n)));
        Ok((sum / n, grads))
    }

    /// Next-token distribution after feeding `prefix` (BOS first), unmasked.
    pub fn next_token_distribution(&self, features: &[f64], prefix: &[usize]) -> Result<Vec<T>> {
        let feats = self.features_of(features)?;
        let d = self.dims();
        let ctx = network::context(d, &self.params, &feats);
        let mut h = ctx.h0.clone();
        for &x in prefix {
            if x >= d.vocab {
                return Err(Error::Vocab(format!("token id {x} outside vocabulary")));
            }
            h = network::cell(d, &self.params, &ctx, x, &h).h;
        }
        let mut l = network::logits(d, &self.params, &h);
        softmax_in_place(&mut l);
        Ok(l)
    }

    /// Central-difference check of the mean loss gradient on one caption.
    pub fn gradient_check(
        &self,
        features: &[f64],
        target: &[usize],
        conditioning: Option<Conditioning>,
        eps: f64,
        probes: usize,
        seed: u64,
    ) -> Result<GradCheckReport> {
        if !(1e-6..=1e-3).contains(&eps) {
            return Err(Error::config(format!("gradient check eps {eps} outside [1e-6, 1e-3]")));
        }
        let feats = self.features_of(features)?;
        let seq = self.sequence_from_target(target, conditioning)?;
        let n = T::lit(seq.num_targets() as f64);
        let (_, grads) = self.lm_loss(features, target, conditioning)?;
        let mut params = self.params.clone();
        Ok(check_gradients(
            &mut params,
            &grads,
            |p| self.loss_with(p, &feats, &seq) / n,
            eps,
            probes.max(MIN_GRADCHECK_PROBES),
            seed,
        ))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.scalar != T::NAME {
            return Err(Error::config(format!(
                "checkpoint stored as {} cannot be loaded as {}",
                m.scalar,
                T::NAME
            )));
        }
        m.hyper.validate()?;
        let shapes = m.expected_shapes();
        if m.params.tensors.len() != shapes.len() {
            return Err(Error::DimensionMismatch {
                expected: shapes.len(),
                got: m.params.tensors.len(),
            });
        }
        for (t, s) in m.params.tensors.iter().zip(&shapes) {
            if &t.shape != s || t.data.len() != s.iter().product::<usize>() {
                return Err(Error::config(format!("tensor `{}` has shape {:?}, expected {s:?}", t.name, t.shape)));
            }
        }
        if m.vocab.id(&m.desired_token).is_none() {
            return Err(Error::Vocab(format!("desired token `{}` not in vocabulary", m.desired_token)));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests;
