//! Reward quantization into control tokens and feedback-augmented captions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::text::{detokenize, is_control_like, tokenize};
use crate::corpus::{Dataset, FigureCaptionRecord, Split};
use crate::error::{Error, Result};
use crate::feedback::{FeedbackMetric, SCORE_MAX, SCORE_MIN};
use crate::stats::{quantile_sorted, sorted_copy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantScheme {
    Binary,
    FiveLevel,
}

impl FromStr for QuantScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(QuantScheme::Binary),
            "five_level" => Ok(QuantScheme::FiveLevel),
            _ => Err(Error::config(format!("unknown quantization scheme `{s}`"))),
        }
    }
}

impl fmt::Display for QuantScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuantScheme::Binary => "binary",
            QuantScheme::FiveLevel => "five_level",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdStrategy {
    MedianOfTrain,
    FixedValue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Prepend,
    Append,
}

impl FromStr for Placement {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prepend" => Ok(Placement::Prepend),
            "append" => Ok(Placement::Append),
            _ => Err(Error::config(format!("unknown placement `{s}`"))),
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::Prepend => "prepend",
            Placement::Append => "append",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerConfig {
    pub scheme: QuantScheme,
    pub threshold_strategy: ThresholdStrategy,
    #[serde(default)]
    pub fixed_t: Option<f64>,
    pub placement: Placement,
    pub metric: FeedbackMetric,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        QuantizerConfig {
            scheme: QuantScheme::Binary,
            threshold_strategy: ThresholdStrategy::MedianOfTrain,
            fixed_t: None,
            placement: Placement::Prepend,
            metric: FeedbackMetric::Helpfulness,
        }
    }
}

impl QuantizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scheme == QuantScheme::Binary && self.threshold_strategy == ThresholdStrategy::FixedValue {
            match self.fixed_t {
                Some(t) if (SCORE_MIN..=SCORE_MAX).contains(&t) => {}
                Some(t) => return Err(Error::config(format!("fixed_t {t} outside [1, 5]"))),
                None => return Err(Error::config("fixed_value strategy requires fixed_t")),
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ControlToken {
    Bad,
    Good,
    VeryBad5,
    Bad5,
    Neutral5,
    Good5,
    VeryGood5,
}

impl ControlToken {
    pub const BINARY: [ControlToken; 2] = [ControlToken::Bad, ControlToken::Good];
    pub const FIVE_LEVEL: [ControlToken; 5] = [
        ControlToken::VeryBad5,
        ControlToken::Bad5,
        ControlToken::Neutral5,
        ControlToken::Good5,
        ControlToken::VeryGood5,
    ];
    pub const ALL: [ControlToken; 7] = [
        ControlToken::Good,
        ControlToken::Bad,
        ControlToken::VeryBad5,
        ControlToken::Bad5,
        ControlToken::Neutral5,
        ControlToken::Good5,
        ControlToken::VeryGood5,
    ];

    pub fn text(self) -> &'static str {
        match self {
            ControlToken::Good => "<|good|>",
            ControlToken::Bad => "<|bad|>",
            ControlToken::VeryBad5 => "<|vbad5|>",
            ControlToken::Bad5 => "<|bad5|>",
            ControlToken::Neutral5 => "<|neutral5|>",
            ControlToken::Good5 => "<|good5|>",
            ControlToken::VeryGood5 => "<|vgood5|>",
        }
    }

    pub fn from_text(s: &str) -> Option<ControlToken> {
        ControlToken::ALL.into_iter().find(|t| t.text() == s)
    }

    pub fn scheme(self) -> QuantScheme {
        match self {
            ControlToken::Good | ControlToken::Bad => QuantScheme::Binary,
            _ => QuantScheme::FiveLevel,
        }
    }

    /// Position on the scheme's ordered scale, worst = 0.
    pub fn rank(self) -> usize {
        match self {
            ControlToken::Bad | ControlToken::VeryBad5 => 0,
            ControlToken::Good | ControlToken::Bad5 => 1,
            ControlToken::Neutral5 => 2,
            ControlToken::Good5 => 3,
            ControlToken::VeryGood5 => 4,
        }
    }

    /// The best token of a scheme, used for desired-reward decoding.
    pub fn best(scheme: QuantScheme) -> ControlToken {
        match scheme {
            QuantScheme::Binary => ControlToken::Good,
            QuantScheme::FiveLevel => ControlToken::VeryGood5,
        }
    }

    pub fn worst(scheme: QuantScheme) -> ControlToken {
        match scheme {
            QuantScheme::Binary => ControlToken::Bad,
            QuantScheme::FiveLevel => ControlToken::VeryBad5,
        }
    }
}

impl fmt::Display for ControlToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.text())
    }
}

/// Binary pivot: the train-split median or a fixed value.
pub fn compute_threshold(scores: &[f64], cfg: &QuantizerConfig) -> Result<f64> {
    match cfg.threshold_strategy {
        ThresholdStrategy::FixedValue => {
            cfg.validate()?;
            cfg.fixed_t
                .ok_or_else(|| Error::config("fixed_value strategy requires fixed_t"))
        }
        ThresholdStrategy::MedianOfTrain => {
            if scores.is_empty() {
                return Err(Error::Empty("median threshold over an empty score list".into()));
            }
            Ok(quantile_sorted(&sorted_copy(scores), 0.5))
        }
    }
}

/// 20th/40th/60th/80th percentiles of `scores`.
pub fn percentile_edges(scores: &[f64]) -> Result<[f64; 4]> {
    if scores.is_empty() {
        return Err(Error::Empty("percentile edges over an empty score list".into()));
    }
    let s = sorted_copy(scores);
    Ok([0.2, 0.4, 0.6, 0.8].map(|p| quantile_sorted(&s, p)))
}

/// Ties at `t` are good.
pub fn quantize_binary(score: f64, t: f64) -> ControlToken {
    if score >= t {
        ControlToken::Good
    } else {
        ControlToken::Bad
    }
}

/// Half-open buckets `[-inf,e1) [e1,e2) [e2,e3) [e3,e4) [e4,inf)`.
pub fn quantize_five_level(score: f64, edges: &[f64; 4]) -> Result<ControlToken> {
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config(format!(
            "five-level edges must be strictly increasing, got {edges:?}"
        )));
    }
    let bucket = edges.iter().filter(|&&e| score >= e).count();
    Ok(ControlToken::FIVE_LEVEL[bucket])
}

/// Thresholds fitted on the train split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantizer {
    Binary { threshold: f64 },
    FiveLevel { edges: [f64; 4] },
}

impl Quantizer {
    pub fn fit(train_scores: &[f64], cfg: &QuantizerConfig) -> Result<Self> {
        cfg.validate()?;
        match cfg.scheme {
            QuantScheme::Binary => Ok(Quantizer::Binary {
                threshold: compute_threshold(train_scores, cfg)?,
            }),
            QuantScheme::FiveLevel => {
                let edges = percentile_edges(train_scores)?;
                quantize_five_level(SCORE_MIN, &edges)?;
                Ok(Quantizer::FiveLevel { edges })
            }
        }
    }

    pub fn quantize(&self, score: f64) -> ControlToken {
        match self {
            Quantizer::Binary { threshold } => quantize_binary(score, *threshold),
            Quantizer::FiveLevel { edges } => {
                quantize_five_level(score, edges).expect("edges validated at fit time")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedCaption {
    pub tokens: Vec<String>,
    pub control: ControlToken,
    pub placement: Placement,
}

impl AugmentedCaption {
    /// The caption with the control token removed.
    pub fn strip(&self) -> Vec<String> {
        match self.placement {
            Placement::Prepend => self.tokens[1..].to_vec(),
            Placement::Append => self.tokens[..self.tokens.len() - 1].to_vec(),
        }
    }

    pub fn text(&self) -> String {
        detokenize(&self.tokens)
    }

    /// Recovers an augmented caption from its text form.
    pub fn parse(text: &str) -> Result<Self> {
        let tokens = tokenize(text);
        let first = tokens.first().and_then(|t| ControlToken::from_text(t));
        let last = tokens.last().and_then(|t| ControlToken::from_text(t));
        let (control, placement) = match (first, last) {
            (Some(c), None) => (c, Placement::Prepend),
            (None, Some(c)) => (c, Placement::Append),
            _ => {
                return Err(Error::Augment(format!(
                    "`{text}` does not carry exactly one control token at its start or end"
                )))
            }
        };
        if tokens.len() < 2 {
            return Err(Error::Augment(format!("`{text}` has no caption tokens")));
        }
        Ok(AugmentedCaption {
            tokens,
            control,
            placement,
        })
    }
}

pub fn augment_tokens(
    caption: &[String],
    token: ControlToken,
    placement: Placement,
) -> Result<AugmentedCaption> {
    if caption.is_empty() {
        return Err(Error::Augment("cannot augment an empty caption".into()));
    }
    if caption.iter().any(|t| is_control_like(t)) {
        return Err(Error::Augment(format!(
            "caption `{}` is already augmented",
            detokenize(caption)
        )));
    }
    let mut tokens = Vec::with_capacity(caption.len() + 1);
    match placement {
        Placement::Prepend => {
            tokens.push(token.text().to_string());
            tokens.extend_from_slice(caption);
        }
        Placement::Append => {
            tokens.extend_from_slice(caption);
            tokens.push(token.text().to_string());
        }
    }
    Ok(AugmentedCaption {
        tokens,
        control: token,
        placement,
    })
}

pub fn augment_caption(
    rec: &FigureCaptionRecord,
    token: ControlToken,
    placement: Placement,
) -> Result<AugmentedCaption> {
    augment_tokens(&rec.caption_tokens, token, placement)
        .map_err(|e| Error::Augment(format!("record `{}`: {e}", rec.figure_id)))
}

/// Control token and augmented caption recorded for `metric`, if any.
pub fn recorded_augmentation(
    rec: &FigureCaptionRecord,
    metric: FeedbackMetric,
) -> Result<Option<AugmentedCaption>> {
    match rec.human_feedback.get(&metric).and_then(|e| e.caption_prepend.as_deref()) {
        Some(text) => AugmentedCaption::parse(text).map(Some),
        None => Ok(None),
    }
}

/// Fits thresholds on the train split and writes token and augmented caption into
/// every record's `human-feedback` entry for `cfg.metric`.
pub fn augment_dataset(ds: &Dataset, cfg: &QuantizerConfig) -> Result<(Dataset, Quantizer)> {
    let metric = cfg.metric;
    let train_scores = ds
        .train
        .iter()
        .map(|r| {
            r.score(metric).ok_or_else(|| {
                Error::Augment(format!("record `{}` has no {metric} score", r.figure_id))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let quantizer = Quantizer::fit(&train_scores, cfg)?;

    let mut out = ds.clone();
    let apply = |records: &mut Vec<FigureCaptionRecord>| -> Result<()> {
        for r in records.iter_mut() {
            let score = r.score(metric).ok_or_else(|| {
                Error::Augment(format!("record `{}` has no {metric} score", r.figure_id))
            })?;
            let token = quantizer.quantize(score);
            let aug = augment_caption(r, token, cfg.placement)?;
            let entry = r.human_feedback.get_mut(&metric).expect("score checked above");
            entry.token = Some(token.text().to_string());
            entry.caption_prepend = Some(aug.text());
        }
        Ok(())
    };
    for split in Split::ALL {
        apply(out.split_mut(split))?;
    }
    apply(&mut out.control_set)?;
    Ok((out, quantizer))
}

/// Scheme of the tokens recorded for `metric` across the train split.
pub fn dataset_scheme(ds: &Dataset, metric: FeedbackMetric) -> Result<Option<(QuantScheme, Placement)>> {
    let mut found: Option<(QuantScheme, Placement)> = None;
    for r in &ds.train {
        let Some(aug) = recorded_augmentation(r, metric)? else {
            return Ok(None);
        };
        let key = (aug.control.scheme(), aug.placement);
        match found {
            None => found = Some(key),
            Some(k) if k != key => {
                return Err(Error::SchemeMismatch(format!(
                    "train split mixes {}/{} and {}/{} augmentations for {metric}",
                    k.0, k.1, key.0, key.1
                )))
            }
            _ => {}
        }
    }
    Ok(found)
}
