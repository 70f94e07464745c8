//! The four reader-feedback dimensions and their per-caption scores.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCORE_MIN: f64 = 1.0;
pub const SCORE_MAX: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackMetric {
    Helpfulness,
    Takeaway,
    Visual,
    Ocr,
}

impl FeedbackMetric {
    pub const ALL: [FeedbackMetric; 4] = [
        FeedbackMetric::Helpfulness,
        FeedbackMetric::Takeaway,
        FeedbackMetric::Visual,
        FeedbackMetric::Ocr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackMetric::Helpfulness => "helpfulness",
            FeedbackMetric::Takeaway => "takeaway",
            FeedbackMetric::Visual => "visual",
            FeedbackMetric::Ocr => "ocr",
        }
    }
}

impl fmt::Display for FeedbackMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeedbackMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeedbackMetric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown feedback metric `{s}`")))
    }
}

/// One score per feedback metric on the 1–5 scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackScores {
    pub helpfulness: f64,
    pub takeaway: f64,
    pub visual: f64,
    pub ocr: f64,
}

impl FeedbackScores {
    pub fn get(&self, metric: FeedbackMetric) -> f64 {
        match metric {
            FeedbackMetric::Helpfulness => self.helpfulness,
            FeedbackMetric::Takeaway => self.takeaway,
            FeedbackMetric::Visual => self.visual,
            FeedbackMetric::Ocr => self.ocr,
        }
    }

    pub fn set(&mut self, metric: FeedbackMetric, value: f64) {
        match metric {
            FeedbackMetric::Helpfulness => self.helpfulness = value,
            FeedbackMetric::Takeaway => self.takeaway = value,
            FeedbackMetric::Visual => self.visual = value,
            FeedbackMetric::Ocr => self.ocr = value,
        }
    }

    pub fn from_fn(mut f: impl FnMut(FeedbackMetric) -> f64) -> Self {
        FeedbackScores {
            helpfulness: f(FeedbackMetric::Helpfulness),
            takeaway: f(FeedbackMetric::Takeaway),
            visual: f(FeedbackMetric::Visual),
            ocr: f(FeedbackMetric::Ocr),
        }
    }

    pub fn in_range(&self) -> bool {
        FeedbackMetric::ALL
            .iter()
            .all(|&m| (SCORE_MIN..=SCORE_MAX).contains(&self.get(m)))
    }
}

pub fn clip_score(x: f64) -> f64 {
    x.clamp(SCORE_MIN, SCORE_MAX)
}
