//! Figure/caption records, the synthetic corpus generator and the benchmark
//! file format (per-figure JSON plus `file_idx.json` split indices).

mod generate;
mod layout;
pub mod lexicon;
mod schema;
pub mod text;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::feedback::{FeedbackMetric, FeedbackScores};

pub use generate::{
    generate_corpus, least_squares_slope, majority_trend, planted_mean, planted_scores, render_caption,
    slope_sign, trend_phrase, CorpusConfig, FLAT_SLOPE, PLANTED_NOISE,
};
pub use layout::{
    export_dataset, export_records, load_control_set, load_dataset, load_records, load_split, LoadedSplit,
};
pub use schema::{parse_benchmark_record, serialize_benchmark_record};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartType {
    Line,
    Bar,
    Scatter,
}

impl ChartType {
    pub const ALL: [ChartType; 3] = [ChartType::Line, ChartType::Bar, ChartType::Scatter];

    pub fn index(self) -> usize {
        match self {
            ChartType::Line => 0,
            ChartType::Bar => 1,
            ChartType::Scatter => 2,
        }
    }

    /// Maps a free-form benchmark `figure-type` string onto the three chart families.
    pub fn from_figure_type(s: &str) -> ChartType {
        let lower = s.to_ascii_lowercase();
        if lower.contains("bar") {
            ChartType::Bar
        } else if lower.contains("scatter") {
            ChartType::Scatter
        } else {
            ChartType::Line
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChartType::Line => "line",
            ChartType::Bar => "bar",
            ChartType::Scatter => "scatter",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

/// Structured stand-in for a figure image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureSpec {
    pub figure_id: String,
    pub chart_type: ChartType,
    pub series: Vec<Series>,
    pub x_label: String,
    pub y_label: String,
    pub title: String,
    pub legend_colors: Vec<String>,
}

impl FigureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.series.is_empty() {
            return Err(Error::schema("series", "figure has no series"));
        }
        for s in &self.series {
            if s.values.len() < 2 {
                return Err(Error::schema("series.values", "series needs at least two values"));
            }
            if s.label.is_empty() {
                return Err(Error::schema("series.label", "empty label"));
            }
        }
        if self.x_label.is_empty() || self.y_label.is_empty() || self.title.is_empty() {
            return Err(Error::schema("labels", "empty axis label or title"));
        }
        Ok(())
    }

    /// OCR-visible strings: axis labels, title and legend entries.
    pub fn visible_text(&self) -> Vec<String> {
        let mut out = vec![self.title.clone(), self.x_label.clone(), self.y_label.clone()];
        out.extend(self.series.iter().map(|s| s.label.clone()));
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Descriptive,
    Generic,
}

/// Which quality dimensions a synthetic caption exhibits, and the scores planted for it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityProfile {
    pub tier: Tier,
    pub mentions_takeaway: bool,
    pub mentions_ocr: bool,
    pub mentions_visual: bool,
    pub planted_scores: FeedbackScores,
}

/// `{caption, sentence, token}` block used by every caption variant in the benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionVariant {
    pub caption: String,
    pub sentence: Vec<String>,
    pub token: Vec<String>,
}

impl CaptionVariant {
    pub fn from_caption(caption: &str) -> Self {
        let sentence = caption
            .split(" . ")
            .map(|s| s.trim().trim_end_matches(" .").trim_end_matches('.').trim().to_string())
            .filter(|s| !s.is_empty())
            .map(|s| format!("{s} ."))
            .collect();
        CaptionVariant {
            caption: caption.to_string(),
            sentence,
            token: text::tokenize(caption),
        }
    }
}

/// The original caption appears either as a bare string or as a full variant block.
#[derive(Clone, Debug, PartialEq)]
pub enum OriginalCaption {
    Text(String),
    Variant(CaptionVariant),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NormalizedCaptions {
    pub basic_num: Option<CaptionVariant>,
    pub advanced_equation_bracket: Option<CaptionVariant>,
    pub extra: Map<String, Value>,
}

/// One metric's entry of the `human-feedback` block.
#[derive(Clone, Debug, PartialEq)]
pub struct HumanFeedbackEntry {
    pub score: f64,
    pub token: Option<String>,
    pub caption_prepend: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FigureCaptionRecord {
    pub figure_id: String,
    pub paper_id: String,
    pub figure_type: String,
    pub contains_subfigure: bool,
    pub original: OriginalCaption,
    pub lowercase: CaptionVariant,
    pub normalized: Option<NormalizedCaptions>,
    pub img_text: Vec<String>,
    /// Tokenization of `lowercase.caption`; this is the caption every model sees.
    pub caption_tokens: Vec<String>,
    pub human_feedback: BTreeMap<FeedbackMetric, HumanFeedbackEntry>,
    pub human_feedback_extra: Map<String, Value>,
    pub figure: Option<FigureSpec>,
    pub profile: Option<QualityProfile>,
    /// Ground-truth annotation; only control-set records carry one.
    pub actual_feedback: Option<FeedbackScores>,
    pub extra: Map<String, Value>,
}

impl FigureCaptionRecord {
    pub fn caption_text(&self) -> &str {
        &self.lowercase.caption
    }

    pub fn chart_type(&self) -> ChartType {
        self.figure
            .as_ref()
            .map(|f| f.chart_type)
            .unwrap_or_else(|| ChartType::from_figure_type(&self.figure_type))
    }

    /// Scores of the `human-feedback` block, if all four metrics are present.
    pub fn feedback(&self) -> Option<FeedbackScores> {
        let mut out = FeedbackScores::from_fn(|_| f64::NAN);
        for m in FeedbackMetric::ALL {
            out.set(m, self.human_feedback.get(&m)?.score);
        }
        Some(out)
    }

    pub fn score(&self, metric: FeedbackMetric) -> Option<f64> {
        self.human_feedback.get(&metric).map(|e| e.score)
    }

    /// Sets the predicted score for `metric`, dropping any token derived from the old score.
    pub fn set_score(&mut self, metric: FeedbackMetric, score: f64) {
        self.human_feedback.insert(
            metric,
            HumanFeedbackEntry {
                score,
                token: None,
                caption_prepend: None,
            },
        );
    }

    pub fn control_token(&self, metric: FeedbackMetric) -> Option<&str> {
        self.human_feedback.get(&metric)?.token.as_deref()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Synthetic,
    Benchmark,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown split `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<FigureCaptionRecord>,
    pub val: Vec<FigureCaptionRecord>,
    pub test: Vec<FigureCaptionRecord>,
    pub control_set: Vec<FigureCaptionRecord>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[FigureCaptionRecord] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<FigureCaptionRecord> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_records(&self) -> impl Iterator<Item = &FigureCaptionRecord> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }

    /// Checks split disjointness and the control-set constraints.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeMap::new();
        for split in Split::ALL {
            for r in self.split(split) {
                if let Some(prev) = seen.insert(r.figure_id.as_str(), split) {
                    return Err(Error::config(format!(
                        "figure `{}` appears in both {prev} and {split}",
                        r.figure_id
                    )));
                }
            }
        }
        if self.control_set.len() * 10 > self.train.len() {
            return Err(Error::config(format!(
                "control set of {} exceeds a tenth of the {} training records",
                self.control_set.len(),
                self.train.len()
            )));
        }
        for c in &self.control_set {
            if seen.get(c.figure_id.as_str()) != Some(&Split::Train) {
                return Err(Error::config(format!(
                    "control record `{}` is not in the train split",
                    c.figure_id
                )));
            }
            if c.actual_feedback.is_none() {
                return Err(Error::config(format!(
                    "control record `{}` has no ground-truth feedback",
                    c.figure_id
                )));
            }
        }
        Ok(())
    }
}
