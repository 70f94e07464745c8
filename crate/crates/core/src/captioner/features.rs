use serde::{Deserialize, Serialize};

use crate::corpus::text::tokenize;
use crate::corpus::{majority_trend, slope_sign, ChartType, FigureCaptionRecord, FigureSpec};
use crate::embedding::signed_bucket;
use crate::error::{Error, Result};

pub const CHART_BLOCK: usize = 3;
pub const SERIES_BLOCK: usize = 9;
/// Index of the aggregated slope-sign feature.
pub const TREND_FEATURE: usize = CHART_BLOCK + 2;

const SERIES_SLOTS: usize = 3;
const VALUE_SCALE: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureFeatureConfig {
    pub text_buckets: usize,
    pub label_buckets: usize,
    pub hash_seed: u64,
}

impl Default for FigureFeatureConfig {
    fn default() -> Self {
        FigureFeatureConfig {
            text_buckets: 32,
            label_buckets: 32,
            hash_seed: 11,
        }
    }
}

impl FigureFeatureConfig {
    pub fn dim(&self) -> usize {
        CHART_BLOCK + SERIES_BLOCK + self.text_buckets + self.label_buckets
    }

    pub fn validate(&self) -> Result<()> {
        if self.text_buckets == 0 || self.label_buckets == 0 {
            return Err(Error::config("feature hash blocks need at least one bucket"));
        }
        Ok(())
    }

    /// Offsets of the chart, series, OCR-text and title/label blocks.
    pub fn block_ranges(&self) -> [std::ops::Range<usize>; 4] {
        let a = CHART_BLOCK;
        let b = a + SERIES_BLOCK;
        let c = b + self.text_buckets;
        [0..a, a..b, b..c, c..c + self.label_buckets]
    }
}

fn hash_into(block: &mut [f64], seed: u64, role: &[u8], token: &str) {
    let (i, s) = signed_bucket(seed, &[role, token.as_bytes()], block.len());
    block[i] += s;
}

/// Chart-type one-hot, series summary, hashed OCR-text bag, hashed title/label bag.
pub fn encode_figure(fig: &FigureSpec, cfg: &FigureFeatureConfig) -> Vec<f64> {
    let visible = fig.visible_text();
    // Axis and legend text only; the title is hashed into the label block.
    let mut out = encode_common(fig.chart_type, visible.iter().filter(|t| **t != fig.title), cfg);
    let [_, series, _, labels] = cfg.block_ranges();

    let s = &mut out[series];
    let means: Vec<f64> = fig
        .series
        .iter()
        .map(|x| x.values.iter().sum::<f64>() / x.values.len().max(1) as f64)
        .collect();
    s[0] = fig.series.len() as f64 / SERIES_SLOTS as f64;
    s[1] = means.iter().sum::<f64>() / means.len().max(1) as f64 / VALUE_SCALE;
    s[2] = f64::from(majority_trend(fig));
    for (k, ser) in fig.series.iter().take(SERIES_SLOTS).enumerate() {
        s[3 + k] = f64::from(slope_sign(&ser.values));
        s[3 + SERIES_SLOTS + k] = means[k] / VALUE_SCALE;
    }

    let block = &mut out[labels];
    let seed = cfg.hash_seed.wrapping_add(1);
    for t in tokenize(&fig.title) {
        hash_into(block, seed, b"title", &t);
    }
    hash_into(block, seed, b"x", &fig.x_label);
    hash_into(block, seed, b"y", &fig.y_label);
    for ser in &fig.series {
        hash_into(block, seed, b"series", &ser.label);
    }
    out
}

fn encode_common<'a>(
    chart: ChartType,
    visible: impl Iterator<Item = &'a String>,
    cfg: &FigureFeatureConfig,
) -> Vec<f64> {
    let mut out = vec![0.0; cfg.dim()];
    out[chart.index()] = 1.0;
    let [_, _, text, _] = cfg.block_ranges();
    let block = &mut out[text];
    for s in visible {
        for t in tokenize(s) {
            hash_into(block, cfg.hash_seed, b"ocr", &t);
        }
    }
    out
}

/// Features from the structured figure when present, else from record metadata
/// (chart type and OCR text only).
pub fn encode_record(rec: &FigureCaptionRecord, cfg: &FigureFeatureConfig) -> Vec<f64> {
    match &rec.figure {
        Some(fig) => encode_figure(fig, cfg),
        None => encode_common(rec.chart_type(), rec.img_text.iter(), cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Series;

    fn fig() -> FigureSpec {
        FigureSpec {
            figure_id: "f".into(),
            chart_type: ChartType::Line,
            series: vec![Series {
                label: "adam".into(),
                values: vec![1.0, 2.0, 3.0, 4.0],
            }],
            x_label: "epoch".into(),
            y_label: "loss".into(),
            title: "loss vs epoch".into(),
            legend_colors: vec!["blue".into()],
        }
    }

    #[test]
    fn layout_and_trend() {
        let cfg = FigureFeatureConfig::default();
        let f = encode_figure(&fig(), &cfg);
        assert_eq!(f.len(), 76);
        assert_eq!(&f[..3], &[1.0, 0.0, 0.0]);
        assert_eq!(f[TREND_FEATURE], 1.0);
        assert_eq!(f, encode_figure(&fig(), &cfg));
        assert!(f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn title_change_only_touches_label_block() {
        let cfg = FigureFeatureConfig::default();
        let a = fig();
        let mut b = fig();
        b.title = "loss curves during training".into();
        let fa = encode_figure(&a, &cfg);
        let fb = encode_figure(&b, &cfg);
        let [_, _, _, labels] = cfg.block_ranges();
        let differing: Vec<usize> = (0..fa.len()).filter(|&i| fa[i] != fb[i]).collect();
        assert!(!differing.is_empty());
        assert!(differing.iter().all(|i| labels.contains(i)));
    }
}
