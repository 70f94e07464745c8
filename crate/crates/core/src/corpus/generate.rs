use std::collections::BTreeMap;

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Map;

use super::lexicon::{self, Lexicon, COLORS, MAX_SERIES};
use super::{
    CaptionVariant, ChartType, Dataset, FigureCaptionRecord, FigureSpec, NormalizedCaptions,
    OriginalCaption, Provenance, QualityProfile, Series, Tier,
};
use crate::error::{Error, Result};
use crate::feedback::{clip_score, FeedbackMetric, FeedbackScores};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_pairs: usize,
    pub split_ratios: [f64; 3],
    pub control_size: usize,
    /// Number of distinct axis/legend label strings.
    pub lexicon_size: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_pairs: 5000,
            split_ratios: [0.8, 0.1, 0.1],
            control_size: 400,
            lexicon_size: 36,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pairs < 50 {
            return Err(Error::config(format!("n_pairs must be >= 50, got {}", self.n_pairs)));
        }
        let sum: f64 = self.split_ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.split_ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::config(format!(
                "split ratios must be non-negative and sum to 1, got {:?}",
                self.split_ratios
            )));
        }
        let max_control = self.n_pairs as f64 * self.split_ratios[0] / 10.0;
        if self.control_size as f64 > max_control + 1e-9 {
            return Err(Error::config(format!(
                "control_size {} exceeds n_pairs * train_ratio / 10 = {max_control}",
                self.control_size
            )));
        }
        Lexicon::new(self.lexicon_size)?;
        Ok(())
    }

    fn split_sizes(&self) -> [usize; 3] {
        let train = (self.n_pairs as f64 * self.split_ratios[0]).round() as usize;
        let val = ((self.n_pairs as f64 * self.split_ratios[1]).round() as usize)
            .min(self.n_pairs - train);
        [train, val, self.n_pairs - train - val]
    }
}

/// Per-metric planted score: intercept plus weights on (takeaway, ocr, visual).
const PLANTED_WEIGHTS: [(FeedbackMetric, [f64; 4]); 4] = [
    (FeedbackMetric::Helpfulness, [1.5, 1.2, 0.8, 0.8]),
    (FeedbackMetric::Takeaway, [1.2, 2.4, 0.3, 0.3]),
    (FeedbackMetric::Visual, [1.2, 0.3, 0.3, 2.4]),
    (FeedbackMetric::Ocr, [1.8, 0.2, 2.4, 0.2]),
];

pub const PLANTED_NOISE: f64 = 0.3;

/// Noise-free planted score for a combination of mention flags.
pub fn planted_mean(metric: FeedbackMetric, takeaway: bool, ocr: bool, visual: bool) -> f64 {
    let w = PLANTED_WEIGHTS
        .iter()
        .find(|(m, _)| *m == metric)
        .map(|(_, w)| w)
        .expect("weights for every metric");
    w[0] + w[1] * f64::from(u8::from(takeaway))
        + w[2] * f64::from(u8::from(ocr))
        + w[3] * f64::from(u8::from(visual))
}

pub fn planted_scores<R: Rng>(takeaway: bool, ocr: bool, visual: bool, rng: &mut R) -> FeedbackScores {
    FeedbackScores::from_fn(|m| {
        let noise = rng.random_range(-PLANTED_NOISE..=PLANTED_NOISE);
        clip_score(planted_mean(m, takeaway, ocr, visual) + noise)
    })
}

fn random_profile<R: Rng>(tier: Tier, rng: &mut R) -> QualityProfile {
    let (t, o, v) = match tier {
        Tier::Descriptive => {
            const COMBOS: [(bool, bool, bool); 4] = [
                (true, true, false),
                (true, false, true),
                (false, true, true),
                (true, true, true),
            ];
            COMBOS[rng.random_range(0..COMBOS.len())]
        }
        Tier::Generic => (rng.random_bool(0.4), false, false),
    };
    QualityProfile {
        tier,
        mentions_takeaway: t,
        mentions_ocr: o,
        mentions_visual: v,
        planted_scores: planted_scores(t, o, v, rng),
    }
}

fn random_figure<R: Rng>(figure_id: String, lex: &Lexicon, rng: &mut R) -> FigureSpec {
    let chart_type = ChartType::ALL[rng.random_range(0..3)];
    let n_series = rng.random_range(1..=MAX_SERIES);
    let n_points = rng.random_range(5..=10);
    let x_label = *lex.x_labels.choose(rng).expect("non-empty pool");
    let y_label = *lex.y_labels.choose(rng).expect("non-empty pool");
    let labels: Vec<&str> = index::sample(rng, lex.series_labels.len(), n_series)
        .into_iter()
        .map(|i| lex.series_labels[i])
        .collect();
    // -1 falling, 0 flat, +1 rising; shared by every series of the figure.
    let direction = rng.random_range(-1i32..=1);
    let series = labels
        .iter()
        .map(|label| {
            let base = rng.random_range(1.0..9.0);
            let step = f64::from(direction) * rng.random_range(0.4..1.0);
            let values = (0..n_points)
                .map(|i| {
                    let v = base + step * i as f64 + rng.random_range(-0.1..0.1);
                    (v * 1000.0).round() / 1000.0
                })
                .collect();
            Series {
                label: (*label).to_string(),
                values,
            }
        })
        .collect();
    FigureSpec {
        figure_id,
        chart_type,
        series,
        x_label: x_label.to_string(),
        y_label: y_label.to_string(),
        title: format!("{y_label} vs {x_label}"),
        legend_colors: COLORS[..n_series].iter().map(|c| (*c).to_string()).collect(),
    }
}

/// Least-squares slope of `values` against their index.
pub fn least_squares_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let xbar = (n - 1.0) / 2.0;
    let ybar = values.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, y) in values.iter().enumerate() {
        let dx = i as f64 - xbar;
        num += dx * (y - ybar);
        den += dx * dx;
    }
    num / den
}

/// Slopes inside this band count as flat.
pub const FLAT_SLOPE: f64 = 0.15;

pub fn slope_sign(values: &[f64]) -> i32 {
    let s = least_squares_slope(values);
    if s > FLAT_SLOPE {
        1
    } else if s < -FLAT_SLOPE {
        -1
    } else {
        0
    }
}

/// Majority vote of per-series slope signs; ties resolve to flat.
pub fn majority_trend(fig: &FigureSpec) -> i32 {
    let mut counts = [0usize; 3];
    for s in &fig.series {
        counts[(slope_sign(&s.values) + 1) as usize] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    let winners: Vec<usize> = (0..3).filter(|&i| counts[i] == best).collect();
    if winners.len() == 1 {
        winners[0] as i32 - 1
    } else {
        0
    }
}

pub fn trend_phrase(sign: i32) -> &'static str {
    match sign.signum() {
        1 => lexicon::TREND_UP,
        -1 => lexicon::TREND_DOWN,
        _ => lexicon::TREND_FLAT,
    }
}

/// Renders a caption (already lowercase and space-tokenized) for `fig` under profile `q`.
pub fn render_caption<R: Rng>(fig: &FigureSpec, q: &QualityProfile, rng: &mut R) -> String {
    let mut segments: Vec<String> = Vec::new();
    match q.tier {
        Tier::Generic => {
            let prep = lexicon::GENERIC_PREPS.choose(rng).expect("non-empty");
            let noun = lexicon::GENERIC_NOUNS.choose(rng).expect("non-empty");
            segments.push(format!("{} {prep} the {noun}", lexicon::GENERIC_HEAD));
            if q.mentions_takeaway {
                let subj = lexicon::GENERIC_SUBJECTS.choose(rng).expect("non-empty");
                let claim = lexicon::GENERIC_CLAIMS.choose(rng).expect("non-empty");
                segments.push(format!("{subj} {claim}"));
            }
        }
        Tier::Descriptive => {
            if q.mentions_ocr {
                let mut labels: Vec<&str> = fig.series.iter().map(|s| s.label.as_str()).collect();
                labels.sort_unstable();
                segments.push(format!(
                    "{} versus {} for {}",
                    fig.y_label,
                    fig.x_label,
                    labels.join(" and ")
                ));
            }
            if q.mentions_visual {
                segments.push(format!(
                    "{} {} are shown",
                    fig.legend_colors.join(" and "),
                    lexicon::mark_word(fig.chart_type)
                ));
            }
            if q.mentions_takeaway {
                segments.push(format!("overall the values {}", trend_phrase(majority_trend(fig))));
            }
        }
    }
    let mut caption = segments.join(" . ");
    caption.push_str(" .");
    caption
}

fn figure_type_name(c: ChartType) -> &'static str {
    match c {
        ChartType::Line => "Line Chart",
        ChartType::Bar => "Bar Chart",
        ChartType::Scatter => "Scatterplot",
    }
}

fn synthetic_record<R: Rng>(
    index: usize,
    lex: &Lexicon,
    tier: Tier,
    rng: &mut R,
) -> FigureCaptionRecord {
    let figure_id = format!("synth-{index:06}");
    let figure = random_figure(figure_id.clone(), lex, rng);
    let profile = random_profile(tier, rng);
    let caption = render_caption(&figure, &profile, rng);
    let figure_number = rng.random_range(1..=9);
    let original = format!("Figure {figure_number}: {caption}");
    let lowercase = CaptionVariant::from_caption(&caption);
    FigureCaptionRecord {
        paper_id: format!("synth-paper-{:05}", index / 4),
        figure_type: figure_type_name(figure.chart_type).to_string(),
        contains_subfigure: false,
        original: OriginalCaption::Variant(CaptionVariant::from_caption(&original)),
        normalized: Some(NormalizedCaptions {
            basic_num: Some(lowercase.clone()),
            advanced_equation_bracket: Some(lowercase.clone()),
            extra: Map::new(),
        }),
        img_text: figure.visible_text(),
        caption_tokens: lowercase.token.clone(),
        lowercase,
        human_feedback: BTreeMap::new(),
        human_feedback_extra: Map::new(),
        figure: Some(figure),
        profile: Some(profile),
        actual_feedback: None,
        extra: Map::new(),
        figure_id,
    }
}

/// Generates a synthetic corpus with half descriptive and half generic captions.
pub fn generate_corpus(config: &CorpusConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let lex = Lexicon::new(config.lexicon_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n = config.n_pairs;
    let mut tiers: Vec<Tier> = (0..n)
        .map(|i| if i < n / 2 { Tier::Descriptive } else { Tier::Generic })
        .collect();
    tiers.shuffle(&mut rng);

    let mut records: Vec<FigureCaptionRecord> = tiers
        .into_iter()
        .enumerate()
        .map(|(i, tier)| synthetic_record(i, &lex, tier, &mut rng))
        .collect();

    let [n_train, n_val, _] = config.split_sizes();
    let test = records.split_off(n_train + n_val);
    let val = records.split_off(n_train);
    let train = records;

    let mut picks = index::sample(&mut rng, train.len(), config.control_size).into_vec();
    picks.sort_unstable();
    let control_set = picks
        .into_iter()
        .map(|i| {
            let mut r = train[i].clone();
            r.actual_feedback = r.profile.as_ref().map(|p| p.planted_scores);
            r
        })
        .collect();

    let ds = Dataset {
        train,
        val,
        test,
        control_set,
        provenance: Provenance::Synthetic,
    };
    ds.validate()?;
    log::info!(
        "generated synthetic corpus: {} train / {} val / {} test, {} control",
        ds.train.len(),
        ds.val.len(),
        ds.test.len(),
        ds.control_set.len()
    );
    Ok(ds)
}
