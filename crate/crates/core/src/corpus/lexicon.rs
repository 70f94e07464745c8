//! Closed word lists the synthetic corpus draws from.

use crate::error::{Error, Result};

const X_LABELS: [&str; 24] = [
    "epoch", "iteration", "time", "step", "temperature", "frequency", "depth", "size",
    "pressure", "voltage", "distance", "batch", "width", "samples", "rounds", "nodes",
    "threads", "horizon", "budget", "layers", "dimension", "noise", "radius", "load",
];

const Y_LABELS: [&str; 24] = [
    "accuracy", "loss", "error", "throughput", "latency", "energy", "precision", "recall",
    "reward", "density", "speedup", "variance", "perplexity", "utility", "cost", "gain",
    "entropy", "coverage", "bandwidth", "regret", "yield", "score", "overhead", "fidelity",
];

const SERIES_LABELS: [&str; 24] = [
    "adam", "sgd", "baseline", "ours", "cnn", "rnn", "lstm", "transformer",
    "greedy", "random", "oracle", "bert", "svm", "ridge", "lasso", "boosting",
    "kmeans", "pca", "gan", "vae", "dqn", "ppo", "mcts", "gru",
];

/// Default color cycle; series `i` is always drawn in `COLORS[i]`.
pub const COLORS: [&str; 8] = [
    "blue", "orange", "green", "red", "purple", "brown", "pink", "gray",
];

pub const MAX_SERIES: usize = 3;

pub const GENERIC_HEAD: &str = "results";
pub const GENERIC_PREPS: [&str; 3] = ["of", "for", "on"];
pub const GENERIC_NOUNS: [&str; 6] = [
    "experiment", "evaluation", "study", "benchmark", "analysis", "simulation",
];
pub const GENERIC_SUBJECTS: [&str; 2] = ["our method", "the proposed approach"];
pub const GENERIC_CLAIMS: [&str; 2] = ["performs best", "works well"];

pub const TREND_UP: &str = "increase";
pub const TREND_DOWN: &str = "decrease";
pub const TREND_FLAT: &str = "stay flat";

/// Label pools sized from the configured lexicon budget.
#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    pub x_labels: Vec<&'static str>,
    pub y_labels: Vec<&'static str>,
    pub series_labels: Vec<&'static str>,
}

impl Lexicon {
    /// `size` is the number of distinct label strings, split evenly across
    /// the x-axis, y-axis and legend pools.
    pub fn new(size: usize) -> Result<Self> {
        let per_pool = size / 3;
        if per_pool < MAX_SERIES || per_pool > X_LABELS.len() {
            return Err(Error::config(format!(
                "lexicon_size must be in [{}, {}], got {size}",
                3 * MAX_SERIES,
                3 * X_LABELS.len()
            )));
        }
        Ok(Lexicon {
            x_labels: X_LABELS[..per_pool].to_vec(),
            y_labels: Y_LABELS[..per_pool].to_vec(),
            series_labels: SERIES_LABELS[..per_pool].to_vec(),
        })
    }

    pub fn contains_label(&self, s: &str) -> bool {
        self.x_labels.contains(&s) || self.y_labels.contains(&s) || self.series_labels.contains(&s)
    }
}

pub fn mark_word(chart: super::ChartType) -> &'static str {
    match chart {
        super::ChartType::Line => "lines",
        super::ChartType::Bar => "bars",
        super::ChartType::Scatter => "points",
    }
}
