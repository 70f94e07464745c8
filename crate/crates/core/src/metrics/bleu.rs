use std::collections::HashMap;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;
/// Floor applied to each precision in sentence-level mode.
pub const SENTENCE_FLOOR: f64 = 1e-9;

/// Clipped n-gram matches and hypothesis n-gram totals for orders 1..=4, plus lengths.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BleuCounts {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuCounts {
    pub fn of<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Self {
        let mut c = BleuCounts {
            hyp_len: hyp.len() as u64,
            ref_len: reference.len() as u64,
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            c.totals[n - 1] = h.values().sum::<usize>() as u64;
            c.matches[n - 1] = h
                .iter()
                .map(|(g, k)| (*k).min(r.get(g).copied().unwrap_or(0)) as u64)
                .sum();
        }
        c
    }

    pub fn add(&mut self, other: &BleuCounts) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        }
    }

    /// Unsmoothed score: any zero precision gives zero.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 0..MAX_ORDER {
            if self.matches[n] == 0 {
                return 0.0;
            }
            log_sum += (self.matches[n] as f64 / self.totals[n] as f64).ln();
        }
        self.brevity_penalty() * (log_sum / MAX_ORDER as f64).exp()
    }

    /// Score with every precision floored at `SENTENCE_FLOOR`.
    pub fn floored_score(&self) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let log_sum: f64 = (0..MAX_ORDER)
            .map(|n| {
                let p = if self.totals[n] == 0 {
                    0.0
                } else {
                    self.matches[n] as f64 / self.totals[n] as f64
                };
                p.max(SENTENCE_FLOOR).ln()
            })
            .sum();
        self.brevity_penalty() * (log_sum / MAX_ORDER as f64).exp()
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(AsRef::as_ref).collect()).or_default() += 1;
        }
    }
    out
}

/// Corpus BLEU@4 from aggregated counts.
pub fn bleu4_corpus<S: AsRef<str>>(pairs: &[(Vec<S>, Vec<S>)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("BLEU needs at least one pair".into()));
    }
    let mut total = BleuCounts::default();
    for (h, r) in pairs {
        total.add(&BleuCounts::of(h, r));
    }
    Ok(total.score())
}

/// Sentence BLEU@4 with floored precisions.
pub fn bleu4_sentence<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> f64 {
    BleuCounts::of(hyp, reference).floored_score()
}
