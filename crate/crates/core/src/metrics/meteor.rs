use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeteorParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for MeteorParams {
    fn default() -> Self {
        MeteorParams {
            alpha: 0.9,
            beta: 3.0,
            gamma: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

/// Exact-match unigram alignment with the most matches and, among those, the
/// fewest chunks.
pub fn align<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Alignment {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let h = word_ids(hyp, &mut ids);
    let r = word_ids(reference, &mut ids);
    let words = ids.len();

    let mut hyp_count = vec![0usize; words];
    let mut ref_count = vec![0usize; words];
    h.iter().for_each(|&w| hyp_count[w] += 1);
    r.iter().for_each(|&w| ref_count[w] += 1);
    let need: Vec<usize> = (0..words).map(|w| hyp_count[w].min(ref_count[w])).collect();
    let matches: usize = need.iter().sum();
    if matches == 0 {
        return Alignment { matches: 0, chunks: 0 };
    }
    // hyp occurrences of each word at positions >= i
    let mut remaining = vec![vec![0usize; words]; h.len() + 1];
    for i in (0..h.len()).rev() {
        remaining[i] = remaining[i + 1].clone();
        remaining[i][h[i]] += 1;
    }
    let mut search = Search {
        h: &h,
        r: &r,
        need: &need,
        remaining: &remaining,
        memo: HashMap::new(),
    };
    let mut used = vec![0u64; r.len().div_ceil(64)];
    let mut matched = vec![0usize; words];
    let adjacent = search.best(0, None, &mut used, &mut matched);
    Alignment {
        matches,
        chunks: matches - adjacent,
    }
}

fn word_ids<'a, S: AsRef<str>>(xs: &'a [S], ids: &mut HashMap<&'a str, usize>) -> Vec<usize> {
    xs.iter()
        .map(|s| {
            let n = ids.len();
            *ids.entry(s.as_ref()).or_insert(n)
        })
        .collect()
}

struct Search<'a> {
    h: &'a [usize],
    r: &'a [usize],
    need: &'a [usize],
    remaining: &'a [Vec<usize>],
    memo: HashMap<(usize, Option<usize>, Vec<u64>), usize>,
}

impl Search<'_> {
    /// Most adjacent match pairs achievable from hyp position `i` onwards, given
    /// that position `i - 1` was aligned to `prev`.
    fn best(&mut self, i: usize, prev: Option<usize>, used: &mut Vec<u64>, matched: &mut [usize]) -> usize {
        if i == self.h.len() {
            return 0;
        }
        let key = (i, prev, used.clone());
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let w = self.h[i];
        let missing = self.need[w] - matched[w];
        let mut best = None;
        if self.remaining[i + 1][w] >= missing {
            best = Some(self.best(i + 1, None, used, matched));
        }
        if missing > 0 {
            for j in 0..self.r.len() {
                if self.r[j] != w || used[j / 64] >> (j % 64) & 1 == 1 {
                    continue;
                }
                used[j / 64] |= 1 << (j % 64);
                matched[w] += 1;
                let bonus = usize::from(prev.is_some_and(|p| p + 1 == j));
                let v = bonus + self.best(i + 1, Some(j), used, matched);
                matched[w] -= 1;
                used[j / 64] &= !(1 << (j % 64));
                best = Some(best.map_or(v, |b: usize| b.max(v)));
            }
        }
        let v = best.expect("a feasible continuation always exists");
        self.memo.insert(key, v);
        v
    }
}

pub fn meteor_from_alignment(a: Alignment, hyp_len: usize, ref_len: usize, params: &MeteorParams) -> f64 {
    if a.matches == 0 {
        return 0.0;
    }
    let m = a.matches as f64;
    let p = m / hyp_len as f64;
    let r = m / ref_len as f64;
    let f = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
    let penalty = params.gamma * (a.chunks as f64 / m).powf(params.beta);
    f * (1.0 - penalty)
}

pub fn meteor_exact<S: AsRef<str>>(hyp: &[S], reference: &[S], params: &MeteorParams) -> f64 {
    meteor_from_alignment(align(hyp, reference), hyp.len(), reference.len(), params)
}
