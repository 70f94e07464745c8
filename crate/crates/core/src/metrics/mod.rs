//! Caption evaluation metrics implemented from scratch, plus corpus reports.

mod bleu;
mod meteor;
mod rouge;

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::FigureCaptionRecord;
use crate::error::{Error, Result};

pub use bleu::{bleu4_corpus, bleu4_sentence, BleuCounts, MAX_ORDER, SENTENCE_FLOOR};
pub use meteor::{align, meteor_exact, meteor_from_alignment, Alignment, MeteorParams};
pub use rouge::{lcs_len, rouge_l_f1};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalTokenization {
    pub lowercase: bool,
    pub strip_punctuation: bool,
}

impl Default for EvalTokenization {
    fn default() -> Self {
        EvalTokenization {
            lowercase: true,
            strip_punctuation: true,
        }
    }
}

impl EvalTokenization {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let text = if self.lowercase {
            text.to_lowercase()
        } else {
            text.to_string()
        };
        text.split_whitespace()
            .map(|w| {
                if self.strip_punctuation {
                    w.chars().filter(|c| !c.is_ascii_punctuation()).collect()
                } else {
                    w.to_string()
                }
            })
            .filter(|w: &String| !w.is_empty())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub tokenization: EvalTokenization,
    #[serde(default)]
    pub meteor: MeteorParams,
}

impl EvalConfig {
    /// Short digest identifying the scoring setup; reports are comparable only if equal.
    pub fn fingerprint(&self) -> String {
        let canon = serde_json::to_string(self).expect("eval config serializes");
        let digest = Sha256::digest(format!("figcaps-eval-v1:{canon}").as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleScores {
    pub figure_id: String,
    pub rouge_l: f64,
    /// Sentence-level BLEU@4 with floored precisions.
    pub bleu4: f64,
    pub meteor: f64,
}

/// Corpus scores on the ×100 scale rounded to two decimals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub label: String,
    pub rouge_l: f64,
    pub bleu4: f64,
    pub meteor: f64,
    pub n_examples: usize,
    pub eval_fingerprint: String,
    #[serde(default)]
    pub checkpoint: Option<String>,
    pub per_example: Vec<ExampleScores>,
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Joins generated captions with references by figure id and scores them.
pub fn evaluate_corpus(
    label: &str,
    generated: &[(String, String)],
    references: &[FigureCaptionRecord],
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    if generated.is_empty() {
        return Err(Error::Empty("no generated captions to evaluate".into()));
    }
    let refs: HashMap<&str, &FigureCaptionRecord> =
        references.iter().map(|r| (r.figure_id.as_str(), r)).collect();
    let missing: BTreeSet<String> = generated
        .iter()
        .filter(|(id, _)| !refs.contains_key(id.as_str()))
        .map(|(id, _)| id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingReference(missing.into_iter().collect()));
    }

    let tok = &cfg.tokenization;
    let mut per_example = Vec::with_capacity(generated.len());
    let mut counts = BleuCounts::default();
    for (id, caption) in generated {
        let hyp = tok.tokenize(caption);
        let reference = tok.tokenize(refs[id.as_str()].caption_text());
        let c = BleuCounts::of(&hyp, &reference);
        counts.add(&c);
        per_example.push(ExampleScores {
            figure_id: id.clone(),
            rouge_l: rouge_l_f1(&hyp, &reference),
            bleu4: c.floored_score(),
            meteor: meteor_exact(&hyp, &reference, &cfg.meteor),
        });
    }
    let n = per_example.len() as f64;
    let mean = |f: fn(&ExampleScores) -> f64| per_example.iter().map(f).sum::<f64>() / n;
    Ok(MetricReport {
        label: label.to_string(),
        rouge_l: round2(100.0 * mean(|e| e.rouge_l)),
        bleu4: round2(100.0 * counts.score()),
        meteor: round2(100.0 * mean(|e| e.meteor)),
        n_examples: per_example.len(),
        eval_fingerprint: cfg.fingerprint(),
        checkpoint: None,
        per_example,
    })
}

impl MetricReport {
    pub fn csv_header() -> &'static str {
        "label,rouge_l,bleu4,meteor,n_examples,eval_fingerprint"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.2},{:.2},{:.2},{},{}",
            self.label, self.rouge_l, self.bleu4, self.meteor, self.n_examples, self.eval_fingerprint
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::csv_header(), self.csv_row())
    }

    pub fn per_example_csv(&self) -> String {
        let mut out = String::from("figure_id,rouge_l,bleu4,meteor\n");
        for e in &self.per_example {
            let _ = writeln!(out, "{},{:.6},{:.6},{:.6}", e.figure_id, e.rouge_l, e.bleu4, e.meteor);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<16} {:>8} {:>8} {:>8}\n", "", "ROUGE-L", "BLEU", "METEOR");
        let _ = writeln!(
            out,
            "{:<16} {:>8.2} {:>8.2} {:>8.2}",
            self.label, self.rouge_l, self.bleu4, self.meteor
        );
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, CorpusConfig};

    fn refs() -> Vec<FigureCaptionRecord> {
        let cfg = CorpusConfig {
            n_pairs: 60,
            control_size: 4,
            ..CorpusConfig::default()
        };
        generate_corpus(&cfg, 2).unwrap().test
    }

    #[test]
    fn tokenization_lowercases_and_strips() {
        let t = EvalTokenization::default();
        assert_eq!(t.tokenize("Loss , vs. Epoch!"), vec!["loss", "vs", "epoch"]);
        assert_eq!(t.tokenize("a  b"), t.tokenize("a b"));
    }

    #[test]
    fn identity_corpus_scores_full_marks() {
        let r = refs();
        let generated: Vec<(String, String)> =
            r.iter().map(|x| (x.figure_id.clone(), x.caption_text().to_string())).collect();
        let rep = evaluate_corpus("ref", &generated, &r, &EvalConfig::default()).unwrap();
        assert_eq!(rep.rouge_l, 100.0);
        assert_eq!(rep.bleu4, 100.0);
        assert!(rep.meteor >= 99.5);
        assert_eq!(rep.n_examples, r.len());
    }

    #[test]
    fn empty_hypotheses_score_zero() {
        let r = refs();
        let generated: Vec<(String, String)> = r.iter().map(|x| (x.figure_id.clone(), String::new())).collect();
        let rep = evaluate_corpus("empty", &generated, &r, &EvalConfig::default()).unwrap();
        assert_eq!((rep.rouge_l, rep.bleu4, rep.meteor), (0.0, 0.0, 0.0));
    }

    #[test]
    fn missing_references_are_listed() {
        let r = refs();
        let generated = vec![("nope-1".to_string(), "x".to_string()), ("nope-0".into(), "y".into())];
        match evaluate_corpus("x", &generated, &r, &EvalConfig::default()) {
            Err(Error::MissingReference(ids)) => assert_eq!(ids, vec!["nope-0", "nope-1"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fingerprint_tracks_tokenization() {
        let a = EvalConfig::default();
        let mut b = a;
        b.tokenization.lowercase = false;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), EvalConfig::default().fingerprint());
    }
}
