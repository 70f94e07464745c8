//! Frozen caption featurizers mapping a token sequence to a fixed-length vector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MIN_DIM: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturizerScheme {
    HashedNgram,
    LearnedLookup,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    L2,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturizerConfig {
    pub dim: usize,
    pub scheme: FeaturizerScheme,
    pub normalization: Normalization,
    pub hash_seed: u64,
    /// Longest n-gram hashed by the `hashed_ngram` scheme (1 or 2).
    #[serde(default = "default_max_ngram")]
    pub max_ngram: usize,
    /// Rows of the frozen table used by `learned_lookup`.
    #[serde(default = "default_lookup_rows")]
    pub lookup_rows: usize,
}

fn default_max_ngram() -> usize {
    2
}

fn default_lookup_rows() -> usize {
    2048
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            dim: 256,
            scheme: FeaturizerScheme::HashedNgram,
            normalization: Normalization::L2,
            hash_seed: 3,
            max_ngram: default_max_ngram(),
            lookup_rows: default_lookup_rows(),
        }
    }
}

impl FeaturizerConfig {
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))[..16].to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EmbeddingVector<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }
}

/// Immutable after construction; `embed` never changes its state.
#[derive(Clone, Debug)]
pub struct Featurizer {
    config: FeaturizerConfig,
    table: Vec<f64>,
}

/// 64-bit FNV-1a, salted; stable across platforms and toolchains.
fn fnv1a(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for part in parts {
        for b in part.iter().copied() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // final avalanche so low bits depend on every input byte
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h
}

/// Hashes a token into `[0, buckets)` with a ±1 sign.
pub fn signed_bucket(seed: u64, parts: &[&[u8]], buckets: usize) -> (usize, f64) {
    let h = fnv1a(seed, parts);
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    ((h % buckets as u64) as usize, sign)
}

pub fn build_featurizer(config: &FeaturizerConfig) -> Result<Featurizer> {
    if config.dim < MIN_DIM {
        return Err(Error::config(format!(
            "featurizer dim must be >= {MIN_DIM}, got {}",
            config.dim
        )));
    }
    let table = match config.scheme {
        FeaturizerScheme::HashedNgram => {
            if !(1..=2).contains(&config.max_ngram) {
                return Err(Error::config(format!(
                    "max_ngram must be 1 or 2, got {}",
                    config.max_ngram
                )));
            }
            Vec::new()
        }
        FeaturizerScheme::LearnedLookup => {
            if config.lookup_rows == 0 {
                return Err(Error::config("lookup_rows must be positive"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.hash_seed);
            let scale = 1.0 / (config.dim as f64).sqrt();
            (0..config.lookup_rows * config.dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * scale
                })
                .collect()
        }
    };
    Ok(Featurizer {
        config: config.clone(),
        table,
    })
}

/// Parses a scheme name as it appears in configs and on the command line.
pub fn parse_scheme(name: &str) -> Result<FeaturizerScheme> {
    match name {
        "hashed_ngram" => Ok(FeaturizerScheme::HashedNgram),
        "learned_lookup" => Ok(FeaturizerScheme::LearnedLookup),
        other => Err(Error::config(format!("unknown featurizer scheme `{other}`"))),
    }
}

impl Featurizer {
    pub fn config(&self) -> &FeaturizerConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn fingerprint(&self) -> String {
        self.config.fingerprint()
    }

    pub fn embed<T: Scalar, S: AsRef<str>>(&self, tokens: &[S]) -> EmbeddingVector<T> {
        let d = self.config.dim;
        let mut acc = vec![0.0f64; d];
        let seed = self.config.hash_seed;
        match self.config.scheme {
            FeaturizerScheme::HashedNgram => {
                for t in tokens {
                    let (i, s) = signed_bucket(seed, &[b"u", t.as_ref().as_bytes()], d);
                    acc[i] += s;
                }
                if self.config.max_ngram >= 2 {
                    for w in tokens.windows(2) {
                        let (i, s) = signed_bucket(
                            seed,
                            &[b"b", w[0].as_ref().as_bytes(), w[1].as_ref().as_bytes()],
                            d,
                        );
                        acc[i] += s;
                    }
                }
            }
            FeaturizerScheme::LearnedLookup => {
                if !tokens.is_empty() {
                    let rows = self.config.lookup_rows;
                    for t in tokens {
                        let (r, _) = signed_bucket(seed, &[b"row", t.as_ref().as_bytes()], rows);
                        for (a, v) in acc.iter_mut().zip(&self.table[r * d..(r + 1) * d]) {
                            *a += v;
                        }
                    }
                    let n = tokens.len() as f64;
                    acc.iter_mut().for_each(|a| *a /= n);
                }
            }
        }
        if self.config.normalization == Normalization::L2 {
            let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                acc.iter_mut().for_each(|v| *v /= norm);
            }
        }
        EmbeddingVector {
            values: acc.into_iter().map(T::lit).collect(),
        }
    }
}
