//! Configuration and orchestration of seeded end-to-end runs, from corpus
//! generation to comparison tables.

mod compare;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::captioner::{
    build_vocab, default_specials, generate_captions, train, CaptionerHyper, CaptionerModel, Condition,
    DecodeConfig, Objective, Phase, TrainingSchedule,
};
use crate::corpus::text::detokenize;
use crate::corpus::{
    export_dataset, export_records, generate_corpus, serialize_benchmark_record, CaptionVariant, CorpusConfig,
    Dataset, FigureCaptionRecord, OriginalCaption,
};
use crate::embedding::{build_featurizer, EmbeddingVector, FeaturizerConfig};
use crate::error::{Error, Result};
use crate::feedback::FeedbackMetric;
use crate::metrics::{evaluate_corpus, EvalConfig, MetricReport};
use crate::reward::{score_dataset, shared_featurizer, train_reward_models, RewardHyper, RewardModel};
use crate::scalar::Scalar;
use crate::udrl::{augment_dataset, QuantScheme, QuantizerConfig};

pub use compare::{compare_runs, percent_gain, ComparisonRow, ComparisonTable, GainRow, COLUMNS};

pub const SCHEMA_VERSION: u32 = 1;
/// Overrides `output_dir` when set.
pub const OUTPUT_ENV: &str = "FIGCAPS_OUTPUT_DIR";
pub const LOCK_FILE: &str = ".lock";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingOptions {
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default = "default_betas")]
    pub betas: [f64; 2],
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

fn default_betas() -> [f64; 2] {
    [0.9, 0.99]
}

impl Default for TrainingOptions {
    fn default() -> Self {
        let s = TrainingSchedule::default();
        TrainingOptions {
            batch_size: s.batch_size,
            lr: s.lr,
            betas: s.betas,
            clip_norm: s.clip_norm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub label: String,
    pub phases: Vec<Phase>,
    /// Replaces the global decode condition for this variant.
    #[serde(default)]
    pub condition: Option<Condition>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub precision: Precision,
    pub corpus: CorpusConfig,
    pub featurizer: FeaturizerConfig,
    pub reward: RewardHyper,
    #[serde(default = "all_metrics")]
    pub reward_metrics: Vec<FeedbackMetric>,
    pub captioner: CaptionerHyper,
    pub training: TrainingOptions,
    pub decode: DecodeConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    pub variants: Vec<VariantConfig>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

fn all_metrics() -> Vec<FeedbackMetric> {
    FeedbackMetric::ALL.to_vec()
}

pub fn lm_phase(epochs: usize) -> Phase {
    Phase {
        objective: Objective::Lm,
        quantizer: None,
        epochs,
    }
}

pub fn hf_phase(quantizer: QuantizerConfig, epochs: usize) -> Phase {
    Phase {
        objective: Objective::Hf,
        quantizer: Some(quantizer),
        epochs,
    }
}

/// Plain fine-tuning, prepend-conditioned training, and the append ablation.
pub fn standard_variants(epochs: usize) -> Vec<VariantConfig> {
    let binary = |placement| QuantizerConfig {
        placement,
        ..QuantizerConfig::default()
    };
    vec![
        VariantConfig {
            label: "baseline".into(),
            phases: vec![lm_phase(epochs)],
            condition: Some(Condition::None),
        },
        VariantConfig {
            label: "rlhf-prepend".into(),
            phases: vec![hf_phase(binary(crate::udrl::Placement::Prepend), epochs)],
            condition: Some(Condition::ForceGood),
        },
        VariantConfig {
            label: "rlhf-append".into(),
            phases: vec![hf_phase(binary(crate::udrl::Placement::Append), epochs)],
            condition: Some(Condition::None),
        },
    ]
}

impl ExperimentConfig {
    /// Desk-scale defaults: a 2,000-pair corpus, three variants, one seed.
    pub fn desk(output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            precision: Precision::F64,
            corpus: CorpusConfig {
                n_pairs: 2000,
                control_size: 160,
                ..CorpusConfig::default()
            },
            featurizer: FeaturizerConfig::default(),
            reward: RewardHyper::default(),
            reward_metrics: all_metrics(),
            captioner: CaptionerHyper::default(),
            training: TrainingOptions::default(),
            decode: DecodeConfig::default(),
            eval: EvalConfig::default(),
            variants: standard_variants(8),
            seeds: vec![0],
            output_dir: output_dir.into(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.variants.is_empty() {
            return Err(Error::config("at least one variant is required"));
        }
        if self.reward_metrics.is_empty() {
            return Err(Error::config("at least one reward metric is required"));
        }
        let mut labels = std::collections::BTreeSet::new();
        for v in &self.variants {
            if v.label.is_empty() || !v.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(Error::config(format!(
                    "variant label `{}` must be non-empty and use only letters, digits, '-' or '_'",
                    v.label
                )));
            }
            if !labels.insert(v.label.as_str()) {
                return Err(Error::config(format!("duplicate variant label `{}`", v.label)));
            }
            self.schedule_for(v, 0).validate()?;
            for q in v.phases.iter().filter_map(|p| p.quantizer.as_ref()) {
                if !self.reward_metrics.contains(&q.metric) {
                    return Err(Error::config(format!(
                        "variant `{}` quantizes {} but no reward model is trained for it",
                        v.label, q.metric
                    )));
                }
            }
        }
        self.corpus.validate()?;
        self.captioner.validate()?;
        self.decode.validate()?;
        Ok(())
    }

    /// Digest of everything that determines results (the output location excluded).
    pub fn fingerprint(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("output_dir");
        }
        let digest = Sha256::digest(value.to_string().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn schedule_for(&self, variant: &VariantConfig, seed: u64) -> TrainingSchedule {
        TrainingSchedule {
            phases: variant.phases.clone(),
            batch_size: self.training.batch_size,
            lr: self.training.lr,
            betas: self.training.betas,
            clip_norm: self.training.clip_norm,
            seed: seed.wrapping_add(1),
        }
    }

    pub fn decode_for(&self, variant: &VariantConfig, seed: u64) -> DecodeConfig {
        DecodeConfig {
            condition: variant.condition.clone().unwrap_or_else(|| self.decode.condition.clone()),
            seed,
            ..self.decode.clone()
        }
    }

    pub fn captioner_hyper(&self, seed: u64) -> CaptionerHyper {
        CaptionerHyper {
            seed,
            ..self.captioner.clone()
        }
    }

    pub fn reward_hyper(&self, seed: u64) -> RewardHyper {
        RewardHyper {
            seed,
            ..self.reward.clone()
        }
    }

    /// Distinct quantizers used by hf phases, in first-use order.
    pub fn quantizers(&self) -> Vec<QuantizerConfig> {
        let mut out: Vec<QuantizerConfig> = Vec::new();
        for q in self.variants.iter().flat_map(|v| &v.phases).filter_map(|p| p.quantizer.as_ref()) {
            if !out.contains(q) {
                out.push(q.clone());
            }
        }
        out
    }
}

/// Directory name for an augmented dataset.
pub fn quantizer_key(q: &QuantizerConfig) -> String {
    let scheme = match q.scheme {
        QuantScheme::Binary => "binary",
        QuantScheme::FiveLevel => "five_level",
    };
    let placement = match q.placement {
        crate::udrl::Placement::Prepend => "prepend",
        crate::udrl::Placement::Append => "append",
    };
    let mut key = format!("{}-{scheme}-{placement}", q.metric);
    if let Some(t) = q.fixed_t.filter(|_| q.threshold_strategy == crate::udrl::ThresholdStrategy::FixedValue) {
        key.push_str(&format!("-t{t}"));
    }
    key
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(OutputLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn sha256_prefix(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))[..16].to_string()
}

/// Digest over every record of every split, in order.
pub fn dataset_fingerprint(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    for r in ds.all_records() {
        h.update(serialize_benchmark_record(r).as_bytes());
    }
    hex::encode(h.finalize())[..16].to_string()
}

/// A reference record with its caption replaced by generated text.
pub fn with_generated_caption(rec: &FigureCaptionRecord, caption: &str) -> FigureCaptionRecord {
    let variant = CaptionVariant::from_caption(caption);
    FigureCaptionRecord {
        original: OriginalCaption::Text(caption.to_string()),
        caption_tokens: variant.token.clone(),
        lowercase: variant,
        normalized: None,
        human_feedback: BTreeMap::new(),
        human_feedback_extra: Default::default(),
        profile: None,
        actual_feedback: None,
        ..rec.clone()
    }
}

/// Mean reward-model prediction for each metric over the given captions.
pub fn mean_predicted_feedback<T: Scalar>(
    models: &[RewardModel<T>],
    captions: &[Vec<String>],
) -> Result<BTreeMap<FeedbackMetric, f64>> {
    let featurizer = shared_featurizer(models)?;
    let embeddings: Vec<EmbeddingVector<T>> = captions.iter().map(|c| featurizer.embed(c)).collect();
    let mut out = BTreeMap::new();
    for m in models {
        let mut sum = 0.0;
        for e in &embeddings {
            sum += m.predict_score(e)?.as_f64();
        }
        out.insert(m.metric, sum / embeddings.len().max(1) as f64);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub seed: u64,
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub label: String,
    pub report: MetricReport,
    /// Mean reward-model prediction for the generated test captions.
    pub predicted_feedback: BTreeMap<FeedbackMetric, f64>,
    pub checkpoint: PathBuf,
    pub checkpoint_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    pub dataset_fingerprint: String,
    pub variants: Vec<VariantOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub config_fingerprint: String,
    pub output_dir: PathBuf,
    pub seeds: Vec<SeedOutcome>,
    pub comparison: ComparisonTable,
    pub timings: Vec<StageTiming>,
}

impl RunArtifacts {
    pub fn reports_for(&self, label: &str) -> Vec<&MetricReport> {
        self.seeds
            .iter()
            .flat_map(|s| s.variants.iter().filter(|v| v.label == label).map(|v| &v.report))
            .collect()
    }
}

/// Reads, validates and runs a configuration file.
pub fn run_experiment(config_path: &Path) -> Result<RunArtifacts> {
    let cfg = ExperimentConfig::load(config_path)?;
    run_config(&cfg)
}

pub fn run_config(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    match cfg.precision {
        Precision::F32 => run_with::<f32>(cfg),
        Precision::F64 => run_with::<f64>(cfg),
    }
}

struct Timer<'a> {
    seed: u64,
    timings: &'a mut Vec<StageTiming>,
}

impl Timer<'_> {
    fn stage<R>(&mut self, name: &str, f: impl FnOnce() -> Result<R>) -> Result<R> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(name))?;
        let seconds = start.elapsed().as_secs_f64();
        log::info!("seed {}: stage {name} finished in {seconds:.1}s", self.seed);
        self.timings.push(StageTiming {
            seed: self.seed,
            stage: name.to_string(),
            seconds,
        });
        Ok(out)
    }
}

fn run_with<T: Scalar>(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let out = cfg.resolved_output_dir();
    let _lock = OutputLock::acquire(&out)?;
    let fingerprint = cfg.fingerprint();
    write_text(&out.join("config.json"), &cfg.to_json()?)?;

    let mut timings = Vec::new();
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let dir = out.join(format!("seed-{seed}"));
        let mut timer = Timer {
            seed,
            timings: &mut timings,
        };
        seeds.push(run_seed::<T>(cfg, seed, &dir, &fingerprint, &mut timer)?);
    }

    let groups: Vec<(String, Vec<MetricReport>)> = cfg
        .variants
        .iter()
        .map(|v| {
            let reports = seeds
                .iter()
                .flat_map(|s| s.variants.iter().filter(|o| o.label == v.label))
                .map(|o| o.report.clone())
                .collect();
            (v.label.clone(), reports)
        })
        .collect();
    let comparison = compare_runs(&groups).map_err(|e| e.in_stage("report"))?;
    write_comparison(&out, &comparison)?;
    write_text(&out.join("timings.json"), &serde_json::to_string_pretty(&timings)?)?;

    Ok(RunArtifacts {
        config_fingerprint: fingerprint,
        output_dir: out,
        seeds,
        comparison,
        timings,
    })
}

pub fn write_comparison(dir: &Path, table: &ComparisonTable) -> Result<()> {
    write_text(&dir.join("comparison.txt"), &table.to_text())?;
    write_text(&dir.join("comparison.csv"), &table.to_csv())?;
    let mut json = serde_json::to_string_pretty(table)?;
    json.push('\n');
    write_text(&dir.join("comparison.json"), &json)
}

fn run_seed<T: Scalar>(
    cfg: &ExperimentConfig,
    seed: u64,
    dir: &Path,
    config_fingerprint: &str,
    timer: &mut Timer<'_>,
) -> Result<SeedOutcome> {
    let ds = timer.stage("generate-data", || {
        let ds = generate_corpus(&cfg.corpus, seed)?;
        export_dataset(&ds, &dir.join("data"))?;
        Ok(ds)
    })?;
    let dataset_fp = dataset_fingerprint(&ds);

    let reward_models: Vec<RewardModel<T>> = timer.stage("train-reward", || {
        let featurizer = build_featurizer(&cfg.featurizer)?;
        let models = train_reward_models::<T>(&ds.control_set, &featurizer, &cfg.reward_metrics, &cfg.reward_hyper(seed))?;
        for m in &models {
            write_text(&dir.join("reward").join(format!("{}.json", m.metric)), &m.to_json()?)?;
            write_text(&dir.join("reward").join(format!("{}_log.csv", m.metric)), &m.training_log_csv())?;
        }
        Ok(models)
    })?;

    let scored = timer.stage("score", || {
        let scored = score_dataset(&reward_models, &ds)?;
        export_dataset(&scored, &dir.join("scored"))?;
        Ok(scored)
    })?;

    let training_data = timer.stage("augment", || {
        let mut data = vec![scored.clone()];
        for q in cfg.quantizers() {
            let (aug, quantizer) = augment_dataset(&scored, &q)?;
            let adir = dir.join("augmented").join(quantizer_key(&q));
            export_dataset(&aug, &adir)?;
            write_text(&adir.join("quantizer.json"), &serde_json::to_string_pretty(&quantizer)?)?;
            data.push(aug);
        }
        Ok(data)
    })?;

    let models: Vec<(CaptionerModel<T>, PathBuf, String)> = timer.stage("train-captioner", || {
        let vocab = build_vocab(&ds, &default_specials())?;
        cfg.variants
            .iter()
            .map(|v| {
                let mut model = CaptionerModel::<T>::new(vocab.clone(), cfg.captioner_hyper(seed))?;
                train(&mut model, &training_data, &cfg.schedule_for(v, seed))
                    .map_err(|e| e.in_stage(format!("train-captioner/{}", v.label)))?;
                let json = model.to_json()?;
                let path = dir.join("captioner").join(format!("{}.json", v.label));
                write_text(&path, &json)?;
                write_text(
                    &dir.join("captioner").join(format!("{}_history.csv", v.label)),
                    &history_csv(&model),
                )?;
                Ok((model, path, sha256_prefix(json.as_bytes())))
            })
            .collect()
    })?;

    let variants = timer.stage("evaluate", || {
        cfg.variants
            .iter()
            .zip(&models)
            .map(|(v, (model, path, hash))| {
                let decode = cfg.decode_for(v, seed);
                let generated = generate_captions(model, &scored.test, &decode)?;
                let texts: Vec<(String, String)> =
                    generated.iter().map(|(id, t)| (id.clone(), detokenize(t))).collect();
                let mut report = evaluate_corpus(&v.label, &texts, &ds.test, &cfg.eval)?;
                report.checkpoint = Some(hash.clone());
                let records: Vec<FigureCaptionRecord> = ds
                    .test
                    .iter()
                    .zip(&texts)
                    .map(|(r, (_, t))| with_generated_caption(r, t))
                    .collect();
                export_records(&dir.join("generated"), &v.label, &records)?;
                let captions: Vec<Vec<String>> = generated.into_iter().map(|(_, t)| t).collect();
                let predicted = mean_predicted_feedback(&reward_models, &captions)?;
                let rdir = dir.join("reports");
                write_text(&rdir.join(format!("{}.json", v.label)), &report.to_json()?)?;
                write_text(&rdir.join(format!("{}.csv", v.label)), &report.to_csv())?;
                write_text(&rdir.join(format!("{}_examples.csv", v.label)), &report.per_example_csv())?;
                write_text(
                    &rdir.join(format!("{}_predicted_feedback.json", v.label)),
                    &serde_json::to_string_pretty(&predicted)?,
                )?;
                Ok(VariantOutcome {
                    label: v.label.clone(),
                    report,
                    predicted_feedback: predicted,
                    checkpoint: path.clone(),
                    checkpoint_hash: hash.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let manifest = serde_json::json!({
        "seed": seed,
        "config_fingerprint": config_fingerprint,
        "dataset_fingerprint": dataset_fp,
        "checkpoints": variants.iter().map(|v| (v.label.clone(), v.checkpoint_hash.clone())).collect::<BTreeMap<_, _>>(),
    });
    write_text(&dir.join("run_manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;

    Ok(SeedOutcome {
        seed,
        dir: dir.to_path_buf(),
        dataset_fingerprint: dataset_fp,
        variants,
    })
}

pub fn history_csv<T: Scalar>(model: &CaptionerModel<T>) -> String {
    let mut out = String::from("phase,objective,epoch,train_loss,val_loss\n");
    for h in &model.history {
        out.push_str(&format!(
            "{},{},{},{},{:.6}\n",
            h.phase,
            h.objective,
            h.epoch,
            h.train_loss.map_or_else(String::new, |l| format!("{l:.6}")),
            h.val_loss
        ));
    }
    out
}

/// Report files found under `<dir>/seed-*/reports/<label>.json`, grouped by label
/// in first-seen order.
pub fn collect_reports(dirs: &[PathBuf]) -> Result<Vec<(String, Vec<MetricReport>)>> {
    let mut groups: Vec<(String, Vec<MetricReport>)> = Vec::new();
    let mut files = Vec::new();
    for d in dirs {
        let mut seed_dirs: Vec<PathBuf> = fs::read_dir(d)
            .map_err(|e| Error::io(d, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("reports").is_dir())
            .collect();
        if d.join("reports").is_dir() {
            seed_dirs.push(d.clone());
        }
        seed_dirs.sort();
        for sd in seed_dirs {
            let mut reports: Vec<PathBuf> = fs::read_dir(sd.join("reports"))
                .map_err(|e| Error::io(sd.join("reports"), e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension().is_some_and(|x| x == "json")
                        && !p.to_string_lossy().ends_with("_predicted_feedback.json")
                })
                .collect();
            reports.sort();
            files.extend(reports);
        }
    }
    for f in files {
        let text = fs::read_to_string(&f).map_err(|e| Error::io(&f, e))?;
        let r: MetricReport = serde_json::from_str(&text)?;
        match groups.iter_mut().find(|(l, _)| *l == r.label) {
            Some((_, v)) => v.push(r),
            None => groups.push((r.label.clone(), vec![r])),
        }
    }
    if groups.is_empty() {
        return Err(Error::Empty("no metric reports found".into()));
    }
    Ok(groups)
}

/// True while a lock file is present in `dir`.
pub fn is_locked(dir: &Path) -> bool {
    File::open(dir.join(LOCK_FILE)).is_ok()
}
