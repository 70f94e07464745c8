use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use figcaps_core::captioner::{
    build_vocab, default_specials, generate_captions, train, CaptionerModel, Condition, DecodeConfig,
    DecodeStrategy, Objective, Phase,
};
use figcaps_core::corpus::text::detokenize;
use figcaps_core::corpus::{
    export_dataset, export_records, generate_corpus, load_dataset, Dataset, Provenance, Split,
};
use figcaps_core::embedding::build_featurizer;
use figcaps_core::experiment::{
    collect_reports, compare_runs, history_csv, mean_predicted_feedback, quantizer_key, run_config,
    sha256_prefix, with_generated_caption, write_comparison, write_text, ExperimentConfig, Precision,
    VariantConfig,
};
use figcaps_core::metrics::evaluate_corpus;
use figcaps_core::reward::{score_dataset, train_reward_models, RewardModel};
use figcaps_core::udrl::{augment_dataset, Placement, QuantScheme, QuantizerConfig, ThresholdStrategy};
use figcaps_core::{Error, FeedbackMetric, Result, Scalar};

#[derive(Parser)]
#[command(name = "figcaps", version, about = "Feedback-conditioned figure caption experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON); built-in desk defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed; defaults to the first seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Binary,
    #[value(name = "five_level")]
    FiveLevel,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    Prepend,
    Append,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Lm,
    Hf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Greedy,
    Nucleus,
}

#[derive(Args, Clone)]
struct QuantArgs {
    /// Feedback metric the control tokens encode.
    #[arg(long, default_value = "helpfulness")]
    metric: FeedbackMetric,
    #[arg(long, value_enum, default_value = "binary")]
    scheme: SchemeArg,
    #[arg(long, value_enum, default_value = "prepend")]
    placement: PlacementArg,
    /// Fixed binary threshold; the train-split median is used when omitted.
    #[arg(long)]
    threshold: Option<f64>,
}

impl QuantArgs {
    fn quantizer(&self) -> QuantizerConfig {
        QuantizerConfig {
            scheme: match self.scheme {
                SchemeArg::Binary => QuantScheme::Binary,
                SchemeArg::FiveLevel => QuantScheme::FiveLevel,
            },
            threshold_strategy: if self.threshold.is_some() {
                ThresholdStrategy::FixedValue
            } else {
                ThresholdStrategy::MedianOfTrain
            },
            fixed_t: self.threshold,
            placement: match self.placement {
                PlacementArg::Prepend => Placement::Prepend,
                PlacementArg::Append => Placement::Append,
            },
            metric: self.metric,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus in the benchmark layout.
    GenerateData(Common),
    /// Import a benchmark-layout directory, keeping records in index order.
    IngestBenchmark {
        #[command(flatten)]
        common: Common,
        /// Directory containing Caption-All/ and List-of-Files-for-Each-Experiments/.
        #[arg(long)]
        input: PathBuf,
    },
    /// Train reward models on the annotated control set.
    TrainReward {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Train only this metric; all configured metrics otherwise.
        #[arg(long)]
        metric: Option<FeedbackMetric>,
    },
    /// Attach predicted feedback scores to every record.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Directory of reward model JSON files.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        metric: Option<FeedbackMetric>,
    },
    /// Quantize scores into control tokens and write augmented captions.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        quant: QuantArgs,
    },
    /// Train a captioner with the plain or feedback-conditioned objective.
    TrainCaptioner {
        #[command(flatten)]
        common: Common,
        /// Dataset directories: the plain data first, then any augmented copies.
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "lm")]
        objective: ObjectiveArg,
        #[command(flatten)]
        quant: QuantArgs,
        #[arg(long, default_value_t = 8)]
        epochs: usize,
    },
    /// Generate captions for a split and score them against the references.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// none, force_good, or a control token such as <|bad|>.
        #[arg(long, default_value = "force_good")]
        condition: String,
        #[arg(long, value_enum, default_value = "greedy")]
        strategy: StrategyArg,
        #[arg(long, default_value_t = 0.9)]
        top_p: f64,
        #[arg(long, default_value = "model")]
        label: String,
    },
    /// Build a comparison table from metric reports.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directories (containing seed-*/reports/) or report directories.
        #[arg(long, required = true)]
        runs: Vec<PathBuf>,
    },
    /// Run the full pipeline for every configured seed and variant.
    Run(Common),
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    match &common.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::desk(&common.out)),
    }
}

fn seed_of(common: &Common, cfg: &ExperimentConfig) -> u64 {
    common.seed.unwrap_or(cfg.seeds[0])
}

fn parse_condition(s: &str) -> Condition {
    match s {
        "none" => Condition::None,
        "force_good" => Condition::ForceGood,
        tok => Condition::ForceToken(tok.to_string()),
    }
}

fn scalar_of(json: &str) -> Result<String> {
    let v: serde_json::Value = serde_json::from_str(json)?;
    v.get("scalar")
        .and_then(|s| s.as_str())
        .map(str::to_string)
        .ok_or_else(|| Error::schema("scalar", "checkpoint does not name its precision"))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn generate_data(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let ds = generate_corpus(&cfg.corpus, seed_of(common, &cfg))?;
    export_dataset(&ds, &common.out)?;
    println!(
        "wrote {} records ({} control) to {}",
        ds.len(),
        ds.control_set.len(),
        common.out.display()
    );
    Ok(())
}

fn ingest_benchmark(common: &Common, input: &Path) -> Result<()> {
    let mut ds = load_dataset(input)?;
    ds.provenance = Provenance::Benchmark;
    for r in &mut ds.control_set {
        if r.actual_feedback.is_none() {
            r.actual_feedback = r.feedback();
        }
    }
    export_dataset(&ds, &common.out)?;
    println!("ingested {} records into {}", ds.len(), common.out.display());
    Ok(())
}

fn train_reward_cmd<T: Scalar>(cfg: &ExperimentConfig, seed: u64, data: &Path, metrics: &[FeedbackMetric], out: &Path) -> Result<()> {
    let ds = load_dataset(data)?;
    let featurizer = build_featurizer(&cfg.featurizer)?;
    let models: Vec<RewardModel<T>> = train_reward_models(&ds.control_set, &featurizer, metrics, &cfg.reward_hyper(seed))?;
    for m in &models {
        write_text(&out.join(format!("{}.json", m.metric)), &m.to_json()?)?;
        write_text(&out.join(format!("{}_log.csv", m.metric)), &m.training_log_csv())?;
        println!("trained {} reward model -> {}", m.metric, out.join(format!("{}.json", m.metric)).display());
    }
    Ok(())
}

fn load_reward_models<T: Scalar>(dir: &Path, metric: Option<FeedbackMetric>) -> Result<Vec<RewardModel<T>>> {
    let mut models = Vec::new();
    for m in FeedbackMetric::ALL {
        if metric.is_some_and(|x| x != m) {
            continue;
        }
        let path = dir.join(format!("{m}.json"));
        if path.exists() {
            models.push(RewardModel::<T>::from_json(&read(&path)?)?);
        }
    }
    if models.is_empty() {
        return Err(Error::Empty(format!("no reward models found in {}", dir.display())));
    }
    Ok(models)
}

fn score_cmd<T: Scalar>(data: &Path, models_dir: &Path, metric: Option<FeedbackMetric>, out: &Path) -> Result<()> {
    let ds = load_dataset(data)?;
    let models = load_reward_models::<T>(models_dir, metric)?;
    let scored = score_dataset(&models, &ds)?;
    export_dataset(&scored, out)?;
    println!("scored {} records with {} model(s) -> {}", scored.len(), models.len(), out.display());
    Ok(())
}

fn augment_cmd(data: &Path, q: &QuantizerConfig, out: &Path) -> Result<()> {
    let ds = load_dataset(data)?;
    let (aug, quantizer) = augment_dataset(&ds, q)?;
    export_dataset(&aug, out)?;
    write_text(&out.join("quantizer.json"), &serde_json::to_string_pretty(&quantizer)?)?;
    println!("augmented {} records ({}) -> {}", aug.len(), quantizer_key(q), out.display());
    Ok(())
}

fn train_captioner_cmd<T: Scalar>(
    cfg: &ExperimentConfig,
    seed: u64,
    data: &[Dataset],
    phase: Phase,
    out: &Path,
) -> Result<()> {
    let vocab = build_vocab(&data[0], &default_specials())?;
    let mut model = CaptionerModel::<T>::new(vocab, cfg.captioner_hyper(seed))?;
    let variant = VariantConfig {
        label: "cli".into(),
        phases: vec![phase],
        condition: None,
    };
    train(&mut model, data, &cfg.schedule_for(&variant, seed))?;
    let json = model.to_json()?;
    write_text(&out.join("checkpoint.json"), &json)?;
    write_text(&out.join("history.csv"), &history_csv(&model))?;
    println!(
        "checkpoint {} -> {}",
        sha256_prefix(json.as_bytes()),
        out.join("checkpoint.json").display()
    );
    Ok(())
}

struct EvalRequest<'a> {
    cfg: &'a ExperimentConfig,
    checkpoint_json: &'a str,
    data: &'a Dataset,
    split: Split,
    decode: DecodeConfig,
    label: &'a str,
    out: &'a Path,
}

fn evaluate_cmd<T: Scalar>(req: EvalRequest<'_>) -> Result<()> {
    let model = CaptionerModel::<T>::from_json(req.checkpoint_json)?;
    let refs = req.data.split(req.split);
    let generated = generate_captions(&model, refs, &req.decode)?;
    let texts: Vec<(String, String)> = generated.iter().map(|(id, t)| (id.clone(), detokenize(t))).collect();
    let mut report = evaluate_corpus(req.label, &texts, refs, &req.cfg.eval)?;
    report.checkpoint = Some(sha256_prefix(req.checkpoint_json.as_bytes()));
    let records: Vec<_> = refs.iter().zip(&texts).map(|(r, (_, t))| with_generated_caption(r, t)).collect();
    export_records(&req.out.join("generated"), req.label, &records)?;
    write_text(&req.out.join(format!("{}.json", req.label)), &report.to_json()?)?;
    write_text(&req.out.join(format!("{}.csv", req.label)), &report.to_csv())?;
    write_text(&req.out.join(format!("{}_examples.csv", req.label)), &report.per_example_csv())?;
    if let Ok(models) = load_reward_models::<T>(&req.out.join("reward"), None) {
        let captions: Vec<Vec<String>> = generated.into_iter().map(|(_, t)| t).collect();
        let predicted = mean_predicted_feedback(&models, &captions)?;
        write_text(
            &req.out.join(format!("{}_predicted_feedback.json", req.label)),
            &serde_json::to_string_pretty(&predicted)?,
        )?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateData(common) => generate_data(&common),
        Command::IngestBenchmark { common, input } => ingest_benchmark(&common, &input),
        Command::TrainReward { common, data, metric } => {
            let cfg = load_config(&common)?;
            let metrics = metric.map_or_else(|| cfg.reward_metrics.clone(), |m| vec![m]);
            let seed = seed_of(&common, &cfg);
            match cfg.precision {
                Precision::F32 => train_reward_cmd::<f32>(&cfg, seed, &data, &metrics, &common.out),
                Precision::F64 => train_reward_cmd::<f64>(&cfg, seed, &data, &metrics, &common.out),
            }
        }
        Command::Score {
            common,
            data,
            models,
            metric,
        } => {
            let cfg = load_config(&common)?;
            match cfg.precision {
                Precision::F32 => score_cmd::<f32>(&data, &models, metric, &common.out),
                Precision::F64 => score_cmd::<f64>(&data, &models, metric, &common.out),
            }
        }
        Command::Augment { common, data, quant } => {
            let q = quant.quantizer();
            q.validate()?;
            augment_cmd(&data, &q, &common.out)
        }
        Command::TrainCaptioner {
            common,
            data,
            objective,
            quant,
            epochs,
        } => {
            let cfg = load_config(&common)?;
            let seed = seed_of(&common, &cfg);
            let datasets = data.iter().map(|d| load_dataset(d)).collect::<Result<Vec<_>>>()?;
            let phase = match objective {
                ObjectiveArg::Lm => Phase {
                    objective: Objective::Lm,
                    quantizer: None,
                    epochs,
                },
                ObjectiveArg::Hf => Phase {
                    objective: Objective::Hf,
                    quantizer: Some(quant.quantizer()),
                    epochs,
                },
            };
            match cfg.precision {
                Precision::F32 => train_captioner_cmd::<f32>(&cfg, seed, &datasets, phase, &common.out),
                Precision::F64 => train_captioner_cmd::<f64>(&cfg, seed, &datasets, phase, &common.out),
            }
        }
        Command::Evaluate {
            common,
            checkpoint,
            data,
            split,
            condition,
            strategy,
            top_p,
            label,
        } => {
            let cfg = load_config(&common)?;
            let json = read(&checkpoint)?;
            let ds = load_dataset(&data)?;
            let req = EvalRequest {
                cfg: &cfg,
                checkpoint_json: &json,
                data: &ds,
                split,
                decode: DecodeConfig {
                    strategy: match strategy {
                        StrategyArg::Greedy => DecodeStrategy::Greedy,
                        StrategyArg::Nucleus => DecodeStrategy::Nucleus,
                    },
                    top_p,
                    condition: parse_condition(&condition),
                    max_len: cfg.decode.max_len,
                    seed: seed_of(&common, &cfg),
                },
                label: &label,
                out: &common.out,
            };
            match scalar_of(&json)?.as_str() {
                "f32" => evaluate_cmd::<f32>(req),
                _ => evaluate_cmd::<f64>(req),
            }
        }
        Command::Report { common, runs } => {
            let groups = collect_reports(&runs)?;
            let table = compare_runs(&groups)?;
            write_comparison(&common.out, &table)?;
            print!("{}", table.to_text());
            Ok(())
        }
        Command::Run(common) => {
            let mut cfg = load_config(&common)?;
            cfg.output_dir = common.out.clone();
            if let Some(s) = common.seed {
                cfg.seeds = vec![s];
            }
            let artifacts = run_config(&cfg)?;
            print!("{}", artifacts.comparison.to_text());
            println!("artifacts in {}", artifacts.output_dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({
                "status": "error",
                "kind": e.kind(),
                "message": e.to_string(),
            });
            eprintln!("{line}");
            log::debug!("{e:?}");
            ExitCode::FAILURE
        }
    }
}
