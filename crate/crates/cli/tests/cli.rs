use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use figcaps_core::captioner::CaptionerHyper;
use figcaps_core::corpus::{load_dataset, CorpusConfig};
use figcaps_core::experiment::{standard_variants, ExperimentConfig};
use figcaps_core::reward::RewardHyper;
use figcaps_core::udrl::{ControlToken, QuantScheme};
use figcaps_core::FeedbackMetric;

fn figcaps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_figcaps")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Writes a tiny configuration that trains in seconds.
fn tiny_config(dir: &Path) -> PathBuf {
    let mut cfg = ExperimentConfig::desk(dir.join("unused"));
    cfg.corpus = CorpusConfig {
        n_pairs: 300,
        control_size: 24,
        ..CorpusConfig::default()
    };
    cfg.reward = RewardHyper {
        hidden: 8,
        epochs: 5,
        ..RewardHyper::default()
    };
    cfg.reward_metrics = vec![FeedbackMetric::Helpfulness];
    cfg.captioner = CaptionerHyper {
        embed_dim: 8,
        hidden: 16,
        ..CaptionerHyper::default()
    };
    cfg.variants = standard_variants(1);
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path
}

/// generate-data, train-reward and score into `dir/{data,reward,scored}`.
fn scored_data(dir: &Path, config: &Path) -> PathBuf {
    let (data, reward, scored) = (dir.join("data"), dir.join("reward"), dir.join("scored"));
    ok(&figcaps(&["generate-data", "--config", s(config), "--out", s(&data)]));
    ok(&figcaps(&["train-reward", "--config", s(config), "--data", s(&data), "--out", s(&reward)]));
    assert!(reward.join("helpfulness.json").exists());
    ok(&figcaps(&[
        "score", "--config", s(config), "--data", s(&data), "--models", s(&reward), "--out", s(&scored),
    ]));
    scored
}

fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not machine-parsable: {line}"))
}

#[test]
fn augment_five_level_writes_five_level_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let scored = scored_data(dir.path(), &config);
    let aug = dir.path().join("aug");
    ok(&figcaps(&[
        "augment", "--config", s(&config), "--data", s(&scored), "--scheme", "five_level", "--out", s(&aug),
    ]));
    assert!(aug.join("quantizer.json").exists());
    let ds = load_dataset(&aug).unwrap();
    for r in &ds.train {
        let tok = r.control_token(FeedbackMetric::Helpfulness).expect("token written");
        let parsed = ControlToken::from_text(tok).expect("a control token");
        assert_eq!(parsed.scheme(), QuantScheme::FiveLevel);
        let prepended = r.human_feedback[&FeedbackMetric::Helpfulness].caption_prepend.as_deref().unwrap();
        assert!(prepended.starts_with(tok));
    }
}

#[test]
fn hf_training_on_unaugmented_data_is_a_scheme_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let scored = scored_data(dir.path(), &config);
    let out = figcaps(&[
        "train-captioner", "--config", s(&config), "--data", s(&scored), "--objective", "hf", "--epochs", "1",
        "--out", s(&dir.path().join("cap")),
    ]);
    assert!(!out.status.success());
    let err = error_line(&out);
    assert_eq!(err["kind"], "scheme_mismatch");
    assert!(err["message"].as_str().unwrap().contains("scheme mismatch"));
    assert!(!dir.path().join("cap").join("checkpoint.json").exists());
}

#[test]
fn train_then_evaluate_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let scored = scored_data(dir.path(), &config);
    let aug = dir.path().join("aug");
    ok(&figcaps(&["augment", "--config", s(&config), "--data", s(&scored), "--out", s(&aug)]));
    let cap = dir.path().join("cap");
    ok(&figcaps(&[
        "train-captioner", "--config", s(&config), "--data", s(&scored), "--data", s(&aug), "--objective", "hf",
        "--epochs", "1", "--out", s(&cap),
    ]));
    assert!(cap.join("history.csv").exists());
    let reports = dir.path().join("reports");
    let eval = figcaps(&[
        "evaluate", "--config", s(&config), "--checkpoint", s(&cap.join("checkpoint.json")), "--data", s(&scored),
        "--label", "hf", "--out", s(&reports),
    ]);
    ok(&eval);
    assert!(String::from_utf8_lossy(&eval.stdout).contains("ROUGE-L"));
    for f in ["hf.json", "hf.csv", "hf_examples.csv"] {
        assert!(reports.join(f).exists(), "{f}");
    }
    assert!(reports
        .join("generated/List-of-Files-for-Each-Experiments/First-Sentence/hf/file_idx.json")
        .exists());

    let bad = figcaps(&[
        "evaluate", "--config", s(&config), "--checkpoint", s(&cap.join("checkpoint.json")), "--data", s(&scored),
        "--condition", "<|nonsense|>", "--out", s(&dir.path().join("bad")),
    ]);
    assert!(!bad.status.success());
    assert_eq!(error_line(&bad)["kind"], "vocab");
}

#[test]
fn run_then_report_writes_a_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let run = dir.path().join("run");
    ok(&figcaps(&["run", "--config", s(&config), "--seed", "3", "--out", s(&run)]));
    assert!(run.join("seed-3/reports/baseline.json").exists());
    assert!(run.join("comparison.txt").exists());
    let cmp = dir.path().join("cmp");
    let out = figcaps(&["report", "--runs", s(&run), "--out", s(&cmp)]);
    ok(&out);
    for f in ["comparison.txt", "comparison.csv", "comparison.json"] {
        assert!(cmp.join(f).exists(), "{f}");
    }
    let text = std::fs::read_to_string(cmp.join("comparison.txt")).unwrap();
    assert!(text.contains("rlhf-prepend") && text.contains("gain rlhf-prepend"));
}

#[test]
fn unknown_config_key_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    v["lerning_rate"] = serde_json::json!(0.1);
    std::fs::write(&config, v.to_string()).unwrap();
    let out_dir = dir.path().join("run");
    let out = figcaps(&["run", "--config", s(&config), "--out", s(&out_dir)]);
    assert!(!out.status.success());
    let err = error_line(&out);
    assert_eq!(err["kind"], "config");
    assert!(err["message"].as_str().unwrap().contains("lerning_rate"));
    assert!(!out_dir.exists());
}

#[test]
fn usage_errors_exit_nonzero() {
    let out = figcaps(&["augment", "--data", "x", "--out", "y", "--scheme", "seven_level"]);
    assert!(!out.status.success());
}
