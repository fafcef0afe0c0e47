//! One function per subcommand. Every artifact goes under `run.out`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use tweetact_core::data::{
    generate_synthetic, prepare as prepare_corpus, read_jsonl, read_records, read_records_lenient, write_jsonl,
    Dictionary, Embeddings, Encoder, ExampleRecord, LabelRules, PrepareSummary,
};
use tweetact_core::gradcheck::{check_architecture, op_cases, GradCheckReport};
use tweetact_core::model::Checkpoint;
use tweetact_core::{
    evaluate, fit, profile_records, Architecture, DistributionRecord, EvalReport, Model, ProfileReport, TrainConfig,
};

use crate::config::RunConfig;
use crate::log::Logger;

pub const RAW_FILE: &str = "raw.jsonl";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const DEV_FILE: &str = "dev.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const WEIGHTS_FILE: &str = "class_weights.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_LOG: &str = "train.log";
pub const DEV_REPORT: &str = "dev_report.json";
pub const TEST_REPORT: &str = "test_report.json";
pub const EVAL_REPORT: &str = "eval.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const PROFILE_JSON: &str = "profile.json";
pub const PROFILE_CSV: &str = "profile.csv";
pub const GRADCHECK_FILE: &str = "gradcheck.json";

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let p = p.as_deref().ok_or_else(|| anyhow!("{key} is not set"))?;
    if !p.exists() {
        bail!("{key}: {} does not exist", p.display());
    }
    Ok(p)
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let out = cfg.run.out.as_path();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareOutput {
    #[serde(flatten)]
    pub summary: PrepareSummary,
    pub malformed: usize,
}

pub fn prepare(cfg: &RunConfig) -> Result<PrepareOutput> {
    let input = required(&cfg.prepare.input, "prepare.input")?;
    let rules = match &cfg.prepare.rules {
        Some(_) => LabelRules::load(required(&cfg.prepare.rules, "prepare.rules")?)?,
        None => LabelRules::default(),
    };
    let out = out_dir(cfg)?;
    let mut log = Logger::stderr();
    let (records, bad) = if cfg.prepare.strict {
        (read_records(input)?, Vec::new())
    } else {
        read_records_lenient(input)?
    };
    for e in &bad {
        log.log("skip", &[("error", e)]);
    }
    let p = prepare_corpus(records, &rules, Dictionary::builtin(), cfg.prepare.history_len, cfg.run.seed)?;
    write_jsonl(&out.join(CORPUS_FILE), &p.records)?;
    write_jsonl(&out.join(TRAIN_FILE), &p.examples(&p.split.train))?;
    write_jsonl(&out.join(DEV_FILE), &p.examples(&p.split.dev))?;
    write_jsonl(&out.join(TEST_FILE), &p.examples(&p.split.test))?;
    write_json(&out.join(WEIGHTS_FILE), &p.class_weights)?;
    let result = PrepareOutput {
        summary: p.summary,
        malformed: bad.len(),
    };
    write_json(&out.join(SUMMARY_FILE), &result)?;
    let s = &result.summary;
    log.log(
        "prepared",
        &[
            ("input", &s.input),
            ("kept", &s.kept),
            ("duplicates", &s.duplicates),
            ("malformed", &result.malformed),
            ("train", &s.train),
            ("dev", &s.dev),
            ("test", &s.test),
        ],
    );
    Ok(result)
}

fn read_examples(path: &Path) -> Result<Vec<ExampleRecord>> {
    if path.exists() {
        Ok(read_jsonl(path)?)
    } else {
        Ok(Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub best_epoch: usize,
    pub dev: Option<EvalReport>,
    pub test: Option<EvalReport>,
}

pub fn train(cfg: &RunConfig) -> Result<TrainOutput> {
    let data = required(&cfg.train.data, "train.data")?;
    let train_path = data.join(TRAIN_FILE);
    if !train_path.exists() {
        bail!("train.data: {} does not exist", train_path.display());
    }
    let embeddings = match &cfg.train.embeddings {
        Some(_) => Some(Embeddings::load(required(&cfg.train.embeddings, "train.embeddings")?)?),
        None => None,
    };
    let spec = cfg.model_spec();
    spec.validate()?;
    let class_weights = if cfg.train.class_weights.is_empty() {
        let prepared: Option<Vec<f64>> = read_json(&data.join(WEIGHTS_FILE))?;
        prepared.ok_or_else(|| {
            anyhow!("no class weights: some class is missing from the training split; set train.class_weights")
        })?
    } else {
        cfg.train.class_weights.clone()
    };
    let tc = TrainConfig {
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        lr: cfg.train.lr,
        seed: cfg.run.seed,
        class_weights,
    };
    tc.validate()?;
    let out = out_dir(cfg)?;

    let train_recs: Vec<ExampleRecord> = read_jsonl(&train_path)?;
    let enc = Encoder::fit(&train_recs, cfg.train.min_count);
    let train_set = enc.encode_all(&train_recs)?;
    let dev_set = enc.encode_all(&read_examples(&data.join(DEV_FILE))?)?;
    let test_set = enc.encode_all(&read_examples(&data.join(TEST_FILE))?)?;

    let mut log = Logger::with_file(fs::File::create(out.join(TRAIN_LOG))?);
    let mut model = Model::build(spec, enc.content.len(), enc.pos.len())?;
    if let Some(e) = &embeddings {
        let table = model
            .store
            .by_name_mut("emb.content")
            .ok_or_else(|| anyhow!("model has no content embedding table"))?;
        let hits = e.apply(table, &enc.content)?;
        log.log("embeddings", &[("hits", &hits), ("vocab", &enc.content.len())]);
    }
    log.log(
        "train_start",
        &[
            ("architecture", &model.spec().architecture.name()),
            ("features", &model.spec().features),
            ("train", &train_set.len()),
            ("dev", &dev_set.len()),
            ("params", &model.store.num_values()),
        ],
    );
    let outcome = fit(model, &tc, &train_set, &dev_set, |l| {
        let na = || "na".to_string();
        log.log(
            "epoch",
            &[
                ("epoch", &l.epoch),
                ("loss", &l.loss),
                ("dev_accuracy", &l.dev_accuracy.map_or_else(na, |v| v.to_string())),
                ("dev_weighted_f1", &l.dev_weighted_f1.map_or_else(na, |v| v.to_string())),
            ],
        );
    })?;
    Checkpoint::from_model(&outcome.model, &enc.content, &enc.pos)?.save(&out.join(MODEL_FILE))?;
    let mut result = TrainOutput {
        best_epoch: outcome.best_epoch,
        dev: None,
        test: None,
    };
    for (set, file, slot) in [(&dev_set, DEV_REPORT, &mut result.dev), (&test_set, TEST_REPORT, &mut result.test)] {
        if !set.is_empty() {
            let r = evaluate(&outcome.model, set)?;
            write_json(&out.join(file), &r)?;
            *slot = Some(r);
        }
    }
    let fmt = |r: &Option<EvalReport>| r.as_ref().map_or("na".to_string(), |r| r.accuracy.to_string());
    log.log(
        "train_done",
        &[
            ("best_epoch", &outcome.best_epoch),
            ("dev_accuracy", &fmt(&result.dev)),
            ("test_accuracy", &fmt(&result.test)),
        ],
    );
    Ok(result)
}

/// Loads a checkpoint and checks it against a configured model section.
fn load_checkpoint(cfg: &RunConfig, path: &Path) -> Result<(Model, Encoder)> {
    let ck = Checkpoint::load(path)?;
    if let Some(expected) = &cfg.model {
        let expected = tweetact_core::ModelSpec {
            seed: ck.spec.seed,
            ..expected.clone()
        };
        if expected != ck.spec {
            return Err(tweetact_core::Error::Compatibility(format!(
                "configured model {} ({}) differs from checkpoint {} ({})",
                expected.architecture.name(),
                expected.features,
                ck.spec.architecture.name(),
                ck.spec.features
            ))
            .into());
        }
    }
    let model = ck.to_model()?;
    Ok((
        model,
        Encoder {
            content: ck.content_vocab,
            pos: ck.pos_vocab,
        },
    ))
}

pub fn eval(cfg: &RunConfig) -> Result<EvalReport> {
    let model_path = required(&cfg.eval.model, "eval.model")?;
    let split = required(&cfg.eval.split, "eval.split")?;
    let out = out_dir(cfg)?;
    let (model, enc) = load_checkpoint(cfg, model_path)?;
    let examples = enc.encode_all(&read_jsonl::<ExampleRecord>(split)?)?;
    let report = evaluate(&model, &examples)?;
    write_json(&out.join(EVAL_REPORT), &report)?;
    Logger::stderr().log(
        "eval",
        &[
            ("examples", &report.examples),
            ("accuracy", &report.accuracy),
            ("weighted_precision", &report.weighted.precision),
            ("weighted_recall", &report.weighted.recall),
            ("weighted_f1", &report.weighted.f1),
        ],
    );
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub distribution: Vec<f64>,
    pub label: String,
}

pub fn predict(cfg: &RunConfig) -> Result<Vec<Prediction>> {
    let model_path = required(&cfg.predict.model, "predict.model")?;
    let input = required(&cfg.predict.input, "predict.input")?;
    let out = out_dir(cfg)?;
    let (model, enc) = load_checkpoint(cfg, model_path)?;
    let records: Vec<ExampleRecord> = read_jsonl(input)?;
    let encoded = enc.encode_all(&records)?;
    let dists = model.predict(&encoded)?;
    let preds: Vec<Prediction> = records
        .iter()
        .zip(&dists)
        .map(|(r, d)| {
            Ok(Prediction {
                id: r.target.id.clone(),
                distribution: d.0.to_vec(),
                label: tweetact_core::data::ActivityLabel::from_index(d.argmax())?.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    write_jsonl(&out.join(PREDICTIONS_FILE), &preds)?;
    let mut log = Logger::stderr();
    for p in &preds {
        log.log("prediction", &[("id", &p.id), ("label", &p.label)]);
    }
    Ok(preds)
}

pub fn profile(cfg: &RunConfig) -> Result<ProfileReport> {
    let input = required(&cfg.profile.input, "profile.input")?;
    let out = out_dir(cfg)?;
    let records: Vec<DistributionRecord> = read_jsonl(input)?;
    let report = profile_records(&records)?;
    write_json(&out.join(PROFILE_JSON), &report)?;
    fs::write(out.join(PROFILE_CSV), report.to_csv())?;
    let mut log = Logger::stderr();
    for row in &report.rows {
        log.log("profile", &[("activity", &row.activity), ("argmax_account", &row.argmax_account)]);
    }
    log.log(
        "profile_done",
        &[
            ("accounts", &report.accounts.len()),
            ("dropped_tweets", &report.dropped_tweets),
            ("dropped_followers", &report.dropped_followers),
        ],
    );
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckEntry {
    pub name: String,
    pub instances: u64,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<(String, usize)>,
    pub passed: bool,
}

fn architectures(names: &[String]) -> Result<Vec<Architecture>> {
    if names.iter().any(|n| n.eq_ignore_ascii_case("all")) {
        return Ok(Architecture::ALL.to_vec());
    }
    names.iter().map(|n| Ok(n.parse()?)).collect()
}

/// Runs the finite-difference suite; operations first, then the selected
/// architectures. Fails when any entry exceeds the tolerance.
pub fn gradcheck(cfg: &RunConfig) -> Result<Vec<GradcheckEntry>> {
    let g = &cfg.gradcheck;
    let archs = architectures(&g.architectures)?;
    if g.instances == 0 {
        bail!("gradcheck.instances must be positive");
    }
    let out = out_dir(cfg)?;
    let mut log = Logger::stderr();
    let mut entries = Vec::new();
    let mut push = |name: String, report: GradCheckReport| {
        let passed = report.passes(g.tol);
        log.log(
            "gradcheck",
            &[
                ("check", &name),
                ("instances", &g.instances),
                ("checked", &report.checked),
                ("max_rel_err", &report.max_rel_err),
                ("pass", &passed),
            ],
        );
        entries.push(GradcheckEntry {
            name,
            instances: g.instances,
            checked: report.checked,
            max_rel_err: report.max_rel_err,
            worst: report.worst,
            passed,
        });
    };
    for case in op_cases() {
        let mut merged = GradCheckReport::default();
        for i in 0..g.instances {
            merged.merge(&case.run(cfg.run.seed.wrapping_add(i))?);
        }
        push(format!("op:{}", case.name), merged);
    }
    for arch in archs {
        let mut merged = GradCheckReport::default();
        for i in 0..g.instances {
            merged.merge(&check_architecture(arch, cfg.run.seed.wrapping_add(i))?);
        }
        push(format!("model:{}", arch.name()), merged);
    }
    write_json(&out.join(GRADCHECK_FILE), &entries)?;
    let failed: Vec<&str> = entries.iter().filter(|e| !e.passed).map(|e| e.name.as_str()).collect();
    if !failed.is_empty() {
        bail!("gradient check failed for {}", failed.join(", "));
    }
    Ok(entries)
}

pub fn synth(cfg: &RunConfig) -> Result<usize> {
    let out = out_dir(cfg)?;
    let records = generate_synthetic(&cfg.synth, cfg.run.seed)?;
    write_jsonl(&out.join(RAW_FILE), &records)?;
    Logger::stderr().log("synth", &[("records", &records.len()), ("path", &out.join(RAW_FILE).display())]);
    Ok(records.len())
}
