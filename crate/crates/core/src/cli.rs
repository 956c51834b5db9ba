//! The `wal` command line.
//!
//! Every command resolves a [`RunConfig`] from `--config` (a flat config or a
//! manifest), then `--set key=value` overrides, then the typed flags, then
//! `--seed`. Outputs go under `--out`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{RunConfig, RunManifest, MANIFEST_NAME};
use crate::corpus::{generate_corpus, load_corpus, save_corpus, ClipRecord};
use crate::error::{Result, WalError};
use crate::eval::{attention_csv, bidirectional_retrieval, RetrievalReport};
use crate::model::{load_checkpoint, save_checkpoint, text_enum, AttentionKind, InputMode, SamplerKind};
use crate::training::{metrics_csv_header, metrics_csv_row, train_with_callback, LossKind, TrainOutcome};

pub const TRAIN_CORPUS_FILE: &str = "train.jsonl";
pub const TEST_CORPUS_FILE: &str = "test.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const FREEZE_CHECKPOINT_FILE: &str = "checkpoint_freeze.json";
pub const REPORT_FILE: &str = "report.csv";
pub const ATTENTION_FILE: &str = "attention.csv";
pub const ABLATION_FILE: &str = "ablation.csv";

#[derive(Debug, Parser)]
#[command(
    name = "wal",
    version,
    about = "Train and evaluate gated cross-modal retrieval on synthetic corpora"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train and test corpora from the config.
    GenCorpus(Common),
    /// Train a model and write metrics, checkpoints and a manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a test corpus.
    Eval(EvalArgs),
    /// Train one run per value of a config axis and compare them.
    Ablate(AblateArgs),
    /// Export per-frame attention of each pair's own sentence.
    AttentionDump(EvalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat TOML config or a run manifest.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Override any config key, e.g. `--set bvf_count=16`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub sampler: Option<SamplerKind>,
    #[arg(long)]
    pub attention: Option<AttentionKind>,
    #[arg(long)]
    pub input_mode: Option<InputMode>,
    #[arg(long)]
    pub bvf_count: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Training corpus; generated from the config when absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Test corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub axis: AblationAxis,
    /// Comma-separated values; each axis has a default sweep.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,
    /// Training corpus; generated from the config together with the test
    /// split when absent.
    #[arg(long, requires = "test_corpus")]
    pub corpus: Option<PathBuf>,
    #[arg(long, requires = "corpus")]
    pub test_corpus: Option<PathBuf>,
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| WalError::invalid("--set", format!("expected KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(v) = self.loss {
            cfg.loss_kind = v;
        }
        if let Some(v) = self.sampler {
            cfg.sampler_kind = v;
        }
        if let Some(v) = self.attention {
            cfg.attention_kind = v;
        }
        if let Some(v) = self.input_mode {
            cfg.input_mode = v;
        }
        if let Some(v) = self.bvf_count {
            cfg.bvf_count = v;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    BvfCount,
    SamplerKind,
    InputMode,
    LossKind,
    AttentionKind,
    DiscriminatorOnOff,
}

text_enum!(AblationAxis {
    BvfCount => "bvf_count",
    SamplerKind => "sampler_kind",
    InputMode => "input_mode",
    LossKind => "loss_kind",
    AttentionKind => "attention_kind",
    DiscriminatorOnOff => "discriminator_on_off",
});

impl AblationAxis {
    pub fn default_values(self) -> Vec<String> {
        let v: &[&str] = match self {
            AblationAxis::BvfCount => &["4", "16", "64"],
            AblationAxis::SamplerKind => SamplerKind::NAMES,
            AblationAxis::InputMode => InputMode::NAMES,
            AblationAxis::LossKind => LossKind::NAMES,
            AblationAxis::AttentionKind => AttentionKind::NAMES,
            AblationAxis::DiscriminatorOnOff => &["off", "on"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    /// Applies one axis value and returns the row label.
    pub fn apply(self, cfg: &mut RunConfig, value: &str) -> Result<String> {
        match self {
            AblationAxis::DiscriminatorOnOff => {
                let (on, label) = match value {
                    "off" | "WAL-att" => (false, "WAL-att"),
                    "on" | "WAL-att-adv" => (true, "WAL-att-adv"),
                    _ => {
                        return Err(WalError::invalid(
                            "discriminator_on_off",
                            format!("unknown value {value:?}, expected on or off"),
                        ))
                    }
                };
                cfg.gate_enabled = on;
                Ok(label.to_owned())
            }
            _ => {
                cfg.set(self.as_str(), value)?;
                Ok(value.to_owned())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub axis: AblationAxis,
    pub label: String,
    pub report: RetrievalReport,
    pub final_z0_percent: f64,
}

pub fn ablation_csv_header() -> &'static str {
    "axis,value,map_video_search,map_sentence_search,rec5_video_search,rec5_sentence_search,final_z0_percent"
}

impl AblationRow {
    pub fn csv_row(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{},{},{},{}",
            self.axis,
            self.label,
            r.video_search.map,
            r.sentence_search.map,
            r.video_search.rec5,
            r.sentence_search.rec5,
            self.final_z0_percent
        )
    }
}

/// Trains one configuration and evaluates it on `test`.
pub fn run_experiment(
    cfg: &RunConfig,
    train: &[ClipRecord],
    test: &[ClipRecord],
) -> Result<(TrainOutcome, RetrievalReport)> {
    let out = train_with_callback(&cfg.train_config(), train, |_, _| Ok(()))?;
    let report = bidirectional_retrieval(&out.params, test)?;
    Ok((out, report))
}

/// One run per value, all on the same corpus and seed. Runs execute in
/// parallel; rows come back in `values` order.
pub fn run_ablation(
    base: &RunConfig,
    axis: AblationAxis,
    values: &[String],
    train: &[ClipRecord],
    test: &[ClipRecord],
) -> Result<Vec<AblationRow>> {
    let configs = values
        .iter()
        .map(|v| {
            let mut cfg = base.clone();
            let label = axis.apply(&mut cfg, v)?;
            cfg.validate()?;
            Ok((label, cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    configs
        .par_iter()
        .map(|(label, cfg)| {
            let (out, report) = run_experiment(cfg, train, test)?;
            let final_z0_percent = out.history.last().map_or(100.0, |m| 100.0 * m.z0_fraction);
            Ok(AblationRow {
                axis,
                label: label.clone(),
                report,
                final_z0_percent,
            })
        })
        .collect()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCorpus(c) => cmd_gen_corpus(&c.resolve()?, &c.out),
        Command::Train(a) => cmd_train(&a.common.resolve()?, a.corpus.as_deref(), &a.common.out),
        Command::Eval(a) => {
            let report = cmd_eval(&a.checkpoint, &a.corpus, &a.out)?;
            println!("{}", report.summary_line());
            Ok(())
        }
        Command::Ablate(a) => {
            let cfg = a.common.resolve()?;
            let values = if a.values.is_empty() {
                a.axis.default_values()
            } else {
                a.values.clone()
            };
            let paths = a.corpus.as_deref().zip(a.test_corpus.as_deref());
            cmd_ablate(&cfg, a.axis, &values, paths, &a.common.out)
        }
        Command::AttentionDump(a) => cmd_attention_dump(&a.checkpoint, &a.corpus, &a.out),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| WalError::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| WalError::io(path, e))
}

pub fn cmd_gen_corpus(cfg: &RunConfig, out: &Path) -> Result<()> {
    let corpus = generate_corpus(&cfg.corpus_spec())?;
    create_dir(out)?;
    RunManifest::new(cfg)
        .with_artifact("train_corpus", TRAIN_CORPUS_FILE)
        .with_artifact("test_corpus", TEST_CORPUS_FILE)
        .save(&out.join(MANIFEST_NAME))?;
    save_corpus(&corpus.train, cfg.d, &out.join(TRAIN_CORPUS_FILE))?;
    save_corpus(&corpus.test, cfg.d, &out.join(TEST_CORPUS_FILE))
}

fn load_records(path: &Path) -> Result<Vec<ClipRecord>> {
    let c = load_corpus(path)?;
    if c.records.is_empty() {
        return Err(WalError::invalid(format!("corpus {}", path.display()), "no records"));
    }
    Ok(c.records)
}

/// Writes the manifest first, appends one metrics row per epoch as it
/// completes, and checkpoints at the end of the freeze phase and of training.
/// On failure the rows already written stay on disk.
pub fn cmd_train(cfg: &RunConfig, corpus_path: Option<&Path>, out: &Path) -> Result<()> {
    let train = match corpus_path {
        Some(p) => load_records(p)?,
        None => generate_corpus(&cfg.corpus_spec())?.train,
    };
    create_dir(out)?;
    let corpus_label = corpus_path.map_or_else(|| "generated".to_owned(), |p| p.display().to_string());
    RunManifest::new(cfg)
        .with_artifact("train_corpus", corpus_label)
        .with_artifact("metrics", METRICS_FILE)
        .with_artifact("checkpoint", CHECKPOINT_FILE)
        .with_artifact("freeze_checkpoint", FREEZE_CHECKPOINT_FILE)
        .save(&out.join(MANIFEST_NAME))?;
    train_logged(cfg, &train, out)?;
    Ok(())
}

fn train_logged(cfg: &RunConfig, train: &[ClipRecord], out: &Path) -> Result<TrainOutcome> {
    let metrics_path = out.join(METRICS_FILE);
    let io = |e| WalError::io(&metrics_path, e);
    let mut csv = BufWriter::new(File::create(&metrics_path).map_err(io)?);
    writeln!(csv, "{}", metrics_csv_header()).map_err(io)?;
    csv.flush().map_err(io)?;
    let tc = cfg.train_config();
    let outcome = train_with_callback(&tc, train, |m, params| {
        writeln!(csv, "{}", metrics_csv_row(m)).map_err(io)?;
        csv.flush().map_err(io)?;
        if m.epoch + 1 == tc.freeze_epochs {
            save_checkpoint(params, &out.join(FREEZE_CHECKPOINT_FILE))?;
        }
        Ok(())
    })?;
    save_checkpoint(&outcome.params, &out.join(CHECKPOINT_FILE))?;
    Ok(outcome)
}

pub fn cmd_eval(checkpoint: &Path, corpus: &Path, out: &Path) -> Result<RetrievalReport> {
    let params = load_checkpoint(checkpoint)?;
    let test = load_records(corpus)?;
    let report = bidirectional_retrieval(&params, &test)?;
    create_dir(out)?;
    write_file(&out.join(REPORT_FILE), &report.to_csv())?;
    Ok(report)
}

pub fn cmd_attention_dump(checkpoint: &Path, corpus: &Path, out: &Path) -> Result<()> {
    let params = load_checkpoint(checkpoint)?;
    let pairs = load_records(corpus)?;
    let csv = attention_csv(&params, &pairs)?;
    create_dir(out)?;
    write_file(&out.join(ATTENTION_FILE), &csv)
}

/// Each run gets its own directory `<axis>-<value>` with a manifest, metrics
/// and checkpoints; the comparison table goes to `ablation.csv`.
pub fn cmd_ablate(
    base: &RunConfig,
    axis: AblationAxis,
    values: &[String],
    corpus_paths: Option<(&Path, &Path)>,
    out: &Path,
) -> Result<()> {
    let (train, test) = match corpus_paths {
        Some((tr, te)) => (load_records(tr)?, load_records(te)?),
        None => {
            let c = generate_corpus(&base.corpus_spec())?;
            (c.train, c.test)
        }
    };
    create_dir(out)?;
    RunManifest::new(base)
        .with_artifact("ablation", ABLATION_FILE)
        .save(&out.join(MANIFEST_NAME))?;
    let runs = values
        .iter()
        .map(|v| {
            let mut cfg = base.clone();
            let label = axis.apply(&mut cfg, v)?;
            cfg.validate()?;
            Ok((label, cfg, out.join(format!("{axis}-{v}"))))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = runs
        .par_iter()
        .map(|(label, cfg, dir)| {
            create_dir(dir)?;
            RunManifest::new(cfg)
                .with_artifact("metrics", METRICS_FILE)
                .with_artifact("checkpoint", CHECKPOINT_FILE)
                .save(&dir.join(MANIFEST_NAME))?;
            let outcome = train_logged(cfg, &train, dir)?;
            let report = bidirectional_retrieval(&outcome.params, &test)?;
            write_file(&dir.join(REPORT_FILE), &report.to_csv())?;
            Ok(AblationRow {
                axis,
                label: label.clone(),
                report,
                final_z0_percent: outcome.history.last().map_or(100.0, |m| 100.0 * m.z0_fraction),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut csv = format!("{}\n", ablation_csv_header());
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    write_file(&out.join(ABLATION_FILE), &csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_names_parse() {
        for name in AblationAxis::NAMES {
            assert_eq!(name.parse::<AblationAxis>().unwrap().as_str(), *name);
        }
        assert!("bvf".parse::<AblationAxis>().is_err());
    }

    #[test]
    fn default_sweeps_apply_cleanly() {
        for name in AblationAxis::NAMES {
            let axis: AblationAxis = name.parse().unwrap();
            for v in axis.default_values() {
                let mut cfg = RunConfig::default();
                axis.apply(&mut cfg, &v).unwrap();
                cfg.validate().unwrap();
            }
        }
    }

    #[test]
    fn discriminator_axis_labels() {
        let mut cfg = RunConfig::default();
        assert_eq!(
            AblationAxis::DiscriminatorOnOff.apply(&mut cfg, "off").unwrap(),
            "WAL-att"
        );
        assert!(!cfg.gate_enabled);
        assert_eq!(
            AblationAxis::DiscriminatorOnOff.apply(&mut cfg, "on").unwrap(),
            "WAL-att-adv"
        );
        assert!(cfg.gate_enabled);
        assert!(AblationAxis::DiscriminatorOnOff.apply(&mut cfg, "maybe").is_err());
    }

    #[test]
    fn flags_override_file_and_sets() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 4\nloss_kind = \"bce\"\nbvf_count = 8\n").unwrap();
        let common = Common {
            config: Some(path),
            seed: Some(11),
            out: dir.path().to_owned(),
            overrides: vec!["bvf_count=16".into(), "tau = 0.5".into()],
            loss: Some(LossKind::Triplet),
            sampler: None,
            attention: None,
            input_mode: None,
            bvf_count: None,
        };
        let cfg = common.resolve().unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.loss_kind, LossKind::Triplet);
        assert_eq!(cfg.bvf_count, 16);
        assert_eq!(cfg.tau, 0.5);
    }
}
