//! Command-line front end: `synth`, `train`, `decode`, `eval`, `analyze`.

mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{RunConfig, StagePlan};

use crate::analysis::{fit_gmm, trajectory, weight_population, write_density_csv, write_population_csv, write_trajectory_csv};
use crate::corpus::{load_dataset, make_dataset, save_dataset, Condition, Dataset, Split, Utterance, MANIFEST_FILE};
use crate::decoder::{beam_search, nbest_records, rows, stream_decode, write_nbest_jsonl, DecodeOptions};
use crate::error::{Error, Result};
use crate::model::{InferenceOptions, LookAhead, Weighting};
use crate::trainer::{
    evaluate, load_checkpoint, model_config_for, save_checkpoint, train_stage, train_vanilla, Checkpoint,
    EvalReport, Init, ModelRecognizer, OracleRecognizer, Recognizer,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Invalid(_) => EXIT_CONFIG,
        Error::Data(_) | Error::Checkpoint(_) | Error::Io { .. } | Error::Json(_) | Error::Csv(_) => EXIT_DATA,
        Error::Numeric(_) | Error::Shape { .. } => EXIT_NUMERIC,
    }
}

#[derive(Debug, Parser)]
#[command(name = "codemix-rnnt", version, about = "Bilingual streaming RNN-T on a synthetic code-mixing corpus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run config (see `schema/run_config.schema.json`); defaults apply when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Overrides the training seed; the corpus seed stays in the corpus config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the beam width.
    #[arg(long)]
    pub beam: Option<usize>,
    /// Attention look-ahead in frames, or `inf`; repeat to sweep (eval only).
    #[arg(long = "look-ahead")]
    pub look_ahead: Vec<LookAhead>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus into `dataset_dir`.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Overwrite an existing dataset.
        #[arg(long)]
        force: bool,
    },
    /// Run curriculum stages, writing `stage<k>.ckpt` and `loss_stage<k>.csv`.
    Train {
        #[command(flatten)]
        common: Common,
        /// Stages to run, e.g. `1,2,3`; defaults to every configured stage.
        #[arg(long, value_delimiter = ',')]
        stages: Vec<u8>,
        /// Also train the vanilla baseline (`vanilla.ckpt`).
        #[arg(long)]
        vanilla: bool,
        /// Train only the vanilla baseline.
        #[arg(long, conflicts_with_all = ["vanilla", "stages"])]
        vanilla_only: bool,
    },
    /// Write n-best lists for selected utterances to `<output_dir>/decode/nbest.jsonl`.
    Decode {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<checkpoint_dir>/stage3.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Utterance ids; overrides the config list.
        #[arg(long = "utt")]
        utterances: Vec<String>,
        /// Decode every utterance of a split instead.
        #[arg(long, conflicts_with = "utterances")]
        split: Option<Split>,
        /// Feed frames one at a time through the streaming decoder.
        #[arg(long)]
        stream: bool,
        /// Fixed language weights `w_a` (with `w_b = 1 - w_a`).
        #[arg(long)]
        force_weight: Option<f64>,
    },
    /// Score the test splits; writes `eval[_la<L>].{json,csv}` under `<output_dir>/eval`.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "oracle")]
        checkpoint: Option<PathBuf>,
        /// Use the reference-alignment stand-in model instead of a checkpoint.
        #[arg(long)]
        oracle: bool,
        /// Baseline report (JSON) to compute WERR against.
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Report label; defaults to the checkpoint file stem.
        #[arg(long)]
        label: Option<String>,
    },
    /// Attention trajectories, weight populations and GMM fits under `<output_dir>/analyze`.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long = "utt")]
        utterances: Vec<String>,
        /// Number of GMM components.
        #[arg(long, default_value_t = 2)]
        components: usize,
    },
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, force } => cmd_synth(&resolve(&common)?, force),
        Command::Train {
            common,
            stages,
            vanilla,
            vanilla_only,
        } => {
            let cfg = resolve(&common)?;
            let stages = if vanilla_only {
                Vec::new()
            } else if stages.is_empty() {
                cfg.stages.iter().map(|s| s.stage).collect()
            } else {
                stages
            };
            cmd_train(&cfg, &stages, vanilla || vanilla_only)
        }
        Command::Decode {
            common,
            checkpoint,
            utterances,
            split,
            stream,
            force_weight,
        } => {
            let cfg = resolve(&common)?;
            let ckpt = checkpoint.unwrap_or_else(|| cfg.checkpoint_dir.join("stage3.ckpt"));
            let selection = match split {
                Some(s) => Selection::Split(s),
                None if !utterances.is_empty() => Selection::Ids(utterances),
                None => Selection::Ids(cfg.utterances.clone()),
            };
            let weighting = match force_weight {
                Some(a) => Weighting::Fixed(a, 1.0 - a),
                None => Weighting::Model,
            };
            cmd_decode(&cfg, &ckpt, &selection, stream, weighting)
        }
        Command::Eval {
            common,
            checkpoint,
            oracle,
            compare,
            label,
        } => {
            let cfg = resolve(&common)?;
            let source = if oracle {
                ModelSource::Oracle
            } else {
                ModelSource::Checkpoint(checkpoint.unwrap_or_else(|| cfg.checkpoint_dir.join("stage3.ckpt")))
            };
            cmd_eval(&cfg, &source, &common.look_ahead, compare.as_deref(), label)
        }
        Command::Analyze {
            common,
            checkpoint,
            utterances,
            components,
        } => {
            let cfg = resolve(&common)?;
            let ckpt = checkpoint.unwrap_or_else(|| cfg.checkpoint_dir.join("stage3.ckpt"));
            let ids = if utterances.is_empty() { cfg.utterances.clone() } else { utterances };
            cmd_analyze(&cfg, &ckpt, &ids, components)
        }
    }
}

/// Loads the config and applies flag overrides.
pub fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(b) = common.beam {
        cfg.beam_width = b;
    }
    if let [la] = common.look_ahead.as_slice() {
        cfg.look_ahead = Some(*la);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn decode_options(cfg: &RunConfig, look_ahead: Option<LookAhead>, weighting: Weighting) -> DecodeOptions {
    DecodeOptions {
        beam_width: cfg.beam_width,
        max_symbols_per_frame: cfg.max_symbols_per_frame,
        inference: InferenceOptions {
            look_ahead: look_ahead.or(cfg.look_ahead),
            weighting,
        },
        smoothing: cfg.smoothing,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// `provenance.json` written next to every artifact set.
#[derive(Debug, Serialize)]
pub struct Provenance {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_manifest_sha256: Option<String>,
    pub config: RunConfig,
}

pub const PROVENANCE_FILE: &str = "provenance.json";

fn write_provenance(dir: &Path, command: &str, cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let manifest = cfg.dataset_dir.join(MANIFEST_FILE);
    let prov = Provenance {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: sha256_hex(&serde_json::to_vec(cfg)?),
        seed: cfg.seed,
        checkpoint_sha256: checkpoint.map(file_sha256).transpose()?,
        dataset_manifest_sha256: manifest.exists().then(|| file_sha256(&manifest)).transpose()?,
        config: cfg.clone(),
    };
    write_json(&dir.join(PROVENANCE_FILE), &prov)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Data(format!("{what} {} does not exist", path.display())))
    }
}

fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    require_file(&cfg.dataset_dir.join(MANIFEST_FILE), "dataset manifest")?;
    load_dataset(&cfg.dataset_dir)
}

pub fn cmd_synth(cfg: &RunConfig, force: bool) -> Result<()> {
    let dir = &cfg.dataset_dir;
    if dir.join(MANIFEST_FILE).exists() && !force {
        return Err(Error::Config(format!("{} already holds a dataset; pass --force to overwrite", dir.display())));
    }
    let ds = make_dataset(&cfg.corpus)?;
    save_dataset(&ds, dir)?;
    write_provenance(dir, "synth", cfg, None)?;
    for split in Split::ALL {
        println!("{:<10} {:>6} utterances", split.name(), ds.split(split).len());
    }
    Ok(())
}

fn stage_path(cfg: &RunConfig, stage: u8) -> PathBuf {
    cfg.checkpoint_dir.join(format!("stage{stage}.ckpt"))
}

fn write_losses(path: &Path, losses: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "loss"])?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv buffer: {e}")))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn progress(label: String) -> impl FnMut(usize, f64) {
    let mut sum = 0.0;
    move |step, loss| {
        sum += loss;
        if (step + 1) % 100 == 0 {
            eprintln!("{label} step {:>5}  mean loss {:.4}", step + 1, sum / 100.0);
            sum = 0.0;
        }
    }
}

pub fn cmd_train(cfg: &RunConfig, stages: &[u8], vanilla: bool) -> Result<()> {
    let mut sorted = stages.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let plans = sorted
        .iter()
        .map(|&s| {
            cfg.stage_plan(s)
                .ok_or_else(|| Error::Config(format!("stage {s} is not in the config")))
        })
        .collect::<Result<Vec<_>>>()?;
    for w in sorted.windows(2) {
        if w[1] != w[0] + 1 {
            return Err(Error::Config(format!("stages must be consecutive, got {sorted:?}")));
        }
    }
    let first_init = match sorted.first() {
        Some(&s) if s > 1 => {
            let prev = stage_path(cfg, s - 1);
            if !prev.is_file() {
                return Err(Error::Config(format!(
                    "stage {s} needs the stage-{} checkpoint {}",
                    s - 1,
                    prev.display()
                )));
            }
            Some(load_checkpoint(&prev)?)
        }
        _ => None,
    };
    let ds = load_data(cfg)?;
    create_dir(&cfg.checkpoint_dir)?;
    let mut prev: Option<Checkpoint> = first_init;
    for plan in plans {
        let sc = plan.to_stage_config(cfg.seed);
        let init = match &prev {
            Some(c) => Init::From(c),
            None => Init::Fresh(model_config_for(&ds, crate::model::Architecture::MultiSoftmax, &cfg.model)),
        };
        let out = train_stage(&ds, &sc, init, &cfg.model.attention, &mut progress(format!("stage {}", sc.stage)))?;
        save_checkpoint(&out.checkpoint, &stage_path(cfg, sc.stage))?;
        write_losses(&cfg.checkpoint_dir.join(format!("loss_stage{}.csv", sc.stage)), &out.losses)?;
        println!("stage {} done: {}", sc.stage, stage_path(cfg, sc.stage).display());
        prev = Some(out.checkpoint);
    }
    if vanilla {
        let sc = cfg.baseline_config();
        let mc = model_config_for(&ds, crate::model::Architecture::Vanilla, &cfg.model);
        let out = train_vanilla(&ds, mc, &sc, &mut progress("vanilla".into()))?;
        let path = cfg.checkpoint_dir.join("vanilla.ckpt");
        save_checkpoint(&out.checkpoint, &path)?;
        write_losses(&cfg.checkpoint_dir.join("loss_vanilla.csv"), &out.losses)?;
        println!("vanilla done: {}", path.display());
    }
    write_provenance(&cfg.checkpoint_dir, "train", cfg, None)
}

/// Which utterances a command works on.
pub enum Selection {
    Ids(Vec<String>),
    Split(Split),
}

fn select<'d>(ds: &'d Dataset, selection: &Selection) -> Result<Vec<&'d Utterance>> {
    match selection {
        Selection::Split(s) => Ok(ds.split(*s).iter().collect()),
        Selection::Ids(ids) if ids.is_empty() => Ok(Split::TESTS
            .iter()
            .filter_map(|&s| ds.split(s).first())
            .collect()),
        Selection::Ids(ids) => ids
            .iter()
            .map(|id| ds.find(id).ok_or_else(|| Error::Data(format!("no utterance {id:?} in the dataset"))))
            .collect(),
    }
}

pub fn cmd_decode(
    cfg: &RunConfig,
    checkpoint: &Path,
    selection: &Selection,
    stream: bool,
    weighting: Weighting,
) -> Result<()> {
    require_file(checkpoint, "checkpoint")?;
    let ds = load_data(cfg)?;
    let model = load_checkpoint(checkpoint)?.model;
    let opts = decode_options(cfg, None, weighting);
    let utts = select(&ds, selection)?;
    let dir = cfg.output_dir.join("decode");
    create_dir(&dir)?;
    let path = dir.join("nbest.jsonl");
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = BufWriter::new(file);
    for u in utts {
        let decoded = if stream {
            stream_decode(&model, rows(&u.features), &opts)?.0
        } else {
            beam_search(&model, &u.features, &opts)?
        };
        let records = nbest_records(&model.config.table, &u.id, &decoded);
        write_nbest_jsonl(&mut out, &records)?;
        println!("{}\t{}", u.id, records.first().map(|r| r.transcript.as_str()).unwrap_or(""));
    }
    out.flush().map_err(|e| Error::io(&path, e))?;
    write_provenance(&dir, "decode", cfg, Some(checkpoint))
}

/// What `eval` scores.
pub enum ModelSource {
    Checkpoint(PathBuf),
    Oracle,
}

pub fn cmd_eval(
    cfg: &RunConfig,
    source: &ModelSource,
    look_aheads: &[LookAhead],
    compare: Option<&Path>,
    label: Option<String>,
) -> Result<()> {
    if let ModelSource::Checkpoint(p) = source {
        require_file(p, "checkpoint")?;
    }
    let base = match compare {
        Some(p) => {
            require_file(p, "baseline report")?;
            Some(EvalReport::read_json(p)?)
        }
        None => None,
    };
    let ds = load_data(cfg)?;
    let dir = cfg.output_dir.join("eval");
    create_dir(&dir)?;
    let sweep: Vec<Option<LookAhead>> = if look_aheads.len() > 1 {
        look_aheads.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    let (model, ckpt_path) = match source {
        ModelSource::Checkpoint(p) => (Some(load_checkpoint(p)?.model), Some(p.as_path())),
        ModelSource::Oracle => (None, None),
    };
    let label = label.unwrap_or_else(|| match ckpt_path {
        Some(p) => p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        None => "oracle".into(),
    });
    for la in sweep {
        let recognizer: Box<dyn Recognizer + '_> = match &model {
            Some(m) => Box::new(ModelRecognizer {
                model: m,
                options: decode_options(cfg, la, Weighting::Model),
            }),
            None => Box::new(OracleRecognizer {
                table: ds.table.clone(),
                beam_width: cfg.beam_width,
                max_symbols: cfg.max_symbols_per_frame,
            }),
        };
        let mut report = evaluate(recognizer.as_ref(), &ds, &label)?;
        if let Some(b) = &base {
            report.compare(b)?;
        }
        let stem = match la {
            Some(l) => format!("eval_la{l}"),
            None => "eval".to_string(),
        };
        report.write(&dir, &stem)?;
        for s in &report.splits {
            println!("{stem}\t{}\tWER {:.2}%", s.split, 100.0 * s.wer);
        }
    }
    write_provenance(&dir, "eval", cfg, ckpt_path)
}

#[derive(Serialize)]
struct GmmSummary {
    condition: Condition,
    frames: usize,
    mean_w_a: f64,
    fit: crate::analysis::GmmFit,
}

pub fn cmd_analyze(cfg: &RunConfig, checkpoint: &Path, ids: &[String], components: usize) -> Result<()> {
    require_file(checkpoint, "checkpoint")?;
    let ds = load_data(cfg)?;
    let model = load_checkpoint(checkpoint)?.model;
    let opts = decode_options(cfg, None, Weighting::Model);
    let dir = cfg.output_dir.join("analyze");
    create_dir(&dir)?;
    for u in select(&ds, &Selection::Ids(ids.to_vec()))? {
        let report = trajectory(&model, u, &opts)?;
        write_trajectory_csv(&dir.join(format!("trajectory_{}.csv", u.id)), &report)?;
    }
    let mut pops = Vec::new();
    for (cond, split) in [
        (Condition::MonoA, Split::TestA),
        (Condition::MonoB, Split::TestB),
        (Condition::Mixed, Split::TestMixed),
    ] {
        pops.push((cond, weight_population(&model, ds.split(split), &opts)?));
    }
    let mut fits = Vec::new();
    let mut summary = Vec::new();
    for (cond, values) in &pops {
        let fit = fit_gmm(values, components)?;
        summary.push(GmmSummary {
            condition: *cond,
            frames: values.len(),
            mean_w_a: values.iter().sum::<f64>() / values.len() as f64,
            fit: fit.clone(),
        });
        fits.push((*cond, fit));
    }
    write_population_csv(&dir.join("population.csv"), &pops)?;
    write_density_csv(&dir.join("density.csv"), &fits)?;
    write_json(&dir.join("gmm.json"), &summary)?;
    for s in &summary {
        let means: Vec<String> = s.fit.components.iter().map(|c| format!("{:.3}", c.mean)).collect();
        println!("{}\tmean w_a {:.3}\tGMM means [{}]", s.condition.name(), s.mean_w_a, means.join(", "));
    }
    write_provenance(&dir, "analyze", cfg, Some(checkpoint))
}
