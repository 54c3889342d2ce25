use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusConfig;
use crate::error::{Error, Result};
use crate::model::{LookAhead, ModelSizes};
use crate::numerics::derive_seed;
use crate::trainer::StageConfig;

/// Hyper-parameters of one training run; the seed comes from [`RunConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagePlan {
    pub stage: u8,
    pub steps: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_clip")]
    pub grad_clip: Option<f64>,
    #[serde(default = "default_final_lr")]
    pub final_lr_fraction: f64,
}

fn default_batch() -> usize {
    StageConfig::default().batch_size
}

fn default_lr() -> f64 {
    StageConfig::default().learning_rate
}

fn default_clip() -> Option<f64> {
    StageConfig::default().grad_clip
}

fn default_final_lr() -> f64 {
    StageConfig::default().final_lr_fraction
}

impl StagePlan {
    /// Stage seeds are derived from the run seed so one number fixes a run.
    pub fn to_stage_config(&self, run_seed: u64) -> StageConfig {
        StageConfig {
            stage: self.stage,
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: derive_seed(run_seed, self.stage as u64),
            grad_clip: self.grad_clip,
            final_lr_fraction: self.final_lr_fraction,
        }
    }
}

/// Every setting of an experiment, read from one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub model: ModelSizes,
    pub stages: Vec<StagePlan>,
    /// Vanilla baseline; `steps: 0` means the curriculum's total.
    pub baseline: StagePlan,
    pub beam_width: usize,
    pub max_symbols_per_frame: usize,
    /// Overrides the model's attention look-ahead at decode time.
    pub look_ahead: Option<LookAhead>,
    /// EMA coefficient for the attention weights at decode time.
    pub smoothing: Option<f64>,
    /// Utterances to decode or analyze; empty means the first of each test split.
    pub utterances: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let plan = |stage, steps| StagePlan {
            stage,
            steps,
            batch_size: default_batch(),
            learning_rate: default_lr(),
            grad_clip: default_clip(),
            final_lr_fraction: default_final_lr(),
        };
        Self {
            dataset_dir: "data".into(),
            checkpoint_dir: "runs/checkpoints".into(),
            output_dir: "runs/output".into(),
            seed: 1,
            corpus: CorpusConfig::default(),
            model: ModelSizes::default(),
            stages: crate::trainer::default_stages(3000, 1)
                .into_iter()
                .map(|s| plan(s.stage, s.steps))
                .collect(),
            baseline: plan(0, 0),
            beam_width: 4,
            max_symbols_per_frame: crate::decoder::DEFAULT_MAX_SYMBOLS,
            look_ahead: None,
            smoothing: None,
            utterances: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        if self.beam_width == 0 {
            return Err(Error::Config("beam_width must be >= 1".into()));
        }
        if self.max_symbols_per_frame == 0 {
            return Err(Error::Config("max_symbols_per_frame must be >= 1".into()));
        }
        for w in self.stages.windows(2) {
            if w[1].stage != w[0].stage + 1 {
                return Err(Error::Config(format!("stage {} cannot follow stage {}", w[1].stage, w[0].stage)));
            }
        }
        for s in &self.stages {
            s.to_stage_config(self.seed).validate()?;
        }
        self.baseline_config().validate()?;
        if let Some(a) = self.smoothing {
            crate::analysis::check_alpha(a)?;
        }
        Ok(())
    }

    pub fn stage_plan(&self, stage: u8) -> Option<&StagePlan> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    /// Baseline stage settings, with its step budget resolved.
    pub fn baseline_config(&self) -> StageConfig {
        let mut c = self.baseline.to_stage_config(self.seed);
        c.stage = 2;
        c.seed = derive_seed(self.seed, 0xBA5E);
        if c.steps == 0 {
            c.steps = self.stages.iter().map(|s| s.steps).sum();
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_and_validates() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.baseline_config().steps, 3000);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"stages": [{"stage": 1, "steps": 2, "lr": 1}]}"#).is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 3, "look_ahead": "inf"}"#).unwrap();
        assert_eq!(cfg.look_ahead, Some(LookAhead::Infinite));
    }

    fn keys(v: &serde_json::Value) -> Vec<String> {
        let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
        k.sort();
        k
    }

    #[test]
    fn shipped_files_match_the_code() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR"));
        let shipped = RunConfig::load(&root.join("configs/default.json")).unwrap();
        assert_eq!(shipped, RunConfig::default());

        let schema: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(root.join("schema/run_config.schema.json")).unwrap())
                .unwrap();
        let defs = &schema["$defs"];
        let value = serde_json::to_value(RunConfig::default()).unwrap();
        let pairs = [
            (&value, &schema["properties"]),
            (&value["corpus"], &defs["corpus"]["properties"]),
            (&value["corpus"]["splits"], &defs["corpus"]["properties"]["splits"]["properties"]),
            (&value["corpus"]["train_mix"], &defs["corpus"]["properties"]["train_mix"]["properties"]),
            (&value["model"], &defs["model"]["properties"]),
            (&value["model"]["attention"], &defs["model"]["properties"]["attention"]["properties"]),
            (&value["baseline"], &defs["stage"]["properties"]),
        ];
        for (v, s) in pairs {
            assert_eq!(keys(v), keys(s));
        }
    }

    #[test]
    fn stage_gaps_rejected() {
        let mut cfg = RunConfig::default();
        cfg.stages.remove(1);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
