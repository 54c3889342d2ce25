use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::checkpoint::{Checkpoint, TrainingProvenance};
use crate::corpus::{Condition, Dataset, Utterance};
use crate::error::{Error, Result};
use crate::loss::transducer_loss_tape;
use crate::model::network::{grid_tape, Bound};
use crate::model::{Architecture, AttentionConfig, Model, ModelConfig, ModelSizes, Weighting};
use crate::numerics::{derive_seed, Tape};

/// One curriculum stage: 1 = multisoftmax on mono A+B, 2 = multisoftmax on
/// all data, 3 = multisoftmax_attn on all data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageConfig {
    pub stage: u8,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// The learning rate falls linearly to this fraction of its initial
    /// value over the stage; 1.0 keeps it constant.
    pub final_lr_fraction: f64,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            stage: 1,
            steps: 500,
            batch_size: 8,
            learning_rate: 1e-2,
            seed: 1,
            grad_clip: Some(5.0),
            final_lr_fraction: 0.1,
        }
    }
}

impl StageConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.stage) {
            return Err(Error::Config(format!("stage {} is not 1, 2 or 3", self.stage)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::Config("final_lr_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        if self.stage == 3 {
            Architecture::MultiSoftmaxAttn
        } else {
            Architecture::MultiSoftmax
        }
    }
}

/// Default curriculum step split within a total budget.
pub fn default_stages(total_steps: usize, seed: u64) -> Vec<StageConfig> {
    let s1 = total_steps / 5;
    let s2 = total_steps * 3 / 10;
    [(1, s1), (2, s2), (3, total_steps - s1 - s2)]
        .into_iter()
        .map(|(stage, steps)| StageConfig {
            stage,
            steps,
            seed: derive_seed(seed, stage as u64),
            ..Default::default()
        })
        .collect()
}

/// Result of one stage.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub checkpoint: Checkpoint,
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
}

/// Starting point of a stage.
pub enum Init<'a> {
    Fresh(ModelConfig),
    From(&'a Checkpoint),
}

fn stage_data(dataset: &Dataset, stage: u8) -> Vec<&Utterance> {
    dataset
        .train
        .iter()
        .filter(|u| stage != 1 || u.condition != Condition::Mixed)
        .collect()
}

/// Loss and parameter gradients of one utterance.
pub fn utterance_gradient(model: &Model, utt: &Utterance) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, &model.params);
    let g = grid_tape(&mut tape, model, &bound, &utt.features, &utt.labels, Weighting::Model)?;
    let blank = model.config.table.blank();
    let loss = transducer_loss_tape(&mut tape, g.grid, g.frames, g.positions, blank, &utt.labels)?;
    let value = tape.value(loss).item()?;
    let mut grads = tape.backward(loss)?;
    let per_param = bound.vars().iter().map(|&v| grads.take(v).into_data()).collect();
    Ok((value, per_param))
}

/// Mean loss and gradient over a batch. Utterances run in parallel; the
/// reduction is in batch order, so results do not depend on scheduling.
pub fn batch_gradient(model: &Model, batch: &[&Utterance]) -> Result<(f64, Vec<Vec<f64>>)> {
    let results: Vec<(f64, Vec<Vec<f64>>)> = batch
        .par_iter()
        .map(|u| utterance_gradient(model, u))
        .collect::<Result<_>>()?;
    let n = batch.len() as f64;
    let mut total = 0.0;
    let mut sum: Vec<Vec<f64>> = model.params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
    for (loss, grads) in results {
        total += loss;
        for (acc, g) in sum.iter_mut().zip(grads) {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
    }
    for g in sum.iter_mut().flatten() {
        *g /= n;
    }
    Ok((total / n, sum))
}

fn clip(grads: &mut [Vec<f64>], max_norm: f64) {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
}

/// Trains `model` on `data` for `steps` Adam steps over reshuffled epochs.
fn train_loop(
    model: &mut Model,
    data: &[&Utterance],
    cfg: &StageConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if data.is_empty() && cfg.steps > 0 {
        return Err(Error::Data(format!("stage {} has no training utterances", cfg.stage)));
    }
    let adam_cfg = AdamConfig {
        learning_rate: cfg.learning_rate,
        ..Default::default()
    };
    let mut adam = Adam::new(adam_cfg, model.params.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x7A11));
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order = (0..data.len()).collect();
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(data[order[cursor]]);
            cursor += 1;
        }
        let (loss, mut grads) = batch_gradient(model, &batch)?;
        if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite loss {loss} at stage {} step {step}", cfg.stage)));
        }
        if let Some(c) = cfg.grad_clip {
            clip(&mut grads, c);
        }
        let progress_frac = step as f64 / cfg.steps.max(1) as f64;
        adam.config.learning_rate = cfg.learning_rate * (1.0 - (1.0 - cfg.final_lr_fraction) * progress_frac);
        adam.step(model.params.tensors_mut(), &grads)?;
        losses.push(loss);
        progress(step, loss);
    }
    Ok(losses)
}

/// Runs one curriculum stage. Stage 1 starts fresh; stage 2 continues from
/// a stage-1 checkpoint; stage 3 copies every trunk and joint parameter of a
/// stage-2 checkpoint and adds freshly initialized attention.
pub fn train_stage(
    dataset: &Dataset,
    cfg: &StageConfig,
    init: Init<'_>,
    attention: &AttentionConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<StageOutcome> {
    cfg.validate()?;
    let mut model = match (cfg.stage, init) {
        (1, Init::Fresh(mc)) => Model::new(mc.with_architecture(Architecture::MultiSoftmax, None), cfg.seed)?,
        (2, Init::From(c)) if c.provenance.stage == Some(1) && c.model.architecture() == Architecture::MultiSoftmax => {
            c.model.clone()
        }
        (3, Init::From(c)) if c.provenance.stage == Some(2) && c.model.architecture() == Architecture::MultiSoftmax => {
            let mc = c
                .model
                .config
                .with_architecture(Architecture::MultiSoftmaxAttn, Some(attention.clone()));
            let mut m = Model::new(mc, cfg.seed)?;
            let copied = m.copy_shared_from(&c.model);
            if copied != c.model.params.len() {
                return Err(Error::Config(format!(
                    "stage-2 checkpoint shares only {copied} of {} parameters with the attention model",
                    c.model.params.len()
                )));
            }
            m
        }
        (stage, _) => {
            return Err(Error::Config(format!(
                "stage {stage} needs {}",
                match stage {
                    1 => "a fresh model config",
                    2 => "a stage-1 checkpoint",
                    _ => "a stage-2 multisoftmax checkpoint",
                }
            )))
        }
    };
    let data = stage_data(dataset, cfg.stage);
    let losses = train_loop(&mut model, &data, cfg, progress)?;
    Ok(StageOutcome {
        checkpoint: Checkpoint {
            model,
            provenance: TrainingProvenance {
                stage: Some(cfg.stage),
                step: cfg.steps as u64,
                seed: cfg.seed,
            },
        },
        losses,
    })
}

/// Trains a vanilla model on all training data.
pub fn train_vanilla(
    dataset: &Dataset,
    config: ModelConfig,
    cfg: &StageConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<StageOutcome> {
    let mut model = Model::new(config.with_architecture(Architecture::Vanilla, None), cfg.seed)?;
    let data = stage_data(dataset, 2);
    let losses = train_loop(&mut model, &data, cfg, progress)?;
    Ok(StageOutcome {
        checkpoint: Checkpoint {
            model,
            provenance: TrainingProvenance {
                stage: None,
                step: cfg.steps as u64,
                seed: cfg.seed,
            },
        },
        losses,
    })
}

/// Model config matching a dataset's features and symbol table.
pub fn model_config_for(dataset: &Dataset, architecture: Architecture, sizes: &ModelSizes) -> ModelConfig {
    let input_dim = dataset.config.stack * dataset.config.raw_dim;
    ModelConfig::new(architecture, input_dim, sizes, dataset.table.clone())
}

/// Runs stages in order, each starting from the previous outcome (or from
/// `init` for the first one).
pub fn run_curriculum(
    dataset: &Dataset,
    sizes: &ModelSizes,
    stages: &[StageConfig],
    init: Option<&Checkpoint>,
    progress: &mut dyn FnMut(u8, usize, f64),
) -> Result<Vec<StageOutcome>> {
    for w in stages.windows(2) {
        if w[1].stage != w[0].stage + 1 {
            return Err(Error::Config(format!("stage {} cannot follow stage {}", w[1].stage, w[0].stage)));
        }
    }
    let mut outcomes: Vec<StageOutcome> = Vec::new();
    for s in stages {
        let start = match (outcomes.last(), init) {
            (Some(prev), _) => Init::From(&prev.checkpoint),
            (None, Some(c)) => Init::From(c),
            (None, None) => Init::Fresh(model_config_for(dataset, Architecture::MultiSoftmax, sizes)),
        };
        let stage = s.stage;
        let out = train_stage(dataset, s, start, &sizes.attention, &mut |step, loss| progress(stage, step, loss))?;
        outcomes.push(out);
    }
    Ok(outcomes)
}
