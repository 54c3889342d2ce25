//! Attention-weight trajectories, mixture fits over weight populations,
//! smoothing, and CSV export for plotting.

mod gmm;
mod smooth;

use std::path::Path;

use serde::Serialize;

pub use gmm::{fit_gmm, GmmComponent, GmmFit, MAX_ITERATIONS, TOLERANCE, VARIANCE_FLOOR};
pub use smooth::{check_alpha, ema_step, smooth_trajectory};

use crate::corpus::{Condition, Utterance};
use crate::decoder::{beam_search, word_spans, DecodeOptions, WordSpan};
use crate::error::{Error, Result};
use crate::model::{Architecture, AttentionTrajectory, Model};

/// Density grid: `[-0.1, 1.1]` in steps of 0.001.
pub const DENSITY_MIN: f64 = -0.1;
pub const DENSITY_MAX: f64 = 1.1;
pub const DENSITY_POINTS: usize = 1201;

/// Per-frame weights of one utterance with the decoded words' frame spans.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryReport {
    pub utterance_id: String,
    pub trajectory: AttentionTrajectory,
    pub words: Vec<WordSpan>,
}

impl TrajectoryReport {
    /// The word whose span covers frame `t`, if any.
    pub fn word_at(&self, t: usize) -> Option<&WordSpan> {
        self.words.iter().find(|w| w.start_frame <= t && t <= w.end_frame)
    }
}

pub fn trajectory(model: &Model, utt: &Utterance, opts: &DecodeOptions) -> Result<TrajectoryReport> {
    if model.architecture() != Architecture::MultiSoftmaxAttn {
        return Err(Error::Invalid(format!(
            "trajectories need a multisoftmax_attn model, got {}",
            model.architecture().name()
        )));
    }
    let decoded = beam_search(model, &utt.features, opts)?;
    let trajectory = decoded
        .trajectory
        .clone()
        .ok_or_else(|| Error::Invalid("forced weights leave no attention trajectory".into()))?;
    Ok(TrajectoryReport {
        utterance_id: utt.id.clone(),
        trajectory,
        words: word_spans(&model.config.table, decoded.best()),
    })
}

/// `w_A` of every frame of every utterance, from the attention block alone.
pub fn weight_population<'a>(
    model: &Model,
    utts: impl IntoIterator<Item = &'a Utterance>,
    opts: &DecodeOptions,
) -> Result<Vec<f64>> {
    let inf = model.inference(opts.inference)?;
    if !inf.uses_attention() {
        return Err(Error::Invalid("weight populations need attention weights".into()));
    }
    let mut out = Vec::new();
    for u in utts {
        let (_, traj) = inf.frames(&u.features)?;
        let traj = traj.expect("attention active");
        let traj = match opts.smoothing {
            Some(a) => smooth_trajectory(&traj, a)?,
            None => traj,
        };
        out.extend(traj.w_a());
    }
    Ok(out)
}

pub fn density_grid() -> Vec<f64> {
    let step = (DENSITY_MAX - DENSITY_MIN) / (DENSITY_POINTS - 1) as f64;
    (0..DENSITY_POINTS).map(|i| DENSITY_MIN + i as f64 * step).collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

/// Columns `frame, w_a, w_b, word`; one row per frame.
pub fn write_trajectory_csv(path: &Path, report: &TrajectoryReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["frame", "w_a", "w_b", "word"]).map_err(|e| csv_error(path, e))?;
    for (t, p) in report.trajectory.weights.iter().enumerate() {
        let word = report.word_at(t).map(|s| format!("{}:{}", s.lang, s.text)).unwrap_or_default();
        w.write_record([t.to_string(), p[0].to_string(), p[1].to_string(), word])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Column `x` followed by one pdf column per fitted condition.
pub fn write_density_csv(path: &Path, fits: &[(Condition, GmmFit)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["x".to_string()];
    header.extend(fits.iter().map(|(c, _)| c.name().to_string()));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for x in density_grid() {
        let mut row = vec![format!("{x:.3}")];
        row.extend(fits.iter().map(|(_, f)| f.pdf(x).to_string()));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Raw weights of a population, one row per frame: `condition, w_a`.
pub fn write_population_csv(path: &Path, pops: &[(Condition, Vec<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["condition", "w_a"]).map_err(|e| csv_error(path, e))?;
    for (c, values) in pops {
        for v in values {
            w.write_record([c.name(), &v.to_string()]).map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
