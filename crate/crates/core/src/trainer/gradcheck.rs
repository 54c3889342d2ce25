use serde::Serialize;

use crate::corpus::Utterance;
use crate::error::Result;
use crate::loss::{transducer_loss_tape_composed, transducer_nll};
use crate::model::network::{grid_tape, Bound};
use crate::model::{Model, Weighting};
use crate::numerics::{relative_error, Tape};

use super::train::utterance_gradient;

/// Pairwise worst-case disagreement of three gradient computations over the
/// probed parameter scalars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradAgreement {
    /// Fused occupancy gradient vs. autodiff through the composed lattice.
    pub analytic_vs_tape: f64,
    pub analytic_vs_numeric: f64,
    pub tape_vs_numeric: f64,
    pub probes: usize,
}

impl GradAgreement {
    pub fn worst(&self) -> f64 {
        self.analytic_vs_tape.max(self.analytic_vs_numeric).max(self.tape_vs_numeric)
    }
}

fn composed_gradient(model: &Model, utt: &Utterance) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, &model.params);
    let g = grid_tape(&mut tape, model, &bound, &utt.features, &utt.labels, Weighting::Model)?;
    let blank = model.config.table.blank();
    let loss = transducer_loss_tape_composed(&mut tape, g.grid, g.frames, g.positions, blank, &utt.labels)?;
    let mut grads = tape.backward(loss)?;
    Ok(bound.vars().iter().map(|&v| grads.take(v).into_data()).collect())
}

fn plain_nll(model: &Model, utt: &Utterance) -> Result<f64> {
    let (grid, _) = model.posterior_grid(utt)?;
    transducer_nll(&grid, &utt.labels)
}

/// Checks the full encoder-to-loss gradient of `model` on `utt`. The
/// numeric side perturbs the parameters and re-runs the plain inference
/// path, which shares no code with the tape. Up to `per_tensor` evenly
/// spaced scalars of every parameter tensor are probed.
pub fn model_grad_check(model: &Model, utt: &Utterance, per_tensor: usize, eps: f64) -> Result<GradAgreement> {
    let (_, analytic) = utterance_gradient(model, utt)?;
    let tape = composed_gradient(model, utt)?;
    let mut probe = model.clone();
    let mut out = GradAgreement {
        analytic_vs_tape: 0.0,
        analytic_vs_numeric: 0.0,
        tape_vs_numeric: 0.0,
        probes: 0,
    };
    for (i, t) in model.params.tensors().iter().enumerate() {
        let n = t.numel();
        let stride = n.div_ceil(per_tensor.max(1)).max(1);
        for j in (0..n).step_by(stride) {
            let x = t.data()[j];
            probe.params.tensors_mut()[i].data_mut()[j] = x + eps;
            let up = plain_nll(&probe, utt)?;
            probe.params.tensors_mut()[i].data_mut()[j] = x - eps;
            let down = plain_nll(&probe, utt)?;
            probe.params.tensors_mut()[i].data_mut()[j] = x;
            let numeric = (up - down) / (2.0 * eps);
            let (a, b) = (analytic[i][j], tape[i][j]);
            out.analytic_vs_tape = out.analytic_vs_tape.max(relative_error(a, b));
            out.analytic_vs_numeric = out.analytic_vs_numeric.max(relative_error(a, numeric));
            out.tape_vs_numeric = out.tape_vs_numeric.max(relative_error(b, numeric));
            out.probes += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_combined, build_symbol_table, default_graphemes, Lang, Word};
    use crate::model::{Architecture, AttentionConfig, LookAhead, ModelConfig, ModelSizes};
    use crate::numerics::ParamRng;

    #[test]
    fn all_architectures_agree() {
        let a = build_symbol_table(default_graphemes(Lang::A, 2), Lang::A).unwrap();
        let b = build_symbol_table(default_graphemes(Lang::B, 2), Lang::B).unwrap();
        let table = build_combined(a, b).unwrap();
        let sizes = ModelSizes {
            encoder_layers: 1,
            encoder_hidden: 3,
            prediction_layers: 1,
            prediction_hidden: 3,
            joint_hidden: 3,
            attention: AttentionConfig {
                key_dim: 2,
                ffn_hidden: 2,
                look_ahead: LookAhead::Frames(1),
            },
        };
        let utt = Utterance {
            id: "u".into(),
            condition: crate::corpus::Condition::Mixed,
            seed: 0,
            words: vec![Word {
                text: "x".into(),
                lang: Lang::A,
            }],
            labels: vec![table.to_combined(Lang::A, 0), table.to_combined(Lang::B, 1)],
            features: ParamRng::new(4).uniform(&[4, 2], 1.0),
        };
        for arch in [Architecture::Vanilla, Architecture::MultiSoftmax, Architecture::MultiSoftmaxAttn] {
            let model = Model::new(ModelConfig::new(arch, 2, &sizes, table.clone()), 11).unwrap();
            let g = model_grad_check(&model, &utt, 4, 1e-5).unwrap();
            assert!(g.worst() < 1e-6, "{arch:?}: {g:?}");
            assert!(g.probes > 20);
        }
    }
}
