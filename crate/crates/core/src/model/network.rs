use super::config::{Architecture, LookAhead};
use super::infer::Weighting;
use super::params::{joint_prefix, ParamStore};
use super::Model;
use crate::corpus::Lang;
use crate::error::{Error, Result};
use crate::numerics::lstm::lstm_layer_tape;
use crate::numerics::{LstmVars, Tape, Tensor, Var};

/// Model parameters recorded on a tape as leaves, in store order.
#[derive(Debug, Clone)]
pub struct Bound<'p> {
    params: &'p ParamStore,
    vars: Vec<Var>,
}

impl<'p> Bound<'p> {
    pub fn new(tape: &mut Tape, params: &'p ParamStore) -> Self {
        let vars = params.tensors().iter().map(|t| tape.param(t.clone())).collect();
        Self { params, vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.params
            .position(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::Invalid(format!("missing parameter {name}")))
    }

    fn lstm(&self, prefix: &str, layer: usize) -> Result<LstmVars> {
        Ok(LstmVars {
            w_ih: self.var(&format!("{prefix}.{layer}.w_ih"))?,
            w_hh: self.var(&format!("{prefix}.{layer}.w_hh"))?,
            bias: self.var(&format!("{prefix}.{layer}.bias"))?,
        })
    }
}

/// Tape handles of a grid computation.
#[derive(Debug, Clone, Copy)]
pub struct TapeGrid {
    /// `(T * (U+1)) x K` log-probabilities, `t`-major.
    pub grid: Var,
    /// `T x 2` log language weights when attention is active.
    pub log_weights: Option<Var>,
    pub frames: usize,
    pub positions: usize,
}

fn joint_tape(tape: &mut Tape, bound: &Bound<'_>, lang: Option<Lang>, enc: Var, pred: Var) -> Result<Var> {
    let p = joint_prefix(lang);
    let e = tape.matmul(enc, bound.var(&format!("{p}.enc_proj"))?)?;
    let q = tape.matmul(pred, bound.var(&format!("{p}.pred_proj"))?)?;
    let s = tape.outer_add(e, q)?;
    let s = tape.add_row(s, bound.var(&format!("{p}.bias"))?)?;
    let h = tape.tanh(s);
    let o = tape.matmul(h, bound.var(&format!("{p}.out"))?)?;
    let o = tape.add_row(o, bound.var(&format!("{p}.out_bias"))?)?;
    tape.log_softmax(o)
}

/// Encoder outputs `T x H` on the tape.
pub fn encode_tape(tape: &mut Tape, model: &Model, bound: &Bound<'_>, features: &Tensor) -> Result<Var> {
    let cfg = &model.config;
    if features.numel() == 0 {
        return Err(Error::Invalid("empty feature sequence".into()));
    }
    if features.cols() != cfg.input_dim {
        return Err(Error::shape("encode", features.shape(), &[cfg.input_dim]));
    }
    let mut x = tape.constant(features.clone());
    for l in 0..cfg.encoder_layers {
        x = lstm_layer_tape(tape, x, &bound.lstm("encoder", l)?)?;
    }
    Ok(x)
}

/// Prediction outputs `(U+1) x H` on the tape.
pub fn predict_tape(tape: &mut Tape, model: &Model, bound: &Bound<'_>, labels: &[usize]) -> Result<Var> {
    let cfg = &model.config;
    if let Some(&bad) = labels.iter().find(|&&y| y >= cfg.table.blank()) {
        return Err(Error::Invalid(format!("label {bad} is blank or out of range")));
    }
    let start = bound.var("prediction.start")?;
    let mut x = if labels.is_empty() {
        start
    } else {
        let emb = tape.gather_rows(bound.var("prediction.embedding")?, labels)?;
        tape.concat_rows(&[start, emb])?
    };
    for l in 0..cfg.prediction_layers {
        x = lstm_layer_tape(tape, x, &bound.lstm("prediction", l)?)?;
    }
    Ok(x)
}

/// Log language weights `T x 2` from the attention block.
pub fn attention_tape(tape: &mut Tape, bound: &Bound<'_>, enc: Var, look_ahead: LookAhead) -> Result<Var> {
    let q = tape.matmul(enc, bound.var("attention.query")?)?;
    let k = tape.matmul(enc, bound.var("attention.key")?)?;
    let v = tape.matmul(enc, bound.var("attention.value")?)?;
    let dk = tape.value(q).cols();
    let kt = tape.transpose(k);
    let s = tape.matmul(q, kt)?;
    let s = tape.scale(s, 1.0 / (dk as f64).sqrt());
    let a = tape.masked_softmax(s, look_ahead.frames())?;
    let ctx = tape.matmul(a, v)?;
    let h = tape.matmul(ctx, bound.var("attention.ffn_w1")?)?;
    let h = tape.add_row(h, bound.var("attention.ffn_b1")?)?;
    let h = tape.tanh(h);
    let o = tape.matmul(h, bound.var("attention.ffn_w2")?)?;
    let o = tape.add_row(o, bound.var("attention.ffn_b2")?)?;
    tape.log_softmax(o)
}

/// Posterior grid of one utterance recorded on the tape.
pub fn grid_tape(
    tape: &mut Tape,
    model: &Model,
    bound: &Bound<'_>,
    features: &Tensor,
    labels: &[usize],
    weighting: Weighting,
) -> Result<TapeGrid> {
    let cfg = &model.config;
    let enc = encode_tape(tape, model, bound, features)?;
    let pred = predict_tape(tape, model, bound, labels)?;
    let (frames, positions) = (features.rows(), labels.len() + 1);
    if cfg.architecture == Architecture::Vanilla {
        let grid = joint_tape(tape, bound, None, enc, pred)?;
        return Ok(TapeGrid {
            grid,
            log_weights: None,
            frames,
            positions,
        });
    }
    let rows = frames * positions;
    let (lw_a, lw_b, log_weights) = match (weighting, cfg.architecture) {
        (Weighting::Model, Architecture::MultiSoftmaxAttn) => {
            let la = cfg.look_ahead().unwrap_or(LookAhead::Infinite);
            let lw = attention_tape(tape, bound, enc, la)?;
            let a = tape.slice_cols(lw, 0, 1)?;
            let b = tape.slice_cols(lw, 1, 2)?;
            let a = tape.repeat_rows(a, positions)?;
            let b = tape.repeat_rows(b, positions)?;
            (a, b, Some(lw))
        }
        (w, _) => {
            let (wa, wb) = match w {
                Weighting::Fixed(a, b) => (a, b),
                Weighting::Model => (0.5, 0.5),
            };
            let a = tape.constant(Tensor::full(&[rows, 1], wa.ln()));
            let b = tape.constant(Tensor::full(&[rows, 1], wb.ln()));
            (a, b, None)
        }
    };
    let mut parts = Vec::with_capacity(3);
    let mut blanks = Vec::with_capacity(2);
    for (lang, lw) in [(Lang::A, lw_a), (Lang::B, lw_b)] {
        let table = cfg.table.table(lang);
        let logp = joint_tape(tape, bound, Some(lang), enc, pred)?;
        let nb = tape.select_cols(logp, &table.non_blank())?;
        parts.push(tape.add_col(nb, lw)?);
        let blank = tape.select_cols(logp, &[table.blank()])?;
        blanks.push(tape.add_col(blank, lw)?);
    }
    parts.push(tape.log_add_exp(blanks[0], blanks[1])?);
    let grid = tape.concat_cols(&parts)?;
    Ok(TapeGrid {
        grid,
        log_weights,
        frames,
        positions,
    })
}
