use super::combine::combine_log;
use super::config::{Architecture, LookAhead};
use super::grid::{AttentionTrajectory, PosteriorGrid};
use super::params::joint_prefix;
use super::Model;
use crate::corpus::Lang;
use crate::error::{Error, Result};
use crate::numerics::lstm::{cell_from_gates, input_gates};
use crate::numerics::{dot, log_softmax_in_place, softmax_in_place, vec_mat, LstmWeights, Tensor};

/// How the language weights of a multi-softmax model are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    /// Fixed 0.5/0.5 for `multisoftmax`, attention for `multisoftmax_attn`.
    Model,
    /// Externally forced `(w_A, w_B)`.
    Fixed(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceOptions {
    /// Replaces the configured attention look-ahead.
    pub look_ahead: Option<LookAhead>,
    pub weighting: Weighting,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            look_ahead: None,
            weighting: Weighting::Model,
        }
    }
}

struct Joint<'m> {
    enc_proj: &'m Tensor,
    pred_proj: &'m Tensor,
    bias: &'m Tensor,
    out: &'m Tensor,
    out_bias: &'m Tensor,
}

struct Attention<'m> {
    query: &'m Tensor,
    key: &'m Tensor,
    value: &'m Tensor,
    w1: &'m Tensor,
    b1: &'m Tensor,
    w2: &'m Tensor,
    b2: &'m Tensor,
}

/// Parameter views for step-by-step inference without a tape.
pub struct Inference<'m> {
    model: &'m Model,
    encoder: Vec<LstmWeights<'m>>,
    prediction: Vec<LstmWeights<'m>>,
    embedding: &'m Tensor,
    start: &'m Tensor,
    joints: Vec<Joint<'m>>,
    attention: Option<Attention<'m>>,
    look_ahead: LookAhead,
    fixed: Option<(f64, f64)>,
}

/// Recurrent state of the encoder stack.
#[derive(Debug, Clone)]
pub struct EncoderState {
    h: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
}

/// Prediction-network state after consuming a label prefix, with the
/// prediction-side joint projections cached.
#[derive(Debug, Clone, PartialEq)]
pub struct PredState {
    h: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    output: Vec<f64>,
    proj: Vec<Vec<f64>>,
}

impl PredState {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// Per-frame query, key and value projections seen so far.
#[derive(Debug, Clone, Default)]
pub struct AttentionCache {
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AttentionCache {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Everything the joint needs from one encoder frame.
#[derive(Debug, Clone)]
pub struct FrameCtx {
    enc_proj: Vec<Vec<f64>>,
    /// Log language weights; `None` for vanilla.
    log_weights: Option<[f64; 2]>,
}

impl FrameCtx {
    pub fn weights(&self) -> Option<[f64; 2]> {
        self.log_weights.map(|[a, b]| [a.exp(), b.exp()])
    }

    pub fn log_weights(&self) -> Option<[f64; 2]> {
        self.log_weights
    }

    /// Replaces the language weights of a multi-softmax frame.
    pub fn set_log_weights(&mut self, lw: [f64; 2]) {
        if self.log_weights.is_some() {
            self.log_weights = Some(lw);
        }
    }
}

fn add_into(acc: &mut [f64], other: &[f64]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}

impl<'m> Inference<'m> {
    pub fn new(model: &'m Model, options: InferenceOptions) -> Result<Self> {
        let cfg = &model.config;
        let p = &model.params;
        let lstm = |prefix: &str, l: usize| -> Result<LstmWeights<'m>> {
            Ok(LstmWeights {
                w_ih: p.get(&format!("{prefix}.{l}.w_ih"))?,
                w_hh: p.get(&format!("{prefix}.{l}.w_hh"))?,
                bias: p.get(&format!("{prefix}.{l}.bias"))?,
            })
        };
        let encoder = (0..cfg.encoder_layers).map(|l| lstm("encoder", l)).collect::<Result<_>>()?;
        let prediction = (0..cfg.prediction_layers).map(|l| lstm("prediction", l)).collect::<Result<_>>()?;
        let joint = |lang: Option<Lang>| -> Result<Joint<'m>> {
            let pre = joint_prefix(lang);
            Ok(Joint {
                enc_proj: p.get(&format!("{pre}.enc_proj"))?,
                pred_proj: p.get(&format!("{pre}.pred_proj"))?,
                bias: p.get(&format!("{pre}.bias"))?,
                out: p.get(&format!("{pre}.out"))?,
                out_bias: p.get(&format!("{pre}.out_bias"))?,
            })
        };
        let joints = match cfg.architecture {
            Architecture::Vanilla => vec![joint(None)?],
            _ => vec![joint(Some(Lang::A))?, joint(Some(Lang::B))?],
        };
        let attention = match cfg.architecture {
            Architecture::MultiSoftmaxAttn => Some(Attention {
                query: p.get("attention.query")?,
                key: p.get("attention.key")?,
                value: p.get("attention.value")?,
                w1: p.get("attention.ffn_w1")?,
                b1: p.get("attention.ffn_b1")?,
                w2: p.get("attention.ffn_w2")?,
                b2: p.get("attention.ffn_b2")?,
            }),
            _ => None,
        };
        let fixed = match (options.weighting, cfg.architecture) {
            (_, Architecture::Vanilla) => None,
            (Weighting::Fixed(a, b), _) => {
                if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || (a + b - 1.0).abs() > 1e-9 {
                    return Err(Error::Invalid(format!("forced weights ({a}, {b}) are not a distribution")));
                }
                Some((a, b))
            }
            (Weighting::Model, Architecture::MultiSoftmax) => Some((0.5, 0.5)),
            (Weighting::Model, Architecture::MultiSoftmaxAttn) => None,
        };
        let look_ahead = options
            .look_ahead
            .or_else(|| cfg.look_ahead())
            .unwrap_or(LookAhead::Infinite);
        Ok(Self {
            model,
            encoder,
            prediction,
            embedding: p.get("prediction.embedding")?,
            start: p.get("prediction.start")?,
            joints,
            attention,
            look_ahead,
            fixed,
        })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn look_ahead(&self) -> LookAhead {
        self.look_ahead
    }

    /// Whether per-frame weights come from the attention block.
    pub fn uses_attention(&self) -> bool {
        self.attention.is_some() && self.fixed.is_none()
    }

    pub fn encoder_start(&self) -> EncoderState {
        let h = self.model.config.encoder_hidden;
        let n = self.encoder.len();
        EncoderState {
            h: vec![vec![0.0; h]; n],
            c: vec![vec![0.0; h]; n],
        }
    }

    /// Advances the encoder by one input frame and returns the top-layer output.
    pub fn encode_frame(&self, state: &mut EncoderState, x: &[f64]) -> Result<Vec<f64>> {
        let mut input = x.to_vec();
        for (l, w) in self.encoder.iter().enumerate() {
            let z = input_gates(&input, w)?;
            let (h, c) = cell_from_gates(z, &state.h[l], &state.c[l], w)?;
            state.h[l] = h;
            state.c[l] = c;
            input = state.h[l].clone();
        }
        Ok(input)
    }

    /// Encoder outputs for every frame of `features (T x input_dim)`.
    pub fn encode(&self, features: &Tensor) -> Result<Vec<Vec<f64>>> {
        if features.numel() == 0 {
            return Err(Error::Invalid("empty feature sequence".into()));
        }
        if features.cols() != self.model.config.input_dim {
            return Err(Error::shape("encode", features.shape(), &[self.model.config.input_dim]));
        }
        let mut state = self.encoder_start();
        (0..features.rows())
            .map(|t| self.encode_frame(&mut state, features.row_slice(t)))
            .collect()
    }

    fn pred_advance(&self, prev: Option<&PredState>, input: &[f64]) -> Result<PredState> {
        let hid = self.model.config.prediction_hidden;
        let zeros = vec![vec![0.0; hid]; self.prediction.len()];
        let (h0, c0) = match prev {
            Some(s) => (&s.h, &s.c),
            None => (&zeros, &zeros),
        };
        let mut h = Vec::with_capacity(self.prediction.len());
        let mut c = Vec::with_capacity(self.prediction.len());
        let mut x = input.to_vec();
        for (l, w) in self.prediction.iter().enumerate() {
            let z = input_gates(&x, w)?;
            let (hl, cl) = cell_from_gates(z, &h0[l], &c0[l], w)?;
            x = hl.clone();
            h.push(hl);
            c.push(cl);
        }
        let proj = self
            .joints
            .iter()
            .map(|j| vec_mat(&x, j.pred_proj.data(), j.pred_proj.cols()))
            .collect();
        Ok(PredState { h, c, output: x, proj })
    }

    /// State after the start-of-sequence input.
    pub fn pred_start(&self) -> Result<PredState> {
        self.pred_advance(None, self.start.data())
    }

    /// State after additionally consuming `label` (a combined non-blank index).
    pub fn pred_step(&self, state: &PredState, label: usize) -> Result<PredState> {
        let table = &self.model.config.table;
        if label >= table.blank() {
            return Err(Error::Invalid(format!(
                "prediction input {label} is blank or out of range (blank = {})",
                table.blank()
            )));
        }
        self.pred_advance(Some(state), self.embedding.row_slice(label))
    }

    /// Prediction outputs for positions `0..=U`.
    pub fn predict(&self, labels: &[usize]) -> Result<Vec<PredState>> {
        let mut out = vec![self.pred_start()?];
        for &y in labels {
            let next = self.pred_step(out.last().expect("start state"), y)?;
            out.push(next);
        }
        Ok(out)
    }

    fn joint_logits(&self, j: &Joint<'_>, enc_proj: &[f64], pred_proj: &[f64]) -> Vec<f64> {
        let hidden: Vec<f64> = enc_proj
            .iter()
            .zip(pred_proj)
            .zip(j.bias.data())
            .map(|((e, p), b)| (e + p + b).tanh())
            .collect();
        let mut out = vec_mat(&hidden, j.out.data(), j.out.cols());
        add_into(&mut out, j.out_bias.data());
        log_softmax_in_place(&mut out);
        out
    }

    fn check_vectors(&self, h_enc: &[f64], h_pred: &[f64]) -> Result<()> {
        let cfg = &self.model.config;
        if h_enc.len() != cfg.encoder_hidden || h_pred.len() != cfg.prediction_hidden {
            return Err(Error::shape(
                "joint",
                &[h_enc.len(), h_pred.len()],
                &[cfg.encoder_hidden, cfg.prediction_hidden],
            ));
        }
        Ok(())
    }

    /// Shared joint over the combined symbols (vanilla only).
    pub fn joint_vanilla(&self, h_enc: &[f64], h_pred: &[f64]) -> Result<Vec<f64>> {
        if self.model.config.architecture != Architecture::Vanilla {
            return Err(Error::Invalid(format!(
                "joint_vanilla on a {} model",
                self.model.config.architecture.name()
            )));
        }
        self.check_vectors(h_enc, h_pred)?;
        let j = &self.joints[0];
        let e = vec_mat(h_enc, j.enc_proj.data(), j.enc_proj.cols());
        let p = vec_mat(h_pred, j.pred_proj.data(), j.pred_proj.cols());
        Ok(self.joint_logits(j, &e, &p))
    }

    /// One language's joint over its own table.
    pub fn joint_language(&self, h_enc: &[f64], h_pred: &[f64], lang: Lang) -> Result<Vec<f64>> {
        if !self.model.config.architecture.has_language_joints() {
            return Err(Error::Invalid("joint_language on a vanilla model".into()));
        }
        self.check_vectors(h_enc, h_pred)?;
        let j = &self.joints[lang.index()];
        let e = vec_mat(h_enc, j.enc_proj.data(), j.enc_proj.cols());
        let p = vec_mat(h_pred, j.pred_proj.data(), j.pred_proj.cols());
        Ok(self.joint_logits(j, &e, &p))
    }

    /// Adds one encoder frame's projections to the attention cache.
    pub fn attention_push(&self, cache: &mut AttentionCache, h_enc: &[f64]) {
        if let Some(a) = &self.attention {
            cache.q.push(vec_mat(h_enc, a.query.data(), a.query.cols()));
            cache.k.push(vec_mat(h_enc, a.key.data(), a.key.cols()));
            cache.v.push(vec_mat(h_enc, a.value.data(), a.value.cols()));
        }
    }

    /// Log language weights of frame `t` attending over frames `0..=last`.
    pub fn attention_log_weights(&self, cache: &AttentionCache, t: usize, last: usize) -> Result<[f64; 2]> {
        let a = self
            .attention
            .as_ref()
            .ok_or_else(|| Error::Invalid("model has no attention block".into()))?;
        if t > last || last >= cache.len() {
            return Err(Error::Invalid(format!(
                "attention frame {t} (visible up to {last}) outside {} cached frames",
                cache.len()
            )));
        }
        let dk = a.query.cols();
        let scale = 1.0 / (dk as f64).sqrt();
        let q = &cache.q[t];
        let mut scores: Vec<f64> = cache.k[..=last].iter().map(|k| dot(q, k) * scale).collect();
        softmax_in_place(&mut scores);
        let mut ctx = vec![0.0; dk];
        for (s, v) in scores.iter().zip(&cache.v[..=last]) {
            for (c, x) in ctx.iter_mut().zip(v) {
                *c += s * x;
            }
        }
        let mut hidden = vec_mat(&ctx, a.w1.data(), a.w1.cols());
        for (h, b) in hidden.iter_mut().zip(a.b1.data()) {
            *h = (*h + b).tanh();
        }
        let mut logits = vec_mat(&hidden, a.w2.data(), 2);
        add_into(&mut logits, a.b2.data());
        log_softmax_in_place(&mut logits);
        Ok([logits[0], logits[1]])
    }

    /// Language weights `(w_A, w_B)` of frame `t` given all encoder outputs.
    pub fn attention_weights(&self, h_enc: &[Vec<f64>], t: usize, look_ahead: LookAhead) -> Result<(f64, f64)> {
        if t >= h_enc.len() {
            return Err(Error::Invalid(format!("frame {t} out of range for {} frames", h_enc.len())));
        }
        let last = look_ahead.last_visible(t, h_enc.len());
        let mut cache = AttentionCache::default();
        for h in &h_enc[..=last] {
            self.attention_push(&mut cache, h);
        }
        let [a, b] = self.attention_log_weights(&cache, t, last)?;
        Ok((a.exp(), b.exp()))
    }

    /// Frame context from an encoder output and, when attention is active,
    /// the log weights of that frame.
    pub fn frame(&self, h_enc: &[f64], log_weights: Option<[f64; 2]>) -> Result<FrameCtx> {
        let log_weights = match (self.model.config.architecture, self.fixed) {
            (Architecture::Vanilla, _) => None,
            (_, Some((a, b))) => Some([a.ln(), b.ln()]),
            (_, None) => Some(log_weights.ok_or_else(|| Error::Invalid("attention weights missing for frame".into()))?),
        };
        let enc_proj = self
            .joints
            .iter()
            .map(|j| vec_mat(h_enc, j.enc_proj.data(), j.enc_proj.cols()))
            .collect();
        Ok(FrameCtx { enc_proj, log_weights })
    }

    /// Combined-symbol log-probabilities for one lattice node.
    pub fn log_probs(&self, frame: &FrameCtx, pred: &PredState) -> Vec<f64> {
        match frame.log_weights {
            None => self.joint_logits(&self.joints[0], &frame.enc_proj[0], &pred.proj[0]),
            Some([lw_a, lw_b]) => {
                let la = self.joint_logits(&self.joints[0], &frame.enc_proj[0], &pred.proj[0]);
                let lb = self.joint_logits(&self.joints[1], &frame.enc_proj[1], &pred.proj[1]);
                combine_log(&self.model.config.table, &la, &lb, lw_a, lw_b)
            }
        }
    }

    /// Frame contexts for a whole utterance plus the weight trajectory.
    pub fn frames(&self, features: &Tensor) -> Result<(Vec<FrameCtx>, Option<AttentionTrajectory>)> {
        let h_enc = self.encode(features)?;
        let n = h_enc.len();
        if !self.uses_attention() {
            let frames = h_enc.iter().map(|h| self.frame(h, None)).collect::<Result<_>>()?;
            return Ok((frames, None));
        }
        let mut cache = AttentionCache::default();
        for h in &h_enc {
            self.attention_push(&mut cache, h);
        }
        let mut frames = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for (t, h) in h_enc.iter().enumerate() {
            let lw = self.attention_log_weights(&cache, t, self.look_ahead.last_visible(t, n))?;
            weights.push([lw[0].exp(), lw[1].exp()]);
            frames.push(self.frame(h, Some(lw))?);
        }
        Ok((frames, Some(AttentionTrajectory { weights })))
    }

    /// The full `T x (U+1)` grid for a labelled utterance.
    pub fn posterior_grid(&self, features: &Tensor, labels: &[usize]) -> Result<(PosteriorGrid, Option<AttentionTrajectory>)> {
        let (frames, traj) = self.frames(features)?;
        let preds = self.predict(labels)?;
        let k = self.model.config.table.len();
        let mut data = Vec::with_capacity(frames.len() * preds.len() * k);
        for f in &frames {
            for p in &preds {
                data.extend(self.log_probs(f, p));
            }
        }
        let grid = PosteriorGrid::new(frames.len(), preds.len(), k, self.model.config.table.blank(), data)?;
        Ok((grid, traj))
    }
}
