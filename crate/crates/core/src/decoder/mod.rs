//! Greedy and beam-search decoding over the combined symbol set, offline
//! and streaming.

mod search;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use search::{rank, Beam, Greedy, Hypothesis};

use crate::analysis::{check_alpha, ema_step};
use crate::corpus::{CombinedSymbol, CombinedTable, Lang, SymbolKind};
use crate::error::{Error, Result};
use crate::model::{
    AttentionCache, AttentionTrajectory, EncoderState, FrameCtx, Inference, InferenceOptions, LookAhead, Model,
    PosteriorGrid, PredState,
};
use crate::numerics::Tensor;

pub const DEFAULT_MAX_SYMBOLS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeOptions {
    pub beam_width: usize,
    pub max_symbols_per_frame: usize,
    pub inference: InferenceOptions,
    /// EMA coefficient applied to the attention weights before decoding.
    pub smoothing: Option<f64>,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            beam_width: 4,
            max_symbols_per_frame: DEFAULT_MAX_SYMBOLS,
            inference: InferenceOptions::default(),
            smoothing: None,
        }
    }
}

/// Hypotheses best-first, with the weights used for each frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub hypotheses: Vec<Hypothesis>,
    pub trajectory: Option<AttentionTrajectory>,
}

impl Decoded {
    pub fn best(&self) -> &Hypothesis {
        &self.hypotheses[0]
    }
}

/// A decoded word and the frames its first and last symbols were emitted at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSpan {
    pub text: String,
    pub lang: Lang,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// Groups a hypothesis into words at word-start symbols; noise is dropped.
pub fn word_spans(table: &CombinedTable, hyp: &Hypothesis) -> Vec<WordSpan> {
    let mut words: Vec<WordSpan> = Vec::new();
    for (&idx, &frame) in hyp.labels.iter().zip(&hyp.frames) {
        let Ok(CombinedSymbol::Symbol(lang, local)) = table.from_combined(idx) else {
            continue;
        };
        let t = table.table(lang);
        match (t.kind(local), words.last_mut()) {
            (SymbolKind::Grapheme(g), Some(w)) => {
                w.text.push_str(&t.graphemes()[g]);
                w.end_frame = frame;
            }
            (SymbolKind::Grapheme(g) | SymbolKind::WordStart(g), _) => words.push(WordSpan {
                text: t.graphemes()[g].clone(),
                lang,
                start_frame: frame,
                end_frame: frame,
            }),
            _ => {}
        }
    }
    words
}

/// Words of a hypothesis.
pub fn transcript(table: &CombinedTable, hyp: &Hypothesis) -> Vec<String> {
    table.detokenize(&hyp.labels).into_iter().map(|w| w.text).collect()
}

/// Applies the configured smoothing to one frame's log weights.
fn smoothed(frame: &mut FrameCtx, prev: &mut Option<f64>, alpha: Option<f64>) {
    if let (Some(alpha), Some([wa, _])) = (alpha, frame.weights()) {
        let s = ema_step(*prev, wa, alpha);
        *prev = Some(s);
        frame.set_log_weights([s.ln(), (1.0 - s).ln()]);
    }
}

fn offline_frames(inf: &Inference<'_>, features: &Tensor, smoothing: Option<f64>) -> Result<(Vec<FrameCtx>, Option<AttentionTrajectory>)> {
    if let Some(a) = smoothing {
        check_alpha(a)?;
    }
    let (mut frames, traj) = inf.frames(features)?;
    if traj.is_none() || smoothing.is_none() {
        return Ok((frames, traj));
    }
    let mut prev = None;
    for f in frames.iter_mut() {
        smoothed(f, &mut prev, smoothing);
    }
    let weights = frames.iter().filter_map(FrameCtx::weights).collect();
    Ok((frames, Some(AttentionTrajectory { weights })))
}

pub fn greedy_decode(model: &Model, features: &Tensor, opts: &DecodeOptions) -> Result<Decoded> {
    let inf = model.inference(opts.inference)?;
    let (frames, trajectory) = offline_frames(&inf, features, opts.smoothing)?;
    let blank = model.config.table.blank();
    let mut g = Greedy::new(inf.pred_start()?, opts.max_symbols_per_frame);
    for f in &frames {
        g.step(blank, |s| inf.log_probs(f, s), |s, k| inf.pred_step(s, k))?;
    }
    Ok(Decoded {
        hypotheses: vec![g.hypothesis()],
        trajectory,
    })
}

pub fn beam_search(model: &Model, features: &Tensor, opts: &DecodeOptions) -> Result<Decoded> {
    let inf = model.inference(opts.inference)?;
    let (frames, trajectory) = offline_frames(&inf, features, opts.smoothing)?;
    let blank = model.config.table.blank();
    let mut beam = Beam::new(inf.pred_start()?, opts.beam_width, opts.max_symbols_per_frame)?;
    for f in &frames {
        beam.step(blank, |s| inf.log_probs(f, s), |s, k| inf.pred_step(s, k))?;
    }
    Ok(Decoded {
        hypotheses: beam.hypotheses(),
        trajectory,
    })
}

/// Greedy decoding over a precomputed grid; the state is the number of
/// labels emitted, clamped to the grid's last position.
pub fn greedy_decode_grid(grid: &PosteriorGrid, max_symbols: usize) -> Result<Hypothesis> {
    let last = grid.positions() - 1;
    let mut g = Greedy::new(0usize, max_symbols);
    for t in 0..grid.frames() {
        g.step(grid.blank(), |&u| grid.slice(t, u.min(last)).to_vec(), |&u, _| Ok(u + 1))?;
    }
    Ok(g.hypothesis())
}

pub fn beam_search_grid(grid: &PosteriorGrid, width: usize, max_symbols: usize) -> Result<Vec<Hypothesis>> {
    let last = grid.positions() - 1;
    let mut beam = Beam::new(0usize, width, max_symbols)?;
    for t in 0..grid.frames() {
        beam.step(grid.blank(), |&u| grid.slice(t, u.min(last)).to_vec(), |&u, _| Ok(u + 1))?;
    }
    Ok(beam.hypotheses())
}

/// Frame-synchronous decoder. Frame `t` is decoded once frame `t + L` has
/// arrived; [`StreamDecoder::finish`] flushes the tail.
pub struct StreamDecoder<'m> {
    inf: Inference<'m>,
    encoder: EncoderState,
    cache: AttentionCache,
    h_enc: Vec<Vec<f64>>,
    delay: usize,
    decoded: usize,
    smoothing: Option<f64>,
    smooth_prev: Option<f64>,
    weights: Vec<[f64; 2]>,
    beam: Beam<PredState>,
    blank: usize,
}

impl<'m> StreamDecoder<'m> {
    pub fn new(model: &'m Model, opts: &DecodeOptions) -> Result<Self> {
        if let Some(a) = opts.smoothing {
            check_alpha(a)?;
        }
        let inf = model.inference(opts.inference)?;
        let delay = if inf.uses_attention() {
            match inf.look_ahead() {
                LookAhead::Frames(l) => l,
                LookAhead::Infinite => {
                    return Err(Error::Config("streaming needs a finite attention look-ahead".into()))
                }
            }
        } else {
            0
        };
        let beam = Beam::new(inf.pred_start()?, opts.beam_width, opts.max_symbols_per_frame)?;
        Ok(Self {
            encoder: inf.encoder_start(),
            inf,
            cache: AttentionCache::default(),
            h_enc: Vec::new(),
            delay,
            decoded: 0,
            smoothing: opts.smoothing,
            smooth_prev: None,
            weights: Vec::new(),
            beam,
            blank: model.config.table.blank(),
        })
    }

    /// Frames received so far.
    pub fn received(&self) -> usize {
        self.h_enc.len()
    }

    /// Frames already decoded.
    pub fn decoded(&self) -> usize {
        self.decoded
    }

    /// Feeds one input frame and decodes every frame whose look-ahead is
    /// now available. Returns the current best hypothesis.
    pub fn push(&mut self, x: &[f64]) -> Result<Hypothesis> {
        if x.len() != self.inf.model().config.input_dim {
            return Err(Error::shape("stream frame", &[x.len()], &[self.inf.model().config.input_dim]));
        }
        let h = self.inf.encode_frame(&mut self.encoder, x)?;
        self.inf.attention_push(&mut self.cache, &h);
        self.h_enc.push(h);
        while self.decoded + self.delay < self.h_enc.len() {
            self.decode_next(self.decoded + self.delay)?;
        }
        Ok(self.beam.best())
    }

    fn decode_next(&mut self, last: usize) -> Result<()> {
        let t = self.decoded;
        let lw = if self.inf.uses_attention() {
            Some(self.inf.attention_log_weights(&self.cache, t, last)?)
        } else {
            None
        };
        let mut frame = self.inf.frame(&self.h_enc[t], lw)?;
        smoothed(&mut frame, &mut self.smooth_prev, self.smoothing);
        if let Some(w) = frame.weights() {
            if self.inf.uses_attention() {
                self.weights.push(w);
            }
        }
        let inf = &self.inf;
        self.beam
            .step(self.blank, |s| inf.log_probs(&frame, s), |s, k| inf.pred_step(s, k))?;
        self.decoded += 1;
        Ok(())
    }

    /// Decodes the remaining buffered frames at end of stream.
    pub fn finish(mut self) -> Result<Decoded> {
        if self.h_enc.is_empty() {
            return Err(Error::Invalid("stream ended before any frame arrived".into()));
        }
        let last = self.h_enc.len() - 1;
        while self.decoded < self.h_enc.len() {
            self.decode_next(last)?;
        }
        let trajectory = self.inf.uses_attention().then(|| AttentionTrajectory {
            weights: std::mem::take(&mut self.weights),
        });
        Ok(Decoded {
            hypotheses: self.beam.hypotheses(),
            trajectory,
        })
    }
}

/// Streams every row of `features` through a [`StreamDecoder`]; returns
/// the final result and the best partial hypothesis after each frame.
pub fn stream_decode<'a, I>(model: &Model, frames: I, opts: &DecodeOptions) -> Result<(Decoded, Vec<Hypothesis>)>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut dec = StreamDecoder::new(model, opts)?;
    let mut partials = Vec::new();
    for x in frames {
        partials.push(dec.push(x)?);
    }
    Ok((dec.finish()?, partials))
}

/// Iterates the rows of a `T x d` tensor.
pub fn rows(features: &Tensor) -> impl Iterator<Item = &[f64]> {
    (0..features.rows()).map(move |t| features.row_slice(t))
}

/// One line of n-best output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbestRecord {
    pub utterance_id: String,
    pub rank: usize,
    pub score: f64,
    pub transcript: String,
    pub words: Vec<String>,
    pub languages: Vec<Lang>,
    pub attention: Option<Vec<[f64; 2]>>,
}

pub fn nbest_records(table: &CombinedTable, utterance_id: &str, decoded: &Decoded) -> Vec<NbestRecord> {
    decoded
        .hypotheses
        .iter()
        .enumerate()
        .map(|(rank, h)| {
            let words = table.detokenize(&h.labels);
            NbestRecord {
                utterance_id: utterance_id.to_string(),
                rank: rank + 1,
                score: h.score,
                transcript: words.iter().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" "),
                words: words.iter().map(|w| w.text.clone()).collect(),
                languages: words.iter().map(|w| w.lang).collect(),
                attention: decoded.trajectory.as_ref().map(|t| t.weights.clone()),
            }
        })
        .collect()
}

pub fn write_nbest_jsonl<W: Write>(out: &mut W, records: &[NbestRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("n-best output", e))?;
    }
    Ok(())
}
