use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::log_add_exp;

/// A finished decoding result: labels, the frame each label was emitted
/// at, and the total log score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub labels: Vec<usize>,
    pub frames: Vec<usize>,
    pub score: f64,
}

#[derive(Debug, Clone)]
struct Hyp<S> {
    labels: Vec<usize>,
    frames: Vec<usize>,
    score: f64,
    state: S,
}

impl<S> Hyp<S> {
    fn public(&self) -> Hypothesis {
        Hypothesis {
            labels: self.labels.clone(),
            frames: self.frames.clone(),
            score: self.score,
        }
    }
}

/// Ranking: higher score, then shorter prefix, then lexicographically
/// lower label sequence.
pub fn rank(a_score: f64, a: &[usize], b_score: f64, b: &[usize]) -> Ordering {
    b_score
        .total_cmp(&a_score)
        .then(a.len().cmp(&b.len()))
        .then_with(|| a.cmp(b))
}

fn merge<S>(into: &mut Hyp<S>, other: Hyp<S>) {
    let total = log_add_exp(into.score, other.score);
    if other.score > into.score {
        *into = other;
    }
    into.score = total;
}

/// Beam state carried across frames.
#[derive(Debug, Clone)]
pub struct Beam<S> {
    hyps: Vec<Hyp<S>>,
    width: usize,
    max_symbols: usize,
    frame: usize,
}

impl<S: Clone> Beam<S> {
    pub fn new(start: S, width: usize, max_symbols: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::Invalid("beam width must be >= 1".into()));
        }
        Ok(Self {
            hyps: vec![Hyp {
                labels: Vec::new(),
                frames: Vec::new(),
                score: 0.0,
                state: start,
            }],
            width,
            max_symbols,
            frame: 0,
        })
    }

    /// Frames consumed so far.
    pub fn frames(&self) -> usize {
        self.frame
    }

    /// Consumes one frame. Each step of the inner loop either closes a
    /// hypothesis for this frame with a blank or emits one more symbol;
    /// the best `width` of closed and open candidates survive each step.
    /// After `max_symbols` emissions in a frame only the blank is allowed.
    pub fn step<L, A>(&mut self, blank: usize, log_probs: L, advance: A) -> Result<()>
    where
        L: Fn(&S) -> Vec<f64>,
        A: Fn(&S, usize) -> Result<S>,
    {
        let mut closed: Vec<Hyp<S>> = Vec::new();
        let mut open = std::mem::take(&mut self.hyps);
        for step in 0..=self.max_symbols {
            if open.is_empty() {
                break;
            }
            let mut emits: Vec<(f64, usize, usize)> = Vec::new();
            for (i, h) in open.iter().enumerate() {
                let lp = log_probs(&h.state);
                let end = Hyp {
                    score: h.score + lp[blank],
                    ..h.clone()
                };
                match closed.iter_mut().find(|c| c.labels == end.labels) {
                    Some(c) => merge(c, end),
                    None => closed.push(end),
                }
                if step < self.max_symbols {
                    for (k, &v) in lp.iter().enumerate() {
                        if k != blank && v > f64::NEG_INFINITY {
                            emits.push((h.score + v, i, k));
                        }
                    }
                }
            }
            // emissions that reach the same prefix from different parents merge
            let mut by_prefix: HashMap<Vec<usize>, usize> = HashMap::new();
            let mut cands: Vec<(f64, Vec<usize>, usize, usize)> = Vec::new();
            for (score, i, k) in emits {
                let mut labels = open[i].labels.clone();
                labels.push(k);
                match by_prefix.get(&labels) {
                    Some(&j) => {
                        let c = &mut cands[j];
                        let total = log_add_exp(c.0, score);
                        if score > c.0 {
                            c.2 = i;
                        }
                        c.0 = total;
                    }
                    None => {
                        by_prefix.insert(labels.clone(), cands.len());
                        cands.push((score, labels, i, k));
                    }
                }
            }
            closed.retain(|h| h.score.is_finite());
            cands.retain(|c| c.0.is_finite());
            closed.sort_by(|a, b| rank(a.score, &a.labels, b.score, &b.labels));
            cands.sort_by(|a, b| rank(a.0, &a.1, b.0, &b.1));
            // keep the best `width` across both lists; closed wins exact ties
            let (mut ci, mut oi) = (0, 0);
            while ci + oi < self.width && (ci < closed.len() || oi < cands.len()) {
                let take_closed = match (closed.get(ci), cands.get(oi)) {
                    (Some(c), Some(o)) => rank(c.score, &c.labels, o.0, &o.1) != Ordering::Greater,
                    (Some(_), None) => true,
                    _ => false,
                };
                if take_closed {
                    ci += 1;
                } else {
                    oi += 1;
                }
            }
            closed.truncate(ci);
            cands.truncate(oi);
            let mut next = Vec::with_capacity(cands.len());
            for (score, labels, parent, k) in cands {
                let p = &open[parent];
                let mut frames = p.frames.clone();
                frames.push(self.frame);
                next.push(Hyp {
                    labels,
                    frames,
                    score,
                    state: advance(&p.state, k)?,
                });
            }
            open = next;
        }
        if closed.is_empty() {
            return Err(Error::Numeric(format!("every hypothesis has zero probability at frame {}", self.frame)));
        }
        closed.sort_by(|a, b| rank(a.score, &a.labels, b.score, &b.labels));
        self.hyps = closed;
        self.frame += 1;
        Ok(())
    }

    /// Current hypotheses, best first.
    pub fn hypotheses(&self) -> Vec<Hypothesis> {
        self.hyps.iter().map(Hyp::public).collect()
    }

    pub fn best(&self) -> Hypothesis {
        self.hyps[0].public()
    }
}

/// Argmax decoding: blank wins ties, then the lower index.
#[derive(Debug, Clone)]
pub struct Greedy<S> {
    hyp: Hyp<S>,
    max_symbols: usize,
    frame: usize,
}

impl<S: Clone> Greedy<S> {
    pub fn new(start: S, max_symbols: usize) -> Self {
        Self {
            hyp: Hyp {
                labels: Vec::new(),
                frames: Vec::new(),
                score: 0.0,
                state: start,
            },
            max_symbols,
            frame: 0,
        }
    }

    pub fn step<L, A>(&mut self, blank: usize, log_probs: L, advance: A) -> Result<()>
    where
        L: Fn(&S) -> Vec<f64>,
        A: Fn(&S, usize) -> Result<S>,
    {
        for emitted in 0..=self.max_symbols {
            let lp = log_probs(&self.hyp.state);
            let mut best = blank;
            if emitted < self.max_symbols {
                for (k, &v) in lp.iter().enumerate() {
                    if k != blank && v > lp[best] {
                        best = k;
                    }
                }
            }
            self.hyp.score += lp[best];
            if best == blank {
                break;
            }
            self.hyp.state = advance(&self.hyp.state, best)?;
            self.hyp.labels.push(best);
            self.hyp.frames.push(self.frame);
        }
        self.frame += 1;
        Ok(())
    }

    pub fn hypothesis(&self) -> Hypothesis {
        self.hyp.public()
    }
}
