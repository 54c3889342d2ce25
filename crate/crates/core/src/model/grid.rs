use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, Tensor};

/// Log-probabilities over the combined symbols for every encoder frame `t`
/// and label position `u` (`u = 0..=U`).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    frames: usize,
    positions: usize,
    symbols: usize,
    blank: usize,
    data: Vec<f64>,
}

impl PosteriorGrid {
    pub fn new(frames: usize, positions: usize, symbols: usize, blank: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * positions * symbols {
            return Err(Error::shape("posterior grid", &[frames, positions, symbols], &[data.len()]));
        }
        if positions == 0 || blank >= symbols {
            return Err(Error::Invalid(format!(
                "posterior grid needs positions >= 1 and blank < symbols (got {positions}, {blank}/{symbols})"
            )));
        }
        Ok(Self {
            frames,
            positions,
            symbols,
            blank,
            data,
        })
    }

    /// From a `(frames * positions) x symbols` tensor laid out `t`-major.
    pub fn from_tensor(t: &Tensor, frames: usize, positions: usize, blank: usize) -> Result<Self> {
        Self::new(frames, positions, t.cols(), blank, t.data().to_vec())
    }

    /// Builds a grid from a closure returning linear probabilities.
    pub fn from_probs(
        frames: usize,
        positions: usize,
        symbols: usize,
        blank: usize,
        prob: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(frames * positions * symbols);
        for t in 0..frames {
            for u in 0..positions {
                data.extend((0..symbols).map(|k| prob(t, u, k).ln()));
            }
        }
        Self::new(frames, positions, symbols, blank, data)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// `U + 1`.
    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn blank(&self) -> usize {
        self.blank
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn offset(&self, t: usize, u: usize) -> usize {
        (t * self.positions + u) * self.symbols
    }

    pub fn slice(&self, t: usize, u: usize) -> &[f64] {
        let o = self.offset(t, u);
        &self.data[o..o + self.symbols]
    }

    pub fn get(&self, t: usize, u: usize, k: usize) -> f64 {
        self.data[self.offset(t, u) + k]
    }

    /// Largest deviation of any slice's probability mass from 1.
    pub fn max_normalization_error(&self) -> f64 {
        self.data
            .chunks(self.symbols)
            .map(|s| (log_sum_exp(s).exp() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-frame language weights `(w_A, w_B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrajectory {
    pub weights: Vec<[f64; 2]>,
}

impl AttentionTrajectory {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn w_a(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().map(|w| w[0])
    }

    pub fn w_b(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().map(|w| w[1])
    }
}
