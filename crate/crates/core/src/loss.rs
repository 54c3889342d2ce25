//! Transducer negative log-likelihood over the `(t, u)` lattice.

use crate::error::{Error, Result};
use crate::model::PosteriorGrid;
use crate::numerics::{log_add_exp, log_sum_exp, Tape, Tensor, Var};

/// Largest `T + U` accepted by [`brute_force_nll`].
pub const BRUTE_FORCE_LIMIT: usize = 12;

/// Forward and backward variables of one utterance, in log domain.
#[derive(Debug, Clone)]
pub struct Lattice {
    frames: usize,
    positions: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    log_likelihood: f64,
}

impl Lattice {
    pub fn alpha(&self, t: usize, u: usize) -> f64 {
        self.alpha[t * self.positions + u]
    }

    pub fn beta(&self, t: usize, u: usize) -> f64 {
        self.beta[t * self.positions + u]
    }

    /// `alpha[T-1][U] + logp[T-1][U][blank]`.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// `beta[0][0]`, the same quantity computed from the other end.
    pub fn log_likelihood_backward(&self) -> f64 {
        self.beta[0]
    }

    /// For each diagonal `n = t + u`, the log-sum over its nodes of
    /// `alpha + beta`. Every alignment crosses each diagonal once, so each
    /// entry equals the total log-likelihood.
    pub fn diagonal_cuts(&self) -> Vec<f64> {
        let diagonals = self.frames + self.positions - 1;
        (0..diagonals)
            .map(|n| {
                let terms: Vec<f64> = (0..self.positions)
                    .filter(|&u| u <= n && n - u < self.frames)
                    .map(|u| self.alpha(n - u, u) + self.beta(n - u, u))
                    .collect();
                log_sum_exp(&terms)
            })
            .collect()
    }
}

fn check(grid: &PosteriorGrid, labels: &[usize]) -> Result<()> {
    if let Some(&bad) = labels.iter().find(|&&y| y == grid.blank() || y >= grid.symbols()) {
        return Err(Error::Invalid(format!("label {bad} is blank or outside {} symbols", grid.symbols())));
    }
    if grid.frames() == 0 {
        return Err(Error::Invalid("transducer loss needs at least one frame".into()));
    }
    if grid.positions() != labels.len() + 1 {
        return Err(Error::shape("transducer loss", &[grid.positions()], &[labels.len() + 1]));
    }
    Ok(())
}

/// Runs the forward and backward recursions.
pub fn lattice(grid: &PosteriorGrid, labels: &[usize]) -> Result<Lattice> {
    check(grid, labels)?;
    let (tn, un) = (grid.frames(), grid.positions());
    let blank = grid.blank();
    let idx = |t: usize, u: usize| t * un + u;
    let mut alpha = vec![f64::NEG_INFINITY; tn * un];
    alpha[0] = 0.0;
    for t in 0..tn {
        for u in 0..un {
            if t == 0 && u == 0 {
                continue;
            }
            let mut a = f64::NEG_INFINITY;
            if t > 0 {
                a = alpha[idx(t - 1, u)] + grid.get(t - 1, u, blank);
            }
            if u > 0 {
                a = log_add_exp(a, alpha[idx(t, u - 1)] + grid.get(t, u - 1, labels[u - 1]));
            }
            alpha[idx(t, u)] = a;
        }
    }
    let mut beta = vec![f64::NEG_INFINITY; tn * un];
    for t in (0..tn).rev() {
        for u in (0..un).rev() {
            beta[idx(t, u)] = if t == tn - 1 && u == un - 1 {
                grid.get(t, u, blank)
            } else {
                let mut b = f64::NEG_INFINITY;
                if t + 1 < tn {
                    b = grid.get(t, u, blank) + beta[idx(t + 1, u)];
                }
                if u + 1 < un {
                    b = log_add_exp(b, grid.get(t, u, labels[u]) + beta[idx(t, u + 1)]);
                }
                b
            };
        }
    }
    let log_likelihood = alpha[idx(tn - 1, un - 1)] + grid.get(tn - 1, un - 1, blank);
    Ok(Lattice {
        frames: tn,
        positions: un,
        alpha,
        beta,
        log_likelihood,
    })
}

/// `-log P(labels | grid)` summed over all monotonic alignments.
pub fn transducer_nll(grid: &PosteriorGrid, labels: &[usize]) -> Result<f64> {
    Ok(-lattice(grid, labels)?.log_likelihood())
}

/// Loss and its gradient with respect to every grid entry (same layout as
/// [`PosteriorGrid::data`]). Entry `(t, u, k)` is minus the posterior
/// probability that an alignment emits `k` at node `(t, u)`.
pub fn transducer_grad(grid: &PosteriorGrid, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    let lat = lattice(grid, labels)?;
    let ll = lat.log_likelihood();
    if !ll.is_finite() {
        return Err(Error::Numeric(format!("transducer log-likelihood is {ll}")));
    }
    let (tn, un) = (grid.frames(), grid.positions());
    let blank = grid.blank();
    let mut grad = vec![0.0; grid.data().len()];
    for t in 0..tn {
        for u in 0..un {
            let a = lat.alpha(t, u);
            let o = grid.offset(t, u);
            let next_blank = if t + 1 < tn {
                Some(lat.beta(t + 1, u))
            } else if u + 1 == un {
                Some(0.0)
            } else {
                None
            };
            if let Some(b) = next_blank {
                grad[o + blank] = -(a + grid.get(t, u, blank) + b - ll).exp();
            }
            if u + 1 < un {
                let y = labels[u];
                grad[o + y] = -(a + grid.get(t, u, y) + lat.beta(t, u + 1) - ll).exp();
            }
        }
    }
    Ok((-ll, grad))
}

/// Sums the probability of every alignment explicitly in the linear domain.
pub fn brute_force_nll(grid: &PosteriorGrid, labels: &[usize]) -> Result<f64> {
    check(grid, labels)?;
    let total = enumerate_paths(grid.frames(), labels.len())?
        .iter()
        .map(|path| path_probability(grid, labels, path))
        .sum::<f64>();
    Ok(-total.ln())
}

fn path_probability(grid: &PosteriorGrid, labels: &[usize], path: &[bool]) -> f64 {
    let (mut t, mut u) = (0, 0);
    let mut p = 1.0;
    for &emit in path {
        if emit {
            p *= grid.get(t, u, labels[u]).exp();
            u += 1;
        } else {
            p *= grid.get(t, u, grid.blank()).exp();
            t += 1;
        }
    }
    p
}

/// Every alignment of `frames` blanks and `labels` emissions that ends with
/// a blank, as a sequence of steps (`true` = emit the next label).
pub fn enumerate_paths(frames: usize, labels: usize) -> Result<Vec<Vec<bool>>> {
    if frames + labels > BRUTE_FORCE_LIMIT {
        return Err(Error::Invalid(format!(
            "enumeration limited to T + U <= {BRUTE_FORCE_LIMIT}, got {}",
            frames + labels
        )));
    }
    if frames == 0 {
        return Ok(Vec::new());
    }
    fn walk(blanks: usize, emits: usize, prefix: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
        if blanks == 0 && emits == 0 {
            let mut path = prefix.clone();
            path.push(false);
            out.push(path);
            return;
        }
        if blanks > 0 {
            prefix.push(false);
            walk(blanks - 1, emits, prefix, out);
            prefix.pop();
        }
        if emits > 0 {
            prefix.push(true);
            walk(blanks, emits - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    walk(frames - 1, labels, &mut Vec::new(), &mut out);
    Ok(out)
}

fn tape_grid(tape: &Tape, grid: Var, frames: usize, positions: usize, blank: usize) -> Result<PosteriorGrid> {
    let t = tape.value(grid);
    if t.rows() != frames * positions {
        return Err(Error::shape("transducer loss", t.shape(), &[frames * positions]));
    }
    PosteriorGrid::new(frames, positions, t.cols(), blank, t.data().to_vec())
}

/// Loss on the tape with the analytic gradient.
pub fn transducer_loss_tape(
    tape: &mut Tape,
    grid: Var,
    frames: usize,
    positions: usize,
    blank: usize,
    labels: &[usize],
) -> Result<Var> {
    let g = tape_grid(tape, grid, frames, positions, blank)?;
    let (loss, grad) = transducer_grad(&g, labels)?;
    let shape = tape.shape(grid).to_vec();
    tape.fused_scalar(loss, vec![(grid, Tensor::new(shape, grad)?)])
}

/// The same loss built from elementary tape ops, so its gradient comes
/// from autodiff through every log-add.
pub fn transducer_loss_tape_composed(
    tape: &mut Tape,
    grid: Var,
    frames: usize,
    positions: usize,
    blank: usize,
    labels: &[usize],
) -> Result<Var> {
    let g = tape_grid(tape, grid, frames, positions, blank)?;
    check(&g, labels)?;
    let k = g.symbols();
    let at = |t: usize, u: usize, s: usize| (t * positions + u) * k + s;
    let mut alpha: Vec<Option<Var>> = vec![None; frames * positions];
    for t in 0..frames {
        for u in 0..positions {
            let mut a: Option<Var> = None;
            if t > 0 {
                let lp = tape.gather(grid, &[at(t - 1, u, blank)])?;
                let prev = alpha[(t - 1) * positions + u].expect("computed");
                a = Some(tape.add(prev, lp)?);
            }
            if u > 0 {
                let lp = tape.gather(grid, &[at(t, u - 1, labels[u - 1])])?;
                let prev = alpha[t * positions + u - 1].expect("computed");
                let e = tape.add(prev, lp)?;
                a = Some(match a {
                    Some(b) => tape.log_add_exp(b, e)?,
                    None => e,
                });
            }
            alpha[t * positions + u] = Some(match a {
                Some(v) => v,
                None => tape.constant(Tensor::full(&[1, 1], 0.0)),
            });
        }
    }
    let last = alpha[frames * positions - 1].expect("computed");
    let lp = tape.gather(grid, &[at(frames - 1, positions - 1, blank)])?;
    let ll = tape.add(last, lp)?;
    let s = tape.sum(ll);
    Ok(tape.scale(s, -1.0))
}
