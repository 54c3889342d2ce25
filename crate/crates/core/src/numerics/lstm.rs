use super::tape::{Tape, Var};
use super::tensor::{self, Tensor};
use crate::error::{Error, Result};

/// Weights of one LSTM layer. Gate blocks are ordered input, forget,
/// candidate, output along the `4 * hidden` axis.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    /// `input x 4H`
    pub w_ih: &'a Tensor,
    /// `H x 4H`
    pub w_hh: &'a Tensor,
    /// `1 x 4H`
    pub bias: &'a Tensor,
}

impl LstmWeights<'_> {
    pub fn hidden(&self) -> usize {
        self.w_hh.rows()
    }

    fn check(&self, input: usize) -> Result<()> {
        let h = self.hidden();
        if self.w_hh.cols() != 4 * h || self.w_ih.cols() != 4 * h || self.bias.numel() != 4 * h {
            return Err(Error::shape("lstm weights", self.w_ih.shape(), self.w_hh.shape()));
        }
        if self.w_ih.rows() != input {
            return Err(Error::shape("lstm input", self.w_ih.shape(), &[input]));
        }
        Ok(())
    }
}

/// Tape handles of one LSTM layer's weights.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
}

/// Input-side gate pre-activations `x * W_ih + b`.
pub fn input_gates(x: &[f64], w: &LstmWeights<'_>) -> Result<Vec<f64>> {
    w.check(x.len())?;
    let mut z = tensor::vec_mat(x, w.w_ih.data(), w.w_ih.cols());
    for (v, b) in z.iter_mut().zip(w.bias.data()) {
        *v += b;
    }
    Ok(z)
}

/// Completes a cell step given the input-side pre-activations.
pub fn cell_from_gates(
    mut z: Vec<f64>,
    h: &[f64],
    c: &[f64],
    w: &LstmWeights<'_>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let hid = w.hidden();
    if h.len() != hid || c.len() != hid || z.len() != 4 * hid {
        return Err(Error::shape("lstm state", &[h.len(), c.len()], &[hid]));
    }
    let zh = tensor::vec_mat(h, w.w_hh.data(), 4 * hid);
    for (v, r) in z.iter_mut().zip(&zh) {
        *v += r;
    }
    let mut h_next = vec![0.0; hid];
    let mut c_next = vec![0.0; hid];
    for j in 0..hid {
        let i = tensor::sigmoid(z[j]);
        let f = tensor::sigmoid(z[hid + j]);
        let g = z[2 * hid + j].tanh();
        let o = tensor::sigmoid(z[3 * hid + j]);
        c_next[j] = f * c[j] + i * g;
        h_next[j] = o * c_next[j].tanh();
    }
    Ok((h_next, c_next))
}

/// One LSTM step: returns `(h', c')`.
pub fn lstm_cell(
    x: &[f64],
    h: &[f64],
    c: &[f64],
    w: &LstmWeights<'_>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let z = input_gates(x, w)?;
    cell_from_gates(z, h, c, w)
}

/// One LSTM step on the tape from precomputed input gates `zx (1 x 4H)`.
pub fn lstm_cell_tape(
    tape: &mut Tape,
    zx: Var,
    h: Var,
    c: Var,
    w: &LstmVars,
) -> Result<(Var, Var)> {
    let hid = tape.value(w.w_hh).rows();
    let zh = tape.matmul(h, w.w_hh)?;
    let z = tape.add(zx, zh)?;
    let zi = tape.slice_cols(z, 0, hid)?;
    let zf = tape.slice_cols(z, hid, 2 * hid)?;
    let zg = tape.slice_cols(z, 2 * hid, 3 * hid)?;
    let zo = tape.slice_cols(z, 3 * hid, 4 * hid)?;
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let g = tape.tanh(zg);
    let o = tape.sigmoid(zo);
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next);
    let h_next = tape.mul(o, tc)?;
    Ok((h_next, c_next))
}

/// Runs a layer over `inputs (T x in)` from a zero state; returns `T x H`.
pub fn lstm_layer_tape(tape: &mut Tape, inputs: Var, w: &LstmVars) -> Result<Var> {
    let hid = tape.value(w.w_hh).rows();
    let steps = tape.value(inputs).rows();
    let xw = tape.matmul(inputs, w.w_ih)?;
    let zx_all = tape.add_row(xw, w.bias)?;
    let mut h = tape.constant(Tensor::zeros(&[1, hid]));
    let mut c = tape.constant(Tensor::zeros(&[1, hid]));
    let mut outputs = Vec::with_capacity(steps);
    for t in 0..steps {
        let zx = tape.slice_rows(zx_all, t, t + 1)?;
        let (h2, c2) = lstm_cell_tape(tape, zx, h, c, w)?;
        outputs.push(h2);
        h = h2;
        c = c2;
    }
    tape.concat_rows(&outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::init::ParamRng;

    fn weights(input: usize, hid: usize, seed: u64) -> (Tensor, Tensor, Tensor) {
        let mut rng = ParamRng::new(seed);
        (
            rng.uniform(&[input, 4 * hid], 0.5),
            rng.uniform(&[hid, 4 * hid], 0.5),
            rng.uniform(&[1, 4 * hid], 0.5),
        )
    }

    #[test]
    fn zero_params_zero_state() {
        let (w_ih, w_hh, bias) = (
            Tensor::zeros(&[3, 8]),
            Tensor::zeros(&[2, 8]),
            Tensor::zeros(&[1, 8]),
        );
        let w = LstmWeights { w_ih: &w_ih, w_hh: &w_hh, bias: &bias };
        let (h, c) = lstm_cell(&[1.0, -2.0, 0.5], &[0.0, 0.0], &[0.0, 0.0], &w).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(c, vec![0.0, 0.0]);
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let hid = 2;
        let w_ih = Tensor::zeros(&[3, 8]);
        let w_hh = Tensor::zeros(&[hid, 8]);
        let mut b = vec![0.0; 8];
        b[hid..2 * hid].fill(50.0);
        let bias = Tensor::row(b);
        let w = LstmWeights { w_ih: &w_ih, w_hh: &w_hh, bias: &bias };
        let c = [0.7, -1.3];
        let (_, c2) = lstm_cell(&[0.0; 3], &[0.1, 0.2], &c, &w).unwrap();
        for j in 0..hid {
            assert!((c2[j] - c[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_scalar_reimplementation() {
        let (input, hid) = (3, 4);
        let (w_ih, w_hh, bias) = weights(input, hid, 11);
        let w = LstmWeights { w_ih: &w_ih, w_hh: &w_hh, bias: &bias };
        let x = [0.2, -0.4, 0.9];
        let h = [0.1, -0.3, 0.05, 0.6];
        let c = [-0.2, 0.4, 0.0, 1.1];
        let (h2, c2) = lstm_cell(&x, &h, &c, &w).unwrap();

        // gate-by-gate scalar oracle
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for j in 0..hid {
            let pre = |gate: usize| {
                let col = gate * hid + j;
                let mut s = bias.data()[col];
                for p in 0..input {
                    s += x[p] * w_ih.get(p, col);
                }
                for p in 0..hid {
                    s += h[p] * w_hh.get(p, col);
                }
                s
            };
            let cj = sig(pre(1)) * c[j] + sig(pre(0)) * pre(2).tanh();
            let hj = sig(pre(3)) * cj.tanh();
            assert!((c2[j] - cj).abs() < 1e-14);
            assert!((h2[j] - hj).abs() < 1e-14);
        }
    }

    #[test]
    fn tape_layer_matches_plain_steps() {
        let (input, hid) = (3, 4);
        let (w_ih, w_hh, bias) = weights(input, hid, 5);
        let w = LstmWeights { w_ih: &w_ih, w_hh: &w_hh, bias: &bias };
        let xs = Tensor::matrix(3, input, (0..9).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();

        let mut tape = Tape::new();
        let vars = LstmVars {
            w_ih: tape.param(w_ih.clone()),
            w_hh: tape.param(w_hh.clone()),
            bias: tape.param(bias.clone()),
        };
        let inputs = tape.constant(xs.clone());
        let out = lstm_layer_tape(&mut tape, inputs, &vars).unwrap();

        let (mut h, mut c) = (vec![0.0; hid], vec![0.0; hid]);
        for t in 0..3 {
            let (h2, c2) = lstm_cell(xs.row_slice(t), &h, &c, &w).unwrap();
            for j in 0..hid {
                assert!((tape.value(out).get(t, j) - h2[j]).abs() < 1e-14);
            }
            h = h2;
            c = c2;
        }
    }
}
