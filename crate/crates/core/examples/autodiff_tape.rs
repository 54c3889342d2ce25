//! Reverse-mode differentiation on the tape, checked against finite differences.

use codemix_rnnt::numerics::{grad_check, ParamRng, Tape, Tensor};

fn main() -> codemix_rnnt::Result<()> {
    let mut rng = ParamRng::new(3);
    let w = rng.uniform(&[3, 4], 0.5);
    let x = rng.uniform(&[2, 3], 1.0);

    // f(x) = sum(log_softmax(tanh(x W)))
    let f = |tape: &mut Tape, xv| {
        let wv = tape.constant(w.clone());
        let h = tape.matmul(xv, wv)?;
        let h = tape.tanh(h);
        let y = tape.log_softmax(h)?;
        Ok(tape.sum(y))
    };

    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let out = f(&mut tape, xv)?;
    let grads = tape.backward(out)?;
    println!("f(x) = {:.6}", tape.value(out).item()?);
    println!("df/dx = {:?}", grads.get(xv).data());
    println!("worst relative error vs central differences: {:.2e}", grad_check(f, &x, 1e-6)?);

    let t = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0])?;
    println!("tensor {:?} has {} elements", t.shape(), t.numel());
    Ok(())
}
