use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Stacks `stack` consecutive raw frames and keeps every `skip`-th stacked
/// frame. Output frame `i` concatenates `raw[i*skip .. i*skip + stack]`,
/// zero-padded past the end; `T = ceil(T0 / skip)`, `dim = stack * d0`.
pub fn stack_subsample(raw: &Tensor, stack: usize, skip: usize) -> Result<Tensor> {
    if stack == 0 || skip == 0 {
        return Err(Error::Invalid(format!("stack ({stack}) and skip ({skip}) must be >= 1")));
    }
    let (t0, d0) = (raw.rows(), raw.cols());
    if raw.numel() == 0 || t0 == 0 {
        return Err(Error::Data("cannot stack an empty feature sequence".into()));
    }
    let t = t0.div_ceil(skip);
    let dim = stack * d0;
    let mut data = vec![0.0; t * dim];
    for i in 0..t {
        for s in 0..stack {
            let src = i * skip + s;
            if src < t0 {
                data[i * dim + s * d0..i * dim + (s + 1) * d0].copy_from_slice(raw.row_slice(src));
            }
        }
    }
    Tensor::matrix(t, dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(t0: usize, d0: usize) -> Tensor {
        Tensor::matrix(t0, d0, (0..t0 * d0).map(|i| i as f64 + 1.0).collect()).unwrap()
    }

    #[test]
    fn exact_tiling() {
        let out = stack_subsample(&raw(9, 2), 3, 3).unwrap();
        assert_eq!(out.shape(), &[3, 6]);
        assert_eq!(out.row_slice(2), &[13.0, 14.0, 15.0, 16.0, 17.0, 18.0]);
    }

    #[test]
    fn tail_is_zero_padded() {
        let out = stack_subsample(&raw(10, 2), 3, 3).unwrap();
        assert_eq!(out.shape(), &[4, 6]);
        assert_eq!(out.row_slice(3), &[19.0, 20.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn unit_stack_is_identity() {
        let r = raw(5, 3);
        assert_eq!(stack_subsample(&r, 1, 1).unwrap(), Tensor::matrix(5, 3, r.data().to_vec()).unwrap());
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(stack_subsample(&Tensor::zeros(&[0, 4]), 3, 3).is_err());
        assert!(stack_subsample(&raw(3, 1), 0, 3).is_err());
    }

    proptest! {
        #[test]
        fn closed_form_shape(t0 in 1usize..40, d0 in 1usize..5, stack in 1usize..6, skip in 1usize..6) {
            let out = stack_subsample(&raw(t0, d0), stack, skip).unwrap();
            prop_assert_eq!(out.rows(), (t0 + skip - 1) / skip);
            prop_assert_eq!(out.cols(), stack * d0);
        }
    }
}
