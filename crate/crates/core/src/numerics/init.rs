use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;

/// Seedable generator for parameter initialization.
#[derive(Debug, Clone)]
pub struct ParamRng(ChaCha8Rng);

impl ParamRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform entries in `(-r, r)`.
    pub fn uniform(&mut self, shape: &[usize], r: f64) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.0.gen_range(-r..r)).collect();
        Tensor::new(shape.to_vec(), data).expect("shape")
    }

    /// Uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn fan_in(&mut self, shape: &[usize], fan_in: usize) -> Tensor {
        self.uniform(shape, 1.0 / (fan_in.max(1) as f64).sqrt())
    }
}

/// Derives an independent child seed from a root seed and a stream label.
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = root ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
