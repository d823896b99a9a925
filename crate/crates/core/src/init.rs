//! Seeded parameter initialization.

use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::tensor::Tensor;

pub type Rng = ChaCha8Rng;

/// A generator for one independent stream of a seed. Components that must
/// not disturb each other's draws (different parameter tensors, folds,
/// epochs) use distinct stream ids.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// `U(-sqrt(6 / (fan_in + fan_out)), +sqrt(6 / (fan_in + fan_out)))`
    GlorotUniform { fan_in: usize, fan_out: usize },
    Normal { std_dev: f64 },
    Zeros,
}

impl InitScheme {
    /// Glorot with fans read from a `[fan_out, fan_in]` weight shape.
    pub fn glorot_for(shape: &[usize]) -> Self {
        let (fan_out, fan_in) = match shape {
            [] => (1, 1),
            [n] => (1, *n),
            [o, i, ..] => (*o, *i),
        };
        InitScheme::GlorotUniform { fan_in, fan_out }
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

pub fn init_tensor(shape: &[usize], scheme: InitScheme, rng: &mut Rng) -> Tensor {
    let len: usize = shape.iter().product();
    let data: Vec<f64> = match scheme {
        InitScheme::Zeros => alloc::vec![0.0; len],
        InitScheme::Normal { std_dev: 0.0 } => alloc::vec![0.0; len],
        InitScheme::Normal { std_dev } => {
            let dist = Normal::new(0.0, std_dev).expect("finite standard deviation");
            (0..len).map(|_| dist.sample(rng)).collect()
        }
        InitScheme::GlorotUniform { fan_in, fan_out } => {
            let b = glorot_bound(fan_in, fan_out);
            let dist = Uniform::new_inclusive(-b, b).expect("finite bound");
            (0..len).map(|_| dist.sample(rng)).collect()
        }
    };
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}
