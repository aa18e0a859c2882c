//! Shared fixtures for the kernel benchmarks.

use dcsrn_core::volume::{make_phantom, normalize_intensity};
use dcsrn_core::{PhantomSpec, Tensor, Volume3D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A normalized phantom of the given size.
pub fn phantom(dims: [usize; 3], seed: u64) -> Volume3D {
    let v = make_phantom(&PhantomSpec::new(dims, seed)).expect("valid phantom spec");
    normalize_intensity(&v).expect("phantom is not constant")
}

/// Standard-normal tensor scaled by `std`.
pub fn randn(shape: [usize; 5], std: f64, seed: u64) -> Tensor<f32> {
    Tensor::randn(shape, std, &mut ChaCha8Rng::seed_from_u64(seed))
}
