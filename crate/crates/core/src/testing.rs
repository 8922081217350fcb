use rand::Rng;

use crate::spectral::{ModeFunction, C64};

/// Smooth random mode: coefficients decay like `e^{-|n|/4}`.
pub fn random_mode<R: Rng>(rng: &mut R, k: f64, n_max: usize) -> ModeFunction {
    ModeFunction::from_fn(k, n_max, |n| {
        let decay = (-(n.abs() as f64) / 4.0).exp();
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * decay
    })
}

/// Random mode with unit-size coefficients at every index.
pub fn rough_mode<R: Rng>(rng: &mut R, k: f64, n_max: usize) -> ModeFunction {
    ModeFunction::from_fn(k, n_max, |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}
