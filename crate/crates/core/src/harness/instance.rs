use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::problem::LassoProblem;

/// Random instance with i.i.d. standard normal `A` (filled column by column)
/// and `b`.
pub fn gen_instance(n_x: usize, m: usize, tau: f64, rho: f64, seed: u64) -> Result<LassoProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let a = DMatrix::from_fn(m, n_x, |_, _| draw());
    let b = DVector::from_fn(m, |_, _| draw());
    LassoProblem::new(a, b, tau, rho)
}

/// Seed of instance `id` in a batch started from `base`.
pub fn instance_seed(base: u64, id: usize) -> u64 {
    base.wrapping_add(id as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_instance() {
        let a = gen_instance(4, 6, 1.0, 0.1, 5).unwrap();
        let b = gen_instance(4, 6, 1.0, 0.1, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_instance(4, 6, 1.0, 0.1, 6).unwrap());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(gen_instance(3, 3, 0.0, 0.1, 0).is_err());
        assert!(gen_instance(3, 3, 1.0, -1.0, 0).is_err());
    }
}
