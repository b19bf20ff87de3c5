//! Seeded random streams and the few variate generators the samplers need.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::Open01;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Generator used everywhere; ChaCha output is stable across platforms.
pub type StreamRng = ChaCha8Rng;

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform draw on the open interval (0, 1).
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

/// Gamma variate with the given shape and rate (mean shape / rate).
///
/// Shapes below one go through `G(a) = G(a + 1) · U^{1/a}` in log space, so
/// tiny shapes do not underflow to zero. The result is always positive.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    debug_assert!(shape > 0.0 && rate > 0.0, "gamma({shape}, {rate})");
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0 / rate).expect("valid gamma parameters");
        return g.sample(rng).max(f64::MIN_POSITIVE);
    }
    let boosted = Gamma::new(shape + 1.0, 1.0)
        .expect("valid gamma parameters")
        .sample(rng);
    let log_draw = boosted.ln() + open_unit(rng).ln() / shape - rate.ln();
    log_draw.exp().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_moments() {
        let mut rng = stream(3, 0);
        for &(shape, rate) in &[(0.3, 2.0), (2.0, 2.0), (7.5, 0.5)] {
            let n = 200_000;
            let draws: Vec<f64> = (0..n).map(|_| gamma(&mut rng, shape, rate)).collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            assert!((mean / (shape / rate) - 1.0).abs() < 0.02, "{shape} {rate} {mean}");
            assert!((var / (shape / rate / rate) - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn tiny_shape_stays_positive() {
        let mut rng = stream(1, 0);
        for _ in 0..1000 {
            assert!(gamma(&mut rng, 1e-7, 3.0) > 0.0);
        }
    }

    #[test]
    fn streams_differ() {
        let a: f64 = stream(5, 1).random();
        let b: f64 = stream(5, 2).random();
        assert_ne!(a, b);
    }
}
