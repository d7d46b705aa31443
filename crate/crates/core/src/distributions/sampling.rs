use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::Serialize;

use super::Family;
use crate::prelude::*;
use crate::{Error, Result};

/// Seed of a reproducible random stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// An independent seed for sub-stream `index`.
    pub fn substream(self, index: u64) -> Seed {
        let mut z = self
            .0
            .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Seed(z ^ (z >> 31))
    }
}

/// `n` independent draws from `family`.
pub fn sample(family: &Family, n: usize, seed: Seed) -> Result<Vec<f64>> {
    family.validate()?;
    if n == 0 {
        return Err(Error::params("sample size must be at least 1"));
    }
    let mut rng = seed.rng();
    Ok((0..n).map(|_| draw(family, &mut rng)).collect())
}

pub(super) fn draw<R: Rng + ?Sized>(family: &Family, rng: &mut R) -> f64 {
    match *family {
        Family::Normal { mean, sd } => normal(rng, mean, sd),
        Family::TemperedNormal { center, lambda } => normal(rng, center - lambda, 1.0),
        Family::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        Family::Gamma { rate, shape } => gamma(rng, rate, shape),
        Family::Poisson { mean } => poisson(rng, mean),
        Family::NegativeBinomial { size, prob } => {
            let lambda = gamma(rng, prob / (1.0 - prob), size);
            poisson(rng, lambda)
        }
        Family::Bernoulli { p } => {
            if rng.random::<f64>() < p {
                1.0
            } else {
                0.0
            }
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    match Normal::new(mean, sd) {
        Ok(d) => d.sample(rng),
        Err(_) => f64::NAN,
    }
}

fn gamma<R: Rng + ?Sized>(rng: &mut R, rate: f64, shape: f64) -> f64 {
    match Gamma::new(shape, 1.0 / rate) {
        Ok(d) => d.sample(rng),
        Err(_) => f64::NAN,
    }
}

/// Poisson draw; a vanishing mean yields zero.
pub(crate) fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    if !(mean > 0.0) {
        return 0.0;
    }
    match Poisson::new(mean) {
        Ok(d) => d.sample(rng),
        Err(_) => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::FamilyTag;

    #[test]
    fn degenerate_bernoulli() {
        let b = Family::new(FamilyTag::Bernoulli, &[1.0]).unwrap();
        assert_eq!(sample(&b, 5, Seed(9)).unwrap(), vec![1.0; 5]);
    }

    #[test]
    fn same_seed_same_stream() {
        let g = Family::gamma(1.5, 2.0).unwrap();
        let a = sample(&g, 100, Seed(42)).unwrap();
        let b = sample(&g, 100, Seed(42)).unwrap();
        assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
        assert_ne!(a, sample(&g, 100, Seed(43)).unwrap());
    }

    #[test]
    fn poisson_mean_in_clt_band() {
        let lambda = 3.2;
        let n = 100_000;
        let p = Family::new(FamilyTag::Poisson, &[lambda]).unwrap();
        let m = sample(&p, n, Seed(1)).unwrap().iter().sum::<f64>() / n as f64;
        assert!((m - lambda).abs() < 4.0 * (lambda / n as f64).sqrt());
    }

    #[test]
    fn unit_mean_gamma_in_clt_band() {
        let theta = 2.0;
        let n = 100_000;
        let g = Family::gamma(theta, theta).unwrap();
        let m = sample(&g, n, Seed(2)).unwrap().iter().sum::<f64>() / n as f64;
        assert!((m - 1.0).abs() < 4.0 / (theta * n as f64).sqrt() * theta.sqrt());
    }

    #[test]
    fn negative_binomial_mean() {
        let nb = Family::new(FamilyTag::NegativeBinomial, &[2.0, 0.4]).unwrap();
        let n = 100_000;
        let xs = sample(&nb, n, Seed(3)).unwrap();
        let m = xs.iter().sum::<f64>() / n as f64;
        assert!((m - nb.mean()).abs() < 4.0 * (nb.variance() / n as f64).sqrt());
        assert!(xs.iter().all(|v| *v >= 0.0 && v.fract() == 0.0));
    }

    #[test]
    fn substreams_differ() {
        let s = Seed(7);
        assert_ne!(s.substream(0), s.substream(1));
        assert_eq!(s.substream(3), s.substream(3));
    }

    #[test]
    fn empty_sample_rejected() {
        assert!(sample(&Family::normal(0.0, 1.0).unwrap(), 0, Seed(0)).is_err());
    }
}
