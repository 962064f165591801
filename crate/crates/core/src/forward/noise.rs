use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Increments of the scalar Brownian driver shared by all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub increments: Vec<f64>,
    pub seed: Option<u64>,
    pub dt: f64,
}

impl NoisePath {
    /// I.i.d. `N(0, dt)` increments; the same seed reproduces them bit-exactly.
    pub fn generate(seed: u64, n_steps: usize, dt: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = dt.sqrt();
        let increments = (0..n_steps)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * sd
            })
            .collect();
        Self { increments, seed: Some(seed), dt }
    }

    pub fn zero(n_steps: usize, dt: f64) -> Self {
        Self { increments: vec![0.0; n_steps], seed: None, dt }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_scaled() {
        let a = NoisePath::generate(17, 20_000, 0.01);
        let b = NoisePath::generate(17, 20_000, 0.01);
        assert_eq!(a, b);
        assert_ne!(a.increments, NoisePath::generate(18, 20_000, 0.01).increments);
        let n = a.increments.len() as f64;
        let mean = a.increments.iter().sum::<f64>() / n;
        let var = a.increments.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // standard error of the mean is 1e-3 * sqrt(0.01 / 0.01); of the variance ~1e-4
        assert!(mean.abs() < 5.0 * (0.01f64 / n).sqrt());
        assert!((var - 0.01).abs() < 5.0 * 0.01 * (2.0 / n).sqrt());
    }
}
