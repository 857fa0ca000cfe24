use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Concurrency, FitnessEvaluator};
use crate::chromosome::{ArchitecturePlan, Chromosome, ChromosomeKey, GeneDomains};
use crate::error::{DomainError, EvaluatorError};

/// Deterministic stand-in for real training.
///
/// The loss is a weighted sum of per-gene normalized distances to a known
/// optimum. Layer genes are measured in layers over the gene's span, menu
/// genes in menu steps over `menu length - 1`; every distance lies in
/// `[0, 1]`. Optional noise is a pure function of `(noise_seed, gene key)`.
#[derive(Debug, Clone)]
pub struct SyntheticLandscape {
    domains: GeneDomains,
    target: Chromosome,
    weights: [f64; 4],
    noise_amplitude: f64,
    noise_seed: u64,
}

impl SyntheticLandscape {
    pub fn new(domains: GeneDomains, target: Chromosome, weights: [f64; 4]) -> Result<Self, DomainError> {
        target.validate(&domains)?;
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DomainError::InvalidDomains(
                "landscape weights must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            domains,
            target,
            weights,
            noise_amplitude: 0.0,
            noise_seed: 0,
        })
    }

    /// Landscape over the default domains with unit weights, centred on
    /// (57, 2, 0.1, 0.1).
    pub fn reference() -> Self {
        let domains = GeneDomains::default();
        let target = Chromosome::new(&domains, 57, 2, 0.1, 0.1).expect("default target is valid");
        Self::new(domains, target, [1.0; 4]).expect("default landscape is valid")
    }

    pub fn with_noise(mut self, amplitude: f64, seed: u64) -> Self {
        assert!(
            amplitude.is_finite() && amplitude >= 0.0,
            "noise amplitude must be >= 0"
        );
        self.noise_amplitude = amplitude;
        self.noise_seed = seed;
        self
    }

    pub fn target(&self) -> &Chromosome {
        &self.target
    }

    pub fn domains(&self) -> &GeneDomains {
        &self.domains
    }

    pub fn weights(&self) -> [f64; 4] {
        self.weights
    }

    pub fn noise_amplitude(&self) -> f64 {
        self.noise_amplitude
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed
    }

    /// Loss at an arbitrary gene-box point, including points with
    /// frozen > included that no chromosome can reach.
    pub fn loss_at(&self, key: ChromosomeKey) -> f64 {
        let t = self.target.canonical_key();
        let d = &self.domains;
        let dist = [
            normalized(
                key.included_layers.abs_diff(t.included_layers),
                d.included_layers().span(),
            ),
            normalized(key.frozen_layers.abs_diff(t.frozen_layers), d.frozen_layers().span()),
            normalized(
                u32::from(key.learning_rate_index.abs_diff(t.learning_rate_index)),
                d.learning_rates().len() as u32 - 1,
            ),
            normalized(
                u32::from(key.dropout_index.abs_diff(t.dropout_index)),
                d.dropouts().len() as u32 - 1,
            ),
        ];
        let base: f64 = self.weights.iter().zip(dist).map(|(w, x)| w * x).sum();
        base + self.noise(key)
    }

    pub fn loss(&self, c: &Chromosome) -> f64 {
        self.loss_at(c.canonical_key())
    }

    fn noise(&self, key: ChromosomeKey) -> f64 {
        if self.noise_amplitude == 0.0 {
            return 0.0;
        }
        let mixed = self.noise_seed ^ key.packed().wrapping_mul(0x9E37_79B9_7F4A_7C15);
        self.noise_amplitude * ChaCha8Rng::seed_from_u64(mixed).gen::<f64>()
    }
}

fn normalized(distance: u32, span: u32) -> f64 {
    if span == 0 {
        0.0
    } else {
        f64::from(distance) / f64::from(span)
    }
}

impl FitnessEvaluator for SyntheticLandscape {
    fn evaluate(&self, plan: &ArchitecturePlan, _epochs: u32) -> Result<f64, EvaluatorError> {
        let c = plan.to_chromosome(&self.domains)?;
        Ok(self.loss(&c))
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::Concurrent {
            max_in_flight: usize::MAX,
        }
    }
}
