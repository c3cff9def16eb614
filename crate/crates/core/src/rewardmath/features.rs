use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::MathError;
use crate::corpus::Record;

/// Character n-gram length used by [`featurize`].
pub const NGRAM: usize = 3;

/// Dense feature vector of fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<F>(pub Vec<F>);

impl<F: Float> FeatureVector<F> {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> F {
        self.0.iter().fold(F::zero(), |acc, &x| acc + x * x).sqrt()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.0
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Hashed bag of character trigrams over `question` + newline + `program`, L2-normalized.
///
/// Text shorter than three characters yields the zero vector.
pub fn featurize<F: Float>(question: &str, program: &str, dim: usize) -> FeatureVector<F> {
    assert!(dim >= 1, "feature dimension must be >= 1");
    let text: Vec<char> = question
        .chars()
        .chain(std::iter::once('\n'))
        .chain(program.chars())
        .collect();
    let mut counts = vec![0.0f64; dim];
    let mut buf = String::new();
    for window in text.windows(NGRAM) {
        buf.clear();
        buf.extend(window);
        counts[(fnv1a(buf.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
    FeatureVector(
        counts
            .into_iter()
            .map(|c| F::from(c * scale).unwrap())
            .collect(),
    )
}

/// `score(x) = w . x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRewardModel<F> {
    pub weights: Vec<F>,
    pub bias: F,
}

impl<F: Float> LinearRewardModel<F> {
    pub fn zeros(dim: usize) -> Self {
        LinearRewardModel {
            weights: vec![F::zero(); dim],
            bias: F::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, features: &FeatureVector<F>) -> Result<F, MathError> {
        if features.dim() != self.dim() {
            return Err(MathError::DimensionMismatch {
                expected: self.dim(),
                found: features.dim(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(&features.0)
            .fold(self.bias, |acc, (&w, &x)| acc + w * x))
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

impl Record for LinearRewardModel<f64> {
    const SCHEMA: &'static str = "rmtoy";

    fn validate(&self) -> Result<(), String> {
        if self.is_finite() {
            Ok(())
        } else {
            Err("model has non-finite parameters".into())
        }
    }
}
