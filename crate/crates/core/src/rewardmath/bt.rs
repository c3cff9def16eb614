use num_traits::Float;

use super::{FeatureVector, LinearRewardModel, MathError};

/// `ln(1 + e^x)` without overflow.
pub fn softplus<F: Float>(x: F) -> F {
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Bradley-Terry loss for one preferred/rejected pair: `-ln sigmoid(r_pos - r_neg)`.
pub fn pair_bt_loss<F: Float>(r_pos: F, r_neg: F) -> F {
    softplus(r_neg - r_pos)
}

/// How the summed pair losses are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairNormalization {
    /// Divide by `n(n-1)`, the count of all ordered pairs, active or not.
    #[default]
    AllOrdered,
    /// Divide by the number of pairs with `s_i > s_j`.
    ActivePairs,
}

fn check_batch<S, F>(targets: &[S], scores: &[F]) -> Result<(), MathError> {
    if targets.len() < 2 {
        return Err(MathError::TooFew {
            needed: 2,
            got: targets.len(),
        });
    }
    if scores.len() != targets.len() {
        return Err(MathError::LengthMismatch {
            what: "scores",
            expected: targets.len(),
            found: scores.len(),
        });
    }
    Ok(())
}

fn active_pairs<S: PartialOrd>(targets: &[S]) -> impl Iterator<Item = (usize, usize)> + '_ {
    let n = targets.len();
    (0..n).flat_map(move |i| {
        (0..n)
            .filter(move |&j| targets[i] > targets[j])
            .map(move |j| (i, j))
    })
}

fn normalizer<S: PartialOrd, F: Float>(targets: &[S], norm: PairNormalization) -> F {
    let n = targets.len();
    match norm {
        PairNormalization::AllOrdered => F::from(n * (n - 1)).unwrap(),
        PairNormalization::ActivePairs => F::from(active_pairs(targets).count().max(1)).unwrap(),
    }
}

/// Listwise Bradley-Terry loss over `n` samples of one prompt.
///
/// `targets` are the ground-truth pass rates, `scores` the model outputs. Every
/// ordered pair with `targets[i] > targets[j]` contributes `-ln sigmoid(scores[i] - scores[j])`.
pub fn batch_bt_loss<S: PartialOrd, F: Float>(
    targets: &[S],
    scores: &[F],
    norm: PairNormalization,
) -> Result<F, MathError> {
    check_batch(targets, scores)?;
    let sum = active_pairs(targets).fold(F::zero(), |acc, (i, j)| {
        acc + pair_bt_loss(scores[i], scores[j])
    });
    Ok(sum / normalizer(targets, norm))
}

/// Derivative of [`batch_bt_loss`] with respect to each score.
pub fn bt_score_grad<S: PartialOrd, F: Float>(
    targets: &[S],
    scores: &[F],
    norm: PairNormalization,
) -> Result<Vec<F>, MathError> {
    check_batch(targets, scores)?;
    let denom: F = normalizer(targets, norm);
    let mut grad = vec![F::zero(); scores.len()];
    for (i, j) in active_pairs(targets) {
        // d/dd softplus(-d) = -sigmoid(-d), d = s_i - s_j
        let g = sigmoid(scores[j] - scores[i]) / denom;
        grad[i] = grad[i] - g;
        grad[j] = grad[j] + g;
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtGradient<F> {
    pub weights: Vec<F>,
    pub bias: F,
}

/// Exact gradient of [`batch_bt_loss`] through a linear model.
pub fn bt_grad<S: PartialOrd, F: Float>(
    model: &LinearRewardModel<F>,
    features: &[FeatureVector<F>],
    targets: &[S],
    norm: PairNormalization,
) -> Result<BtGradient<F>, MathError> {
    let scores = features
        .iter()
        .map(|x| model.score(x))
        .collect::<Result<Vec<F>, _>>()?;
    let dscore = bt_score_grad(targets, &scores, norm)?;
    let mut weights = vec![F::zero(); model.dim()];
    let mut bias = F::zero();
    for (g, x) in dscore.iter().zip(features) {
        for (w, &xi) in weights.iter_mut().zip(&x.0) {
            *w = *w + *g * xi;
        }
        bias = bias + *g;
    }
    Ok(BtGradient { weights, bias })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<F> {
    pub model: LinearRewardModel<F>,
    /// Mean pair loss before training and after each epoch.
    pub losses: Vec<F>,
}

impl<F: Float> TrainedModel<F> {
    pub fn final_loss(&self) -> F {
        *self.losses.last().expect("initial loss is always recorded")
    }
}

fn mean_pair_loss<F: Float>(
    model: &LinearRewardModel<F>,
    pairs: &[(FeatureVector<F>, FeatureVector<F>)],
) -> Result<F, MathError> {
    let mut sum = F::zero();
    for (pos, neg) in pairs {
        sum = sum + pair_bt_loss(model.score(pos)?, model.score(neg)?);
    }
    Ok(sum / F::from(pairs.len()).unwrap())
}

/// Full-batch gradient descent on the mean pair loss, starting from zeros.
pub fn train_toy_rm<F: Float>(
    pairs: &[(FeatureVector<F>, FeatureVector<F>)],
    epochs: usize,
    lr: F,
) -> Result<TrainedModel<F>, MathError> {
    let (first, _) = pairs
        .first()
        .ok_or(MathError::TooFew { needed: 1, got: 0 })?;
    let dim = first.dim();
    for (p, n) in pairs {
        for x in [p, n] {
            if x.dim() != dim {
                return Err(MathError::DimensionMismatch {
                    expected: dim,
                    found: x.dim(),
                });
            }
            if x.0.iter().any(|v| !v.is_finite()) {
                return Err(MathError::NonFinite("features"));
            }
        }
    }
    let mut model = LinearRewardModel::zeros(dim);
    let mut losses = vec![mean_pair_loss(&model, pairs)?];
    let count = F::from(pairs.len()).unwrap();
    for _ in 0..epochs {
        let mut grad = vec![F::zero(); dim];
        for (pos, neg) in pairs {
            let g = sigmoid(model.score(neg)? - model.score(pos)?) / count;
            for ((w, &xp), &xn) in grad.iter_mut().zip(&pos.0).zip(&neg.0) {
                *w = *w - g * (xp - xn);
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w = *w - lr * *g;
        }
        losses.push(mean_pair_loss(&model, pairs)?);
    }
    Ok(TrainedModel { model, losses })
}

/// Index of the highest score; the first one wins ties.
pub fn best_of_n<F: Float>(scores: &[F]) -> Result<usize, MathError> {
    if scores.is_empty() {
        return Err(MathError::TooFew { needed: 1, got: 0 });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MathError::NonFinite("scores"));
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewardmath::featurize;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::LN_2;

    /// ln(1 + e^-10) to 20 digits.
    #[allow(clippy::excessive_precision)]
    const SOFTPLUS_NEG10: f64 = 4.539_889_921_686_464_677e-5;

    #[test]
    fn pair_loss_values() {
        assert!((pair_bt_loss(0.3, 0.3) - LN_2).abs() < 1e-12);
        assert!((pair_bt_loss(10.0, 0.0) - SOFTPLUS_NEG10).abs() < 1e-18);
        assert!((pair_bt_loss(5.0f32, 5.0) - std::f32::consts::LN_2).abs() < 1e-6);
        let mut prev = f64::INFINITY;
        for d in 0..60 {
            let l = pair_bt_loss(d as f64, 0.0);
            assert!(l > 0.0 && l < prev);
            prev = l;
        }
        assert!(pair_bt_loss(-800.0, 0.0).is_finite());
    }

    #[test]
    fn batch_loss_examples() {
        let l = batch_bt_loss(
            &[1.0, 0.5, 0.0],
            &[0.7, 0.7, 0.7],
            PairNormalization::AllOrdered,
        )
        .unwrap();
        assert!((l - LN_2 / 2.0).abs() < 1e-12);
        let l = batch_bt_loss(
            &[0.5, 0.5, 0.5],
            &[1.0, -3.0, 2.0],
            PairNormalization::AllOrdered,
        )
        .unwrap();
        assert_eq!(l, 0.0);
        let l = batch_bt_loss(&[1.0, 0.0], &[5.0, -5.0], PairNormalization::AllOrdered).unwrap();
        assert!((l - SOFTPLUS_NEG10 / 2.0).abs() < 1e-18);
        let l = batch_bt_loss(
            &[1.0, 0.5, 0.0],
            &[0.0, 0.0, 0.0],
            PairNormalization::ActivePairs,
        )
        .unwrap();
        assert!((l - LN_2).abs() < 1e-12);
        assert!(matches!(
            batch_bt_loss(&[1.0], &[0.0], PairNormalization::AllOrdered),
            Err(MathError::TooFew { .. })
        ));
    }

    fn random_instance(
        rng: &mut impl Rng,
        dim: usize,
        n: usize,
    ) -> (LinearRewardModel<f64>, Vec<FeatureVector<f64>>, Vec<f64>) {
        let model = LinearRewardModel {
            weights: (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            bias: rng.gen_range(-1.0..1.0),
        };
        let feats = (0..n)
            .map(|_| FeatureVector((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let targets = (0..n).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect();
        (model, feats, targets)
    }

    fn loss_at(model: &LinearRewardModel<f64>, feats: &[FeatureVector<f64>], s: &[f64]) -> f64 {
        let scores: Vec<f64> = feats.iter().map(|x| model.score(x).unwrap()).collect();
        batch_bt_loss(s, &scores, PairNormalization::AllOrdered).unwrap()
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let (model, feats, s) = random_instance(&mut rng, 6, 5);
            let g = bt_grad(&model, &feats, &s, PairNormalization::AllOrdered).unwrap();
            let h = 1e-5;
            for d in 0..model.dim() {
                let mut up = model.clone();
                up.weights[d] += h;
                let mut down = model.clone();
                down.weights[d] -= h;
                let fd = (loss_at(&up, &feats, &s) - loss_at(&down, &feats, &s)) / (2.0 * h);
                assert!(
                    (fd - g.weights[d]).abs() <= 1e-7 + 1e-5 * fd.abs(),
                    "{fd} vs {}",
                    g.weights[d]
                );
            }
            assert!(g.bias.abs() < 1e-12);
        }
    }

    #[test]
    fn grad_zero_when_targets_equal() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let (model, feats, _) = random_instance(&mut rng, 4, 4);
        let g = bt_grad(&model, &feats, &[0.5; 4], PairNormalization::AllOrdered).unwrap();
        assert!(g.weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn grad_antisymmetric_under_label_swap() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let (mut model, feats, _) = random_instance(&mut rng, 5, 2);
        model.bias = 0.0;
        let g = bt_grad(&model, &feats, &[1.0, 0.0], PairNormalization::AllOrdered).unwrap();
        let mirrored = LinearRewardModel {
            weights: model.weights.iter().map(|w| -w).collect(),
            bias: 0.0,
        };
        let g2 = bt_grad(
            &mirrored,
            &feats,
            &[0.0, 1.0],
            PairNormalization::AllOrdered,
        )
        .unwrap();
        for (a, b) in g.weights.iter().zip(&g2.weights) {
            assert!((a + b).abs() < 1e-15);
        }
    }

    fn separable_pairs(
        rng: &mut impl Rng,
        dim: usize,
        count: usize,
    ) -> Vec<(FeatureVector<f64>, FeatureVector<f64>)> {
        // Positives lean on the first half of the coordinates, negatives on the second.
        let half = dim / 2;
        let mk = |rng: &mut dyn rand::RngCore, first: bool| {
            let v: Vec<f64> = (0..dim)
                .map(|d| {
                    let base: f64 = rng.gen_range(0.0..0.2);
                    if (d < half) == first {
                        base + 0.5
                    } else {
                        base
                    }
                })
                .collect();
            FeatureVector(v)
        };
        (0..count)
            .map(|_| (mk(rng, true), mk(rng, false)))
            .collect()
    }

    #[test]
    fn training_descends_and_ranks() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let pairs = separable_pairs(&mut rng, 16, 30);
        let trained = train_toy_rm(&pairs, 300, 0.1).unwrap();
        for w in trained.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        assert!(trained.final_loss() < trained.losses[0]);
        for (p, n) in &pairs {
            assert!(trained.model.score(p).unwrap() > trained.model.score(n).unwrap());
        }
    }

    #[test]
    fn single_pair_beats_ln2() {
        let pos = featurize::<f64>("q", "def f(x): return x + 1", 32);
        let neg = featurize::<f64>("q", "def f(x): return x - 1", 32);
        let trained = train_toy_rm(&[(pos, neg)], 1, 0.1).unwrap();
        assert!((trained.losses[0] - LN_2).abs() < 1e-12);
        assert!(trained.final_loss() < LN_2);
    }

    #[test]
    fn duplicated_pair_same_solution() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        let pairs = separable_pairs(&mut rng, 8, 1);
        let doubled = vec![pairs[0].clone(), pairs[0].clone()];
        let a = train_toy_rm(&pairs, 50, 0.1).unwrap();
        let b = train_toy_rm(&doubled, 50, 0.1).unwrap();
        for (x, y) in a.model.weights.iter().zip(&b.model.weights) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(train_toy_rm::<f64>(&[], 1, 0.1).is_err());
    }

    #[test]
    fn best_of_n_cases() {
        assert_eq!(best_of_n(&[0.1, 0.9, 0.3]).unwrap(), 1);
        assert_eq!(best_of_n(&[0.4, 0.4, 0.4]).unwrap(), 0);
        assert_eq!(best_of_n(&[-2.0f32]).unwrap(), 0);
        assert!(best_of_n::<f64>(&[]).is_err());
        assert!(best_of_n(&[0.0, f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn shift_invariance(scores in prop::collection::vec(-5.0f64..5.0, 2..8), shift in -50.0f64..50.0, seed in any::<u64>()) {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let targets: Vec<f64> = scores.iter().map(|_| rng.gen_range(0..4) as f64).collect();
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            let a = batch_bt_loss(&targets, &scores, PairNormalization::AllOrdered).unwrap();
            let b = batch_bt_loss(&targets, &shifted, PairNormalization::AllOrdered).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn argmax_invariant_under_monotone_map(scores in prop::collection::vec(-3.0f64..3.0, 1..20)) {
            let mapped: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + s.powi(3)).collect();
            prop_assert_eq!(best_of_n(&scores).unwrap(), best_of_n(&mapped).unwrap());
        }

        #[test]
        fn symmetric_pair_sum(a in -30.0f64..30.0, b in -30.0f64..30.0) {
            let sum = pair_bt_loss(a, b) + pair_bt_loss(b, a);
            prop_assert!(sum >= 2.0 * LN_2 - 1e-12);
            if a == b { prop_assert!((sum - 2.0 * LN_2).abs() < 1e-12); }
            else if (a - b).abs() > 1e-3 { prop_assert!(sum > 2.0 * LN_2); }
        }
    }
}
