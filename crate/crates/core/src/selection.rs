//! Operator selection schemes: uniform random, probability matching,
//! adaptive pursuit, UCB and the credit-driven RL rule.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::credit::CreditView;
use crate::operators::OperatorId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("operator pool is empty")]
    EmptyPool,
    #[error("weight vector has {found} entries, expected {expected}")]
    WeightMismatch { expected: usize, found: usize },
    #[error("weights must be non-negative and sum to 1")]
    InvalidWeights,
    #[error("operator {index} out of range for pool of {size}")]
    InvalidOperator { index: usize, size: usize },
    #[error("the rl scheme needs a credit view for {expected} operators")]
    MissingCredits { expected: usize },
    #[error("unknown scheme `{0}` (valid: random, pm, ap, ucb, rl)")]
    UnknownScheme(String),
    #[error("invalid scheme parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Random,
    Pm,
    Ap,
    Ucb,
    Rl,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::Random,
        SchemeKind::Pm,
        SchemeKind::Ap,
        SchemeKind::Ucb,
        SchemeKind::Rl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Random => "random",
            SchemeKind::Pm => "pm",
            SchemeKind::Ap => "ap",
            SchemeKind::Ucb => "ucb",
            SchemeKind::Rl => "rl",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = SelectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SelectionError::UnknownScheme(s.to_string()))
    }
}

/// Objective weights: non-negative, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self, SelectionError> {
        let sum: f64 = weights.iter().sum();
        if weights.is_empty()
            || weights.iter().any(|w| !(0.0..=1.0).contains(w))
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(SelectionError::InvalidWeights);
        }
        Ok(WeightVector(weights))
    }

    /// Equal weights over `n` objectives.
    pub fn uniform(n: usize) -> Self {
        WeightVector(vec![1.0 / n as f64; n])
    }

    /// All weight on objective `j` of `n`.
    pub fn unit(n: usize, j: usize) -> Self {
        let mut w = vec![0.0; n];
        w[j] = 1.0;
        WeightVector(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = SelectionError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        WeightVector::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeParams {
    /// Probability floor for pm and ap.
    pub p_min: f64,
    /// Recency weight of the empirical quality estimate.
    pub alpha: f64,
    pub pursuit_rate: f64,
    pub ucb_c: f64,
    /// Exploration rate of the rl scheme.
    pub epsilon: f64,
}

impl Default for SchemeParams {
    fn default() -> Self {
        SchemeParams {
            p_min: 0.05,
            alpha: 0.1,
            pursuit_rate: 0.8,
            ucb_c: 1.0,
            epsilon: 0.1,
        }
    }
}

impl SchemeParams {
    pub fn validate(&self, pool_size: usize) -> Result<(), SelectionError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SelectionError::InvalidParameter(format!("{name} {v} not in [0,1]")))
            }
        };
        unit("p_min", self.p_min)?;
        unit("alpha", self.alpha)?;
        unit("pursuit_rate", self.pursuit_rate)?;
        unit("epsilon", self.epsilon)?;
        if self.p_min * pool_size as f64 > 1.0 {
            return Err(SelectionError::InvalidParameter(format!(
                "p_min {} too large for {pool_size} operators",
                self.p_min
            )));
        }
        if !(self.ucb_c > 0.0 && self.ucb_c.is_finite()) {
            return Err(SelectionError::InvalidParameter(format!(
                "ucb_c {} must be positive",
                self.ucb_c
            )));
        }
        Ok(())
    }
}

/// Mutable state of one selection scheme over a fixed pool size.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    kind: SchemeKind,
    params: SchemeParams,
    probabilities: Vec<f64>,
    quality: Vec<f64>,
    pulls: Vec<u64>,
}

impl SchemeState {
    pub fn new(
        kind: SchemeKind,
        pool_size: usize,
        params: SchemeParams,
    ) -> Result<Self, SelectionError> {
        if pool_size == 0 {
            return Err(SelectionError::EmptyPool);
        }
        params.validate(pool_size)?;
        Ok(SchemeState {
            kind,
            params,
            probabilities: vec![1.0 / pool_size as f64; pool_size],
            quality: vec![0.0; pool_size],
            pulls: vec![0; pool_size],
        })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn pool_size(&self) -> usize {
        self.quality.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn quality(&self) -> &[f64] {
        &self.quality
    }

    pub fn pulls(&self) -> &[u64] {
        &self.pulls
    }

    /// Picks the next operator. `credits` is required by the rl scheme only.
    pub fn select<R: Rng + ?Sized>(
        &self,
        credits: Option<&CreditView>,
        weights: &WeightVector,
        rng: &mut R,
    ) -> Result<OperatorId, SelectionError> {
        let k = self.pool_size();
        let pick = match self.kind {
            SchemeKind::Random => rng.random_range(0..k),
            SchemeKind::Pm | SchemeKind::Ap => sample(&self.probabilities, rng),
            SchemeKind::Ucb => {
                let unpulled: Vec<usize> = (0..k).filter(|&i| self.pulls[i] == 0).collect();
                if !unpulled.is_empty() {
                    unpulled[rng.random_range(0..unpulled.len())]
                } else {
                    let total = self.pulls.iter().sum::<u64>() as f64;
                    let scores: Vec<f64> = (0..k)
                        .map(|i| {
                            self.quality[i]
                                + self.params.ucb_c
                                    * (2.0 * total.ln() / self.pulls[i] as f64).sqrt()
                        })
                        .collect();
                    argmax_random_tie(&scores, rng)
                }
            }
            SchemeKind::Rl => {
                let credits = credits
                    .filter(|c| c.operators() == k)
                    .ok_or(SelectionError::MissingCredits { expected: k })?;
                if credits.objectives() != weights.len() {
                    return Err(SelectionError::WeightMismatch {
                        expected: credits.objectives(),
                        found: weights.len(),
                    });
                }
                // Draw the exploration coin first so the stream does not depend
                // on the credit values.
                if rng.random::<f64>() < self.params.epsilon {
                    rng.random_range(0..k)
                } else {
                    let scores: Vec<f64> = (0..k)
                        .map(|i| credits.scalarized(i, weights.as_slice()))
                        .collect();
                    argmax_random_tie(&scores, rng)
                }
            }
        };
        Ok(OperatorId(pick))
    }

    /// Feeds back the scalar reward obtained by `op`.
    pub fn update(&mut self, op: OperatorId, reward: f64) -> Result<(), SelectionError> {
        let k = self.pool_size();
        if op.0 >= k {
            return Err(SelectionError::InvalidOperator { index: op.0, size: k });
        }
        if self.kind == SchemeKind::Rl {
            return Ok(());
        }
        let alpha = self.params.alpha;
        self.quality[op.0] = (1.0 - alpha) * self.quality[op.0] + alpha * reward;
        self.pulls[op.0] += 1;
        let p_min = self.params.p_min;
        match self.kind {
            SchemeKind::Pm => {
                let total: f64 = self.quality.iter().sum();
                if total > 0.0 {
                    let spread = 1.0 - k as f64 * p_min;
                    for (p, q) in self.probabilities.iter_mut().zip(&self.quality) {
                        *p = p_min + spread * q / total;
                    }
                } else {
                    self.probabilities.fill(1.0 / k as f64);
                }
            }
            SchemeKind::Ap => {
                // Pursue only a unique leader; ties leave the distribution alone.
                let best = self.quality.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let leaders: Vec<usize> = (0..k).filter(|&i| self.quality[i] == best).collect();
                if let [leader] = leaders[..] {
                    let p_max = 1.0 - (k as f64 - 1.0) * p_min;
                    let rate = self.params.pursuit_rate;
                    for (i, p) in self.probabilities.iter_mut().enumerate() {
                        let target = if i == leader { p_max } else { p_min };
                        *p += rate * (target - *p);
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn sample<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * probabilities.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probabilities.len() - 1
}

/// Index of the largest score; exact ties are broken uniformly at random.
pub fn argmax_random_tie<R: Rng + ?Sized>(scores: &[f64], rng: &mut R) -> usize {
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == best).collect();
    match ties.len() {
        0 => rng.random_range(0..scores.len()),
        1 => ties[0],
        n => ties[rng.random_range(0..n)],
    }
}

/// Stationary Bernoulli bandit used to check that adaptive schemes find the
/// best operator.
pub mod bandit {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::credit::{CreditModel, CreditSettings, RewardVector};
    use crate::problem::BitSolution;

    /// Fraction of the last `window` steps in which `good` was selected.
    pub fn final_window_share(
        kind: SchemeKind,
        success_probabilities: &[f64],
        good: usize,
        steps: usize,
        window: usize,
        seed: u64,
    ) -> Result<f64, SelectionError> {
        let k = success_probabilities.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = SchemeState::new(kind, k, SchemeParams::default())?;
        let mut model = CreditModel::new(k, 1, 8, CreditSettings::default())
            .map_err(|e| SelectionError::InvalidParameter(e.to_string()))?;
        // The environment has a single state.
        let x = BitSolution::zeros(8);
        let weights = WeightVector::uniform(1);
        let mut hits = 0usize;
        for step in 0..steps {
            let credits = (kind == SchemeKind::Rl)
                .then(|| model.credit_of(&x).expect("fixed state length"));
            let op = state.select(credits.as_ref(), &weights, &mut rng)?;
            let reward = if rng.random_bool(success_probabilities[op.0]) {
                1.0
            } else {
                0.0
            };
            state.update(op, reward)?;
            if kind == SchemeKind::Rl {
                model
                    .record_move(&x, op, &RewardVector(vec![reward]))
                    .expect("dimensions fixed above");
            }
            if step >= steps - window && op.0 == good {
                hits += 1;
            }
        }
        Ok(hits as f64 / window as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn rl(epsilon: f64, k: usize) -> SchemeState {
        SchemeState::new(
            SchemeKind::Rl,
            k,
            SchemeParams {
                epsilon,
                ..SchemeParams::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn rl_picks_argmax() {
        let view = CreditView::new(vec![vec![0.2], vec![0.9], vec![0.5]]);
        let op = rl(0.0, 3)
            .select(Some(&view), &WeightVector::uniform(1), &mut rng())
            .unwrap();
        assert_eq!(op, OperatorId(1));
    }

    #[test]
    fn rl_unit_weight_ignores_other_objectives() {
        let view = CreditView::new(vec![vec![0.2, 0.9], vec![0.9, 0.1]]);
        let s = rl(0.0, 2);
        let op = s
            .select(Some(&view), &WeightVector::unit(2, 0), &mut rng())
            .unwrap();
        assert_eq!(op, OperatorId(1));
        let op = s
            .select(Some(&view), &WeightVector::unit(2, 1), &mut rng())
            .unwrap();
        assert_eq!(op, OperatorId(0));
    }

    #[test]
    fn rl_errors() {
        let s = rl(0.0, 2);
        assert_eq!(
            s.select(None, &WeightVector::uniform(1), &mut rng()),
            Err(SelectionError::MissingCredits { expected: 2 })
        );
        let view = CreditView::new(vec![vec![0.2], vec![0.9]]);
        assert!(matches!(
            s.select(Some(&view), &WeightVector::uniform(2), &mut rng()),
            Err(SelectionError::WeightMismatch { .. })
        ));
        assert_eq!(
            SchemeState::new(SchemeKind::Rl, 0, SchemeParams::default()),
            Err(SelectionError::EmptyPool)
        );
    }

    #[test]
    fn ucb_exploits_after_equal_pulls() {
        let mut s = SchemeState::new(
            SchemeKind::Ucb,
            2,
            SchemeParams {
                alpha: 1.0,
                ..SchemeParams::default()
            },
        )
        .unwrap();
        s.update(OperatorId(0), 1.0).unwrap();
        s.update(OperatorId(1), 0.0).unwrap();
        assert_eq!(s.pulls(), &[1, 1]);
        assert_eq!(s.quality(), &[1.0, 0.0]);
        let op = s.select(None, &WeightVector::uniform(1), &mut rng()).unwrap();
        assert_eq!(op, OperatorId(0));
    }

    #[test]
    fn ucb_tries_unpulled_first() {
        let mut s = SchemeState::new(SchemeKind::Ucb, 3, SchemeParams::default()).unwrap();
        s.update(OperatorId(0), 1.0).unwrap();
        s.update(OperatorId(2), 1.0).unwrap();
        let op = s.select(None, &WeightVector::uniform(1), &mut rng()).unwrap();
        assert_eq!(op, OperatorId(1));
    }

    #[test]
    fn pm_examples() {
        let mut s = SchemeState::new(SchemeKind::Pm, 4, SchemeParams::default()).unwrap();
        for i in 0..4 {
            s.update(OperatorId(i), 0.5).unwrap();
        }
        for p in s.probabilities() {
            assert!((p - 0.25).abs() < 1e-12);
        }

        let mut s = SchemeState::new(SchemeKind::Pm, 4, SchemeParams::default()).unwrap();
        s.update(OperatorId(0), 1.0).unwrap();
        let expected = [0.85, 0.05, 0.05, 0.05];
        for (p, e) in s.probabilities().iter().zip(expected) {
            assert!((p - e).abs() < 1e-12, "{p} vs {e}");
        }
        assert!(s.update(OperatorId(4), 1.0).is_err());
    }

    #[test]
    fn ap_pursues_winner() {
        let mut s = SchemeState::new(SchemeKind::Ap, 4, SchemeParams::default()).unwrap();
        let p_max = 1.0 - 3.0 * 0.05;
        let mut last = s.probabilities()[0];
        for _ in 0..30 {
            s.update(OperatorId(0), 1.0).unwrap();
            let p0 = s.probabilities()[0];
            assert!(p0 >= last);
            last = p0;
        }
        assert!((last - p_max).abs() < 1e-9);
        for p in &s.probabilities()[1..] {
            assert!((p - 0.05).abs() < 1e-9);
        }
    }

    #[test]
    fn random_is_uniform() {
        let s = SchemeState::new(SchemeKind::Random, 4, SchemeParams::default()).unwrap();
        let mut counts = [0usize; 4];
        let mut r = rng();
        for _ in 0..8000 {
            counts[s.select(None, &WeightVector::uniform(1), &mut r).unwrap().0] += 1;
        }
        for c in counts {
            assert!((c as f64 / 8000.0 - 0.25).abs() < 0.03);
        }
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![0.3, 0.7]).is_ok());
        assert_eq!(WeightVector::new(vec![0.3, 0.6]), Err(SelectionError::InvalidWeights));
        assert_eq!(WeightVector::new(vec![-0.5, 1.5]), Err(SelectionError::InvalidWeights));
        assert_eq!(WeightVector::new(vec![]), Err(SelectionError::InvalidWeights));
        assert_eq!("ucb".parse::<SchemeKind>(), Ok(SchemeKind::Ucb));
        assert!("bogus".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn bandit_shares() {
        let probs = [0.1, 0.9, 0.1, 0.1];
        for kind in [SchemeKind::Pm, SchemeKind::Ap, SchemeKind::Ucb, SchemeKind::Rl] {
            let share = bandit::final_window_share(kind, &probs, 1, 1000, 100, 3).unwrap();
            assert!(share >= 0.7, "{kind}: {share}");
        }
    }

    proptest! {
        #[test]
        fn probabilities_stay_on_simplex(
            rewards in proptest::collection::vec((0usize..5, 0.0f64..2.0), 1..200),
            ap in any::<bool>(),
        ) {
            let kind = if ap { SchemeKind::Ap } else { SchemeKind::Pm };
            let mut s = SchemeState::new(kind, 5, SchemeParams::default()).unwrap();
            for (op, r) in rewards {
                s.update(OperatorId(op), r).unwrap();
                let sum: f64 = s.probabilities().iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                for &p in s.probabilities() {
                    prop_assert!(p >= 0.05 - 1e-12);
                }
            }
        }

        #[test]
        fn rl_choice_is_scale_invariant(
            credits in proptest::collection::vec(proptest::collection::vec(0.0f64..5.0, 2), 2..6),
            lambda in 0.01f64..100.0,
            w0 in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let weights = WeightVector::new(vec![w0, 1.0 - w0]).unwrap();
            let s = rl(0.0, credits.len());
            let base = CreditView::new(credits.clone());
            let scaled = CreditView::new(
                credits.iter().map(|r| r.iter().map(|c| c * lambda).collect()).collect());
            let scores: Vec<f64> = (0..credits.len())
                .map(|i| base.scalarized(i, weights.as_slice())).collect();
            let a = s.select(Some(&base), &weights, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = s.select(Some(&scaled), &weights, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let unique = scores.iter().filter(|&&v| (v - best).abs() < 1e-9 * best.max(1.0)).count() == 1;
            if unique {
                prop_assert_eq!(a, b);
            }
        }
    }
}
