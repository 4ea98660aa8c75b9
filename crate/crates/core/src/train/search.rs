use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::trainer::{train_model, TrainOptions, TrainReport};
use crate::corpus::{EncodedSample, EntityLexicon, Vocabulary};
use crate::error::{Error, Result};

/// Ranges sampled by [`random_search`]. The learning rate is log-uniform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub keep_prob: (f64, f64),
    pub learning_rate: (f64, f64),
    pub layers: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            keep_prob: (0.75, 0.95),
            learning_rate: (1e-4, 3e-3),
            layers: vec![1, 2, 3],
        }
    }
}

impl SearchSpace {
    fn validate(&self) -> Result<()> {
        let (k0, k1) = self.keep_prob;
        let (a0, a1) = self.learning_rate;
        if !(0.0 < k0 && k0 <= k1 && k1 <= 1.0) {
            return Err(Error::Config("keep_prob range must lie in (0, 1]".into()));
        }
        if !(0.0 < a0 && a0 <= a1) {
            return Err(Error::Config("learning_rate range must be positive".into()));
        }
        if self.layers.is_empty() || self.layers.iter().any(|l| !(1..=3).contains(l)) {
            return Err(Error::Config("layers must be drawn from 1, 2, 3".into()));
        }
        Ok(())
    }

    pub fn sample(&self, base: &TrainConfig, rng: &mut impl Rng) -> TrainConfig {
        let (k0, k1) = self.keep_prob;
        let (a0, a1) = self.learning_rate;
        TrainConfig {
            keep_prob: if k0 == k1 { k0 } else { rng.gen_range(k0..=k1) },
            learning_rate: if a0 == a1 {
                a0
            } else {
                rng.gen_range(a0.ln()..=a1.ln()).exp()
            },
            layers: self.layers[rng.gen_range(0..self.layers.len())],
            seed: rng.gen(),
            ..base.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: TrainConfig,
    /// Best validation per-response accuracy.
    pub score: f64,
    pub report: TrainReport,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub best: TrainConfig,
    /// Trials ranked by score, best first; ties keep trial order.
    pub leaderboard: Vec<Trial>,
}

pub fn run_trial(
    index: usize,
    config: &TrainConfig,
    vocab: &Vocabulary,
    lexicon: &EntityLexicon,
    train: &[EncodedSample],
    valid: &[EncodedSample],
) -> Result<Trial> {
    let outcome = train_model(config, vocab, lexicon, train, valid, &TrainOptions::default())?;
    let score = outcome
        .report
        .best_validation()
        .map_or(0.0, |m| m.per_response_accuracy);
    Ok(Trial {
        index,
        config: config.clone(),
        score,
        report: outcome.report,
    })
}

/// `n_trials` independently seeded runs with hyperparameters drawn from
/// `space`; every other setting, including the epoch budget, comes from
/// `base`.
pub fn random_search(
    base: &TrainConfig,
    space: &SearchSpace,
    n_trials: usize,
    vocab: &Vocabulary,
    lexicon: &EntityLexicon,
    train: &[EncodedSample],
    valid: &[EncodedSample],
) -> Result<SearchResult> {
    if n_trials == 0 {
        return Err(Error::invalid("random search needs at least one trial"));
    }
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed);
    let mut leaderboard = Vec::with_capacity(n_trials);
    for index in 0..n_trials {
        let config = space.sample(base, &mut rng);
        log::info!(
            "trial {index}: keep_prob {:.3}, learning_rate {:.2e}, layers {}",
            config.keep_prob,
            config.learning_rate,
            config.layers
        );
        leaderboard.push(run_trial(index, &config, vocab, lexicon, train, valid)?);
    }
    leaderboard.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    Ok(SearchResult {
        best: leaderboard[0].config.clone(),
        leaderboard,
    })
}
