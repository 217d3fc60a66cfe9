//! Interaction-time action selection: plain policy sampling and optimistic
//! selection over sampled candidates.

use rand::Rng;

use crate::actor::{sample_with_noise, standard_normal, GaussianPolicy};
use crate::distmath::{fill_uniform, mean_std};
use crate::error::{Error, Result};
use crate::nnkit::Tensor;
use crate::scalar::Scalar;
use crate::znet::{twin_min_batch, TwinZ};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UCBConfig {
    /// Candidate actions `L` drawn from the policy.
    pub candidates: usize,
    /// Weight `λ` of the spread bonus.
    pub lambda: f64,
    /// Quantile samples per candidate for the statistics.
    pub n_taus: usize,
}

impl Default for UCBConfig {
    fn default() -> Self {
        Self { candidates: 12, lambda: 50.0, n_taus: 64 }
    }
}

impl UCBConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidates == 0 {
            return Err(Error::config("ucb.candidates", "must be at least 1"));
        }
        if self.n_taus == 0 {
            return Err(Error::config("ucb.n_taus", "must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("ucb.lambda", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Population mean and std of `n_taus` twin-min quantile samples of `Z(s, a)`.
pub fn ucb_score<S: Scalar, R: Rng + ?Sized>(twin: &TwinZ<S>, s: &[S], a: &[S], cfg: &UCBConfig, rng: &mut R) -> Result<(S, S)> {
    cfg.validate()?;
    let st = Tensor::matrix(1, s.len(), s.to_vec())?;
    let at = Tensor::matrix(1, a.len(), a.to_vec())?;
    let taus: Vec<S> = fill_uniform(cfg.n_taus, rng);
    let z = twin_min_batch(&twin.online, &st, &at, &taus, cfg.n_taus)?;
    mean_std(z.values())
}

/// Index of the best score; the first one wins ties.
pub fn argmax_ucb<S: Scalar>(stats: &[(S, S)], lambda: S) -> usize {
    let mut best = 0;
    let mut best_score = S::neg_infinity();
    for (i, &(mu, sigma)) in stats.iter().enumerate() {
        let score = mu + lambda * sigma;
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    best
}

/// The chosen action together with every candidate and its statistics.
#[derive(Clone, Debug)]
pub struct UcbChoice<S> {
    pub action: Vec<S>,
    pub index: usize,
    pub candidates: Tensor<S>,
    pub stats: Vec<(S, S)>,
}

/// Samples `L` candidates from the policy and returns the one maximizing
/// `μ̃ + λσ̃`.
///
/// Draws all `L` candidate noises first, then `n_taus` fractions per
/// candidate in candidate order.
pub fn ucb_select<S: Scalar, R: Rng + ?Sized>(
    policy: &GaussianPolicy<S>,
    twin: &TwinZ<S>,
    s: &[S],
    cfg: &UCBConfig,
    rng: &mut R,
) -> Result<UcbChoice<S>> {
    cfg.validate()?;
    let (l, d) = (cfg.candidates, policy.action_dim());
    let xi = Tensor::matrix(l, d, standard_normal(l * d, rng))?;
    let states: Vec<&[S]> = vec![s; l];
    let states = Tensor::from_rows(&states)?;
    let (candidates, _) = sample_with_noise(policy, &states, &xi)?;
    let taus: Vec<S> = fill_uniform(l * cfg.n_taus, rng);
    let z = twin_min_batch(&twin.online, &states, &candidates, &taus, cfg.n_taus)?;
    let stats = (0..l).map(|i| mean_std(z.row(i))).collect::<Result<Vec<_>>>()?;
    let index = argmax_ucb(&stats, crate::scalar::lit(cfg.lambda));
    Ok(UcbChoice { action: candidates.row(index).to_vec(), index, candidates, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actor::sample_action;
    use crate::znet::{Twin, ZNetConfig, ZNetwork};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SMALL: ZNetConfig = ZNetConfig { hidden: 8, n_cos: 8 };

    fn cfg(candidates: usize, lambda: f64) -> UCBConfig {
        UCBConfig { candidates, lambda, n_taus: 16 }
    }

    #[test]
    fn constant_critic_has_no_spread() {
        let z = ZNetwork::<f64>::constant(2, 1, SMALL, 1.5);
        let twin = Twin::new(z.clone(), z);
        let (mu, sigma) = ucb_score(&twin, &[0.1, 0.2], &[0.3], &cfg(4, 1.0), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!((mu - 1.5).abs() < 1e-12);
        assert_eq!(sigma, 0.0);
    }

    #[test]
    fn score_matches_mean_std_of_raw_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let twin = TwinZ::<f64>::random(2, 1, SMALL, &mut rng);
        let c = cfg(1, 0.0);
        let got = ucb_score(&twin, &[0.5, -0.5], &[0.2], &c, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let taus: Vec<f64> = fill_uniform(c.n_taus, &mut r2);
        let st = Tensor::matrix(1, 2, vec![0.5, -0.5]).unwrap();
        let at = Tensor::matrix(1, 1, vec![0.2]).unwrap();
        let z = twin_min_batch(&twin.online, &st, &at, &taus, c.n_taus).unwrap();
        assert_eq!(got, mean_std(z.values()).unwrap());
    }

    #[test]
    fn rigged_statistics_pick_the_optimistic_candidate() {
        assert_eq!(argmax_ucb(&[(1.0, 3.0), (2.0, 0.0)], 1.0), 0);
        assert_eq!(argmax_ucb(&[(1.0, 3.0), (2.0, 0.0)], 0.0), 1);
        assert_eq!(argmax_ucb(&[(1.0, 0.0), (1.0, 0.0)], 5.0), 0);
    }

    #[test]
    fn single_candidate_is_the_policy_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pi = GaussianPolicy::<f64>::new(2, 2, 8, &mut rng);
        let twin = TwinZ::random(2, 2, SMALL, &mut rng);
        let s = [0.3, -0.1];
        for lambda in [0.0, 50.0] {
            let choice = ucb_select(&pi, &twin, &s, &cfg(1, lambda), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            let (a, _) = sample_action(&pi, &s, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            assert_eq!(choice.action, a);
            assert_eq!(choice.index, 0);
        }
    }

    #[test]
    fn zero_lambda_selects_highest_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pi = GaussianPolicy::<f64>::new(1, 1, 8, &mut rng);
        let twin = TwinZ::random(1, 1, SMALL, &mut rng);
        let choice = ucb_select(&pi, &twin, &[0.4], &cfg(12, 0.0), &mut rng).unwrap();
        let best = choice.stats.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(choice.stats[choice.index].0, best);
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(cfg(0, 1.0).validate().is_err());
        assert!(UCBConfig { candidates: 2, lambda: -1.0, n_taus: 2 }.validate().is_err());
        assert!(UCBConfig { candidates: 2, lambda: 1.0, n_taus: 0 }.validate().is_err());
    }

    proptest! {
        #[test]
        fn selected_action_is_one_of_the_candidates(seed in 0u64..500, l in 1usize..8, lambda in 0.0f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pi = GaussianPolicy::<f64>::new(2, 1, 8, &mut rng);
            let twin = TwinZ::random(2, 1, SMALL, &mut rng);
            let choice = ucb_select(&pi, &twin, &[0.1, 0.9], &cfg(l, lambda), &mut rng).unwrap();
            prop_assert!((0..l).any(|i| choice.candidates.row(i) == choice.action.as_slice()));
        }

        #[test]
        fn zero_lambda_argmax_is_affine_invariant(
            means in prop::collection::vec(-10.0f64..10.0, 1..10),
            scale in 0.01f64..100.0,
            shift in -50.0f64..50.0,
        ) {
            let a: Vec<(f64, f64)> = means.iter().map(|&m| (m, 0.0)).collect();
            let b: Vec<(f64, f64)> = means.iter().map(|&m| (scale * m + shift, 0.0)).collect();
            let (ia, ib) = (argmax_ucb(&a, 0.0), argmax_ucb(&b, 0.0));
            prop_assert_eq!(a[ia].0, a[ib].0);
        }

        #[test]
        fn larger_lambda_never_picks_less_spread(mu in -5.0f64..5.0, s1 in 0.0f64..3.0, s2 in 0.0f64..3.0, l1 in 0.0f64..10.0, dl in 0.0f64..10.0) {
            let stats = [(mu, s1), (mu, s2)];
            let lo = stats[argmax_ucb(&stats, l1)].1;
            let hi = stats[argmax_ucb(&stats, l1 + dl)].1;
            prop_assert!(hi >= lo);
        }
    }
}
