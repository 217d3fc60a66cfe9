//! Toy continuous-control tasks with cheap, brute-forceable return
//! distributions.
//!
//! | name               | obs | act | horizon | rewards                         |
//! |--------------------|-----|-----|---------|---------------------------------|
//! | `bimodal-goal`     | 1   | 1   | 40      | −0.01 per step, +1 / +0.55 exit |
//! | `stochastic-chain` | 1   | 1   | 50      | +5 at the right end, else 0     |
//! | `noisy-mass`       | 4   | 2   | 100     | quadratic cost in [−1, 0]       |
//!
//! Environments are stateless descriptions; the caller owns the [`EnvState`]
//! and the RNG, so an episode is fully determined by the seed.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::actor::GaussianPolicy;
use crate::distmath::EmpiricalDistribution;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
}

/// Observation plus elapsed steps.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub obs: Vec<f64>,
    pub t: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    /// Reached an absorbing state: nothing is bootstrapped past it.
    pub terminal: bool,
    /// Hit the horizon without terminating.
    pub truncated: bool,
}

impl StepResult {
    /// The episode is over, for whichever reason.
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// 1-D walk between two exits of unequal value.
pub mod bimodal {
    pub const STEP: f64 = 0.2;
    pub const NOISE: f64 = 0.05;
    pub const BOUND: f64 = 1.5;
    pub const GOAL: f64 = 1.0;
    pub const GOAL_REWARD: f64 = 1.0;
    pub const DECOY_REWARD: f64 = 0.55;
    pub const STEP_COST: f64 = 0.01;
    pub const HORIZON: usize = 40;
}

/// Long line with a leftward drift and a single distant reward.
pub mod chain {
    pub const LENGTH: f64 = 8.0;
    pub const STEP: f64 = 1.0;
    pub const DRIFT: f64 = 0.1;
    pub const NOISE: f64 = 0.1;
    pub const REWARD: f64 = 5.0;
    pub const HORIZON: usize = 50;
}

/// Damped 2-D point mass pushed back to the origin.
pub mod mass {
    pub const DT: f64 = 0.1;
    pub const DAMPING: f64 = 0.9;
    pub const NOISE: f64 = 0.01;
    pub const START: f64 = 0.5;
    pub const POS_COST: f64 = 0.45;
    pub const ACT_COST: f64 = 0.05;
    pub const HORIZON: usize = 100;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Env {
    BimodalGoal,
    StochasticChain,
    NoisyMass,
}

impl std::str::FromStr for Env {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bimodal-goal" => Ok(Env::BimodalGoal),
            "stochastic-chain" => Ok(Env::StochasticChain),
            "noisy-mass" => Ok(Env::NoisyMass),
            other => Err(Error::Env {
                env: other.into(),
                message: "unknown environment (expected bimodal-goal, stochastic-chain or noisy-mass)".into(),
            }),
        }
    }
}

impl std::fmt::Display for Env {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.spec().name)
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Episodic task with actions in `(−1, 1)ᵈ`.
pub trait Environment {
    fn spec(&self) -> EnvSpec;
    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState;
    fn step<R: Rng + ?Sized>(&self, state: &EnvState, action: &[f64], rng: &mut R) -> Result<StepResult>;
}

impl Env {
    pub const ALL: [Env; 3] = [Env::BimodalGoal, Env::StochasticChain, Env::NoisyMass];
}

impl Environment for Env {
    fn spec(&self) -> EnvSpec {
        match self {
            Env::BimodalGoal => EnvSpec { name: "bimodal-goal", state_dim: 1, action_dim: 1, horizon: bimodal::HORIZON },
            Env::StochasticChain => {
                EnvSpec { name: "stochastic-chain", state_dim: 1, action_dim: 1, horizon: chain::HORIZON }
            }
            Env::NoisyMass => EnvSpec { name: "noisy-mass", state_dim: 4, action_dim: 2, horizon: mass::HORIZON },
        }
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let obs = match self {
            Env::BimodalGoal | Env::StochasticChain => vec![0.0],
            Env::NoisyMass => {
                let px = rng.gen_range(-mass::START..mass::START);
                let py = rng.gen_range(-mass::START..mass::START);
                vec![px, py, 0.0, 0.0]
            }
        };
        EnvState { obs, t: 0 }
    }

    /// Advances one step. Actions must lie strictly inside `(−1, 1)`.
    fn step<R: Rng + ?Sized>(&self, state: &EnvState, action: &[f64], rng: &mut R) -> Result<StepResult> {
        let spec = self.spec();
        if action.len() != spec.action_dim || action.iter().any(|a| !(a.abs() < 1.0)) {
            return Err(Error::Env { env: spec.name.into(), message: format!("action {action:?} outside (-1, 1)^{}", spec.action_dim) });
        }
        if state.obs.len() != spec.state_dim || state.t >= spec.horizon {
            return Err(Error::Env { env: spec.name.into(), message: format!("stepping a finished or malformed state {state:?}") });
        }
        let (obs, reward, terminal) = match self {
            Env::BimodalGoal => {
                let eps = bimodal::NOISE * normal(rng);
                let x = (state.obs[0] + bimodal::STEP * action[0] + eps).clamp(-bimodal::BOUND, bimodal::BOUND);
                if x >= bimodal::GOAL {
                    (vec![x], bimodal::GOAL_REWARD, true)
                } else if x <= -bimodal::GOAL {
                    (vec![x], bimodal::DECOY_REWARD, true)
                } else {
                    (vec![x], -bimodal::STEP_COST, false)
                }
            }
            Env::StochasticChain => {
                let push = chain::STEP * (action[0] + chain::NOISE * normal(rng));
                let x = (state.obs[0] + push - chain::DRIFT).clamp(0.0, chain::LENGTH);
                if x >= chain::LENGTH {
                    (vec![x], chain::REWARD, true)
                } else {
                    (vec![x], 0.0, false)
                }
            }
            Env::NoisyMass => {
                let mut next = state.obs.clone();
                for d in 0..2 {
                    let v = mass::DAMPING * state.obs[2 + d] + mass::DT * action[d] + mass::NOISE * normal(rng);
                    next[2 + d] = v;
                    next[d] = (state.obs[d] + mass::DT * v).clamp(-1.0, 1.0);
                }
                let p2 = next[0] * next[0] + next[1] * next[1];
                let a2 = action[0] * action[0] + action[1] * action[1];
                (next, -mass::POS_COST * p2 - mass::ACT_COST * a2, false)
            }
        };
        let t = state.t + 1;
        Ok(StepResult { next_state: EnvState { obs, t }, reward, terminal, truncated: !terminal && t >= spec.horizon })
    }
}

/// Discounted returns `Σ γᵗ rₜ` of `n_rollouts` episodes that start in `s0`
/// with first action `a0` and then follow the stochastic policy.
pub fn return_distribution_oracle<E: Environment, R: Rng + ?Sized>(
    env: &E,
    policy: &GaussianPolicy<f64>,
    s0: &EnvState,
    a0: &[f64],
    n_rollouts: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<EmpiricalDistribution<f64>> {
    if n_rollouts == 0 {
        return Err(Error::contract("n_rollouts must be at least 1"));
    }
    let mut returns = Vec::with_capacity(n_rollouts);
    for _ in 0..n_rollouts {
        let mut state = s0.clone();
        let mut action = a0.to_vec();
        let (mut g, mut disc) = (0.0, 1.0);
        loop {
            let step = env.step(&state, &action, rng)?;
            g += disc * step.reward;
            disc *= gamma;
            if step.done() {
                break;
            }
            state = step.next_state;
            action = crate::actor::sample_action(policy, &state.obs, rng)?.0;
        }
        returns.push(g);
    }
    EmpiricalDistribution::uniform(returns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// First noise draw of a fresh stream.
    fn first_normal(seed: u64) -> f64 {
        normal(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn reset_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(Env::BimodalGoal.reset(&mut rng).obs, vec![0.0]);
        assert_eq!(Env::StochasticChain.reset(&mut rng).obs, vec![0.0]);
        let a = Env::NoisyMass.reset(&mut ChaCha8Rng::seed_from_u64(4));
        let b = Env::NoisyMass.reset(&mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
        assert!(a.obs[..2].iter().all(|p| p.abs() < mass::START) && a.obs[2..] == [0.0, 0.0]);
    }

    #[test]
    fn bimodal_goal_steps() {
        let env = Env::BimodalGoal;
        let eps = bimodal::NOISE * first_normal(1);
        let s = EnvState { obs: vec![0.0], t: 0 };
        let r = env.step(&s, &[0.0], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(r.next_state.obs, vec![eps]);
        assert_eq!((r.reward, r.terminal, r.truncated), (-0.01, false, false));

        let near = EnvState { obs: vec![0.99], t: 3 };
        let a = 0.999_999;
        let r = env.step(&near, &[a], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(r.next_state.obs[0] >= 1.0, 0.99 + 0.2 * a + eps >= 1.0);
        if r.terminal {
            assert_eq!(r.reward, 1.0);
        }
        let left = EnvState { obs: vec![-0.95], t: 0 };
        let r = env.step(&left, &[-0.9], &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(r.terminal && r.reward == 0.55);
    }

    #[test]
    fn out_of_range_action_is_a_contract_error() {
        let s = EnvState { obs: vec![0.0], t: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for bad in [1.0, -1.0, 2.0, f64::NAN] {
            assert!(matches!(Env::BimodalGoal.step(&s, &[bad], &mut rng), Err(Error::Env { .. })));
        }
        assert!(Env::NoisyMass.step(&Env::NoisyMass.reset(&mut rng), &[0.0], &mut rng).is_err());
        assert!("cartpole".parse::<Env>().is_err());
        for env in Env::ALL {
            assert_eq!(env.to_string().parse::<Env>().unwrap(), env);
        }
    }

    #[test]
    fn every_episode_ends_within_the_horizon_and_replays_bit_identically() {
        for env in Env::ALL {
            let spec = env.spec();
            let run = |seed: u64| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut s = env.reset(&mut rng);
                let mut trace = Vec::new();
                loop {
                    let a: Vec<f64> = (0..spec.action_dim).map(|_| rng.gen_range(-0.99..0.99)).collect();
                    let r = env.step(&s, &a, &mut rng).unwrap();
                    trace.push((r.next_state.obs.clone(), r.reward.to_bits()));
                    if r.done() {
                        assert!(r.next_state.t <= spec.horizon);
                        break;
                    }
                    s = r.next_state;
                }
                trace
            };
            for seed in 0..5 {
                assert_eq!(run(seed), run(seed));
            }
        }
    }

    #[test]
    fn chain_rewards_only_the_far_end() {
        let env = Env::StochasticChain;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = env.reset(&mut rng);
        let mut total = 0.0;
        loop {
            let r = env.step(&s, &[0.99], &mut rng).unwrap();
            total += r.reward;
            if r.done() {
                assert!(r.terminal, "persistent right pushes reach the end");
                break;
            }
            assert_eq!(r.reward, 0.0);
            s = r.next_state;
        }
        assert_eq!(total, 5.0);
    }

    #[test]
    fn rewards_stay_in_the_documented_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for env in Env::ALL {
            for _ in 0..20 {
                let mut s = env.reset(&mut rng);
                loop {
                    let a: Vec<f64> = (0..env.spec().action_dim).map(|_| rng.gen_range(-0.999..0.999)).collect();
                    let r = env.step(&s, &a, &mut rng).unwrap();
                    assert!((-1.0..=5.0).contains(&r.reward), "{env}: {}", r.reward);
                    if r.done() {
                        break;
                    }
                    s = r.next_state;
                }
            }
        }
    }

    #[test]
    fn random_policy_returns_on_bimodal_goal_split_into_two_exits() {
        let pi = GaussianPolicy::fixed(1, &[0.0], &[0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s0 = Env::BimodalGoal.reset(&mut rng);
        let dist = return_distribution_oracle(&Env::BimodalGoal, &pi, &s0, &[0.0], 10_000, 1.0, &mut rng).unwrap();
        let n = dist.len() as f64;
        let frac = |lo: f64, hi: f64| dist.atoms().iter().filter(|&&g| g > lo && g <= hi).count() as f64 / n;
        let right = frac(0.6, 1.0);
        let left = frac(0.15, 0.55);
        assert!(right > 0.2 && left > 0.2, "right {right} left {left}");
        // nothing between the best decoy return and the worst goal return
        assert_eq!(frac(0.551, 0.609), 0.0);
    }

    /// Noise-free line: reward x' each step, ends after three steps.
    struct Ramp;

    impl Environment for Ramp {
        fn spec(&self) -> EnvSpec {
            EnvSpec { name: "ramp", state_dim: 1, action_dim: 1, horizon: 3 }
        }
        fn reset<R: Rng + ?Sized>(&self, _: &mut R) -> EnvState {
            EnvState { obs: vec![0.0], t: 0 }
        }
        fn step<R: Rng + ?Sized>(&self, s: &EnvState, a: &[f64], _: &mut R) -> Result<StepResult> {
            let x = s.obs[0] + a[0];
            let t = s.t + 1;
            Ok(StepResult { next_state: EnvState { obs: vec![x], t }, reward: x, terminal: false, truncated: t >= 3 })
        }
    }

    #[test]
    fn deterministic_env_and_policy_give_a_single_atom() {
        // log-std at the floor: the policy is tanh(0.5) up to e^-20 noise
        let pi = GaussianPolicy::fixed(1, &[0.5], &[-20.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s0 = Ramp.reset(&mut rng);
        let d = return_distribution_oracle(&Ramp, &pi, &s0, &[0.5], 500, 0.9, &mut rng).unwrap();
        let a = 0.5f64.tanh();
        let expect = 0.5 + 0.9 * (0.5 + a) + 0.81 * (0.5 + 2.0 * a);
        assert!(d.atoms().iter().all(|&g| (g - expect).abs() < 1e-6));
        assert_eq!(d.len(), 500);
        assert!(return_distribution_oracle(&Ramp, &pi, &s0, &[0.0], 0, 0.9, &mut rng).is_err());
    }
}
