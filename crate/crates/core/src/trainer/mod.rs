//! Replay buffer, run configuration and the full training loop for the five
//! agents, with evaluation, metrics and checkpoints.
//!
//! Each run is single-threaded and fully determined by its config. Separate
//! ChaCha streams of the run seed feed the environment, network init, action
//! selection, replay sampling, updates and evaluation, so for example every
//! variant run with seed `r` sees the same environment noise stream.

mod buffer;
mod checkpoint;
mod config;
mod metrics;

pub use buffer::{Batch, ReplayBuffer, Transition};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use config::{TrainConfig, Variant};
pub use metrics::{MetricsRow, RunMetrics, METRICS_HEADER};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::actor::{
    alpha_loss, alpha_step, deterministic_action, policy_loss, sample_action, sample_actions, EntropyTemp, GaussianPolicy,
    PolicyCritic,
};
use crate::distmath::{fill_uniform, mean_std};
use crate::envs::{Env, Environment};
use crate::error::{Error, Result};
use crate::explore::ucb_select;
use crate::nnkit::{Adam, Tensor};
use crate::targets::{classic_targets, mtv_loss, mtv_targets_batch, q_loss, single_sample_targets, NextBatch};
use crate::znet::{ema_update, new_q_network, twin_min_batch, Twin, TwinQ, TwinZ};

/// Twin critic of either kind.
#[derive(Clone, Debug, PartialEq)]
pub enum Critic {
    Quantile(TwinZ<f64>),
    Scalar(TwinQ<f64>),
}

/// Everything a trained run hands back: the policy, its critics and `α`.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub policy: GaussianPolicy<f64>,
    pub critic: Critic,
    pub temp: EntropyTemp<f64>,
}

/// Call counts recorded by the loop, to check which machinery each variant
/// actually exercises.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Counters {
    /// Sets of quantile fractions drawn (targets, losses, selection, probes).
    pub fraction_draws: u64,
    pub ucb_selects: u64,
    pub mtv_targets: u64,
    pub single_targets: u64,
    pub classic_targets: u64,
    pub gradient_steps: u64,
    pub ema_updates: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    /// `tanh(μ(s))`.
    Deterministic,
    /// Sampled from the policy.
    Stochastic,
}

/// Mean undiscounted return over `episodes` episodes.
pub fn evaluate<E: Environment, R: Rng + ?Sized>(
    policy: &GaussianPolicy<f64>,
    env: &E,
    episodes: usize,
    mode: EvalMode,
    rng: &mut R,
) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::contract("evaluation needs at least one episode"));
    }
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut s = env.reset(rng);
        loop {
            let a = match mode {
                EvalMode::Deterministic => deterministic_action(policy, &s.obs)?,
                EvalMode::Stochastic => sample_action(policy, &s.obs, rng)?.0,
            };
            let step = env.step(&s, &a, rng)?;
            total += step.reward;
            if step.done() {
                break;
            }
            s = step.next_state;
        }
    }
    Ok(total / episodes as f64)
}

/// Monte Carlo entropy `−E[log π(a|s)]` averaged over the given states.
pub fn policy_entropy<R: Rng + ?Sized>(policy: &GaussianPolicy<f64>, states: &Tensor<f64>, samples: usize, rng: &mut R) -> Result<f64> {
    let mut total = 0.0;
    for _ in 0..samples {
        let (_, logp) = sample_actions(policy, states, rng)?;
        total -= logp.iter().sum::<f64>();
    }
    Ok(total / (samples * states.rows()) as f64)
}

/// Mean over probe transitions of the std of `N` twin-min quantile samples.
pub fn probe_z_std<R: Rng + ?Sized>(twin: &TwinZ<f64>, probe: &Batch, n_taus: usize, rng: &mut R) -> Result<f64> {
    let rows = probe.states.rows();
    let taus: Vec<f64> = fill_uniform(rows * n_taus, rng);
    let z = twin_min_batch(&twin.online, &probe.states, &probe.actions, &taus, n_taus)?;
    let mut total = 0.0;
    for r in 0..rows {
        total += mean_std(z.row(r))?.1;
    }
    Ok(total / rows as f64)
}

/// Stream `k` of the run seed.
pub fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

const ENV_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;
const ACT_STREAM: u64 = 2;
const REPLAY_STREAM: u64 = 3;
const UPDATE_STREAM: u64 = 4;
const PROBE_STREAM: u64 = 5;
/// Evaluation point `i` uses streams `EVAL_STREAM + 3i ..= EVAL_STREAM + 3i + 2`.
const EVAL_STREAM: u64 = 1 << 20;
const ENTROPY_SAMPLES: usize = 16;

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub agent: Agent,
    pub counters: Counters,
    /// Policy entropy over a uniform replay sample at the end of training
    /// (NaN when training never got past warmup).
    pub final_entropy: f64,
}

/// Fresh agent for a config, initialized from the run's init stream.
pub fn init_agent(cfg: &TrainConfig) -> Result<Agent> {
    let spec = cfg.env.spec();
    let mut rng = stream(cfg.seed, INIT_STREAM);
    let policy = GaussianPolicy::new(spec.state_dim, spec.action_dim, cfg.hidden, &mut rng);
    let critic = if cfg.variant.distributional() {
        Critic::Quantile(TwinZ::random(spec.state_dim, spec.action_dim, cfg.znet(), &mut rng))
    } else {
        let q1 = new_q_network(spec.state_dim, spec.action_dim, cfg.hidden, &mut rng);
        let q2 = new_q_network(spec.state_dim, spec.action_dim, cfg.hidden, &mut rng);
        Critic::Scalar(Twin::new(q1, q2))
    };
    Ok(Agent { policy, critic, temp: EntropyTemp::new(cfg.initial_alpha, cfg.target_entropy())? })
}

/// Optimizer state and RNG streams of a run in progress.
pub struct Trainer {
    cfg: TrainConfig,
    agent: Agent,
    actor_opt: Adam<f64>,
    critic_opts: [Adam<f64>; 2],
    alpha_opt: Adam<f64>,
    buffer: ReplayBuffer,
    probe: Option<Batch>,
    counters: Counters,
    act_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    update_rng: ChaCha8Rng,
    critic_loss_sum: f64,
    policy_loss_sum: f64,
    losses_seen: usize,
}

impl Trainer {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let agent = init_agent(cfg)?;
        let critic_opts = match &agent.critic {
            Critic::Quantile(t) => [Adam::new(cfg.critic_lr, &t.online[0]), Adam::new(cfg.critic_lr, &t.online[1])],
            Critic::Scalar(t) => [Adam::new(cfg.critic_lr, &t.online[0]), Adam::new(cfg.critic_lr, &t.online[1])],
        };
        Ok(Self {
            actor_opt: Adam::new(cfg.actor_lr, &agent.policy),
            critic_opts,
            alpha_opt: EntropyTemp::optimizer(cfg.alpha_lr),
            agent,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            probe: None,
            counters: Counters::default(),
            act_rng: stream(cfg.seed, ACT_STREAM),
            replay_rng: stream(cfg.seed, REPLAY_STREAM),
            update_rng: stream(cfg.seed, UPDATE_STREAM),
            critic_loss_sum: 0.0,
            policy_loss_sum: 0.0,
            losses_seen: 0,
            cfg: cfg.clone(),
        })
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    fn select_action(&mut self, obs: &[f64], t: usize) -> Result<Vec<f64>> {
        let d = self.cfg.env.spec().action_dim;
        if t < self.cfg.warmup_steps {
            let edge = 1.0 - f64::EPSILON;
            return Ok((0..d).map(|_| (2.0 * self.act_rng.gen::<f64>() - 1.0).clamp(-edge, edge)).collect());
        }
        match (&self.agent.critic, self.cfg.variant.optimistic()) {
            (Critic::Quantile(twin), true) => {
                self.counters.ucb_selects += 1;
                self.counters.fraction_draws += 1;
                Ok(ucb_select(&self.agent.policy, twin, obs, &self.cfg.ucb, &mut self.act_rng)?.action)
            }
            _ => Ok(sample_action(&self.agent.policy, obs, &mut self.act_rng)?.0),
        }
    }

    /// One gradient step: policy, critics, target EMA, then temperature.
    pub fn update(&mut self) -> Result<()> {
        let cfg = &self.cfg;
        let batch = self.buffer.sample_batch(cfg.batch_size, &mut self.replay_rng)?;
        let next = NextBatch { rewards: &batch.rewards, dones: &batch.dones, next_states: &batch.next_states };
        let alpha = self.agent.temp.alpha();
        let (pl, cl) = match &mut self.agent.critic {
            Critic::Quantile(twin) => {
                let critic = PolicyCritic::Quantile { twin, n_taus: cfg.n_online };
                let pl = policy_loss(&self.agent.policy, &self.agent.temp, critic, &batch.states, &mut self.update_rng)?;
                self.actor_opt.step(&mut self.agent.policy, &pl.grads)?;
                let hyper = cfg.hyper();
                let targets = if cfg.variant.multi_sample() {
                    self.counters.mtv_targets += 1;
                    mtv_targets_batch(next, &self.agent.policy, &twin.target, alpha, &hyper, &mut self.update_rng)?
                } else {
                    self.counters.single_targets += 1;
                    single_sample_targets(next, &self.agent.policy, &twin.target, alpha, &hyper, &mut self.update_rng)?
                };
                let cl = mtv_loss(&twin.online, &batch.states, &batch.actions, &targets.atoms, &hyper, &mut self.update_rng)?;
                self.counters.fraction_draws += 3;
                for i in 0..2 {
                    self.critic_opts[i].step(&mut twin.online[i], &cl.grads[i])?;
                }
                ema_update(twin, cfg.ema_rate)?;
                (pl, cl)
            }
            Critic::Scalar(twin) => {
                let critic = PolicyCritic::Scalar { twin };
                let pl = policy_loss(&self.agent.policy, &self.agent.temp, critic, &batch.states, &mut self.update_rng)?;
                self.actor_opt.step(&mut self.agent.policy, &pl.grads)?;
                self.counters.classic_targets += 1;
                let y = classic_targets(next, &self.agent.policy, twin, alpha, cfg.gamma, &mut self.update_rng)?;
                let cl = q_loss(&twin.online, &batch.states, &batch.actions, &y)?;
                for i in 0..2 {
                    self.critic_opts[i].step(&mut twin.online[i], &cl.grads[i])?;
                }
                ema_update(twin, cfg.ema_rate)?;
                (pl, cl)
            }
        };
        self.counters.ema_updates += 1;
        let (_, grad) = alpha_loss(&self.agent.temp, &pl.logps)?;
        alpha_step(&mut self.agent.temp, grad, &mut self.alpha_opt)?;
        self.counters.gradient_steps += 1;
        self.critic_loss_sum += cl.loss;
        self.policy_loss_sum += pl.loss;
        self.losses_seen += 1;
        Ok(())
    }

    fn eval_row(&mut self, t: usize, index: u64) -> Result<MetricsRow> {
        let cfg = &self.cfg;
        let base = EVAL_STREAM + 3 * index;
        let policy = &self.agent.policy;
        let det = evaluate(policy, &cfg.env, cfg.eval_episodes, EvalMode::Deterministic, &mut stream(cfg.seed, base))?;
        let stoch = evaluate(policy, &cfg.env, cfg.eval_episodes, EvalMode::Stochastic, &mut stream(cfg.seed, base + 1))?;
        let z_std = match (&self.agent.critic, &self.probe) {
            (Critic::Quantile(twin), Some(probe)) => {
                self.counters.fraction_draws += 1;
                probe_z_std(twin, probe, cfg.n_online, &mut stream(cfg.seed, base + 2))?
            }
            _ => f64::NAN,
        };
        let (critic_loss, policy_loss) = if self.losses_seen == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let n = self.losses_seen as f64;
            (self.critic_loss_sum / n, self.policy_loss_sum / n)
        };
        self.critic_loss_sum = 0.0;
        self.policy_loss_sum = 0.0;
        self.losses_seen = 0;
        Ok(MetricsRow { timestep: t, det_return: det, stoch_return: stoch, z_std, alpha: self.agent.temp.alpha(), critic_loss, policy_loss })
    }

    /// Runs Algorithm 1 to `max_timesteps` and returns the metrics.
    pub fn run(mut self) -> Result<RunOutput> {
        let env: Env = self.cfg.env;
        let mut env_rng = stream(self.cfg.seed, ENV_STREAM);
        let mut metrics = RunMetrics::default();
        let mut evals = 0u64;
        let mut state = env.reset(&mut env_rng);
        let learn_from = self.cfg.warmup_steps.max(1);
        for t in 0..self.cfg.max_timesteps {
            if t % self.cfg.eval_interval == 0 {
                metrics.push(self.eval_row(t, evals)?);
                evals += 1;
            }
            let action = self.select_action(&state.obs, t)?;
            let step = env.step(&state, &action, &mut env_rng)?;
            self.buffer.push(Transition {
                s: state.obs.clone(),
                a: action,
                r: step.reward,
                s2: step.next_state.obs.clone(),
                done: step.terminal,
            });
            state = if step.done() { env.reset(&mut env_rng) } else { step.next_state };
            if t + 1 >= learn_from {
                if self.probe.is_none() {
                    let mut rng = stream(self.cfg.seed, PROBE_STREAM);
                    self.probe = Some(self.buffer.sample_batch(self.cfg.probe_size, &mut rng)?);
                }
                for _ in 0..self.cfg.grad_steps_per_env_step {
                    self.update()?;
                }
            }
        }
        metrics.push(self.eval_row(self.cfg.max_timesteps, evals)?);
        // Measured where the temperature loss looks: a uniform replay sample.
        let final_entropy = if self.counters.gradient_steps > 0 {
            let mut rng = stream(self.cfg.seed, PROBE_STREAM + 1);
            let sample = self.buffer.sample_batch(self.cfg.probe_size, &mut rng)?;
            policy_entropy(&self.agent.policy, &sample.states, ENTROPY_SAMPLES, &mut rng)?
        } else {
            f64::NAN
        };
        Ok(RunOutput { metrics, agent: self.agent, counters: self.counters, final_entropy })
    }
}

/// Trains one run from scratch.
pub fn train(cfg: &TrainConfig) -> Result<RunOutput> {
    Trainer::new(cfg)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::mass;

    fn tiny(variant: Variant, env: Env, steps: usize) -> TrainConfig {
        let mut cfg = TrainConfig::new(variant, env, steps);
        cfg.warmup_steps = 50;
        cfg.batch_size = 8;
        cfg.n_online = 8;
        cfg.m_target = Some(4);
        cfg.k_actions = if variant.multi_sample() { Some(2) } else { None };
        cfg.ucb.n_taus = 8;
        cfg.ucb.candidates = 4;
        cfg.hidden = 8;
        cfg.n_cos = 8;
        cfg.eval_interval = 40;
        cfg.eval_episodes = 2;
        cfg.probe_size = 16;
        cfg
    }

    #[test]
    fn zero_policy_return_on_noisy_mass_matches_the_closed_form() {
        // zero mean and log-std at the floor: actions are tanh(0 ± e^-20) ≈ 0
        let pi = GaussianPolicy::fixed(4, &[0.0, 0.0], &[-20.0, -20.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let episodes = 4000;
        let mc = evaluate(&pi, &Env::NoisyMass, episodes, EvalMode::Stochastic, &mut rng).unwrap();

        // Per axis, z = (p, v) evolves as z' = A z + b ε with the action off;
        // the reward is −c·E‖p'‖², so only second moments are needed.
        let (dt, k, sd) = (mass::DT, mass::DAMPING, mass::NOISE);
        let (mut pp, mut pv, mut vv) = (mass::START * mass::START / 3.0, 0.0, 0.0);
        let mut expected = 0.0;
        for _ in 0..mass::HORIZON {
            let vv2 = k * k * vv + sd * sd;
            let pv2 = k * pv + dt * vv2;
            let pp2 = pp + 2.0 * dt * k * pv + dt * dt * vv2;
            (pp, pv, vv) = (pp2, pv2, vv2);
            expected -= mass::POS_COST * 2.0 * pp;
        }
        // one episode's return has a spread of about 5, mostly from the start
        assert!((mc - expected).abs() < 4.0 * 5.0 / (episodes as f64).sqrt(), "mc {mc} expected {expected}");
    }

    #[test]
    fn evaluation_is_repeatable_and_stochastic_spread_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pi = GaussianPolicy::new(1, 1, 8, &mut rng);
        let det = |seed| evaluate(&pi, &Env::BimodalGoal, 5, EvalMode::Deterministic, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(det(3), det(3));
        let spread = |episodes: usize| {
            let vals: Vec<f64> = (0..40)
                .map(|s| evaluate(&pi, &Env::BimodalGoal, episodes, EvalMode::Stochastic, &mut ChaCha8Rng::seed_from_u64(100 + s)).unwrap())
                .collect();
            mean_std(&vals).unwrap().1.powi(2)
        };
        let (v1, v16) = (spread(1), spread(16));
        // variance of the mean scales as 1/episodes; generous band for 40 repeats
        assert!(v16 < v1 / 4.0 && v16 > v1 / 64.0, "var(1) {v1} var(16) {v16}");
    }

    #[test]
    fn metrics_rows_and_determinism() {
        let cfg = tiny(Variant::E2dc, Env::BimodalGoal, 120);
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(a.metrics.to_csv(), b.metrics.to_csv());
        let ts: Vec<usize> = a.metrics.rows.iter().map(|r| r.timestep).collect();
        assert_eq!(ts, vec![0, 40, 80, 120]);
        assert!(a.metrics.rows[0].z_std.is_nan() && a.metrics.rows[0].critic_loss.is_nan());
        assert!(a.metrics.rows[3].z_std.is_finite() && a.metrics.rows[3].critic_loss.is_finite());
        assert!(a.final_entropy.is_finite());
    }

    #[test]
    fn single_action_multi_sample_run_reproduces_the_single_sample_run() {
        let iqn = tiny(Variant::Iqn, Env::BimodalGoal, 100);
        let mut mtv = iqn.clone();
        mtv.variant = Variant::IqnMtv;
        mtv.k_actions = Some(1);
        let (a, b) = (train(&iqn).unwrap(), train(&mtv).unwrap());
        assert_eq!(a.metrics.to_csv(), b.metrics.to_csv());
        assert_eq!(a.agent, b.agent);
        assert_eq!((a.counters.single_targets, b.counters.mtv_targets), (51, 51));
    }

    #[test]
    fn variants_exercise_only_their_machinery() {
        let steps = 80;
        let run = |v| train(&tiny(v, Env::BimodalGoal, steps)).unwrap().counters;
        let sac = run(Variant::Sac);
        assert_eq!(sac.fraction_draws, 0);
        assert_eq!(sac.ucb_selects + sac.mtv_targets + sac.single_targets, 0);
        assert_eq!(sac.classic_targets, 31);
        for v in [Variant::Iqn, Variant::IqnMtv] {
            assert_eq!(run(v).ucb_selects, 0, "{v}");
        }
        let e2dc = run(Variant::E2dc);
        assert_eq!((e2dc.ucb_selects, e2dc.mtv_targets, e2dc.single_targets), (30, 31, 0));
        assert_eq!(run(Variant::IqnUcb).single_targets, 31);
        assert_eq!(e2dc.gradient_steps, e2dc.ema_updates);
    }

    #[test]
    fn warmup_only_run_keeps_initial_networks() {
        let mut cfg = tiny(Variant::Iqn, Env::NoisyMass, 30);
        cfg.warmup_steps = 1000;
        let out = train(&cfg).unwrap();
        assert_eq!(out.agent, init_agent(&cfg).unwrap());
        assert_eq!(out.counters.gradient_steps, 0);
        assert!(out.final_entropy.is_nan());
        assert_eq!(out.metrics.rows.len(), 2);
    }
}
