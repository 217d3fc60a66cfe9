//! Self-check suites shared by the command line and the test targets:
//! finite-difference validation of every loss, operator contraction over
//! random MDPs, and distributional against scalar policy evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::actor::{alpha_loss, policy_loss, EntropyTemp, GaussianPolicy, PolicyCritic};
use crate::dporacle::{
    apply_distributional_bellman, fixed_point, policy_evaluation, random_policy, sup_wasserstein, MDPSpec, TabularZ,
};
use crate::distmath::EmpiricalDistribution;
use crate::error::Result;
use crate::nnkit::{finite_diff_check, Adam, Parameters, Tensor};
use crate::targets::{mtv_loss, CriticHyper};
use crate::znet::{z_value, TwinZ, ZNetConfig, ZNetwork};
use crate::distmath::QuantileFractions;

pub const GRAD_TOLERANCE: f64 = 1e-5;
pub const CONTRACTION_SLACK: f64 = 1e-6;
pub const MEAN_TOLERANCE: f64 = 1e-6;

const FD_STEP: f64 = 1e-6;
const NET: ZNetConfig = ZNetConfig { hidden: 6, n_cos: 4 };

/// Worst relative finite-difference error of each loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradReport {
    pub networks: usize,
    pub critic: f64,
    pub policy: f64,
    pub alpha: f64,
}

impl GradReport {
    pub fn worst(&self) -> f64 {
        self.critic.max(self.policy).max(self.alpha)
    }

    pub fn passed(&self) -> bool {
        self.worst() < GRAD_TOLERANCE
    }
}

fn with_params<P: Parameters<f64> + Clone>(net: &P, params: &[Tensor<f64>]) -> P {
    let mut out = net.clone();
    for (t, v) in out.tensors_mut().into_iter().zip(params) {
        *t = v.clone();
    }
    out
}

fn params_of<P: Parameters<f64>>(net: &P) -> Vec<Tensor<f64>> {
    net.tensors().into_iter().cloned().collect()
}

/// Checks the critic, policy and temperature losses on `networks` random
/// small networks and batches.
pub fn grad_check(networks: usize, seed: u64) -> Result<GradReport> {
    let mut report = GradReport { networks, critic: 0.0, policy: 0.0, alpha: 0.0 };
    for i in 0..networks {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let (sd, ad, rows) = (rng.gen_range(1..=3), rng.gen_range(1..=2), rng.gen_range(1..=4));
        let twin = TwinZ::random(sd, ad, NET, &mut rng);
        let policy = GaussianPolicy::new(sd, ad, 6, &mut rng);
        let states = Tensor::matrix(rows, sd, (0..rows * sd).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let actions = Tensor::matrix(rows, ad, (0..rows * ad).map(|_| rng.gen_range(-0.9..0.9)).collect())?;
        let hyper = CriticHyper { gamma: 0.9, n_online: 5, m_target: 3, k_actions: 2, kappa: rng.gen_range(0.2..2.0) };
        let targets = Tensor::matrix(rows, 6, (0..rows * 6).map(|_| rng.gen_range(-2.0..2.0)).collect())?;
        let loss_seed = rng.gen::<u64>();

        let critic = |pair: &[ZNetwork<f64>; 2]| {
            mtv_loss(pair, &states, &actions, &targets, &hyper, &mut ChaCha8Rng::seed_from_u64(loss_seed))
        };
        let base = critic(&twin.online)?;
        for which in 0..2 {
            let err = finite_diff_check(
                |p| {
                    let mut pair = twin.online.clone();
                    pair[which] = with_params(&twin.online[which], p);
                    critic(&pair).map(|l| l.loss).unwrap_or(f64::NAN)
                },
                &params_of(&twin.online[which]),
                &base.grads[which],
                FD_STEP,
            );
            report.critic = report.critic.max(err);
        }

        let temp = EntropyTemp::new(rng.gen_range(0.05..1.0), -(ad as f64))?;
        let actor = |pi: &GaussianPolicy<f64>| {
            let critic = PolicyCritic::Quantile { twin: &twin, n_taus: 4 };
            policy_loss(pi, &temp, critic, &states, &mut ChaCha8Rng::seed_from_u64(loss_seed))
        };
        let base = actor(&policy)?;
        let err = finite_diff_check(
            |p| actor(&with_params(&policy, p)).map(|l| l.loss).unwrap_or(f64::NAN),
            &params_of(&policy),
            &base.grads,
            FD_STEP,
        );
        report.policy = report.policy.max(err);

        let (_, grad) = alpha_loss(&temp, &base.logps)?;
        let err = finite_diff_check(
            |p| {
                let t = EntropyTemp { log_alpha: p[0].values()[0], ..temp };
                alpha_loss(&t, &base.logps).map(|l| l.0).unwrap_or(f64::NAN)
            },
            &[Tensor::scalar(temp.log_alpha)],
            &[Tensor::scalar(grad)],
            FD_STEP,
        );
        report.alpha = report.alpha.max(err);
    }
    Ok(report)
}

/// Outcome of applying the operator to random pairs of return tables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionReport {
    pub cases: usize,
    /// Largest `sup-W₁(TZ₁, TZ₂) / sup-W₁(Z₁, Z₂)`.
    pub max_ratio: f64,
    /// Discount of the case that attained `max_ratio`.
    pub gamma_at_max: f64,
    /// Largest `sup-W₁(TZ₁, TZ₂) − γ·sup-W₁(Z₁, Z₂)`; at most the slack.
    pub max_excess: f64,
}

impl ContractionReport {
    pub fn passed(&self) -> bool {
        self.max_excess <= CONTRACTION_SLACK
    }
}

/// Random MDPs with up to 6 states, 3 actions and 4 reward atoms, against
/// 64-atom tables, so the operator output regularly exceeds the projection
/// size.
pub fn contraction_suite(cases: usize, seed: u64) -> Result<ContractionReport> {
    let mut report = ContractionReport { cases, max_ratio: 0.0, gamma_at_max: f64::NAN, max_excess: f64::NEG_INFINITY };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let (n, m) = (rng.gen_range(1..=6), rng.gen_range(1..=3));
        let gamma = rng.gen_range(0.5..0.99);
        let mdp = MDPSpec::random(n, m, 4, gamma, &mut rng);
        let pi = random_policy(n, m, &mut rng);
        let z1 = TabularZ::random(n, m, 64, -10.0, 10.0, &mut rng);
        let z2 = TabularZ::random(n, m, 64, -10.0, 10.0, &mut rng);
        let before = sup_wasserstein(&z1, &z2)?;
        let after = sup_wasserstein(&apply_distributional_bellman(&mdp, &pi, &z1)?, &apply_distributional_bellman(&mdp, &pi, &z2)?)?;
        report.max_excess = report.max_excess.max(after - gamma * before);
        if before > 0.0 && after / before > report.max_ratio {
            report.max_ratio = after / before;
            report.gamma_at_max = gamma;
        }
    }
    Ok(report)
}

/// Largest gap between fixed-point means and scalar policy evaluation over
/// `cases` random MDPs.
pub fn mean_consistency(cases: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (n, m) = (rng.gen_range(1..=4), rng.gen_range(1..=3));
        let gamma = rng.gen_range(0.3..0.9);
        let mdp = MDPSpec::random(n, m, 3, gamma, &mut rng);
        let pi = random_policy(n, m, &mut rng);
        let z = fixed_point(&mdp, &pi, 1e-10)?;
        let q = policy_evaluation(&mdp, &pi)?;
        for (zm, qm) in z.means().iter().flatten().zip(q.iter().flatten()) {
            worst = worst.max((zm - qm).abs());
        }
    }
    Ok(worst)
}

/// Two-component Gaussian mixture used as a fixed regression target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mixture {
    pub weight: f64,
    pub means: [f64; 2],
    pub stds: [f64; 2],
}

/// Equal halves at ±1 with spread 0.3: two well separated modes.
pub const BIMODAL: Mixture = Mixture { weight: 0.5, means: [-1.0, 1.0], stds: [0.3, 0.3] };

impl Mixture {
    pub fn cdf(&self, x: f64) -> f64 {
        let phi = |m: f64, s: f64| 0.5 * (1.0 + libm::erf((x - m) / (s * std::f64::consts::SQRT_2)));
        self.weight * phi(self.means[0], self.stds[0]) + (1.0 - self.weight) * phi(self.means[1], self.stds[1])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let i = usize::from(rng.gen::<f64>() >= self.weight);
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        self.means[i] + self.stds[i] * z
    }

    /// `∫ |F_d(x) − F(x)| dx` by Simpson's rule between consecutive atoms
    /// of `d`, over the span where either CDF is not yet 0 or 1.
    pub fn wasserstein1(&self, d: &EmpiricalDistribution<f64>) -> f64 {
        let pairs = d.sorted_pairs();
        let reach = 12.0 * self.stds[0].max(self.stds[1]);
        let lo = (self.means[0].min(self.means[1]) - reach).min(pairs[0].0);
        let hi = (self.means[0].max(self.means[1]) + reach).max(pairs[pairs.len() - 1].0);
        let mut edges = vec![lo];
        edges.extend(pairs.iter().map(|p| p.0));
        edges.push(hi);
        let mut level = 0.0;
        let mut total = 0.0;
        for (i, w) in edges.windows(2).enumerate() {
            if i > 0 {
                level += pairs[i - 1].1;
            }
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let pieces = (((b - a) / 1e-3).ceil() as usize).max(2) & !1;
            let h = (b - a) / pieces as f64;
            let f = |x: f64| (level - self.cdf(x)).abs();
            let mut sum = f(a) + f(b);
            for k in 1..pieces {
                sum += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * k as f64);
            }
            total += sum * h / 3.0;
        }
        total
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantileFit {
    /// Gradient steps taken.
    pub steps: usize,
    /// W1 between the 64 midpoint quantiles of the head and the mixture.
    pub w1: f64,
}

const FIT_CHECK_EVERY: usize = 500;

/// Trains a twin quantile head with the critic loss against i.i.d. mixture
/// atoms at a fixed input, measuring its first network every 500 steps.
/// Stops early once the fit is below `stop_below`.
///
/// `kappa` must be small against the mixture's spread: inside `|u| < κ` the
/// loss is quadratic and its minimizer drifts from quantiles to expectiles.
pub fn quantile_fit(mixture: &Mixture, kappa: f64, max_steps: usize, stop_below: f64, seed: u64) -> Result<QuantileFit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ZNetConfig { hidden: 32, n_cos: 32 };
    let mut twin = TwinZ::random(1, 1, cfg, &mut rng);
    let mut opts = [Adam::new(1e-3, &twin.online[0]), Adam::new(1e-3, &twin.online[1])];
    let (rows, m, k) = (16, 4, 4);
    let hyper = CriticHyper { gamma: 0.0, n_online: 32, m_target: m, k_actions: k, kappa };
    // a zero input would zero the trunk features and hide τ from the head
    let states = Tensor::full(&[rows, 1], 1.0);
    let actions = Tensor::full(&[rows, 1], 0.5);
    let taus = QuantileFractions::new((0..64).map(|i| (i as f64 + 0.5) / 64.0).collect())?;
    let measure = |net: &ZNetwork<f64>| -> Result<f64> {
        Ok(mixture.wasserstein1(&EmpiricalDistribution::uniform(z_value(net, &[1.0], &[0.5], &taus)?)?))
    };
    let mut fit = QuantileFit { steps: 0, w1: measure(&twin.online[0])? };
    while fit.steps < max_steps && fit.w1 >= stop_below {
        let atoms: Vec<f64> = (0..rows * m * k).map(|_| mixture.sample(&mut rng)).collect();
        let targets = Tensor::matrix(rows, m * k, atoms)?;
        let loss = mtv_loss(&twin.online, &states, &actions, &targets, &hyper, &mut rng)?;
        for (i, opt) in opts.iter_mut().enumerate() {
            opt.step(&mut twin.online[i], &loss.grads[i])?;
        }
        fit.steps += 1;
        if fit.steps % FIT_CHECK_EVERY == 0 || fit.steps == max_steps {
            fit.w1 = measure(&twin.online[0])?;
        }
    }
    Ok(fit)
}
