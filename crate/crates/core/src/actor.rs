//! Squashed-Gaussian policy `a = tanh(μ(s) + σ(s)·ξ)`, its improvement loss
//! and the entropy temperature.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nnkit::{Activation, Adam, Gradients, Graph, Linear, LinearVars, Mlp, MlpVars, Parameters, Tensor, Var};
use crate::scalar::{lit, Scalar};
use crate::znet::{QNetwork, TwinQ, TwinZ};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy<S> {
    trunk: Mlp<S>,
    mean: Linear<S>,
    log_std: Linear<S>,
}

impl<S: Scalar> GaussianPolicy<S> {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            trunk: Mlp::new(&[state_dim, hidden, hidden], Activation::Relu, Activation::Relu, rng),
            mean: Linear::new(hidden, action_dim, rng),
            log_std: Linear::new(hidden, action_dim, rng),
        }
    }

    pub fn zeros(state_dim: usize, action_dim: usize, hidden: usize) -> Self {
        Self {
            trunk: Mlp::zeros(&[state_dim, hidden, hidden], Activation::Relu, Activation::Relu),
            mean: Linear::zeros(hidden, action_dim),
            log_std: Linear::zeros(hidden, action_dim),
        }
    }

    /// State-independent policy with fixed pre-squash mean and log-std.
    pub fn fixed(state_dim: usize, mean: &[S], log_std: &[S]) -> Self {
        let d = mean.len();
        let mut p = Self::zeros(state_dim, d, 1);
        p.mean.bias.values_mut().copy_from_slice(mean);
        p.log_std.bias.values_mut().copy_from_slice(log_std);
        p
    }

    pub fn from_layers(layers: Vec<Linear<S>>) -> Result<Self> {
        if layers.len() != 4 {
            return Err(Error::shape(format!("policy has 4 layers, got {}", layers.len())));
        }
        let mut it = layers.into_iter();
        let trunk = Mlp::from_layers(vec![it.next().unwrap(), it.next().unwrap()], vec![Activation::Relu; 2])?;
        let (mean, log_std) = (it.next().unwrap(), it.next().unwrap());
        if mean.inputs() != trunk.output_dim() || log_std.inputs() != trunk.output_dim() || mean.outputs() != log_std.outputs() {
            return Err(Error::shape("policy heads do not match the trunk"));
        }
        Ok(Self { trunk, mean, log_std })
    }

    pub fn layers(&self) -> Vec<&Linear<S>> {
        let mut v: Vec<&Linear<S>> = self.trunk.layers().iter().collect();
        v.push(&self.mean);
        v.push(&self.log_std);
        v
    }

    pub fn state_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.mean.outputs()
    }

    pub fn hidden(&self) -> usize {
        self.trunk.output_dim()
    }

    pub fn mean_head_mut(&mut self) -> &mut Linear<S> {
        &mut self.mean
    }

    pub fn bind(&self, g: &mut Graph<S>, trainable: bool) -> PolicyVars {
        PolicyVars {
            trunk: self.trunk.bind(g, trainable),
            mean: self.mean.bind(g, trainable),
            log_std: self.log_std.bind(g, trainable),
        }
    }

    fn check_states(&self, states: &Tensor<S>) -> Result<()> {
        if states.cols() != self.state_dim() {
            return Err(Error::shape(format!(
                "policy expects state width {}, got {:?}",
                self.state_dim(),
                states.shape()
            )));
        }
        Ok(())
    }
}

impl<S: Scalar> Parameters<S> for GaussianPolicy<S> {
    fn tensors(&self) -> Vec<&Tensor<S>> {
        let mut v = self.trunk.tensors();
        v.extend([&self.mean.weight, &self.mean.bias, &self.log_std.weight, &self.log_std.bias]);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut v = self.trunk.tensors_mut();
        v.extend([&mut self.mean.weight, &mut self.mean.bias, &mut self.log_std.weight, &mut self.log_std.bias]);
        v
    }
}

#[derive(Clone, Debug)]
pub struct PolicyVars {
    trunk: MlpVars,
    mean: LinearVars,
    log_std: LinearVars,
}

impl PolicyVars {
    /// Reparameterized sample for `[B × ds]` states given standard-normal
    /// noise `xi` (`[B × d]`). Returns the `[B × d]` action and `[B × 1]`
    /// log-density nodes.
    pub fn sample<S: Scalar>(&self, g: &mut Graph<S>, states: Var, xi: &Tensor<S>) -> (Var, Var) {
        let h = self.trunk.forward(g, states);
        let mu = self.mean.forward(g, h);
        let ls = self.log_std.forward(g, h);
        let ls = g.clamp(ls, lit(LOG_STD_MIN), lit(LOG_STD_MAX));
        let sigma = g.exp(ls);
        let noise = g.mul_const(sigma, xi.clone());
        let pre = g.add(mu, noise);
        let action = squash(g, pre);

        let half_log_2pi = lit::<S>(0.5 * (2.0 * std::f64::consts::PI).ln());
        let base = xi.map(|x| lit::<S>(-0.5) * x * x - half_log_2pi);
        let base = g.constant(base);
        let gauss = g.sub(base, ls);
        let corr = g.log_one_minus_tanh_sq(pre);
        let per_dim = g.sub(gauss, corr);
        let logp = g.sum_cols(per_dim);
        (action, logp)
    }

    pub fn deterministic<S: Scalar>(&self, g: &mut Graph<S>, states: Var) -> Var {
        let h = self.trunk.forward(g, states);
        let mu = self.mean.forward(g, h);
        squash(g, mu)
    }

    pub fn grads<S: Scalar>(&self, grads: &Gradients<S>) -> Vec<Tensor<S>> {
        let mut v = self.trunk.grads(grads);
        v.extend([
            grads.wrt(self.mean.weight),
            grads.wrt(self.mean.bias),
            grads.wrt(self.log_std.weight),
            grads.wrt(self.log_std.bias),
        ]);
        v
    }
}

/// `tanh`, kept strictly inside (−1, 1) even where it rounds to ±1.
fn squash<S: Scalar>(g: &mut Graph<S>, pre: Var) -> Var {
    let a = g.tanh(pre);
    let edge = S::one() - S::epsilon();
    g.clamp(a, -edge, edge)
}

pub(crate) fn standard_normal<S: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<S> {
    (0..n).map(|_| lit(rng.sample::<f64, _>(StandardNormal))).collect()
}

/// Actions and log-densities for a batch of states under fixed noise.
pub fn sample_with_noise<S: Scalar>(
    params: &GaussianPolicy<S>,
    states: &Tensor<S>,
    xi: &Tensor<S>,
) -> Result<(Tensor<S>, Vec<S>)> {
    params.check_states(states)?;
    if xi.rows() != states.rows() || xi.cols() != params.action_dim() {
        return Err(Error::shape(format!("noise {:?} for {} states", xi.shape(), states.rows())));
    }
    let mut g = Graph::new();
    let vars = params.bind(&mut g, false);
    let s = g.constant(states.clone());
    let (a, logp) = vars.sample(&mut g, s, xi);
    Ok((g.value(a).clone(), g.value(logp).values().to_vec()))
}

/// Draws the `[B × d]` noise first, then evaluates the batch.
pub fn sample_actions<S: Scalar, R: Rng + ?Sized>(
    params: &GaussianPolicy<S>,
    states: &Tensor<S>,
    rng: &mut R,
) -> Result<(Tensor<S>, Vec<S>)> {
    let d = params.action_dim();
    let xi = Tensor::matrix(states.rows(), d, standard_normal(states.rows() * d, rng))?;
    sample_with_noise(params, states, &xi)
}

/// One reparameterized action and its log-density for a single state.
pub fn sample_action<S: Scalar, R: Rng + ?Sized>(
    params: &GaussianPolicy<S>,
    s: &[S],
    rng: &mut R,
) -> Result<(Vec<S>, S)> {
    let st = Tensor::matrix(1, s.len(), s.to_vec())?;
    let (a, logp) = sample_actions(params, &st, rng)?;
    Ok((a.into_values(), logp[0]))
}

pub fn deterministic_actions<S: Scalar>(params: &GaussianPolicy<S>, states: &Tensor<S>) -> Result<Tensor<S>> {
    params.check_states(states)?;
    let mut g = Graph::new();
    let vars = params.bind(&mut g, false);
    let s = g.constant(states.clone());
    let a = vars.deterministic(&mut g, s);
    Ok(g.value(a).clone())
}

/// `tanh(μ(s))`.
pub fn deterministic_action<S: Scalar>(params: &GaussianPolicy<S>, s: &[S]) -> Result<Vec<S>> {
    let st = Tensor::matrix(1, s.len(), s.to_vec())?;
    Ok(deterministic_actions(params, &st)?.into_values())
}

/// Temperature `α = exp(log_alpha)` and its entropy target `H̄`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyTemp<S> {
    pub log_alpha: S,
    pub target_entropy: S,
}

impl<S: Scalar> EntropyTemp<S> {
    pub fn new(alpha: S, target_entropy: S) -> Result<Self> {
        if !(alpha > S::zero()) {
            return Err(Error::contract(format!("initial alpha must be > 0, got {alpha}")));
        }
        Ok(Self { log_alpha: alpha.ln(), target_entropy })
    }

    /// `H̄ = −action_dim`.
    pub fn default_target(action_dim: usize) -> S {
        -lit::<S>(action_dim as f64)
    }

    pub fn alpha(&self) -> S {
        self.log_alpha.exp()
    }

    /// Adam state for the single `log_alpha` parameter.
    pub fn optimizer(lr: S) -> Adam<S> {
        Adam::for_shapes(lr, [vec![1]])
    }
}

/// `mean(−log_alpha · (logp + H̄))` and its derivative in `log_alpha`
/// (log-probabilities are constants).
pub fn alpha_loss<S: Scalar>(temp: &EntropyTemp<S>, logps: &[S]) -> Result<(S, S)> {
    if logps.is_empty() {
        return Err(Error::contract("alpha loss over an empty batch"));
    }
    let n = lit::<S>(logps.len() as f64);
    let mean_gap = logps.iter().map(|&l| l + temp.target_entropy).sum::<S>() / n;
    Ok((-temp.log_alpha * mean_gap, -mean_gap))
}

/// One Adam step on `log_alpha`.
pub fn alpha_step<S: Scalar>(temp: &mut EntropyTemp<S>, grad: S, opt: &mut Adam<S>) -> Result<()> {
    let mut p = Tensor::scalar(temp.log_alpha);
    opt.step_tensors(&mut [&mut p], &[Tensor::scalar(grad)])?;
    temp.log_alpha = p.values()[0];
    Ok(())
}

/// Which critic supplies `Q(s, a)` to the policy loss.
#[derive(Clone, Copy, Debug)]
pub enum PolicyCritic<'a, S> {
    /// Mean over `n_taus` fractions of the twin-min quantile values.
    Quantile { twin: &'a TwinZ<S>, n_taus: usize },
    /// Minimum of two scalar Q networks.
    Scalar { twin: &'a TwinQ<S> },
}

#[derive(Clone, Debug)]
pub struct PolicyLoss<S> {
    pub loss: S,
    /// In [`Parameters::tensors`] order of the policy.
    pub grads: Vec<Tensor<S>>,
    /// Detached log-densities of the sampled actions, reused by the α update.
    pub logps: Vec<S>,
}

/// `mean_b(α·log π(a_b|s_b) − Q(s_b, a_b))` with `a_b` reparameterized;
/// only the policy receives gradients. Noise is drawn before fractions.
pub fn policy_loss<S: Scalar, R: Rng + ?Sized>(
    params: &GaussianPolicy<S>,
    temp: &EntropyTemp<S>,
    critic: PolicyCritic<'_, S>,
    states: &Tensor<S>,
    rng: &mut R,
) -> Result<PolicyLoss<S>> {
    params.check_states(states)?;
    let b = states.rows();
    if b == 0 {
        return Err(Error::contract("policy loss over an empty batch"));
    }
    let d = params.action_dim();
    let xi = Tensor::matrix(b, d, standard_normal(b * d, rng))?;

    let mut g = Graph::new();
    let pv = params.bind(&mut g, true);
    let s = g.constant(states.clone());
    let (a, logp) = pv.sample(&mut g, s, &xi);
    let sa = g.concat_cols(s, a);
    let q = match critic {
        PolicyCritic::Quantile { twin, n_taus } => {
            if n_taus == 0 {
                return Err(Error::contract("policy loss needs at least one fraction"));
            }
            let taus: Vec<S> = crate::distmath::fill_uniform(b * n_taus, rng);
            let z1 = twin.online[0].bind(&mut g, false).quantiles(&mut g, sa, &taus, n_taus);
            let z2 = twin.online[1].bind(&mut g, false).quantiles(&mut g, sa, &taus, n_taus);
            let z = g.min(z1, z2);
            let total = g.sum_cols(z);
            g.scale(total, S::one() / lit(n_taus as f64))
        }
        PolicyCritic::Scalar { twin } => {
            let q1 = twin.online[0].bind(&mut g, false).forward(&mut g, sa);
            let q2 = twin.online[1].bind(&mut g, false).forward(&mut g, sa);
            g.min(q1, q2)
        }
    };
    let weighted = g.scale(logp, temp.alpha());
    let diff = g.sub(weighted, q);
    let loss = g.mean_all(diff);
    let grads = g.backward(loss)?;
    Ok(PolicyLoss { loss: g.scalar(loss), grads: pv.grads(&grads), logps: g.value(logp).values().to_vec() })
}

/// Minimum of the two online Q networks, used by tests and the SAC baseline.
pub fn scalar_q_min<S: Scalar>(twin: &TwinQ<S>, sa: &Tensor<S>) -> Result<Vec<S>> {
    let q = |n: &QNetwork<S>| crate::nnkit::mlp_forward(n, sa);
    let (q1, q2) = (q(&twin.online[0])?, q(&twin.online[1])?);
    Ok(q1.values().iter().zip(q2.values()).map(|(&x, &y)| x.min(y)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::finite_diff_check;
    use crate::znet::{Twin, ZNetConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_sigma_gives_tanh_of_mean() {
        let p = GaussianPolicy::<f64>::fixed(1, &[0.7], &[-30.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let (a, logp) = sample_action(&p, &[0.0], &mut rng).unwrap();
            assert!((a[0] - 0.7f64.tanh()).abs() < 1e-8);
            assert!(logp.is_finite());
        }
    }

    #[test]
    fn zero_noise_at_zero_mean() {
        let p = GaussianPolicy::<f64>::fixed(1, &[0.0], &[1.5]);
        let (a, logp) = sample_with_noise(&p, &Tensor::matrix(1, 1, vec![0.0]).unwrap(), &Tensor::matrix(1, 1, vec![0.0]).unwrap()).unwrap();
        assert_eq!(a.values(), &[0.0]);
        let expect = -1.5 - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((logp[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn deterministic_action_consistency() {
        let z = GaussianPolicy::<f64>::zeros(3, 2, 4);
        assert_eq!(deterministic_action(&z, &[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = GaussianPolicy::<f64>::new(3, 2, 8, &mut rng);
        let s = Tensor::matrix(2, 3, vec![0.1, -0.4, 0.9, 1.2, 0.0, -2.0]).unwrap();
        let det = deterministic_actions(&p, &s).unwrap();
        assert_eq!(det, deterministic_actions(&p, &s).unwrap());
        let (a, _) = sample_with_noise(&p, &s, &Tensor::zeros(&[2, 2])).unwrap();
        assert_eq!(a, det);
    }

    /// Differential entropy of tanh(N(μ, σ²)) by Simpson quadrature in the
    /// pre-squash variable: H = H_gauss + E[log(1 − tanh² u)].
    fn squashed_entropy_quadrature(mu: f64, sigma: f64) -> f64 {
        let n = 20_000;
        let (lo, hi) = (mu - 12.0 * sigma, mu + 12.0 * sigma);
        let h = (hi - lo) / n as f64;
        let f = |u: f64| {
            let z = (u - mu) / sigma;
            let pdf = (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            pdf * (1.0 - u.tanh().powi(2)).max(1e-300).ln()
        };
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(lo + i as f64 * h);
        }
        let gauss = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * sigma * sigma).ln();
        gauss + acc * h / 3.0
    }

    #[test]
    fn monte_carlo_entropy_matches_quadrature() {
        let (mu, sigma) = (0.4f64, 0.8f64);
        let p = GaussianPolicy::<f64>::fixed(1, &[mu], &[sigma.ln()]);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 100_000;
        let states = Tensor::zeros(&[n, 1]);
        let (a, logp) = sample_actions(&p, &states, &mut rng).unwrap();
        assert!(a.values().iter().all(|&x| x > -1.0 && x < 1.0));
        let mc = -logp.iter().sum::<f64>() / n as f64;
        let quad = squashed_entropy_quadrature(mu, sigma);
        assert!((mc - quad).abs() < 0.01, "mc {mc} quad {quad}");
    }

    #[test]
    fn extreme_log_std_keeps_actions_inside_and_logp_finite() {
        let p = GaussianPolicy::<f64>::fixed(1, &[30.0], &[50.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, logp) = sample_actions(&p, &Tensor::zeros(&[500, 1]), &mut rng).unwrap();
        assert!(a.values().iter().all(|&x| x > -1.0 && x < 1.0));
        assert!(logp.iter().all(|l| l.is_finite()));
    }

    fn linear_q(weight_on_action: f64) -> TwinQ<f64> {
        // q(s, a) = w · a₀ for a (1 state, 1 action) input
        let l = Linear::from_parts(Tensor::matrix(2, 1, vec![0.0, weight_on_action]).unwrap(), Tensor::vector(vec![0.0])).unwrap();
        let q = Mlp::from_layers(vec![l], vec![Activation::Identity]).unwrap();
        Twin::new(q.clone(), q)
    }

    #[test]
    fn zero_alpha_constant_critic_has_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = GaussianPolicy::<f64>::new(1, 1, 8, &mut rng);
        let twin = linear_q(0.0);
        let temp = EntropyTemp { log_alpha: f64::NEG_INFINITY, target_entropy: -1.0 };
        let states = Tensor::matrix(4, 1, vec![0.1, 0.2, -0.3, 0.9]).unwrap();
        let out = policy_loss(&p, &temp, PolicyCritic::Scalar { twin: &twin }, &states, &mut rng).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grads.iter().all(|g| g.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn high_q_for_positive_actions_pushes_mean_up() {
        let p = GaussianPolicy::<f64>::fixed(1, &[0.0], &[-1.0]);
        let twin = linear_q(100.0);
        let temp = EntropyTemp::new(0.01, -1.0).unwrap();
        let states = Tensor::zeros(&[16, 1]);
        let eval = |params: &[Tensor<f64>]| {
            let mut q = p.clone();
            for (t, v) in q.tensors_mut().into_iter().zip(params) {
                *t = v.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            policy_loss(&q, &temp, PolicyCritic::Scalar { twin: &twin }, &states, &mut rng).unwrap()
        };
        let params: Vec<Tensor<f64>> = p.tensors().into_iter().cloned().collect();
        let base = eval(&params);
        // mean-head bias is tensor index 5 (trunk 4 tensors, mean weight, mean bias)
        assert!(base.grads[5].values()[0] < 0.0);
        let err = finite_diff_check(|x| eval(x).loss, &params, &base.grads, 1e-6);
        assert!(err < 1e-5, "err {err}");
    }

    #[test]
    fn quantile_policy_loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let p = GaussianPolicy::<f64>::new(2, 2, 8, &mut rng);
        let twin = TwinZ::random(2, 2, ZNetConfig { hidden: 8, n_cos: 8 }, &mut rng);
        let temp = EntropyTemp::new(0.3, -2.0).unwrap();
        let states = Tensor::matrix(3, 2, vec![0.5, -0.1, 0.0, 1.0, -0.7, 0.3]).unwrap();
        let eval = |params: &[Tensor<f64>]| {
            let mut q = p.clone();
            for (t, v) in q.tensors_mut().into_iter().zip(params) {
                *t = v.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            policy_loss(&q, &temp, PolicyCritic::Quantile { twin: &twin, n_taus: 5 }, &states, &mut rng).unwrap()
        };
        let params: Vec<Tensor<f64>> = p.tensors().into_iter().cloned().collect();
        let base = eval(&params);
        let err = finite_diff_check(|x| eval(x).loss, &params, &base.grads, 1e-6);
        assert!(err < 1e-5, "err {err}");
    }

    #[test]
    fn alpha_loss_signs() {
        let temp = EntropyTemp::new(0.5, -1.0).unwrap();
        let (_, g) = alpha_loss(&temp, &[1.0, 1.0]).unwrap();
        assert_eq!(g, 0.0);
        // logp above −H̄: entropy too low, descent must raise α
        let (_, g) = alpha_loss(&temp, &[2.0, 1.5]).unwrap();
        assert!(g < 0.0);
        let mut t = temp;
        let mut opt = EntropyTemp::optimizer(0.1);
        alpha_step(&mut t, g, &mut opt).unwrap();
        assert!(t.alpha() > temp.alpha());
        assert!(alpha_loss(&temp, &[]).is_err());
        assert!(EntropyTemp::new(0.0, -1.0).is_err());
        let (l, g): (f64, f64) = alpha_loss(&temp, &[0.3, -0.2]).unwrap();
        let h = 1e-6;
        let up = alpha_loss(&EntropyTemp { log_alpha: temp.log_alpha + h, ..temp }, &[0.3, -0.2]).unwrap().0;
        let dn = alpha_loss(&EntropyTemp { log_alpha: temp.log_alpha - h, ..temp }, &[0.3, -0.2]).unwrap().0;
        assert!(((up - dn) / (2.0 * h) - g).abs() < 1e-8 && l.is_finite());
    }

    /// Q(a) = −|a − 0.3| as a two-unit ReLU network over (s, a).
    fn tent_critic() -> TwinQ<f64> {
        let l1 = Linear::from_parts(Tensor::matrix(2, 2, vec![0.0, 0.0, 1.0, -1.0]).unwrap(), Tensor::vector(vec![-0.3, 0.3])).unwrap();
        let l2 = Linear::from_parts(Tensor::matrix(2, 1, vec![-1.0, -1.0]).unwrap(), Tensor::vector(vec![0.0])).unwrap();
        let q = Mlp::from_layers(vec![l1, l2], vec![Activation::Relu, Activation::Identity]).unwrap();
        Twin::new(q.clone(), q)
    }

    #[test]
    fn temperature_tuning_reaches_target_entropy_on_a_bandit() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut p = GaussianPolicy::<f64>::new(1, 1, 16, &mut rng);
        let twin = tent_critic();
        let mut temp = EntropyTemp::new(1.0, -1.0).unwrap();
        let mut popt = Adam::new(3e-3, &p);
        let mut aopt = EntropyTemp::optimizer(3e-3);
        let states = Tensor::zeros(&[64, 1]);
        for _ in 0..6000 {
            let out = policy_loss(&p, &temp, PolicyCritic::Scalar { twin: &twin }, &states, &mut rng).unwrap();
            popt.step(&mut p, &out.grads).unwrap();
            let (_, g) = alpha_loss(&temp, &out.logps).unwrap();
            alpha_step(&mut temp, g, &mut aopt).unwrap();
            assert!(temp.alpha() > 0.0);
        }
        let (_, logp) = sample_actions(&p, &Tensor::zeros(&[20_000, 1]), &mut rng).unwrap();
        let entropy = -logp.iter().sum::<f64>() / logp.len() as f64;
        assert!((entropy - -1.0).abs() <= 0.1, "entropy {entropy}, alpha {}", temp.alpha());
    }
}
