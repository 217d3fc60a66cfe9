//! Bellman targets for every variant and the critic losses built on them.
//!
//! All targets are computed from detached values: target networks and the
//! policy are evaluated outside any gradient tape. Every batched builder
//! consumes the RNG per transition in the same order (policy noise for each
//! sampled next action, then the fractions for those actions), which is what
//! makes the `K = 1` multi-sample target coincide with the single-sample one.

use rand::Rng;

use crate::actor::{sample_with_noise, standard_normal, GaussianPolicy};
use crate::distmath::fill_uniform;
use crate::error::{Error, Result};
use crate::nnkit::{mlp_forward, Graph, Parameters, Tensor};
use crate::scalar::Scalar;
use crate::znet::{sa_constant, twin_min_batch, QNetwork, TwinQ, ZNetwork};

/// Discount, fraction counts and Huber threshold of the distributional critic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticHyper<S> {
    pub gamma: S,
    /// Online fractions `N` per transition.
    pub n_online: usize,
    /// Target fractions `M` per sampled next action.
    pub m_target: usize,
    /// Sampled next actions `K`.
    pub k_actions: usize,
    pub kappa: S,
}

impl<S: Scalar> CriticHyper<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= S::zero() && self.gamma < S::one()) {
            return Err(Error::contract(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if self.n_online == 0 || self.m_target == 0 || self.k_actions == 0 {
            return Err(Error::contract("N, M and K must all be at least 1"));
        }
        if !(self.kappa > S::zero()) {
            return Err(Error::contract("kappa must be > 0"));
        }
        Ok(())
    }

    pub fn atoms_per_transition(&self) -> usize {
        self.m_target * self.k_actions
    }
}

/// Batch of transitions whose next state is bootstrapped from.
#[derive(Clone, Copy, Debug)]
pub struct NextBatch<'a, S> {
    pub rewards: &'a [S],
    pub dones: &'a [bool],
    /// `[B × ds]`.
    pub next_states: &'a Tensor<S>,
}

impl<S: Scalar> NextBatch<'_, S> {
    fn check(&self) -> Result<usize> {
        let b = self.rewards.len();
        if b == 0 || self.dones.len() != b || self.next_states.rows() != b {
            return Err(Error::shape(format!(
                "{} rewards, {} done flags, {} next states",
                b,
                self.dones.len(),
                self.next_states.rows()
            )));
        }
        Ok(b)
    }
}

/// Target atoms for a batch: row `b` holds `K·M` atoms ordered action-major
/// (`k·M + j`), with the fraction each atom was drawn at.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetBatch<S> {
    pub atoms: Tensor<S>,
    pub taus: Tensor<S>,
    pub m: usize,
    pub k: usize,
}

impl<S: Scalar> TargetBatch<S> {
    pub fn transition(&self, b: usize) -> TargetAtoms<S> {
        TargetAtoms { atoms: self.atoms.row(b).to_vec(), taus: self.taus.row(b).to_vec(), m: self.m, k: self.k }
    }
}

/// The `M × K` atom set of one transition.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetAtoms<S> {
    pub atoms: Vec<S>,
    pub taus: Vec<S>,
    pub m: usize,
    pub k: usize,
}

impl<S: Scalar> TargetAtoms<S> {
    /// Atom `j` of sampled action `k`.
    pub fn get(&self, j: usize, k: usize) -> S {
        self.atoms[k * self.m + j]
    }
}

fn repeat_rows<S: Scalar>(t: &Tensor<S>, times: usize) -> Tensor<S> {
    let rows: Vec<&[S]> = (0..t.rows()).flat_map(|r| std::iter::repeat(t.row(r)).take(times)).collect();
    Tensor::from_rows(&rows).expect("repeat rows")
}

/// `r + γ(1 − done)(min_i Q̄_i(s', a') − α log π(a'|s'))`, one `a'` per transition.
pub fn classic_targets<S: Scalar, R: Rng + ?Sized>(
    batch: NextBatch<'_, S>,
    policy: &GaussianPolicy<S>,
    twin: &TwinQ<S>,
    alpha: S,
    gamma: S,
    rng: &mut R,
) -> Result<Vec<S>> {
    let b = batch.check()?;
    let d = policy.action_dim();
    let xi = Tensor::matrix(b, d, standard_normal(b * d, rng))?;
    let (actions, logp) = sample_with_noise(policy, batch.next_states, &xi)?;
    let sa = concat(batch.next_states, &actions)?;
    let q1 = mlp_forward(&twin.target[0], &sa)?;
    let q2 = mlp_forward(&twin.target[1], &sa)?;
    Ok((0..b)
        .map(|i| {
            let boot = if batch.dones[i] { S::zero() } else { gamma };
            let q = q1.values()[i].min(q2.values()[i]);
            batch.rewards[i] + boot * (q - alpha * logp[i])
        })
        .collect())
}

pub fn classic_target<S: Scalar, R: Rng + ?Sized>(
    r: S,
    done: bool,
    next_state: &[S],
    policy: &GaussianPolicy<S>,
    twin: &TwinQ<S>,
    alpha: S,
    gamma: S,
    rng: &mut R,
) -> Result<S> {
    let ns = Tensor::matrix(1, next_state.len(), next_state.to_vec())?;
    let batch = NextBatch { rewards: &[r], dones: &[done], next_states: &ns };
    Ok(classic_targets(batch, policy, twin, alpha, gamma, rng)?[0])
}

fn concat<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let rows: Vec<Vec<S>> = (0..a.rows()).map(|r| a.row(r).iter().chain(b.row(r)).copied().collect()).collect();
    Tensor::from_rows(&rows)
}

/// Assembles `r + γ(1 − done)(z − α log π)` atoms from twin-min target values
/// `z` (`[B·K × M]`) and log-densities (`B·K`).
fn assemble<S: Scalar>(batch: &NextBatch<'_, S>, z: &Tensor<S>, logp: &[S], alpha: S, gamma: S, m: usize, k: usize) -> Tensor<S> {
    let b = batch.rewards.len();
    let mut atoms = Vec::with_capacity(b * k * m);
    for i in 0..b {
        let boot = if batch.dones[i] { S::zero() } else { gamma };
        for kk in 0..k {
            let row = i * k + kk;
            let ent = alpha * logp[row];
            for &zv in z.row(row) {
                atoms.push(batch.rewards[i] + boot * (zv - ent));
            }
        }
    }
    Tensor::matrix(b, k * m, atoms).unwrap()
}

/// Single-sample soft distributional target: one `a' ~ π(·|s')` and `M`
/// fractions per transition.
pub fn single_sample_targets<S: Scalar, R: Rng + ?Sized>(
    batch: NextBatch<'_, S>,
    policy: &GaussianPolicy<S>,
    target: &[ZNetwork<S>; 2],
    alpha: S,
    hyper: &CriticHyper<S>,
    rng: &mut R,
) -> Result<TargetBatch<S>> {
    hyper.validate()?;
    let b = batch.check()?;
    let (d, m) = (policy.action_dim(), hyper.m_target);
    let mut xi = Vec::with_capacity(b * d);
    let mut taus = Vec::with_capacity(b * m);
    for _ in 0..b {
        xi.extend(standard_normal::<S, R>(d, rng));
        taus.extend(fill_uniform::<S, R>(m, rng));
    }
    let xi = Tensor::matrix(b, d, xi)?;
    let (actions, logp) = sample_with_noise(policy, batch.next_states, &xi)?;
    let z = twin_min_batch(target, batch.next_states, &actions, &taus, m)?;
    Ok(TargetBatch { atoms: assemble(&batch, &z, &logp, alpha, hyper.gamma, m, 1), taus: Tensor::matrix(b, m, taus)?, m, k: 1 })
}

/// Multi-sample target: `K` next actions `a'_k ~ π(·|s')`, `M` fresh
/// fractions per action, `K·M` atoms per transition. Each atom carries the
/// entropy correction of its own action.
pub fn mtv_targets_batch<S: Scalar, R: Rng + ?Sized>(
    batch: NextBatch<'_, S>,
    policy: &GaussianPolicy<S>,
    target: &[ZNetwork<S>; 2],
    alpha: S,
    hyper: &CriticHyper<S>,
    rng: &mut R,
) -> Result<TargetBatch<S>> {
    hyper.validate()?;
    let b = batch.check()?;
    let (d, m, k) = (policy.action_dim(), hyper.m_target, hyper.k_actions);
    let mut xi = Vec::with_capacity(b * k * d);
    let mut taus = Vec::with_capacity(b * k * m);
    for _ in 0..b {
        xi.extend(standard_normal::<S, R>(k * d, rng));
        taus.extend(fill_uniform::<S, R>(k * m, rng));
    }
    let states = repeat_rows(batch.next_states, k);
    let xi = Tensor::matrix(b * k, d, xi)?;
    let (actions, logp) = sample_with_noise(policy, &states, &xi)?;
    let z = twin_min_batch(target, &states, &actions, &taus, m)?;
    Ok(TargetBatch {
        atoms: assemble(&batch, &z, &logp, alpha, hyper.gamma, m, k),
        taus: Tensor::matrix(b, k * m, taus)?,
        m,
        k,
    })
}

pub fn single_sample_target<S: Scalar, R: Rng + ?Sized>(
    r: S,
    done: bool,
    next_state: &[S],
    policy: &GaussianPolicy<S>,
    target: &[ZNetwork<S>; 2],
    alpha: S,
    hyper: &CriticHyper<S>,
    rng: &mut R,
) -> Result<TargetAtoms<S>> {
    let ns = Tensor::matrix(1, next_state.len(), next_state.to_vec())?;
    let batch = NextBatch { rewards: &[r], dones: &[done], next_states: &ns };
    Ok(single_sample_targets(batch, policy, target, alpha, hyper, rng)?.transition(0))
}

pub fn mtv_targets<S: Scalar, R: Rng + ?Sized>(
    r: S,
    done: bool,
    next_state: &[S],
    policy: &GaussianPolicy<S>,
    target: &[ZNetwork<S>; 2],
    alpha: S,
    hyper: &CriticHyper<S>,
    rng: &mut R,
) -> Result<TargetAtoms<S>> {
    let ns = Tensor::matrix(1, next_state.len(), next_state.to_vec())?;
    let batch = NextBatch { rewards: &[r], dones: &[done], next_states: &ns };
    Ok(mtv_targets_batch(batch, policy, target, alpha, hyper, rng)?.transition(0))
}

/// Loss value and per-network gradients of a twin critic update.
#[derive(Clone, Debug)]
pub struct CriticLoss<S> {
    /// Sum of both networks' losses.
    pub loss: S,
    pub grads: [Vec<Tensor<S>>; 2],
}

/// Multi-sample quantile regression loss
/// `(1/B) Σ_b (1/MK) Σ_i Σ_{j,k} ρ_{τ_i}(atom_bjk − Z^{τ_i}(s_b, a_b))`
/// for each online network, summed. `N` fresh fractions per transition are
/// shared by the two networks.
pub fn mtv_loss<S: Scalar, R: Rng + ?Sized>(
    online: &[ZNetwork<S>; 2],
    states: &Tensor<S>,
    actions: &Tensor<S>,
    targets: &Tensor<S>,
    hyper: &CriticHyper<S>,
    rng: &mut R,
) -> Result<CriticLoss<S>> {
    hyper.validate()?;
    let b = states.rows();
    if b == 0 || actions.rows() != b || targets.rows() != b {
        return Err(Error::shape("states, actions and targets must share a non-empty batch"));
    }
    if !targets.all_finite() {
        return Err(Error::contract("non-finite target atom"));
    }
    let n = hyper.n_online;
    let taus: Vec<S> = fill_uniform(b * n, rng);
    let tau_t = Tensor::matrix(b, n, taus.clone())?;
    let mut loss = S::zero();
    let mut grads: [Vec<Tensor<S>>; 2] = [Vec::new(), Vec::new()];
    for (i, net) in online.iter().enumerate() {
        if states.cols() != net.state_dim() || actions.cols() != net.action_dim() {
            return Err(Error::shape("state/action width does not match the critic"));
        }
        let mut g = Graph::new();
        let vars = net.bind(&mut g, true);
        let sa = sa_constant(&mut g, states, actions);
        let z = vars.quantiles(&mut g, sa, &taus, n);
        let l = g.quantile_huber(z, targets.clone(), tau_t.clone(), hyper.kappa);
        loss += g.scalar(l);
        grads[i] = vars.grads(&g.backward(l)?);
    }
    Ok(CriticLoss { loss, grads })
}

/// `Σ_i mean_b (Q_i(s_b, a_b) − y_b)²` for the scalar twin critic.
pub fn q_loss<S: Scalar>(online: &[QNetwork<S>; 2], states: &Tensor<S>, actions: &Tensor<S>, targets: &[S]) -> Result<CriticLoss<S>> {
    let b = states.rows();
    if b == 0 || actions.rows() != b || targets.len() != b {
        return Err(Error::shape("states, actions and targets must share a non-empty batch"));
    }
    let y = Tensor::matrix(b, 1, targets.to_vec())?;
    let mut loss = S::zero();
    let mut grads: [Vec<Tensor<S>>; 2] = [Vec::new(), Vec::new()];
    for (i, net) in online.iter().enumerate() {
        let mut g = Graph::new();
        let vars = net.bind(&mut g, true);
        let sa = sa_constant(&mut g, states, actions);
        let q = vars.forward(&mut g, sa);
        let yv = g.constant(y.clone());
        let d = g.sub(q, yv);
        let sq = g.mul(d, d);
        let l = g.mean_all(sq);
        loss += g.scalar(l);
        grads[i] = vars.grads(&g.backward(l)?);
        debug_assert_eq!(grads[i].len(), net.tensors().len());
    }
    Ok(CriticLoss { loss, grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distmath::{quantile_huber, EmpiricalDistribution};
    use crate::nnkit::{finite_diff_check, Activation, Adam, Mlp};
    use crate::znet::{Twin, TwinZ, ZNetConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SMALL: ZNetConfig = ZNetConfig { hidden: 8, n_cos: 8 };

    fn hyper(gamma: f64, m: usize, k: usize) -> CriticHyper<f64> {
        CriticHyper { gamma, n_online: 4, m_target: m, k_actions: k, kappa: 1.0 }
    }

    fn constant_twin(c: f64) -> TwinZ<f64> {
        let z = ZNetwork::constant(2, 1, SMALL, c);
        Twin::new(z.clone(), z)
    }

    fn constant_q(c: f64) -> TwinQ<f64> {
        let mut q = Mlp::zeros(&[3, 4, 1], Activation::Relu, Activation::Identity);
        q.layers_mut()[1].bias.values_mut()[0] = c;
        Twin::new(q.clone(), q)
    }

    #[test]
    fn classic_target_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pi = GaussianPolicy::<f64>::new(2, 1, 8, &mut rng);
        let twin = constant_q(4.0);
        assert_eq!(classic_target(1.0, true, &[0.1, 0.2], &pi, &twin, 0.2, 0.9, &mut rng).unwrap(), 1.0);
        assert_eq!(classic_target(1.5, false, &[0.1, 0.2], &pi, &twin, 0.2, 0.0, &mut rng).unwrap(), 1.5);
        let y = classic_target(1.0, false, &[0.1, 0.2], &pi, &twin, 0.0, 0.9, &mut rng).unwrap();
        assert!((y - (1.0 + 0.9 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn done_and_constant_critic_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pi = GaussianPolicy::<f64>::new(2, 1, 8, &mut rng);
        let twin = constant_twin(3.0);
        let h = hyper(0.5, 2, 3);
        let t = mtv_targets(1.0, true, &[0.3, 0.3], &pi, &twin.target, 0.7, &h, &mut rng).unwrap();
        assert_eq!(t.atoms, vec![1.0; 6]);
        let t = mtv_targets(1.0, false, &[0.3, 0.3], &pi, &twin.target, 0.0, &h, &mut rng).unwrap();
        assert_eq!(t.atoms, vec![2.5; 6]);
        assert_eq!((t.m, t.k), (2, 3));
        let s = single_sample_target(1.0, true, &[0.3, 0.3], &pi, &twin.target, 0.7, &hyper(0.9, 5, 1), &mut rng).unwrap();
        assert_eq!(s.atoms, vec![1.0; 5]);
        let s = single_sample_target(1.0, false, &[0.3, 0.3], &pi, &twin.target, 0.0, &hyper(0.9, 5, 1), &mut rng).unwrap();
        assert!(s.atoms.iter().all(|&a| (a - (1.0 + 0.9 * 3.0)).abs() < 1e-12));
    }

    #[test]
    fn single_action_multi_sample_equals_single_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pi = GaussianPolicy::<f64>::new(2, 1, 8, &mut rng);
        let twin = TwinZ::random(2, 1, SMALL, &mut rng);
        let h = hyper(0.99, 7, 1);
        let ns = Tensor::matrix(3, 2, vec![0.1, 0.5, -0.3, 0.9, 0.0, 0.0]).unwrap();
        let batch = NextBatch { rewards: &[0.5, -1.0, 0.2], dones: &[false, true, false], next_states: &ns };
        let a = single_sample_targets(batch, &pi, &twin.target, 0.3, &h, &mut ChaCha8Rng::seed_from_u64(44)).unwrap();
        let b = mtv_targets_batch(batch, &pi, &twin.target, 0.3, &h, &mut ChaCha8Rng::seed_from_u64(44)).unwrap();
        assert_eq!(a, b);
    }

    /// Z(s, a) = min(10, relu(1000·a)) for every τ.
    fn ramp_twin() -> TwinZ<f64> {
        let cfg = ZNetConfig { hidden: 2, n_cos: 2 };
        let mut z = ZNetwork::<f64>::constant(1, 1, cfg, 0.0);
        // trunk layer 0 over (s, a): units relu(1000a), relu(1000a − 10)
        let l0 = &mut z.trunk_mut().layers_mut()[0];
        l0.weight.values_mut().copy_from_slice(&[0.0, 0.0, 1000.0, 1000.0]);
        l0.bias.values_mut().copy_from_slice(&[0.0, -10.0]);
        // trunk layer 1: unit 0 = relu(u0 − u1)
        z.trunk_mut().layers_mut()[1].weight.values_mut().copy_from_slice(&[1.0, 0.0, -1.0, 0.0]);
        z.embed_mut().bias.values_mut()[0] = 1.0;
        z.head_mut().layers_mut()[0].weight.values_mut()[0] = 1.0;
        z.head_mut().layers_mut()[1].weight.values_mut()[0] = 1.0;
        Twin::new(z.clone(), z)
    }

    #[test]
    fn multi_sample_mean_matches_analytic_mixture() {
        let (mu, log_std) = (0.2f64, 0.0f64);
        let pi = GaussianPolicy::fixed(1, &[mu], &[log_std]);
        let twin = ramp_twin();
        let (r, gamma) = (0.5, 0.9);
        let k = 20_000;
        let h = CriticHyper { gamma, n_online: 1, m_target: 1, k_actions: k, kappa: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = mtv_targets(r, false, &[0.0], &pi, &twin.target, 0.0, &h, &mut rng).unwrap();
        let mc = t.atoms.iter().sum::<f64>() / k as f64;

        // E[min(10, relu(1000 tanh(u)))], u ~ N(μ, 1), by Simpson quadrature
        let n = 200_000;
        let (lo, hi) = (mu - 10.0, mu + 10.0);
        let step = (hi - lo) / n as f64;
        let f = |u: f64| {
            let pdf = (-0.5 * (u - mu).powi(2)).exp() / (2.0 * std::f64::consts::PI).sqrt();
            pdf * (1000.0 * u.tanh()).clamp(0.0, 10.0)
        };
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * step);
        }
        let expect = r + gamma * acc * step / 3.0;
        // Bernoulli-like spread of 5 → standard error ≈ 0.9·5/√K ≈ 0.032
        assert!((mc - expect).abs() < 0.13, "mc {mc} expect {expect}");
    }

    #[test]
    fn loss_vanishes_when_prediction_equals_every_atom() {
        let twin = constant_twin(2.0);
        let s = Tensor::matrix(2, 2, vec![0.0, 1.0, 0.5, 0.5]).unwrap();
        let a = Tensor::matrix(2, 1, vec![0.1, -0.1]).unwrap();
        let targets = Tensor::full(&[2, 6], 2.0);
        let out = mtv_loss(&twin.online, &s, &a, &targets, &hyper(0.9, 2, 3), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn median_minimizes_symmetric_atoms() {
        let atoms = [-1.0, 1.0];
        let loss = |z: f64| 0.5 * atoms.iter().map(|&t| quantile_huber(t - z, 0.5, 1.0)).sum::<f64>();
        let grid: Vec<f64> = (-200..=200).map(|i| i as f64 * 0.01).collect();
        let best = grid.iter().copied().min_by(|a, b| loss(*a).partial_cmp(&loss(*b)).unwrap()).unwrap();
        assert!(best.abs() <= 0.01, "argmin {best}");
    }

    #[test]
    fn critic_loss_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let twin = TwinZ::<f64>::random(2, 1, SMALL, &mut rng);
        let s = Tensor::matrix(3, 2, vec![0.3, -0.2, 1.0, 0.4, -0.5, 0.0]).unwrap();
        let a = Tensor::matrix(3, 1, vec![0.2, -0.6, 0.9]).unwrap();
        let targets = Tensor::matrix(3, 4, (0..12).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let h = CriticHyper { gamma: 0.9, n_online: 5, m_target: 2, k_actions: 2, kappa: 1.0 };
        let eval = |net: &ZNetwork<f64>, which: usize| {
            let mut pair = twin.online.clone();
            pair[which] = net.clone();
            mtv_loss(&pair, &s, &a, &targets, &h, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
        };
        let base = eval(&twin.online[0], 0);
        for which in 0..2 {
            let params: Vec<Tensor<f64>> = twin.online[which].tensors().into_iter().cloned().collect();
            let err = finite_diff_check(
                |x| {
                    let mut net = twin.online[which].clone();
                    for (t, v) in net.tensors_mut().into_iter().zip(x) {
                        *t = v.clone();
                    }
                    eval(&net, which).loss
                },
                &params,
                &base.grads[which],
                1e-6,
            );
            assert!(err < 1e-5, "net {which} err {err}");
        }
    }

    #[test]
    fn free_quantile_table_converges_to_atom_quantiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let atoms: Vec<f64> = (0..40).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let dist = EmpiricalDistribution::uniform(atoms.clone()).unwrap();
        let taus = vec![0.1, 0.25, 0.5, 0.75, 0.9];
        let mut table = Tensor::matrix(1, taus.len(), vec![0.0; taus.len()]).unwrap();
        let mut opt = Adam::for_shapes(0.01, [vec![1, taus.len()]]);
        let targets = Tensor::matrix(1, atoms.len(), atoms.clone()).unwrap();
        let tau_t = Tensor::matrix(1, taus.len(), taus.clone()).unwrap();
        for _ in 0..6000 {
            let mut g = Graph::new();
            let p = g.param(table.clone());
            // κ small so the loss is close to the pinball loss
            let l = g.quantile_huber(p, targets.clone(), tau_t.clone(), 1e-3);
            let grads = g.backward(l).unwrap();
            opt.step_tensors(&mut [&mut table], &[grads.wrt(p)]).unwrap();
        }
        let mut sorted = atoms.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let max_gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        for (i, &tau) in taus.iter().enumerate() {
            let q = dist.quantile(tau);
            assert!((table.values()[i] - q).abs() <= max_gap + 0.02, "tau {tau}: {} vs {q}", table.values()[i]);
        }
    }

    #[test]
    fn q_loss_and_validation() {
        let twin = constant_q(1.0);
        let s = Tensor::matrix(2, 2, vec![0.0; 4]).unwrap();
        let a = Tensor::matrix(2, 1, vec![0.0; 2]).unwrap();
        let out = q_loss(&twin.online, &s, &a, &[3.0, 1.0]).unwrap();
        assert!((out.loss - 2.0 * 2.0).abs() < 1e-12);
        assert!(hyper(1.0, 1, 1).validate().is_err());
        assert!(hyper(0.9, 0, 1).validate().is_err());
    }
}
