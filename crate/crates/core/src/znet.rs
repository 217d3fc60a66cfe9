//! Quantile critic `Z_θ^τ(s, a)`.
//!
//! The state-action pair goes through a ReLU trunk; each fraction τ is
//! embedded as `relu(Σ_i cos(π i τ) w_ij + b_j)` and multiplied into the trunk
//! feature; a small head maps the fused feature to one quantile value.
//! Quantile crossing is not prevented.

use rand::Rng;

use crate::distmath::{fill_uniform, QuantileFractions};
use crate::error::{Error, Result};
use crate::nnkit::{Activation, Gradients, Graph, Linear, LinearVars, Mlp, MlpVars, Parameters, Tensor, Var};
use crate::scalar::{lit, Scalar};

/// Architecture of a quantile critic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ZNetConfig {
    pub hidden: usize,
    pub n_cos: usize,
}

impl Default for ZNetConfig {
    fn default() -> Self {
        Self { hidden: 64, n_cos: 64 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZNetwork<S> {
    trunk: Mlp<S>,
    embed: Linear<S>,
    head: Mlp<S>,
    state_dim: usize,
    action_dim: usize,
}

impl<S: Scalar> ZNetwork<S> {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, cfg: ZNetConfig, rng: &mut R) -> Self {
        let h = cfg.hidden;
        Self {
            trunk: Mlp::new(&[state_dim + action_dim, h, h], Activation::Relu, Activation::Relu, rng),
            embed: Linear::new(cfg.n_cos, h, rng),
            head: Mlp::new(&[h, h, 1], Activation::Relu, Activation::Identity, rng),
            state_dim,
            action_dim,
        }
    }

    /// All weights zero; the output is the final head bias `c` for every input.
    pub fn constant(state_dim: usize, action_dim: usize, cfg: ZNetConfig, c: S) -> Self {
        let h = cfg.hidden;
        let mut head = Mlp::zeros(&[h, h, 1], Activation::Relu, Activation::Identity);
        head.layers_mut()[1].bias.values_mut()[0] = c;
        Self {
            trunk: Mlp::zeros(&[state_dim + action_dim, h, h], Activation::Relu, Activation::Relu),
            embed: Linear::zeros(cfg.n_cos, h),
            head,
            state_dim,
            action_dim,
        }
    }

    /// Rebuilds a network from its layers in [`ZNetwork::layers`] order.
    pub fn from_layers(state_dim: usize, action_dim: usize, layers: Vec<Linear<S>>) -> Result<Self> {
        if layers.len() != 5 {
            return Err(Error::shape(format!("quantile critic has 5 layers, got {}", layers.len())));
        }
        let mut it = layers.into_iter();
        let trunk = Mlp::from_layers(vec![it.next().unwrap(), it.next().unwrap()], vec![Activation::Relu; 2])?;
        let embed = it.next().unwrap();
        let head =
            Mlp::from_layers(vec![it.next().unwrap(), it.next().unwrap()], vec![Activation::Relu, Activation::Identity])?;
        let net = Self { trunk, embed, head, state_dim, action_dim };
        let h = net.hidden();
        if net.trunk.input_dim() != state_dim + action_dim || net.embed.outputs() != h || net.head.input_dim() != h
            || net.head.output_dim() != 1
        {
            return Err(Error::shape("quantile critic layers do not fit together"));
        }
        Ok(net)
    }

    pub fn layers(&self) -> Vec<&Linear<S>> {
        let mut v: Vec<&Linear<S>> = self.trunk.layers().iter().collect();
        v.push(&self.embed);
        v.extend(self.head.layers());
        v
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn hidden(&self) -> usize {
        self.trunk.output_dim()
    }

    pub fn n_cos(&self) -> usize {
        self.embed.inputs()
    }

    pub fn config(&self) -> ZNetConfig {
        ZNetConfig { hidden: self.hidden(), n_cos: self.n_cos() }
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp<S> {
        &mut self.trunk
    }

    pub fn embed_mut(&mut self) -> &mut Linear<S> {
        &mut self.embed
    }

    pub fn head_mut(&mut self) -> &mut Mlp<S> {
        &mut self.head
    }

    pub fn bind(&self, g: &mut Graph<S>, trainable: bool) -> ZVars {
        ZVars {
            trunk: self.trunk.bind(g, trainable),
            embed: self.embed.bind(g, trainable),
            head: self.head.bind(g, trainable),
            n_cos: self.n_cos(),
        }
    }

    fn check_dims(&self, states: &Tensor<S>, actions: &Tensor<S>) -> Result<()> {
        if states.cols() != self.state_dim || actions.cols() != self.action_dim || states.rows() != actions.rows() {
            return Err(Error::shape(format!(
                "critic expects state width {} and action width {}; got {:?} and {:?}",
                self.state_dim,
                self.action_dim,
                states.shape(),
                actions.shape()
            )));
        }
        Ok(())
    }
}

impl<S: Scalar> Parameters<S> for ZNetwork<S> {
    fn tensors(&self) -> Vec<&Tensor<S>> {
        let mut v = self.trunk.tensors();
        v.push(&self.embed.weight);
        v.push(&self.embed.bias);
        v.extend(self.head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut v = self.trunk.tensors_mut();
        v.push(&mut self.embed.weight);
        v.push(&mut self.embed.bias);
        v.extend(self.head.tensors_mut());
        v
    }
}

/// A [`ZNetwork`] bound onto a graph.
#[derive(Clone, Debug)]
pub struct ZVars {
    trunk: MlpVars,
    embed: LinearVars,
    head: MlpVars,
    n_cos: usize,
}

impl ZVars {
    /// Quantile values for `R` state-action rows (`sa` is `[R × (ds+da)]`)
    /// at `per_row` fractions each; `taus` is row-major `R × per_row`.
    /// Returns an `[R × per_row]` node.
    pub fn quantiles<S: Scalar>(&self, g: &mut Graph<S>, sa: Var, taus: &[S], per_row: usize) -> Var {
        let rows = g.value(sa).rows();
        assert_eq!(taus.len(), rows * per_row, "one fraction list per row");
        let feat = self.trunk.forward(g, sa);
        let feat = g.repeat_rows(feat, per_row);
        let cos = g.constant(cos_features(taus, self.n_cos));
        let emb = self.embed.forward(g, cos);
        let emb = g.relu(emb);
        let fused = g.mul(feat, emb);
        let out = self.head.forward(g, fused);
        g.reshape(out, &[rows, per_row])
    }

    pub fn grads<S: Scalar>(&self, grads: &Gradients<S>) -> Vec<Tensor<S>> {
        let mut v = self.trunk.grads(grads);
        v.push(grads.wrt(self.embed.weight));
        v.push(grads.wrt(self.embed.bias));
        v.extend(self.head.grads(grads));
        v
    }
}

/// `[len × n_cos]` matrix of `cos(π i τ)`, `i = 0..n_cos`.
///
/// Uses the Chebyshev recurrence `c_i = 2c_1c_{i−1} − c_{i−2}`, one libm call
/// per fraction; the rounding drift stays below `i²·ε`.
pub fn cos_features<S: Scalar>(taus: &[S], n_cos: usize) -> Tensor<S> {
    let pi = lit::<S>(std::f64::consts::PI);
    let two = lit::<S>(2.0);
    let mut vals = Vec::with_capacity(taus.len() * n_cos);
    for &t in taus {
        let c1 = (pi * t).cos();
        let (mut prev, mut cur) = (c1, S::one());
        for _ in 0..n_cos {
            vals.push(cur);
            (prev, cur) = (cur, two * c1 * cur - prev);
        }
    }
    Tensor::matrix(taus.len(), n_cos, vals).unwrap()
}

/// Concatenates `[R×ds]` states and `[R×da]` actions as a graph constant.
pub(crate) fn sa_constant<S: Scalar>(g: &mut Graph<S>, states: &Tensor<S>, actions: &Tensor<S>) -> Var {
    let s = g.constant(states.clone());
    let a = g.constant(actions.clone());
    g.concat_cols(s, a)
}

/// Quantile values for a batch: `[R × per_row]`.
pub fn z_values_batch<S: Scalar>(
    params: &ZNetwork<S>,
    states: &Tensor<S>,
    actions: &Tensor<S>,
    taus: &[S],
    per_row: usize,
) -> Result<Tensor<S>> {
    params.check_dims(states, actions)?;
    if taus.len() != states.rows() * per_row {
        return Err(Error::shape(format!("{} fractions for {} rows × {per_row}", taus.len(), states.rows())));
    }
    let mut g = Graph::new();
    let vars = params.bind(&mut g, false);
    let sa = sa_constant(&mut g, states, actions);
    let z = vars.quantiles(&mut g, sa, taus, per_row);
    Ok(g.value(z).clone())
}

/// One quantile value of `Z(s, a)` per fraction.
pub fn z_value<S: Scalar>(params: &ZNetwork<S>, s: &[S], a: &[S], taus: &QuantileFractions<S>) -> Result<Vec<S>> {
    let st = Tensor::matrix(1, s.len(), s.to_vec())?;
    let at = Tensor::matrix(1, a.len(), a.to_vec())?;
    Ok(z_values_batch(params, &st, &at, taus.as_slice(), taus.len())?.into_values())
}

/// Online pair and EMA target pair of a twin critic.
#[derive(Clone, Debug, PartialEq)]
pub struct Twin<P> {
    pub online: [P; 2],
    pub target: [P; 2],
}

pub type TwinZ<S> = Twin<ZNetwork<S>>;

/// Scalar Q critic used by the SAC baseline: an MLP over `(s, a)`.
pub type QNetwork<S> = Mlp<S>;
pub type TwinQ<S> = Twin<QNetwork<S>>;

impl<P: Clone> Twin<P> {
    /// Targets start as copies of the online networks.
    pub fn new(z1: P, z2: P) -> Self {
        Self { target: [z1.clone(), z2.clone()], online: [z1, z2] }
    }
}

impl<S: Scalar> TwinZ<S> {
    pub fn random<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, cfg: ZNetConfig, rng: &mut R) -> Self {
        let z1 = ZNetwork::new(state_dim, action_dim, cfg, rng);
        let z2 = ZNetwork::new(state_dim, action_dim, cfg, rng);
        Self::new(z1, z2)
    }
}

/// `new_q_network` builds a `(s, a) → 1` MLP with ReLU hidden layers.
pub fn new_q_network<S: Scalar, R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: usize, rng: &mut R) -> QNetwork<S> {
    Mlp::new(&[state_dim + action_dim, hidden, hidden, 1], Activation::Relu, Activation::Identity, rng)
}

/// Elementwise minimum over the two online critics at shared fractions.
pub fn twin_min<S: Scalar>(twin: &TwinZ<S>, s: &[S], a: &[S], taus: &QuantileFractions<S>) -> Result<Vec<S>> {
    let z1 = z_value(&twin.online[0], s, a, taus)?;
    let z2 = z_value(&twin.online[1], s, a, taus)?;
    Ok(z1.into_iter().zip(z2).map(|(x, y)| x.min(y)).collect())
}

/// Twin-min quantile values of a pair of networks over a batch, `[R × per_row]`.
pub fn twin_min_batch<S: Scalar>(
    pair: &[ZNetwork<S>; 2],
    states: &Tensor<S>,
    actions: &Tensor<S>,
    taus: &[S],
    per_row: usize,
) -> Result<Tensor<S>> {
    let z1 = z_values_batch(&pair[0], states, actions, taus, per_row)?;
    let z2 = z_values_batch(&pair[1], states, actions, taus, per_row)?;
    Ok(z1.zip_map(&z2, |x, y| x.min(y)))
}

/// Mean of `Z(s, a)` over `n_taus` fresh fractions: the Q estimate.
pub fn mean_q<S: Scalar, R: Rng + ?Sized>(
    params: &ZNetwork<S>,
    s: &[S],
    a: &[S],
    n_taus: usize,
    rng: &mut R,
) -> Result<S> {
    if n_taus == 0 {
        return Err(Error::contract("mean_q needs at least one fraction"));
    }
    let taus = QuantileFractions::new(fill_uniform(n_taus, rng))?;
    let z = z_value(params, s, a, &taus)?;
    Ok(z.iter().copied().sum::<S>() / lit(n_taus as f64))
}

/// `target ← (1 − rate)·target + rate·online` for both networks.
pub fn ema_update<S: Scalar, P: Parameters<S>>(twin: &mut Twin<P>, rate: S) -> Result<()> {
    if !(rate > S::zero() && rate < S::one()) {
        return Err(Error::contract(format!("EMA rate must lie in (0, 1), got {rate}")));
    }
    let Twin { online, target } = twin;
    for (on, tg) in online.iter().zip(target.iter_mut()) {
        for (o, t) in on.tensors().into_iter().zip(tg.tensors_mut()) {
            for (tv, &ov) in t.values_mut().iter_mut().zip(o.values()) {
                *tv = (S::one() - rate) * *tv + rate * ov;
            }
        }
    }
    Ok(())
}
