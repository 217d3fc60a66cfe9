use rand::Rng;

use crate::error::{Error, Result};
use crate::nnkit::graph::{Gradients, Graph, Var};
use crate::nnkit::tensor::{matmul, Tensor};
use crate::scalar::{lit, Scalar};

/// Anything owning a fixed, ordered list of parameter tensors.
///
/// Optimizers, EMA updates, gradient checks and checkpoints all work on this
/// flat view; the order must be stable for the lifetime of the value.
pub trait Parameters<S: Scalar> {
    fn tensors(&self) -> Vec<&Tensor<S>>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// Affine layer `y = x W + b` with `W` stored `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> Linear<S> {
    /// Uniform(−1/√in, 1/√in) init for weights and biases.
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = |n: usize| -> Vec<S> { (0..n).map(|_| lit(rng.gen_range(-bound..bound))).collect() };
        Self {
            weight: Tensor::matrix(inputs, outputs, draw(inputs * outputs)).unwrap(),
            bias: Tensor::vector(draw(outputs)),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weight: Tensor::zeros(&[inputs, outputs]), bias: Tensor::zeros(&[outputs]) }
    }

    pub fn from_parts(weight: Tensor<S>, bias: Tensor<S>) -> Result<Self> {
        if weight.shape().len() != 2 || bias.len() != weight.shape()[1] {
            return Err(Error::shape(format!(
                "weight {:?} incompatible with bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        let bias = bias.reshaped(&[weight.shape()[1]])?;
        Ok(Self { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn bind(&self, g: &mut Graph<S>, trainable: bool) -> LinearVars {
        let leaf = |g: &mut Graph<S>, t: &Tensor<S>| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) };
        LinearVars { weight: leaf(g, &self.weight), bias: leaf(g, &self.bias) }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl LinearVars {
    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, x: Var) -> Var {
        let y = g.matmul(x, self.weight);
        g.add_bias(y, self.bias)
    }
}

/// Feed-forward stack of [`Linear`] layers, each followed by its activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<S> {
    layers: Vec<Linear<S>>,
    activations: Vec<Activation>,
}

impl<S: Scalar> Mlp<S> {
    /// `dims = [in, h1, ..., out]`; `hidden` after every layer but the last,
    /// `output` after the last.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let layers = dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect();
        Self { layers, activations: Self::acts(dims.len() - 1, hidden, output) }
    }

    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let layers = dims.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect();
        Self { layers, activations: Self::acts(dims.len() - 1, hidden, output) }
    }

    pub fn from_layers(layers: Vec<Linear<S>>, activations: Vec<Activation>) -> Result<Self> {
        if layers.is_empty() || layers.len() != activations.len() {
            return Err(Error::shape(format!(
                "{} layers with {} activations",
                layers.len(),
                activations.len()
            )));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    w[0].outputs(),
                    i + 1,
                    w[1].inputs()
                )));
            }
        }
        Ok(Self { layers, activations })
    }

    fn acts(n: usize, hidden: Activation, output: Activation) -> Vec<Activation> {
        (0..n).map(|i| if i + 1 == n { output } else { hidden }).collect()
    }

    pub fn layers(&self) -> &[Linear<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear<S>] {
        &mut self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn bind(&self, g: &mut Graph<S>, trainable: bool) -> MlpVars {
        MlpVars {
            layers: self.layers.iter().map(|l| l.bind(g, trainable)).collect(),
            activations: self.activations.clone(),
        }
    }
}

impl<S: Scalar> Parameters<S> for Mlp<S> {
    fn tensors(&self) -> Vec<&Tensor<S>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }
}

/// An [`Mlp`] bound onto a graph.
#[derive(Clone, Debug)]
pub struct MlpVars {
    pub layers: Vec<LinearVars>,
    pub activations: Vec<Activation>,
}

impl MlpVars {
    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, x: Var) -> Var {
        let mut h = x;
        for (l, act) in self.layers.iter().zip(&self.activations) {
            h = l.forward(g, h);
            if *act == Activation::Relu {
                h = g.relu(h);
            }
        }
        h
    }

    /// Gradients in [`Parameters::tensors`] order.
    pub fn grads<S: Scalar>(&self, grads: &Gradients<S>) -> Vec<Tensor<S>> {
        self.layers.iter().flat_map(|l| [grads.wrt(l.weight), grads.wrt(l.bias)]).collect()
    }
}

/// Eager forward pass over a `[batch, in]` (or 1-D `[in]`) input.
pub fn mlp_forward<S: Scalar>(params: &Mlp<S>, input: &Tensor<S>) -> Result<Tensor<S>> {
    let k = params.input_dim();
    if input.cols() != k {
        return Err(Error::shape(format!("input width {} but network expects {k}", input.cols())));
    }
    let n = input.rows();
    let mut h = input.values().to_vec();
    for (layer, act) in params.layers.iter().zip(&params.activations) {
        let (i, o) = (layer.inputs(), layer.outputs());
        let mut out = matmul(&h, layer.weight.values(), n, i, o);
        for row in out.chunks_mut(o) {
            for (v, &b) in row.iter_mut().zip(layer.bias.values()) {
                *v += b;
                if *act == Activation::Relu {
                    *v = v.max(S::zero());
                }
            }
        }
        h = out;
    }
    let shape = if input.shape().len() == 1 { vec![params.output_dim()] } else { vec![n, params.output_dim()] };
    Tensor::new(shape, h)
}
