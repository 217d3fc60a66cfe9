use crate::error::{Error, Result};
use crate::nnkit::mlp::Parameters;
use crate::nnkit::tensor::Tensor;
use crate::scalar::{lit, Scalar};

/// Adam optimizer state for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<S> {
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    step: u64,
    m: Vec<Tensor<S>>,
    v: Vec<Tensor<S>>,
}

impl<S: Scalar> Adam<S> {
    /// β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new<P: Parameters<S> + ?Sized>(lr: S, params: &P) -> Self {
        Self::for_shapes(lr, params.tensors().iter().map(|t| t.shape().to_vec()))
    }

    pub fn for_shapes(lr: S, shapes: impl IntoIterator<Item = Vec<usize>>) -> Self {
        let zeros: Vec<Tensor<S>> = shapes.into_iter().map(|s| Tensor::zeros(&s)).collect();
        Self { lr, beta1: lit(0.9), beta2: lit(0.999), eps: lit(1e-8), step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor<S>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor<S>] {
        &self.v
    }

    /// One bias-corrected update. Nothing is modified if any gradient is
    /// non-finite or mis-shaped.
    pub fn step<P: Parameters<S> + ?Sized>(&mut self, params: &mut P, grads: &[Tensor<S>]) -> Result<()> {
        let mut tensors = params.tensors_mut();
        self.step_tensors(&mut tensors, grads)
    }

    pub fn step_tensors(&mut self, params: &mut [&mut Tensor<S>], grads: &[Tensor<S>]) -> Result<()> {
        if params.len() != grads.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "{} parameter tensors, {} gradients, optimizer tracks {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || g.shape() != self.m[i].shape() {
                return Err(Error::shape(format!(
                    "tensor {i}: parameter {:?}, gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::PoisonedUpdate { tensor: i });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = S::one() - self.beta1.powi(t);
        let c2 = S::one() - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((pv, &gv), mv), vv) in
                p.values_mut().iter_mut().zip(g.values()).zip(m.values_mut()).zip(v.values_mut())
            {
                *mv = b1 * *mv + (S::one() - b1) * gv;
                *vv = b2 * *vv + (S::one() - b2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::graph::Graph;

    struct Scalar1(Tensor<f64>);

    impl Parameters<f64> for Scalar1 {
        fn tensors(&self) -> Vec<&Tensor<f64>> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor<f64>> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let mut p = Scalar1(Tensor::vector(vec![1.5, -2.0]));
        let mut opt = Adam::new(0.1, &p);
        for _ in 0..5 {
            opt.step(&mut p, &[Tensor::zeros(&[2])]).unwrap();
        }
        assert_eq!(p.0.values(), &[1.5, -2.0]);
        assert_eq!(opt.steps(), 5);

        opt.step(&mut p, &[Tensor::vector(vec![1.0, 1.0])]).unwrap();
        let m_before = opt.first_moments()[0].values()[0];
        let v_before = opt.second_moments()[0].values()[0];
        let mut q = Scalar1(p.0.clone());
        opt.step(&mut q, &[Tensor::zeros(&[2])]).unwrap();
        assert!((opt.first_moments()[0].values()[0] - 0.9 * m_before).abs() < 1e-15);
        assert!((opt.second_moments()[0].values()[0] - 0.999 * v_before).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for &g in &[0.003, 1.0, -250.0] {
            let mut p = Scalar1(Tensor::vector(vec![0.0]));
            let mut opt = Adam::new(0.01, &p);
            opt.step(&mut p, &[Tensor::vector(vec![g])]).unwrap();
            let moved = -p.0.values()[0];
            assert!((moved - 0.01 * g.signum()).abs() < 1e-6, "g={g} moved {moved}");
        }
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        let mut p = Scalar1(Tensor::scalar(0.0));
        let mut opt = Adam::new(0.1, &p);
        for _ in 0..200 {
            let mut g = Graph::new();
            let w = g.param(p.0.clone());
            let d = g.add_const(w, -3.0);
            let sq = g.mul(d, d);
            let l = g.mean_all(sq);
            let grads = g.backward(l).unwrap();
            opt.step(&mut p, &[grads.wrt(w)]).unwrap();
        }
        assert!((p.0.values()[0] - 3.0).abs() < 0.05, "w = {}", p.0.values()[0]);
    }

    #[test]
    fn nan_gradient_is_refused_without_side_effects() {
        let mut p = Scalar1(Tensor::vector(vec![1.0, 2.0]));
        let mut opt = Adam::new(0.1, &p);
        let err = opt.step(&mut p, &[Tensor::vector(vec![0.5, f64::NAN])]).unwrap_err();
        assert!(matches!(err, Error::PoisonedUpdate { tensor: 0 }));
        assert_eq!(p.0.values(), &[1.0, 2.0]);
        assert_eq!(opt.steps(), 0);
    }
}
