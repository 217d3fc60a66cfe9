//! Scalar and distributional math: Huber and quantile Huber losses,
//! weighted empirical distributions, exact 1-Wasserstein distance and the
//! quantile-bin projection used to keep atom counts bounded.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nnkit::graph::{huber_value, quantile_huber_value};
use crate::scalar::{lit, Scalar};

/// Slack on the weight total, in ulps of one per atom.
const WEIGHT_ULPS: f64 = 64.0;

/// Huber threshold `κ`; defaults to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HuberConfig<S> {
    kappa: S,
}

impl<S: Scalar> HuberConfig<S> {
    pub fn new(kappa: S) -> Result<Self> {
        if !(kappa > S::zero()) {
            return Err(Error::contract(format!("kappa must be > 0, got {kappa}")));
        }
        Ok(Self { kappa })
    }

    pub fn kappa(&self) -> S {
        self.kappa
    }
}

impl<S: Scalar> Default for HuberConfig<S> {
    fn default() -> Self {
        Self { kappa: S::one() }
    }
}

/// `½u²` inside `[−κ, κ]`, `κ(|u| − ½κ)` outside.
pub fn huber<S: Scalar>(u: S, kappa: S) -> S {
    huber_value(u, kappa)
}

/// `|τ − 1{u<0}| · huber(u, κ)`.
pub fn quantile_huber<S: Scalar>(u: S, tau: S, kappa: S) -> S {
    quantile_huber_value(u, tau, kappa)
}

/// Quantile fractions, each in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileFractions<S> {
    taus: Vec<S>,
}

impl<S: Scalar> QuantileFractions<S> {
    pub fn new(taus: Vec<S>) -> Result<Self> {
        if let Some(bad) = taus.iter().find(|t| !(**t >= S::zero() && **t <= S::one())) {
            return Err(Error::contract(format!("quantile fraction {bad} outside [0, 1]")));
        }
        Ok(Self { taus })
    }

    pub fn as_slice(&self) -> &[S] {
        &self.taus
    }

    pub fn into_vec(self) -> Vec<S> {
        self.taus
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }
}

/// `n` i.i.d. Uniform[0, 1) fractions drawn from `rng`.
pub fn sample_fractions<S: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> QuantileFractions<S> {
    assert!(n >= 1, "need at least one fraction");
    QuantileFractions { taus: fill_uniform(n, rng) }
}

pub(crate) fn fill_uniform<S: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<S> {
    (0..n).map(|_| lit(rng.gen::<f64>())).collect()
}

/// Population mean and standard deviation (divide by N).
pub fn mean_std<S: Scalar>(samples: &[S]) -> Result<(S, S)> {
    if samples.is_empty() {
        return Err(Error::contract("mean_std of an empty sample"));
    }
    if samples.iter().all(|&x| x == samples[0]) {
        return Ok((samples[0], S::zero()));
    }
    let n = lit::<S>(samples.len() as f64);
    let mean = samples.iter().copied().sum::<S>() / n;
    let var = samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>() / n;
    Ok((mean, var.sqrt()))
}

/// Discrete measure `Σ w_i δ_{x_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution<S> {
    atoms: Vec<S>,
    weights: Vec<S>,
}

impl<S: Scalar> EmpiricalDistribution<S> {
    pub fn new(atoms: Vec<S>, weights: Vec<S>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::contract(format!(
                "{} atoms with {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::contract("non-finite atom"));
        }
        if weights.iter().any(|w| !(*w >= S::zero())) {
            return Err(Error::contract("negative or NaN weight"));
        }
        let total: S = weights.iter().copied().sum();
        let tol = S::epsilon() * lit(WEIGHT_ULPS) * lit::<S>(weights.len() as f64).max(S::one());
        if (total - S::one()).abs() > tol {
            return Err(Error::contract(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { atoms, weights })
    }

    /// Equal weight `1/n` on each atom.
    pub fn uniform(atoms: Vec<S>) -> Result<Self> {
        let n = atoms.len();
        if n == 0 {
            return Err(Error::contract("empty distribution"));
        }
        let w = S::one() / lit(n as f64);
        Self::new(atoms, vec![w; n])
    }

    pub fn dirac(x: S) -> Self {
        Self { atoms: vec![x], weights: vec![S::one()] }
    }

    pub fn atoms(&self) -> &[S] {
        &self.atoms
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> S {
        self.atoms.iter().zip(&self.weights).map(|(&a, &w)| a * w).sum()
    }

    pub fn min(&self) -> S {
        self.atoms.iter().copied().fold(S::infinity(), S::min)
    }

    pub fn max(&self) -> S {
        self.atoms.iter().copied().fold(S::neg_infinity(), S::max)
    }

    /// Pushforward under `x ↦ scale·x + shift`.
    pub fn affine(&self, scale: S, shift: S) -> Self {
        Self { atoms: self.atoms.iter().map(|&a| scale * a + shift).collect(), weights: self.weights.clone() }
    }

    /// `(atom, weight)` pairs sorted by atom.
    pub fn sorted_pairs(&self) -> Vec<(S, S)> {
        let mut p: Vec<(S, S)> = self.atoms.iter().copied().zip(self.weights.iter().copied()).collect();
        p.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite atoms"));
        p
    }

    /// Generalized inverse CDF `inf{x : F(x) ≥ τ}`.
    pub fn quantile(&self, tau: S) -> S {
        let pairs = self.sorted_pairs();
        let mut cum = S::zero();
        for &(x, w) in &pairs {
            cum += w;
            if cum >= tau {
                return x;
            }
        }
        pairs[pairs.len() - 1].0
    }

    /// Mixture `Σ_k c_k · D_k`; coefficients must sum to 1.
    pub fn mixture(parts: &[(S, &EmpiricalDistribution<S>)]) -> Result<Self> {
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (c, d) in parts {
            if *c == S::zero() {
                continue;
            }
            atoms.extend_from_slice(&d.atoms);
            weights.extend(d.weights.iter().map(|&w| w * *c));
        }
        Self::new(atoms, weights)
    }

    /// Projection onto `n` equally weighted atoms, atom `i` being the mean
    /// of the inverse CDF over `[i/n, (i+1)/n]`.
    ///
    /// The map preserves the mean exactly and never increases the
    /// 1-Wasserstein distance between two measures.
    pub fn project_quantile_bins(&self, n: usize) -> Self {
        assert!(n >= 1, "projection needs at least one atom");
        let pairs = self.sorted_pairs();
        let total: S = self.weights.iter().copied().sum();
        let bin = total / lit(n as f64);
        let mut out = Vec::with_capacity(n);
        let mut it = pairs.iter().copied();
        let mut cur = it.next();
        let mut left = cur.map_or(S::zero(), |p| p.1);
        for _ in 0..n {
            let mut need = bin;
            let mut acc = S::zero();
            while need > S::zero() {
                let Some((x, _)) = cur else { break };
                let take = left.min(need);
                acc += take * x;
                need -= take;
                left -= take;
                if left <= S::zero() {
                    cur = it.next();
                    left = cur.map_or(S::zero(), |p| p.1);
                }
            }
            // Rounding can starve the final bins of a hair of mass.
            let got = bin - need;
            let value = if got > S::zero() {
                (acc + need * last_atom(&pairs)) / bin
            } else {
                last_atom(&pairs)
            };
            out.push(value);
        }
        let w = S::one() / lit(n as f64);
        Self { atoms: out, weights: vec![w; n] }
    }
}

fn last_atom<S: Scalar>(pairs: &[(S, S)]) -> S {
    pairs[pairs.len() - 1].0
}

/// Exact 1-Wasserstein distance `∫ |F_a(x) − F_b(x)| dx` between two
/// discrete measures, by merging their sorted atoms.
pub fn wasserstein1<S: Scalar>(a: &EmpiricalDistribution<S>, b: &EmpiricalDistribution<S>) -> S {
    let mut events: Vec<(S, S)> = Vec::with_capacity(a.len() + b.len());
    events.extend(a.atoms.iter().copied().zip(a.weights.iter().copied()));
    events.extend(b.atoms.iter().copied().zip(b.weights.iter().map(|&w| -w)));
    events.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite atoms"));
    let mut diff = S::zero();
    let mut total = S::zero();
    for w in events.windows(2) {
        diff += w[0].1;
        total += diff.abs() * (w[1].0 - w[0].0);
    }
    total
}
