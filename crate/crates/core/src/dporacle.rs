//! Exact distributional dynamic programming on finite MDPs.
//!
//! Return distributions are atom sets. One operator application forms the
//! exact mixture of shifted and scaled atom sets, then compresses every
//! entry to [`PROJECTION_ATOMS`] equally weighted atoms by bin means, which
//! keeps the mean exact and cannot increase any 1-Wasserstein distance.

use std::path::Path;

use rand::Rng;

use crate::distmath::{wasserstein1, EmpiricalDistribution};
use crate::error::{Error, Result};

pub const PROJECTION_ATOMS: usize = 512;
pub const MAX_ITERATIONS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Finite MDP. `transitions[s][a][s']` and `rewards[s][a]`; terminal states
/// emit their reward distribution and stop.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MDPSpec {
    pub states: usize,
    pub actions: usize,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<RewardSpec>>,
    pub gamma: f64,
    pub terminals: Vec<bool>,
}

/// Action probabilities per state.
pub type TabularPolicy = Vec<Vec<f64>>;

/// One return distribution per state-action pair.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularZ {
    pub z: Vec<Vec<EmpiricalDistribution<f64>>>,
}

const ROW_TOL: f64 = 1e-9;

impl MDPSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(field, msg));
        if self.states == 0 || self.actions == 0 {
            return bad("states", "need at least one state and one action".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", format!("{} is not in [0, 1)", self.gamma));
        }
        if self.terminals.len() != self.states {
            return bad("terminals", format!("{} flags for {} states", self.terminals.len(), self.states));
        }
        if self.transitions.len() != self.states || self.rewards.len() != self.states {
            return bad("transitions", "outer length must equal the state count".into());
        }
        for s in 0..self.states {
            if self.transitions[s].len() != self.actions || self.rewards[s].len() != self.actions {
                return bad("transitions", format!("state {s} does not list {} actions", self.actions));
            }
            for a in 0..self.actions {
                let row = &self.transitions[s][a];
                let sum: f64 = row.iter().sum();
                if row.len() != self.states || row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > ROW_TOL {
                    return bad("transitions", format!("P[{s}][{a}] is not a distribution over {} states", self.states));
                }
                let r = &self.rewards[s][a];
                if let Err(e) = EmpiricalDistribution::new(r.atoms.clone(), r.weights.clone()) {
                    return bad("rewards", format!("R[{s}][{a}]: {e}"));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mdp: Self = serde_json::from_str(text)?;
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn reward(&self, s: usize, a: usize) -> EmpiricalDistribution<f64> {
        let r = &self.rewards[s][a];
        EmpiricalDistribution::new(r.atoms.clone(), r.weights.clone()).expect("validated reward")
    }

    pub fn mean_reward(&self, s: usize, a: usize) -> f64 {
        let r = &self.rewards[s][a];
        r.atoms.iter().zip(&r.weights).map(|(x, w)| x * w).sum()
    }

    /// Uniform action choice in every state.
    pub fn uniform_policy(&self) -> TabularPolicy {
        vec![vec![1.0 / self.actions as f64; self.actions]; self.states]
    }

    fn check_policy(&self, pi: &TabularPolicy) -> Result<()> {
        let ok = pi.len() == self.states
            && pi.iter().all(|row| {
                row.len() == self.actions && row.iter().all(|p| *p >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= ROW_TOL
            });
        if ok {
            Ok(())
        } else {
            Err(Error::contract("policy rows must be distributions over actions"))
        }
    }

    /// Random MDP with `n` states, `m` actions, up to `k` reward atoms in
    /// `[−1, 1]`, no terminals.
    pub fn random<R: Rng + ?Sized>(n: usize, m: usize, k: usize, gamma: f64, rng: &mut R) -> Self {
        let simplex = |rng: &mut R, len: usize| {
            let raw: Vec<f64> = (0..len).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            let mut p: Vec<f64> = raw.iter().map(|x| x / total).collect();
            // absorb rounding into the largest entry
            let fix = 1.0 - p.iter().sum::<f64>();
            let i = (0..len).max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap()).unwrap();
            p[i] += fix;
            p
        };
        let mut transitions = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        for _ in 0..n {
            let mut t_row = Vec::with_capacity(m);
            let mut r_row = Vec::with_capacity(m);
            for _ in 0..m {
                t_row.push(simplex(rng, n));
                let atoms = rng.gen_range(1..=k);
                let values = (0..atoms).map(|_| rng.gen_range(-1.0..1.0)).collect();
                r_row.push(RewardSpec { atoms: values, weights: simplex(rng, atoms) });
            }
            transitions.push(t_row);
            rewards.push(r_row);
        }
        Self { states: n, actions: m, transitions, rewards, gamma, terminals: vec![false; n] }
    }
}

/// Random policy with full support.
pub fn random_policy<R: Rng + ?Sized>(states: usize, actions: usize, rng: &mut R) -> TabularPolicy {
    (0..states)
        .map(|_| {
            let raw: Vec<f64> = (0..actions).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|x| x / total).collect()
        })
        .collect()
}

impl TabularZ {
    pub fn constant(states: usize, actions: usize, value: f64) -> Self {
        Self { z: vec![vec![EmpiricalDistribution::dirac(value); actions]; states] }
    }

    /// Random atom sets in `[lo, hi]`.
    pub fn random<R: Rng + ?Sized>(states: usize, actions: usize, atoms: usize, lo: f64, hi: f64, rng: &mut R) -> Self {
        let z = (0..states)
            .map(|_| {
                (0..actions)
                    .map(|_| {
                        let n = rng.gen_range(1..=atoms);
                        let xs = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
                        EmpiricalDistribution::uniform(xs).expect("non-empty")
                    })
                    .collect()
            })
            .collect();
        Self { z }
    }

    pub fn get(&self, s: usize, a: usize) -> &EmpiricalDistribution<f64> {
        &self.z[s][a]
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        self.z.iter().map(|row| row.iter().map(|d| d.mean()).collect()).collect()
    }

    /// Shifts every atom by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self { z: self.z.iter().map(|row| row.iter().map(|d| d.affine(1.0, c)).collect()).collect() }
    }
}

/// `(TZ)(s, a) = R(s, a) + γ Z(s', a')` with `s' ~ P(·|s, a)`, `a' ~ π(·|s')`,
/// compressed to [`PROJECTION_ATOMS`] atoms when larger.
pub fn apply_distributional_bellman(mdp: &MDPSpec, pi: &TabularPolicy, z: &TabularZ) -> Result<TabularZ> {
    mdp.check_policy(pi)?;
    check_z(mdp, z)?;
    let mut out = Vec::with_capacity(mdp.states);
    for s in 0..mdp.states {
        let mut row = Vec::with_capacity(mdp.actions);
        for a in 0..mdp.actions {
            let reward = &mdp.rewards[s][a];
            if mdp.terminals[s] {
                row.push(mdp.reward(s, a));
                continue;
            }
            let mut atoms = Vec::new();
            let mut weights = Vec::new();
            for (s2, &p) in mdp.transitions[s][a].iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (a2, &q) in pi[s2].iter().enumerate() {
                    if q == 0.0 {
                        continue;
                    }
                    let next = &z.z[s2][a2];
                    for (&r, &rw) in reward.atoms.iter().zip(&reward.weights) {
                        for (&x, &xw) in next.atoms().iter().zip(next.weights()) {
                            atoms.push(r + mdp.gamma * x);
                            weights.push(p * q * rw * xw);
                        }
                    }
                }
            }
            let dist = coalesce(atoms, weights)?;
            row.push(if dist.len() > PROJECTION_ATOMS { dist.project_quantile_bins(PROJECTION_ATOMS) } else { dist });
        }
        out.push(row);
    }
    Ok(TabularZ { z: out })
}

/// Sorts, merges equal atoms and renormalizes away product rounding.
fn coalesce(atoms: Vec<f64>, weights: Vec<f64>) -> Result<EmpiricalDistribution<f64>> {
    let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut xs: Vec<f64> = Vec::with_capacity(pairs.len());
    let mut ws: Vec<f64> = Vec::with_capacity(pairs.len());
    for (x, w) in pairs {
        if xs.last() == Some(&x) {
            *ws.last_mut().unwrap() += w;
        } else {
            xs.push(x);
            ws.push(w);
        }
    }
    let total: f64 = ws.iter().sum();
    ws.iter_mut().for_each(|w| *w /= total);
    EmpiricalDistribution::new(xs, ws)
}

fn check_z(mdp: &MDPSpec, z: &TabularZ) -> Result<()> {
    if z.z.len() != mdp.states || z.z.iter().any(|row| row.len() != mdp.actions) {
        return Err(Error::shape(format!("TabularZ does not cover {} × {}", mdp.states, mdp.actions)));
    }
    Ok(())
}

/// `max_{s,a} W₁(z1(s, a), z2(s, a))`.
pub fn sup_wasserstein(z1: &TabularZ, z2: &TabularZ) -> Result<f64> {
    if z1.z.len() != z2.z.len() || z1.z.iter().zip(&z2.z).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::shape("TabularZ index sets differ"));
    }
    Ok(z1
        .z
        .iter()
        .zip(&z2.z)
        .flat_map(|(r1, r2)| r1.iter().zip(r2).map(|(a, b)| wasserstein1(a, b)))
        .fold(0.0, f64::max))
}

/// Iterates the operator from `δ₀` until successive iterates are within
/// `tol` in sup-W₁.
pub fn fixed_point(mdp: &MDPSpec, pi: &TabularPolicy, tol: f64) -> Result<TabularZ> {
    if !(tol > 0.0) {
        return Err(Error::contract("tol must be > 0"));
    }
    let mut z = TabularZ::constant(mdp.states, mdp.actions, 0.0);
    let mut change = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let next = apply_distributional_bellman(mdp, pi, &z)?;
        change = sup_wasserstein(&next, &z)?;
        z = next;
        if change < tol {
            return Ok(z);
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS, last_change: change })
}

/// Scalar `Q^π` by iterating the expected Bellman operator to machine
/// precision.
pub fn policy_evaluation(mdp: &MDPSpec, pi: &TabularPolicy) -> Result<Vec<Vec<f64>>> {
    mdp.check_policy(pi)?;
    let mut q = vec![vec![0.0; mdp.actions]; mdp.states];
    for _ in 0..MAX_ITERATIONS {
        let v: Vec<f64> = (0..mdp.states).map(|s| pi[s].iter().zip(&q[s]).map(|(p, x)| p * x).sum()).collect();
        let mut change: f64 = 0.0;
        for s in 0..mdp.states {
            for a in 0..mdp.actions {
                let boot = if mdp.terminals[s] {
                    0.0
                } else {
                    mdp.gamma * mdp.transitions[s][a].iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
                };
                let new = mdp.mean_reward(s, a) + boot;
                change = change.max((new - q[s][a]).abs());
                q[s][a] = new;
            }
        }
        if change <= 1e-14 * (1.0 + q.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()))) {
            return Ok(q);
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS, last_change: f64::NAN })
}

/// Best expected `discount`-weighted return within `horizon` steps from each
/// state, by backward induction. A terminal state's reward counts as a step.
pub fn finite_horizon_optimum(mdp: &MDPSpec, discount: f64, horizon: usize) -> Vec<f64> {
    let mut v = vec![0.0; mdp.states];
    for _ in 0..horizon {
        v = (0..mdp.states)
            .map(|s| {
                (0..mdp.actions)
                    .map(|a| {
                        let boot = if mdp.terminals[s] {
                            0.0
                        } else {
                            discount * mdp.transitions[s][a].iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
                        };
                        mdp.mean_reward(s, a) + boot
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    v
}

fn draw(probs: &[f64], rng: &mut (impl Rng + ?Sized)) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative sum: last positive entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// One sampled discounted return from `(s, a)` under `π`, run until a
/// terminal state or until `γᵗ` drops below `cutoff`.
pub fn sample_return<R: Rng + ?Sized>(mdp: &MDPSpec, pi: &TabularPolicy, s: usize, a: usize, cutoff: f64, rng: &mut R) -> f64 {
    let (mut s, mut a) = (s, a);
    let (mut g, mut disc) = (0.0, 1.0);
    loop {
        let r = &mdp.rewards[s][a];
        g += disc * r.atoms[draw(&r.weights, rng)];
        if mdp.terminals[s] || disc < cutoff {
            return g;
        }
        disc *= mdp.gamma;
        s = draw(&mdp.transitions[s][a], rng);
        a = draw(&pi[s], rng);
    }
}

/// Grid discretization of the `bimodal-goal` environment.
pub mod bimodal_grid {
    use super::*;
    use crate::envs::bimodal;

    /// Grid spacing in position units.
    pub const CELL: f64 = 0.1;
    /// Cells on each side of the origin: positions `−1.5 ..= 1.5`.
    pub const HALF: i64 = 15;
    pub const STATES: usize = 2 * HALF as usize + 1;
    /// Actions `−1, 0, +1` move two cells.
    pub const ACTIONS: [i64; 3] = [-1, 0, 1];
    /// `P(ε > CELL / 2)` for `ε ~ N(0, 0.05²)`: one cell of noise either way.
    pub const SIDE: f64 = 0.158_655_253_931_457;
    /// Exit rewards carry the cost of the terminal step itself, so that
    /// undiscounted totals agree with the continuous task.
    pub const GOAL_EXIT: f64 = bimodal::GOAL_REWARD + bimodal::STEP_COST;
    pub const DECOY_EXIT: f64 = bimodal::DECOY_REWARD + bimodal::STEP_COST;

    pub fn state_of(cell: i64) -> usize {
        (cell.clamp(-HALF, HALF) + HALF) as usize
    }

    pub fn position(state: usize) -> f64 {
        (state as i64 - HALF) as f64 * CELL
    }

    pub fn start() -> usize {
        state_of(0)
    }

    pub fn mdp(gamma: f64) -> MDPSpec {
        let goal = (bimodal::GOAL / CELL).round() as i64;
        let mut transitions = Vec::with_capacity(STATES);
        let mut rewards = Vec::with_capacity(STATES);
        let mut terminals = Vec::with_capacity(STATES);
        for s in 0..STATES {
            let cell = s as i64 - HALF;
            let terminal = cell.abs() >= goal;
            let reward = if cell >= goal {
                GOAL_EXIT
            } else if cell <= -goal {
                DECOY_EXIT
            } else {
                -bimodal::STEP_COST
            };
            terminals.push(terminal);
            let mut t_row = Vec::new();
            for &a in &ACTIONS {
                let mut p = vec![0.0; STATES];
                if terminal {
                    p[s] = 1.0;
                } else {
                    for (e, w) in [(-1, SIDE), (0, 1.0 - 2.0 * SIDE), (1, SIDE)] {
                        p[state_of(cell + 2 * a + e)] += w;
                    }
                }
                t_row.push(p);
            }
            transitions.push(t_row);
            rewards.push(vec![RewardSpec { atoms: vec![reward], weights: vec![1.0] }; ACTIONS.len()]);
        }
        MDPSpec { states: STATES, actions: ACTIONS.len(), transitions, rewards, gamma, terminals }
    }

    /// Best undiscounted expected return from the origin within the
    /// environment's horizon; the exit counts as one extra step.
    pub fn optimum() -> f64 {
        finite_horizon_optimum(&mdp(0.0), 1.0, bimodal::HORIZON + 1)[start()]
    }
}
