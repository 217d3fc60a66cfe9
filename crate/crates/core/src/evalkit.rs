//! Distribution-matching study: the return distribution a trained critic
//! predicts at one state-action pair against brute-force rollouts of the
//! trained policy, compared by exact EMD, plus histogram export.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::actor::{sample_action, GaussianPolicy};
use crate::distmath::{fill_uniform, wasserstein1, EmpiricalDistribution, QuantileFractions};
use crate::envs::{return_distribution_oracle, Env, Environment};
use crate::error::{Error, Result};
use crate::trainer::{evaluate, stream, Agent, Critic, EvalMode};
use crate::znet::{twin_min, TwinZ};

pub const HISTOGRAM_HEADER: &str = "bin_lo,bin_hi,mass";
pub const SUMMARY_HEADER: &str = "emd,avg_return";
pub const DEFAULT_BINS: usize = 30;

/// Anything that returns quantile values at given fractions.
pub trait ReturnModel {
    fn quantiles(&self, s: &[f64], a: &[f64], taus: &QuantileFractions<f64>) -> Result<Vec<f64>>;
}

impl ReturnModel for TwinZ<f64> {
    fn quantiles(&self, s: &[f64], a: &[f64], taus: &QuantileFractions<f64>) -> Result<Vec<f64>> {
        twin_min(self, s, a, taus)
    }
}

impl ReturnModel for EmpiricalDistribution<f64> {
    fn quantiles(&self, _: &[f64], _: &[f64], taus: &QuantileFractions<f64>) -> Result<Vec<f64>> {
        Ok(taus.as_slice().iter().map(|&t| self.quantile(t)).collect())
    }
}

/// `n_taus` model quantiles at fresh uniform fractions, equally weighted.
pub fn znet_distribution<M: ReturnModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    s: &[f64],
    a: &[f64],
    n_taus: usize,
    rng: &mut R,
) -> Result<EmpiricalDistribution<f64>> {
    if n_taus == 0 {
        return Err(Error::contract("znet_distribution needs at least one fraction"));
    }
    let taus = QuantileFractions::new(fill_uniform(n_taus, rng))?;
    EmpiricalDistribution::uniform(model.quantiles(s, a, &taus)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StudyConfig {
    pub n_rollouts: usize,
    pub n_taus: usize,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { n_rollouts: 500, n_taus: 64, gamma: 0.99, seed: 0 }
    }
}

/// What a study writes next to its histograms.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StudyManifest {
    pub env: Env,
    pub seed: u64,
    pub s0: Vec<f64>,
    pub a0: Vec<f64>,
    pub gamma: f64,
    pub n_rollouts: usize,
    pub n_taus: usize,
    pub emd: f64,
    pub avg_return: f64,
}

#[derive(Clone, Debug)]
pub struct EmdStudy {
    pub manifest: StudyManifest,
    /// Discounted rollout returns from `(s0, a0)`.
    pub oracle: EmpiricalDistribution<f64>,
    pub znet: EmpiricalDistribution<f64>,
}

impl EmdStudy {
    pub fn emd(&self) -> f64 {
        self.manifest.emd
    }

    pub fn avg_return(&self) -> f64 {
        self.manifest.avg_return
    }

    /// Writes `manifest.json`, both histograms, both atom lists and
    /// `summary.csv` into `dir`.
    pub fn write(&self, dir: &Path, n_bins: usize) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self.manifest)? + "\n").map_err(|e| Error::io(path, e))?;
        export_histogram(&self.oracle, n_bins, &dir.join("oracle_hist.csv"))?;
        export_histogram(&self.znet, n_bins, &dir.join("znet_hist.csv"))?;
        write_atoms(&self.oracle, &dir.join("oracle_atoms.csv"))?;
        write_atoms(&self.znet, &dir.join("znet_atoms.csv"))?;
        let path = dir.join("summary.csv");
        let text = format!("{SUMMARY_HEADER}\n{},{}\n", self.manifest.emd, self.manifest.avg_return);
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    }
}

/// The study for a trained agent. Needs a quantile critic.
pub fn emd_study(agent: &Agent, env: Env, cfg: &StudyConfig) -> Result<EmdStudy> {
    match &agent.critic {
        Critic::Quantile(twin) => emd_study_with(&agent.policy, twin, env, cfg),
        Critic::Scalar(_) => Err(Error::contract("the EMD study needs a quantile critic; sac has none")),
    }
}

/// Streams of the study seed: `(s0, a0)`, fractions, rollouts, average return.
pub fn emd_study_with<M: ReturnModel + ?Sized>(
    policy: &GaussianPolicy<f64>,
    model: &M,
    env: Env,
    cfg: &StudyConfig,
) -> Result<EmdStudy> {
    if cfg.n_rollouts == 0 {
        return Err(Error::contract("n_rollouts must be at least 1"));
    }
    let mut pick = stream(cfg.seed, 0);
    let s0 = env.reset(&mut pick);
    let a0 = sample_action(policy, &s0.obs, &mut pick)?.0;
    let znet = znet_distribution(model, &s0.obs, &a0, cfg.n_taus, &mut stream(cfg.seed, 1))?;
    let oracle = return_distribution_oracle(&env, policy, &s0, &a0, cfg.n_rollouts, cfg.gamma, &mut stream(cfg.seed, 2))?;
    let avg_return = evaluate(policy, &env, cfg.n_rollouts, EvalMode::Stochastic, &mut stream(cfg.seed, 3))?;
    let manifest = StudyManifest {
        env,
        seed: cfg.seed,
        s0: s0.obs,
        a0,
        gamma: cfg.gamma,
        n_rollouts: cfg.n_rollouts,
        n_taus: cfg.n_taus,
        emd: wasserstein1(&oracle, &znet),
        avg_return,
    };
    Ok(EmdStudy { manifest, oracle, znet })
}

/// Equal-width bins over `[min atom, max atom]`, last bin closed.
/// A distribution with a single support point gives one bin.
pub fn histogram(dist: &EmpiricalDistribution<f64>, n_bins: usize) -> Result<Vec<(f64, f64, f64)>> {
    if n_bins == 0 {
        return Err(Error::contract("histogram needs at least one bin"));
    }
    let (lo, hi) = (dist.min(), dist.max());
    if lo == hi {
        return Ok(vec![(lo, hi, 1.0)]);
    }
    let width = (hi - lo) / n_bins as f64;
    let mut mass = vec![0.0; n_bins];
    for (&x, &w) in dist.atoms().iter().zip(dist.weights()) {
        let b = (((x - lo) / width) as usize).min(n_bins - 1);
        mass[b] += w;
    }
    Ok((0..n_bins)
        .map(|b| {
            let right = if b + 1 == n_bins { hi } else { lo + width * (b + 1) as f64 };
            (lo + width * b as f64, right, mass[b])
        })
        .collect())
}

pub fn export_histogram(dist: &EmpiricalDistribution<f64>, n_bins: usize, path: &Path) -> Result<()> {
    let mut text = String::from(HISTOGRAM_HEADER);
    text.push('\n');
    for (lo, hi, m) in histogram(dist, n_bins)? {
        let _ = writeln!(text, "{lo},{hi},{m}");
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_histogram(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: String| Error::Format { what: "histogram csv", message: m };
    let mut lines = text.lines();
    if lines.next() != Some(HISTOGRAM_HEADER) {
        return Err(bad("missing or unexpected header".into()));
    }
    let mut bins = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Result<Vec<f64>> =
            line.split(',').map(|s| s.parse::<f64>().map_err(|e| bad(format!("row {}: {e}", i + 1)))).collect();
        match f?.as_slice() {
            &[lo, hi, m] => bins.push((lo, hi, m)),
            other => return Err(bad(format!("row {} has {} fields", i + 1, other.len()))),
        }
    }
    if bins.is_empty() {
        return Err(bad("no bins".into()));
    }
    Ok(bins)
}

fn write_atoms(dist: &EmpiricalDistribution<f64>, path: &Path) -> Result<()> {
    let mut text = String::from("atom,weight\n");
    for (a, w) in dist.atoms().iter().zip(dist.weights()) {
        let _ = writeln!(text, "{a},{w}");
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
