use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;

use qac_core::checks::{self, MEAN_TOLERANCE};
use qac_core::dporacle::{fixed_point, policy_evaluation, MDPSpec};
use qac_core::envs::Env;
use qac_core::evalkit::{emd_study, StudyConfig, DEFAULT_BINS};
use qac_core::trainer::{load_checkpoint, save_checkpoint, train as run_training, CheckpointManifest, TrainConfig, Variant};
use qac_core::Error;

use crate::{EXIT_IO, EXIT_PROPERTY, EXIT_USAGE};

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Io { .. }) { EXIT_IO } else { EXIT_USAGE };
        Failure { code, message: e.to_string() }
    }
}

fn property(message: String) -> Failure {
    Failure { code: EXIT_PROPERTY, message }
}

fn io(path: &Path, e: std::io::Error) -> Failure {
    Error::Io { path: path.to_path_buf(), source: e }.into()
}

type Outcome = Result<(), Failure>;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON run config.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Caps `max_timesteps`.
    #[arg(long)]
    pub steps: Option<usize>,
}

fn cap_steps(cfg: &mut TrainConfig, steps: Option<usize>) {
    if let Some(s) = steps {
        cfg.max_timesteps = cfg.max_timesteps.min(s);
    }
}

/// Trains one run and writes `metrics.csv`, `config.json` and `checkpoint/`.
fn run_into(cfg: &TrainConfig, dir: &Path) -> Result<f64, Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let resolved = cfg.resolved();
    let path = dir.join("config.json");
    let text = serde_json::to_string_pretty(&resolved).map_err(Error::from)? + "\n";
    std::fs::write(&path, text).map_err(|e| io(&path, e))?;
    let out = run_training(cfg)?;
    out.metrics.save(&dir.join("metrics.csv"))?;
    let manifest = CheckpointManifest {
        variant: cfg.variant,
        env: cfg.env,
        seed: cfg.seed,
        timesteps: cfg.max_timesteps,
        gamma: cfg.gamma,
        log_alpha: 0.0,
        target_entropy: 0.0,
        files: vec![],
    };
    save_checkpoint(&dir.join("checkpoint"), &out.agent, &manifest)?;
    let last = out.metrics.last().expect("a run always has a final row");
    Ok(last.det_return)
}

pub fn train(a: TrainArgs) -> Outcome {
    let mut cfg = TrainConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cap_steps(&mut cfg, a.steps);
    let det = run_into(&cfg, &a.out)?;
    println!("{} on {} seed {}: {} steps, final deterministic return {det}", cfg.variant, cfg.env, cfg.seed, cfg.max_timesteps);
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub env: Env,
    /// Runs per variant; run `r` of every variant uses seed `r`.
    #[arg(long)]
    pub seeds: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Config whose hyperparameters every run inherits; its variant, env
    /// and seed are replaced.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Caps `max_timesteps` (defaults to 30000 without a base config).
    #[arg(long)]
    pub steps: Option<usize>,
}

/// `mean ± population std` of the finite entries, or `None` when empty.
pub fn summarize(values: &[Option<f64>]) -> Option<(f64, f64, usize)> {
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    if ok.is_empty() {
        return None;
    }
    let n = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / n;
    let var = ok.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt(), ok.len()))
}

fn threads() -> usize {
    let cap = std::env::var("QAC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    cap.map_or(avail, |c| c.min(avail))
}

pub fn ablate(a: AblateArgs) -> Outcome {
    if a.seeds == 0 {
        return Err(Failure { code: EXIT_USAGE, message: "--seeds must be at least 1".into() });
    }
    let base = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::new(Variant::E2dc, a.env, 30_000),
    };
    let mut jobs = Vec::new();
    for v in Variant::ALL {
        for r in 0..a.seeds {
            let mut cfg = base.clone();
            cfg.variant = v;
            cfg.env = a.env;
            cfg.seed = r as u64;
            // a base tuned for a multi-sample variant must not leak K into
            // the single-sample ones
            if !v.multi_sample() {
                cfg.k_actions = None;
                cfg.m_target = base.m_target.filter(|_| !base.variant.multi_sample());
            }
            cap_steps(&mut cfg, a.steps);
            jobs.push((v, r, cfg));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads())
        .build()
        .map_err(|e| Failure { code: EXIT_USAGE, message: e.to_string() })?;
    let results: Vec<(Variant, usize, Result<f64, String>)> = pool.install(|| {
        jobs.par_iter()
            .map(|(v, r, cfg)| {
                let dir = a.out.join(v.name()).join(format!("seed-{r}"));
                let res = cfg.validate().map_err(Failure::from).and_then(|_| run_into(cfg, &dir)).map_err(|f| f.message);
                if let Err(msg) = &res {
                    let _ = std::fs::create_dir_all(&dir);
                    let _ = std::fs::write(dir.join("error.txt"), format!("{msg}\n"));
                }
                (*v, *r, res)
            })
            .collect()
    });

    let mut csv = String::from("variant,runs,failed,mean,std\n");
    println!("final deterministic return on {} over {} seeds", a.env, a.seeds);
    for v in Variant::ALL {
        let cells: Vec<Option<f64>> = results.iter().filter(|x| x.0 == v).map(|x| x.2.as_ref().ok().copied()).collect();
        let failed = cells.iter().filter(|c| c.is_none()).count();
        match summarize(&cells) {
            Some((mean, std, n)) => {
                let _ = writeln!(csv, "{v},{n},{failed},{mean},{std}");
                println!("  {:<8} {mean:.3} ± {std:.3}  ({n} runs, {failed} failed)", v.name());
            }
            None => {
                let _ = writeln!(csv, "{v},0,{failed},NA,NA");
                println!("  {:<8} NA  ({failed} failed)", v.name());
            }
        }
    }
    let path = a.out.join("summary.csv");
    std::fs::create_dir_all(&a.out).map_err(|e| io(&a.out, e))?;
    std::fs::write(&path, csv).map_err(|e| io(&path, e))?;
    for (v, r, res) in &results {
        if let Err(msg) = res {
            eprintln!("run {v} seed {r} failed: {msg}");
        }
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct EmdArgs {
    /// Directory written by `train` (the `checkpoint/` folder).
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub env: Env,
    #[arg(long, default_value_t = 500)]
    pub rollouts: usize,
    #[arg(long, default_value_t = 64)]
    pub taus: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Study output directory; defaults to `<checkpoint>/emd`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn emd(a: EmdArgs) -> Outcome {
    let (agent, manifest) = load_checkpoint(&a.checkpoint)?;
    if manifest.env != a.env {
        return Err(Failure {
            code: EXIT_USAGE,
            message: format!("checkpoint was trained on {}, not {}", manifest.env, a.env),
        });
    }
    let cfg = StudyConfig { n_rollouts: a.rollouts, n_taus: a.taus, gamma: manifest.gamma, seed: a.seed };
    let study = emd_study(&agent, a.env, &cfg)?;
    let out = a.out.unwrap_or_else(|| a.checkpoint.join("emd"));
    study.write(&out, a.bins)?;
    println!("emd,avg_return");
    println!("{},{}", study.emd(), study.avg_return());
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct DpCheckArgs {
    /// MDP whose uniform-policy fixed point is reported.
    #[arg(long)]
    pub mdp: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub cases: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn dp_check(a: DpCheckArgs) -> Outcome {
    let report = checks::contraction_suite(a.cases, a.seed)?;
    println!(
        "contraction over {} random MDPs: max ratio {:.6} (gamma {:.4} there), max excess over gamma {:.3e}",
        report.cases, report.max_ratio, report.gamma_at_max, report.max_excess
    );
    let mut failures = Vec::new();
    if !report.passed() {
        failures.push(format!("contraction violated by {:.3e}", report.max_excess));
    }
    let gap = checks::mean_consistency(20, a.seed)?;
    println!("fixed-point means vs policy evaluation over 20 MDPs: max gap {gap:.3e}");
    if gap >= MEAN_TOLERANCE {
        failures.push(format!("mean consistency gap {gap:.3e}"));
    }
    let mdp = match &a.mdp {
        Some(p) => MDPSpec::load(p)?,
        None => MDPSpec::from_json(include_str!("../data/self_loop.json"))?,
    };
    let pi = mdp.uniform_policy();
    let z = fixed_point(&mdp, &pi, 1e-12)?;
    let q = policy_evaluation(&mdp, &pi)?;
    println!("fixed point under the uniform policy (gamma {}):", mdp.gamma);
    for s in 0..mdp.states {
        for act in 0..mdp.actions {
            let d = z.get(s, act);
            println!(
                "  s={s} a={act}: mean {:.9} (scalar {:.9}), {} atoms in [{:.6}, {:.6}]",
                d.mean(),
                q[s][act],
                d.len(),
                d.min(),
                d.max()
            );
            if (d.mean() - q[s][act]).abs() >= MEAN_TOLERANCE {
                failures.push(format!("fixed point mean at ({s}, {act}) differs from policy evaluation"));
            }
        }
    }
    if failures.is_empty() {
        println!("dp-check passed");
        Ok(())
    } else {
        Err(property(failures.join("; ")))
    }
}

#[derive(Args, Debug)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 10)]
    pub networks: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn grad_check(a: GradCheckArgs) -> Outcome {
    let r = checks::grad_check(a.networks, a.seed)?;
    println!("max relative error over {} random networks:", r.networks);
    println!("  critic loss       {:.3e}", r.critic);
    println!("  policy loss       {:.3e}", r.policy);
    println!("  temperature loss  {:.3e}", r.alpha);
    if r.passed() {
        println!("grad-check passed (tolerance {:e})", checks::GRAD_TOLERANCE);
        Ok(())
    } else {
        Err(property(format!("gradient mismatch {:.3e} exceeds {:e}", r.worst(), checks::GRAD_TOLERANCE)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_one_run_has_zero_spread() {
        assert_eq!(summarize(&[Some(0.7)]), Some((0.7, 0.0, 1)));
        assert_eq!(summarize(&[None, None]), None);
        let (m, s, n) = summarize(&[Some(1.0), None, Some(3.0)]).unwrap();
        assert_eq!((m, s, n), (2.0, 1.0, 2));
    }
}
