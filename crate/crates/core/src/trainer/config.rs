use std::path::Path;

use crate::envs::{Env, Environment};
use crate::error::{Error, Result};
use crate::explore::UCBConfig;
use crate::targets::CriticHyper;
use crate::znet::ZNetConfig;

/// Which of the five agents to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Scalar twin critics.
    Sac,
    /// Quantile critics with single-sample targets.
    Iqn,
    /// Quantile critics with multi-sample targets.
    IqnMtv,
    /// Single-sample targets, optimistic action selection.
    IqnUcb,
    /// Multi-sample targets and optimistic action selection.
    E2dc,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Sac, Variant::Iqn, Variant::IqnMtv, Variant::IqnUcb, Variant::E2dc];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Sac => "sac",
            Variant::Iqn => "iqn",
            Variant::IqnMtv => "iqn-mtv",
            Variant::IqnUcb => "iqn-ucb",
            Variant::E2dc => "e2dc",
        }
    }

    pub fn distributional(self) -> bool {
        self != Variant::Sac
    }

    pub fn multi_sample(self) -> bool {
        matches!(self, Variant::IqnMtv | Variant::E2dc)
    }

    pub fn optimistic(self) -> bool {
        matches!(self, Variant::IqnUcb | Variant::E2dc)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config("variant", format!("unknown variant `{s}`")))
    }
}

fn d_warmup() -> usize {
    1000
}
fn d_batch() -> usize {
    128
}
fn d_buffer() -> usize {
    100_000
}
fn d_gamma() -> f64 {
    0.99
}
fn d_n() -> usize {
    64
}
fn d_kappa() -> f64 {
    1.0
}
fn d_ema() -> f64 {
    0.005
}
fn d_lr() -> f64 {
    3e-4
}
fn d_alpha() -> f64 {
    1.0
}
fn d_eval_interval() -> usize {
    5000
}
fn d_eval_episodes() -> usize {
    10
}
fn d_one() -> usize {
    1
}
fn d_hidden() -> usize {
    64
}
fn d_probe() -> usize {
    256
}

/// One training run. Unknown keys are rejected; omitted keys take the
/// defaults below.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub env: Env,
    #[serde(default)]
    pub seed: u64,
    pub max_timesteps: usize,
    #[serde(default = "d_warmup")]
    pub warmup_steps: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_buffer")]
    pub buffer_capacity: usize,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    /// Online fractions `N`.
    #[serde(default = "d_n")]
    pub n_online: usize,
    /// Target fractions `M`: 8 for multi-sample variants, 64 otherwise.
    #[serde(default)]
    pub m_target: Option<usize>,
    /// Target actions `K`: 8 for multi-sample variants, 1 otherwise.
    #[serde(default)]
    pub k_actions: Option<usize>,
    #[serde(default = "d_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub ucb: UCBConfig,
    /// EMA rate `τ̄` of the target networks.
    #[serde(default = "d_ema")]
    pub ema_rate: f64,
    #[serde(default = "d_lr")]
    pub critic_lr: f64,
    #[serde(default = "d_lr")]
    pub actor_lr: f64,
    #[serde(default = "d_lr")]
    pub alpha_lr: f64,
    /// `H̄`; defaults to `−action_dim`.
    #[serde(default)]
    pub target_entropy: Option<f64>,
    #[serde(default = "d_alpha")]
    pub initial_alpha: f64,
    #[serde(default = "d_eval_interval")]
    pub eval_interval: usize,
    #[serde(default = "d_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "d_one")]
    pub grad_steps_per_env_step: usize,
    /// Hidden width of every network.
    #[serde(default = "d_hidden")]
    pub hidden: usize,
    /// Cosine features of the fraction embedding.
    #[serde(default = "d_hidden")]
    pub n_cos: usize,
    /// Frozen transitions for the Z-std metric.
    #[serde(default = "d_probe")]
    pub probe_size: usize,
}

impl TrainConfig {
    /// Defaults for everything but the required fields.
    pub fn new(variant: Variant, env: Env, max_timesteps: usize) -> Self {
        Self {
            variant,
            env,
            seed: 0,
            max_timesteps,
            warmup_steps: d_warmup(),
            batch_size: d_batch(),
            buffer_capacity: d_buffer(),
            gamma: d_gamma(),
            n_online: d_n(),
            m_target: None,
            k_actions: None,
            kappa: d_kappa(),
            ucb: UCBConfig::default(),
            ema_rate: d_ema(),
            critic_lr: d_lr(),
            actor_lr: d_lr(),
            alpha_lr: d_lr(),
            target_entropy: None,
            initial_alpha: d_alpha(),
            eval_interval: d_eval_interval(),
            eval_episodes: d_eval_episodes(),
            grad_steps_per_env_step: d_one(),
            hidden: d_hidden(),
            n_cos: d_hidden(),
            probe_size: d_probe(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn m(&self) -> usize {
        self.m_target.unwrap_or(if self.variant.multi_sample() { 8 } else { 64 })
    }

    pub fn k(&self) -> usize {
        self.k_actions.unwrap_or(if self.variant.multi_sample() { 8 } else { 1 })
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy.unwrap_or(-(self.env.spec().action_dim as f64))
    }

    pub fn hyper(&self) -> CriticHyper<f64> {
        CriticHyper { gamma: self.gamma, n_online: self.n_online, m_target: self.m(), k_actions: self.k(), kappa: self.kappa }
    }

    pub fn znet(&self) -> ZNetConfig {
        ZNetConfig { hidden: self.hidden, n_cos: self.n_cos }
    }

    /// Copy with the variant-dependent defaults written out.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.m_target = Some(self.m());
        c.k_actions = Some(self.k());
        c.target_entropy = Some(self.target_entropy());
        c
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_timesteps", self.max_timesteps),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("n_online", self.n_online),
            ("eval_interval", self.eval_interval),
            ("eval_episodes", self.eval_episodes),
            ("grad_steps_per_env_step", self.grad_steps_per_env_step),
            ("hidden", self.hidden),
            ("n_cos", self.n_cos),
            ("probe_size", self.probe_size),
            ("m_target", self.m()),
            ("k_actions", self.k()),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma", format!("{} is not in [0, 1)", self.gamma)));
        }
        if !(self.ema_rate > 0.0 && self.ema_rate < 1.0) {
            return Err(Error::config("ema_rate", "must lie strictly between 0 and 1"));
        }
        for (field, v) in [("critic_lr", self.critic_lr), ("actor_lr", self.actor_lr), ("alpha_lr", self.alpha_lr), ("kappa", self.kappa), ("initial_alpha", self.initial_alpha)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be finite and > 0"));
            }
        }
        if matches!(self.variant, Variant::Iqn | Variant::IqnUcb) && self.k() != 1 {
            return Err(Error::config("k_actions", format!("{} uses single-sample targets; K must be 1", self.variant)));
        }
        self.ucb.validate()?;
        Ok(())
    }
}
