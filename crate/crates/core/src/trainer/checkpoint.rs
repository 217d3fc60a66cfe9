//! A run directory holds one binary file per network plus `manifest.json`.

use std::path::Path;

use crate::actor::{EntropyTemp, GaussianPolicy};
use crate::envs::{Env, Environment};
use crate::error::{Error, Result};
use crate::nnkit::checkpoint::{load_layers, save_layers};
use crate::nnkit::{Activation, Linear, Mlp};
use crate::trainer::{Agent, Critic, Variant};
use crate::znet::{Twin, ZNetwork};

const ACTOR: &str = "actor.bin";
const CRITICS: [&str; 2] = ["critic1.bin", "critic2.bin"];
const TARGETS: [&str; 2] = ["target1.bin", "target2.bin"];

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub variant: Variant,
    pub env: Env,
    pub seed: u64,
    pub timesteps: usize,
    pub gamma: f64,
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub files: Vec<String>,
}

pub fn save_checkpoint(dir: &Path, agent: &Agent, manifest: &CheckpointManifest) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_layers(&dir.join(ACTOR), &agent.policy.layers())?;
    let (online, target): (Vec<Vec<&Linear<f64>>>, Vec<Vec<&Linear<f64>>>) = match &agent.critic {
        Critic::Quantile(t) => (t.online.iter().map(|z| z.layers()).collect(), t.target.iter().map(|z| z.layers()).collect()),
        Critic::Scalar(t) => (
            t.online.iter().map(|q| q.layers().iter().collect()).collect(),
            t.target.iter().map(|q| q.layers().iter().collect()).collect(),
        ),
    };
    for i in 0..2 {
        save_layers(&dir.join(CRITICS[i]), &online[i])?;
        save_layers(&dir.join(TARGETS[i]), &target[i])?;
    }
    let mut manifest = manifest.clone();
    manifest.log_alpha = agent.temp.log_alpha;
    manifest.target_entropy = agent.temp.target_entropy;
    manifest.files = std::iter::once(ACTOR).chain(CRITICS).chain(TARGETS).map(String::from).collect();
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
}

fn scalar_q(layers: Vec<Linear<f64>>) -> Result<Mlp<f64>> {
    let n = layers.len();
    let acts = (0..n).map(|i| if i + 1 == n { Activation::Identity } else { Activation::Relu }).collect();
    Mlp::from_layers(layers, acts)
}

pub fn load_checkpoint(dir: &Path) -> Result<(Agent, CheckpointManifest)> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    let spec = manifest.env.spec();
    let policy = GaussianPolicy::from_layers(load_layers(&dir.join(ACTOR))?)?;
    if policy.state_dim() != spec.state_dim || policy.action_dim() != spec.action_dim {
        return Err(Error::Format { what: "checkpoint", message: format!("actor does not fit {}", manifest.env) });
    }
    let load = |name: &str| load_layers::<f64>(&dir.join(name));
    let critic = if manifest.variant.distributional() {
        let z = |name: &str| ZNetwork::from_layers(spec.state_dim, spec.action_dim, load(name)?);
        Critic::Quantile(Twin { online: [z(CRITICS[0])?, z(CRITICS[1])?], target: [z(TARGETS[0])?, z(TARGETS[1])?] })
    } else {
        let q = |name: &str| scalar_q(load(name)?);
        Critic::Scalar(Twin { online: [q(CRITICS[0])?, q(CRITICS[1])?], target: [q(TARGETS[0])?, q(TARGETS[1])?] })
    };
    let temp = EntropyTemp { log_alpha: manifest.log_alpha, target_entropy: manifest.target_entropy };
    Ok((Agent { policy, critic, temp }, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{init_agent, TrainConfig};

    #[test]
    fn both_critic_kinds_round_trip() {
        for variant in [Variant::Sac, Variant::E2dc] {
            let mut cfg = TrainConfig::new(variant, Env::NoisyMass, 10);
            cfg.hidden = 8;
            cfg.n_cos = 4;
            let mut agent = init_agent(&cfg).unwrap();
            agent.temp.log_alpha = -1.25;
            let dir = tempfile::tempdir().unwrap();
            let manifest = CheckpointManifest {
                variant,
                env: cfg.env,
                seed: 3,
                timesteps: 10,
                gamma: 0.99,
                log_alpha: 0.0,
                target_entropy: 0.0,
                files: vec![],
            };
            save_checkpoint(dir.path(), &agent, &manifest).unwrap();
            let (back, m) = load_checkpoint(dir.path()).unwrap();
            assert_eq!(back, agent);
            assert_eq!(m.files.len(), 5);
            assert_eq!(m.log_alpha, -1.25);
        }
    }

    #[test]
    fn missing_files_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Io { .. })));
    }
}
