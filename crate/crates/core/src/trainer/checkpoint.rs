use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chief::SharedParams;
use crate::envs::EnvId;
use crate::error::{Error, Result};
use crate::numerics::{Activation, MlpParams};
use crate::policy::{HeadKind, PolicyParams};
use crate::retrace::{Critic, CriticInput};

pub const MANIFEST_FILE: &str = "checkpoint.json";
pub const BLOB_FILE: &str = "checkpoint.bin";
const FORMAT: &str = "mpo-lab-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub env: EnvId,
    pub head: HeadKind,
    pub activation: Activation,
    pub policy_layers: Vec<usize>,
    pub critic_layers: Vec<usize>,
    pub critic_input: CriticInput,
    pub version: u64,
    pub iteration: usize,
    pub episodes: usize,
    pub env_steps: usize,
    pub tensors: Vec<TensorEntry>,
    pub blob_bytes: usize,
}

/// Shared parameters plus the counters needed to report on them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub env: EnvId,
    pub params: SharedParams,
    pub iteration: usize,
    pub episodes: usize,
    pub env_steps: usize,
}

fn mlp_tensors<'a>(prefix: &str, net: &'a MlpParams<f64>, out: &mut Vec<(String, Vec<usize>, &'a [f64])>) {
    let sizes = net.layer_sizes();
    for l in 0..net.n_layers() {
        out.push((format!("{prefix}.layer{l}.weight"), vec![sizes[l + 1], sizes[l]], net.weight(l)));
        out.push((format!("{prefix}.layer{l}.bias"), vec![sizes[l + 1]], net.bias(l)));
    }
}

impl Checkpoint {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let p = &self.params;
        let mut out = Vec::new();
        mlp_tensors("policy", &p.policy.net, &mut out);
        mlp_tensors("reference_policy", &p.reference.net, &mut out);
        mlp_tensors("critic", &p.critic.online, &mut out);
        mlp_tensors("target_critic", &p.critic.target, &mut out);
        out.push(("eta_raw".into(), vec![1], std::slice::from_ref(&p.eta_raw)));
        out.push(("eta_mu_raw".into(), vec![1], std::slice::from_ref(&p.eta_mu_raw)));
        out.push(("eta_sigma_raw".into(), vec![1], std::slice::from_ref(&p.eta_sigma_raw)));
        out
    }

    /// Writes the manifest and the little-endian f64 blob into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut blob = Vec::new();
        let mut entries = Vec::new();
        for (name, shape, data) in self.tensors() {
            entries.push(TensorEntry { name, shape, offset: blob.len() });
            for v in data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let p = &self.params;
        let manifest = CheckpointManifest {
            format: FORMAT.into(),
            env: self.env,
            head: p.policy.head,
            activation: p.policy.net.activation(),
            policy_layers: p.policy.net.layer_sizes().to_vec(),
            critic_layers: p.critic.online.layer_sizes().to_vec(),
            critic_input: p.critic.input,
            version: p.version,
            iteration: self.iteration,
            episodes: self.episodes,
            env_steps: self.env_steps,
            tensors: entries,
            blob_bytes: blob.len(),
        };
        fs::write(dir.join(BLOB_FILE), &blob)?;
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: CheckpointManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.format != FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format `{}`", manifest.format)));
        }
        let blob = fs::read(dir.join(BLOB_FILE))?;
        if blob.len() != manifest.blob_bytes {
            return Err(Error::Checkpoint(format!("blob has {} bytes, manifest says {}", blob.len(), manifest.blob_bytes)));
        }
        let act = manifest.activation;
        let mut skeleton = Checkpoint {
            env: manifest.env,
            params: SharedParams {
                policy: PolicyParams::new(MlpParams::zeros(&manifest.policy_layers, act)?, manifest.head)?,
                reference: PolicyParams::new(MlpParams::zeros(&manifest.policy_layers, act)?, manifest.head)?,
                critic: Critic::new(MlpParams::zeros(&manifest.critic_layers, act)?, manifest.critic_input)?,
                eta_raw: 0.0,
                eta_mu_raw: 0.0,
                eta_sigma_raw: 0.0,
                version: manifest.version,
            },
            iteration: manifest.iteration,
            episodes: manifest.episodes,
            env_steps: manifest.env_steps,
        };
        let expected: Vec<(String, Vec<usize>, usize)> =
            skeleton.tensors().into_iter().map(|(n, s, d)| (n, s, d.len())).collect();
        if expected.len() != manifest.tensors.len() {
            return Err(Error::Checkpoint("tensor list does not match the declared architecture".into()));
        }
        let mut values = Vec::with_capacity(expected.len());
        for ((name, shape, len), entry) in expected.iter().zip(&manifest.tensors) {
            if *name != entry.name || *shape != entry.shape {
                return Err(Error::Checkpoint(format!("unexpected tensor `{}` {:?}", entry.name, entry.shape)));
            }
            let bytes = blob
                .get(entry.offset..entry.offset + 8 * len)
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` runs past the blob")))?;
            values.push(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect::<Vec<f64>>());
        }
        let mut values = values.into_iter();
        let p = &mut skeleton.params;
        for net in [&mut p.policy.net, &mut p.reference.net, &mut p.critic.online, &mut p.critic.target] {
            for l in 0..net.n_layers() {
                net.weight_mut(l).copy_from_slice(&values.next().expect("checked count"));
                net.bias_mut(l).copy_from_slice(&values.next().expect("checked count"));
            }
        }
        p.eta_raw = values.next().expect("checked count")[0];
        p.eta_mu_raw = values.next().expect("checked count")[0];
        p.eta_sigma_raw = values.next().expect("checked count")[0];
        Ok(skeleton)
    }
}
