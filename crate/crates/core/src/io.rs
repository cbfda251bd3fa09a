//! File formats: TOML inputs, CSV outputs, and run manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::{ActorSummary, ExperimentConfig, MetricRow, RateFit, TrackingSummary};
use crate::features::CriticFeatures;
use crate::instance::Instance;
use crate::mdp::FiniteMdp;
use crate::policy::PolicyFeatures;

pub const FORMAT_VERSION: u32 = 1;

fn check_version(path: &Path, v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(parse_err(path, format!("unsupported version {v} (expected {FORMAT_VERSION})")));
    }
    Ok(())
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
}

/// MDP document. `kernel` has one row per `(s, a)`, state-major; `reward`
/// one row per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub version: u32,
    pub n_states: usize,
    pub n_actions: usize,
    pub discount: f64,
    pub init_dist: Vec<f64>,
    pub kernel: Vec<Vec<f64>>,
    pub reward: Vec<Vec<f64>>,
    #[serde(default)]
    pub reward_noise_halfwidth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_bound: Option<f64>,
}

impl MdpFile {
    pub fn from_mdp(mdp: &FiniteMdp) -> Self {
        let (n, na) = (mdp.n_states, mdp.n_actions);
        MdpFile {
            version: FORMAT_VERSION,
            n_states: n,
            n_actions: na,
            discount: mdp.discount,
            init_dist: mdp.init_dist.clone(),
            kernel: mdp.kernel.chunks(n).map(|c| c.to_vec()).collect(),
            reward: mdp.reward.chunks(na).map(|c| c.to_vec()).collect(),
            reward_noise_halfwidth: mdp.reward_noise_halfwidth,
            reward_bound: mdp.reward_bound,
        }
    }

    /// Shape checks only; probability checks are `FiniteMdp::validate`.
    pub fn into_mdp_unchecked(self, path: &Path) -> Result<FiniteMdp> {
        check_version(path, self.version)?;
        let (n, na) = (self.n_states, self.n_actions);
        if self.kernel.len() != n * na || self.kernel.iter().any(|r| r.len() != n) {
            return Err(parse_err(path, format!("kernel must have {} rows of length {n}", n * na)));
        }
        if self.reward.len() != n || self.reward.iter().any(|r| r.len() != na) {
            return Err(parse_err(path, format!("reward must have {n} rows of length {na}")));
        }
        if self.init_dist.len() != n {
            return Err(parse_err(path, format!("init_dist must have length {n}")));
        }
        Ok(FiniteMdp {
            n_states: n,
            n_actions: na,
            kernel: self.kernel.concat(),
            reward: self.reward.concat(),
            reward_noise_halfwidth: self.reward_noise_halfwidth,
            discount: self.discount,
            init_dist: self.init_dist,
            reward_bound: self.reward_bound,
        })
    }
}

/// Loads an MDP without rejecting invariant violations.
pub fn read_mdp_unchecked(path: &Path) -> Result<FiniteMdp> {
    read_toml::<MdpFile>(path)?.into_mdp_unchecked(path)
}

/// Loads an MDP and rejects it unless `validate` is clean.
pub fn read_mdp(path: &Path) -> Result<FiniteMdp> {
    read_mdp_unchecked(path)?.checked()
}

pub fn write_mdp(path: &Path, mdp: &FiniteMdp) -> Result<()> {
    write_toml(path, &MdpFile::from_mdp(mdp))
}

/// Policy features: one row `x(s,a)` per pair, state-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFeaturesFile {
    pub version: u32,
    pub n_states: usize,
    pub n_actions: usize,
    pub dim: usize,
    pub x: Vec<Vec<f64>>,
}

pub fn read_policy_features(path: &Path) -> Result<PolicyFeatures> {
    let f: PolicyFeaturesFile = read_toml(path)?;
    check_version(path, f.version)?;
    if f.x.len() != f.n_states * f.n_actions || f.x.iter().any(|r| r.len() != f.dim) {
        return Err(parse_err(
            path,
            format!("x must have {} rows of length {}", f.n_states * f.n_actions, f.dim),
        ));
    }
    PolicyFeatures::new(f.n_states, f.n_actions, f.dim, f.x.concat())
}

pub fn write_policy_features(path: &Path, pf: &PolicyFeatures) -> Result<()> {
    let x = (0..pf.n_states)
        .flat_map(|s| (0..pf.n_actions).map(move |a| (s, a)))
        .map(|(s, a)| pf.x(s, a).to_vec())
        .collect();
    write_toml(
        path,
        &PolicyFeaturesFile {
            version: FORMAT_VERSION,
            n_states: pf.n_states,
            n_actions: pf.n_actions,
            dim: pf.dim,
            x,
        },
    )
}

/// Critic features: one row `φ(s)` per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticFeaturesFile {
    pub version: u32,
    pub n_states: usize,
    pub dim: usize,
    pub phi: Vec<Vec<f64>>,
    #[serde(default)]
    pub norm_bounded: bool,
}

pub fn read_critic_features(path: &Path) -> Result<CriticFeatures> {
    let f: CriticFeaturesFile = read_toml(path)?;
    check_version(path, f.version)?;
    if f.phi.len() != f.n_states || f.phi.iter().any(|r| r.len() != f.dim) {
        return Err(parse_err(path, format!("phi must have {} rows of length {}", f.n_states, f.dim)));
    }
    let m = DMatrix::from_row_slice(f.n_states, f.dim, &f.phi.concat());
    Ok(CriticFeatures::new(m)?.with_norm_bound(f.norm_bounded))
}

pub fn write_critic_features(path: &Path, cf: &CriticFeatures) -> Result<()> {
    write_toml(
        path,
        &CriticFeaturesFile {
            version: FORMAT_VERSION,
            n_states: cf.n_states(),
            dim: cf.dim(),
            phi: crate::linalg::to_rows(cf.matrix()),
            norm_bounded: cf.norm_bounded,
        },
    )
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| parse_err(path, e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Where the instance comes from. Paths are relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    /// `default-tabular` or `default-deficient`; exclusive with `mdp`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mdp: Option<PathBuf>,
    /// Tabular one-hot features when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_features: Option<PathBuf>,
    /// Tabular identity features when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critic_features: Option<PathBuf>,
}

/// An instance together with the files it was read from.
pub struct LoadedInstance {
    pub instance: Instance,
    /// `(role, path)` of every input file.
    pub inputs: Vec<(String, PathBuf)>,
}

impl InstanceSpec {
    pub fn resolve(mut self, base: &Path) -> Self {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut self.mdp);
        fix(&mut self.policy_features);
        fix(&mut self.critic_features);
        self
    }

    pub fn load(&self) -> Result<LoadedInstance> {
        let mut inputs = Vec::new();
        let base = match (&self.builtin, &self.mdp) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("instance: give either builtin or mdp, not both".into()))
            }
            (None, None) => return Err(Error::Config("instance: one of builtin or mdp is required".into())),
            (Some(b), None) => match b.as_str() {
                "default-tabular" => Instance::default_tabular(),
                "default-deficient" => Instance::default_deficient(),
                other => return Err(Error::Config(format!("unknown builtin instance `{other}`"))),
            },
            (None, Some(p)) => {
                inputs.push(("mdp".to_string(), p.clone()));
                let mdp = read_mdp(p)?;
                let (n, na) = (mdp.n_states, mdp.n_actions);
                Instance::new(mdp, PolicyFeatures::tabular(n, na), CriticFeatures::tabular(n))?
            }
        };
        let policy = match &self.policy_features {
            Some(p) => {
                inputs.push(("policy_features".to_string(), p.clone()));
                read_policy_features(p)?
            }
            None => base.policy.clone(),
        };
        let critic = match &self.critic_features {
            Some(p) => {
                inputs.push(("critic_features".to_string(), p.clone()));
                read_critic_features(p)?
            }
            None => base.critic.clone(),
        };
        Ok(LoadedInstance {
            instance: Instance::new(base.mdp, policy, critic)?,
            inputs,
        })
    }
}

/// `run` / `sweep` configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub version: u32,
    pub instance: InstanceSpec,
    pub experiment: ExperimentConfig,
}

pub fn read_run_config(path: &Path) -> Result<RunConfigFile> {
    let mut cfg: RunConfigFile = read_toml(path)?;
    check_version(path, cfg.version)?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.instance = cfg.instance.resolve(base);
    cfg.experiment.validate()?;
    Ok(cfg)
}

/// `{:.16e}`: 17 significant digits, locale-free, round-trips exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_line(fields: impl IntoIterator<Item = String>) -> String {
    let mut s = fields.into_iter().collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

pub fn metric_rows_csv(seed_rows: &[(u64, &[MetricRow])]) -> String {
    let mut out = csv_line(std::iter::once("seed".to_string()).chain(MetricRow::HEADER.iter().map(|s| s.to_string())));
    for (seed, rows) in seed_rows {
        for r in rows.iter() {
            out += &csv_line(
                [seed.to_string(), r.t.to_string()]
                    .into_iter()
                    .chain(r.values().iter().map(|v| fmt_f64(*v))),
            );
        }
    }
    out
}

pub fn tracking_csv(s: &TrackingSummary) -> String {
    let mut out = csv_line(
        ["horizon", "mean_avg_critic_sq", "se_avg_critic_sq", "mean_avg_target_sq", "se_avg_target_sq"]
            .map(String::from),
    );
    for k in 0..s.checkpoints.len() {
        out += &csv_line([
            s.checkpoints[k].to_string(),
            fmt_f64(s.mean_avg_critic_sq[k]),
            fmt_f64(s.se_avg_critic_sq[k]),
            fmt_f64(s.mean_avg_target_sq[k]),
            fmt_f64(s.se_avg_target_sq[k]),
        ]);
    }
    out
}

pub fn actor_csv(s: &ActorSummary) -> String {
    let mut out = csv_line(
        ["t", "mean_grad_sq", "running_min_grad_sq", "mean_grad_minus_bias", "mean_grad_sq_minus_bias_sq"]
            .map(String::from),
    );
    for k in 0..s.t.len() {
        out += &csv_line([
            s.t[k].to_string(),
            fmt_f64(s.mean_grad_sq[k]),
            fmt_f64(s.running_min_grad_sq[k]),
            fmt_f64(s.mean_grad_minus_bias[k]),
            fmt_f64(s.mean_grad_sq_minus_bias_sq[k]),
        ]);
    }
    out
}

pub fn rate_fit_json(fit: &RateFit) -> Result<String> {
    serde_json::to_string_pretty(fit).map_err(|e| Error::Experiment(e.to_string()))
}

/// Git-style content hash: SHA-256 of `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(content_hash(&fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HashedFile {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance of one `run` or `sweep` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub instance: InstanceSpec,
    pub config: ExperimentConfig,
    /// Hash of the canonical JSON form of `instance` and `config`.
    pub config_hash: String,
    pub inputs: Vec<HashedFile>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<HashedFile>,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn config_hash(instance: &InstanceSpec, config: &ExperimentConfig) -> Result<String> {
    let doc = serde_json::json!({ "instance": instance, "config": config });
    Ok(content_hash(doc.to_string().as_bytes()))
}

pub fn hash_inputs(inputs: &[(String, PathBuf)]) -> Result<Vec<HashedFile>> {
    inputs
        .iter()
        .map(|(role, path)| {
            Ok(HashedFile {
                role: role.clone(),
                path: path.clone(),
                sha256: file_hash(path)?,
            })
        })
        .collect()
}

impl RunManifest {
    /// Recomputes every input hash and the config hash; lists mismatches.
    pub fn verify(&self) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for f in &self.inputs {
            match file_hash(&f.path) {
                Ok(h) if h == f.sha256 => {}
                Ok(_) => bad.push(format!("{} ({}) changed", f.role, f.path.display())),
                Err(e) => bad.push(format!("{} ({}): {e}", f.role, f.path.display())),
            }
        }
        if config_hash(&self.instance, &self.config)? != self.config_hash {
            bad.push("config hash mismatch".into());
        }
        Ok(bad)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| parse_err(path, e.to_string()))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn git_style_hash_of_empty_blob() {
        // Known SHA-256 git object id of the empty blob.
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }
}
