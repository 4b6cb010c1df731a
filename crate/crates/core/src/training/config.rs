use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::octree::{InterpMode, OctreeConfig, StructureMode};
use crate::residual::{HashGridConfig, MlpConfig};
use crate::sampling::SamplingConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub recon_surface: f64,
    pub recon_perturbed: f64,
    pub eik_surface: f64,
    pub eik_free: f64,
    pub proj: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { recon_surface: 1000.0, recon_perturbed: 200.0, eik_surface: 10.0, eik_free: 3.0, proj: 100.0 }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self { recon_surface: 0.0, recon_perturbed: 0.0, eik_surface: 0.0, eik_free: 0.0, proj: 0.0 }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.recon_surface, self.recon_perturbed, self.eik_surface, self.eik_free, self.proj];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations_per_frame: usize,
    pub lr_network: f64,
    pub lr_octree: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Central-difference step of the numerical gradient.
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations_per_frame: 10,
            lr_network: 1e-3,
            lr_octree: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            fd_step: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr_network > 0.0 && self.lr_octree > 0.0 && self.adam_eps > 0.0) {
            return Err(Error::Config("learning rates and adam_eps must be positive".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(self.fd_step.is_finite() && self.fd_step > 0.0) {
            return Err(Error::Config("fd_step must be positive".into()));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config("seed must fit in 63 bits".into()));
        }
        Ok(())
    }
}

/// Model variant switches, used for ablations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelOptions {
    /// Train without the neural residual (octree prior only).
    pub prior_only: bool,
    pub interpolation: InterpMode,
    pub structure: StructureMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    PaperDefaults,
    DeskScale,
}

impl Profile {
    pub const NAMES: [&'static str; 2] = ["paper-defaults", "desk-scale"];

    pub fn name(self) -> &'static str {
        match self {
            Profile::PaperDefaults => "paper-defaults",
            Profile::DeskScale => "desk-scale",
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-defaults" => Ok(Profile::PaperDefaults),
            "desk-scale" => Ok(Profile::DeskScale),
            _ => Err(Error::Config(format!(
                "unknown profile `{s}` (expected one of {})",
                Profile::NAMES.join(", ")
            ))),
        }
    }
}

/// Everything a run needs besides the frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub octree: OctreeConfig,
    pub hash_grid: HashGridConfig,
    pub mlp: MlpConfig,
    pub losses: LossWeights,
    pub train: TrainConfig,
    pub sampling: SamplingConfig,
    pub model: ModelOptions,
}

impl Default for Config {
    fn default() -> Self {
        Self::profile(Profile::PaperDefaults)
    }
}

impl Config {
    pub fn profile(profile: Profile) -> Self {
        let mut c = Self {
            octree: OctreeConfig::paper_defaults(),
            hash_grid: HashGridConfig::default(),
            mlp: MlpConfig::default(),
            losses: LossWeights::default(),
            train: TrainConfig::default(),
            sampling: SamplingConfig::default(),
            model: ModelOptions::default(),
        };
        if profile == Profile::DeskScale {
            c.octree = OctreeConfig::desk_scale();
            c.sampling.rays = 2048;
            c.train.iterations_per_frame = 10;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.octree.validate()?;
        self.hash_grid.validate()?;
        self.mlp.validate()?;
        self.losses.validate()?;
        self.train.validate()?;
        self.sampling.validate()
    }

    /// Applies the keys present in `toml_text` on top of `self`. Tables
    /// merge recursively; anything else replaces.
    pub fn overlay(&self, toml_text: &str) -> Result<Self> {
        let mut base = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let top: toml::Table = toml_text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        merge(&mut base, toml::Value::Table(top));
        let c: Self = base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Profile defaults overlaid with an optional config file.
    pub fn load(profile: Profile, path: Option<&Path>) -> Result<Self> {
        let base = Self::profile(profile);
        match path {
            None => Ok(base),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                base.overlay(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
