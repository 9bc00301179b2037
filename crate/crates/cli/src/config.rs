//! Run configuration file: one JSON document.
//!
//! Rates are in units of χ (χ = 1 by default) and times in units of 1/χ.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use cavity_wv::dynamics::auto_phi;
use cavity_wv::hilbert::CavityState;
use cavity_wv::protocol::{DriveModel, Mode, ProtocolConfig};
use cavity_wv::C64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Preset { preset: String },
    Amps { amps: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhiSpec {
    Value(f64),
    Keyword(PhiKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiKeyword {
    Auto,
}

fn default_chi() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    1.0 / 50.0
}
fn default_tau() -> f64 {
    std::f64::consts::PI
}
fn default_delta1() -> f64 {
    5.0
}
fn default_phi() -> PhiSpec {
    PhiSpec::Keyword(PhiKeyword::Auto)
}
fn default_shots() -> u64 {
    1_000_000
}
fn default_mode() -> Mode {
    Mode::Sampled
}
fn default_split() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_max: usize,
    pub state: StateSpec,
    #[serde(default = "default_chi")]
    pub chi: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_delta1")]
    pub delta1: f64,
    #[serde(default = "default_phi")]
    pub phi: PhiSpec,
    /// Shots per target photon number, split between the X and Y settings.
    #[serde(default = "default_shots")]
    pub shots: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_split")]
    pub basis_split: f64,
}

impl RunConfig {
    pub fn new(n_max: usize, state: StateSpec) -> Self {
        Self {
            n_max,
            state,
            chi: default_chi(),
            gamma: default_gamma(),
            tau: default_tau(),
            delta1: default_delta1(),
            phi: default_phi(),
            shots: default_shots(),
            seed: 0,
            mode: default_mode(),
            basis_split: default_split(),
        }
    }

    pub fn preset(n_max: usize, preset: &str) -> Self {
        Self::new(
            n_max,
            StateSpec::Preset {
                preset: preset.to_string(),
            },
        )
    }

    /// Reads a config file, or the `config` object embedded in a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let inner = match value.get("config") {
            Some(cfg) if value.get("manifest_version").is_some() => cfg.clone(),
            _ => value,
        };
        serde_json::from_value(inner).with_context(|| format!("invalid config in {}", path.display()))
    }

    pub fn phi_value(&self) -> f64 {
        match self.phi {
            PhiSpec::Value(v) => v,
            PhiSpec::Keyword(PhiKeyword::Auto) => auto_phi(self.n_max),
        }
    }

    pub fn cavity_state(&self) -> Result<CavityState> {
        match &self.state {
            StateSpec::Amps { amps } => {
                if amps.len() != self.n_max + 1 {
                    bail!("state.amps has {} entries, n_max = {} needs {}", amps.len(), self.n_max, self.n_max + 1);
                }
                let amps = amps.iter().map(|[re, im]| C64::new(*re, *im)).collect();
                Ok(CavityState::normalized(amps)?)
            }
            StateSpec::Preset { preset } => parse_preset(preset, self.n_max),
        }
    }

    pub fn protocol(&self) -> Result<ProtocolConfig> {
        if self.mode == Mode::Sampled && self.shots == 0 {
            bail!("shots must be at least 1 in sampled mode");
        }
        if !(self.gamma * self.tau > 0.0) {
            bail!("gamma * tau must be positive");
        }
        let cfg = ProtocolConfig {
            true_state: self.cavity_state()?,
            chi: self.chi,
            gamma: self.gamma,
            tau: self.tau,
            delta1: self.delta1,
            phi: self.phi_value(),
            target_n: 0,
            shots: self.shots,
            basis_split: self.basis_split,
            seed: self.seed,
            mode: self.mode,
            drive_model: DriveModel::Exact,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_pair(s: &str) -> Result<C64> {
    let (re, im) = s.split_once(',').ok_or_else(|| anyhow!("expected 're,im', got '{s}'"))?;
    Ok(C64::new(re.trim().parse()?, im.trim().parse()?))
}

/// `vacuum`, `fock:k`, `coherent:re,im`, `cat:re,im`; coherent and cat are truncated then renormalized.
pub fn parse_preset(preset: &str, n_max: usize) -> Result<CavityState> {
    let (kind, arg) = preset.split_once(':').unwrap_or((preset, ""));
    let state = match kind.trim() {
        "vacuum" => CavityState::vacuum(n_max)?,
        "fock" => CavityState::fock(n_max, arg.trim().parse().context("fock:k needs an integer k")?)?,
        "coherent" => CavityState::coherent(n_max, parse_pair(arg)?)?,
        "cat" => CavityState::cat(n_max, parse_pair(arg)?)?,
        other => bail!("unknown state preset '{other}'"),
    };
    Ok(state)
}
