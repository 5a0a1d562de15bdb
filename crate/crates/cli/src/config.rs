//! Run configuration files: partial overrides layered on the built-in presets.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use uavcol_core::mission::{Scheme, SchemeConfig};
use uavcol_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum SchemeSelector {
    LkhDdpg,
    DdpgRandom,
    Mpc,
    All,
}

impl SchemeSelector {
    pub fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeSelector::LkhDdpg => vec![Scheme::LkhDdpg],
            SchemeSelector::DdpgRandom => vec![Scheme::DdpgRandom],
            SchemeSelector::Mpc => vec![Scheme::Mpc],
            SchemeSelector::All => Scheme::ALL.to_vec(),
        }
    }
}

/// Contents of a `--config` file. Every field is optional. The override
/// objects may name any subset of the fields of the corresponding core type.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scheme: Option<SchemeSelector>,
    pub hyperparams: Option<Value>,
    pub mpc: Option<Value>,
    pub lk: Option<Value>,
    pub policy_terminal_brake: Option<bool>,
    pub mpc_nearest_neighbor: Option<bool>,
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
}

impl RunConfig {
    /// Parses and type-checks a configuration against the default preset.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("run config: {e}")))?;
        cfg.apply(&SchemeConfig::desk())?;
        if cfg.seeds.as_ref().is_some_and(|s| s.is_empty()) {
            return Err(Error::InvalidInput("run config: seeds must not be empty".into()));
        }
        Ok(cfg)
    }

    /// Layers the overrides on `base` and validates the result.
    pub fn apply(&self, base: &SchemeConfig) -> Result<SchemeConfig> {
        let mut out = base.clone();
        if let Some(v) = &self.hyperparams {
            out.hp = merge_overrides(&out.hp, v, "hyperparams")?;
        }
        if let Some(v) = &self.mpc {
            out.mpc = merge_overrides(&out.mpc, v, "mpc")?;
        }
        if let Some(v) = &self.lk {
            out.lk = merge_overrides(&out.lk, v, "lk")?;
        }
        if let Some(b) = self.policy_terminal_brake {
            out.policy_terminal_brake = b;
        }
        if let Some(b) = self.mpc_nearest_neighbor {
            out.mpc_nearest_neighbor = b;
        }
        out.hp.validate()?;
        out.mpc.validate()?;
        Ok(out)
    }
}

/// Deep-merges the JSON object `overrides` into the serialized `base`, then
/// deserializes. Unknown keys and mistyped values are errors.
pub fn merge_overrides<T: Serialize + DeserializeOwned>(base: &T, overrides: &Value, section: &str) -> Result<T> {
    if !overrides.is_object() {
        return Err(Error::InvalidInput(format!("run config: `{section}` must be an object")));
    }
    let mut merged = serde_json::to_value(base).expect("config serializes");
    merge(&mut merged, overrides);
    serde_json::from_value(merged).map_err(|e| Error::InvalidInput(format!("run config: `{section}`: {e}")))
}

fn merge(dst: &mut Value, src: &Value) {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                match d.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        d.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (d, s) => *d = s.clone(),
    }
}
