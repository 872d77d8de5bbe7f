use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{PolicyConfig, PolicyNet, PolicyParams};
use crate::error::{NavError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Architecture plus flat parameters, stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: PolicyConfig,
    pub params: PolicyParams,
    /// Free-form provenance such as training mode or seed.
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(config: PolicyConfig, params: PolicyParams) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config,
            params,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses and checks version and parameter count.
    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(NavError::Shape(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        let net = PolicyNet::new(ck.config.clone())?;
        if net.param_count() != ck.params.len() {
            return Err(NavError::Shape(format!(
                "checkpoint has {} parameters, its architecture needs {}",
                ck.params.len(),
                net.param_count()
            )));
        }
        if !ck.params.is_finite() {
            return Err(NavError::Shape(
                "checkpoint contains non-finite parameters".into(),
            ));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Rejects a checkpoint whose architecture differs from `expected`.
    pub fn ensure_config(&self, expected: &PolicyConfig) -> Result<()> {
        if &self.config != expected {
            return Err(NavError::Shape(format!(
                "checkpoint architecture {:?} does not match {:?}",
                self.config, expected
            )));
        }
        Ok(())
    }

    pub fn into_net(self) -> Result<(PolicyNet, PolicyParams)> {
        Ok((PolicyNet::new(self.config)?, self.params))
    }
}
