use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "twohop-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// How the None label and the confidence threshold pick a prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Argmax over all labels; a relation below the threshold becomes None.
    #[default]
    ArgmaxThenThreshold,
    /// Best relation ignoring the None probability; None below the threshold.
    MaxOverRelations,
}

impl DecisionRule {
    pub fn name(self) -> &'static str {
        match self {
            DecisionRule::ArgmaxThenThreshold => "argmax_then_threshold",
            DecisionRule::MaxOverRelations => "max_over_relations",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "argmax_then_threshold" | "argmax" => Ok(DecisionRule::ArgmaxThenThreshold),
            "max_over_relations" | "max_over_r" => Ok(DecisionRule::MaxOverRelations),
            _ => Err(Error::Input(format!(
                "unknown decision rule {s:?} (argmax_then_threshold or max_over_relations)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// A trained model: config, vocabularies, tuned threshold and every
/// parameter tensor, under a versioned header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub threshold: f64,
    #[serde(default)]
    pub decision: DecisionRule,
    pub words: Vec<String>,
    pub relations: Vec<String>,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn check_header(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Input(format!(
                "not a checkpoint (format {:?})",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Input(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        ck.check_header()?;
        Ok(ck)
    }
}
