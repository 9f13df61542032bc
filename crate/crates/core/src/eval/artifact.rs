//! Serialized policies for train-once, evaluate-many workflows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{KMeansQPolicy, RandomPolicy};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::scope::TrainedPolicy;
use crate::simulators::{BankPolicy, Simulator};

pub const ARTIFACT_FORMAT: &str = "scope-policy";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PolicyArtifact {
    Learned { policy: TrainedPolicy },
    KMeansQ { policy: KMeansQPolicy },
    Random { policy: RandomPolicy },
    Bank,
}

#[derive(Serialize, Deserialize)]
struct ArtifactFile {
    format: String,
    version: u32,
    method: String,
    artifact: PolicyArtifact,
}

impl PolicyArtifact {
    /// A policy over `sim`; the bank rule needs the simulator it belongs to.
    pub fn policy<'a>(&'a self, sim: &'a Simulator) -> Box<dyn Policy + 'a> {
        match self {
            PolicyArtifact::Learned { policy } => Box::new(policy),
            PolicyArtifact::KMeansQ { policy } => Box::new(policy),
            PolicyArtifact::Random { policy } => Box::new(policy),
            PolicyArtifact::Bank => Box::new(BankPolicy(sim)),
        }
    }

    pub fn to_json(&self, method: &str) -> Result<String> {
        let file = ArtifactFile {
            format: ARTIFACT_FORMAT.into(),
            version: ARTIFACT_VERSION,
            method: method.into(),
            artifact: self.clone(),
        };
        serde_json::to_string(&file).map_err(|e| Error::Artifact(e.to_string()))
    }

    /// Parses an artifact and returns it with the method name it was saved under.
    pub fn from_json(text: &str) -> Result<(String, Self)> {
        let file: ArtifactFile = serde_json::from_str(text).map_err(|e| Error::Artifact(e.to_string()))?;
        if file.format != ARTIFACT_FORMAT {
            return Err(Error::Artifact(format!("not a policy artifact (format '{}')", file.format)));
        }
        if file.version != ARTIFACT_VERSION {
            return Err(Error::Artifact(format!("unsupported artifact version {}", file.version)));
        }
        Ok((file.method, file.artifact))
    }

    pub fn save(&self, method: &str, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json(method)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(String, Self)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
