//! JSON checkpoints of a trained run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::RelationVocab;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::mgat::Mgat;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: RunConfig,
    pub config_hash: String,
    pub relations: RelationVocab,
    pub iteration: usize,
    pub encoder: Encoder,
    pub mgat: Option<Mgat>,
}

impl Checkpoint {
    pub fn new(
        config: &RunConfig,
        relations: RelationVocab,
        iteration: usize,
        encoder: Encoder,
        mgat: Option<Mgat>,
    ) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            config_hash: config.hash(),
            config: config.clone(),
            relations,
            iteration,
            encoder,
            mgat,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ck.format_version
            )));
        }
        if ck.config.hash() != ck.config_hash {
            return Err(Error::Checkpoint("stored config does not match its hash".into()));
        }
        if ck.encoder.num_relations() != ck.relations.len() {
            return Err(Error::Checkpoint(format!(
                "encoder predicts {} classes but the vocabulary has {}",
                ck.encoder.num_relations(),
                ck.relations.len()
            )));
        }
        Ok(ck)
    }
}
