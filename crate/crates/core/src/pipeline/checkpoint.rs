//! JSON checkpoints.
//!
//! Layout (all keys always present unless noted):
//!
//! ```text
//! {
//!   "format": "pu-rank-checkpoint",
//!   "version": 1,
//!   "dim": D, "category_count": C,
//!   "categories": [...],
//!   "params": ModelParams, "final_params": ModelParams,
//!   "table": EmbeddingTable | null,        // only stored for trainable encoders
//!   "final_table": EmbeddingTable | null,
//!   "best_epoch": usize | null,
//!   "config": TrainConfig,
//!   "optimizer": { "weights": AdamState, "embeddings"?: AdamState },
//!   "log": [EpochRecord, ...]
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpochRecord, OptimizerState, TrainConfig, TrainedModel};
use crate::corpus::Category;
use crate::encoder::EmbeddingTable;
use crate::error::{Error, Result};
use crate::objective::ModelParams;

pub const CHECKPOINT_FORMAT: &str = "pu-rank-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    dim: usize,
    category_count: usize,
    categories: Vec<Category>,
    params: ModelParams,
    final_params: ModelParams,
    table: Option<EmbeddingTable>,
    final_table: Option<EmbeddingTable>,
    best_epoch: Option<usize>,
    config: TrainConfig,
    optimizer: OptimizerState,
    log: Vec<EpochRecord>,
}

impl TrainedModel {
    /// Serialises the model. A frozen embedding table is left out and must be
    /// supplied again when loading.
    pub fn to_json(&self) -> Result<String> {
        let trainable = self.config.trainable_encoder;
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            dim: self.params.dim,
            category_count: self.params.category_count,
            categories: self.categories.clone(),
            params: self.params.clone(),
            final_params: self.final_params.clone(),
            table: trainable.then(|| self.table.clone()),
            final_table: self.final_table.clone(),
            best_epoch: self.best_epoch,
            config: self.config.clone(),
            optimizer: self.optimizer.clone(),
            log: self.log.clone(),
        };
        serde_json::to_string(&ck).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    /// `table` is used when the checkpoint carries none; a stored table wins.
    pub fn from_json(text: &str, table: Option<&EmbeddingTable>) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format tag {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        for p in [&ck.params, &ck.final_params] {
            p.validate()?;
            if p.dim != ck.dim || p.category_count != ck.category_count {
                return Err(Error::Checkpoint("parameter shape disagrees with header".into()));
            }
        }
        if ck.categories.len() != ck.category_count {
            return Err(Error::Checkpoint(format!(
                "{} categories for C = {}",
                ck.categories.len(),
                ck.category_count
            )));
        }
        let mut table = match (ck.table, table) {
            (Some(t), _) => t,
            (None, Some(t)) => t.clone(),
            (None, None) => {
                return Err(Error::Checkpoint(
                    "checkpoint has no embedding table; supply the frozen table".into(),
                ))
            }
        };
        if table.dim() != ck.dim {
            return Err(Error::DimensionMismatch {
                expected: ck.dim,
                actual: table.dim(),
            });
        }
        table.trainable = ck.config.trainable_encoder;
        Ok(TrainedModel {
            categories: ck.categories,
            params: ck.params,
            final_params: ck.final_params,
            table,
            final_table: ck.final_table,
            best_epoch: ck.best_epoch,
            config: ck.config,
            optimizer: ck.optimizer,
            log: ck.log,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, table: Option<&EmbeddingTable>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, table)
    }
}
