//! Versioned JSON checkpoints.
//!
//! A checkpoint holds the network config, the fitted standardizer, the flat
//! parameter vector with its layer manifest, the optimizer state, the
//! training config and the per-epoch log, so training can resume exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::model::Model;
use super::params::{Layout, ParamEntry};
use super::schedule::Adam;
use super::train::{EpochLog, TrainConfig, TrainState};
use crate::dataset::DataConfig;
use crate::error::{Error, Result};
use crate::features::Standardizer;
use crate::types::NUM_CLASSES;

pub const CHECKPOINT_FORMAT: &str = "radclutter-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub network: NetworkConfig,
    pub standardizer: Standardizer,
    pub manifest: Vec<ParamEntry>,
    pub params: Vec<f64>,
    pub optimizer: Adam,
    pub train: TrainConfig,
    pub class_weights: [f64; NUM_CLASSES],
    pub step: u64,
    pub log: Vec<EpochLog>,
    pub lr_trace: Vec<f64>,
    /// Cloud preparation used for training, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
}

impl Checkpoint {
    pub(crate) fn from_state(st: &TrainState, config: &TrainConfig) -> Self {
        Self::from_parts(&st.model, &st.adam, config, st.class_weights, st.step, &st.log, &st.lr_trace)
    }

    pub(crate) fn from_parts(
        model: &Model,
        adam: &Adam,
        config: &TrainConfig,
        class_weights: [f64; NUM_CLASSES],
        step: u64,
        log: &[EpochLog],
        lr_trace: &[f64],
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            network: model.config.clone(),
            standardizer: model.standardizer.clone(),
            manifest: model.manifest().to_vec(),
            params: model.params.clone(),
            optimizer: adam.clone(),
            train: config.clone(),
            class_weights,
            step,
            log: log.to_vec(),
            lr_trace: lr_trace.to_vec(),
            data: None,
        }
    }

    pub fn epochs_done(&self) -> usize {
        self.log.len()
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            serde_json::to_writer(&mut f, self)?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let format = value.get("format").and_then(|v| v.as_str()).unwrap_or_default();
        let version = value.get("version").and_then(|v| v.as_u64());
        if format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("{}: not a checkpoint (format {format:?})", path.display())));
        }
        if version != Some(u64::from(CHECKPOINT_VERSION)) {
            return Err(Error::Checkpoint(format!(
                "{}: version {version:?} unsupported, expected {CHECKPOINT_VERSION}",
                path.display()
            )));
        }
        let ck: Checkpoint = serde_json::from_value(value)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        ck.validate()?;
        Ok(ck)
    }

    fn validate(&self) -> Result<()> {
        let layout = Layout::new(&self.network);
        if layout.entries != self.manifest {
            return Err(Error::Checkpoint("layer manifest does not match the stored network config".into()));
        }
        if self.params.len() != layout.total
            || self.optimizer.m.len() != layout.total
            || self.optimizer.v.len() != layout.total
        {
            return Err(Error::Checkpoint("parameter or optimizer state length mismatch".into()));
        }
        Ok(())
    }

    /// Checks that the checkpoint was trained with `network`.
    pub fn expect_network(&self, network: &NetworkConfig) -> Result<()> {
        if &self.network != network {
            return Err(Error::Checkpoint(format!(
                "checkpoint (format version {}) holds a {:?} network that differs from the requested configuration",
                self.version, self.network.variant
            )));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<Model> {
        self.validate()?;
        Model::from_parts(self.network.clone(), self.standardizer.clone(), self.params.clone())
    }

    pub(crate) fn into_state(self) -> Result<TrainState> {
        let model = self.model()?;
        Ok(TrainState {
            model,
            adam: self.optimizer,
            step: self.step,
            log: self.log,
            lr_trace: self.lr_trace,
            class_weights: self.class_weights,
        })
    }
}
