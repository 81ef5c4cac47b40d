//! Model directories: `params.bin` (both networks), `model.json` (schema,
//! config, metrics) and optionally `history.csv`. Every file is written to a
//! temporary name first and renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::encoding::EncodingSchema;
use crate::metrics::EvalReport;

use super::train::History;
use super::{GanError, TrainConfig, TrainedModel};

pub const PARAMS_FILE: &str = "params.bin";
pub const META_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub schema_hash: String,
    pub schema: EncodingSchema,
    pub config: TrainConfig,
    pub max_len: usize,
    pub best_epoch: Option<usize>,
    /// Validation metrics at save time.
    pub metrics: Option<EvalReport>,
}

impl CheckpointMeta {
    pub fn for_model(model: &TrainedModel, best_epoch: Option<usize>, metrics: Option<EvalReport>) -> Self {
        Self {
            schema_hash: model.schema.fingerprint(),
            schema: model.schema.clone(),
            config: model.config.clone(),
            max_len: model.max_len,
            best_epoch,
            metrics: metrics.map(|m| m.summary()),
        }
    }
}

/// Both parameter sets in one store (names are already `gen.*`/`disc.*`).
pub fn combined_params(model: &TrainedModel) -> ParamStore {
    let mut all = ParamStore::new();
    for store in [&model.generator.params, &model.discriminator.params] {
        for id in store.ids() {
            all.add(store.name(id).to_string(), store.value(id).clone());
        }
    }
    all
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn save_model(
    dir: &Path,
    model: &TrainedModel,
    meta: &CheckpointMeta,
    history: Option<&History>,
) -> Result<(), GanError> {
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join(PARAMS_FILE), &combined_params(model).to_bytes())?;
    if let Some(h) = history {
        write_atomic(&dir.join(HISTORY_FILE), h.to_csv().as_bytes())?;
    }
    // the sidecar goes last: its presence marks a complete checkpoint
    let json = serde_json::to_vec_pretty(meta).map_err(|e| GanError::Checkpoint(e.to_string()))?;
    write_atomic(&dir.join(META_FILE), &json)?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<(TrainedModel, CheckpointMeta), GanError> {
    let meta: CheckpointMeta = serde_json::from_slice(&fs::read(dir.join(META_FILE))?)
        .map_err(|e| GanError::Checkpoint(format!("{META_FILE}: {e}")))?;
    if meta.schema.fingerprint() != meta.schema_hash {
        return Err(GanError::Checkpoint("schema hash does not match the stored schema".into()));
    }
    let all = ParamStore::read_from(fs::File::open(dir.join(PARAMS_FILE))?)?;
    let mut model = TrainedModel::new(meta.schema.clone(), meta.config.clone(), meta.max_len)?;
    let subset = |prefix: &str| {
        let mut s = ParamStore::new();
        for id in all.ids().filter(|&id| all.name(id).starts_with(prefix)) {
            s.add(all.name(id).to_string(), all.value(id).clone());
        }
        s
    };
    model.generator.params.load_values(&subset("gen."))?;
    model.discriminator.params.load_values(&subset("disc."))?;
    Ok((model, meta))
}
