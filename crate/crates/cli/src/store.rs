//! On-disk state under one data directory:
//!
//! ```text
//! logs/<id>/log.json          canonical OCEL JSON, id = content hash
//! models/<id>/params.bin ...  checkpoint, id = hash of params and metadata
//! ```
//!
//! Directories are filled under a staging name and renamed into place, so a
//! reader never sees a half-written log or model.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use ocelgan::gan::checkpoint::{META_FILE, PARAMS_FILE};
use ocelgan::gan::{load_model, save_model, CheckpointMeta, History, TrainedModel};
use ocelgan::ocel::{import_ocel_json, OcelLog};

use crate::error::AppError;
use crate::payload::{ModelSummary, TrainingSource, SOURCE_FILE};

const LOG_FILE: &str = "log.json";
const ID_LEN: usize = 16;

static STAGING: AtomicU64 = AtomicU64::new(0);

pub fn content_id(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().iter().take(ID_LEN / 2).map(|b| format!("{b:02x}")).collect()
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn valid_id(id: &str) -> bool {
    id.len() == ID_LEN && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

pub fn read_source(dir: &Path) -> Result<Option<TrainingSource>, AppError> {
    match fs::read(dir.join(SOURCE_FILE)) {
        Ok(bytes) => Ok(Some(
            serde_json::from_slice(&bytes).map_err(|e| AppError::internal(format!("{SOURCE_FILE}: {e}")))?,
        )),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Writes a checkpoint plus its training source into `dir`.
pub fn write_checkpoint(
    dir: &Path,
    model: &TrainedModel,
    meta: &CheckpointMeta,
    history: &History,
    source: &TrainingSource,
) -> Result<(), AppError> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_vec_pretty(source).map_err(|e| AppError::internal(e.to_string()))?;
    write_atomic(&dir.join(SOURCE_FILE), &json)?;
    save_model(dir, model, meta, Some(history))?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("logs"))?;
        fs::create_dir_all(root.join("models"))?;
        Ok(Self { root })
    }

    fn staging(&self, kind: &str) -> PathBuf {
        let n = STAGING.fetch_add(1, Ordering::Relaxed);
        self.root.join(kind).join(format!(".staging-{}-{n}", std::process::id()))
    }

    fn publish(&self, staging: &Path, dest: &Path) -> std::io::Result<()> {
        if dest.exists() {
            // same content is already there
            fs::remove_dir_all(staging)
        } else {
            fs::rename(staging, dest)
        }
    }

    /// Validates and stores an OCEL JSON document; returns its id.
    pub fn put_log(&self, bytes: &[u8]) -> Result<String, AppError> {
        let log = import_ocel_json(bytes)?;
        let canonical = log.export_json();
        let id = content_id(&[&canonical]);
        let dest = self.root.join("logs").join(&id);
        if !dest.exists() {
            let staging = self.staging("logs");
            fs::create_dir_all(&staging)?;
            fs::write(staging.join(LOG_FILE), &canonical)?;
            self.publish(&staging, &dest)?;
        }
        Ok(id)
    }

    pub fn log(&self, id: &str) -> Result<OcelLog, AppError> {
        let path = self.root.join("logs").join(id).join(LOG_FILE);
        if !valid_id(id) || !path.exists() {
            return Err(AppError::not_found("log", id));
        }
        Ok(import_ocel_json(&fs::read(path)?)?)
    }

    pub fn log_ids(&self) -> Result<Vec<String>, AppError> {
        self.ids("logs")
    }

    fn ids(&self, kind: &str) -> Result<Vec<String>, AppError> {
        let mut ids: Vec<String> = fs::read_dir(self.root.join(kind))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| valid_id(n))
            .collect();
        ids.sort();
        Ok(ids)
    }

    /// Stores a finished model; returns its id.
    pub fn put_model(
        &self,
        model: &TrainedModel,
        meta: &CheckpointMeta,
        history: &History,
        source: &TrainingSource,
    ) -> Result<String, AppError> {
        let staging = self.staging("models");
        let result = write_checkpoint(&staging, model, meta, history, source).and_then(|()| {
            let id = content_id(&[&fs::read(staging.join(PARAMS_FILE))?, &fs::read(staging.join(META_FILE))?]);
            self.publish(&staging, &self.model_dir(&id))?;
            Ok(id)
        });
        if result.is_err() {
            let _ = fs::remove_dir_all(&staging);
        }
        result
    }

    pub fn model_dir(&self, id: &str) -> PathBuf {
        self.root.join("models").join(id)
    }

    pub fn model(&self, id: &str) -> Result<(TrainedModel, CheckpointMeta, Option<TrainingSource>), AppError> {
        let dir = self.model_dir(id);
        if !valid_id(id) || !dir.join(META_FILE).exists() {
            return Err(AppError::not_found("model", id));
        }
        let (model, meta) = load_model(&dir)?;
        Ok((model, meta, read_source(&dir)?))
    }

    pub fn models(&self) -> Result<Vec<ModelSummary>, AppError> {
        let mut out = Vec::new();
        for id in self.ids("models")? {
            let dir = self.model_dir(&id);
            let Ok(bytes) = fs::read(dir.join(META_FILE)) else { continue };
            let meta: CheckpointMeta =
                serde_json::from_slice(&bytes).map_err(|e| AppError::internal(format!("{META_FILE}: {e}")))?;
            out.push(ModelSummary::new(id, &meta, read_source(&dir)?));
        }
        Ok(out)
    }
}
