//! JSON payloads shared by the CLI and the HTTP service, and the work
//! behind them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::json;

use ocelgan::encoding::{
    cases_from_log, encode_case, make_pairs, prepare, split_and_partition, CaseRecord, PreparedData,
};
use ocelgan::gan::{predict_suffix, CheckpointMeta, PrefixEvent, TrainConfig, TrainedModel};
use ocelgan::metrics::{evaluate, EvalReport};
use ocelgan::ocel::{
    case_statistics, flatten, format_timestamp, parse_timestamp, relations_matrix, trim_outliers, AttrValue,
    CaseStatistics, OcelLog,
};

use crate::error::AppError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub object_type: String,
    /// Cases before length outliers were removed.
    pub raw_cases: usize,
    #[serde(flatten)]
    pub stats: CaseStatistics,
}

/// Case statistics per object type, after outlier trimming. Types without
/// any case are left out unless asked for by name.
pub fn stats(log: &OcelLog, object_type: Option<&str>) -> Result<Vec<StatsRow>, AppError> {
    let types: Vec<String> = match object_type {
        Some(t) => vec![t.to_string()],
        None => log.object_types().iter().cloned().collect(),
    };
    let mut rows = Vec::new();
    for t in types {
        let cases = flatten(log, &t)?;
        let raw_cases = cases.len();
        if raw_cases == 0 && object_type.is_none() {
            continue;
        }
        let kept = trim_outliers(cases);
        let stats = case_statistics(&kept).map_err(|_| {
            AppError::unprocessable("no_cases", format!("object type {t} has no cases"))
                .with_details(json!({ "object_type": t }))
        })?;
        rows.push(StatsRow { object_type: t, raw_cases, stats });
    }
    Ok(rows)
}

/// Object type → activities of events touching an object of that type.
pub fn relations(log: &OcelLog) -> BTreeMap<String, BTreeSet<String>> {
    relations_matrix(log)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogSchema {
    pub activities: BTreeSet<String>,
    /// Object type → attribute names found on its objects.
    pub object_attributes: BTreeMap<String, BTreeSet<String>>,
}

pub fn log_schema(log: &OcelLog) -> LogSchema {
    LogSchema {
        activities: log.activities(),
        object_attributes: log.object_types().iter().map(|t| (t.clone(), log.object_attributes(t))).collect(),
    }
}

/// Where a model's training data came from; stored next to the checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSource {
    pub log_id: String,
    pub object_type: String,
    pub attrs: Vec<String>,
}

pub const SOURCE_FILE: &str = "source.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub log_id: String,
    pub object_type: String,
    #[serde(default)]
    pub attrs: Vec<String>,
    #[serde(default)]
    pub config: TrainConfig,
}

/// Checks the object type and attribute names against the log.
pub fn check_selection(log: &OcelLog, object_type: &str, attrs: &[String]) -> Result<(), AppError> {
    if !log.object_types().contains(object_type) {
        return Err(AppError::bad_request("unknown_object_type", format!("unknown object type {object_type}"))
            .with_details(json!({ "field": "object_type", "value": object_type })));
    }
    let known = log.object_attributes(object_type);
    if let Some(bad) = attrs.iter().find(|a| !known.contains(*a)) {
        return Err(AppError::bad_request(
            "unknown_attribute",
            format!("objects of type {object_type} have no attribute {bad}"),
        )
        .with_details(json!({ "field": "attrs", "value": bad, "known": known })));
    }
    Ok(())
}

pub fn prepare_training(
    log: &OcelLog,
    object_type: &str,
    attrs: &[String],
    seed: u64,
) -> Result<PreparedData, AppError> {
    check_selection(log, object_type, attrs)?;
    let cases = cases_from_log(log, object_type, attrs)?;
    Ok(prepare(cases, attrs, seed)?)
}

/// Scores `model` on `log`. On the log it was trained on this is the held-out
/// test split; on any other log every case counts.
pub fn evaluate_on_log(
    model: &TrainedModel,
    source: &TrainingSource,
    log: &OcelLog,
    log_id: &str,
) -> Result<EvalReport, AppError> {
    let cases: Vec<CaseRecord> =
        cases_from_log(log, &source.object_type, &source.attrs)?.into_iter().filter(|c| c.len() >= 2).collect();
    let mut pairs_by_case = Vec::with_capacity(cases.len());
    for c in &cases {
        let encoded = encode_case(c, &model.schema)?;
        pairs_by_case.push((c.case_id.clone(), make_pairs(&encoded)?));
    }
    let bundle = split_and_partition(&pairs_by_case, model.config.seed)?;
    let partitions = if log_id == source.log_id {
        bundle.test
    } else {
        bundle.train.into_iter().chain(bundle.validation).chain(bundle.test).collect()
    };
    Ok(evaluate(model, &partitions)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixEventIn {
    pub activity: String,
    pub timestamp: String,
    #[serde(default, alias = "object-id")]
    pub object_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixRequest {
    pub object_type: String,
    pub events: Vec<PrefixEventIn>,
    #[serde(default)]
    pub object_attributes: BTreeMap<String, AttrValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuffixEvent {
    pub activity: String,
    pub timestamp: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub suffix: Vec<SuffixEvent>,
    pub similarity_hint: Option<f64>,
}

pub fn predict(model: &TrainedModel, source: Option<&TrainingSource>, req: &PrefixRequest) -> Result<PredictResponse, AppError> {
    if req.events.is_empty() {
        return Err(AppError::unprocessable("empty_prefix", "events must hold at least one event")
            .with_details(json!({ "field": "events" })));
    }
    if let Some(src) = source {
        if src.object_type != req.object_type {
            return Err(AppError::unprocessable(
                "object_type_mismatch",
                format!("model was trained on {}, request is for {}", src.object_type, req.object_type),
            )
            .with_details(json!({ "field": "object_type", "expected": src.object_type })));
        }
    }
    let mut prefix = Vec::with_capacity(req.events.len());
    for (i, e) in req.events.iter().enumerate() {
        let timestamp = parse_timestamp(&e.timestamp).ok_or_else(|| {
            AppError::unprocessable("invalid_timestamp", format!("cannot parse timestamp {:?}", e.timestamp))
                .with_details(json!({ "field": format!("events[{i}].timestamp") }))
        })?;
        if model.schema.activity_index(&e.activity).is_none() {
            return Err(AppError::unprocessable("unknown_activity", format!("activity {:?} is not known to the model", e.activity))
                .with_details(json!({ "field": format!("events[{i}].activity"), "activity": e.activity })));
        }
        if prefix.last().is_some_and(|p: &PrefixEvent| p.timestamp > timestamp) {
            return Err(AppError::unprocessable("unordered_events", "events must be in time order")
                .with_details(json!({ "field": format!("events[{i}].timestamp") })));
        }
        prefix.push(PrefixEvent { activity: e.activity.clone(), timestamp });
    }
    let suffix = predict_suffix(model, &prefix, &req.object_attributes)?
        .into_iter()
        .map(|e| SuffixEvent { activity: e.activity, timestamp: format_timestamp(&e.timestamp) })
        .collect();
    Ok(PredictResponse { suffix, similarity_hint: None })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model_id: String,
    pub source: Option<TrainingSource>,
    pub best_epoch: Option<usize>,
    /// Validation metrics at checkpoint time.
    pub metrics: Option<EvalReport>,
    pub config: TrainConfig,
}

impl ModelSummary {
    pub fn new(model_id: String, meta: &CheckpointMeta, source: Option<TrainingSource>) -> Self {
        Self { model_id, source, best_epoch: meta.best_epoch, metrics: meta.metrics.clone(), config: meta.config.clone() }
    }
}
