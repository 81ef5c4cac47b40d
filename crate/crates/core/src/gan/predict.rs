use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::encoding::{encode_events, CaseRecord};
use crate::ocel::AttrValue;

use super::{GanError, TrainedModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixEvent {
    pub activity: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedEvent {
    pub activity: String,
    pub timestamp: DateTime<Utc>,
    /// Seconds since the previous event.
    pub elapsed_secs: f64,
}

/// Predicts the rest of a running case. `attributes` are the case object's
/// attribute values; unknown categories and missing values are tolerated.
pub fn predict_suffix(
    model: &TrainedModel,
    prefix: &[PrefixEvent],
    attributes: &BTreeMap<String, AttrValue>,
) -> Result<Vec<PredictedEvent>, GanError> {
    let last = prefix.last().ok_or(GanError::EmptyPrefix)?;
    let record = CaseRecord {
        case_id: String::new(),
        activities: prefix.iter().map(|e| e.activity.clone()).collect(),
        timestamps: prefix.iter().map(|e| e.timestamp).collect(),
        attributes: attributes.clone(),
    };
    let vectors = encode_events(&record, &model.schema)?;
    let generated = model.generate_batch(&[vectors.as_slice()])?.pop().unwrap_or_default();

    let mut clock = last.timestamp;
    let mut out = Vec::with_capacity(generated.activities.len());
    for (&a, &e) in generated.activities.iter().zip(&generated.elapsed) {
        let secs = model.schema.denormalize_elapsed(e).max(0.0);
        clock += Duration::milliseconds((secs * 1000.0).round() as i64);
        out.push(PredictedEvent { activity: model.schema.activity_vocab[a].clone(), timestamp: clock, elapsed_secs: secs });
    }
    Ok(out)
}
