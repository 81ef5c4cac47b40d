//! Object-centric event logs: JSON import/export, flattening onto one object
//! type, activity/object-type relations, case statistics and outlier trimming.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, NaiveDateTime, SubsecRound, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OcelError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("missing required key {0}")]
    MissingRequiredKey(String),
    #[error("event {event} references unknown object {object}")]
    DanglingObjectReference { event: String, object: String },
    #[error("event {0} has an unparseable timestamp")]
    UnparseableTimestamp(String),
    #[error("event {0} has an empty activity")]
    EmptyActivity(String),
    #[error("attribute name {0} also occurs as an attribute value")]
    NameValueClash(String),
    #[error("unknown object type {0}")]
    UnknownObjectType(String),
    #[error("empty input")]
    EmptyInput,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrType {
    String,
    Float,
    Integer,
    Timestamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Integer(i64),
    Float(f64),
    String(String),
}

impl AttrValue {
    /// Numeric reading of the value; numeric-looking strings count.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttrValue::Integer(i) => Some(*i as f64),
            AttrValue::Float(f) => Some(*f),
            AttrValue::String(s) => s.trim().parse::<f64>().ok().filter(|v| v.is_finite()),
        }
    }

    pub fn as_label(&self) -> String {
        match self {
            AttrValue::Integer(i) => i.to_string(),
            AttrValue::Float(f) => f.to_string(),
            AttrValue::String(s) => s.clone(),
        }
    }

    fn from_json(v: &Value) -> Option<Self> {
        match v {
            Value::Number(n) => n
                .as_i64()
                .map(AttrValue::Integer)
                .or_else(|| n.as_f64().map(AttrValue::Float)),
            Value::String(s) => Some(AttrValue::String(s.clone())),
            Value::Bool(b) => Some(AttrValue::String(b.to_string())),
            _ => None,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            AttrValue::Integer(i) => json!(i),
            AttrValue::Float(f) => json!(f),
            AttrValue::String(s) => json!(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub id: String,
    pub activity: String,
    pub timestamp: DateTime<Utc>,
    pub omap: BTreeSet<String>,
    pub vmap: BTreeMap<String, AttrValue>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectEntity {
    pub id: String,
    pub otype: String,
    pub ovmap: BTreeMap<String, AttrValue>,
}

/// An imported log. Immutable once built; events are kept in the total order
/// (timestamp, then event id).
#[derive(Clone, Debug, PartialEq)]
pub struct OcelLog {
    events: Vec<Event>,
    objects: BTreeMap<String, ObjectEntity>,
    attribute_names: BTreeSet<String>,
    attribute_types: BTreeMap<String, AttrType>,
    object_types: BTreeSet<String>,
    version: String,
}

pub const DEFAULT_VERSION: &str = "1.0";

impl OcelLog {
    /// Assembles and validates a log from parts. Attribute names and types are
    /// derived from the values present, united with `declared_attributes`.
    pub fn from_parts(
        mut events: Vec<Event>,
        objects: Vec<ObjectEntity>,
        declared_attributes: impl IntoIterator<Item = String>,
        declared_object_types: impl IntoIterator<Item = String>,
        version: impl Into<String>,
    ) -> Result<Self, OcelError> {
        let objects: BTreeMap<String, ObjectEntity> =
            objects.into_iter().map(|o| (o.id.clone(), o)).collect();
        for e in &events {
            if e.activity.trim().is_empty() {
                return Err(OcelError::EmptyActivity(e.id.clone()));
            }
            if let Some(missing) = e.omap.iter().find(|o| !objects.contains_key(*o)) {
                return Err(OcelError::DanglingObjectReference {
                    event: e.id.clone(),
                    object: missing.clone(),
                });
            }
        }
        events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));

        let mut attribute_names: BTreeSet<String> = declared_attributes.into_iter().collect();
        let mut observed: BTreeMap<String, Vec<&AttrValue>> = BTreeMap::new();
        let maps = events.iter().map(|e| &e.vmap).chain(objects.values().map(|o| &o.ovmap));
        for m in maps {
            for (k, v) in m {
                attribute_names.insert(k.clone());
                observed.entry(k.clone()).or_default().push(v);
            }
        }
        let attribute_types = attribute_names
            .iter()
            .map(|name| {
                let values = observed.get(name).map(Vec::as_slice).unwrap_or(&[]);
                (name.clone(), infer_type(values))
            })
            .collect();
        for values in observed.values() {
            for v in values {
                if let AttrValue::String(s) = v {
                    if attribute_names.contains(s) {
                        return Err(OcelError::NameValueClash(s.clone()));
                    }
                }
            }
        }

        let mut object_types: BTreeSet<String> = declared_object_types.into_iter().collect();
        object_types.extend(objects.values().map(|o| o.otype.clone()));

        Ok(Self { events, objects, attribute_names, attribute_types, object_types, version: version.into() })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn objects(&self) -> &BTreeMap<String, ObjectEntity> {
        &self.objects
    }

    pub fn object(&self, id: &str) -> Option<&ObjectEntity> {
        self.objects.get(id)
    }

    pub fn attribute_names(&self) -> &BTreeSet<String> {
        &self.attribute_names
    }

    pub fn attribute_types(&self) -> &BTreeMap<String, AttrType> {
        &self.attribute_types
    }

    pub fn object_types(&self) -> &BTreeSet<String> {
        &self.object_types
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn activities(&self) -> BTreeSet<String> {
        self.events.iter().map(|e| e.activity.clone()).collect()
    }

    /// Object attribute names carried by objects of `object_type`.
    pub fn object_attributes(&self, object_type: &str) -> BTreeSet<String> {
        self.objects
            .values()
            .filter(|o| o.otype == object_type)
            .flat_map(|o| o.ovmap.keys().cloned())
            .collect()
    }

    /// Serializes to OCEL JSON.
    pub fn to_json(&self) -> Value {
        let mut events = Map::new();
        for e in &self.events {
            let vmap: Map<String, Value> = e.vmap.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
            events.insert(
                e.id.clone(),
                json!({
                    "ocel:activity": e.activity,
                    "ocel:timestamp": format_timestamp(&e.timestamp),
                    "ocel:omap": e.omap.iter().collect::<Vec<_>>(),
                    "ocel:vmap": vmap,
                }),
            );
        }
        let mut objects = Map::new();
        for o in self.objects.values() {
            let ovmap: Map<String, Value> = o.ovmap.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
            objects.insert(o.id.clone(), json!({ "ocel:type": o.otype, "ocel:ovmap": ovmap }));
        }
        json!({
            "ocel:global-event": { "ocel:activity": "__INVALID__" },
            "ocel:global-object": { "ocel:type": "__INVALID__" },
            "ocel:global-log": {
                "ocel:version": self.version,
                "ocel:ordering": "timestamp",
                "ocel:attribute-names": self.attribute_names.iter().collect::<Vec<_>>(),
                "ocel:object-types": self.object_types.iter().collect::<Vec<_>>(),
            },
            "ocel:events": events,
            "ocel:objects": objects,
        })
    }

    pub fn export_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(&self.to_json()).expect("log serializes")
    }
}

fn infer_type(values: &[&AttrValue]) -> AttrType {
    if values.is_empty() {
        return AttrType::String;
    }
    if values.iter().all(|v| matches!(v, AttrValue::Integer(_))) {
        AttrType::Integer
    } else if values.iter().all(|v| v.as_f64().is_some()) {
        AttrType::Float
    } else {
        AttrType::String
    }
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Parses ISO-8601-ish timestamps, truncated to whole seconds (UTC).
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc).trunc_subsecs(0));
    }
    const NAIVE: [&str; 6] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
    ];
    for fmt in NAIVE {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&t).trunc_subsecs(0));
        }
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f%:z", "%Y-%m-%d %H:%M:%S%z"] {
        if let Ok(t) = DateTime::parse_from_str(s, fmt) {
            return Some(t.with_timezone(&Utc).trunc_subsecs(0));
        }
    }
    None
}

fn required<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value, OcelError> {
    obj.get(key).ok_or_else(|| OcelError::MissingRequiredKey(key.to_string()))
}

fn as_object<'a>(v: &'a Value, key: &str) -> Result<&'a Map<String, Value>, OcelError> {
    v.as_object().ok_or_else(|| OcelError::MalformedJson(format!("{key} is not an object")))
}

fn attr_map(v: Option<&Value>, key: &str) -> Result<BTreeMap<String, AttrValue>, OcelError> {
    let Some(v) = v else { return Ok(BTreeMap::new()) };
    if v.is_null() {
        return Ok(BTreeMap::new());
    }
    let mut out = BTreeMap::new();
    for (k, val) in as_object(v, key)? {
        if let Some(a) = AttrValue::from_json(val) {
            out.insert(k.clone(), a);
        }
    }
    Ok(out)
}

fn string_list(v: Option<&Value>) -> Vec<String> {
    v.and_then(Value::as_array)
        .map(|a| a.iter().filter_map(|x| x.as_str().map(str::to_string)).collect())
        .unwrap_or_default()
}

/// Imports an OCEL JSON document.
pub fn import_ocel_json(bytes: &[u8]) -> Result<OcelLog, OcelError> {
    let root: Value = serde_json::from_slice(bytes).map_err(|e| OcelError::MalformedJson(e.to_string()))?;
    let root = as_object(&root, "document")?;
    let global = as_object(required(root, "ocel:global-log")?, "ocel:global-log")?;
    let events_json = as_object(required(root, "ocel:events")?, "ocel:events")?;
    let objects_json = as_object(required(root, "ocel:objects")?, "ocel:objects")?;

    let mut objects = Vec::with_capacity(objects_json.len());
    for (id, rec) in objects_json {
        let rec = as_object(rec, id)?;
        let otype = required(rec, "ocel:type")?
            .as_str()
            .ok_or_else(|| OcelError::MalformedJson(format!("object {id}: ocel:type is not a string")))?;
        let ovmap = attr_map(Some(required(rec, "ocel:ovmap")?), "ocel:ovmap")?;
        objects.push(ObjectEntity { id: id.clone(), otype: otype.to_string(), ovmap });
    }

    let mut events = Vec::with_capacity(events_json.len());
    for (id, rec) in events_json {
        let rec = as_object(rec, id)?;
        let activity = required(rec, "ocel:activity")?
            .as_str()
            .ok_or_else(|| OcelError::MalformedJson(format!("event {id}: ocel:activity is not a string")))?;
        let timestamp = required(rec, "ocel:timestamp")?
            .as_str()
            .and_then(parse_timestamp)
            .ok_or_else(|| OcelError::UnparseableTimestamp(id.clone()))?;
        let omap_json = required(rec, "ocel:omap")?;
        let omap = omap_json
            .as_array()
            .ok_or_else(|| OcelError::MalformedJson(format!("event {id}: ocel:omap is not a list")))?
            .iter()
            .map(|o| {
                o.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| OcelError::MalformedJson(format!("event {id}: object id is not a string")))
            })
            .collect::<Result<BTreeSet<_>, _>>()?;
        let vmap = attr_map(Some(required(rec, "ocel:vmap")?), "ocel:vmap")?;
        events.push(Event { id: id.clone(), activity: activity.to_string(), timestamp, omap, vmap });
    }

    let version = global.get("ocel:version").and_then(Value::as_str).unwrap_or(DEFAULT_VERSION);
    OcelLog::from_parts(
        events,
        objects,
        string_list(global.get("ocel:attribute-names")),
        string_list(global.get("ocel:object-types")),
        version,
    )
}

/// The events of one object, in log order.
#[derive(Clone, Debug)]
pub struct FlattenedCase<'a> {
    pub object_id: String,
    pub object_type: String,
    pub events: Vec<&'a Event>,
}

impl FlattenedCase<'_> {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => (b.timestamp - a.timestamp).num_seconds() as f64,
            _ => 0.0,
        }
    }

    pub fn activities(&self) -> Vec<&str> {
        self.events.iter().map(|e| e.activity.as_str()).collect()
    }
}

/// Projects the log onto `object_type`: one case per object of that type
/// with at least one event. Cases come out in object-id order.
pub fn flatten<'a>(log: &'a OcelLog, object_type: &str) -> Result<Vec<FlattenedCase<'a>>, OcelError> {
    if !log.object_types.contains(object_type) {
        return Err(OcelError::UnknownObjectType(object_type.to_string()));
    }
    let mut by_object: BTreeMap<&str, Vec<&Event>> = BTreeMap::new();
    for e in &log.events {
        for o in &e.omap {
            if log.objects[o].otype == object_type {
                by_object.entry(o.as_str()).or_default().push(e);
            }
        }
    }
    Ok(by_object
        .into_iter()
        .map(|(id, events)| FlattenedCase { object_id: id.to_string(), object_type: object_type.to_string(), events })
        .collect())
}

/// For every object type, the activities of events touching an object of that type.
pub fn relations_matrix(log: &OcelLog) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> =
        log.object_types.iter().map(|t| (t.clone(), BTreeSet::new())).collect();
    for e in &log.events {
        for o in &e.omap {
            let otype = &log.objects[o].otype;
            out.entry(otype.clone()).or_default().insert(e.activity.clone());
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseStatistics {
    pub count: usize,
    pub max_len: usize,
    pub min_len: usize,
    pub mean_len: f64,
    /// Case durations in seconds.
    pub max_dur: f64,
    pub min_dur: f64,
    pub mean_dur: f64,
}

pub fn case_statistics(cases: &[FlattenedCase<'_>]) -> Result<CaseStatistics, OcelError> {
    if cases.is_empty() {
        return Err(OcelError::EmptyInput);
    }
    let lens: Vec<usize> = cases.iter().map(FlattenedCase::len).collect();
    let durs: Vec<f64> = cases.iter().map(FlattenedCase::duration_secs).collect();
    let n = cases.len() as f64;
    Ok(CaseStatistics {
        count: cases.len(),
        max_len: *lens.iter().max().unwrap(),
        min_len: *lens.iter().min().unwrap(),
        mean_len: lens.iter().sum::<usize>() as f64 / n,
        max_dur: durs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        min_dur: durs.iter().cloned().fold(f64::INFINITY, f64::min),
        mean_dur: durs.iter().sum::<f64>() / n,
    })
}

/// Mean and population standard deviation of case lengths.
pub fn length_moments(lengths: &[usize]) -> (f64, f64) {
    if lengths.is_empty() {
        return (0.0, 0.0);
    }
    let n = lengths.len() as f64;
    let mean = lengths.iter().sum::<usize>() as f64 / n;
    let var = lengths.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Keeps cases whose length is within two standard deviations of the mean.
pub fn trim_outliers<'a>(cases: Vec<FlattenedCase<'a>>) -> Vec<FlattenedCase<'a>> {
    let lengths: Vec<usize> = cases.iter().map(FlattenedCase::len).collect();
    let (mean, sd) = length_moments(&lengths);
    trim_with(cases, mean, sd)
}

/// Trimming against fixed moments.
pub fn trim_with<'a>(cases: Vec<FlattenedCase<'a>>, mean: f64, sd: f64) -> Vec<FlattenedCase<'a>> {
    if sd == 0.0 {
        return cases;
    }
    cases.into_iter().filter(|c| (c.len() as f64 - mean).abs() <= 2.0 * sd).collect()
}

/// Number of (object, event) incidences for objects of `object_type`.
pub fn incidence_count(log: &OcelLog, object_type: &str) -> usize {
    let types: HashMap<&str, &str> = log.objects.values().map(|o| (o.id.as_str(), o.otype.as_str())).collect();
    log.events
        .iter()
        .map(|e| e.omap.iter().filter(|o| types[o.as_str()] == object_type).count())
        .sum()
}
