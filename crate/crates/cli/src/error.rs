//! One error shape for both front ends: `{code, message, details}` plus an
//! HTTP status that the CLI ignores.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use ocelgan::encoding::EncodingError;
use ocelgan::gan::GanError;
use ocelgan::ocel::OcelError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub details: Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AppError {
    pub status: u16,
    pub body: ErrorBody,
}

impl AppError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into(), details: Value::Null } }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.body.details = details;
        self
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(400, code, message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(404, "not_found", format!("no {what} with id {id}")).with_details(json!({ what: id }))
    }

    pub fn unprocessable(code: &str, message: impl Into<String>) -> Self {
        Self::new(422, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(500, "internal", message)
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.body.code, self.body.message)
    }
}

impl std::error::Error for AppError {}

impl From<OcelError> for AppError {
    fn from(e: OcelError) -> Self {
        let message = e.to_string();
        let (code, details) = match &e {
            OcelError::MalformedJson(reason) => ("malformed_json", json!({ "field": null, "reason": reason })),
            OcelError::MissingRequiredKey(key) => ("missing_key", json!({ "field": key })),
            OcelError::DanglingObjectReference { event, object } => (
                "dangling_object_reference",
                json!({ "field": format!("ocel:events.{event}.ocel:omap"), "object": object }),
            ),
            OcelError::UnparseableTimestamp(event) => {
                ("invalid_timestamp", json!({ "field": format!("ocel:events.{event}.ocel:timestamp") }))
            }
            OcelError::EmptyActivity(event) => {
                ("empty_activity", json!({ "field": format!("ocel:events.{event}.ocel:activity") }))
            }
            OcelError::NameValueClash(name) => {
                ("name_value_clash", json!({ "field": "ocel:global-log.ocel:attribute-names", "value": name }))
            }
            OcelError::UnknownObjectType(t) => ("unknown_object_type", json!({ "field": "object_type", "value": t })),
            OcelError::EmptyInput => ("empty_input", Value::Null),
        };
        AppError::bad_request(code, message).with_details(details)
    }
}

impl From<EncodingError> for AppError {
    fn from(e: EncodingError) -> Self {
        let message = e.to_string();
        match e {
            EncodingError::UnknownActivity(a) => {
                AppError::unprocessable("unknown_activity", message).with_details(json!({ "activity": a }))
            }
            EncodingError::NegativeElapsed(i) => {
                AppError::unprocessable("unordered_events", message).with_details(json!({ "index": i }))
            }
            EncodingError::TooFewCases(n) => {
                AppError::unprocessable("too_few_cases", message).with_details(json!({ "cases": n }))
            }
            EncodingError::EmptyInput | EncodingError::CaseTooShort(_) => AppError::unprocessable("no_data", message),
        }
    }
}

impl From<GanError> for AppError {
    fn from(e: GanError) -> Self {
        match e {
            GanError::Encoding(inner) => inner.into(),
            GanError::EmptyPrefix => AppError::unprocessable("empty_prefix", "the prefix has no events"),
            GanError::InvalidConfig(m) => AppError::bad_request("invalid_config", m),
            GanError::EmptyBundle => AppError::unprocessable("no_data", e.to_string()),
            other => AppError::internal(other.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::internal(e.to_string())
    }
}
