//! JSON request and response bodies. Every type rejects unknown fields so
//! clients and tests can use them as schemas.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use fmkit_core::analysis::Decision;
use fmkit_core::editing::MoveMode;
use fmkit_core::formats::{Diagnostic, FormatKind, ParseError};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Operation {
    Transform,
    Analyze,
    Propagate,
    Slice,
    Sample,
    Count,
}

impl Operation {
    pub const ALL: [Operation; 6] = [
        Operation::Transform,
        Operation::Analyze,
        Operation::Propagate,
        Operation::Slice,
        Operation::Sample,
        Operation::Count,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operation::Transform => "TRANSFORM",
            Operation::Analyze => "ANALYZE",
            Operation::Propagate => "PROPAGATE",
            Operation::Slice => "SLICE",
            Operation::Sample => "SAMPLE",
            Operation::Count => "COUNT",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_final(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelText {
    pub format: FormatKind,
    pub text: String,
}

/// Body of `POST /jobs` and `POST /propagate`. `operation` stays a string
/// so an unknown name maps to its own error code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobRequest {
    pub operation: String,
    pub model: ModelText,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
}

/// Body of `POST /propagate`; the operation may be omitted there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagateRequest {
    #[serde(default)]
    pub operation: Option<String>,
    pub model: ModelText,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoParams {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformParams {
    pub to: FormatKind,
}

/// Decisions in the order the user made them; `UNDECIDED` frees a feature.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagateParams {
    #[serde(default)]
    pub decisions: Vec<Decision>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceParams {
    pub remove: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleParams {
    #[serde(default = "default_t")]
    pub t: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_t() -> usize {
    2
}

impl Default for SampleParams {
    fn default() -> Self {
        SampleParams { t: 2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct JobAccepted {
    pub job_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct JobView {
    pub job_id: String,
    pub operation: Operation,
    pub status: JobStatus,
    /// Milliseconds since the Unix epoch.
    pub submitted_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<u64>,
    /// Present iff DONE.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    /// Present iff FAILED.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CancelResponse {
    pub status: JobStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SessionRequest {
    pub model: ModelText,
    #[serde(default = "default_host_name")]
    pub host_name: String,
    #[serde(default)]
    pub move_mode: MoveMode,
}

fn default_host_name() -> String {
    "Host".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SessionCreated {
    pub session_id: String,
    pub share_link: String,
    /// Sent in the first `Join` to claim the host seat.
    pub host_token: String,
}

// ---- results ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformResult {
    pub format: FormatKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SliceResultBody {
    /// The sliced model as UVL.
    pub model: ModelText,
    pub derived_constraints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleResultBody {
    pub t: usize,
    pub seed: u64,
    /// Selected feature names per configuration, in model order.
    pub configurations: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountResult {
    pub count: u64,
}

// ---- errors ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                diagnostics: Vec::new(),
            },
        }
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(what: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "not-found",
            format!("unknown {what}"),
        )
    }

    pub fn too_large(limit: usize) -> Self {
        Self::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "payload-too-large",
            format!("limit is {limit} bytes"),
        )
    }

    pub fn canceled() -> Self {
        Self::new(StatusCode::CONFLICT, "canceled", "job canceled")
    }

    pub fn parse(e: ParseError) -> Self {
        let mut err = Self::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "parse-error",
            e.to_string(),
        );
        err.body.diagnostics = e.diagnostics;
        err
    }

    pub fn unprocessable(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
