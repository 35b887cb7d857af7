use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{what} `{id}` not found")]
    NotFound { what: &'static str, id: String },

    #[error("unknown variable `{name}`")]
    UnknownVariable { name: String, known: Vec<String> },

    #[error("variable `{0}` is already observed")]
    AlreadyObserved(String),

    #[error("{0}")]
    InvalidValue(String),

    #[error("{message}")]
    Conflict { code: &'static str, message: String, detail: Value },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(sepsislab::Error),

    #[error("store: {0}")]
    Store(#[from] rusqlite::Error),

    #[error("internal: {0}")]
    Internal(String),
}

impl From<sepsislab::Error> for ServiceError {
    fn from(e: sepsislab::Error) -> Self {
        match e {
            sepsislab::Error::AlreadyObserved(name) => ServiceError::AlreadyObserved(name),
            sepsislab::Error::UnknownVariable { name, known } => ServiceError::UnknownVariable { name, known },
            other => ServiceError::Core(other),
        }
    }
}

/// Error body of every failed request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound { .. } => StatusCode::NOT_FOUND,
            ServiceError::UnknownVariable { .. } | ServiceError::AlreadyObserved(_) | ServiceError::InvalidValue(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ServiceError::Conflict { .. } => StatusCode::CONFLICT,
            ServiceError::Core(sepsislab::Error::InvalidConfig(_)) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn body(&self) -> ErrorBody {
        let (code, detail) = match self {
            ServiceError::NotFound { what, id } => ("not_found", json!({ "resource": what, "id": id })),
            ServiceError::UnknownVariable { name, known } => {
                ("unknown_variable", json!({ "variable": name, "known": known }))
            }
            ServiceError::AlreadyObserved(name) => ("already_observed", json!({ "variable": name })),
            ServiceError::InvalidValue(_) => ("invalid_value", Value::Null),
            ServiceError::Conflict { code, detail, .. } => (*code, detail.clone()),
            ServiceError::Config(_) => ("config_error", Value::Null),
            ServiceError::Core(sepsislab::Error::InvalidConfig(_)) => ("invalid_request", Value::Null),
            ServiceError::Core(_) => ("engine_error", Value::Null),
            ServiceError::Store(_) => ("store_error", Value::Null),
            ServiceError::Internal(_) => ("internal_error", Value::Null),
        };
        ErrorBody {
            code: code.into(),
            message: self.to_string(),
            detail,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(self.body())).into_response()
    }
}
