use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use persona_core::abilities::{CatalogError, GenerationError};
use persona_core::store::StoreError;
use persona_core::EngineError;
use serde::Serialize;

/// Error returned by every endpoint as `{"error":{...}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub field: Option<String>,
    pub retryable: Option<bool>,
}

#[derive(Serialize)]
struct Envelope<'a> {
    error: Body<'a>,
}

#[derive(Serialize)]
struct Body<'a> {
    code: &'a str,
    message: &'a str,
    field: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    retryable: Option<bool>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            field: None,
            retryable: None,
        }
    }

    pub fn with_field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    pub fn bad_request(code: &'static str, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message).with_field(field)
    }

    pub fn not_found(code: &'static str, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message).with_field(field)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, message = %self.message, "request failed");
        }
        let body = Envelope {
            error: Body {
                code: self.code,
                message: &self.message,
                field: self.field.as_deref(),
                retryable: self.retryable,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::PersonaNotFound(_) => Self::not_found("persona_not_found", "persona_id", message),
            StoreError::ConversationNotFound(_) => {
                Self::not_found("conversation_not_found", "conversation_id", message)
            }
            StoreError::TurnNotFound { .. } => Self::bad_request("turn_not_found", "turn_index", message),
            StoreError::NotAUserTurn { .. } => Self::bad_request("not_a_user_turn", "turn_index", message),
            StoreError::DuplicatePersona(_) => {
                Self::new(StatusCode::CONFLICT, "duplicate_persona", message).with_field("persona_id")
            }
            StoreError::Invalid { field, .. } => Self::bad_request("invalid_field", field, message),
            StoreError::Io { .. } | StoreError::Corrupt { .. } => Self::internal(message),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let message = e.to_string();
        match e {
            EngineError::Invalid { field, .. } => Self::bad_request("invalid_field", field, message),
            EngineError::SystemTurnInHistory => Self::bad_request("system_turn_in_history", "context", message),
            EngineError::EmptyContext => Self::bad_request("empty_context", "context", message),
            EngineError::LastTurnNotUser => Self::bad_request("last_turn_not_user", "context", message),
            EngineError::ConversationMismatch { .. } => {
                Self::bad_request("conversation_mismatch", "conversation_id", message)
            }
            EngineError::Catalog(CatalogError::NotFound { .. }) => {
                Self::bad_request("unknown_ability", "abilities", message)
            }
            EngineError::Provider(p) | EngineError::Generation(GenerationError::Provider(p)) => Self {
                status: StatusCode::BAD_GATEWAY,
                code: "provider_error",
                message: p.message,
                field: None,
                retryable: Some(p.retryable),
            },
            EngineError::Store(s) => s.into(),
            EngineError::Catalog(_) | EngineError::Retrieval(_) | EngineError::Generation(_) => {
                Self::internal(message)
            }
        }
    }
}

/// Turn a body deserialization failure into a 400 naming the offending key.
pub fn schema_error(err: serde_path_to_error::Error<serde_json::Error>) -> ApiError {
    let path = err.path().to_string();
    let inner = err.into_inner();
    let message = inner.to_string();
    let named = ["missing field `", "unknown field `"]
        .iter()
        .find_map(|p| message.strip_prefix(p))
        .and_then(|rest| rest.split('`').next());
    let field = match (named, path.as_str()) {
        (Some(name), p) if p == name || p.ends_with(&format!(".{name}")) => p.to_string(),
        (Some(name), ".") => name.to_string(),
        (Some(name), p) if !p.is_empty() => format!("{p}.{name}"),
        (Some(name), _) => name.to_string(),
        (None, ".") | (None, "") => "body".to_string(),
        (None, p) => p.to_string(),
    };
    let code = if inner.is_syntax() || inner.is_eof() {
        "malformed_json"
    } else {
        "schema_violation"
    };
    ApiError::bad_request(code, field, message)
}
