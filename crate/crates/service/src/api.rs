use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::header::{HeaderName, LOCATION};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use persona_core::store::{Conversation, ConversationSummary, InterviewScript, PersonaSummary, TimelineEvent};
use persona_core::{
    AbilityEntry, ChatRequest, ChatTurn, Engine, EngineError, PersonaAttributes, PersonaProfile, Store, Theme,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::error::{schema_error, ApiError};

pub const PERSONA_ID_HEADER: &str = "x-persona-id";
pub const CONVERSATION_ID_HEADER: &str = "x-conversation-id";

/// Shared handler state. The engine and store are the only state handlers touch.
#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub store: Arc<Store>,
    provider_permits: Arc<Semaphore>,
}

impl AppState {
    pub fn new(engine: Engine, store: Store, max_in_flight: usize) -> Self {
        Self {
            engine: Arc::new(engine),
            store: Arc::new(store),
            provider_permits: Arc::new(Semaphore::new(max_in_flight.max(1))),
        }
    }

    /// Run engine work that calls the provider, bounded by the in-flight limit.
    async fn with_provider<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&Engine, &Store) -> Result<T, ApiError> + Send + 'static,
    {
        let _permit = self
            .provider_permits
            .clone()
            .acquire_owned()
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?;
        self.blocking(f).await
    }

    async fn blocking<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&Engine, &Store) -> Result<T, ApiError> + Send + 'static,
    {
        let engine = self.engine.clone();
        let store = self.store.clone();
        tokio::task::spawn_blocking(move || f(&engine, &store))
            .await
            .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
    }
}

/// JSON body parsed strictly, with schema errors reported as 400 plus the key path.
pub struct JsonBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::bad_request("unreadable_body", "body", e.body_text()))?;
        let mut de = serde_json::Deserializer::from_slice(&bytes);
        let value = serde_path_to_error::deserialize(&mut de).map_err(schema_error)?;
        de.end()
            .map_err(|e| ApiError::bad_request("malformed_json", "body", e.to_string()))?;
        Ok(JsonBody(value))
    }
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v)
        .map_err(|e| ApiError::bad_request("invalid_query", "query", e.body_text()))
}

fn body_theme(raw: &str) -> Result<Theme, ApiError> {
    raw.parse()
        .map_err(|e: persona_core::theme::UnknownTheme| ApiError::bad_request("unknown_theme", "theme", e.to_string()))
}

fn path_theme(raw: &str) -> Result<Theme, ApiError> {
    raw.parse()
        .map_err(|e: persona_core::theme::UnknownTheme| ApiError::not_found("unknown_theme", "theme", e.to_string()))
}

fn header(name: &'static str, value: &str) -> Result<(HeaderName, HeaderValue), ApiError> {
    let value = HeaderValue::from_str(value).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((HeaderName::from_static(name), value))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/themes", get(list_themes))
        .route("/api/themes/{theme}/abilities", get(list_abilities))
        .route("/api/questions", get(suggest_questions))
        .route("/api/personas", post(create_persona).get(list_personas))
        .route("/api/personas/{id}", get(get_persona).delete(delete_persona))
        .route("/api/personas/{id}/abilities", put(set_abilities))
        .route(
            "/api/personas/{id}/conversations",
            post(new_conversation).get(list_conversations),
        )
        .route("/api/conversations/{id}", get(get_conversation))
        .route("/api/conversations/{id}/mark", post(mark_question))
        .route("/api/conversations/{id}/annotate", post(annotate))
        .route("/api/conversations/{id}/timeline", get(timeline))
        .route("/api/conversations/{id}/script", get(export_script))
        .route("/api/chat", post(chat))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "no_route", "no such endpoint") })
        .with_state(state)
}

/// Allow the listed browser origins; an empty list disables CORS headers.
pub fn with_cors(router: Router, origins: &[String]) -> anyhow::Result<Router> {
    if origins.is_empty() {
        return Ok(router);
    }
    let origins = origins
        .iter()
        .map(|o| HeaderValue::from_str(o))
        .collect::<Result<Vec<_>, _>>()?;
    let layer = CorsLayer::new()
        .allow_origin(AllowOrigin::list(origins))
        .allow_methods([Method::GET, Method::POST, Method::PUT, Method::DELETE])
        .allow_headers([axum::http::header::CONTENT_TYPE])
        .expose_headers([
            LOCATION,
            HeaderName::from_static(PERSONA_ID_HEADER),
            HeaderName::from_static(CONVERSATION_ID_HEADER),
        ]);
    Ok(router.layer(layer))
}

async fn list_themes() -> Json<Vec<Theme>> {
    Json(Theme::ALL.to_vec())
}

async fn list_abilities(State(state): State<AppState>, Path(theme): Path<String>) -> Result<Json<Vec<AbilityEntry>>, ApiError> {
    let theme = path_theme(&theme)?;
    Ok(Json(state.engine.catalog().list(theme).into_iter().cloned().collect()))
}

#[derive(Deserialize)]
struct QuestionQuery {
    theme: Option<String>,
    ability: Option<String>,
}

async fn suggest_questions(
    State(state): State<AppState>,
    q: Result<Query<QuestionQuery>, QueryRejection>,
) -> Result<Json<Vec<String>>, ApiError> {
    let q = query(q)?;
    let raw = q
        .theme
        .ok_or_else(|| ApiError::bad_request("missing_parameter", "theme", "query parameter `theme` is required"))?;
    let theme = path_theme(&raw)?;
    let selected: Vec<String> = q.ability.into_iter().filter(|a| !a.trim().is_empty()).collect();
    Ok(Json(state.engine.suggest_questions(theme, &selected)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileInput {
    name: String,
    age: u32,
    occupation: String,
    #[serde(rename = "Medical Condition", alias = "medical_condition")]
    medical_condition: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreatePersonaBody {
    theme: String,
    profile: ProfileInput,
    #[serde(default)]
    abilities: Vec<String>,
}

/// Exactly the creation contract keys; the new id travels in headers.
#[derive(Serialize)]
struct CreatePersonaResponse {
    description: String,
    system_prompt: String,
    assistant_message: String,
}

async fn create_persona(
    State(state): State<AppState>,
    JsonBody(body): JsonBody<CreatePersonaBody>,
) -> Result<Response, ApiError> {
    let attrs = PersonaAttributes {
        theme: body_theme(&body.theme)?,
        name: body.profile.name,
        age: body.profile.age,
        occupation: body.profile.occupation,
        medical_condition: body.profile.medical_condition,
    };
    let abilities = body.abilities;
    let created = state
        .with_provider(move |engine, store| Ok(engine.create_persona(store, attrs, &abilities)?))
        .await?;
    tracing::info!(persona_id = %created.persona_id, "persona created");
    let headers = [
        header(PERSONA_ID_HEADER, &created.persona_id)?,
        (LOCATION, location("personas", &created.persona_id)?),
    ];
    let body = CreatePersonaResponse {
        description: created.description,
        system_prompt: created.system_prompt,
        assistant_message: created.assistant_message,
    };
    Ok((StatusCode::OK, headers, Json(body)).into_response())
}

fn location(kind: &str, id: &str) -> Result<HeaderValue, ApiError> {
    HeaderValue::from_str(&format!("/api/{kind}/{id}")).map_err(|e| ApiError::internal(e.to_string()))
}

async fn list_personas(State(state): State<AppState>) -> Json<Vec<PersonaSummary>> {
    Json(state.store.list_personas())
}

async fn get_persona(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<PersonaProfile>, ApiError> {
    Ok(Json(state.store.load_persona(&id)?))
}

async fn delete_persona(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    state.blocking(move |_, store| Ok(store.delete_persona(&id)?)).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AbilitiesBody {
    abilities: Vec<String>,
}

async fn set_abilities(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(body): JsonBody<AbilitiesBody>,
) -> Result<Json<PersonaProfile>, ApiError> {
    let profile = state
        .blocking(move |engine, store| Ok(engine.set_abilities(store, &id, &body.abilities)?))
        .await?;
    Ok(Json(profile))
}

#[derive(Serialize)]
struct NewConversation {
    conversation_id: String,
}

async fn new_conversation(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let conversation_id = state.blocking(move |_, store| Ok(store.new_conversation(&id)?)).await?;
    let headers = [(LOCATION, location("conversations", &conversation_id)?)];
    Ok((StatusCode::CREATED, headers, Json(NewConversation { conversation_id })).into_response())
}

async fn list_conversations(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Vec<ConversationSummary>>, ApiError> {
    Ok(Json(state.store.list_conversations(&id)?))
}

async fn get_conversation(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Conversation>, ApiError> {
    Ok(Json(state.store.conversation(&id)?))
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkBody {
    turn_index: usize,
    #[serde(default = "yes")]
    marked: bool,
}

async fn mark_question(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(body): JsonBody<MarkBody>,
) -> Result<Json<Conversation>, ApiError> {
    let conversation = state
        .blocking(move |_, store| {
            if body.marked {
                store.mark_question(&id, body.turn_index)?;
            } else {
                store.unmark_question(&id, body.turn_index)?;
            }
            Ok(store.conversation(&id)?)
        })
        .await?;
    Ok(Json(conversation))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotateBody {
    note: String,
}

async fn annotate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(body): JsonBody<AnnotateBody>,
) -> Result<Json<TimelineEvent>, ApiError> {
    let event = state
        .blocking(move |_, store| Ok(store.annotate(&id, &body.note)?))
        .await?;
    Ok(Json(event))
}

async fn timeline(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Vec<TimelineEvent>>, ApiError> {
    Ok(Json(state.store.timeline(&id)?))
}

#[derive(Deserialize)]
struct ScriptQuery {
    #[serde(default)]
    marked_only: bool,
}

async fn export_script(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<ScriptQuery>, QueryRejection>,
) -> Result<Json<InterviewScript>, ApiError> {
    let marked_only = query(q)?.marked_only;
    let script = state
        .blocking(move |_, store| Ok(store.export_interview_script(&id, marked_only)?))
        .await?;
    Ok(Json(script))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatBody {
    context: Vec<ChatTurn>,
    #[serde(default)]
    persona_id: Option<String>,
    #[serde(default)]
    conversation_id: Option<String>,
    #[serde(default)]
    theme: Option<String>,
}

/// Exactly the chat contract envelope.
#[derive(Serialize)]
struct ChatResponse {
    assistant_message: ChatTurn,
}

async fn chat(State(state): State<AppState>, JsonBody(body): JsonBody<ChatBody>) -> Result<Response, ApiError> {
    let theme = body.theme.as_deref().map(body_theme).transpose()?;
    let outcome = match body.persona_id {
        Some(persona_id) => {
            let request = ChatRequest {
                persona_id,
                conversation_id: body.conversation_id,
                context: body.context,
            };
            state
                .with_provider(move |engine, store| {
                    if let Some(theme) = theme {
                        let persona = store.load_persona(&request.persona_id)?;
                        if persona.attributes.theme != theme {
                            return Err(EngineError::Invalid {
                                field: "theme".into(),
                                message: format!("persona theme is {}", persona.attributes.theme),
                            }
                            .into());
                        }
                    }
                    Ok(engine.chat(store, request)?)
                })
                .await?
        }
        None => {
            if body.conversation_id.is_some() {
                return Err(ApiError::bad_request(
                    "invalid_field",
                    "conversation_id",
                    "conversation_id requires persona_id",
                ));
            }
            let context = body.context;
            state
                .with_provider(move |engine, _| Ok(engine.chat_stateless(&context, theme)?))
                .await?
        }
    };
    let markers: Vec<String> = outcome.grounding.iter().map(|p| p.marker()).collect();
    tracing::debug!(grounding = ?markers, "chat reply");
    let body = Json(ChatResponse {
        assistant_message: outcome.turn,
    });
    match outcome.conversation_id {
        Some(id) => Ok((StatusCode::OK, [header(CONVERSATION_ID_HEADER, &id)?], body).into_response()),
        None => Ok((StatusCode::OK, body).into_response()),
    }
}
