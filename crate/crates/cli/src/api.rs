//! JSON-over-HTTP facade for the exploration engine.
//!
//! | method | path | result |
//! |--------|------|--------|
//! | POST | `/sessions` | 201, session id, root round id, four prompts |
//! | GET  | `/sessions/{id}/tree` | the session's round tree |
//! | POST | `/sessions/{id}/rounds` | 202, id of the new pending round |
//! | GET  | `/sessions/{id}/rounds/{round}` | one round, for polling |
//! | POST | `/sessions/{id}/prior` | 204, records a prior selection |
//! | POST | `/sessions/{id}/prompts/{prompt}/edit` | the edited prompt |
//! | POST | `/sessions/{id}/prompts/{prompt}/modifier` | the modified prompt |
//! | GET  | `/clips/{id}.wav` | WAV bytes; `?download=true` logs a download |
//! | POST | `/clips/{id}/share` | a signed link; logs a share |
//! | GET  | `/shared/{id}.wav?sig=...` | WAV bytes behind a signed link |
//!
//! Errors are `{"code": "...", "message": "..."}`.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use dualtone_core::derive::{Degradation, DeriveError};
use dualtone_core::engine::RoundRequest;
use dualtone_core::prompt_edit::PromptEditError;
use dualtone_core::{ClipId, Engine, EngineError, ExplorationError, ModifierMode, PromptId, RoundId, SessionId};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::share::ShareSigner;

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub signer: ShareSigner,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, axum::Json(&self)).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(err: EngineError) -> Self {
        use ExplorationError as X;
        let message = err.to_string();
        let (status, code) = match &err {
            EngineError::UnknownSession(_) | EngineError::UnknownClip(_) => (StatusCode::NOT_FOUND, "not_found"),
            EngineError::MissingAudio(_) => (StatusCode::NOT_FOUND, "audio_unavailable"),
            EngineError::Exploration(x) => match x {
                X::EmptyTheme => (StatusCode::BAD_REQUEST, "empty_theme"),
                X::UnknownSession(_) | X::UnknownRound(_) | X::UnknownClip(_) | X::UnknownPrompt(_) => {
                    (StatusCode::NOT_FOUND, "not_found")
                }
                X::ForeignPrior(_) => (StatusCode::CONFLICT, "foreign_prior"),
                X::RoundNotPending(_) => (StatusCode::CONFLICT, "round_not_pending"),
                X::BadStrength(_) => (StatusCode::UNPROCESSABLE_ENTITY, "bad_strength"),
                X::NoChange => (StatusCode::UNPROCESSABLE_ENTITY, "no_change"),
                X::BadPromptCount { .. } | X::EmptyPrompt(_) | X::WrongCardinality { .. } => {
                    (StatusCode::UNPROCESSABLE_ENTITY, "bad_prompts")
                }
                X::BadClipsPerPrompt | X::RootWithPrior => (StatusCode::UNPROCESSABLE_ENTITY, "bad_round"),
                X::Inconsistent(_) => (StatusCode::INTERNAL_SERVER_ERROR, "inconsistent"),
            },
            EngineError::Derive(DeriveError::EmptyTheme) => (StatusCode::BAD_REQUEST, "empty_theme"),
            EngineError::Derive(_) => (StatusCode::BAD_GATEWAY, "client_unavailable"),
            EngineError::PromptEdit(e) => match e {
                PromptEditError::EmptyPrompt => (StatusCode::UNPROCESSABLE_ENTITY, "empty_prompt"),
                PromptEditError::EmptyInstrument | PromptEditError::InvalidInstrument(_) => {
                    (StatusCode::UNPROCESSABLE_ENTITY, "bad_instrument")
                }
            },
            EngineError::Log(_) => (StatusCode::SERVICE_UNAVAILABLE, "store_unavailable"),
            EngineError::Generation(_) => (StatusCode::BAD_GATEWAY, "generation_failed"),
            EngineError::Audio(_) | EngineError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, message)
    }
}

/// `axum::Json` with rejections reported in the service's error shape.
struct Json<T>(T);

impl<S, T> FromRequest<S> for Json<T>
where
    axum::Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: axum::extract::Request, state: &S) -> Result<Self, Self::Rejection> {
        axum::Json::<T>::from_request(req, state)
            .await
            .map(|axum::Json(v)| Json(v))
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState, cors_origin: Option<&str>) -> Router {
    let origin = match cors_origin {
        Some(o) if o != "*" => match HeaderValue::from_str(o) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => AllowOrigin::any(),
        },
        _ => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);

    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(create_session))
        .route("/sessions/{session}/tree", get(tree))
        .route("/sessions/{session}/rounds", post(open_round))
        .route("/sessions/{session}/rounds/{round}", get(round))
        .route("/sessions/{session}/prior", post(select_prior))
        .route("/sessions/{session}/prompts/{prompt}/edit", post(edit_prompt))
        .route("/sessions/{session}/prompts/{prompt}/modifier", post(apply_modifier))
        .route("/clips/{file}", get(clip_audio))
        .route("/clips/{clip}/share", post(share_clip))
        .route("/shared/{file}", get(shared_audio))
        .layer(cors)
        .with_state(state)
}

fn parse_id<T: std::str::FromStr>(raw: &str, what: &str) -> ApiResult<T> {
    raw.parse().map_err(|_| ApiError::not_found(format!("no {what} {raw}")))
}

/// Runs a pending round in the background. Failures are recorded on the
/// round itself, where polling clients see them.
fn spawn_round(engine: Arc<Engine>, session: SessionId, round: RoundId) {
    tokio::spawn(async move {
        if let Err(err) = engine.execute_round(session, round).await {
            tracing::warn!(%session, %round, %err, "round did not complete");
        }
    });
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    theme: String,
    #[serde(default = "default_locale")]
    locale: String,
    #[serde(default)]
    seed: Option<u64>,
}

fn default_locale() -> String {
    "en".into()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: SessionId,
    pub round_id: RoundId,
    pub prompts: Vec<String>,
    pub degraded: bool,
    pub degradation: Option<Degradation>,
    pub translated_theme: Option<String>,
}

async fn create_session(
    State(app): State<AppState>,
    Json(body): Json<CreateSession>,
) -> ApiResult<(StatusCode, axum::Json<SessionCreated>)> {
    let start = app.engine.create_session(&body.theme, &body.locale, body.seed).await?;
    spawn_round(app.engine.clone(), start.session_id, start.root_round);
    Ok((
        StatusCode::CREATED,
        axum::Json(SessionCreated {
            session_id: start.session_id,
            round_id: start.root_round,
            degraded: start.derivation.is_degraded(),
            prompts: start.derivation.prompts,
            degradation: start.derivation.degraded,
            translated_theme: start.derivation.translated_theme,
        }),
    ))
}

async fn tree(State(app): State<AppState>, Path(session): Path<String>) -> ApiResult<impl IntoResponse> {
    let id = parse_id(&session, "session")?;
    Ok(axum::Json(app.engine.tree(id)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RoundAccepted {
    pub round_id: RoundId,
    pub edge: Option<dualtone_core::ConstraintEdge>,
}

async fn open_round(
    State(app): State<AppState>,
    Path(session): Path<String>,
    Json(request): Json<RoundRequest>,
) -> ApiResult<(StatusCode, axum::Json<RoundAccepted>)> {
    let session = parse_id(&session, "session")?;
    let round_id = app.engine.open_round(session, &request)?;
    let edge = app.engine.session(session)?.round(round_id).map_err(EngineError::from)?.edge.clone();
    spawn_round(app.engine.clone(), session, round_id);
    Ok((StatusCode::ACCEPTED, axum::Json(RoundAccepted { round_id, edge })))
}

async fn round(State(app): State<AppState>, Path((session, round)): Path<(String, String)>) -> ApiResult<impl IntoResponse> {
    let session = parse_id(&session, "session")?;
    let round: RoundId = parse_id(&round, "round")?;
    let s = app.engine.session(session)?;
    Ok(axum::Json(s.round(round).map_err(EngineError::from)?.clone()))
}

#[derive(Debug, Deserialize)]
struct SelectPrior {
    #[serde(alias = "clip")]
    clip_id: ClipId,
}

async fn select_prior(
    State(app): State<AppState>,
    Path(session): Path<String>,
    Json(body): Json<SelectPrior>,
) -> ApiResult<StatusCode> {
    app.engine.select_prior(parse_id(&session, "session")?, body.clip_id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
struct EditPrompt {
    text: String,
}

async fn edit_prompt(
    State(app): State<AppState>,
    Path((session, prompt)): Path<(String, String)>,
    Json(body): Json<EditPrompt>,
) -> ApiResult<impl IntoResponse> {
    let session = parse_id(&session, "session")?;
    let prompt: PromptId = parse_id(&prompt, "prompt")?;
    Ok(axum::Json(app.engine.edit_prompt(session, prompt, &body.text)?))
}

#[derive(Debug, Deserialize)]
struct ApplyModifier {
    instrument: String,
    mode: ModifierMode,
}

async fn apply_modifier(
    State(app): State<AppState>,
    Path((session, prompt)): Path<(String, String)>,
    Json(body): Json<ApplyModifier>,
) -> ApiResult<impl IntoResponse> {
    let session = parse_id(&session, "session")?;
    let prompt: PromptId = parse_id(&prompt, "prompt")?;
    Ok(axum::Json(app.engine.apply_modifier(session, prompt, &body.instrument, body.mode)?))
}

fn wav_file_id(file: &str) -> ApiResult<ClipId> {
    let id = file
        .strip_suffix(".wav")
        .ok_or_else(|| ApiError::not_found(format!("no clip file {file}")))?;
    parse_id(id, "clip")
}

fn wav_response(clip: ClipId, bytes: Arc<Vec<u8>>, attachment: bool) -> Response {
    let mut response = ([(header::CONTENT_TYPE, "audio/wav")], bytes.to_vec()).into_response();
    if attachment {
        if let Ok(v) = HeaderValue::from_str(&format!("attachment; filename=\"{clip}.wav\"")) {
            response.headers_mut().insert(header::CONTENT_DISPOSITION, v);
        }
    }
    response
}

#[derive(Debug, Default, Deserialize)]
struct ClipQuery {
    #[serde(default)]
    download: bool,
}

async fn clip_audio(
    State(app): State<AppState>,
    Path(file): Path<String>,
    Query(query): Query<ClipQuery>,
) -> ApiResult<Response> {
    let clip = wav_file_id(&file)?;
    let bytes = app.engine.clip_wav(clip)?;
    if query.download {
        app.engine.record_download(clip)?;
    }
    Ok(wav_response(clip, bytes, query.download))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ShareLink {
    pub clip_id: ClipId,
    pub url: String,
}

async fn share_clip(State(app): State<AppState>, Path(clip): Path<String>) -> ApiResult<impl IntoResponse> {
    let clip: ClipId = parse_id(&clip, "clip")?;
    // Refuse links to clips without audio.
    app.engine.clip_wav(clip)?;
    app.engine.record_share(clip)?;
    Ok(axum::Json(ShareLink {
        clip_id: clip,
        url: app.signer.path(clip),
    }))
}

#[derive(Debug, Deserialize)]
struct SharedQuery {
    sig: String,
}

async fn shared_audio(
    State(app): State<AppState>,
    Path(file): Path<String>,
    Query(query): Query<SharedQuery>,
) -> ApiResult<Response> {
    let clip = wav_file_id(&file)?;
    if !app.signer.verify(clip, &query.sig) {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "bad_signature", "share link is not valid"));
    }
    Ok(wav_response(clip, app.engine.clip_wav(clip)?, false))
}
