//! Binds sessions, prompt derivation, generation, the event log and blob
//! storage into the operations the service exposes.
//!
//! Every mutation takes the session's write lock, validates, appends the
//! resulting event to the store, and only then applies it to the in-memory
//! session. Distinct sessions never contend; generation runs outside any
//! lock.

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{decode_wav, encode_wav, AudioError, Waveform};
use crate::blobs::BlobStore;
use crate::config::{BackendMode, ServiceConfig};
use crate::derive::{
    derive_initial_prompts, DeriveError, DerivationResult, HttpLanguageModel, HttpTranslator, LanguageModelClient,
    OfflineLanguageModel, PassThroughTranslator, TranslationClient,
};
use crate::eventlog::{EventLogError, EventStore};
use crate::exploration::{
    ClipRecord, DerivationRecord, ExplorationError, Round, RoundSpec, Session, SessionEvent,
};
use crate::generation::{
    Backend, BatchRunner, GenerationError, GenerationRequest, PriorClip, PromptSlot, RemoteBackend, StubBackend,
};
use crate::ids::{ClipId, PromptId, RoundId, SessionId};
use crate::prompt_edit::{apply_instrument_modifier, edit_prompt, ModifierMode, PromptEditError, TextPrompt};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("unknown clip {0}")]
    UnknownClip(ClipId),
    #[error("audio for clip {0} is missing from blob storage")]
    MissingAudio(ClipId),
    #[error(transparent)]
    Exploration(#[from] ExplorationError),
    #[error(transparent)]
    Derive(#[from] DeriveError),
    #[error(transparent)]
    PromptEdit(#[from] PromptEditError),
    #[error(transparent)]
    Log(#[from] EventLogError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("blob storage: {0}")]
    Io(#[from] std::io::Error),
}

/// Generation geometry applied to every round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundDefaults {
    pub clips_per_prompt: u32,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub prior_strength: f64,
}

impl From<&ServiceConfig> for RoundDefaults {
    fn from(c: &ServiceConfig) -> Self {
        Self {
            clips_per_prompt: c.clips_per_prompt,
            duration_s: c.clip_duration_s,
            sample_rate: c.sample_rate,
            prior_strength: c.prior_strength,
        }
    }
}

impl Default for RoundDefaults {
    fn default() -> Self {
        (&ServiceConfig::default()).into()
    }
}

/// A request to open a refinement round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundRequest {
    pub prompts: Vec<String>,
    #[serde(default, alias = "prior_clip_id")]
    pub prior: Option<ClipId>,
    #[serde(default)]
    pub strength: Option<f64>,
    #[serde(default)]
    pub parent: Option<RoundId>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStart {
    pub session_id: SessionId,
    pub root_round: RoundId,
    pub derivation: DerivationResult,
}

/// Serializable view of a session tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub session_id: SessionId,
    pub theme_phrase: String,
    pub locale: String,
    pub created_at: DateTime<Utc>,
    pub derivation: Option<DerivationRecord>,
    pub root_round: Option<RoundId>,
    pub rounds: Vec<Round>,
}

impl From<&Session> for TreeDocument {
    fn from(s: &Session) -> Self {
        Self {
            session_id: s.id,
            theme_phrase: s.theme_phrase.clone(),
            locale: s.locale.clone(),
            created_at: s.created_at,
            derivation: s.derivation.clone(),
            root_round: s.root_round,
            rounds: s.rounds.values().cloned().collect(),
        }
    }
}

type SessionCell = Arc<RwLock<Session>>;

pub struct Engine {
    defaults: RoundDefaults,
    sessions: RwLock<HashMap<SessionId, SessionCell>>,
    clip_owner: RwLock<HashMap<ClipId, SessionId>>,
    store: Arc<EventStore>,
    blobs: Arc<BlobStore>,
    runner: BatchRunner,
    lm: Arc<dyn LanguageModelClient>,
    translator: Arc<dyn TranslationClient>,
}

impl Engine {
    /// Assembles an engine and restores every session found in `store`.
    pub fn new(
        defaults: RoundDefaults,
        runner: BatchRunner,
        lm: Arc<dyn LanguageModelClient>,
        translator: Arc<dyn TranslationClient>,
        store: Arc<EventStore>,
        blobs: Arc<BlobStore>,
    ) -> Result<Self, EngineError> {
        let engine = Self {
            defaults,
            sessions: RwLock::default(),
            clip_owner: RwLock::default(),
            store,
            blobs,
            runner,
            lm,
            translator,
        };
        engine.restore()?;
        Ok(engine)
    }

    /// Builds the backend, clients and stores named by `config`.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, EngineError> {
        let backend: Arc<dyn Backend> = match config.backend_mode {
            BackendMode::Stub => Arc::new(StubBackend),
            BackendMode::Remote => Arc::new(RemoteBackend::new(
                config.backend_url.clone().unwrap_or_default(),
                config.job_timeout,
            )),
        };
        let lm: Arc<dyn LanguageModelClient> = match &config.lm_endpoint {
            Some(url) => Arc::new(HttpLanguageModel::new(url.clone(), config.client_timeout)),
            None => Arc::new(OfflineLanguageModel),
        };
        let translator: Arc<dyn TranslationClient> = match &config.translate_endpoint {
            Some(url) => Arc::new(HttpTranslator::new(url.clone(), config.client_timeout)),
            None => Arc::new(PassThroughTranslator),
        };
        let store = match &config.log_path {
            Some(path) => EventStore::open(path)?,
            None => EventStore::in_memory(),
        };
        let blobs = match &config.blob_dir {
            Some(dir) => BlobStore::open(dir)?,
            None => BlobStore::in_memory(),
        };
        Self::new(
            config.into(),
            BatchRunner::new(backend, config.max_parallel_jobs, config.job_timeout),
            lm,
            translator,
            Arc::new(store),
            Arc::new(blobs),
        )
    }

    fn restore(&self) -> Result<(), EngineError> {
        for id in self.store.session_ids() {
            let session = self.store.replay(id)?;
            self.index_clips(&session);
            self.sessions.write().insert(id, Arc::new(RwLock::new(session)));
        }
        Ok(())
    }

    fn index_clips(&self, session: &Session) {
        let mut owners = self.clip_owner.write();
        for clip in session.clips.keys() {
            owners.insert(*clip, session.id);
        }
    }

    pub fn store(&self) -> &Arc<EventStore> {
        &self.store
    }

    pub fn blobs(&self) -> &Arc<BlobStore> {
        &self.blobs
    }

    pub fn defaults(&self) -> RoundDefaults {
        self.defaults
    }

    fn cell(&self, id: SessionId) -> Result<SessionCell, EngineError> {
        self.sessions.read().get(&id).cloned().ok_or(EngineError::UnknownSession(id))
    }

    /// A consistent copy of the session.
    pub fn session(&self, id: SessionId) -> Result<Session, EngineError> {
        Ok(self.cell(id)?.read().clone())
    }

    pub fn tree(&self, id: SessionId) -> Result<TreeDocument, EngineError> {
        Ok(TreeDocument::from(&*self.cell(id)?.read()))
    }

    pub fn session_ids(&self) -> Vec<SessionId> {
        self.store.session_ids()
    }

    pub fn clip_session(&self, clip: ClipId) -> Result<SessionId, EngineError> {
        self.clip_owner.read().get(&clip).copied().ok_or(EngineError::UnknownClip(clip))
    }

    /// Rebuilds a session from the log alone.
    pub fn replay(&self, id: SessionId) -> Result<Session, EngineError> {
        Ok(self.store.replay(id)?)
    }

    /// Validates, persists and applies one event under the session lock.
    fn commit<T>(
        &self,
        id: SessionId,
        plan: impl FnOnce(&Session) -> Result<(SessionEvent, T), EngineError>,
    ) -> Result<T, EngineError> {
        let cell = self.cell(id)?;
        let mut session = cell.write();
        let (event, out) = plan(&session)?;
        // Check against a scratch copy first so the log never receives an
        // event the session would reject.
        let mut scratch = session.clone();
        scratch.apply(&event)?;
        self.store.append(id, event)?;
        *session = scratch;
        Ok(out)
    }

    /// Creates a session, derives its four prompts and opens the root round.
    /// The root round is left pending; run it with [`Engine::execute_round`].
    pub async fn create_session(&self, theme: &str, locale: &str, seed: Option<u64>) -> Result<SessionStart, EngineError> {
        let (mut session, created) = Session::create(theme, locale)?;
        let derivation = derive_initial_prompts(theme, locale, self.lm.as_ref(), self.translator.as_ref()).await?;

        let derived = SessionEvent::PromptsDerived(DerivationRecord {
            prompts: derivation.prompts.clone(),
            translated_theme: derivation.translated_theme.clone(),
            degraded: derivation.degraded.clone(),
        });
        session.apply(&derived)?;
        let spec = RoundSpec::new(derivation.prompts.clone())
            .with_clips_per_prompt(self.defaults.clips_per_prompt)
            .with_seed(seed.unwrap_or_else(rand::random));
        let (root_round, opened) = session.open_round(&spec)?;

        let id = session.id;
        for event in [created, derived, opened] {
            self.store.append(id, event)?;
        }
        self.sessions.write().insert(id, Arc::new(RwLock::new(session)));
        Ok(SessionStart {
            session_id: id,
            root_round,
            derivation,
        })
    }

    /// Opens a pending refinement round.
    pub fn open_round(&self, session_id: SessionId, request: &RoundRequest) -> Result<RoundId, EngineError> {
        let strength = request.strength.unwrap_or(if request.prior.is_some() {
            self.defaults.prior_strength
        } else {
            1.0
        });
        let mut spec = RoundSpec::new(request.prompts.clone())
            .with_clips_per_prompt(self.defaults.clips_per_prompt)
            .with_seed(request.seed.unwrap_or_else(rand::random));
        spec.transfer_strength = strength;
        spec.prior = request.prior;
        spec.parent = request.parent;

        self.commit(session_id, |session| {
            let opened = session.plan_round(&spec)?;
            let id = opened.round_id;
            Ok((SessionEvent::RoundOpened(opened), id))
        })
    }

    /// Decoded audio of a stored clip.
    pub fn clip_waveform(&self, clip: ClipId) -> Result<Waveform, EngineError> {
        Ok(decode_wav(&self.clip_wav(clip)?)?)
    }

    /// WAV bytes of a stored clip.
    pub fn clip_wav(&self, clip: ClipId) -> Result<Arc<Vec<u8>>, EngineError> {
        let session = self.clip_session(clip)?;
        let blob = self
            .cell(session)?
            .read()
            .clip(clip)?
            .blob
            .clone()
            .ok_or(EngineError::MissingAudio(clip))?;
        self.blobs.get(&blob)?.ok_or(EngineError::MissingAudio(clip))
    }

    fn generation_request(&self, round: &Round) -> Result<GenerationRequest, EngineError> {
        let prior = round
            .prior
            .map(|id| {
                self.clip_waveform(id).map(|w| PriorClip {
                    id,
                    waveform: Arc::new(w),
                })
            })
            .transpose()?;
        Ok(GenerationRequest {
            round_id: round.id,
            prompts: round
                .prompts
                .iter()
                .map(|p| PromptSlot {
                    id: p.id,
                    text: p.text.clone(),
                })
                .collect(),
            prior,
            transfer_strength: round.transfer_strength,
            clips_per_prompt: round.clips_per_prompt,
            duration_s: self.defaults.duration_s,
            sample_rate: self.defaults.sample_rate,
            round_seed: round.round_seed,
        })
    }

    /// Generates, stores and attaches every clip of a pending round. On
    /// failure the round is marked failed and the error returned.
    pub async fn execute_round(&self, session_id: SessionId, round_id: RoundId) -> Result<Vec<ClipId>, EngineError> {
        let round = self.cell(session_id)?.read().round(round_id)?.clone();
        if round.status != crate::exploration::RoundStatus::Pending {
            return Err(ExplorationError::RoundNotPending(round_id).into());
        }

        let outcome = async {
            let request = self.generation_request(&round)?;
            let clips = self.runner.run(&request).await?;
            clips
                .into_iter()
                .map(|clip| {
                    let blob = self.blobs.put(encode_wav(&clip.waveform)?)?;
                    Ok(ClipRecord {
                        id: clip.id,
                        seed: clip.seed,
                        blob: Some(blob),
                    })
                })
                .collect::<Result<Vec<_>, EngineError>>()
        }
        .await;

        match outcome {
            Ok(records) => {
                let ids: Vec<ClipId> = records.iter().map(|r| r.id).collect();
                self.commit(session_id, |_| {
                    Ok((
                        SessionEvent::RoundCompleted {
                            round_id,
                            clips: records,
                        },
                        (),
                    ))
                })?;
                let mut owners = self.clip_owner.write();
                for id in &ids {
                    owners.insert(*id, session_id);
                }
                Ok(ids)
            }
            Err(err) => {
                let failed_jobs = match &err {
                    EngineError::Generation(g) => g.failed_jobs(),
                    _ => Vec::new(),
                };
                tracing::warn!(%session_id, %round_id, %err, "round failed");
                self.commit(session_id, |_| {
                    Ok((
                        SessionEvent::RoundFailed {
                            round_id,
                            failed_jobs,
                            message: err.to_string(),
                        },
                        (),
                    ))
                })?;
                Err(err)
            }
        }
    }

    /// Opens and executes a round in one call.
    pub async fn run_round(&self, session_id: SessionId, request: &RoundRequest) -> Result<RoundId, EngineError> {
        let round = self.open_round(session_id, request)?;
        self.execute_round(session_id, round).await?;
        Ok(round)
    }

    fn clip_event(&self, clip: ClipId, make: fn(ClipId) -> SessionEvent) -> Result<SessionId, EngineError> {
        let session = self.clip_session(clip)?;
        self.commit(session, |_| Ok((make(clip), ())))?;
        Ok(session)
    }

    pub fn record_download(&self, clip: ClipId) -> Result<SessionId, EngineError> {
        self.clip_event(clip, |clip_id| SessionEvent::ClipDownloaded { clip_id })
    }

    pub fn record_share(&self, clip: ClipId) -> Result<SessionId, EngineError> {
        self.clip_event(clip, |clip_id| SessionEvent::ClipShared { clip_id })
    }

    /// Records that the user picked `clip` as the audio prior for the next
    /// round of `session_id`.
    pub fn select_prior(&self, session_id: SessionId, clip: ClipId) -> Result<(), EngineError> {
        self.commit(session_id, |s| {
            if s.clips.contains_key(&clip) {
                Ok((SessionEvent::PriorSelected { clip_id: clip }, ()))
            } else {
                Err(ExplorationError::ForeignPrior(clip).into())
            }
        })
    }

    pub fn edit_prompt(&self, session_id: SessionId, prompt: PromptId, new_text: &str) -> Result<TextPrompt, EngineError> {
        self.commit(session_id, |s| {
            let edited = edit_prompt(s.prompt(prompt)?, new_text)?;
            Ok((SessionEvent::PromptEdited { prompt: edited.clone() }, edited))
        })
    }

    pub fn apply_modifier(
        &self,
        session_id: SessionId,
        prompt: PromptId,
        instrument: &str,
        mode: ModifierMode,
    ) -> Result<TextPrompt, EngineError> {
        self.commit(session_id, |s| {
            let modified = apply_instrument_modifier(s.prompt(prompt)?, instrument, mode)?;
            Ok((SessionEvent::ModifierApplied { prompt: modified.clone() }, modified))
        })
    }
}
