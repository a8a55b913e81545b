//! Core library for iterative text-to-audio music exploration.
//!
//! A user starts from a loose theme phrase; [`derive`] turns it into four
//! musical prompts, [`generation`] renders clips for each prompt, and the
//! user refines by editing prompts ([`prompt_edit`]) or choosing a clip as an
//! audio prior. [`exploration`] records the resulting tree of rounds,
//! [`eventlog`] persists every step so sessions can be replayed, and
//! [`analytics`] summarizes logged sessions.
//!
//! [`engine::Engine`] ties these together for the HTTP service and tests.

pub mod analytics;
pub mod audio;
pub mod blobs;
pub mod config;
pub mod derive;
pub mod engine;
pub mod eventlog;
pub mod exploration;
pub mod generation;
mod hash;
pub mod ids;
pub mod prompt_edit;

pub use audio::{decode_wav, encode_wav, peak_normalize, rms, AudioError, Waveform};
pub use derive::{build_derivation_query, derive_initial_prompts, parse_phrase_lists, DerivationResult};
pub use engine::{Engine, EngineError};
pub use eventlog::{EventLogError, EventRecord, EventStore};
pub use exploration::{ConstraintEdge, EdgeKind, ExplorationError, Round, RoundSpec, RoundStatus, Session, SessionEvent};
pub use generation::{AudioClip, Backend, GenerationError, GenerationRequest, StubBackend};
pub use ids::{ClipId, PromptId, RoundId, SessionId};
pub use prompt_edit::{apply_instrument_modifier, edit_prompt, strip_modifiers, ModifierMode, TextPrompt};
