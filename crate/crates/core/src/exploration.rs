//! Sessions as exploration trees.
//!
//! A session holds rounds of generation. Every round except the root has a
//! parent and a [`ConstraintEdge`] describing what changed between the two:
//! edited prompt slots, a selected audio prior, or both.
//!
//! All state changes go through [`Session::apply`] with a [`SessionEvent`].
//! Operations such as [`Session::open_round`] validate their input, build
//! the event, and apply it; replaying a stored event sequence runs the same
//! code and therefore rebuilds the same tree.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive::{Degradation, PROMPT_VARIANTS};
use crate::ids::{ClipId, PromptId, RoundId, SessionId};
use crate::prompt_edit::{edit_prompt, TextPrompt};

/// Default number of clips generated per prompt.
pub const DEFAULT_CLIPS_PER_PROMPT: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplorationError {
    #[error("theme phrase is empty")]
    EmptyTheme,
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("unknown round {0}")]
    UnknownRound(RoundId),
    #[error("unknown clip {0}")]
    UnknownClip(ClipId),
    #[error("unknown prompt {0}")]
    UnknownPrompt(PromptId),
    #[error("clip {0} is not in this round's lineage")]
    ForeignPrior(ClipId),
    #[error("transfer strength {0} is outside [0, 1]")]
    BadStrength(f64),
    #[error("round has {got} prompts; {expected}")]
    BadPromptCount { got: usize, expected: &'static str },
    #[error("prompt in slot {0} is empty")]
    EmptyPrompt(usize),
    #[error("clips per prompt must be positive")]
    BadClipsPerPrompt,
    #[error("root round must not select a prior")]
    RootWithPrior,
    #[error("round neither changes a prompt nor selects a prior")]
    NoChange,
    #[error("expected {expected} clips, got {got}")]
    WrongCardinality { expected: usize, got: usize },
    #[error("round {0} is not pending")]
    RoundNotPending(RoundId),
    #[error("inconsistent event: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    PromptEdit,
    PriorSelection,
    Both,
}

/// The delta relating a round to its parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintEdge {
    pub kind: EdgeKind,
    pub changed_prompt_slots: BTreeSet<usize>,
    pub selected_clip: Option<ClipId>,
}

impl ConstraintEdge {
    /// Builds the edge for a set of changed slots and an optional prior;
    /// `None` when nothing changed.
    pub fn from_changes(changed_prompt_slots: BTreeSet<usize>, selected_clip: Option<ClipId>) -> Option<Self> {
        let kind = match (changed_prompt_slots.is_empty(), selected_clip.is_some()) {
            (true, false) => return None,
            (false, false) => EdgeKind::PromptEdit,
            (true, true) => EdgeKind::PriorSelection,
            (false, true) => EdgeKind::Both,
        };
        Some(Self {
            kind,
            changed_prompt_slots,
            selected_clip,
        })
    }

    fn is_well_formed(&self) -> bool {
        match self.kind {
            EdgeKind::PromptEdit => !self.changed_prompt_slots.is_empty() && self.selected_clip.is_none(),
            EdgeKind::PriorSelection => self.changed_prompt_slots.is_empty() && self.selected_clip.is_some(),
            EdgeKind::Both => !self.changed_prompt_slots.is_empty() && self.selected_clip.is_some(),
        }
    }
}

/// Slots of `new` whose text differs from `reference` at the same index,
/// counting slots beyond the end of `reference` as changed.
pub fn prompt_diff<A: AsRef<str>, B: AsRef<str>>(reference: &[A], new: &[B]) -> BTreeSet<usize> {
    new.iter()
        .enumerate()
        .filter(|(i, text)| reference.get(*i).map_or(true, |r| r.as_ref() != text.as_ref()))
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundStatus {
    Pending,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundFailure {
    pub failed_jobs: Vec<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub id: RoundId,
    pub parent: Option<RoundId>,
    pub edge: Option<ConstraintEdge>,
    pub prompts: Vec<TextPrompt>,
    pub prior: Option<ClipId>,
    pub transfer_strength: f64,
    pub clips_per_prompt: u32,
    pub round_seed: u64,
    pub status: RoundStatus,
    pub clips: Vec<ClipId>,
    pub failure: Option<RoundFailure>,
}

impl Round {
    pub fn expected_clips(&self) -> usize {
        self.prompts.len() * self.clips_per_prompt as usize
    }

    /// Prompt slot a clip position belongs to (clips are prompt-major).
    pub fn slot_of(&self, clip_position: usize) -> usize {
        clip_position / self.clips_per_prompt as usize
    }

    pub fn prompt_texts(&self) -> Vec<&str> {
        self.prompts.iter().map(|p| p.text.as_str()).collect()
    }
}

/// Where a clip lives in the tree and how to find its audio.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipInfo {
    pub round: RoundId,
    pub prompt_slot: usize,
    pub seed: u64,
    /// Content address of the stored WAV bytes, when persisted.
    pub blob: Option<String>,
}

/// A generated clip as reported to [`Session::attach_results`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub id: ClipId,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blob: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivationRecord {
    pub prompts: Vec<String>,
    pub translated_theme: Option<String>,
    pub degraded: Option<Degradation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOpened {
    pub round_id: RoundId,
    pub parent: Option<RoundId>,
    pub edge: Option<ConstraintEdge>,
    pub prompts: Vec<TextPrompt>,
    pub prior: Option<ClipId>,
    pub transfer_strength: f64,
    pub clips_per_prompt: u32,
    pub round_seed: u64,
}

/// Every state change a session can undergo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum SessionEvent {
    SessionCreated {
        theme_phrase: String,
        locale: String,
        created_at: DateTime<Utc>,
    },
    PromptsDerived(DerivationRecord),
    RoundOpened(RoundOpened),
    RoundCompleted {
        round_id: RoundId,
        clips: Vec<ClipRecord>,
    },
    RoundFailed {
        round_id: RoundId,
        failed_jobs: Vec<usize>,
        message: String,
    },
    PromptEdited {
        prompt: TextPrompt,
    },
    ModifierApplied {
        prompt: TextPrompt,
    },
    PriorSelected {
        clip_id: ClipId,
    },
    ClipDownloaded {
        clip_id: ClipId,
    },
    ClipShared {
        clip_id: ClipId,
    },
}

impl SessionEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            Self::SessionCreated { .. } => EventKind::SessionCreated,
            Self::PromptsDerived(_) => EventKind::PromptsDerived,
            Self::RoundOpened(_) => EventKind::RoundOpened,
            Self::RoundCompleted { .. } => EventKind::RoundCompleted,
            Self::RoundFailed { .. } => EventKind::RoundFailed,
            Self::PromptEdited { .. } => EventKind::PromptEdited,
            Self::ModifierApplied { .. } => EventKind::ModifierApplied,
            Self::PriorSelected { .. } => EventKind::PriorSelected,
            Self::ClipDownloaded { .. } => EventKind::ClipDownloaded,
            Self::ClipShared { .. } => EventKind::ClipShared,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    SessionCreated,
    PromptsDerived,
    RoundOpened,
    RoundCompleted,
    RoundFailed,
    PromptEdited,
    ModifierApplied,
    PriorSelected,
    ClipDownloaded,
    ClipShared,
}

/// Input to [`Session::open_round`].
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSpec {
    pub prompts: Vec<String>,
    pub prior: Option<ClipId>,
    pub transfer_strength: f64,
    /// Round to branch from. Defaults to the prior's round when a prior is
    /// given, otherwise to the most recently opened round.
    pub parent: Option<RoundId>,
    pub clips_per_prompt: u32,
    pub round_seed: u64,
}

impl RoundSpec {
    pub fn new(prompts: Vec<String>) -> Self {
        Self {
            prompts,
            prior: None,
            transfer_strength: 1.0,
            parent: None,
            clips_per_prompt: DEFAULT_CLIPS_PER_PROMPT,
            round_seed: 0,
        }
    }

    pub fn with_prior(mut self, clip: ClipId, transfer_strength: f64) -> Self {
        self.prior = Some(clip);
        self.transfer_strength = transfer_strength;
        self
    }

    pub fn with_parent(mut self, parent: RoundId) -> Self {
        self.parent = Some(parent);
        self
    }

    pub fn with_seed(mut self, round_seed: u64) -> Self {
        self.round_seed = round_seed;
        self
    }

    pub fn with_clips_per_prompt(mut self, clips_per_prompt: u32) -> Self {
        self.clips_per_prompt = clips_per_prompt;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: SessionId,
    pub theme_phrase: String,
    pub locale: String,
    pub created_at: DateTime<Utc>,
    pub derivation: Option<DerivationRecord>,
    pub root_round: Option<RoundId>,
    /// Rounds in the order they were opened.
    pub rounds: IndexMap<RoundId, Round>,
    pub clips: IndexMap<ClipId, ClipInfo>,
    /// Prompts created by edits and modifier applications, in creation order.
    pub prompts: IndexMap<PromptId, TextPrompt>,
    pub head: Option<RoundId>,
}

impl Session {
    /// Starts a session for `theme_phrase`.
    pub fn create(theme_phrase: &str, locale: &str) -> Result<(Self, SessionEvent), ExplorationError> {
        Self::create_with_id(SessionId::new(), theme_phrase, locale, Utc::now())
    }

    pub fn create_with_id(
        id: SessionId,
        theme_phrase: &str,
        locale: &str,
        created_at: DateTime<Utc>,
    ) -> Result<(Self, SessionEvent), ExplorationError> {
        let theme_phrase = theme_phrase.trim();
        if theme_phrase.is_empty() {
            return Err(ExplorationError::EmptyTheme);
        }
        let event = SessionEvent::SessionCreated {
            theme_phrase: theme_phrase.to_string(),
            locale: locale.to_string(),
            created_at,
        };
        let session = Self::from_created(id, &event)?;
        Ok((session, event))
    }

    /// Builds a session from its `session-created` event.
    pub fn from_created(id: SessionId, event: &SessionEvent) -> Result<Self, ExplorationError> {
        let SessionEvent::SessionCreated {
            theme_phrase,
            locale,
            created_at,
        } = event
        else {
            return Err(ExplorationError::Inconsistent(format!(
                "session must start with session-created, found {:?}",
                event.kind()
            )));
        };
        if theme_phrase.trim().is_empty() {
            return Err(ExplorationError::EmptyTheme);
        }
        Ok(Self {
            id,
            theme_phrase: theme_phrase.clone(),
            locale: locale.clone(),
            created_at: *created_at,
            derivation: None,
            root_round: None,
            rounds: IndexMap::new(),
            clips: IndexMap::new(),
            prompts: IndexMap::new(),
            head: None,
        })
    }

    pub fn round(&self, id: RoundId) -> Result<&Round, ExplorationError> {
        self.rounds.get(&id).ok_or(ExplorationError::UnknownRound(id))
    }

    pub fn clip(&self, id: ClipId) -> Result<&ClipInfo, ExplorationError> {
        self.clips.get(&id).ok_or(ExplorationError::UnknownClip(id))
    }

    /// The prompt that produced `clip`.
    pub fn clip_prompt(&self, clip: ClipId) -> Result<&TextPrompt, ExplorationError> {
        let info = self.clip(clip)?;
        Ok(&self.round(info.round)?.prompts[info.prompt_slot])
    }

    pub fn prompt(&self, id: PromptId) -> Result<&TextPrompt, ExplorationError> {
        if let Some(p) = self.prompts.get(&id) {
            return Ok(p);
        }
        self.rounds
            .values()
            .flat_map(|r| r.prompts.iter())
            .find(|p| p.id == id)
            .ok_or(ExplorationError::UnknownPrompt(id))
    }

    /// Rounds from the root down to `round`, inclusive.
    pub fn path_to(&self, round: RoundId) -> Result<Vec<&Round>, ExplorationError> {
        let mut path = Vec::new();
        let mut cursor = Some(round);
        while let Some(id) = cursor {
            let r = self.round(id)?;
            path.push(r);
            if path.len() > self.rounds.len() {
                return Err(ExplorationError::Inconsistent("parent links form a cycle".into()));
            }
            cursor = r.parent;
        }
        path.reverse();
        Ok(path)
    }

    /// Number of edges between the root and `round`.
    pub fn depth(&self, round: RoundId) -> Result<usize, ExplorationError> {
        Ok(self.path_to(round)?.len() - 1)
    }

    pub fn is_ancestor_or_self(&self, ancestor: RoundId, round: RoundId) -> Result<bool, ExplorationError> {
        Ok(self.path_to(round)?.iter().any(|r| r.id == ancestor))
    }

    /// Constraint edges from the root to the round that produced `clip`.
    pub fn lineage(&self, clip: ClipId) -> Result<Vec<ConstraintEdge>, ExplorationError> {
        let info = self.clip(clip)?;
        Ok(self
            .path_to(info.round)?
            .into_iter()
            .filter_map(|r| r.edge.clone())
            .collect())
    }

    /// Prompt texts that a new round is diffed against.
    ///
    /// Normally the parent's prompts, slot by slot. When a prior is selected
    /// and the new round has a different number of prompts than the parent
    /// (typically one, narrowing onto the prior), the prompt that produced
    /// the prior is the reference.
    pub fn reference_prompts(
        &self,
        parent: &Round,
        new_len: usize,
        prior: Option<ClipId>,
    ) -> Result<Vec<TextPrompt>, ExplorationError> {
        match prior {
            Some(clip) if new_len != parent.prompts.len() => Ok(vec![self.clip_prompt(clip)?.clone()]),
            _ => Ok(parent.prompts.clone()),
        }
    }

    fn validate_prompt_texts(prompts: &[String], root: bool) -> Result<(), ExplorationError> {
        if root && prompts.len() != PROMPT_VARIANTS {
            return Err(ExplorationError::BadPromptCount {
                got: prompts.len(),
                expected: "the root round needs exactly 4",
            });
        }
        if prompts.is_empty() || prompts.len() > PROMPT_VARIANTS {
            return Err(ExplorationError::BadPromptCount {
                got: prompts.len(),
                expected: "rounds take 1 to 4",
            });
        }
        if let Some(slot) = prompts.iter().position(|p| p.trim().is_empty()) {
            return Err(ExplorationError::EmptyPrompt(slot));
        }
        Ok(())
    }

    fn resolve_parent(&self, spec: &RoundSpec) -> Result<RoundId, ExplorationError> {
        if let Some(parent) = spec.parent {
            self.round(parent)?;
            return Ok(parent);
        }
        if let Some(prior) = spec.prior {
            return self
                .clips
                .get(&prior)
                .map(|c| c.round)
                .ok_or(ExplorationError::ForeignPrior(prior));
        }
        self.head
            .ok_or_else(|| ExplorationError::Inconsistent("session has no rounds".into()))
    }

    fn pick_prompt(&self, text: &str, reference: &[TextPrompt], slot: usize) -> TextPrompt {
        if let Some(same) = reference.get(slot).filter(|r| r.text == text) {
            return same.clone();
        }
        if let Some(registered) = self.prompts.values().rev().find(|p| p.text == text) {
            return registered.clone();
        }
        let basis = reference.get(slot).or(reference.last());
        match basis {
            Some(basis) => edit_prompt(basis, text).expect("prompt text validated as non-empty"),
            None => TextPrompt::user(text),
        }
    }

    /// Validates `spec` and returns the `round-opened` event it would produce.
    pub fn plan_round(&self, spec: &RoundSpec) -> Result<RoundOpened, ExplorationError> {
        if spec.clips_per_prompt == 0 {
            return Err(ExplorationError::BadClipsPerPrompt);
        }
        if !(0.0..=1.0).contains(&spec.transfer_strength) {
            return Err(ExplorationError::BadStrength(spec.transfer_strength));
        }

        if self.root_round.is_none() {
            Self::validate_prompt_texts(&spec.prompts, true)?;
            if spec.prior.is_some() {
                return Err(ExplorationError::RootWithPrior);
            }
            if let Some(parent) = spec.parent {
                return Err(ExplorationError::UnknownRound(parent));
            }
            return Ok(RoundOpened {
                round_id: RoundId::new(),
                parent: None,
                edge: None,
                prompts: spec.prompts.iter().map(TextPrompt::derived).collect(),
                prior: None,
                transfer_strength: spec.transfer_strength,
                clips_per_prompt: spec.clips_per_prompt,
                round_seed: spec.round_seed,
            });
        }

        Self::validate_prompt_texts(&spec.prompts, false)?;
        let parent_id = self.resolve_parent(spec)?;
        let parent = self.round(parent_id)?;
        if let Some(prior) = spec.prior {
            let info = self.clips.get(&prior).ok_or(ExplorationError::ForeignPrior(prior))?;
            if !self.is_ancestor_or_self(info.round, parent_id)? {
                return Err(ExplorationError::ForeignPrior(prior));
            }
        }

        let reference = self.reference_prompts(parent, spec.prompts.len(), spec.prior)?;
        let changed = prompt_diff(
            &reference.iter().map(|p| p.text.as_str()).collect::<Vec<_>>(),
            &spec.prompts,
        );
        let edge = ConstraintEdge::from_changes(changed, spec.prior).ok_or(ExplorationError::NoChange)?;
        let prompts = spec
            .prompts
            .iter()
            .enumerate()
            .map(|(slot, text)| self.pick_prompt(text, &reference, slot))
            .collect();

        Ok(RoundOpened {
            round_id: RoundId::new(),
            parent: Some(parent_id),
            edge: Some(edge),
            prompts,
            prior: spec.prior,
            transfer_strength: spec.transfer_strength,
            clips_per_prompt: spec.clips_per_prompt,
            round_seed: spec.round_seed,
        })
    }

    /// Opens a pending round. Returns the new round id and the applied event.
    pub fn open_round(&mut self, spec: &RoundSpec) -> Result<(RoundId, SessionEvent), ExplorationError> {
        let opened = self.plan_round(spec)?;
        let id = opened.round_id;
        let event = SessionEvent::RoundOpened(opened);
        self.apply(&event)?;
        Ok((id, event))
    }

    /// Marks a pending round complete with its clips, in prompt-major order.
    pub fn attach_results(&mut self, round: RoundId, clips: Vec<ClipRecord>) -> Result<SessionEvent, ExplorationError> {
        let event = SessionEvent::RoundCompleted { round_id: round, clips };
        self.apply(&event)?;
        Ok(event)
    }

    pub fn fail_round(
        &mut self,
        round: RoundId,
        failed_jobs: Vec<usize>,
        message: impl Into<String>,
    ) -> Result<SessionEvent, ExplorationError> {
        let event = SessionEvent::RoundFailed {
            round_id: round,
            failed_jobs,
            message: message.into(),
        };
        self.apply(&event)?;
        Ok(event)
    }

    /// Registers an edited or modifier-applied prompt whose parent is known
    /// to this session.
    pub fn register_prompt(&mut self, prompt: TextPrompt, via_modifier: bool) -> Result<SessionEvent, ExplorationError> {
        let event = if via_modifier {
            SessionEvent::ModifierApplied { prompt }
        } else {
            SessionEvent::PromptEdited { prompt }
        };
        self.apply(&event)?;
        Ok(event)
    }

    /// Applies one event, checking every structural invariant it touches.
    pub fn apply(&mut self, event: &SessionEvent) -> Result<(), ExplorationError> {
        match event {
            SessionEvent::SessionCreated { .. } => Err(ExplorationError::Inconsistent(
                "session-created applied to an existing session".into(),
            )),
            SessionEvent::PromptsDerived(record) => {
                if record.prompts.len() != PROMPT_VARIANTS {
                    return Err(ExplorationError::BadPromptCount {
                        got: record.prompts.len(),
                        expected: "derivation yields exactly 4",
                    });
                }
                self.derivation = Some(record.clone());
                Ok(())
            }
            SessionEvent::RoundOpened(opened) => self.apply_round_opened(opened),
            SessionEvent::RoundCompleted { round_id, clips } => self.apply_round_completed(*round_id, clips),
            SessionEvent::RoundFailed {
                round_id,
                failed_jobs,
                message,
            } => {
                let round = self
                    .rounds
                    .get_mut(round_id)
                    .ok_or(ExplorationError::UnknownRound(*round_id))?;
                if round.status != RoundStatus::Pending {
                    return Err(ExplorationError::RoundNotPending(*round_id));
                }
                round.status = RoundStatus::Failed;
                round.failure = Some(RoundFailure {
                    failed_jobs: failed_jobs.clone(),
                    message: message.clone(),
                });
                Ok(())
            }
            SessionEvent::PromptEdited { prompt } | SessionEvent::ModifierApplied { prompt } => {
                if let Some(parent) = prompt.parent_prompt {
                    self.prompt(parent)?;
                }
                self.prompts.insert(prompt.id, prompt.clone());
                Ok(())
            }
            SessionEvent::PriorSelected { clip_id }
            | SessionEvent::ClipDownloaded { clip_id }
            | SessionEvent::ClipShared { clip_id } => self.clip(*clip_id).map(|_| ()),
        }
    }

    fn apply_round_opened(&mut self, opened: &RoundOpened) -> Result<(), ExplorationError> {
        if self.rounds.contains_key(&opened.round_id) {
            return Err(ExplorationError::Inconsistent(format!(
                "round {} opened twice",
                opened.round_id
            )));
        }
        if opened.clips_per_prompt == 0 {
            return Err(ExplorationError::BadClipsPerPrompt);
        }
        if !(0.0..=1.0).contains(&opened.transfer_strength) {
            return Err(ExplorationError::BadStrength(opened.transfer_strength));
        }
        let texts: Vec<String> = opened.prompts.iter().map(|p| p.text.clone()).collect();

        match opened.parent {
            None => {
                if self.root_round.is_some() {
                    return Err(ExplorationError::Inconsistent("second root round".into()));
                }
                Self::validate_prompt_texts(&texts, true)?;
                if opened.edge.is_some() || opened.prior.is_some() {
                    return Err(ExplorationError::Inconsistent("root round carries an edge or prior".into()));
                }
                self.root_round = Some(opened.round_id);
            }
            Some(parent_id) => {
                Self::validate_prompt_texts(&texts, false)?;
                let parent = self.round(parent_id)?;
                if let Some(prior) = opened.prior {
                    let info = self.clips.get(&prior).ok_or(ExplorationError::ForeignPrior(prior))?;
                    if !self.is_ancestor_or_self(info.round, parent_id)? {
                        return Err(ExplorationError::ForeignPrior(prior));
                    }
                }
                let reference = self.reference_prompts(parent, texts.len(), opened.prior)?;
                let changed = prompt_diff(
                    &reference.iter().map(|p| p.text.as_str()).collect::<Vec<_>>(),
                    &texts,
                );
                let expected = ConstraintEdge::from_changes(changed, opened.prior);
                match (&opened.edge, &expected) {
                    (Some(edge), Some(exp)) if edge == exp && edge.is_well_formed() => {}
                    _ => {
                        return Err(ExplorationError::Inconsistent(format!(
                            "edge {:?} does not match the prompt diff {:?}",
                            opened.edge, expected
                        )))
                    }
                }
            }
        }

        self.rounds.insert(
            opened.round_id,
            Round {
                id: opened.round_id,
                parent: opened.parent,
                edge: opened.edge.clone(),
                prompts: opened.prompts.clone(),
                prior: opened.prior,
                transfer_strength: opened.transfer_strength,
                clips_per_prompt: opened.clips_per_prompt,
                round_seed: opened.round_seed,
                status: RoundStatus::Pending,
                clips: Vec::new(),
                failure: None,
            },
        );
        self.head = Some(opened.round_id);
        Ok(())
    }

    fn apply_round_completed(&mut self, round_id: RoundId, clips: &[ClipRecord]) -> Result<(), ExplorationError> {
        let round = self.rounds.get(&round_id).ok_or(ExplorationError::UnknownRound(round_id))?;
        if round.status != RoundStatus::Pending {
            return Err(ExplorationError::RoundNotPending(round_id));
        }
        if clips.len() != round.expected_clips() {
            return Err(ExplorationError::WrongCardinality {
                expected: round.expected_clips(),
                got: clips.len(),
            });
        }
        if let Some(dup) = clips.iter().find(|c| self.clips.contains_key(&c.id)) {
            return Err(ExplorationError::Inconsistent(format!("clip {} attached twice", dup.id)));
        }
        let per_prompt = round.clips_per_prompt as usize;
        for (position, clip) in clips.iter().enumerate() {
            self.clips.insert(
                clip.id,
                ClipInfo {
                    round: round_id,
                    prompt_slot: position / per_prompt,
                    seed: clip.seed,
                    blob: clip.blob.clone(),
                },
            );
        }
        let round = self.rounds.get_mut(&round_id).expect("checked above");
        round.clips = clips.iter().map(|c| c.id).collect();
        round.status = RoundStatus::Complete;
        Ok(())
    }
}
